"""Loss-proportional mini-batch sampling with mesh-estimated weights.

The sampler keeps exact per-point losses only on a small subset S of the
residual set; everything else is barycentric-interpolated on a Delaunay
mesh over S.  The mesh is rebuilt when the cosine similarity between the
current sampling-probability vector and its snapshot at the last rebuild
drops below the threshold gamma.  A uniform baseline sampler is also
provided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff, mesh, problems
from .errors import ConfigError, ContractViolation, DegenerateGeometryError


@dataclass
class SamplerConfig:
    s_size: int = 1000
    gamma: float = 0.4
    beta: float = 1.5

    def validate(self):
        if self.s_size < 3:
            raise ConfigError("mesh point set must have at least 3 points")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must be in (0, 1)")
        if self.beta < 1.0:
            raise ConfigError("beta must be >= 1")


@dataclass
class WeightedBatch:
    ids: np.ndarray           # sampled point ids, with replacement
    alpha_prime: np.ndarray   # per-sample weights


@dataclass
class SamplerState:
    q: np.ndarray             # sampling probabilities over N_f
    q_t0: np.ndarray          # q snapshot at the last rebuild
    S: np.ndarray             # mesh point ids (ordered)
    mesh: mesh.Triangulation
    plan: tuple               # (vert_idx, weights) for all of N_f
    t: int
    t0: int
    config: SamplerConfig
    corner_ids: np.ndarray
    rebuild_log: list


def compute_probs(losses) -> np.ndarray:
    """Loss-proportional probabilities; uniform when every loss is zero."""
    losses = np.asarray(losses, dtype=np.float64)
    if np.any(losses < 0):
        raise ContractViolation("negative loss passed to compute_probs")
    total = losses.sum()
    n = losses.shape[0]
    if total <= 0.0 or not np.isfinite(total):
        return np.full(n, 1.0 / n)
    return losses / total


# Minimum spacing between mesh rebuilds.  Late in training the sampling
# distribution concentrates on a few stubborn points and its cosine
# similarity jitters around the threshold; without a cooldown this turns
# into a rebuild on nearly every step.
REBUILD_COOLDOWN = 15

# Truncation bound for the sharpened weight (1/(n_f * q))**beta.  Points
# whose interpolated loss underflows toward zero would otherwise get
# astronomically large weights, and a single rare draw then dominates the
# optimizer's second-moment estimate for thousands of iterations.
WEIGHT_CAP = 165.0


def sample_weights(q, n_f, beta) -> np.ndarray:
    """alpha'_i = min((1/(n_f * q_i))**beta, cap).

    Entries with q_i == 0 are never drawn; their weight is fixed at 0.
    """
    if beta < 1.0:
        raise ConfigError("beta must be >= 1")
    q = np.asarray(q, dtype=np.float64)
    out = np.zeros_like(q)
    nz = q > 0.0
    out[nz] = np.minimum((1.0 / (n_f * q[nz])) ** beta, WEIGHT_CAP)
    return out


def cosine_similarity(v0, v) -> float:
    """v0.v / (|v0||v|); zero-length input signals "rebuild" via -inf."""
    v0 = np.asarray(v0, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v0.shape != v.shape:
        raise ContractViolation("weight vectors differ in length")
    n0 = np.linalg.norm(v0)
    n1 = np.linalg.norm(v)
    if n0 == 0.0 or n1 == 0.0:
        return -np.inf
    return float(v0 @ v / (n0 * n1))


def select_mesh_points(q_now, q_t0, size, corner_ids, rng) -> np.ndarray:
    """Draw mesh points with probability proportional to |q - q_t0|.

    Ties (all differences zero) fall back to a uniform draw; corner ids
    are appended afterwards (deduplicated, order preserved).
    """
    q_now = np.asarray(q_now, dtype=np.float64)
    q_t0 = np.asarray(q_t0, dtype=np.float64)
    if q_now.shape != q_t0.shape:
        raise ContractViolation("probability vectors differ in length")
    diff = np.abs(q_now - q_t0)
    total = diff.sum()
    n = diff.shape[0]
    if total <= 0.0 or np.count_nonzero(diff) < size:
        g = np.full(n, 1.0 / n)
    else:
        g = diff / total
    chosen = rng.choice(n, size=size, replace=False, p=g)
    return _append_corners(chosen, corner_ids)


def _append_corners(chosen, corner_ids):
    extra = [c for c in corner_ids if c not in set(chosen.tolist())]
    if extra:
        return np.concatenate([chosen, np.asarray(extra, dtype=chosen.dtype)])
    return chosen


class DmisSampler:
    """Importance sampler over a residual collocation set."""

    def __init__(self, points: problems.CollocationSet, domain, config: SamplerConfig,
                 corner_ids, seed):
        config.validate()
        n_f = len(points)
        if config.s_size > n_f:
            raise ConfigError(f"|S|={config.s_size} exceeds |N_f|={n_f}")
        self.points = points
        self.n_f = n_f
        self.rng = np.random.default_rng(seed)
        # normalized coordinates for meshing
        t_hi = domain.t_max / 2
        self.norm = np.stack(
            [points.t / t_hi, (points.x - domain.x_min) / (domain.x_max - domain.x_min)],
            axis=1,
        )
        corner_ids = np.asarray(corner_ids, dtype=np.int64)

        q = np.full(n_f, 1.0 / n_f)
        S = self.rng.choice(n_f, size=config.s_size, replace=False)
        S = _append_corners(S, corner_ids)
        tri = self._build(S)
        plan = tri.plan_queries(self.norm)
        self.state = SamplerState(
            q=q,
            q_t0=q.copy(),
            S=S,
            mesh=tri,
            plan=plan,
            t=0,
            t0=0,
            config=config,
            corner_ids=corner_ids,
            rebuild_log=[],
        )

    def _build(self, S):
        tri = mesh.build(
            [(int(i), self.norm[i, 0], self.norm[i, 1]) for i in S]
        )
        return tri

    def exact_losses(self, net, problem):
        """Residual loss evaluated exactly at every mesh vertex."""
        vids = self.state.mesh.ids
        jet = autodiff.jet_values(
            net, self.points.t[vids], self.points.x[vids], problem.x_order
        )
        return problems.residual_loss(problem, jet)

    def step(self, net, problem, batch_size) -> WeightedBatch:
        """One Algorithm-1 sampling step; mutates the sampler state."""
        st = self.state
        st.t += 1
        cfg = st.config

        exact = self.exact_losses(net, problem)
        st.mesh.set_values(exact)
        est = st.mesh.interpolate_planned(*st.plan)
        # exact values at mesh vertices, clamped interpolants elsewhere
        est = np.maximum(est, 0.0)
        est[st.mesh.ids] = exact
        q = compute_probs(est)
        st.q = q

        ids = self.rng.choice(self.n_f, size=batch_size, replace=True, p=q)
        alpha = sample_weights(q, self.n_f, cfg.beta)
        batch = WeightedBatch(ids=ids, alpha_prime=alpha[ids])

        # the rebuild signal compares full sampling-probability vectors;
        # the sharpened batch weights are far too spiky for a stable signal
        sim = cosine_similarity(st.q_t0, q)
        cooled = (
            not st.rebuild_log
            or st.t - st.rebuild_log[-1][0] >= REBUILD_COOLDOWN
        )
        if sim < cfg.gamma and cooled:
            self._rebuild(q)
            st.rebuild_log.append((st.t, sim, len(st.S)))
        return batch

    def _rebuild(self, q):
        st = self.state
        cfg = st.config
        try:
            S = select_mesh_points(q, st.q_t0, cfg.s_size, st.corner_ids, self.rng)
            tri = self._build(S)
        except DegenerateGeometryError:
            # retry once with a uniform subset; a second failure is fatal
            S = self.rng.choice(self.n_f, size=cfg.s_size, replace=False)
            S = _append_corners(S, st.corner_ids)
            tri = self._build(S)
        st.S = S
        st.mesh = tri
        st.plan = tri.plan_queries(self.norm)
        st.q_t0 = q.copy()
        st.t0 = st.t


class UniformSampler:
    """PINN-O baseline: uniform ids with replacement, unit weights."""

    def __init__(self, n_f, seed):
        self.n_f = n_f
        self.rng = np.random.default_rng(seed)

    def step(self, net=None, problem=None, batch_size=1) -> WeightedBatch:
        ids = self.rng.integers(0, self.n_f, size=batch_size)
        return WeightedBatch(ids=ids, alpha_prime=np.ones(batch_size))


def uniform_step(n_f, batch_size, rng) -> WeightedBatch:
    ids = rng.integers(0, n_f, size=batch_size)
    return WeightedBatch(ids=ids, alpha_prime=np.ones(batch_size))
