"""Adam-driven training loop assembling the weighted composite loss.

The loss recorded for convergence measurement is a full-batch loss over
all collocation points, recomputed every `recompute_every` iterations and
held piecewise-constant in between; mini-batch losses under importance
sampling are too noisy for a "stays below" criterion.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff, mlp, problems, sampler as sampler_mod
from .errors import ConfigError, DivergenceError, NonFiniteError

MAX_CONSECUTIVE_ABORTS = 10


@dataclass
class TrainConfig:
    benchmark: str = "burgers"
    sampler: str = "dmis"              # "dmis" | "uniform"
    depth: int = 3
    width: int = 32
    learning_rate: float = 0.005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_i: float = 1.0
    lambda_b: float = 1.0
    batch_f: int = 512
    batch_i: int = 128
    batch_b: int = 128
    max_iters: int = 20000
    seed: int = 0
    n_f: int = 100000
    n_i: int = 2000
    n_b: int = 2000
    s_size: int = 1000
    gamma: float = 0.4
    beta: float = 1.5
    recompute_every: int = 100

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.sampler not in ("dmis", "uniform"):
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if min(self.batch_f, self.batch_i, self.batch_b) < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.batch_f > self.n_f or self.batch_i > self.n_i or self.batch_b > self.n_b:
            raise ConfigError("batch sizes cannot exceed dataset sizes")
        if min(self.lambda_i, self.lambda_b) < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")


# Table-style per-benchmark defaults: depth, width, lr, |S|, gamma, beta,
# |N_f|, |N_i|, |N_b|.
BENCHMARK_DEFAULTS = {
    "schrodinger": (4, 64, 0.001, 1000, 0.4, 2.0, 60000, 200, 200),
    "burgers": (3, 32, 0.005, 1000, 0.4, 1.5, 100000, 2000, 2000),
    "kdv": (4, 64, 0.001, 1000, 0.4, 2.0, 60000, 2000, 2000),
    "diffusion": (4, 32, 0.002, 1000, 0.4, 2.0, 100000, 2000, 2000),
    "allen-cahn": (5, 64, 0.001, 1000, 0.4, 1.5, 60000, 2000, 2000),
}


def default_config(benchmark: str, **overrides) -> TrainConfig:
    if benchmark not in BENCHMARK_DEFAULTS:
        raise ConfigError(f"unknown benchmark {benchmark!r}")
    d, w, lr, s, g, b, nf, ni, nb = BENCHMARK_DEFAULTS[benchmark]
    cfg = TrainConfig(
        benchmark=benchmark, depth=d, width=w, learning_rate=lr,
        s_size=s, gamma=g, beta=b, n_f=nf, n_i=ni, n_b=nb,
    )
    return replace(cfg, **overrides)


@dataclass
class TrainRecord:
    iter: int
    loss: float        # full-batch L (piecewise-constant between recomputes)
    loss_f: float
    loss_i: float
    loss_b: float
    ms: float
    rebuild: bool


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_step(opt: AdamState, theta, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new theta."""
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient in adam_step")
    opt.step += 1
    opt.m = beta1 * opt.m + (1.0 - beta1) * grads
    opt.v = beta2 * opt.v + (1.0 - beta2) * grads * grads
    mhat = opt.m / (1.0 - beta1**opt.step)
    vhat = opt.v / (1.0 - beta2**opt.step)
    return theta - lr * mhat / (np.sqrt(vhat) + eps)


def assemble_loss(net, problem, batch_f, f_points, i_x, b_t, b_x, lam1, lam2):
    """Composite weighted loss over one iteration's mini-batches.

    Returns (loss node, tape, (L_f, L_i, L_b) floats).  Raises
    NonFiniteError when any component is non-finite.
    """
    tape = autodiff.GradientTape(net)
    jet = tape.eval_jet(
        f_points.t[batch_f.ids], f_points.x[batch_f.ids], problem.x_order
    )
    lf = problems.residual_loss(problem, jet)
    loss_f = (lf * batch_f.alpha_prime).mean()
    loss_i = problems.ic_loss(problem, net, i_x, tape=tape).mean()
    loss_b = problems.bc_loss(problem, net, b_t, b_x, tape=tape).mean()
    components = (float(loss_f.value), float(loss_i.value), float(loss_b.value))
    if not all(np.isfinite(components)):
        raise NonFiniteError(f"non-finite loss components {components}")
    total = loss_f + lam1 * loss_i + lam2 * loss_b
    return total, tape, components


def full_batch_loss(net, problem, f_points, i_points, b_points, lam1, lam2):
    """Unweighted loss over all collocation points (the NC/TC signal)."""
    jet = autodiff.jet_values(net, f_points.t, f_points.x, problem.x_order)
    lf = float(np.mean(problems.residual_loss(problem, jet)))
    li = float(np.mean(problems.ic_loss(problem, net, i_points.x)))
    lb = float(np.mean(problems.bc_loss(problem, net, b_points.t, b_points.x)))
    return lf + lam1 * li + lam2 * lb, lf, li, lb


def corner_points(domain):
    """The 4 corners of the training rectangle, as (t, x) arrays."""
    t_hi = domain.t_max / 2
    return (
        np.array([0.0, 0.0, t_hi, t_hi]),
        np.array([domain.x_min, domain.x_max, domain.x_min, domain.x_max]),
    )


def build_datasets(config: TrainConfig, problem):
    """Collocation sets; for DMIS the 4 corners are appended to N_f."""
    nf, ni, nb = config.n_f, config.n_i, config.n_b
    f, i, b = problems.generate_collocation(problem, nf, ni, nb, config.seed)
    corner_ids = np.array([], dtype=np.int64)
    if config.sampler == "dmis":
        ct, cx = corner_points(problem.domain)
        f = problems.CollocationSet(
            "residual", np.concatenate([f.t, ct]), np.concatenate([f.x, cx])
        )
        corner_ids = np.arange(nf, nf + 4)
    return f, i, b, corner_ids


def train(config: TrainConfig, on_record=None):
    """Run the configured training; returns (params, records, rebuilds).

    `on_record` is called with each TrainRecord as it is produced.
    """
    config.validate()
    problem = problems.make_problem(config.benchmark)
    f_points, i_points, b_points, corner_ids = build_datasets(config, problem)
    net = mlp.init(config.depth, config.width, problem.out_dim, config.seed + 1)

    if config.sampler == "dmis":
        smp = sampler_mod.DmisSampler(
            f_points,
            problem.domain,
            sampler_mod.SamplerConfig(config.s_size, config.gamma, config.beta),
            corner_ids,
            seed=config.seed + 2,
        )
    else:
        smp = sampler_mod.UniformSampler(len(f_points), seed=config.seed + 2)
    batch_rng = np.random.default_rng(config.seed + 3)

    theta = net.flat()
    opt = AdamState(m=np.zeros_like(theta), v=np.zeros_like(theta))
    records = []
    rebuild_count = 0
    aborts = 0
    fb = (np.inf, np.inf, np.inf, np.inf)
    start = time.perf_counter()

    for it in range(1, config.max_iters + 1):
        rebuilt = False
        try:
            batch_f = smp.step(net, problem, config.batch_f)
            if config.sampler == "dmis":
                if len(smp.state.rebuild_log) > rebuild_count:
                    rebuild_count = len(smp.state.rebuild_log)
                    rebuilt = True
            i_x = i_points.x[batch_rng.integers(0, len(i_points), config.batch_i)]
            b_sel = batch_rng.integers(0, len(b_points), config.batch_b)
            loss, tape, _ = assemble_loss(
                net, problem, batch_f, f_points, i_x,
                b_points.t[b_sel], b_points.x[b_sel],
                config.lambda_i, config.lambda_b,
            )
            grads = tape.gradient(loss)
            theta = adam_step(
                opt, theta, grads, config.learning_rate,
                config.adam_beta1, config.adam_beta2, config.adam_eps,
            )
            net.set_flat(theta)
            aborts = 0
        except NonFiniteError:
            aborts += 1
            if aborts > MAX_CONSECUTIVE_ABORTS:
                raise DivergenceError(
                    f"more than {MAX_CONSECUTIVE_ABORTS} consecutive aborted "
                    f"iterations at iter {it}"
                )
        if (it - 1) % config.recompute_every == 0 or it == config.max_iters:
            fb = full_batch_loss(
                net, problem, f_points, i_points, b_points,
                config.lambda_i, config.lambda_b,
            )
        rec = TrainRecord(
            iter=it,
            loss=fb[0], loss_f=fb[1], loss_i=fb[2], loss_b=fb[3],
            ms=(time.perf_counter() - start) * 1e3,
            rebuild=rebuilt,
        )
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    rebuilds = smp.state.rebuild_log if config.sampler == "dmis" else []
    return net, records, rebuilds
