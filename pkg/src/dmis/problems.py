"""Benchmark PDE definitions, collocation generation and the time split.

Each problem carries a residual operator written against jet fields, so
the same definition serves both plain evaluation (ndarray fields) and
recorded evaluation (Node fields) for parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff
from .autodiff import value_of
from .errors import ConfigError, ContractViolation

BENCHMARKS = ("schrodinger", "burgers", "kdv", "diffusion", "allen-cahn")


@dataclass(frozen=True)
class DomainSpec:
    x_min: float
    x_max: float
    t_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.t_max > 0):
            raise ConfigError("domain bounds out of order")

    @property
    def t_train(self):
        """Training segment [0, T/2]."""
        return (0.0, self.t_max / 2)

    @property
    def t_val(self):
        return (self.t_max / 2, 0.75 * self.t_max)

    @property
    def t_test(self):
        return (0.75 * self.t_max, self.t_max)

    def segment(self, name):
        return {"train": self.t_train, "val": self.t_val, "test": self.t_test}[name]


@dataclass
class PdeProblem:
    name: str
    domain: DomainSpec
    out_dim: int
    x_order: int                       # highest x-derivative in the residual
    bc_kind: str                       # "dirichlet" | "periodic"
    ic: Callable                       # x -> (n, out_dim)
    residual: Callable                 # jet -> per-point squared residual
    g: Callable | None = None          # dirichlet boundary value (t, x) -> (n, out_dim)
    rhs_label: str = ""
    coeffs: dict = None                # PDE coefficients for the reference solver


@dataclass
class CollocationSet:
    role: str                          # "residual" | "initial" | "boundary"
    t: np.ndarray
    x: np.ndarray

    def __len__(self):
        return self.t.shape[0]

    @property
    def ids(self):
        return np.arange(len(self))

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("id,role,t,x\n")
            for i in range(len(self)):
                fh.write(f"{i},{self.role},{self.t[i]!r},{self.x[i]!r}\n")


# ---------------------------------------------------------------------------
# residual operators
# ---------------------------------------------------------------------------

BURGERS_NU = 0.04 / np.pi
KDV_DISPERSION = 0.0025
DIFFUSION_C = 1.2
AC_NU = 0.001 / np.pi


def _burgers_residual(jet):
    u, = jet.u
    r = jet.u_t[0] + u * jet.u_x[0] - BURGERS_NU * jet.u_xx[0]
    return r * r


def _kdv_residual(jet):
    u, = jet.u
    r = jet.u_t[0] + u * jet.u_x[0] + KDV_DISPERSION * jet.u_xxx[0]
    return r * r


def _schrodinger_residual(jet):
    u, v = jet.u                      # real / imaginary parts of h
    sq = u * u + v * v
    r_re = -1.0 * jet.u_t[1] + 0.5 * jet.u_xx[0] + sq * u
    r_im = jet.u_t[0] + 0.5 * jet.u_xx[1] + sq * v
    return r_re * r_re + r_im * r_im


def _make_diffusion_residual(c, forced):
    def residual(jet):
        r = jet.u_t[0] - c * jet.u_xx[0]
        if forced:
            r = r - 5.0 * np.exp(-value_of_t(jet)) * value_of_x(jet)
        return r * r

    return residual


def _allen_cahn_residual(jet):
    u, = jet.u
    r = jet.u_t[0] - AC_NU * jet.u_xx[0] - 2.0 * autodiff.sin(np.pi * u)
    return r * r


def value_of_t(jet):
    return jet.t


def value_of_x(jet):
    return jet.x


# ---------------------------------------------------------------------------
# problem factories
# ---------------------------------------------------------------------------


def _zero_g(t, x):
    t = np.atleast_1d(t)
    return np.zeros((t.shape[0], 1))


def diffusion_problem(c=DIFFUSION_C, forced=True, ic=None, name="diffusion"):
    """Forced heat equation on [0,1]; c=1/forced=False is the test hook."""
    if ic is None:
        ic_fn = lambda x: (2 * np.sin(np.pi * x) + 2 * x - 2 * x**3)[:, None]
    else:
        ic_fn = lambda x: ic(x)[:, None]
    return PdeProblem(
        name=name,
        domain=DomainSpec(0.0, 1.0, 1.0),
        out_dim=1,
        x_order=2,
        bc_kind="dirichlet",
        ic=ic_fn,
        residual=_make_diffusion_residual(c, forced),
        g=_zero_g,
        coeffs={"c": c, "forced": forced},
        rhs_label=f"u_t = {c}*u_xx" + (" + 5*exp(-t)*x" if forced else ""),
    )


def make_problem(name: str) -> PdeProblem:
    if name == "burgers":
        return PdeProblem(
            name=name,
            domain=DomainSpec(-1.0, 1.0, 1.0),
            out_dim=1,
            x_order=2,
            bc_kind="dirichlet",
            ic=lambda x: (-np.sin(np.pi * x))[:, None],
            residual=_burgers_residual,
            g=_zero_g,
            coeffs={"nu": BURGERS_NU},
            rhs_label="u_t + u*u_x = (0.04/pi)*u_xx",
        )
    if name == "kdv":
        return PdeProblem(
            name=name,
            domain=DomainSpec(-1.0, 1.0, 1.0),
            out_dim=1,
            x_order=3,
            bc_kind="periodic",
            ic=lambda x: np.cos(np.pi * x)[:, None],
            residual=_kdv_residual,
            coeffs={"dispersion": KDV_DISPERSION},
            rhs_label="u_t + u*u_x + 0.0025*u_xxx = 0",
        )
    if name == "schrodinger":
        return PdeProblem(
            name=name,
            domain=DomainSpec(-5.0, 5.0, np.pi / 2),
            out_dim=2,
            x_order=2,
            bc_kind="periodic",
            ic=lambda x: np.stack([2.0 / np.cosh(x), np.zeros_like(x)], axis=1),
            residual=_schrodinger_residual,
            coeffs={},
            rhs_label="i*h_t + 0.5*h_xx + |h|^2*h = 0",
        )
    if name == "diffusion":
        return diffusion_problem()
    if name == "allen-cahn":
        return PdeProblem(
            name=name,
            domain=DomainSpec(-1.0, 1.0, 1.0),
            out_dim=1,
            x_order=2,
            bc_kind="periodic",
            ic=lambda x: (x**2 * np.cos(np.pi * x))[:, None],
            residual=_allen_cahn_residual,
            coeffs={"nu": AC_NU},
            rhs_label="u_t = (0.001/pi)*u_xx + 2*sin(pi*u)",
        )
    raise ConfigError(f"unknown benchmark {name!r}; expected one of {BENCHMARKS}")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def residual_loss(problem: PdeProblem, jet):
    """Per-point squared PDE residual; Node-valued when jet is recorded."""
    if jet.max_x_order < problem.x_order:
        raise ContractViolation(
            f"{problem.name} needs x-derivatives up to order {problem.x_order}, "
            f"jet has {jet.max_x_order}"
        )
    return problem.residual(jet)


def ic_loss(problem: PdeProblem, net, x, tape=None):
    """Per-point squared initial-condition mismatch at t=0."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t0 = np.zeros_like(x)
    target = problem.ic(x)
    if tape is None:
        jet = autodiff.jet_values(net, t0, x, max_x_order=0)
    else:
        jet = tape.eval_jet(t0, x, max_x_order=0)
    loss = None
    for c in range(problem.out_dim):
        d = jet.u[c] - target[:, c]
        loss = d * d if loss is None else loss + d * d
    return loss


def bc_loss(problem: PdeProblem, net, t, x=None, tape=None):
    """Per-point squared boundary-condition mismatch.

    Dirichlet problems compare u(t, x) with g(t, x).  Periodic problems
    ignore x and match value and first x-derivative across the two ends.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    dom = problem.domain
    if problem.bc_kind == "dirichlet":
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        target = problem.g(t, x)
        if tape is None:
            jet = autodiff.jet_values(net, t, x, max_x_order=0)
        else:
            jet = tape.eval_jet(t, x, max_x_order=0)
        loss = None
        for c in range(problem.out_dim):
            d = jet.u[c] - target[:, c]
            loss = d * d if loss is None else loss + d * d
        return loss
    x_lo = np.full_like(t, dom.x_min)
    x_hi = np.full_like(t, dom.x_max)
    if tape is None:
        jlo = autodiff.jet_values(net, t, x_lo, max_x_order=1)
        jhi = autodiff.jet_values(net, t, x_hi, max_x_order=1)
    else:
        jlo = tape.eval_jet(t, x_lo, max_x_order=1)
        jhi = tape.eval_jet(t, x_hi, max_x_order=1)
    loss = None
    for c in range(problem.out_dim):
        dv = jlo.u[c] - jhi.u[c]
        dd = jlo.u_x[c] - jhi.u_x[c]
        term = dv * dv + dd * dd
        loss = term if loss is None else loss + term
    return loss


def ic_bc_loss(problem: PdeProblem, net, point):
    """Single-point convenience wrapper: point is (role, t, x)."""
    role, t, x = point
    if role == "initial":
        return ic_loss(problem, net, np.atleast_1d(x))
    if role == "boundary":
        return bc_loss(problem, net, np.atleast_1d(t), np.atleast_1d(x))
    raise ContractViolation(f"unknown point role {role!r}")


# ---------------------------------------------------------------------------
# collocation
# ---------------------------------------------------------------------------


def generate_collocation(problem: PdeProblem, n_f, n_i, n_b, seed):
    """Uniform N_f / N_i / N_b over the training portion of the domain."""
    if n_f <= 0 or n_i <= 0 or n_b <= 0:
        raise ConfigError("collocation sizes must be positive")
    dom = problem.domain
    t_hi = dom.t_max / 2
    rng = np.random.default_rng(seed)
    tf = rng.uniform(0.0, t_hi, size=n_f)
    xf = rng.uniform(dom.x_min, dom.x_max, size=n_f)
    xi = rng.uniform(dom.x_min, dom.x_max, size=n_i)
    tb = rng.uniform(0.0, t_hi, size=n_b)
    side = rng.integers(0, 2, size=n_b)
    xb = np.where(side == 0, dom.x_min, dom.x_max).astype(np.float64)
    return (
        CollocationSet("residual", tf, xf),
        CollocationSet("initial", np.zeros(n_i), xi),
        CollocationSet("boundary", tb, xb),
    )
