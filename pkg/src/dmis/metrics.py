"""Evaluation quantities: per-segment errors and convergence measures.

Errors (ME, MAE, RMSE) compare the network surface with a reference
grid on a uniform evaluation lattice per time segment.  Convergence
measures NC_k / TC_k report the first iteration (and its wall-clock
time) after which the full-batch training loss stays below 10^-k for a
whole 1000-iteration window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff
from .errors import ContractViolation
from .refsolve import SolutionGrid, sample

EVAL_NT = 201
EVAL_NX = 256
NC_WINDOW = 1000
SEGMENTS = ("train", "val", "test")
NOT_REACHED = -1


@dataclass
class SegmentErrors:
    me: float
    mae: float
    rmse: float


@dataclass
class ErrorReport:
    benchmark: str
    segments: dict            # segment name -> SegmentErrors

    def row(self, segment) -> SegmentErrors:
        return self.segments[segment]


@dataclass
class ConvergenceReport:
    nc: dict                  # level k -> iteration, or NOT_REACHED
    tc: dict                  # level k -> wall-clock ms, or NOT_REACHED


def _eval_lattice(domain, segment, eval_nt, eval_nx):
    t_lo, t_hi = domain.segment(segment)
    t = np.linspace(t_lo, t_hi, eval_nt)
    x = np.linspace(domain.x_min, domain.x_max, eval_nx)
    T, X = np.meshgrid(t, x, indexing="ij")
    return T.ravel(), X.ravel()


def _predict_field(net, problem, t, x):
    """Network surface as the scalar compared against the reference."""
    jet = autodiff.jet_values(net, t, x, max_x_order=0)
    if problem.out_dim == 2:
        return np.sqrt(jet.u[0] ** 2 + jet.u[1] ** 2)
    return jet.u[0]


def point_errors(pred, ref) -> SegmentErrors:
    """ME / MAE / RMSE of pred - ref (flat arrays)."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ContractViolation("prediction/reference shape mismatch")
    e = np.abs(pred - ref)
    return SegmentErrors(
        me=float(e.max()),
        mae=float(e.mean()),
        rmse=float(np.sqrt(np.mean(e * e))),
    )


def error_report(net, problem, grid: SolutionGrid,
                 eval_nx=EVAL_NX, eval_nt=EVAL_NT) -> ErrorReport:
    dom = problem.domain
    if grid.t_max < dom.t_max - 1e-9:
        raise ContractViolation(
            f"reference grid covers [0, {grid.t_max}], need [0, {dom.t_max}]"
        )
    segments = {}
    for seg in SEGMENTS:
        t, x = _eval_lattice(dom, seg, eval_nt, eval_nx)
        pred = _predict_field(net, problem, t, x)
        ref = sample(grid, t, x)
        segments[seg] = point_errors(pred, ref)
    return ErrorReport(benchmark=problem.name, segments=segments)


def convergence_report(records, levels=(2, 3, 4, 5)) -> ConvergenceReport:
    """NC_k / TC_k from ordered TrainRecords (see module docstring)."""
    iters = np.asarray([r.iter for r in records], dtype=np.int64)
    if iters.size and np.any(np.diff(iters) <= 0):
        raise ContractViolation("records must be strictly ordered by iter")
    loss = np.asarray([r.loss for r in records], dtype=np.float64)
    ms = np.asarray([r.ms for r in records], dtype=np.float64)
    nc, tc = {}, {}
    for k in sorted(levels):
        thr = 10.0 ** (-k)
        nc[k], tc[k] = _first_stable(iters, loss, ms, thr)
    return ConvergenceReport(nc=nc, tc=tc)


def _first_stable(iters, loss, ms, thr):
    """Smallest iter i with loss < thr for every record in [i, i + window]."""
    n = iters.shape[0]
    below = loss < thr
    # suffix scan: ok[j] = records j.. stay below until iters exceed the window
    for j in range(n):
        if not below[j]:
            continue
        end = iters[j] + NC_WINDOW
        # records inside the window must all be below; window must fit the run
        if iters[-1] < end:
            break
        hi = np.searchsorted(iters, end, side="right")
        if np.all(below[j:hi]):
            return int(iters[j]), float(ms[j])
    return NOT_REACHED, NOT_REACHED


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def write_errors_csv(report: ErrorReport, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("benchmark,segment,me,mae,rmse\n")
        for seg in SEGMENTS:
            r = report.segments[seg]
            fh.write(f"{report.benchmark},{seg},{r.me!r},{r.mae!r},{r.rmse!r}\n")


def write_convergence_csv(report: ConvergenceReport, path):
    levels = sorted(report.nc)
    with open(path, "w", newline="\n") as fh:
        head = [f"NC_{k}" for k in levels] + [f"TC_{k}" for k in levels]
        fh.write(",".join(head) + "\n")
        cells = [_cell(report.nc[k]) for k in levels]
        cells += [_cell(report.tc[k]) for k in levels]
        fh.write(",".join(cells) + "\n")


def _cell(v):
    return "not_reached" if v == NOT_REACHED else repr(v)


def summary_block(report: ErrorReport) -> str:
    """Human-readable table mirroring the error-comparison columns."""
    lines = [f"benchmark: {report.benchmark}"]
    lines.append(f"{'segment':<8} {'ME':>12} {'MAE':>12} {'RMSE':>12}")
    for seg in SEGMENTS:
        r = report.segments[seg]
        lines.append(f"{seg:<8} {r.me:>12.6g} {r.mae:>12.6g} {r.rmse:>12.6g}")
    return "\n".join(lines) + "\n"
