"""Command-line entry point: reference grids, training, evaluation, comparison.

Subcommands:
  reference  solve a benchmark PDE and cache the grid (idempotent)
  train      run one training job into a run directory
  evaluate   emit errors.csv / convergence.csv for a finished run
  compare    train (sampler x seed) grid, aggregate medians + loss curves

Config files are flat `key=value` lines mirroring the training-config
field names; unknown keys are rejected.  Exit codes: 0 success, 2 config
error, 3 numerical failure, 4 missing artifact.
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys
from dataclasses import fields, replace

import numpy as np

from . import metrics, mlp, problems, refsolve, training
from .errors import (
    ConfigError,
    DivergenceError,
    DmisError,
    InstabilityError,
    MissingArtifactError,
    NonFiniteError,
    RangeError,
)

OUT_ENV = "DMIS_OUT"
DEFAULT_OUT = "dmis-out"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISSING = 4

_CONFIG_KEYS = {f.name: f.type for f in fields(training.TrainConfig)}
_INT_KEYS = {
    f.name for f in fields(training.TrainConfig) if f.type in ("int", int)
}
_STR_KEYS = {"benchmark", "sampler"}


def out_root():
    return os.environ.get(OUT_ENV, DEFAULT_OUT)


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------


def parse_config_text(text) -> dict:
    """Flat key=value lines -> dict with typed values; rejects unknown keys."""
    out = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {ln}: unknown config key {key!r}")
        if key in _STR_KEYS:
            out[key] = raw
        elif key in _INT_KEYS:
            try:
                out[key] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"line {ln}: {key} wants an integer") from exc
        else:
            try:
                out[key] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"line {ln}: {key} wants a number") from exc
    return out


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"config file not found: {path}") from exc


def config_echo_text(cfg: training.TrainConfig) -> str:
    """Every resolved field as key=value; parsing it reproduces cfg."""
    lines = []
    for f in fields(training.TrainConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def resolve_config(overrides: dict) -> training.TrainConfig:
    benchmark = overrides.get("benchmark", "burgers")
    cfg = training.default_config(benchmark)
    extra = {k: v for k, v in overrides.items() if k != "benchmark"}
    cfg = replace(cfg, **extra)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# reference
# ---------------------------------------------------------------------------


def default_grid_path(benchmark, nx, nt):
    return os.path.join(out_root(), "refs", f"{benchmark}-nx{nx}-nt{nt}.grid")


def cmd_reference(args):
    problem = problems.make_problem(args.benchmark)
    nx = args.nx or refsolve.DEFAULT_NX.get(args.benchmark, 512)
    nt = args.nt
    path = args.out or default_grid_path(args.benchmark, nx, nt)
    if refsolve.cache_matches(path, args.benchmark, nx, nt):
        print(f"cached: {path}")
        return EXIT_OK
    grid = refsolve.solve(problem, nx=nx, nt=nt)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    refsolve.save_grid(grid, path)
    print(f"wrote: {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _train_overrides(args) -> dict:
    overrides = {}
    if args.config:
        overrides.update(load_config_file(args.config))
    for item in args.set or []:
        overrides.update(parse_config_text(item))
    for key in ("benchmark", "sampler", "seed", "max_iters"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    return overrides


def run_dir_for(cfg: training.TrainConfig, explicit=None):
    if explicit:
        return explicit
    return os.path.join(
        out_root(), "runs", f"{cfg.benchmark}-{cfg.sampler}-seed{cfg.seed}"
    )


def run_training(cfg: training.TrainConfig, run_dir, checkpoint_every=1000):
    """Execute one training job, streaming log.csv and checkpoints."""
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.echo"), "w", newline="\n") as fh:
        fh.write(config_echo_text(cfg))
    ckpt_path = os.path.join(run_dir, "checkpoint.bin")
    log_path = os.path.join(run_dir, "log.csv")

    log_fh = open(log_path, "w", newline="\n")
    log_fh.write("iter,L,L_f,L_i,L_b,ms,rebuild\n")

    def on_record(rec):
        log_fh.write(
            f"{rec.iter},{rec.loss!r},{rec.loss_f!r},{rec.loss_i!r},"
            f"{rec.loss_b!r},{rec.ms!r},{int(rec.rebuild)}\n"
        )
        if rec.iter % 100 == 0:
            log_fh.flush()

    try:
        net, records, rebuilds = training.train(cfg, on_record=on_record)
    finally:
        log_fh.flush()
        log_fh.close()
    mlp.save_checkpoint(ckpt_path, net)
    with open(os.path.join(run_dir, "rebuilds.csv"), "w", newline="\n") as fh:
        fh.write("event,iter,sim,s_size\n")
        for t, sim, size in rebuilds:
            fh.write(f"rebuild,{t},{sim!r},{size}\n")
    return net, records, rebuilds


def cmd_train(args):
    cfg = resolve_config(_train_overrides(args))
    run_dir = run_dir_for(cfg, args.out)
    try:
        run_training(cfg, run_dir)
    except DivergenceError:
        # keep whatever artifacts exist so the run can be inspected
        print(f"divergence: run aborted, artifacts in {run_dir}", file=sys.stderr)
        raise
    print(f"run: {run_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def read_log_records(path):
    """log.csv rows as lightweight records (iter, loss, ms)."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"training log not found: {path}") from exc
    if not lines or lines[0] != "iter,L,L_f,L_i,L_b,ms,rebuild":
        raise ConfigError(f"unrecognized log header in {path}")
    recs = []
    for line in lines[1:]:
        c = line.split(",")
        recs.append(
            training.TrainRecord(
                iter=int(c[0]), loss=float(c[1]), loss_f=float(c[2]),
                loss_i=float(c[3]), loss_b=float(c[4]), ms=float(c[5]),
                rebuild=bool(int(c[6])),
            )
        )
    return recs


def evaluate_run(run_dir, grid_path):
    cfg_path = os.path.join(run_dir, "config.echo")
    try:
        with open(cfg_path) as fh:
            overrides = parse_config_text(fh.read())
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"config echo not found: {cfg_path}") from exc
    cfg = resolve_config(overrides)
    problem = problems.make_problem(cfg.benchmark)
    net = mlp.load_checkpoint(os.path.join(run_dir, "checkpoint.bin"))
    grid = refsolve.load_grid(grid_path)
    if grid.name != cfg.benchmark:
        raise ConfigError(
            f"grid is for {grid.name!r}, run is for {cfg.benchmark!r}"
        )
    err = metrics.error_report(net, problem, grid)
    conv = metrics.convergence_report(
        read_log_records(os.path.join(run_dir, "log.csv"))
    )
    metrics.write_errors_csv(err, os.path.join(run_dir, "errors.csv"))
    metrics.write_convergence_csv(conv, os.path.join(run_dir, "convergence.csv"))
    return err, conv


def cmd_evaluate(args):
    err, _ = evaluate_run(args.run_dir, args.grid)
    print(metrics.summary_block(err), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def _median_cell(values):
    vals = [np.inf if v == metrics.NOT_REACHED else v for v in values]
    med = statistics.median(vals)
    return "not_reached" if not np.isfinite(med) else repr(med)


def cmd_compare(args):
    seeds = [int(s) for s in args.seeds.split(",") if s != ""]
    samplers = [s for s in args.samplers.split(",") if s != ""]
    if not seeds:
        raise ConfigError("need at least one seed")
    out_dir = args.out or os.path.join(out_root(), "compare", args.benchmark)
    os.makedirs(out_dir, exist_ok=True)

    grid_path = default_grid_path(
        args.benchmark, refsolve.DEFAULT_NX.get(args.benchmark, 512), args.nt
    )
    if not refsolve.cache_matches(
        grid_path, args.benchmark,
        refsolve.DEFAULT_NX.get(args.benchmark, 512), args.nt,
    ):
        grid = refsolve.solve(
            problems.make_problem(args.benchmark),
            nx=refsolve.DEFAULT_NX.get(args.benchmark, 512), nt=args.nt,
        )
        os.makedirs(os.path.dirname(grid_path), exist_ok=True)
        refsolve.save_grid(grid, grid_path)

    rows = []
    failures = []
    for sampler in samplers:
        per_seed = []
        for seed in seeds:
            overrides = {"benchmark": args.benchmark, "sampler": sampler,
                         "seed": seed}
            if args.max_iters is not None:
                overrides["max_iters"] = args.max_iters
            cfg = resolve_config(overrides)
            run_dir = os.path.join(out_dir, f"{sampler}-seed{seed}")
            try:
                _, records, _ = run_training(cfg, run_dir)
                err, conv = evaluate_run(run_dir, grid_path)
            except DmisError as exc:
                failures.append((sampler, seed, str(exc)))
                continue
            _write_curve(records, cfg.recompute_every,
                         os.path.join(out_dir, f"curve-{sampler}-{seed}.csv"))
            per_seed.append((err, conv))
        if per_seed:
            t = [e.segments["test"] for e, _ in per_seed]
            rows.append((
                sampler, len(per_seed),
                _median_cell([s.me for s in t]),
                _median_cell([s.mae for s in t]),
                _median_cell([s.rmse for s in t]),
                _median_cell([c.nc[2] for _, c in per_seed]),
                _median_cell([c.nc[3] for _, c in per_seed]),
                _median_cell([c.tc[2] for _, c in per_seed]),
                _median_cell([c.tc[3] for _, c in per_seed]),
            ))

    with open(os.path.join(out_dir, "comparison.csv"), "w", newline="\n") as fh:
        fh.write("sampler,runs,me,mae,rmse,NC_2,NC_3,TC_2,TC_3"
                 + (",partial\n" if failures else "\n"))
        for row in rows:
            fh.write(",".join(str(c) for c in row)
                     + (",partial\n" if failures else "\n"))
    if failures:
        for sampler, seed, msg in failures:
            print(f"failed: {sampler} seed {seed}: {msg}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"comparison: {os.path.join(out_dir, 'comparison.csv')}")
    return EXIT_OK


def _write_curve(records, recompute_every, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("iter,L\n")
        last = records[-1].iter if records else 0
        for rec in records:
            if (rec.iter - 1) % recompute_every == 0 or rec.iter == last:
                fh.write(f"{rec.iter},{rec.loss!r}\n")


# ---------------------------------------------------------------------------
# argument parsing / dispatch
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="dmis",
        description="PINN training with dynamic mesh-based importance sampling",
    )
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reference", help="solve and cache a reference grid")
    r.add_argument("benchmark", choices=problems.BENCHMARKS)
    r.add_argument("--nx", type=int, default=0)
    r.add_argument("--nt", type=int, default=refsolve.DEFAULT_NT)
    r.add_argument("--out")
    r.set_defaults(func=cmd_reference)

    t = sub.add_parser("train", help="run one training job")
    t.add_argument("--config", help="flat key=value config file")
    t.add_argument("--benchmark", choices=problems.BENCHMARKS)
    t.add_argument("--sampler", choices=("dmis", "uniform"))
    t.add_argument("--seed", type=int)
    t.add_argument("--max-iters", dest="max_iters", type=int)
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key")
    t.add_argument("--out", help="run directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="emit error/convergence reports")
    e.add_argument("run_dir")
    e.add_argument("grid")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="sampler comparison over seeds")
    c.add_argument("--benchmark", required=True, choices=problems.BENCHMARKS)
    c.add_argument("--seeds", default="0,1,2")
    c.add_argument("--samplers", default="uniform,dmis")
    c.add_argument("--max-iters", dest="max_iters", type=int)
    c.add_argument("--nt", type=int, default=refsolve.DEFAULT_NT)
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InstabilityError, NonFiniteError, DivergenceError, RangeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
