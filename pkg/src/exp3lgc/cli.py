"""Command-line entry point: ``run``, ``verify`` and ``show-schedule``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile

import numpy as np

from . import __version__, _backend
from .algorithms import schedule_ix
from .config import ConfigError, parse_config
from .evaluation import results_rows, write_results_csv
from .simulator import resolve_u_params, run_experiment
from .verification import run_audit_suite

log = logging.getLogger("exp3lgc")

MANIFEST = "manifest.json"


def build_identifier(backend: str) -> str:
    return (f"exp3lgc {__version__}; backend {backend}; numpy {np.__version__}; "
            f"python {platform.python_version()}")


def _load(args):
    cfg = parse_config(args.config)
    return cfg.with_overrides(trials=args.trials, horizon=args.horizon, seed=args.seed,
                              out=getattr(args, "out", None), fmt=getattr(args, "format", None))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_results(result, fmt: str, path: str) -> None:
    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            write_results_csv(result, fh)
        else:
            for t, name, mean, std, trials in results_rows(result):
                fh.write(json.dumps({"round": t, "algorithm": name, "mean_regret": mean,
                                     "std_regret": std, "trials": trials}) + "\n")


def cmd_run(args) -> int:
    cfg = _load(args)
    out_dir = cfg.output_dir(args.out)
    os.makedirs(out_dir, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".partial-", dir=out_dir)
    try:
        sink = None
        if args.dump_traces:
            os.makedirs(os.path.join(staging, "traces"))

            def sink(label, seed, trace):
                trace.write_jsonl(os.path.join(staging, "traces", f"{label}-seed{seed}.jsonl"))

        result = run_experiment(cfg, threads=args.threads, backend=args.backend, trace_sink=sink)
        name = f"results.{cfg.output_format}"
        _write_results(result, cfg.output_format, os.path.join(staging, name))
        manifest = {
            "status": "complete",
            "config_hash": cfg.digest(),
            "config": cfg.raw,
            "source": cfg.source,
            "base_seed": cfg.base_seed,
            "trial_seeds": [cfg.base_seed, cfg.base_seed + cfg.trials - 1],
            "trials": cfg.trials,
            "horizon": cfg.T,
            "build": build_identifier(result.backend),
            "algorithms": {k: v.params for k, v in result.algorithms.items()},
            "outputs": {name: _sha256(os.path.join(staging, name))},
        }
        with open(os.path.join(staging, MANIFEST), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for entry in os.listdir(staging):
            target = os.path.join(out_dir, entry)
            if os.path.isdir(target):
                shutil.rmtree(target)
            os.replace(os.path.join(staging, entry), target)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    print(os.path.join(out_dir, name))
    return 0


def cmd_verify(args) -> int:
    results = run_audit_suite(seed=args.seed or 0)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.seconds:6.2f}s  {r.detail}")
    ok = all(r.passed for r in results)
    print("all audits passed" if ok else "some audits FAILED")
    return 0 if ok else 1


def cmd_show_schedule(args) -> int:
    cfg = _load(args)
    problem = cfg.build()
    specs = cfg.algorithms
    if args.algorithm:
        specs = [s for s in specs if args.algorithm in (s.name, s.key)]
        if not specs:
            from .simulator import AlgorithmSpec
            specs = [AlgorithmSpec(args.algorithm)]
    for spec in specs:
        if spec.is_ix:
            eta, beta = schedule_ix(1, problem.K, problem.d, 0.0)
            print(f"{spec.key}: eta_1={eta!r} beta_1={beta!r}")
        else:
            p, _ = resolve_u_params(problem, spec, cfg.base_seed)
            kind = "directed" if p.directed else "undirected"
            print(f"{spec.key}: eta={p.eta!r} gamma={p.gamma!r} ({kind}, T={problem.T})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exp3lgc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="config file, JSON text or preset name (e.g. paper_fig2)")
        p.add_argument("--trials", type=int)
        p.add_argument("--horizon", type=int, metavar="T")
        p.add_argument("--seed", type=int, metavar="S", help="base seed; trial k uses S + k")

    run = sub.add_parser("run", help="run an experiment and write regret curves")
    common(run)
    run.add_argument("--out", metavar="DIR",
                     help="output directory (default: config, then $EXP3LGC_OUT, then ./results)")
    run.add_argument("--format", choices=("csv", "jsonl"))
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--backend", choices=sorted(_backend.KERNELS))
    run.add_argument("--dump-traces", action="store_true",
                     help="also write every trial's per-round records as JSON lines")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the exact audit suite")
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=cmd_verify)

    show = sub.add_parser("show-schedule", help="print resolved learning and exploration rates")
    common(show)
    show.add_argument("--algorithm")
    show.set_defaults(func=cmd_show_schedule)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 1),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
