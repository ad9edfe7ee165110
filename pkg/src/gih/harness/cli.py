"""Command-line entry point ``gih``.

Exit status: 0 on success, 1 when an experiment fails (including a failed
theorem check), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import geometry as geo
from .. import nn
from ..tensor import write_matrix_csv
from . import config as cfgmod
from . import report
from .experiments import EXPERIMENTS, ExperimentError, run_experiment


def _threads(value: int | None) -> int:
    return value if value is not None else geo.default_threads()


def _cmd_run(args) -> int:
    user = cfgmod.load_config(args.config) if args.config else {}
    if args.scale:
        user["scale"] = args.scale
    cfg = cfgmod.resolve(args.experiment, user, args.seed)
    out = args.out or str(Path("gih-out") / args.experiment)
    path, outcome = run_experiment(cfg, out, _threads(args.threads))
    status = "ok" if outcome.passed else "FAILED"
    print(f"{args.experiment}: {status}; results in {path}")
    return 0 if outcome.passed else 1


def _cmd_verify(args) -> int:
    args.experiment = "verify-theorems"
    return _cmd_run(args)


def _cmd_estimate(args) -> int:
    try:
        spec = cfgmod.model_from_config({"file": args.model})
    except cfgmod.ConfigError:
        if Path(args.model).exists():
            raise
        spec = cfgmod.model_from_config({"ref": args.model})
    probing = geo.default_probing(spec, args.probes)
    snap = geo.estimate_avg_geometry(spec, geo.FreshInit(args.n_models, args.seed or 0), probing,
                                     threads=_threads(args.threads))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snap.save(out)
    write_matrix_csv(out / "G.csv", snap.g)
    report.heatmap(snap.g, out / "G.svg", f"Average geometry ({spec.name})")
    print(f"wrote {out}/G.bin, G.csv, G.json, G.svg")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gih", description="Input-space geometry experiments for small networks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config overriding the shipped defaults")
        sp.add_argument("--out", help="output directory (default gih-out/<experiment>)")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--threads", type=int, help="worker threads (default: $GIH_THREADS or 1)")
        sp.add_argument("--scale", choices=["desk", "paper"], help="which shipped default config to start from")

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment", help=f"one of: {', '.join(EXPERIMENTS)}")
    common(run)
    run.set_defaults(func=_cmd_run)

    ver = sub.add_parser("verify-theorems", help="check closed-form results against Monte-Carlo estimates")
    common(ver)
    ver.set_defaults(func=_cmd_verify)

    est = sub.add_parser("estimate-geometry", help="estimate the initial average geometry of a model")
    est.add_argument("--model", required=True, help="model spec JSON file or reference name")
    est.add_argument("--out", required=True)
    est.add_argument("--n-models", type=int, default=1000)
    est.add_argument("--probes", type=int, default=1)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--threads", type=int)
    est.set_defaults(func=_cmd_estimate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"gih: config error: {exc}", file=sys.stderr)
        return 2
    except (ExperimentError, nn.SpecError) as exc:
        print(f"gih: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # any module error, reported with context
        print(f"gih: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
