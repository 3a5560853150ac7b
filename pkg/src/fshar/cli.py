"""Command line entry point: ``fshar run | gradcheck | synth``."""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as D
from . import nn
from .exceptions import FSHARError
from .harness import ExperimentConfig, emit_report, run_experiment

log = logging.getLogger("fshar")


def _run(args):
    cfg = ExperimentConfig.from_json(args.config)
    base_dir = cfg._base_dir
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.reps is not None:
        overrides["repetitions"] = args.reps
    if args.format is not None:
        overrides["format"] = args.format
    if args.out is not None:
        overrides["output"] = args.out
    if overrides:
        cfg = replace(cfg, **overrides)
        cfg._base_dir = base_dir
    table = run_experiment(cfg)
    out = cfg.resolve(cfg.output) if cfg.output and args.out is None else cfg.output
    emit_report(table, cfg.format, out)
    for row in table.rows:
        print(f"{row.method:13s} {row.normalization:5s} {row.shots}-shot  "
              f"{row.mean:6.2f} +/- {row.sd:5.2f}  (n={len(row.accuracies)})")
    for f in table.failures:
        print(f"FAILED {f['method']} {f['normalization']} {f['shots']}-shot: {f['error']}")
    return 1 if table.failures else 0


def _gradcheck(args):
    worst = 0.0
    for seed in range(args.seeds):
        errors = nn.gradient_check(hidden=args.hidden, T=args.T, C=args.C, n=args.n, seed=seed)
        for name, err in errors.items():
            status = "ok" if err <= args.tol else "FAIL"
            print(f"seed {seed} {name:12s} max rel err {err:.3e} {status}")
            worst = max(worst, err)
    print(f"worst relative error {worst:.3e} (tolerance {args.tol:g})")
    return 0 if worst <= args.tol else 1


def _synth(args):
    batch = D.synth_generate(args.classes, args.per_class, args.T, args.C, args.noise, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n, T, C = batch.X.shape
    rows = batch.X.reshape(n * T, C)
    labels = np.repeat(batch.y, T)
    with open(out / "synth.csv", "w", encoding="utf-8") as fh:
        for values, label in zip(rows, labels):
            fh.write(",".join(repr(float(v)) for v in values) + f",{int(label)}\n")
    schema = D.RecordingSchema(",", C, list(range(C)), float(T))
    (out / "schema.json").write_text(json.dumps(schema.to_dict(), indent=2) + "\n")
    D.save_batch(out / "synth.bin", batch)
    print(f"wrote {n} windows of {T}x{C} to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="fshar", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a few-shot experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.set_defaults(func=_run)

    p = sub.add_parser("gradcheck", help="finite-difference check of the network gradients")
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("-T", type=int, default=3)
    p.add_argument("-C", type=int, default=2)
    p.add_argument("-n", type=int, default=2)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic windowed dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--classes", type=int, default=15)
    p.add_argument("--per-class", type=int, default=60)
    p.add_argument("-T", type=int, default=24)
    p.add_argument("-C", type=int, default=3)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (FSHARError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
