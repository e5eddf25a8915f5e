"""Command-line surface: eval, sweep, ablate, phantom, metrics.

Exit codes: 0 success, 1 partial case failures, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, plots
from .errors import ArtsegError
from .gateway import ExternalBackend, make_backend
from .harness import EvalConfig
from .manifest import DatasetManifest
from .metrics import evaluate_case
from .phantom import SuiteSpec, generate_manifest
from .volume_io import read_mask


def _add_shared(p):
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--backend", default="prior-oracle",
                   help='propagate | prior-oracle | external:"CMD"')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter-max", type=int, default=5)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--unit", choices=("voxel", "mm"), default="voxel")
    p.add_argument("--mode", choices=("edt", "brute"), default="edt")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering next to the CSV output")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="artseg",
        description="prior-guided segmentation harness: evaluation, sweeps, "
        "phantom data, and metrics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a backend over a manifest")
    _add_shared(p_eval)

    p_sweep = sub.add_parser("sweep", help="box-expansion robustness sweep")
    _add_shared(p_sweep)
    p_sweep.add_argument("--levels", default="1-10",
                         help="level range lo-hi (default 1-10)")
    p_sweep.add_argument("--reps", type=int, default=1)

    p_abl = sub.add_parser("ablate", help="input-channel ablation table")
    _add_shared(p_abl)

    p_ph = sub.add_parser("phantom", help="generate a synthetic dataset")
    p_ph.add_argument("--spec", help="phantom suite spec JSON (defaults used if omitted)")
    p_ph.add_argument("--out", required=True)

    p_m = sub.add_parser("metrics", help="score one prediction against ground truth")
    p_m.add_argument("gt")
    p_m.add_argument("pred")
    p_m.add_argument("--tau", type=float, default=0.5)
    p_m.add_argument("--unit", choices=("voxel", "mm"), default="voxel")
    p_m.add_argument("--mode", choices=("edt", "brute"), default="edt")
    return parser


def _config_from(args, **overrides) -> EvalConfig:
    base = dict(
        backend=args.backend,
        seed=args.seed,
        jitter_max=args.jitter_max,
        tau=args.tau,
        unit=args.unit,
        mode=args.mode,
        workers=args.workers,
    )
    base.update(overrides)
    return EvalConfig(**base)


def _load_manifest(path) -> DatasetManifest:
    return DatasetManifest.load(path).validate()


def _parse_levels(text):
    if "-" in text:
        lo, hi = text.split("-", 1)
        return range(int(lo), int(hi) + 1)
    return [int(v) for v in text.split(",")]


def cmd_eval(args) -> int:
    manifest = _load_manifest(args.manifest)
    config = _config_from(args)
    backend = make_backend(args.backend)
    try:
        report = harness.run_eval(manifest, backend, config, args.out)
    finally:
        if isinstance(backend, ExternalBackend):
            backend.close()
    harness.write_report(report, args.out)
    if not args.no_figures:
        plots.render_eval_figure(report, Path(args.out) / "report.png")
    print(f"evaluated {len(report.rows)} cases, {report.n_failed} failed")
    mean, sd, n = report.aggregates["dice"]
    if mean is not None:
        print(f"dice: {mean:.4f} +/- {sd:.4f} (n={n})")
    return 1 if report.n_failed else 0


def cmd_sweep(args) -> int:
    manifest = _load_manifest(args.manifest)
    config = _config_from(args)
    backend = make_backend(args.backend)
    try:
        rows, reports = harness.run_sweep(
            manifest, backend, config, args.out,
            levels=_parse_levels(args.levels), reps=args.reps,
        )
    finally:
        if isinstance(backend, ExternalBackend):
            backend.close()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(harness.sweep_csv_text(rows), encoding="utf-8")
    (out / "sweep.json").write_text(
        json.dumps({"config": config.snapshot(), "rows": rows}, indent=2) + "\n",
        encoding="utf-8",
    )
    if not args.no_figures:
        plots.render_sweep_figure(rows, out / "sweep.png")
    n_failed = sum(rep.n_failed for rep in reports.values())
    for r in rows:
        print(f"level {r['level']:>2}: dice {r['mean_dice']:.4f} "
              f"+/- {r['sd_dice']:.4f} (n={r['n']})")
    return 1 if n_failed else 0


def cmd_ablate(args) -> int:
    manifest = _load_manifest(args.manifest)
    config = _config_from(args)
    backend = make_backend(args.backend)
    try:
        rows, reports = harness.run_ablate(manifest, backend, config, args.out)
    finally:
        if isinstance(backend, ExternalBackend):
            backend.close()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablate.csv").write_text(harness.ablate_csv_text(rows), encoding="utf-8")
    (out / "ablate.json").write_text(
        json.dumps({"config": config.snapshot(), "rows": rows}, indent=2) + "\n",
        encoding="utf-8",
    )
    if not args.no_figures:
        plots.render_ablate_figure(rows, out / "ablate.png")
    for r in rows:
        dice = r["dice_mean"]
        shown = "NA" if dice is None else f"{dice:.4f}"
        print(f"{r['config']:<24} dice {shown}  failed {r['n_failed']}")
    any_failed = any(r["n_failed"] for r in rows)
    return 1 if any_failed else 0


def cmd_phantom(args) -> int:
    if args.spec:
        doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        suite = SuiteSpec.from_dict(doc)
    else:
        suite = SuiteSpec()
    manifest = generate_manifest(suite, args.out)
    print(f"wrote {len(manifest.cases)} image/mask pairs under {args.out}")
    print(f"manifest: {Path(args.out) / 'manifest.json'}")
    return 0


def cmd_metrics(args) -> int:
    gt = read_mask(args.gt)
    pred = read_mask(args.pred)
    report = evaluate_case(gt, pred, args.tau, args.unit, args.mode)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "eval": cmd_eval,
        "sweep": cmd_sweep,
        "ablate": cmd_ablate,
        "phantom": cmd_phantom,
        "metrics": cmd_metrics,
    }
    try:
        return handlers[args.command](args)
    except ArtsegError as e:
        kind = type(e).__name__
        if "GeometryMismatch" in kind:
            print(f"error: geometry mismatch: {e}", file=sys.stderr)
        else:
            print(f"error: {kind}: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
