"""Batch evaluation over a dataset manifest: eval, robustness sweep, ablation.

Test protocol per case (fraction >= 1): resolve the prior via the immediate-
prior rule, build the box prompt from the ground-truth current mask, jitter it
(subset-of-faces at test time, fixed all-face expansion in sweep mode), pass
the prior annotation as the mask prompt, run the backend, and score the
prediction with the full metric suite.

Reports are deterministic: per-case RNG streams derive from (seed, case_id,
rep), rows are ordered by (patient_id, fraction), and floats are written with
a fixed format, so a rerun with identical arguments is byte-identical.

A failing case is recorded with its error and excluded from aggregates; it
never aborts the batch.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtsegError, ManifestError
from .gateway import SegmentationRequest, segment
from .geometry import count_components, mask_bbox
from .manifest import DatasetManifest
from .metrics import evaluate_case
from .prompts import derive_rng, select_prior, test_time_bbox_jitter
from .volume_io import read_mask

FULL_INPUTS = ("curMR", "priMR", "priSeg")
DEFAULT_ABLATION = (
    ("curMR",),
    ("curMR", "priMR"),
    ("curMR", "priSeg"),
    ("curMR", "priMR", "priSeg"),
)
METRICS = ("dice", "nsd", "hd95", "asd")


@dataclass(frozen=True)
class EvalConfig:
    backend: str = "prior-oracle"
    seed: int = 0
    jitter_max: int = 5
    tau: float = 0.5
    unit: str = "voxel"
    mode: str = "edt"
    workers: int = 1
    inputs: tuple = FULL_INPUTS
    sweep_level: int | None = None
    rep: int = 0

    def snapshot(self) -> dict:
        return {
            "backend": self.backend,
            "seed": self.seed,
            "jitter_max": self.jitter_max,
            "tau": self.tau,
            "unit": self.unit,
            "mode": self.mode,
            "workers": self.workers,
            "inputs": list(self.inputs),
            "sweep_level": self.sweep_level,
            "rep": self.rep,
        }


@dataclass
class ExperimentReport:
    rows: list
    aggregates: dict
    config: dict
    n_failed: int = 0

    def to_dict(self):
        return {
            "config": self.config,
            "aggregates": self.aggregates,
            "n_failed": self.n_failed,
            "rows": self.rows,
        }


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


CSV_COLUMNS = (
    "case_id", "patient_id", "fraction", "status", "dice", "nsd", "hd95",
    "asd", "unit", "tau", "degenerate", "confidence", "n_components", "message",
)


def report_csv_text(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report.rows:
        w.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])
    w.writerow([])
    for metric in METRICS:
        mean, sd, n = report.aggregates[metric]
        w.writerow(["aggregate", metric, _fmt(mean), _fmt(sd), n])
    return buf.getvalue()


def write_report(report: ExperimentReport, out_dir, stem: str = "report"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.csv").write_text(report_csv_text(report), encoding="utf-8")
    (out_dir / f"{stem}.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )


def _aggregate(rows) -> dict:
    out = {}
    for metric in METRICS:
        values = [
            row[metric]
            for row in rows
            if row["status"] == "ok" and row.get(metric) is not None
        ]
        if values:
            arr = np.asarray(values, dtype=np.float64)
            out[metric] = (float(arr.mean()), float(arr.std()), len(values))
        else:
            out[metric] = (None, None, 0)
    return out


def _eval_one_case(entry, manifest, backend, config, scratch_dir):
    row = {
        "case_id": entry.case_id,
        "patient_id": entry.patient_id,
        "fraction": entry.fraction_index,
        "status": "ok",
        "unit": config.unit,
        "tau": config.tau,
        "message": "",
    }
    try:
        if entry.mask is None:
            raise ManifestError(f"{entry.case_id}: ground-truth mask required")
        prior = select_prior(manifest, entry.patient_id, entry.fraction_index)
        gt = read_mask(entry.mask)
        box = mask_bbox(gt)
        row["n_components"] = count_components(gt)
        rng = derive_rng(config.seed, entry.case_id, config.rep)
        box = test_time_bbox_jitter(
            box, config.jitter_max, gt.dims, rng, sweep_level=config.sweep_level
        )
        use_prior_img = "priMR" in config.inputs
        use_prior_seg = "priSeg" in config.inputs
        request = SegmentationRequest(
            case_id=entry.case_id,
            current=entry.image,
            prior=prior.image if use_prior_img else None,
            prior_mask=prior.mask if use_prior_seg else None,
            bbox=box,
            mask_prompt=prior.mask if use_prior_seg else None,
            out_dir=scratch_dir,
        )
        result = segment(request, backend)
        row["confidence"] = result.confidence
        metrics = evaluate_case(gt, result.mask, config.tau, config.unit, config.mode)
        row.update(
            dice=metrics.dice, nsd=metrics.nsd, hd95=metrics.hd95,
            asd=metrics.asd, degenerate=metrics.degenerate,
        )
    except ArtsegError as e:
        row["status"] = "failed"
        row["message"] = f"{type(e).__name__}: {e}"
    return row


def run_eval(manifest: DatasetManifest, backend, config: EvalConfig,
             out_dir) -> ExperimentReport:
    """Evaluate every fraction >= 1 of the manifest with the given backend."""
    manifest.validate()
    out_dir = Path(out_dir)
    scratch = out_dir / "cases"
    cases = [c for c in manifest.cases if c.fraction_index >= 1]
    cases.sort(key=lambda c: (c.patient_id, c.fraction_index))

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rows = list(
                pool.map(
                    lambda c: _eval_one_case(c, manifest, backend, config, scratch),
                    cases,
                )
            )
    else:
        rows = [_eval_one_case(c, manifest, backend, config, scratch) for c in cases]

    rows.sort(key=lambda r: (r["patient_id"], r["fraction"]))
    n_failed = sum(1 for r in rows if r["status"] != "ok")
    return ExperimentReport(
        rows=rows,
        aggregates=_aggregate(rows),
        config=config.snapshot(),
        n_failed=n_failed,
    )


def run_sweep(manifest: DatasetManifest, backend, config: EvalConfig, out_dir,
              levels=range(1, 11), reps: int = 1):
    """Box-expansion robustness sweep: one eval per (level, rep)."""
    out_dir = Path(out_dir)
    sweep_rows = []
    all_reports = {}
    for level in levels:
        level_rows = []
        for rep in range(reps):
            cfg = EvalConfig(**{**config.snapshot(), "inputs": tuple(config.inputs),
                                "sweep_level": int(level), "rep": rep})
            report = run_eval(manifest, backend, cfg, out_dir)
            all_reports[(int(level), rep)] = report
            level_rows.extend(
                r["dice"] for r in report.rows if r["status"] == "ok"
            )
        arr = np.asarray(level_rows, dtype=np.float64)
        sweep_rows.append(
            {
                "backend": config.backend,
                "level": int(level),
                "mean_dice": float(arr.mean()) if arr.size else None,
                "sd_dice": float(arr.std()) if arr.size else None,
                "n": int(arr.size),
            }
        )
    return sweep_rows, all_reports


def sweep_csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["backend", "level", "mean_dice", "sd_dice", "n"])
    for r in rows:
        w.writerow([r["backend"], r["level"], _fmt(r["mean_dice"]),
                    _fmt(r["sd_dice"]), r["n"]])
    return buf.getvalue()


def run_ablate(manifest: DatasetManifest, backend, config: EvalConfig, out_dir,
               input_configs=DEFAULT_ABLATION):
    """Input-channel ablation: one eval per input configuration."""
    rows = []
    reports = {}
    for inputs in input_configs:
        label = "+".join(inputs)
        cfg = EvalConfig(**{**config.snapshot(), "inputs": tuple(inputs)})
        report = run_eval(manifest, backend, cfg, Path(out_dir) / label.replace("+", "_"))
        reports[label] = report
        row = {"config": label, "n_failed": report.n_failed}
        for metric in METRICS:
            mean, sd, _ = report.aggregates[metric]
            row[f"{metric}_mean"] = mean
            row[f"{metric}_sd"] = sd
        row["n"] = report.aggregates["dice"][2]
        rows.append(row)
    return rows, reports


def ablate_csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["config"]
    for metric in METRICS:
        header += [f"{metric}_mean", f"{metric}_sd"]
    header += ["n", "n_failed"]
    w.writerow(header)
    for r in rows:
        line = [r["config"]]
        for metric in METRICS:
            line += [_fmt(r[f"{metric}_mean"]), _fmt(r[f"{metric}_sd"])]
        line += [r.get("n", 0), r["n_failed"]]
        w.writerow(line)
    return buf.getvalue()
