"""Metrics, the model benchmark, learning-curve export and closed-loop validation."""

from __future__ import annotations

import csv
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import svg
from .dataset import Dataset, axis_values, generate_grid
from .distill import TransferFunction, eval_tf_array
from .errors import EmptyInput, LengthMismatch, ToolkitError
from .model_api import RegressorSpec, TrainedModel, fit, predict
from .plant import PlantParams, analytical_inverse_array, plant_forward_array

log = logging.getLogger(__name__)

REPORT_HEADER = ["model", "mse", "mae", "fit_seconds", "mse_l1", "mse_l2", "mse_l3",
                 "mae_l1", "mae_l2", "mae_l3"]
DEVIATION_HEADER = ["target_alpha", "target_beta", "achieved_alpha", "achieved_beta",
                    "dev_alpha", "dev_beta"]
CURVE_HEADER = ["epoch", "train_mae", "val_mae"]

# fits faster than this are timed as the median of three runs
FAST_FIT_SECONDS = 0.1


def _pair(pred, actual) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise LengthMismatch(f"prediction shape {p.shape} != actual shape {a.shape}")
    if p.size == 0:
        raise EmptyInput("no samples to score")
    return p, a


def mse(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return float(np.mean((p - a) ** 2))


def mae(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return float(np.mean(np.abs(p - a)))


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else repr(float(v))


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchmarkRow:
    model: str
    mse: float = math.nan
    mae: float = math.nan
    fit_seconds: float = math.nan
    mse_per_output: tuple = (math.nan,) * 3
    mae_per_output: tuple = (math.nan,) * 3
    train_mae: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_fields(self) -> list[str]:
        vals = [self.mse, self.mae, self.fit_seconds, *self.mse_per_output, *self.mae_per_output]
        return [self.model] + [_fmt(v) for v in vals]


@dataclass
class EvalReport:
    rows: list[BenchmarkRow]
    dataset_meta: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict, repr=False)

    def row(self, name: str) -> BenchmarkRow:
        for r in self.rows:
            if r.model == name:
                return r
        raise KeyError(name)

    @property
    def failed(self) -> list[BenchmarkRow]:
        return [r for r in self.rows if not r.ok]

    def best(self) -> BenchmarkRow:
        """Lowest validation MAE, ties broken by lower fit time."""
        ok = [r for r in self.rows if r.ok and math.isfinite(r.mae)]
        if not ok:
            raise EmptyInput("no successful benchmark rows")
        return min(ok, key=lambda r: (r.mae, r.fit_seconds))

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for r in self.rows:
                w.writerow(r.csv_fields())
        return path


def _timed_fit(spec: RegressorSpec, train: Dataset, val: Dataset) -> TrainedModel:
    model = fit(spec, train, val)
    if model.fit_seconds < FAST_FIT_SECONDS:
        times = [model.fit_seconds] + [fit(spec, train, val).fit_seconds for _ in range(2)]
        model.fit_seconds = statistics.median(times)
    return model


def score_row(name: str, model: TrainedModel, train: Dataset, val: Dataset) -> BenchmarkRow:
    pv = predict(model, val.X)
    err = pv - val.Y
    return BenchmarkRow(
        name,
        mse=mse(pv, val.Y),
        mae=mae(pv, val.Y),
        fit_seconds=model.fit_seconds,
        mse_per_output=tuple(float(v) for v in np.mean(err ** 2, axis=0)),
        mae_per_output=tuple(float(v) for v in np.mean(np.abs(err), axis=0)),
        train_mae=mae(predict(model, train.X), train.Y),
    )


def run_benchmark(specs: Sequence[RegressorSpec], train: Dataset, val: Dataset) -> EvalReport:
    """Fit every spec on ``train`` and score it on ``val``, in input order.

    A failing family yields a row with ``error`` set; the others still run.
    """
    if not specs:
        raise EmptyInput("no model specs given")
    if len(val) == 0:
        raise EmptyInput("validation set is empty")
    rows, models = [], {}
    for spec in specs:
        name = spec.family
        try:
            model = _timed_fit(spec, train, val)
            rows.append(score_row(name, model, train, val))
            models[name] = model
        except (ToolkitError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("model %s failed: %s", name, exc)
            rows.append(BenchmarkRow(name, error=f"{type(exc).__name__}: {exc}"))
    return EvalReport(rows, dict(train.meta), models)


def mean_predictor_mae(train: Dataset, val: Dataset) -> float:
    """MAE of predicting the training mean everywhere."""
    return mae(np.broadcast_to(train.Y.mean(axis=0), val.Y.shape), val.Y)


# ---------------------------------------------------------------------------
# Plots and curves
# ---------------------------------------------------------------------------

def write_pred_vs_actual(model: TrainedModel, val: Dataset, path, name: str | None = None) -> Path:
    """Actual, predicted and absolute-error series per tendon over validation samples."""
    pv = predict(model, val.X)
    idx = np.arange(len(val), dtype=np.float64)
    panels = []
    for i, out in enumerate(("L1", "L2", "L3")):
        panels.append(svg.Panel(out, (
            svg.Series("actual", idx, val.Y[:, i]),
            svg.Series("predicted", idx, pv[:, i]),
            svg.Series("abs error", idx, np.abs(pv[:, i] - val.Y[:, i])),
        ), xlabel="sample", ylabel="length"))
    return svg.write(path, panels, title=f"{name or model.family}: predicted vs actual")


def export_curves(curves: dict, outdir) -> list[Path]:
    """One ``<name>_curve.csv`` and ``<name>_curve.svg`` per training curve."""
    curves = {k: v for k, v in curves.items() if v}
    if not curves:
        raise EmptyInput("no training curves to export")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, curve in curves.items():
        cpath = outdir / f"{name}_curve.csv"
        with cpath.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_HEADER)
            for pt in curve:
                w.writerow([pt.epoch, _fmt(pt.train_mae),
                            "" if pt.val_mae is None else _fmt(pt.val_mae)])
        ep = np.array([pt.epoch for pt in curve], dtype=np.float64)
        tr = np.array([pt.train_mae for pt in curve], dtype=np.float64)
        va = np.array([np.nan if pt.val_mae is None else pt.val_mae for pt in curve])
        panel = svg.Panel("MAE over epochs", (svg.Series("train", ep, tr),
                                              svg.Series("validation", ep, va)),
                          xlabel="epoch", ylabel="MAE")
        spath = svg.write(outdir / f"{name}_curve.svg", [panel], title=name)
        written += [cpath, spath]
    return written


# ---------------------------------------------------------------------------
# Closed-loop validation
# ---------------------------------------------------------------------------

def sweep_targets(protocol: str = "alternating", min_deg: float = -90.0, max_deg: float = 90.0,
                  step: float = 10.0) -> np.ndarray:
    """Validation targets.

    ``alternating``: an alpha sweep with beta = 0 followed by a beta sweep with
    alpha = 0 (2 x 19 targets at the default spacing). ``grid``: every pose of
    the full grid.
    """
    if protocol == "alternating":
        ax = axis_values(min_deg, max_deg, step)
        z = np.zeros_like(ax)
        return np.vstack([np.column_stack([ax, z]), np.column_stack([z, ax])])
    if protocol == "grid":
        return np.array(generate_grid(min_deg, max_deg, step), dtype=np.float64)
    raise ValueError(f"unknown sweep protocol {protocol!r}")


@dataclass(frozen=True)
class DeviationReport:
    controller: str
    targets: np.ndarray
    achieved: np.ndarray

    @property
    def deviations(self) -> np.ndarray:
        return self.achieved - self.targets

    @property
    def mean_abs(self) -> np.ndarray:
        return np.mean(np.abs(self.deviations), axis=0)

    @property
    def max_abs(self) -> np.ndarray:
        return np.max(np.abs(self.deviations), axis=0)

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DEVIATION_HEADER)
            for t, a, d in zip(self.targets, self.achieved, self.deviations):
                w.writerow([_fmt(v) for v in (*t, *a, *d)])
        return path


def _controller_fn(controller) -> tuple[Callable, str]:
    if isinstance(controller, str):
        if controller != "analytical":
            raise ValueError(f"unknown controller {controller!r}")
        return analytical_inverse_array, "analytical"
    if isinstance(controller, TransferFunction):
        return (lambda P: eval_tf_array(controller, P)), controller.source
    return controller, getattr(controller, "__name__", "controller")


def validate_controller(controller, params: PlantParams, targets=None) -> DeviationReport:
    """Drive the noise-free plant with ``controller(target)`` and record the pose reached."""
    fn, name = _controller_fn(controller)
    T = sweep_targets() if targets is None else np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    cmds = np.asarray(fn(T), dtype=np.float64).reshape(-1, 3)
    achieved = plant_forward_array(cmds, params.noiseless())
    return DeviationReport(name, T, achieved)


def improvement_ratio(baseline: DeviationReport, candidate: DeviationReport,
                      floor: float = 1e-9) -> np.ndarray | None:
    """Per-axis ``candidate mean |dev| / baseline mean |dev|``; None when the baseline is ~0."""
    base = baseline.mean_abs
    if np.all(base < floor):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(base < floor, np.nan, candidate.mean_abs / base)


def write_deviation_overlay(reports: Sequence[DeviationReport], outdir, stem: str = "deviation"
                            ) -> list[Path]:
    """One SVG per axis overlaying each controller's deviation over the target sequence."""
    outdir = Path(outdir)
    paths = []
    for k, axis in enumerate(("alpha", "beta")):
        series = tuple(
            svg.Series(r.controller, np.arange(len(r.targets), dtype=np.float64), r.deviations[:, k])
            for r in reports)
        panel = svg.Panel(f"{axis} deviation", series, xlabel="target index", ylabel="degrees")
        paths.append(svg.write(outdir / f"{stem}_{axis}.svg", [panel],
                               title=f"{axis} deviation by controller"))
    return paths
