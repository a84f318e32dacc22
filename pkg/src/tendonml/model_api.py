"""Uniform fit/predict contract over the eight regression families.

Inputs and outputs are standardized with training statistics for every
family. Ridge, lasso, SVR and GPR fit one model per tendon; the forest, gradient
boosting (vector-leaf stages) and the two networks predict all three
outputs natively.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import ensemble_models, kernel_models, linear_models, neural_models
from .dataset import Dataset
from .errors import EmptyInput, NonFiniteInput, UnknownHyperparameter
from .numerics import Scaler, scaler_fit

FAMILIES = (
    "random_forest", "gradient_boosting", "ridge", "lasso", "svr", "gpr", "bnn", "rnn",
)

DEFAULT_HYPERPARAMS: dict[str, dict[str, Any]] = {
    "random_forest": {"n_trees": 100, "max_depth": 12, "min_samples_leaf": 2},
    "gradient_boosting": {"n_stages": 200, "learning_rate": 0.05, "max_depth": 3,
                          "min_samples_leaf": 1},
    "ridge": {"lambda": 1e-3},
    "lasso": {"lambda": 0.01, "tol": 1e-6, "max_iter": 10000},
    "svr": {"C": 10.0, "epsilon": 0.01, "lengthscale": None, "tol": 1e-3, "max_iter": 100000},
    "gpr": {"jitter": 1e-8, "lengthscale": None, "lengthscale_factor": 1.0},
    "bnn": {"epochs": 100, "lr": 1e-2, "batch": 32, "hidden": 32, "kl_weight": 1e-6,
            "prior_std": 1.0, "init_log_std": -5.0, "mc_predict": 30, "lr_schedule": "cosine"},
    "rnn": {"epochs": 100, "lr": 1e-2, "hidden": 32, "bptt_len": 19, "batch": 4,
            "lr_schedule": "cosine"},
}

# value grids searched by ``tune`` (validation MAE, first best wins)
TUNING_GRIDS: dict[str, dict[str, list]] = {
    "ridge": {"lambda": [1e-3, 1e-2, 1e-1, 1.0, 10.0]},
    "lasso": {"lambda": [1e-3, 1e-2, 1e-1, 1.0, 10.0]},
    "gpr": {"lengthscale_factor": [0.5, 1.0, 2.0]},
}

PER_OUTPUT = frozenset({"ridge", "lasso", "svr", "gpr"})
IMPLICIT = frozenset({"bnn", "rnn"})

# families with float-or-None parameters
_OPTIONAL_FLOAT = {("svr", "lengthscale"), ("gpr", "lengthscale"), ("bnn", "kl_weight")}


def coerce_hyperparam(family: str, key: str, value):
    """Convert ``value`` (possibly a config string) to the type of the default."""
    if family not in DEFAULT_HYPERPARAMS:
        raise ValueError(f"unknown model family {family!r}")
    defaults = DEFAULT_HYPERPARAMS[family]
    if key not in defaults:
        raise UnknownHyperparameter(f"unknown hyperparameter {key!r} for {family}")
    default = defaults[key]
    if isinstance(value, str):
        v = value.strip()
        if (family, key) in _OPTIONAL_FLOAT and v.lower() in ("none", "null", ""):
            return None
        if isinstance(default, str):
            return v
        if isinstance(default, bool):
            return v.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int) and not isinstance(default, bool):
            return int(float(v))
        return float(v)
    if value is None:
        if (family, key) in _OPTIONAL_FLOAT:
            return None
        raise ValueError(f"{family}.{key} may not be None")
    if isinstance(default, str):
        return str(value)
    if isinstance(default, int) and not isinstance(default, bool):
        if float(value) != int(value):
            raise ValueError(f"{family}.{key} must be an integer, got {value}")
        return int(value)
    return float(value)


@dataclass(frozen=True)
class RegressorSpec:
    family: str
    hyperparams: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; choose from {FAMILIES}")
        checked = {k: coerce_hyperparam(self.family, k, v) for k, v in dict(self.hyperparams).items()}
        object.__setattr__(self, "hyperparams", checked)

    @property
    def params(self) -> dict[str, Any]:
        """Defaults overlaid with the explicit hyperparameters."""
        return {**DEFAULT_HYPERPARAMS[self.family], **self.hyperparams}

    def with_params(self, **kw) -> "RegressorSpec":
        return RegressorSpec(self.family, {**self.hyperparams, **kw}, self.seed)


@dataclass(frozen=True)
class MimoWrapper:
    """Three single-output models presented as one three-output predictor."""

    models: tuple

    def predict(self, X) -> np.ndarray:
        return np.column_stack([np.asarray(m.predict(X)).reshape(-1) for m in self.models])


@dataclass
class TrainedModel:
    family: str
    spec: RegressorSpec
    state: Any
    x_scaler: Scaler
    y_scaler: Scaler
    fit_seconds: float
    training_curve: list | None = None

    @property
    def implicit(self) -> bool:
        return self.family in IMPLICIT

    def predict(self, poses) -> np.ndarray:
        return predict(self, poses)


def _as_poses(poses) -> np.ndarray:
    P = np.asarray(poses, dtype=np.float64)
    if P.size == 0:
        return np.zeros((0, 2))
    P = P.reshape(-1, 2)
    if not np.all(np.isfinite(P)):
        raise NonFiniteInput("poses contain non-finite values")
    return P


def _fit_core(spec: RegressorSpec, X, Y, train: Dataset, val: Dataset | None, xs, ys):
    p = spec.params
    fam = spec.family
    if fam == "ridge":
        return linear_models.fit_ridge(X, Y, p["lambda"]), None
    if fam == "lasso":
        return linear_models.fit_lasso(X, Y, p["lambda"], p["tol"], p["max_iter"]), None
    if fam == "random_forest":
        return ensemble_models.fit_forest(
            X, Y, p["n_trees"], p["max_depth"], p["min_samples_leaf"], seed=spec.seed), None
    if fam == "gradient_boosting":
        return ensemble_models.fit_boosted(
            X, Y, p["n_stages"], p["learning_rate"], p["max_depth"], p["min_samples_leaf"],
            seed=spec.seed), None
    if fam == "svr":
        ls = p["lengthscale"] or kernel_models.median_lengthscale(X)
        kern = kernel_models.RbfKernel(ls, 1.0)
        return MimoWrapper(tuple(
            kernel_models.fit_svr(X, Y[:, i], p["C"], p["epsilon"], kern, p["tol"], p["max_iter"])
            for i in range(Y.shape[1]))), None
    if fam == "gpr":
        ls = (p["lengthscale"] or kernel_models.median_lengthscale(X)) * p["lengthscale_factor"]
        models = []
        for i in range(Y.shape[1]):
            var = float(np.var(Y[:, i]))
            kern = kernel_models.RbfKernel(ls, var if var > 0 else 1.0)
            models.append(kernel_models.fit_gpr(X, Y[:, i], kern, p["jitter"]))
        return MimoWrapper(tuple(models)), None
    has_val = val is not None and len(val) > 0
    if fam == "bnn":
        Xv = xs.transform(val.X) if has_val else None
        Yv = ys.transform(val.Y) if has_val else None
        m = neural_models.fit_bnn(
            X, Y, Xv, Yv, y_scale=ys.stds, epochs=p["epochs"], lr=p["lr"], batch=p["batch"],
            hidden=(p["hidden"], p["hidden"]), kl_weight=p["kl_weight"], prior_std=p["prior_std"],
            init_log_std=p["init_log_std"], mc_predict=p["mc_predict"],
            lr_schedule=p["lr_schedule"], seed=spec.seed)
        return m, m.curve
    if fam == "rnn":
        m = neural_models.fit_rnn(
            train.X, X, Y, train.replicates, train.meta,
            val.X if has_val else None, ys.transform(val.Y) if has_val else None,
            x_scaler=xs, y_scale=ys.stds, epochs=p["epochs"], lr=p["lr"], hidden=p["hidden"],
            bptt_len=p["bptt_len"], batch=p["batch"], lr_schedule=p["lr_schedule"], seed=spec.seed)
        return m, m.curve
    raise AssertionError(fam)


def fit(spec: RegressorSpec, train: Dataset, val: Dataset | None = None) -> TrainedModel:
    """Standardize, fit the family's core optimizer, and time that core alone."""
    if len(train) == 0:
        raise EmptyInput("training set is empty")
    X_raw, Y_raw = train.X, train.Y
    xs, ys = scaler_fit(X_raw), scaler_fit(Y_raw)
    X, Y = xs.transform(X_raw), ys.transform(Y_raw)
    t0 = time.perf_counter()
    state, curve = _fit_core(spec, X, Y, train, val, xs, ys)
    elapsed = time.perf_counter() - t0
    return TrainedModel(spec.family, spec, state, xs, ys, max(elapsed, 1e-9),
                        list(curve) if curve is not None else None)


def predict(model: TrainedModel, poses) -> np.ndarray:
    """Tendon predictions, one ``(l1, l2, l3)`` row per pose."""
    P = _as_poses(poses)
    if P.shape[0] == 0:
        return np.zeros((0, 3))
    if model.family == "rnn":
        Z = model.state.predict_raw(P)
    else:
        Z = model.state.predict(model.x_scaler.transform(P))
    return model.y_scaler.inverse(np.asarray(Z).reshape(P.shape[0], -1))


def predict_with_std(model: TrainedModel, poses):
    """Mean and predictive std in original units (GPR and BNN only)."""
    P = _as_poses(poses)
    Xs = model.x_scaler.transform(P)
    if model.family == "gpr":
        pairs = [kernel_models.gpr_predict_with_std(m, Xs) for m in model.state.models]
        mean = np.column_stack([p[0] for p in pairs])
        std = np.column_stack([p[1] for p in pairs])
    elif model.family == "bnn":
        mean, std = model.state.predict_with_std(Xs)
    else:
        raise ValueError(f"{model.family} has no predictive uncertainty")
    return model.y_scaler.inverse(mean), std * model.y_scaler.stds


def validation_mae(model: TrainedModel, val: Dataset) -> float:
    return float(np.mean(np.abs(predict(model, val.X) - val.Y)))


def tune(spec: RegressorSpec, train: Dataset, val: Dataset) -> RegressorSpec:
    """Pick the grid value with the lowest validation MAE (families without a grid pass through)."""
    grid = TUNING_GRIDS.get(spec.family)
    if not grid or val is None or len(val) == 0:
        return spec
    (key, values), = grid.items()
    best, best_mae = spec, math.inf
    for v in values:
        cand = spec.with_params(**{key: v})
        mae = validation_mae(fit(cand, train, val), val)
        if mae < best_mae:
            best, best_mae = cand, mae
    return best
