"""Polynomial transfer functions distilled from trained models.

A model is probed on a dense pose grid and a degree-1 or degree-2
polynomial in (alpha, beta) is least-squares fitted to its predictions,
giving explicit equations ``L_i = w_i0 + w_i1 a + w_i2 b + ...`` in raw
angle units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import generate_grid
from .errors import NonFiniteInput
from .model_api import TrainedModel, predict
from .numerics import least_squares
from .plant import TendonDelta, analytical_inverse_array

OUTPUT_NAMES = ("L1", "L2", "L3")
_TERMS = ("", "a", "b", "a^2", "a*b", "b^2")


@dataclass(frozen=True)
class PolyBasis:
    """Monomials ``[1, a, b]`` (degree 1) or ``[1, a, b, a^2, a*b, b^2]`` (degree 2)."""

    degree: int = 2

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")

    @property
    def n_features(self) -> int:
        return 3 if self.degree == 1 else 6


def poly_features_array(poses, basis: PolyBasis) -> np.ndarray:
    P = np.asarray(poses, dtype=np.float64).reshape(-1, 2)
    a, b = P[:, 0], P[:, 1]
    cols = [np.ones_like(a), a, b]
    if basis.degree == 2:
        cols += [a * a, a * b, b * b]
    return np.column_stack(cols)


def poly_features(pose, basis: PolyBasis) -> np.ndarray:
    return poly_features_array([pose], basis)[0]


@dataclass(frozen=True)
class TransferFunction:
    W: np.ndarray                 # (3, n_features), raw angle units
    basis: PolyBasis
    source: str
    residual_rms: float = 0.0
    surrogate_of_implicit_model: bool = False

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.shape != (3, self.basis.n_features):
            raise ValueError(f"W must have shape (3, {self.basis.n_features}), got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise NonFiniteInput("transfer function has non-finite coefficients")
        object.__setattr__(self, "W", W)

    def __call__(self, poses) -> np.ndarray:
        return eval_tf_array(self, poses)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "degree": self.basis.degree,
            "outputs": [{"name": n, "coefficients": [float(c) for c in row]}
                        for n, row in zip(OUTPUT_NAMES, self.W)],
            "residual_rms": float(self.residual_rms),
            "surrogate_of_implicit_model": bool(self.surrogate_of_implicit_model),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransferFunction":
        rows = {o["name"]: o["coefficients"] for o in d["outputs"]}
        W = np.array([rows[n] for n in OUTPUT_NAMES], dtype=np.float64)
        return cls(W, PolyBasis(int(d["degree"])), str(d["source"]),
                   float(d.get("residual_rms", 0.0)),
                   bool(d.get("surrogate_of_implicit_model", False)))


def probe_grid(min_deg: float = -90.0, max_deg: float = 90.0, step: float = 5.0) -> np.ndarray:
    """Default distillation probe: 37 x 37 poses on [-90, 90] at 5 degree spacing."""
    return np.array(generate_grid(min_deg, max_deg, step), dtype=np.float64)


def distill_model(
    model: TrainedModel | str | Callable,
    basis: PolyBasis | None = None,
    probe=None,
    source: str | None = None,
) -> TransferFunction:
    """Least-squares polynomial fit to a model's predictions on the probe grid.

    ``model`` is a ``TrainedModel``, the string ``"analytical"`` for the
    decoupled baseline, or any callable mapping an ``(n, 2)`` pose array to
    ``(n, 3)`` tendon values.
    """
    basis = basis or PolyBasis(2)
    P = probe_grid() if probe is None else np.asarray(probe, dtype=np.float64).reshape(-1, 2)
    implicit = False
    if isinstance(model, TrainedModel):
        Y = predict(model, P)
        name = model.family
        implicit = model.implicit
    elif isinstance(model, str):
        if model != "analytical":
            raise ValueError(f"unknown baseline {model!r}")
        Y = analytical_inverse_array(P)
        name = "analytical"
    else:
        Y = np.asarray(model(P), dtype=np.float64).reshape(P.shape[0], 3)
        name = getattr(model, "source", None) or getattr(model, "__name__", "callable")
    Phi = poly_features_array(P, basis)
    W = least_squares(Phi, Y)                      # (n_features, 3)
    rms = float(np.sqrt(np.mean((Phi @ W - Y) ** 2)))
    return TransferFunction(W.T, basis, source or name, rms, implicit)


def eval_tf_array(tf: TransferFunction, poses) -> np.ndarray:
    return poly_features_array(poses, tf.basis) @ tf.W.T


def eval_tf(tf: TransferFunction, pose) -> TendonDelta:
    return TendonDelta(*(float(v) for v in eval_tf_array(tf, [pose])[0]))


def _fmt(c: float) -> str:
    s = f"{c:.4f}"
    return "0.0000" if s == "-0.0000" else s


def render_equations(tf: TransferFunction) -> str:
    """One line per output, e.g. ``L1 = 1.0197 + (0.1833) a + (-0.0700) b + ...``."""
    lines = []
    for name, row in zip(OUTPUT_NAMES, tf.W):
        terms = [f"({_fmt(c)}) {t}" for c, t in zip(row[1:], _TERMS[1:])]
        lines.append(f"{name} = {_fmt(row[0])} + " + " + ".join(terms))
    return "\n".join(lines) + "\n"


def write_tf(tf: TransferFunction, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` and the rendered ``<path>.txt``."""
    path = Path(path)
    jpath, tpath = path.with_suffix(".json"), path.with_suffix(".txt")
    jpath.parent.mkdir(parents=True, exist_ok=True)
    jpath.write_text(json.dumps(tf.to_dict(), indent=2) + "\n", encoding="utf-8")
    tpath.write_text(render_equations(tf), encoding="utf-8")
    return jpath, tpath


def read_tf(path) -> TransferFunction:
    return TransferFunction.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
