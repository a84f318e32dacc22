"""Regularised linear regressors: ridge (closed form) and lasso (coordinate descent)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import MaxIterExceeded
from .numerics import as_matrix, cholesky_solve, soft_threshold


@dataclass(frozen=True)
class LinearModel:
    """``weights[i] = [intercept_i, w_i1, ..., w_id]`` for output ``i``."""

    weights: np.ndarray
    lam: float
    objective_trace: tuple = field(default=(), compare=False)
    converged: bool = True

    @property
    def intercept(self) -> np.ndarray:
        return self.weights[:, 0]

    @property
    def coef(self) -> np.ndarray:
        return self.weights[:, 1:]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return X @ self.coef.T + self.intercept


def _center(X, Y):
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    return X - xm, Y - ym, xm, ym


def ridge_objective(X, Y, weights, lam) -> float:
    """``||Y - X W - b||^2 + lam * ||W||^2`` summed over outputs."""
    X, Y = as_matrix(X), as_matrix(Y)
    R = Y - X @ weights[:, 1:].T - weights[:, 0]
    return float((R ** 2).sum() + lam * (weights[:, 1:] ** 2).sum())


def fit_ridge(X, Y, lam: float = 1e-3) -> LinearModel:
    """Closed-form ridge; the intercept is left unpenalised by centering."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    Xc, Yc, xm, ym = _center(X, Y)
    d = Xc.shape[1]
    W = cholesky_solve(Xc.T @ Xc + lam * np.eye(d), Xc.T @ Yc)  # (d, k)
    b = ym - xm @ W
    return LinearModel(np.column_stack([b, W.T]), float(lam))


def lasso_objective(X, y, w, b, lam) -> float:
    r = y - X @ w - b
    return float(0.5 * r @ r + lam * np.abs(w).sum())


def _lasso_single(Xc, yc, lam, tol, max_iter):
    n, d = Xc.shape
    col_sq = np.einsum("ij,ij->j", Xc, Xc)
    w = np.zeros(d)
    r = yc.copy()
    trace = [lasso_objective(Xc, yc, w, 0.0, lam)]
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            old = w[j]
            rho = Xc[:, j] @ r + col_sq[j] * old
            new = soft_threshold(rho, lam) / col_sq[j]
            if new != old:
                r -= Xc[:, j] * (new - old)
                w[j] = new
                max_delta = max(max_delta, abs(new - old))
        trace.append(lasso_objective(Xc, yc, w, 0.0, lam))
        if max_delta < tol:
            return w, trace, True
    return w, trace, False


def fit_lasso(X, Y, lam: float = 0.01, tol: float = 1e-6, max_iter: int = 10000) -> LinearModel:
    """Cyclic coordinate descent on ``0.5 ||y - Xw - b||^2 + lam ||w||_1`` per output.

    Stops when the largest coefficient change of a full sweep drops below
    ``tol``. Hitting ``max_iter`` emits a ``MaxIterExceeded`` warning but the
    model is still returned.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    Xc, Yc, xm, ym = _center(X, Y)
    k = Yc.shape[1]
    W = np.zeros((k, Xc.shape[1]))
    traces = []
    converged = True
    for i in range(k):
        W[i], trace, ok = _lasso_single(Xc, Yc[:, i], lam, tol, max_iter)
        traces.append(tuple(trace))
        if not ok:
            converged = False
            warnings.warn(
                f"lasso output {i}: {max_iter} sweeps without convergence, "
                f"final objective {trace[-1]:.6g}",
                MaxIterExceeded,
                stacklevel=2,
            )
    b = ym - W @ xm
    return LinearModel(np.column_stack([b, W]), float(lam), tuple(traces), converged)
