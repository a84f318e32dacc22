"""RBF-kernel regressors: epsilon-SVR trained by SMO, and Gaussian process regression."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist, pdist

from .errors import MaxIterExceeded, NotPositiveDefinite
from .numerics import as_matrix, cho_solve_factor, cholesky


@dataclass(frozen=True)
class RbfKernel:
    """``k(x, x') = signal_var * exp(-|x - x'|^2 / (2 lengthscale^2))``."""

    lengthscale: float
    signal_var: float = 1.0

    def __post_init__(self):
        if not self.lengthscale > 0 or not self.signal_var > 0:
            raise ValueError("lengthscale and signal_var must be positive")

    def __call__(self, A, B) -> np.ndarray:
        d2 = cdist(np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64), "sqeuclidean")
        return self.signal_var * np.exp(-0.5 * d2 / self.lengthscale ** 2)


def median_lengthscale(X) -> float:
    """Median pairwise distance between rows of ``X`` (1.0 if degenerate)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(X)))
    return med if med > 0 else 1.0


# ---------------------------------------------------------------------------
# epsilon-SVR
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SvrModel:
    coef: np.ndarray          # alpha - alpha* for each retained training point
    support: np.ndarray       # training inputs with nonzero coef
    bias: float
    C: float
    epsilon: float
    kernel: RbfKernel
    n_iter: int
    violation: float
    dual_objective: float
    dual_trace: tuple = ()

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.support.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        return self.kernel(X, self.support) @ self.coef + self.bias


def svr_dual_objective(K, y, coef, epsilon) -> float:
    """``-0.5 b'Kb + y'b - eps |b|_1`` for ``b = alpha - alpha*``."""
    return float(-0.5 * coef @ K @ coef + y @ coef - epsilon * np.abs(coef).sum())


def fit_svr(
    X, y, C: float = 10.0, epsilon: float = 0.5, kernel: RbfKernel | None = None,
    tol: float = 1e-3, max_iter: int = 100_000, record: bool = False,
) -> SvrModel:
    """Epsilon-insensitive SVR solved by pairwise SMO.

    Works on the stacked variables ``a = [alpha, alpha*]`` with labels
    ``+1/-1``, minimising ``0.5 a'Qa + p'a`` under ``sum(label * a) = 0`` and
    ``0 <= a <= C``. Each step takes the maximal violating index and picks its
    partner by second-order gain; iteration stops when the KKT gap
    ``m - M`` falls below ``tol``. The bias averages ``-label * grad`` over
    free variables, falling back to the midpoint of ``[M, m]``.
    """
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = X.shape[0]
    if y.shape[0] != n:
        raise ValueError("X and y lengths differ")
    if C <= 0 or epsilon < 0:
        raise ValueError("need C > 0 and epsilon >= 0")
    kernel = kernel or RbfKernel(median_lengthscale(X))
    K = kernel(X, X)
    Kdiag = np.diag(K).copy()

    lab = np.concatenate([np.ones(n), -np.ones(n)])
    a = np.zeros(2 * n)
    p = np.concatenate([epsilon - y, epsilon + y])
    G = p.copy()
    tau = 1e-12
    idx = np.arange(2 * n) % n
    trace = []
    it = 0
    gap = np.inf
    while True:
        up = np.where(lab > 0, a < C, a > 0)
        low = np.where(lab > 0, a > 0, a < C)
        score = -lab * G
        s_up = np.where(up, score, -np.inf)
        s_low = np.where(low, score, np.inf)
        i = int(np.argmax(s_up))
        m = s_up[i]
        M = float(s_low.min())
        gap = m - M
        if record:
            trace.append(-0.5 * a @ (G + p))
        if gap < tol or it >= max_iter:
            break
        ii = i % n
        # second-order partner among violating low-set members
        b = m - s_low
        eta = Kdiag[ii] + Kdiag[idx] - 2.0 * K[ii, idx]
        eta = np.where(eta > tau, eta, tau)
        cand = np.where(b > 0, -(b * b) / eta, np.inf)
        j = int(np.argmin(cand))
        jj = j % n
        step = b[j] / eta[j]
        lim_i = C - a[i] if lab[i] > 0 else a[i]
        lim_j = a[j] if lab[j] > 0 else C - a[j]
        step = min(step, lim_i, lim_j)
        a[i] += lab[i] * step
        a[j] -= lab[j] * step
        # snap to the box to avoid drift
        a[i] = min(max(a[i], 0.0), C)
        a[j] = min(max(a[j], 0.0), C)
        delta = step * (K[:, ii] - K[:, jj])
        G[:n] += delta
        G[n:] -= delta
        it += 1

    if it >= max_iter and gap >= tol:
        warnings.warn(f"SVR SMO stopped at {max_iter} iterations, KKT gap {gap:.3e}",
                      MaxIterExceeded, stacklevel=2)

    free = (a > 1e-12) & (a < C - 1e-12)
    if free.any():
        bias = float(np.mean(-lab[free] * G[free]))
    else:
        bias = 0.5 * (m + M)
    coef = a[:n] - a[n:]
    keep = coef != 0.0
    dual = float(-0.5 * a @ (G + p))
    return SvrModel(coef[keep], X[keep], bias, float(C), float(epsilon), kernel,
                    it, float(gap), dual, tuple(trace))


# ---------------------------------------------------------------------------
# Gaussian process regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GprModel:
    X: np.ndarray
    kernel: RbfKernel
    jitter: float
    chol: np.ndarray          # lower factor of K + jitter I
    weights: np.ndarray       # (K + jitter I)^-1 y

    def predict(self, X) -> np.ndarray:
        return self.kernel(np.asarray(X, dtype=np.float64), self.X) @ self.weights

    def predict_with_std(self, X):
        return gpr_predict_with_std(self, X)


def fit_gpr(X, y, kernel: RbfKernel | None = None, jitter: float = 1e-8,
            max_jitter: float = 1e-4) -> GprModel:
    """Zero-mean GP posterior with an RBF kernel.

    Without an explicit kernel the lengthscale is the median pairwise input
    distance and the signal variance is the target variance. If the Gram
    matrix will not factorise the jitter is raised tenfold, up to
    ``max_jitter``.
    """
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=np.float64)
    if kernel is None:
        var = float(np.var(y)) if y.size > 1 else 1.0
        kernel = RbfKernel(median_lengthscale(X), var if var > 0 else 1.0)
    if not jitter > 0 or not max_jitter >= jitter:
        raise ValueError("need 0 < jitter <= max_jitter")
    K = kernel(X, X)
    jit = float(jitter)
    while True:
        try:
            L = cholesky(K + jit * np.eye(X.shape[0]))
            break
        except NotPositiveDefinite:
            jit *= 10.0
            if jit > max_jitter * (1 + 1e-9):
                raise NotPositiveDefinite(
                    f"Gram matrix not positive definite with jitter up to {max_jitter:g}"
                ) from None
    return GprModel(X, kernel, jit, L, cho_solve_factor(L, y))


def gpr_predict_with_std(m: GprModel, X):
    """Posterior mean and standard deviation at the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    Ks = m.kernel(X, m.X)
    mean = Ks @ m.weights
    v = solve_triangular(m.chol, Ks.T, lower=True, check_finite=False)
    var = m.kernel.signal_var - np.einsum("ij,ij->j", v, v)
    return mean, np.sqrt(np.maximum(var, 0.0))
