"""Dense linear algebra, seeded randomness and feature scaling.

Matrices are plain 2-D ``float64`` numpy arrays. Every model module goes
through the helpers here so that jitter policy, error types and random
stream derivation are uniform across the toolkit.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import EmptyInput, NonFiniteInput, NotPositiveDefinite, RankDeficient

__all__ = [
    "as_matrix",
    "cholesky",
    "cho_solve_factor",
    "cholesky_solve",
    "least_squares",
    "soft_threshold",
    "Scaler",
    "scaler_fit",
    "scaler_transform",
    "scaler_inverse",
    "RngStream",
    "rng_next_uniform",
    "rng_next_gaussian",
    "derive_stream_id",
    "stream_for",
]

STD_FLOOR = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array (1-D input becomes a column)."""
    m = np.array(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput(f"{name} contains non-finite entries")
    return m


# ---------------------------------------------------------------------------
# Cholesky / least squares
# ---------------------------------------------------------------------------

def cholesky(A) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises:
        NotPositiveDefinite: if a pivot is not strictly positive.
    """
    A = as_matrix(A, "A")
    n, m = A.shape
    if n != m:
        raise ValueError(f"A must be square, got {A.shape}")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > 1e-9 * scale:
        raise ValueError("A is not symmetric within 1e-9")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(L) > 0):
        raise NotPositiveDefinite("non-positive pivot")
    return L


def cho_solve_factor(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L.T, y, lower=False, check_finite=False)


def cholesky_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    ``b`` may be a vector or a matrix of right-hand sides; the result has the
    same shape as ``b``.
    """
    b_arr = np.asarray(b, dtype=np.float64)
    L = cholesky(A)
    B = as_matrix(b_arr, "b")
    if B.shape[0] != L.shape[0]:
        raise ValueError(f"b has {B.shape[0]} rows, A is {L.shape[0]}x{L.shape[0]}")
    x = cho_solve_factor(L, B)
    return x.reshape(b_arr.shape)


def least_squares(X, Y) -> np.ndarray:
    """Minimise ``||X W - Y||_F`` through the normal equations.

    Columns are equilibrated to unit norm before forming ``X^T X`` so the
    relative jitter (``1e-10 * trace / cols``) stays harmless for raw
    polynomial features; one refinement step against the unjittered Gram
    matrix removes the jitter bias.

    Raises:
        RankDeficient: smallest Cholesky pivot below ``1e-12`` of the largest,
            or fewer rows than columns.
    """
    X = as_matrix(X, "X")
    y_arr = np.asarray(Y, dtype=np.float64)
    Ym = as_matrix(y_arr, "Y")
    n, d = X.shape
    if Ym.shape[0] != n:
        raise ValueError(f"X has {n} rows but Y has {Ym.shape[0]}")
    if n < d:
        raise RankDeficient(f"{n} rows for {d} columns")

    norms = np.sqrt(np.einsum("ij,ij->j", X, X))
    if np.any(norms == 0.0):
        raise RankDeficient("zero column in X")
    Xs = X / norms
    G = Xs.T @ Xs
    try:
        L0 = np.linalg.cholesky(G)
        pivots = np.diag(L0) ** 2
    except np.linalg.LinAlgError:
        raise RankDeficient("Gram matrix is singular") from None
    if pivots.min() < 1e-12 * pivots.max():
        raise RankDeficient(f"pivot ratio {pivots.min() / pivots.max():.2e}")

    jitter = 1e-10 * np.trace(G) / d
    L = cholesky(G + jitter * np.eye(d))
    rhs = Xs.T @ Ym
    Ws = cho_solve_factor(L, rhs)
    Ws = Ws + cho_solve_factor(L, rhs - G @ Ws)
    W = Ws / norms[:, None]
    return W.reshape((d,) + y_arr.shape[1:]) if y_arr.ndim == 1 else W


def soft_threshold(v, t):
    """``sign(v) * max(|v| - t, 0)``; works on scalars and arrays."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    means: np.ndarray
    stds: np.ndarray

    def transform(self, X) -> np.ndarray:
        return scaler_transform(self, X)

    def inverse(self, Z) -> np.ndarray:
        return scaler_inverse(self, Z)


def scaler_fit(X) -> Scaler:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise EmptyInput("scaler needs at least 2 rows")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.maximum(stds, STD_FLOOR)
    means.flags.writeable = False
    stds.flags.writeable = False
    return Scaler(means, stds)


def scaler_transform(s: Scaler, X) -> np.ndarray:
    return (np.asarray(X, dtype=np.float64) - s.means) / s.stds


def scaler_inverse(s: Scaler, Z) -> np.ndarray:
    return np.asarray(Z, dtype=np.float64) * s.stds + s.means


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

def derive_stream_id(master_seed: int, stage: str, *task_index: int) -> int:
    """Stream id = blake2b(master_seed, stage, task indices) truncated to 64 bits."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", int(master_seed) & 0xFFFFFFFFFFFFFFFF))
    h.update(stage.encode("utf-8"))
    for i in task_index:
        h.update(struct.pack("<q", int(i)))
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Counter-based random stream keyed on ``(seed, stream_id)``.

    Backed by numpy's Philox generator, whose 128-bit key is exactly the
    ``(seed, stream_id)`` pair, so draws depend only on the key and the call
    index. Gaussians use Box-Muller; the second variate of each pair is kept
    for the next scalar call.

    A stream has a single owner; do not share one across threads.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        )
        self._spare: float | None = None

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def uniform(self, size=None):
        """Uniform draws in [0, 1)."""
        return self._gen.random(size)

    def gaussian(self, size=None):
        """Standard normal draws via Box-Muller."""
        if size is None:
            if self._spare is not None:
                z, self._spare = self._spare, None
                return z
            u1, u2 = self._gen.random(2)
            r = math.sqrt(-2.0 * math.log1p(-u1))
            self._spare = r * math.sin(2.0 * math.pi * u2)
            return r * math.cos(2.0 * math.pi * u2)
        count = int(np.prod(size))
        half = (count + 1) // 2
        u = self._gen.random((2, half))
        r = np.sqrt(-2.0 * np.log1p(-u[0]))
        theta = 2.0 * np.pi * u[1]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:count]
        return z.reshape(size)

    def integers(self, high: int, size=None):
        """Uniform integers in [0, high)."""
        return self._gen.integers(0, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def rng_next_uniform(stream: RngStream) -> float:
    return float(stream.uniform())


def rng_next_gaussian(stream: RngStream) -> float:
    return float(stream.gaussian())


def stream_for(master_seed: int, stage: str, *task_index: int) -> RngStream:
    """Convenience: the stream for ``(master_seed, stage, task_index...)``."""
    return RngStream(master_seed, derive_stream_id(master_seed, stage, *task_index))
