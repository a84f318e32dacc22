"""Neural regressors written directly in numpy.

* a dense tanh network with hand-written backpropagation,
* a mean-field Gaussian variational BNN trained by reparameterised sampling,
* an Elman recurrent network trained with full backpropagation through time.

Both trainers use Adam and record a per-epoch MAE curve in original target
units. All randomness comes from ``RngStream`` objects derived from the fit
seed, so a fit is bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitDiverged, MissingOrderingMetadata, NonFiniteLoss
from .numerics import RngStream, Scaler, stream_for

# ---------------------------------------------------------------------------
# Dense network core
# ---------------------------------------------------------------------------

Params = list  # [W1, b1, W2, b2, ...]; W has shape (fan_in, fan_out)


def init_dense(sizes, rng: RngStream) -> Params:
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        params.append(rng.gaussian((fan_in, fan_out)) / math.sqrt(fan_in))
        params.append(np.zeros(fan_out))
    return params


def net_forward(params: Params, X):
    """Forward pass; returns ``(outputs, activations)``.

    Hidden layers use tanh, the last layer is linear. ``activations[0]`` is
    the input and ``activations[k]`` the output of hidden layer ``k``.
    """
    h = np.asarray(X, dtype=np.float64)
    acts = [h]
    n_layers = len(params) // 2
    for k in range(n_layers):
        z = h @ params[2 * k] + params[2 * k + 1]
        if k < n_layers - 1:
            h = np.tanh(z)
            acts.append(h)
        else:
            h = z
    return h, acts


def net_backward(params: Params, acts, out, Y):
    """Loss ``sum |y - f|^2 / (2 B)`` and its gradient for every parameter.

    Raises:
        NonFiniteLoss: if the loss is not finite.
    """
    Y = np.asarray(Y, dtype=np.float64)
    B = Y.shape[0]
    diff = out - Y
    loss = 0.5 * float((diff ** 2).sum()) / B
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    grads = [None] * len(params)
    delta = diff / B
    n_layers = len(params) // 2
    for k in range(n_layers - 1, -1, -1):
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        delta = delta @ params[2 * k].T
        if k > 0:
            delta = delta * (1.0 - acts[k] ** 2)
    return loss, grads


def net_loss_and_grad(params: Params, X, Y):
    out, acts = net_forward(params, X)
    return net_backward(params, acts, out, Y)


class Adam:
    """Adam with bias correction over a list of parameter arrays (updated in place)."""

    def __init__(self, params, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def scheduled_lr(base: float, epoch: int, epochs: int, schedule: str) -> float:
    """Learning rate for a 1-based ``epoch``: constant, or cosine-annealed to zero."""
    if schedule == "constant":
        return base
    if schedule == "cosine":
        return base * 0.5 * (1.0 + math.cos(math.pi * (epoch - 1) / epochs))
    raise ValueError(f"unknown lr schedule {schedule!r}")


@dataclass(frozen=True)
class CurvePoint:
    epoch: int
    train_mae: float
    val_mae: float | None


TrainingCurve = list  # of CurvePoint


def _curve_mae(pred_std, Y_std, y_scale) -> float:
    return float(np.mean(np.abs((pred_std - Y_std) * y_scale)))


# ---------------------------------------------------------------------------
# Bayesian neural network (mean-field Gaussian VI)
# ---------------------------------------------------------------------------

def gaussian_kl(mu, log_std, prior_std: float = 1.0) -> float:
    """``KL(N(mu, exp(log_std)^2) || N(0, prior_std^2))`` summed over entries."""
    mu = np.asarray(mu, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    s2 = np.exp(2.0 * log_std)
    return float(np.sum(math.log(prior_std) - log_std + (s2 + mu ** 2) / (2.0 * prior_std ** 2) - 0.5))


def _kl_grads(mu, log_std, prior_std):
    return mu / prior_std ** 2, np.exp(2.0 * log_std) / prior_std ** 2 - 1.0


def bnn_loss_and_grad(mu: Params, log_std: Params, eps: Params, X, Y,
                      kl_weight: float, prior_std: float = 1.0):
    """Negative ELBO estimate for one reparameterised draw ``w = mu + exp(log_std) * eps``.

    Returns ``(loss, grad_mu, grad_log_std)``.
    """
    w = [m + np.exp(r) * e for m, r, e in zip(mu, log_std, eps)]
    data_loss, gw = net_loss_and_grad(w, X, Y)
    kl = sum(gaussian_kl(m, r, prior_std) for m, r in zip(mu, log_std))
    g_mu, g_rho = [], []
    for g, m, r, e in zip(gw, mu, log_std, eps):
        km, kr = _kl_grads(m, r, prior_std)
        g_mu.append(g + kl_weight * km)
        g_rho.append(g * e * np.exp(r) + kl_weight * kr)
    return data_loss + kl_weight * kl, g_mu, g_rho


@dataclass
class BnnModel:
    mu: Params
    log_std: Params
    prior_std: float
    kl_weight: float
    pred_eps: list            # fixed Monte-Carlo noise draws used at prediction
    curve: list = field(default_factory=list)

    def weight_samples(self):
        for eps in self.pred_eps:
            yield [m + np.exp(r) * e for m, r, e in zip(self.mu, self.log_std, eps)]

    def predict_samples(self, X) -> np.ndarray:
        """Network outputs for each stored weight draw, shape ``(S, n, k)``."""
        return np.stack([net_forward(w, X)[0] for w in self.weight_samples()])

    def predict(self, X) -> np.ndarray:
        return self.predict_samples(X).mean(axis=0)

    def predict_with_std(self, X):
        s = self.predict_samples(X)
        return s.mean(axis=0), s.std(axis=0)


def fit_bnn(
    X, Y, X_val=None, Y_val=None, *, y_scale=None, epochs: int = 100, lr: float = 1e-2,
    batch: int = 32, hidden=(32, 32), kl_weight: float | None = None, prior_std: float = 1.0,
    init_log_std: float = -5.0, mc_predict: int = 30, lr_schedule: str = "cosine", seed: int = 0,
) -> BnnModel:
    """Train a mean-field variational BNN on standardized data.

    One weight sample per minibatch step; the curve uses the Monte-Carlo
    mean over ``mc_predict`` fixed draws. ``y_scale`` converts standardized
    errors back to original units for the curve.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n, k = Y.shape
    y_scale = np.ones(k) if y_scale is None else np.asarray(y_scale)
    kw = 1.0 / n if kl_weight is None else float(kl_weight)
    sizes = [X.shape[1], *hidden, k]
    mu = init_dense(sizes, stream_for(seed, "bnn-init"))
    log_std = [np.full_like(m, init_log_std) for m in mu]
    noise = stream_for(seed, "bnn-noise")
    pred_rng = stream_for(seed, "bnn-predict")
    pred_eps = [[pred_rng.gaussian(m.shape) for m in mu] for _ in range(mc_predict)]
    model = BnnModel(mu, log_std, prior_std, kw, pred_eps)
    opt = Adam(mu + log_std, lr=lr)

    for epoch in range(1, epochs + 1):
        opt.lr = scheduled_lr(lr, epoch, epochs, lr_schedule)
        order = stream_for(seed, "bnn-shuffle", epoch).permutation(n)
        for start in range(0, n, batch):
            rows = order[start:start + batch]
            eps = [noise.gaussian(m.shape) for m in mu]
            try:
                _, g_mu, g_rho = bnn_loss_and_grad(mu, log_std, eps, X[rows], Y[rows], kw, prior_std)
            except NonFiniteLoss as exc:
                raise FitDiverged(f"bnn epoch {epoch}: {exc}") from None
            opt.step(g_mu + g_rho)
        train_mae = _curve_mae(model.predict(X), Y, y_scale)
        val_mae = _curve_mae(model.predict(X_val), Y_val, y_scale) if X_val is not None and len(X_val) else None
        if not math.isfinite(train_mae):
            raise FitDiverged(f"bnn epoch {epoch}: non-finite MAE")
        model.curve.append(CurvePoint(epoch, train_mae, val_mae))
    return model


# ---------------------------------------------------------------------------
# Elman recurrent network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceGrid:
    """Sweep geometry used to build canonical input sequences (in raw degrees)."""

    beta_min: float
    step: float
    alpha_min: float
    n_axis: int


def rnn_init(n_in: int, hidden: int, n_out: int, rng: RngStream) -> Params:
    """``[Wx, Wh, bh, Wo, bo]``."""
    return [
        rng.gaussian((n_in, hidden)) / math.sqrt(n_in),
        rng.gaussian((hidden, hidden)) / math.sqrt(hidden) * 0.5,
        np.zeros(hidden),
        rng.gaussian((hidden, n_out)) / math.sqrt(hidden),
        np.zeros(n_out),
    ]


def rnn_forward(params: Params, Xs):
    """Run the cell over a padded batch ``Xs`` of shape ``(B, T, n_in)``.

    Returns ``(outputs (B, T, n_out), hidden states (B, T + 1, H))`` with the
    state reset to zero at the start of every sequence.
    """
    Wx, Wh, bh, Wo, bo = params
    B, T, _ = Xs.shape
    H = np.zeros((B, T + 1, Wh.shape[0]))
    for t in range(T):
        H[:, t + 1] = np.tanh(Xs[:, t] @ Wx + H[:, t] @ Wh + bh)
    return H[:, 1:] @ Wo + bo, H


def rnn_loss_and_grad(params: Params, Xs, Ys, mask):
    """Masked ``sum |y - f|^2 / (2 * valid steps)`` and its BPTT gradient."""
    Wx, Wh, bh, Wo, bo = params
    out, H = rnn_forward(params, Xs)
    m = mask[..., None].astype(np.float64)
    count = float(mask.sum())
    diff = (out - Ys) * m
    loss = 0.5 * float((diff ** 2).sum()) / count
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    dout = diff / count
    B, T, _ = Xs.shape
    gWo = np.einsum("bth,bto->ho", H[:, 1:], dout)
    gbo = dout.sum(axis=(0, 1))
    gWx = np.zeros_like(Wx)
    gWh = np.zeros_like(Wh)
    gbh = np.zeros_like(bh)
    dh_next = np.zeros((B, Wh.shape[0]))
    for t in range(T - 1, -1, -1):
        dh = dout[:, t] @ Wo.T + dh_next
        dz = dh * (1.0 - H[:, t + 1] ** 2)
        gWx += Xs[:, t].T @ dz
        gWh += H[:, t].T @ dz
        gbh += dz.sum(axis=0)
        dh_next = dz @ Wh.T
    return loss, [gWx, gWh, gbh, gWo, gbo]


def _pad(seqs, width):
    B = len(seqs)
    T = max(len(s) for s in seqs)
    out = np.zeros((B, T, width))
    mask = np.zeros((B, T), dtype=bool)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
        mask[i, :len(s)] = True
    return out, mask


def grid_from_meta(meta: dict) -> SequenceGrid:
    grid = meta.get("grid") if meta else None
    if grid is None:
        raise MissingOrderingMetadata("dataset carries no grid spec; RNN sequences cannot be built")
    lo, hi, step = (float(v) for v in grid)
    return SequenceGrid(lo, step, lo, int(round((hi - lo) / step)) + 1)


def build_sequences(X_raw, replicates, grid: SequenceGrid, bptt_len: int):
    """Row-index sequences: fixed alpha row and replicate, beta ascending.

    Grid positions are recovered by rounding the recorded angles to the
    nearest sweep node. Sequences longer than ``bptt_len`` are cut into
    consecutive windows.
    """
    X_raw = np.asarray(X_raw, dtype=np.float64)
    ai = np.clip(np.rint((X_raw[:, 0] - grid.alpha_min) / grid.step), 0, grid.n_axis - 1).astype(int)
    bi = np.clip(np.rint((X_raw[:, 1] - grid.beta_min) / grid.step), 0, grid.n_axis - 1).astype(int)
    groups: dict = {}
    for row, key in enumerate(zip(np.asarray(replicates).tolist(), ai.tolist())):
        groups.setdefault(key, []).append(row)
    seqs = []
    for key in sorted(groups):
        rows = sorted(groups[key], key=lambda r: (bi[r], r))
        for s in range(0, len(rows), bptt_len):
            seqs.append(np.array(rows[s:s + bptt_len]))
    return seqs


@dataclass
class RnnModel:
    params: Params
    grid: SequenceGrid
    bptt_len: int
    x_scaler: Scaler          # raw degrees -> standardized inputs
    curve: list = field(default_factory=list)

    def context(self, pose_raw) -> np.ndarray:
        """Canonical input sequence ending at ``pose_raw``: the beta sweep leading up to it."""
        a, b = float(pose_raw[0]), float(pose_raw[1])
        steps = int(math.floor((b - self.grid.beta_min) / self.grid.step + 1e-9))
        steps = min(max(steps, 0), self.bptt_len - 1)
        betas = b - self.grid.step * np.arange(steps, -1, -1, dtype=np.float64)
        return np.column_stack([np.full(steps + 1, a), betas])

    def predict_raw(self, X_raw) -> np.ndarray:
        """Standardized outputs for raw-degree poses, each from its own canonical context."""
        X_raw = np.asarray(X_raw, dtype=np.float64).reshape(-1, 2)
        if X_raw.shape[0] == 0:
            return np.zeros((0, self.params[3].shape[1]))
        ctx = [self.x_scaler.transform(self.context(p)) for p in X_raw]
        Xs, mask = _pad(ctx, 2)
        out, _ = rnn_forward(self.params, Xs)
        last = mask.sum(axis=1) - 1
        return out[np.arange(len(ctx)), last]


def fit_rnn(
    X_raw, X, Y, replicates, meta: dict, X_val_raw=None, Y_val=None, *, x_scaler: Scaler, y_scale=None,
    epochs: int = 100, lr: float = 1e-2, hidden: int = 32, bptt_len: int = 19,
    batch: int = 4, lr_schedule: str = "cosine", seed: int = 0,
) -> RnnModel:
    """Train an Elman network on beta-sweep sequences at fixed alpha.

    ``X_raw`` holds the recorded angles in degrees (used for ordering),
    ``X``/``Y`` the standardized inputs and targets, ``x_scaler`` the input
    scaler applied to canonical prediction contexts.

    Raises:
        MissingOrderingMetadata: ``meta`` carries no grid spec.
    """
    grid = grid_from_meta(meta)
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    k = Y.shape[1]
    y_scale = np.ones(k) if y_scale is None else np.asarray(y_scale)
    seqs = build_sequences(X_raw, replicates, grid, bptt_len)
    params = rnn_init(X.shape[1], hidden, k, stream_for(seed, "rnn-init"))
    model = RnnModel(params, grid, bptt_len, x_scaler)
    opt = Adam(params, lr=lr)
    for epoch in range(1, epochs + 1):
        opt.lr = scheduled_lr(lr, epoch, epochs, lr_schedule)
        order = stream_for(seed, "rnn-shuffle", epoch).permutation(len(seqs))
        for start in range(0, len(seqs), batch):
            chosen = [seqs[i] for i in order[start:start + batch]]
            Xs, mask = _pad([X[s] for s in chosen], X.shape[1])
            Ys, _ = _pad([Y[s] for s in chosen], k)
            try:
                _, grads = rnn_loss_and_grad(params, Xs, Ys, mask)
            except NonFiniteLoss as exc:
                raise FitDiverged(f"rnn epoch {epoch}: {exc}") from None
            opt.step(grads)
        train_mae = _curve_mae(model.predict_raw(X_raw), Y, y_scale)
        val_mae = None
        if X_val_raw is not None and len(X_val_raw):
            val_mae = _curve_mae(model.predict_raw(X_val_raw), Y_val, y_scale)
        if not math.isfinite(train_mae):
            raise FitDiverged(f"rnn epoch {epoch}: non-finite MAE")
        model.curve.append(CurvePoint(epoch, train_mae, val_mae))
    return model
