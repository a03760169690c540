"""From-scratch differentiable 1-D CNN for binary presence detection.

Architecture (input is a 2xM matrix of I/Q rows):

    conv 10 filters, kernel 30, same padding -> ReLU -> batchnorm
        -> maxpool 2 -> dropout 0.3
    conv 100 filters, kernel 30, same padding -> ReLU -> batchnorm
        -> maxpool 2 -> dropout 0.3
    global average pool -> dense 20 -> ReLU -> dropout 0.5
        -> dense 1 -> sigmoid

Training minimizes binary cross entropy with Adam.  ``backward`` computes
exact reverse-mode gradients, verified coordinate by coordinate against
central finite differences (see gradcheck.py).  Convolutions run as one
BLAS GEMM per layer over a strided im2col view, which is what makes pure
numpy training viable.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit
from threadpoolctl import threadpool_limits

from . import fastops
from .errors import EmptyDataset, InvalidLength, ShapeMismatch

CONV1_FILTERS = 10
CONV2_FILTERS = 100
KERNEL = 30
DENSE_UNITS = 20
DROP_CONV = 0.3
DROP_DENSE = 0.5
BCE_EPS = 1e-7

RUNNING_KEYS = ("bn1_mean", "bn1_var", "bn2_mean", "bn2_var")
WEIGHT_KEYS = (
    "conv1_w", "conv1_b", "bn1_gamma", "bn1_beta", "bn1_mean", "bn1_var",
    "conv2_w", "conv2_b", "bn2_gamma", "bn2_beta", "bn2_mean", "bn2_var",
    "dense1_w", "dense1_b", "out_w", "out_b",
)
LEARNABLE_KEYS = tuple(k for k in WEIGHT_KEYS if k not in RUNNING_KEYS)


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 3
    min_delta: float = 1e-4
    bn_momentum: float = 0.99
    bn_eps: float = 1e-12
    # input conditioning.  Received windows span ~60 dB of raw power
    # across devices; with heterogeneous example scales, batch-norm
    # discriminates fine in train mode but its frozen running statistics
    # match no individual device at inference time, where the fixed biases
    # then swamp the rescaled features and accuracy collapses to chance.
    # "rms" divides every example by its own root-mean-square amplitude so
    # the network sees a common scale and detects structure; input_scale
    # applies a fixed unit change beforehand (reciprocal noise-floor
    # amplitude when driven from a simulation config).
    input_scale: float = 1.0
    input_norm: str = "none"  # "none" or "rms"


@dataclass
class ModelWeights:
    """All tensors of the edge model, learnable and batch-norm running stats."""

    tensors: dict[str, np.ndarray]

    def copy(self) -> "ModelWeights":
        return ModelWeights({k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ModelWeights":
        return ModelWeights({k: v.astype(dtype) for k, v in self.tensors.items()})

    def param_count(self) -> int:
        return int(sum(self.tensors[k].size for k in LEARNABLE_KEYS))


@dataclass
class TrainReport:
    epochs_run: int
    final_loss: float
    stopped_early: bool
    train_accuracy: float


def init_model(m: int, rng: np.random.Generator, dtype=np.float32) -> ModelWeights:
    """He-initialized weights; biases zero; batch norm at identity."""
    if m < 4:
        raise InvalidLength(f"need m >= 4 for two stride-2 pools, got {m}")

    def he(shape, fan_in):
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)

    t = {
        "conv1_w": he((CONV1_FILTERS, 2, KERNEL), 2 * KERNEL),
        "conv1_b": np.zeros(CONV1_FILTERS, dtype=dtype),
        "bn1_gamma": np.ones(CONV1_FILTERS, dtype=dtype),
        "bn1_beta": np.zeros(CONV1_FILTERS, dtype=dtype),
        "bn1_mean": np.zeros(CONV1_FILTERS, dtype=dtype),
        "bn1_var": np.ones(CONV1_FILTERS, dtype=dtype),
        "conv2_w": he((CONV2_FILTERS, CONV1_FILTERS, KERNEL), CONV1_FILTERS * KERNEL),
        "conv2_b": np.zeros(CONV2_FILTERS, dtype=dtype),
        "bn2_gamma": np.ones(CONV2_FILTERS, dtype=dtype),
        "bn2_beta": np.zeros(CONV2_FILTERS, dtype=dtype),
        "bn2_mean": np.zeros(CONV2_FILTERS, dtype=dtype),
        "bn2_var": np.ones(CONV2_FILTERS, dtype=dtype),
        "dense1_w": he((CONV2_FILTERS, DENSE_UNITS), CONV2_FILTERS),
        "dense1_b": np.zeros(DENSE_UNITS, dtype=dtype),
        "out_w": he((DENSE_UNITS, 1), DENSE_UNITS),
        "out_b": np.zeros(1, dtype=dtype),
    }
    return ModelWeights(t)


# ---------------------------------------------------------------------------
# layer primitives
# ---------------------------------------------------------------------------

def conv1d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Stride-1 same-padded conv; returns (out, im2col matrix for backward)."""
    n, c_in, length = x.shape
    c_out, c_in_w, k = w.shape
    if c_in_w != c_in:
        raise ShapeMismatch(f"conv expects {c_in_w} input channels, got {c_in}")
    pad_l = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad_l, k - 1 - pad_l)))
    if fastops.HAVE_NUMBA:
        cols = np.empty((n * length, c_in * k), dtype=x.dtype)
        fastops.im2col(xp, k, cols)
    else:
        win = sliding_window_view(xp, k, axis=2)          # (n, c_in, length, k)
        cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(
            n * length, c_in * k
        )
    out2 = cols @ w.reshape(c_out, c_in * k).T
    out2 += b
    # numpy's blocked transpose-copy beats a naive strided-write loop here
    out = np.ascontiguousarray(out2.reshape(n, length, c_out).transpose(0, 2, 1))
    return out, cols


def conv1d_same_backward(dout, cols, w, x_shape, need_dx=True):
    n, c_in, length = x_shape
    c_out, _, k = w.shape
    if fastops.HAVE_NUMBA:
        dout2 = np.empty((n * length, c_out), dtype=dout.dtype)
        fastops.ncl_to_nlc(dout, dout2)
    else:
        dout2 = np.ascontiguousarray(dout.transpose(0, 2, 1)).reshape(
            n * length, c_out
        )
    dw = (dout2.T @ cols).reshape(c_out, c_in, k)
    db = dout2.sum(axis=0)
    if not need_dx:
        return dw, db, None
    dcols = (dout2 @ w.reshape(c_out, c_in * k)).reshape(n, length, c_in, k)
    pad_l = (k - 1) // 2
    if fastops.HAVE_NUMBA:
        dx = np.empty((n, c_in, length), dtype=dout.dtype)
        fastops.fold_columns(dcols, pad_l, length, dx)
        return dw, db, dx
    # accumulate in (n, padded length, c_in) layout so every tap is a
    # contiguous slab, then transpose once
    dxp = np.zeros((n, length + k - 1, c_in), dtype=dout.dtype)
    for tap in range(k):
        dxp[:, tap:tap + length, :] += dcols[:, :, :, tap]
    return dw, db, np.ascontiguousarray(
        dxp[:, pad_l:pad_l + length, :].transpose(0, 2, 1)
    )


def batchnorm_apply(a, gamma, beta, mean, var, eps):
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (a - mean[:, None]) * inv_std[:, None]
    return gamma[:, None] * xhat + beta[:, None], xhat, inv_std


def batchnorm_backward(dout, xhat, inv_std, gamma, batch_stats):
    """Gradient through batch norm; exact when the stats came from the batch."""
    dgamma = (dout * xhat).sum(axis=(0, 2))
    dbeta = dout.sum(axis=(0, 2))
    dxhat = dout * gamma[:, None]
    if not batch_stats:
        return dxhat * inv_std[:, None], dgamma, dbeta
    m = dout.shape[0] * dout.shape[2]
    s1 = dxhat.sum(axis=(0, 2), keepdims=True)
    s2 = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
    da = inv_std[:, None] * (dxhat - s1 / m - xhat * s2 / m)
    return da, dgamma, dbeta


def maxpool2(a):
    """Halving max pool; ties keep the left element, odd tails are dropped."""
    n, c, length = a.shape
    l2 = length // 2
    left = a[:, :, 0:2 * l2:2]
    right = a[:, :, 1:2 * l2:2]
    take_left = left >= right
    out = np.where(take_left, left, right)
    return out, take_left


def maxpool2_backward(dout, take_left, length):
    n, c, l2 = dout.shape
    da = np.zeros((n, c, length), dtype=dout.dtype)
    da[:, :, 0:2 * l2:2] = np.where(take_left, dout, 0)
    da[:, :, 1:2 * l2:2] = np.where(take_left, 0, dout)
    return da


def pooled_lengths(m: int) -> tuple[int, int]:
    return m // 2, (m // 2) // 2


def draw_dropout_masks(
    batch: int, m: int, rng: np.random.Generator, dtype=np.float32
) -> dict[str, np.ndarray]:
    """Inverted-scaling dropout multipliers, one per regularized stage."""
    l1, l2 = pooled_lengths(m)

    def mask(shape, p):
        # single-precision uniforms regardless of the model dtype, so the
        # float32 training path and the float64 checking path share masks
        keep = rng.random(shape, dtype=np.float32) >= p
        return (keep / np.float32(1.0 - p)).astype(dtype)

    return {
        "drop1": mask((batch, CONV1_FILTERS, l1), DROP_CONV),
        "drop2": mask((batch, CONV2_FILTERS, l2), DROP_CONV),
        "drop3": mask((batch, DENSE_UNITS), DROP_DENSE),
    }


# ---------------------------------------------------------------------------
# forward / loss / backward
# ---------------------------------------------------------------------------

def _check_input(x):
    if x.ndim != 3 or x.shape[1] != 2:
        raise ShapeMismatch(f"expected (batch, 2, M) input, got {x.shape}")
    if x.shape[2] < 4:
        raise InvalidLength(f"need M >= 4, got {x.shape[2]}")


def _forward_full(w, x, *, train, masks=None, hp=None, bn_stats=None):
    """Run the network, returning (probabilities, cache for backward).

    ``bn_stats`` optionally freezes the normalization statistics (dict with
    "bn1"/"bn2" -> (mean, var)); otherwise train mode uses batch statistics
    and infer mode the running ones.
    """
    _check_input(x)
    hp = hp or Hyperparams()
    t = w.tensors
    cache = {"x_shape": x.shape}

    z1, cols1 = conv1d_same(x, t["conv1_w"], t["conv1_b"])
    a1 = np.maximum(z1, 0)
    if train and bn_stats is None:
        mu1, var1 = a1.mean(axis=(0, 2)), a1.var(axis=(0, 2))
        cache["bn1_batch"] = True
    else:
        mu1, var1 = bn_stats["bn1"] if bn_stats else (t["bn1_mean"], t["bn1_var"])
        cache["bn1_batch"] = False
    y1, xhat1, inv1 = batchnorm_apply(a1, t["bn1_gamma"], t["bn1_beta"], mu1, var1, hp.bn_eps)
    p1, idx1 = maxpool2(y1)
    if train:
        d1 = p1 * masks["drop1"]
    else:
        d1 = p1

    z2, cols2 = conv1d_same(d1, t["conv2_w"], t["conv2_b"])
    a2 = np.maximum(z2, 0)
    if train and bn_stats is None:
        mu2, var2 = a2.mean(axis=(0, 2)), a2.var(axis=(0, 2))
        cache["bn2_batch"] = True
    else:
        mu2, var2 = bn_stats["bn2"] if bn_stats else (t["bn2_mean"], t["bn2_var"])
        cache["bn2_batch"] = False
    y2, xhat2, inv2 = batchnorm_apply(a2, t["bn2_gamma"], t["bn2_beta"], mu2, var2, hp.bn_eps)
    p2, idx2 = maxpool2(y2)
    if train:
        d2 = p2 * masks["drop2"]
    else:
        d2 = p2

    g = d2.mean(axis=2)
    h_pre = g @ t["dense1_w"] + t["dense1_b"]
    h = np.maximum(h_pre, 0)
    hd = h * masks["drop3"] if train else h
    logit = (hd @ t["out_w"] + t["out_b"])[:, 0]
    p = expit(logit)

    cache.update(
        cols1=cols1, z1=z1, a1=a1, xhat1=xhat1, inv1=inv1, mu1=mu1, var1=var1,
        idx1=idx1, y1_len=y1.shape[2], d1=d1,
        cols2=cols2, z2=z2, a2=a2, xhat2=xhat2, inv2=inv2, mu2=mu2, var2=var2,
        idx2=idx2, y2_len=y2.shape[2], d2_len=d2.shape[2],
        g=g, h_pre=h_pre, hd=hd, logit=logit, p=p, masks=masks, train=train,
    )
    return p, cache


def condition_inputs(x: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """Apply the model's input unit change and optional per-example RMS norm."""
    if hp.input_scale != 1.0:
        x = x * x.dtype.type(hp.input_scale)
    if hp.input_norm == "rms":
        rms = np.sqrt((x * x).mean(axis=(1, 2), keepdims=True) + 1e-30)
        x = x / rms
    elif hp.input_norm != "none":
        raise ValueError(f"unknown input_norm {hp.input_norm!r}")
    return x


def forward(w, x, mode="infer", rng=None, hp=None):
    """Probabilities in (0,1) for a batch of (2, M) inputs."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None]
    if hp is not None:
        x = condition_inputs(x, hp)
    if mode == "train":
        if rng is None:
            raise ValueError("train-mode forward needs an rng for dropout")
        masks = draw_dropout_masks(x.shape[0], x.shape[2], rng, x.dtype)
        p, _ = _forward_full(w, x, train=True, masks=masks, hp=hp)
    else:
        p, _ = _forward_full(w, x, train=False, hp=hp)
    return p


def bce_loss(p, labels) -> float:
    """Binary cross entropy with probabilities clamped to [eps, 1-eps]."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))


def _loss_grad_wrt_logit(p, y):
    n = p.shape[0]
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    dpc = (pc - y) / (pc * (1.0 - pc)) / n
    inside = (p > BCE_EPS) & (p < 1.0 - BCE_EPS)
    return dpc * inside * p * (1.0 - p)


def backward(w, x, y, rng=None, hp=None, masks=None, bn_stats=None):
    """Loss, exact gradients for every learnable tensor, and the batch norm
    statistics observed by this pass (for the running-average update).

    Dropout masks are drawn from ``rng`` unless passed explicitly; the same
    masks drive the forward pass being differentiated.  With numba present
    the batch-stat path runs through fused kernels; the gradient check
    verifies them against finite differences of the plain composition.
    """
    hp = hp or Hyperparams()
    x = np.asarray(x)
    y = np.asarray(y, dtype=x.dtype)
    if masks is None:
        if rng is None:
            raise ValueError("backward needs an rng or explicit dropout masks")
        masks = draw_dropout_masks(x.shape[0], x.shape[2], rng, x.dtype)
    if fastops.HAVE_NUMBA and bn_stats is None:
        _check_input(x)
        return _train_step_fused(w, x, y, masks, hp)
    p, c = _forward_full(w, x, train=True, masks=masks, hp=hp, bn_stats=bn_stats)
    loss = bce_loss(p, y)
    t = w.tensors
    grads = {}

    dlogit = _loss_grad_wrt_logit(p.astype(np.float64), y.astype(np.float64))
    dlogit = dlogit.astype(x.dtype)
    grads["out_w"] = c["hd"].T @ dlogit[:, None]
    grads["out_b"] = dlogit.sum(keepdims=True)
    dhd = dlogit[:, None] @ t["out_w"].T
    dh = dhd * masks["drop3"]
    dh_pre = dh * (c["h_pre"] > 0)
    grads["dense1_w"] = c["g"].T @ dh_pre
    grads["dense1_b"] = dh_pre.sum(axis=0)
    dg = dh_pre @ t["dense1_w"].T

    l2 = c["d2_len"]
    dd2 = np.repeat(dg[:, :, None] / l2, l2, axis=2)
    dp2 = dd2 * masks["drop2"]
    dy2 = maxpool2_backward(dp2, c["idx2"], c["y2_len"])
    da2, grads["bn2_gamma"], grads["bn2_beta"] = batchnorm_backward(
        dy2, c["xhat2"], c["inv2"], t["bn2_gamma"], c["bn2_batch"]
    )
    dz2 = da2 * (c["z2"] > 0)
    grads["conv2_w"], grads["conv2_b"], dd1 = conv1d_same_backward(
        dz2, c["cols2"], t["conv2_w"], c["d1"].shape
    )

    dp1 = dd1 * masks["drop1"]
    dy1 = maxpool2_backward(dp1, c["idx1"], c["y1_len"])
    da1, grads["bn1_gamma"], grads["bn1_beta"] = batchnorm_backward(
        dy1, c["xhat1"], c["inv1"], t["bn1_gamma"], c["bn1_batch"]
    )
    dz1 = da1 * (c["z1"] > 0)
    grads["conv1_w"], grads["conv1_b"], _ = conv1d_same_backward(
        dz1, c["cols1"], t["conv1_w"], c["x_shape"], need_dx=False
    )

    stats = {
        "bn1_mean": c["mu1"], "bn1_var": c["var1"],
        "bn2_mean": c["mu2"], "bn2_var": c["var2"],
    }
    return loss, grads, stats


def loss_given_masks(w, x, y, masks, hp=None, bn_stats=None) -> float:
    """Train-mode loss under fixed dropout masks (finite-difference target)."""
    p, _ = _forward_full(w, x, train=True, masks=masks, hp=hp, bn_stats=bn_stats)
    return bce_loss(p, y)


def _train_step_fused(w, x, y, masks, hp):
    """Fused-kernel twin of the batch-stat training pass.

    Computes the same loss/gradients/statistics as the plain composition in
    ``_forward_full`` + ``backward``, with the relu/batchnorm/pool/dropout
    chains collapsed into single sweeps.
    """
    t = w.tensors
    dtype = x.dtype

    def block_forward(z, gamma, beta, mask):
        a = np.empty_like(z)
        mu64, var64 = fastops.relu_stats(z, a)
        mu = mu64.astype(dtype)
        var = var64.astype(dtype)
        inv = (1.0 / np.sqrt(var64 + hp.bn_eps)).astype(dtype)
        d = np.empty(mask.shape, dtype=dtype)
        keep = fastops.bn_pool_drop(a, gamma, beta, mu, inv, mask, d)
        return a, mu, var, inv, keep, d

    z1, cols1 = conv1d_same(x, t["conv1_w"], t["conv1_b"])
    a1, mu1, var1, inv1, keep1, d1 = block_forward(
        z1, t["bn1_gamma"], t["bn1_beta"], masks["drop1"]
    )
    z2, cols2 = conv1d_same(d1, t["conv2_w"], t["conv2_b"])
    a2, mu2, var2, inv2, keep2, d2 = block_forward(
        z2, t["bn2_gamma"], t["bn2_beta"], masks["drop2"]
    )

    g = d2.mean(axis=2)
    h_pre = g @ t["dense1_w"] + t["dense1_b"]
    h = np.maximum(h_pre, 0)
    hd = h * masks["drop3"]
    logit = (hd @ t["out_w"] + t["out_b"])[:, 0]
    p = expit(logit)
    loss = bce_loss(p, y)

    grads = {}
    dlogit = _loss_grad_wrt_logit(
        p.astype(np.float64), y.astype(np.float64)
    ).astype(dtype)
    grads["out_w"] = hd.T @ dlogit[:, None]
    grads["out_b"] = dlogit.sum(keepdims=True)
    dhd = dlogit[:, None] @ t["out_w"].T
    dh_pre = dhd * masks["drop3"] * (h_pre > 0)
    grads["dense1_w"] = g.T @ dh_pre
    grads["dense1_b"] = dh_pre.sum(axis=0)
    dg = dh_pre @ t["dense1_w"].T

    l2 = d2.shape[2]
    dd2 = np.repeat(dg[:, :, None] / dtype.type(l2), l2, axis=2)
    dz2, dgamma2, dbeta2 = fastops.block_backward(
        dd2, masks["drop2"], keep2, a2, mu2, inv2, t["bn2_gamma"], z2
    )
    grads["bn2_gamma"] = dgamma2.astype(dtype)
    grads["bn2_beta"] = dbeta2.astype(dtype)
    grads["conv2_w"], grads["conv2_b"], dd1 = conv1d_same_backward(
        dz2, cols2, t["conv2_w"], d1.shape
    )
    dz1, dgamma1, dbeta1 = fastops.block_backward(
        dd1, masks["drop1"], keep1, a1, mu1, inv1, t["bn1_gamma"], z1
    )
    grads["bn1_gamma"] = dgamma1.astype(dtype)
    grads["bn1_beta"] = dbeta1.astype(dtype)
    grads["conv1_w"], grads["conv1_b"], _ = conv1d_same_backward(
        dz1, cols1, t["conv1_w"], x.shape, need_dx=False
    )

    stats = {
        "bn1_mean": mu1, "bn1_var": var1,
        "bn2_mean": mu2, "bn2_var": var2,
    }
    return loss, grads, stats


# ---------------------------------------------------------------------------
# optimizer and training loop
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    lr: float
    beta1: float
    beta2: float
    eps: float


def init_adam(w: ModelWeights, hp: Hyperparams) -> AdamState:
    zeros = lambda k: np.zeros_like(w.tensors[k])
    return AdamState(
        step=0,
        m={k: zeros(k) for k in LEARNABLE_KEYS},
        v={k: zeros(k) for k in LEARNABLE_KEYS},
        lr=hp.learning_rate,
        beta1=hp.beta1,
        beta2=hp.beta2,
        eps=hp.adam_eps,
    )


def adam_step(state: AdamState, w: ModelWeights, grads) -> tuple[ModelWeights, AdamState]:
    """One bias-corrected Adam update; returns fresh weights and state."""
    t = state.step + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new_t = dict(w.tensors)
    new_m, new_v = {}, {}
    for k in LEARNABLE_KEYS:
        g = grads[k]
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        new_t[k] = (w.tensors[k] - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(w.tensors[k].dtype)
        new_m[k], new_v[k] = m, v
    return ModelWeights(new_t), AdamState(t, new_m, new_v, state.lr, state.beta1, state.beta2, state.eps)


def _update_running(w: ModelWeights, stats, momentum: float) -> ModelWeights:
    new_t = dict(w.tensors)
    for k, batch_val in stats.items():
        old = w.tensors[k]
        new_t[k] = (momentum * old + (1.0 - momentum) * batch_val).astype(old.dtype)
    return ModelWeights(new_t)


def stack_examples(examples):
    x = np.stack([e.x for e in examples]).astype(np.float32, copy=False)
    y = np.array([e.label for e in examples], dtype=np.float32)
    return x, y


def train_local(
    w0: ModelWeights,
    ds,
    hp: Hyperparams,
    rng: np.random.Generator,
) -> tuple[ModelWeights, TrainReport]:
    """Mini-batch Adam training with plateau early stopping.

    Stops once the epoch training loss improves by less than ``min_delta``
    for ``patience`` consecutive epochs.  BLAS is pinned to one thread so
    results do not depend on how many clients train concurrently.
    """
    if not ds.train:
        raise EmptyDataset("client dataset has no training examples")
    x_all, y_all = stack_examples(ds.train)
    if hp.input_scale != 1.0 or hp.input_norm != "none":
        x_all = condition_inputs(x_all, hp)
        # x_all is in network units from here on; report through a
        # pass-through view so _predict does not condition a second time
        report_hp = _passthrough(hp)
    else:
        report_hp = hp
    n = x_all.shape[0]
    w = w0.astype(np.float32)

    with threadpool_limits(limits=1):
        if hp.max_epochs == 0:
            p = _predict(w, x_all, report_hp)
            report = TrainReport(0, bce_loss(p, y_all), False, _accuracy(p, y_all))
            return w, report

        adam = init_adam(w, hp)
        prev_loss = None
        streak = 0
        stopped = False
        epoch_loss = 0.0
        epochs_run = 0
        for _ in range(hp.max_epochs):
            perm = rng.permutation(n)
            total = 0.0
            for start in range(0, n, hp.batch_size):
                idx = perm[start:start + hp.batch_size]
                loss, grads, stats = backward(w, x_all[idx], y_all[idx], rng=rng, hp=hp)
                w = _update_running(w, stats, hp.bn_momentum)
                w, adam = adam_step(adam, w, grads)
                total += loss * len(idx)
            epoch_loss = total / n
            epochs_run += 1
            if prev_loss is not None:
                if prev_loss - epoch_loss < hp.min_delta:
                    streak += 1
                else:
                    streak = 0
                if streak >= hp.patience:
                    stopped = True
                    break
            prev_loss = epoch_loss

        p = _predict(w, x_all, report_hp)
        report = TrainReport(epochs_run, epoch_loss, stopped, _accuracy(p, y_all))
    return w, report


def _passthrough(hp: Hyperparams) -> Hyperparams:
    import dataclasses

    return dataclasses.replace(hp, input_scale=1.0, input_norm="none")


def _predict(w, x, hp, chunk=256):
    x = condition_inputs(x, hp)
    parts = []
    for start in range(0, x.shape[0], chunk):
        p, _ = _forward_full(w, x[start:start + chunk], train=False, hp=hp)
        parts.append(p)
    return np.concatenate(parts)


def _accuracy(p, y) -> float:
    pred = (p > 0.5).astype(y.dtype)
    return float(np.mean(pred == y))


def evaluate(w: ModelWeights, examples, hp: Hyperparams | None = None) -> float:
    """Fraction of examples classified correctly at the 0.5 threshold."""
    if not examples:
        raise EmptyDataset("cannot evaluate on an empty example list")
    hp = hp or Hyperparams()
    x, y = stack_examples(examples)
    return _accuracy(_predict(w, x, hp), y)


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, then (name, shape, float32 LE) tensors
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"FSWT"
CHECKPOINT_VERSION = 1


def save_weights(path, w: ModelWeights) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(WEIGHT_KEYS)))
        for key in WEIGHT_KEYS:
            arr = np.ascontiguousarray(w.tensors[key], dtype="<f4")
            name = key.encode()
            f.write(struct.pack("<H", len(name)))
            f.write(name)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_weights(path) -> ModelWeights:
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a weight checkpoint")
        version, count = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode()
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            data = np.frombuffer(f.read(4 * int(np.prod(shape))), dtype="<f4")
            tensors[name] = data.reshape(shape).copy()
    if set(tensors) != set(WEIGHT_KEYS):
        raise ValueError("checkpoint tensor names do not match the architecture")
    return ModelWeights(tensors)
