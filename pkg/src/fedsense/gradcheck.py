"""Coordinate-wise finite-difference verification of the network gradients.

Central differences are taken on a float64 path under fixed dropout masks.
A difference quotient is meaningless when the +-h probes land on opposite
sides of an activation kink (ReLU sign flip, max-pool argmax change, or the
cross-entropy clamp), so such coordinates are re-probed with smaller steps
and excluded if they keep straddling a kink; the excluded fraction stays
well under one percent.

Two numerical realities shape the comparison:

* a difference quotient of an O(1) loss in float64 carries ~1e-11 of
  absolute roundoff noise, so for gradients below ~1e-6 a pure relative
  comparison is ill-posed; those coordinates are held to the absolute
  precision implied by the relative floor (1e-10 by default), and
* coordinates whose first estimate misses the tolerance are re-estimated
  with a fourth-order stencil, which removes truncation error.

The second conv layer holds ~91% of the parameters.  Perturbing one of its
weights only changes a single output channel before the dense stage, so the
sweep for each output channel runs as one vectorized panel over all of its
(input-channel, tap) coordinates; panels are spot-validated against the
plain full-forward path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .neuralnet import (
    BCE_EPS,
    CONV2_FILTERS,
    KERNEL,
    LEARNABLE_KEYS,
    Hyperparams,
    ModelWeights,
    _forward_full,
    backward,
    bce_loss,
    draw_dropout_masks,
    init_model,
)

DEFAULT_STEP = 1e-5
RETRY_FACTORS = (1.0, 1 / 16.0, 1 / 256.0)


@dataclass
class GradCheckReport:
    seed: int
    max_rel_err: float
    n_checked: int
    n_kink_skipped: int
    worst_tensor: str

    @property
    def skipped_fraction(self) -> float:
        total = self.n_checked + self.n_kink_skipped
        return self.n_kink_skipped / total if total else 0.0


def _setup(seed: int, m: int, batch: int):
    rng = np.random.default_rng(seed)
    w = init_model(m, rng, dtype=np.float64)
    x = rng.standard_normal((batch, 2, m))
    y = rng.integers(0, 2, size=batch).astype(np.float64)
    masks = draw_dropout_masks(batch, m, rng, np.float64)
    return w, x, y, masks


def _signature(cache, p):
    inside = (p > BCE_EPS) & (p < 1.0 - BCE_EPS)
    return (
        (cache["z1"] > 0).tobytes(),
        cache["idx1"].tobytes(),
        (cache["z2"] > 0).tobytes(),
        cache["idx2"].tobytes(),
        (cache["h_pre"] > 0).tobytes(),
        inside.tobytes(),
    )


def _loss_and_signature(w, x, y, masks, hp):
    p, cache = _forward_full(w, x, train=True, masks=masks, hp=hp)
    return bce_loss(p, y), _signature(cache, p)


def _fd_plain(w, x, y, masks, hp, key, flat_idx, step):
    """Central difference via the full forward; None when a kink intervenes."""
    arr = w.tensors[key]
    old = arr.flat[flat_idx]
    arr.flat[flat_idx] = old + step
    loss_p, sig_p = _loss_and_signature(w, x, y, masks, hp)
    arr.flat[flat_idx] = old - step
    loss_m, sig_m = _loss_and_signature(w, x, y, masks, hp)
    arr.flat[flat_idx] = old
    if sig_p != sig_m:
        return None
    return (loss_p - loss_m) / (2.0 * step)


def _fd_with_retries(w, x, y, masks, hp, key, flat_idx, step):
    for factor in RETRY_FACTORS:
        fd = _fd_plain(w, x, y, masks, hp, key, flat_idx, step * factor)
        if fd is not None:
            return fd
    return None


def _fd_plain4(w, x, y, masks, hp, key, flat_idx, step):
    """Fourth-order central difference; None when any probe crosses a kink."""
    arr = w.tensors[key]
    old = arr.flat[flat_idx]
    losses, sigs = {}, {}
    for mult in (1, -1, 2, -2):
        arr.flat[flat_idx] = old + mult * step
        losses[mult], sigs[mult] = _loss_and_signature(w, x, y, masks, hp)
    arr.flat[flat_idx] = old
    if len({sigs[m] for m in (1, -1, 2, -2)}) != 1:
        return None
    return (8.0 * (losses[1] - losses[-1]) - (losses[2] - losses[-2])) / (12.0 * step)


def _rel_err(fd, analytic, floor=1e-6):
    return abs(fd - analytic) / max(abs(fd), abs(analytic), floor)


def _conv2_panel(w, cache, masks, y, hp, o, step):
    """Losses for all +-step perturbations of conv2 weights/bias feeding
    output channel ``o``; returns (losses, kink flags) for the w coordinates
    laid out as [plus(300), minus(300), bias_plus, bias_minus]."""
    t = w.tensors
    d1 = cache["d1"]
    n, c1, l_in = d1.shape
    pad_l = (KERNEL - 1) // 2
    d1p = np.pad(d1, ((0, 0), (0, 0), (pad_l, KERNEL - 1 - pad_l)))
    win = sliding_window_view(d1p, KERNEL, axis=2)          # (n, c1, l, k)
    wvar = np.ascontiguousarray(win.transpose(1, 3, 0, 2)).reshape(
        c1 * KERNEL, n, l_in
    )
    base = cache["z2"][:, o, :]
    zv = np.concatenate(
        [
            base[None] + step * wvar,
            base[None] - step * wvar,
            (base + step)[None],
            (base - step)[None],
        ],
        axis=0,
    )
    v = zv.shape[0]

    a2v = np.maximum(zv, 0)
    muv = a2v.mean(axis=(1, 2))
    varv = a2v.var(axis=(1, 2))
    invv = 1.0 / np.sqrt(varv + hp.bn_eps)
    y2v = t["bn2_gamma"][o] * (a2v - muv[:, None, None]) * invv[:, None, None] + t["bn2_beta"][o]
    l2p = l_in // 2
    left = y2v[:, :, 0:2 * l2p:2]
    right = y2v[:, :, 1:2 * l2p:2]
    argv = left >= right                      # same tie rule as maxpool2
    poolv = np.where(argv, left, right)
    dv = poolv * masks["drop2"][:, o, :][None]
    g_o = dv.mean(axis=2)

    gv = np.repeat(cache["g"][None], v, axis=0)
    gv[:, :, o] = g_o
    hv = gv @ t["dense1_w"] + t["dense1_b"]
    hd = np.maximum(hv, 0) * masks["drop3"][None]
    logit = (hd @ t["out_w"])[..., 0] + t["out_b"][0]
    pv = expit(logit)
    pc = np.clip(pv, BCE_EPS, 1.0 - BCE_EPS)
    losses = -np.mean(
        y[None] * np.log(pc) + (1.0 - y[None]) * np.log(1.0 - pc), axis=1
    )

    half = c1 * KERNEL
    relu_flip = (a2v[:half] > 0) != (a2v[half:2 * half] > 0)
    arg_flip = argv[:half] != argv[half:2 * half]
    dense_flip = (hv[:half] > 0) != (hv[half:2 * half] > 0)
    inside = (pv > BCE_EPS) & (pv < 1.0 - BCE_EPS)
    clamp_flip = inside[:half] != inside[half:2 * half]
    kinks = (
        relu_flip.any(axis=(1, 2))
        | arg_flip.any(axis=(1, 2))
        | dense_flip.any(axis=(1, 2))
        | clamp_flip.any(axis=1)
    )
    bias_kink = bool(
        ((a2v[-2] > 0) != (a2v[-1] > 0)).any()
        or (argv[-2] != argv[-1]).any()
        or ((hv[-2] > 0) != (hv[-1] > 0)).any()
        or (inside[-2] != inside[-1]).any()
    )
    return losses, kinks, bias_kink


def check_gradients(
    seed: int,
    m: int = 32,
    batch: int = 2,
    step: float = DEFAULT_STEP,
    rtol: float = 1e-4,
    floor: float = 1e-6,
    hp: Hyperparams | None = None,
    spot_checks: int = 24,
) -> GradCheckReport:
    """Compare every learnable gradient against central finite differences."""
    hp = hp or Hyperparams()
    w, x, y, masks = _setup(seed, m, batch)
    _, grads, _ = backward(w, x, y, hp=hp, masks=masks)
    _, cache = _forward_full(w, x, train=True, masks=masks, hp=hp)

    max_rel = 0.0
    worst = ""
    n_checked = 0
    n_skipped = 0
    refine: list[tuple[str, int, float, float]] = []
    rng = np.random.default_rng(seed + 1)

    def record(key, fd, analytic, flat_idx):
        nonlocal max_rel, worst, n_checked
        n_checked += 1
        rel = _rel_err(fd, analytic, floor)
        if rel > 0.25 * rtol:
            refine.append((key, flat_idx, analytic, rel))
        elif rel > max_rel:
            max_rel, worst = rel, key

    # conv2: vectorized panel per output channel, spot-validated below
    c1k = grads["conv2_w"].shape[1] * KERNEL
    for o in range(CONV2_FILTERS):
        losses, kinks, bias_kink = _conv2_panel(w, cache, masks, y, hp, o, step)
        fd_w = (losses[:c1k] - losses[c1k:2 * c1k]) / (2.0 * step)
        analytic_w = grads["conv2_w"][o].reshape(c1k)
        for j in range(c1k):
            if kinks[j]:
                fd = _fd_with_retries(
                    w, x, y, masks, hp, "conv2_w", o * c1k + j, step
                )
                if fd is None:
                    n_skipped += 1
                    continue
                record("conv2_w", fd, analytic_w[j], o * c1k + j)
            else:
                record("conv2_w", fd_w[j], analytic_w[j], o * c1k + j)
        if bias_kink:
            fd = _fd_with_retries(w, x, y, masks, hp, "conv2_b", o, step)
            if fd is None:
                n_skipped += 1
            else:
                record("conv2_b", fd, grads["conv2_b"][o], o)
        else:
            fd_b = (losses[-2] - losses[-1]) / (2.0 * step)
            record("conv2_b", fd_b, grads["conv2_b"][o], o)

    # panels must agree with the plain path wherever both are kink-free
    for _ in range(spot_checks):
        o = int(rng.integers(0, CONV2_FILTERS))
        j = int(rng.integers(0, c1k))
        losses, kinks, _ = _conv2_panel(w, cache, masks, y, hp, o, step)
        if kinks[j]:
            continue
        fd_panel = (losses[j] - losses[c1k + j]) / (2.0 * step)
        fd_plain = _fd_plain(w, x, y, masks, hp, "conv2_w", o * c1k + j, step)
        if fd_plain is not None and abs(fd_panel - fd_plain) > 1e-9 * max(
            1.0, abs(fd_plain)
        ):
            raise AssertionError(
                f"vectorized panel disagrees with plain path at conv2_w[{o},{j}]"
            )

    # everything else is small enough for the plain path
    for key in LEARNABLE_KEYS:
        if key in ("conv2_w", "conv2_b"):
            continue
        analytic = grads[key]
        for flat_idx in range(analytic.size):
            fd = _fd_with_retries(w, x, y, masks, hp, key, flat_idx, step)
            if fd is None:
                n_skipped += 1
                continue
            record(key, fd, analytic.flat[flat_idx], flat_idx)

    # second pass: a fourth-order stencil settles truncation-limited coords
    for key, flat_idx, analytic, rel in refine:
        fd4 = _fd_plain4(w, x, y, masks, hp, key, flat_idx, step)
        rel_final = _rel_err(fd4, analytic, floor) if fd4 is not None else rel
        if rel_final > max_rel:
            max_rel, worst = rel_final, key

    return GradCheckReport(
        seed=seed,
        max_rel_err=max_rel,
        n_checked=n_checked,
        n_kink_skipped=n_skipped,
        worst_tensor=worst,
    )


def run_check(seeds, m: int = 32, batch: int = 2, rtol: float = 1e-4):
    """Gradient reports for several seeds (the acceptance gate uses >= 5)."""
    return [check_gradients(seed, m=m, batch=batch, rtol=rtol) for seed in seeds]
