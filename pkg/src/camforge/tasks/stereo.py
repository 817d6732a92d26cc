"""Stereo depth: SAD block matching, a trainable disparity refiner, metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from camforge.errors import EmptyBatch, ImagesMismatch

_BIG = 1e9
MAX_DEPTH_M = 1000.0


@dataclass(frozen=True)
class DisparityMap:
    disparity: np.ndarray  # H x W, in [0, d_max]
    valid: np.ndarray  # H x W bool
    confidence: np.ndarray = None  # H x W in [0, 1]
    d_max: float = 192.0


@dataclass(frozen=True)
class DepthMetrics:
    avg_log_error: float
    rmse_m: float
    n_pixels: int = 0


def smooth_l1(x):
    x = np.abs(np.asarray(x, dtype=np.float64))
    return np.where(x < 1.0, 0.5 * x * x, x - 0.5)


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=np.float64)
    return np.clip(x, -1.0, 1.0)


def _ad_volume(left, right, d_max):
    """Absolute-difference cost per disparity; ``cost[d, y, x]`` compares L[x] and R[x-d]."""
    h, w = left.shape[:2]
    cost = np.full((d_max + 1, h, w), _BIG)
    for d in range(min(d_max, w - 1) + 1):
        diff = np.abs(left[:, d:] - right[:, : w - d])
        cost[d, :, d:] = diff.sum(axis=2) if diff.ndim == 3 else diff
    return cost


def block_match(left, right, d_max: int, window: int = 7, uniqueness: float = 0.05) -> DisparityMap:
    """Dense SAD matching over integer disparities ``[0, d_max]``.

    Sub-pixel disparity comes from a parabola through the cost minimum.
    Pixels fail validity on cost ties (uniqueness) or when left and right
    disparities disagree by more than one pixel.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape:
        raise ImagesMismatch(f"left {left.shape} vs right {right.shape}")
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    d_max = int(d_max)
    h, w = left.shape[:2]
    raw = _ad_volume(left, right, d_max)
    invalid_shift = raw >= _BIG
    raw[invalid_shift] = 0.0
    cost = uniform_filter(raw, size=(1, window, window), mode="nearest")
    cost[invalid_shift] = _BIG

    d0 = np.argmin(cost, axis=0)
    rows, cols = np.indices((h, w))
    c0 = cost[d0, rows, cols]
    lo = np.maximum(d0 - 1, 0)
    hi = np.minimum(d0 + 1, d_max)
    cm = cost[lo, rows, cols]
    cp = cost[hi, rows, cols]
    interior = (d0 > 0) & (d0 < d_max) & (cm < _BIG) & (cp < _BIG)
    denom = cm - 2.0 * c0 + cp
    offset = np.zeros((h, w))
    ok = interior & (denom > 1e-12)
    offset[ok] = np.clip((cm[ok] - cp[ok]) / (2.0 * denom[ok]), -0.5, 0.5)
    disp = np.clip(d0 + offset, 0.0, d_max)

    # uniqueness: best cost outside the +-1 neighborhood of the minimum
    masked = cost.copy()
    for k in (-1, 0, 1):
        idx = np.clip(d0 + k, 0, d_max)
        masked[idx, rows, cols] = _BIG
    c2 = masked.min(axis=0)
    margin = np.where(c2 < _BIG, (c2 - c0) / np.maximum(c2, 1e-12), 1.0)
    unique = (c2 - c0) > uniqueness * c2 + 1e-9

    # right-view disparities: cost_R[d, y, x] = cost_L[d, y, x + d]
    cost_r = np.full_like(cost, _BIG)
    for d in range(min(d_max, w - 1) + 1):
        cost_r[d, :, : w - d] = cost[d, :, d:]
    dr = np.argmin(cost_r, axis=0)
    xr = np.clip(np.round(cols - disp).astype(np.int64), 0, w - 1)
    lr_ok = np.abs(disp - dr[rows, xr]) <= 1.0

    valid = unique & lr_ok & (c0 < _BIG)
    confidence = np.where(lr_ok, np.clip(margin, 0.0, 1.0), 0.0)
    return DisparityMap(disp, valid, confidence, float(d_max))


def fill_invalid(dmap: DisparityMap) -> np.ndarray:
    """Raw disparity on valid pixels; elsewhere the smaller of the nearest
    valid disparities to the left and right on the same row."""
    d = dmap.disparity
    valid = dmap.valid
    h, w = d.shape
    out = d.copy()
    cols = np.broadcast_to(np.arange(w), (h, w))
    # index of nearest valid pixel to the left / right
    left_idx = np.where(valid, cols, -1)
    left_idx = np.maximum.accumulate(left_idx, axis=1)
    right_idx = np.where(valid, cols, w)
    right_idx = np.minimum.accumulate(right_idx[:, ::-1], axis=1)[:, ::-1]
    rows = np.indices((h, w))[0]
    lv = np.where(left_idx >= 0, d[rows, np.maximum(left_idx, 0)], np.inf)
    rv = np.where(right_idx < w, d[rows, np.minimum(right_idx, w - 1)], np.inf)
    fill = np.minimum(lv, rv)
    fill[~np.isfinite(fill)] = 0.0
    out[~valid] = fill[~valid]
    return out


@dataclass
class DisparityRefiner:
    """Affine disparity correction behind a per-pixel confidence gate.

    ``out = g * (alpha * d + beta) + (1 - g) * fill`` with
    ``g = sigmoid(gamma * confidence + delta)``.
    """
    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    steps: int = field(default=0)

    def params(self):
        return np.array([self.alpha, self.beta, self.gamma, self.delta])

    def set_params(self, p):
        self.alpha, self.beta, self.gamma, self.delta = (float(v) for v in p)

    def copy(self) -> "DisparityRefiner":
        return DisparityRefiner(self.alpha, self.beta, self.gamma, self.delta, self.steps)

    def _forward(self, d, fill, conf):
        g = 1.0 / (1.0 + np.exp(-(self.gamma * conf + self.delta)))
        aff = self.alpha * d + self.beta
        return g * aff + (1.0 - g) * fill, g, aff

    def apply(self, dmap: DisparityMap) -> DisparityMap:
        fill = fill_invalid(dmap)
        conf = dmap.confidence if dmap.confidence is not None else dmap.valid.astype(np.float64)
        out, _, _ = self._forward(dmap.disparity, fill, conf)
        return DisparityMap(np.clip(out, 0.0, dmap.d_max), dmap.valid, dmap.confidence, dmap.d_max)

    def loss_and_grad(self, batch: "RefinerBatch"):
        if batch.n == 0:
            raise EmptyBatch("refiner batch has no labelled pixels")
        out, g, aff = self._forward(batch.d, batch.fill, batch.conf)
        r = (out - batch.gt) / batch.scale
        loss = float(smooth_l1(r).mean())
        gr = smooth_l1_grad(r) / batch.scale / batch.n
        dg = g * (1.0 - g) * (aff - batch.fill)
        grad = np.array([
            np.sum(gr * g * batch.d),
            np.sum(gr * g),
            np.sum(gr * dg * batch.conf),
            np.sum(gr * dg),
        ])
        return loss, grad

    def train_step(self, batch: "RefinerBatch", lr: float) -> float:
        """One gradient-descent step; returns the loss before the update."""
        loss, grad = self.loss_and_grad(batch)
        self.set_params(self.params() - lr * grad)
        self.steps += 1
        return loss


@dataclass(frozen=True)
class RefinerBatch:
    d: np.ndarray
    fill: np.ndarray
    conf: np.ndarray
    gt: np.ndarray
    scale: np.ndarray

    @property
    def n(self) -> int:
        return int(self.d.size)

    @staticmethod
    def concat(batches) -> "RefinerBatch":
        batches = list(batches)
        return RefinerBatch(*(np.concatenate([getattr(b, k) for b in batches])
                              for k in ("d", "fill", "conf", "gt", "scale")))


def refiner_batch(dmap: DisparityMap, gt_disparity, mask=None, max_pixels: int = 4000) -> RefinerBatch:
    """Training pixels with a usable ground truth, subsampled on a fixed stride.

    Residuals are normalized by ``max(gt, 1)``, so the loss tracks relative
    depth error for all but sub-pixel disparities.
    """
    gt = np.asarray(gt_disparity, dtype=np.float64)
    m = np.isfinite(gt) & (gt <= dmap.d_max)
    if mask is not None:
        m &= mask
    idx = np.flatnonzero(m)
    if idx.size > max_pixels:
        idx = idx[:: int(np.ceil(idx.size / max_pixels))]
    fill = fill_invalid(dmap).ravel()[idx]
    conf = (dmap.confidence if dmap.confidence is not None else dmap.valid.astype(float)).ravel()[idx]
    g = gt.ravel()[idx]
    return RefinerBatch(dmap.disparity.ravel()[idx].copy(), fill, conf, g, np.maximum(g, 1.0))


def depth_metrics(pred_depth, gt_depth) -> DepthMetrics:
    """Mean |ln z_pred - ln z_gt| and RMSE in meters over finite-gt pixels."""
    pred = np.asarray(pred_depth, dtype=np.float64)
    gt = np.asarray(gt_depth, dtype=np.float64)
    m = np.isfinite(gt) & (gt > 0)
    if not m.any():
        return DepthMetrics(0.0, 0.0, 0)
    p = pred[m]
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise ValueError("predicted depths must be positive and finite on valid pixels")
    g = gt[m]
    log_err = float(np.mean(np.abs(np.log(p) - np.log(g))))
    rmse = float(np.sqrt(np.mean((p - g) ** 2)))
    return DepthMetrics(log_err, rmse, int(m.sum()))


def predicted_depth(dmap: DisparityMap, f_px: float, baseline_m: float, max_depth: float = MAX_DEPTH_M):
    """Depth from disparity, capped at ``max_depth`` (also where d <= 0)."""
    d = dmap.disparity
    with np.errstate(divide="ignore"):
        z = np.where(d > 0, f_px * baseline_m / np.maximum(d, 1e-12), max_depth)
    return np.minimum(z, max_depth)
