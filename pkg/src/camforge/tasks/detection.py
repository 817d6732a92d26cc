"""Sliding-window object detector with per-class logistic scoring.

Each window is summarized by an intensity histogram, gradient-orientation
energies, mean color and relative size, all read from integral images of
the frame rescaled to mean intensity 0.5.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from camforge.errors import EmptyBatch
from camforge.scene import OBJECT_CLASSES

N_CLASSES = len(OBJECT_CLASSES)
WINDOW_FRACTIONS = (0.12, 0.2, 0.33, 0.55)  # window heights relative to image height
WINDOW_ASPECTS = (0.5, 1.0, 2.0)  # width / height
N_HIST = 8
N_ORIENT = 4
# histogram, orientation energies, mean RGB, center-minus-surround RGB, size, aspect, bias
N_FEATURES = N_HIST + N_ORIENT + 3 + 3 + 1 + 1 + 1
POSITIVE_IOU = 0.5
NMS_IOU = 0.3
MIN_BOX_PIXELS = 12


@dataclass(frozen=True)
class Detection:
    box: tuple[float, float, float, float]  # x0, y0, x1, y1 in pixels
    class_id: int
    score: float


@dataclass
class DetectorModel:
    weights: np.ndarray  # N_CLASSES x N_FEATURES
    lr: float = 5.0
    steps: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (N_CLASSES, N_FEATURES):
            raise ValueError(f"weights must be {(N_CLASSES, N_FEATURES)}, got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("detector weights must be finite")

    @classmethod
    def zeros(cls, lr: float = 5.0) -> "DetectorModel":
        return cls(np.zeros((N_CLASSES, N_FEATURES)), lr)

    def copy(self) -> "DetectorModel":
        return DetectorModel(self.weights.copy(), self.lr, self.steps)


def _integral(a):
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1) + a.shape[2:])
    s[1:, 1:] = a.cumsum(0).cumsum(1)
    return s


def windows(height: int, width: int) -> np.ndarray:
    """All (x0, y0, x1, y1) windows, stride a quarter of each side."""
    out = []
    for frac in WINDOW_FRACTIONS:
        for aspect in WINDOW_ASPECTS:
            wh = max(4, int(round(frac * height)))
            ww = max(4, int(round(frac * height * aspect)))
            if wh > height or ww > width:
                continue
            ys = np.arange(0, height - wh + 1, max(1, wh // 4))
            xs = np.arange(0, width - ww + 1, max(1, ww // 4))
            yy, xx = np.meshgrid(ys, xs, indexing="ij")
            x0, y0 = xx.ravel(), yy.ravel()
            out.append(np.stack([x0, y0, x0 + ww, y0 + wh], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 4), dtype=np.int64)


def window_features(image: np.ndarray, wins: np.ndarray) -> np.ndarray:
    """N x N_FEATURES descriptor matrix (last column is the bias)."""
    img = np.asarray(image, dtype=np.float64)
    h = img.shape[0]
    # same auto-gain as the corner detector: dark frames are readable, noise keeps its relative level
    m = float(img.mean())
    if m > 1e-6:
        img = img * (0.5 / m)
    grey = img.mean(axis=2)
    bins = np.minimum((grey * N_HIST).astype(np.int64), N_HIST - 1)
    planes = [(bins == k).astype(np.float64) for k in range(N_HIST)]
    gy, gx = np.gradient(grey)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)
    obin = np.minimum((ang / np.pi * N_ORIENT).astype(np.int64), N_ORIENT - 1)
    planes += [np.where(obin == k, mag, 0.0) for k in range(N_ORIENT)]
    planes += [img[..., c] for c in range(3)]
    ii = _integral(np.stack(planes, axis=2))
    w = img.shape[1]

    def box_mean(x0, y0, x1, y1):
        s = ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]
        return s, ((x1 - x0) * (y1 - y0)).astype(np.float64)[:, None]

    x0, y0, x1, y1 = wins.T
    sums, area = box_mean(x0, y0, x1, y1)
    feats = sums / area
    feats[:, N_HIST:N_HIST + N_ORIENT] *= 4.0  # gradients are small next to fractions
    # surround: the window grown by half its size on each side, clipped to the image
    mx, my = (x1 - x0) // 2, (y1 - y0) // 2
    osum, oarea = box_mean(np.maximum(x0 - mx, 0), np.maximum(y0 - my, 0),
                           np.minimum(x1 + mx, w), np.minimum(y1 + my, h))
    ring = np.maximum(oarea - area, 1.0)
    surround = (osum[:, -3:] - sums[:, -3:]) / ring
    contrast = np.where(oarea > area, feats[:, -3:] - surround, 0.0)
    size = ((y1 - y0) / h)[:, None]
    aspect = np.log2((x1 - x0) / (y1 - y0))[:, None]
    return np.concatenate([feats, 2.0 * contrast, size, aspect, np.ones((len(wins), 1))], axis=1)


def gt_boxes(instance: np.ndarray, semantic: np.ndarray, min_pixels: int = MIN_BOX_PIXELS):
    """Tight 2D boxes (x0, y0, x1, y1, class) of visible object instances."""
    out = []
    obj = (semantic >= 1) & (semantic <= N_CLASSES)
    for iid in np.unique(instance[obj]):
        m = (instance == iid) & obj
        if m.sum() < min_pixels:
            continue
        ys, xs = np.nonzero(m)
        cls = int(np.bincount(semantic[m]).argmax())
        out.append((xs.min(), ys.min(), xs.max() + 1, ys.max() + 1, cls))
    return np.array(out, dtype=np.int64).reshape(-1, 5)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    iy = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = ix * iy
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


MAX_POSITIVE_WEIGHT = 50.0
MAX_NEGATIVES = 1500


@dataclass(frozen=True)
class DetectorBatch:
    features: np.ndarray  # N x F
    labels: np.ndarray  # N x C in {0, 1}

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @staticmethod
    def concat(batches) -> "DetectorBatch":
        batches = list(batches)
        return DetectorBatch(np.concatenate([b.features for b in batches]),
                             np.concatenate([b.labels for b in batches]))


def detector_batch(image, boxes, max_negatives: int = MAX_NEGATIVES) -> DetectorBatch:
    """Windows of one frame labelled against gt rows (x0, y0, x1, y1, class).

    Every positive window is kept; windows positive for no class are thinned
    to ``max_negatives`` by a fixed stride.
    """
    h, w = image.shape[:2]
    wins = windows(h, w)
    labels = np.zeros((len(wins), N_CLASSES))
    boxes = np.asarray(boxes, dtype=np.int64).reshape(-1, 5)
    if len(boxes):
        iou = iou_matrix(wins, boxes[:, :4])
        for j, cls in enumerate(boxes[:, 4]):
            labels[iou[:, j] >= POSITIVE_IOU, cls - 1] = 1.0
    pos = labels.any(axis=1)
    neg = np.flatnonzero(~pos)
    if len(neg) > max_negatives:
        neg = neg[np.linspace(0, len(neg) - 1, max_negatives).astype(np.int64)]
    keep = np.sort(np.concatenate([np.flatnonzero(pos), neg]))
    return DetectorBatch(window_features(image, wins[keep]), labels[keep])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def class_weights(labels: np.ndarray) -> np.ndarray:
    """Per-entry loss weights: positives of class c count n_neg/n_pos times
    (at most MAX_POSITIVE_WEIGHT), negatives once."""
    n_pos = labels.sum(axis=0)
    w_pos = np.clip((len(labels) - n_pos) / np.maximum(n_pos, 1.0), 1.0, MAX_POSITIVE_WEIGHT)
    return np.where(labels > 0, w_pos[None, :], 1.0)


def detector_loss_and_grad(model: DetectorModel, batch: DetectorBatch):
    """Class-balanced binary cross-entropy over windows and classes, and its gradient.

    The loss is a weighted mean, so an all-zero model scores ln 2.
    """
    if batch.n == 0:
        raise EmptyBatch("detector batch has no windows")
    z = batch.features @ model.weights.T
    y = batch.labels
    wt = class_weights(y)
    total = wt.sum()
    # log(1 + e^z) - y z, computed stably
    loss = float(np.sum(wt * (np.logaddexp(0.0, z) - y * z)) / total)
    g = wt * (_sigmoid(z) - y) / total
    return loss, g.T @ batch.features


def detector_train_step(model: DetectorModel, batch: DetectorBatch, lr: float | None = None) -> float:
    """One gradient-descent step; returns the loss before the update."""
    loss, grad = detector_loss_and_grad(model, batch)
    model.weights = model.weights - (model.lr if lr is None else lr) * grad
    model.steps += 1
    return loss


def _nms(boxes, scores, iou_thr, limit=None):
    order = np.argsort(-scores, kind="stable")
    keep = []
    while order.size and (limit is None or len(keep) < limit):
        i = order[0]
        keep.append(i)
        if order.size == 1:
            break
        iou = iou_matrix(boxes[i:i + 1], boxes[order[1:]])[0]
        order = order[1:][iou <= iou_thr]
    return keep


def detector_infer(model: DetectorModel, image, threshold: float = 0.0, max_per_class: int = 20):
    """Scored detections after per-class greedy NMS.

    The default threshold keeps every window so that ranking metrics see the
    full score range.
    """
    h, w = image.shape[:2]
    wins = windows(h, w)
    if len(wins) == 0:
        return []
    scores = _sigmoid(window_features(image, wins) @ model.weights.T)
    out = []
    for c in range(N_CLASSES):
        s = scores[:, c]
        m = s >= threshold
        if not m.any():
            continue
        idx = np.flatnonzero(m)
        keep = _nms(wins[idx].astype(np.float64), s[idx], NMS_IOU, max_per_class)
        out += [Detection(tuple(float(v) for v in wins[idx[k]]), c + 1, float(s[idx[k]])) for k in keep]
    return out


def average_precision(detections_per_image, gts_per_image, iou_thr: float = POSITIVE_IOU) -> float:
    """Macro-averaged all-point interpolated AP over classes present in ground truth."""
    classes = sorted({int(c) for g in gts_per_image for c in np.asarray(g).reshape(-1, 5)[:, 4]})
    if not classes:
        return 0.0
    aps = []
    for cls in classes:
        recs = []
        n_gt = 0
        for img_i, (dets, gts) in enumerate(zip(detections_per_image, gts_per_image)):
            g = np.asarray(gts).reshape(-1, 5)
            g = g[g[:, 4] == cls, :4]
            n_gt += len(g)
            for d in dets:
                if d.class_id == cls:
                    recs.append((d.score, img_i, d.box))
        recs.sort(key=lambda r: -r[0])
        used = {}
        tp = np.zeros(len(recs))
        for k, (_, img_i, box) in enumerate(recs):
            g = np.asarray(gts_per_image[img_i]).reshape(-1, 5)
            g = g[g[:, 4] == cls, :4]
            if not len(g):
                continue
            iou = iou_matrix(np.array([box]), g)[0]
            taken = used.setdefault(img_i, np.zeros(len(g), dtype=bool))
            iou[taken] = -1.0
            j = int(np.argmax(iou))
            if iou[j] >= iou_thr:
                taken[j] = True
                tp[k] = 1.0
        aps.append(_ap_from_tp(tp, n_gt))
    return float(np.mean(aps))


def _ap_from_tp(tp: np.ndarray, n_gt: int) -> float:
    if n_gt == 0 or tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, tp.size + 1)
    # precision envelope, then area under the step curve
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mrec = np.concatenate([[0.0], recall, [recall[-1]]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))
