"""Oriented corner features, binary descriptors and RANSAC homography matching."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter, sobel

from camforge.errors import ImagesMismatch

HARRIS_K = 0.04
HARRIS_SIGMA = 1.5
DEFAULT_THRESHOLD = 1e-7
PATCH_RADIUS = 7
N_BITS = 256
# seed of the fixed sampling pattern shared by every descriptor
PATTERN_SEED = 0x5EED


def _pattern():
    rng = np.random.default_rng(PATTERN_SEED)
    pts = np.clip(np.round(rng.normal(0.0, PATCH_RADIUS / 2.5, size=(N_BITS, 4))), -PATCH_RADIUS, PATCH_RADIUS)
    return pts.astype(np.float64)


_PATTERN = _pattern()


@dataclass(frozen=True)
class FeatureSet:
    xy: np.ndarray  # N x 2 (x = column, y = row)
    angle: np.ndarray  # N, radians
    descriptors: np.ndarray  # N x 32 uint8

    def __len__(self):
        return len(self.xy)


@dataclass(frozen=True)
class MatchResult:
    n_total: int  # candidate matches after mutual and ratio tests
    n_inlier: int
    homography: np.ndarray | None
    pairs: np.ndarray  # K x 2 indices into (features_a, features_b)
    inliers: np.ndarray  # K bool

    @property
    def inlier_ratio(self) -> float:
        return self.n_inlier / self.n_total if self.n_total else 0.0


def _to_grey(img):
    img = np.asarray(img, dtype=np.float64)
    return img.mean(axis=2) if img.ndim == 3 else img


def harris_response(grey: np.ndarray) -> np.ndarray:
    gx = sobel(grey, axis=1) / 8.0
    gy = sobel(grey, axis=0) / 8.0
    sxx = gaussian_filter(gx * gx, HARRIS_SIGMA)
    syy = gaussian_filter(gy * gy, HARRIS_SIGMA)
    sxy = gaussian_filter(gx * gy, HARRIS_SIGMA)
    return sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) ** 2


def normalize_brightness(grey: np.ndarray) -> np.ndarray:
    """Scale so the mean intensity is 0.5; thresholds then track contrast
    relative to brightness, and noise still counts at its relative level."""
    m = float(grey.mean())
    return grey * (0.5 / m) if m > 1e-6 else grey


def detect_corners(image, max_n: int = 2000, threshold: float = DEFAULT_THRESHOLD,
                   normalize: bool = True) -> FeatureSet:
    """Harris corners after 5x5 non-maximum suppression, strongest first."""
    grey = _to_grey(image)
    if normalize:
        grey = normalize_brightness(grey)
    h, w = grey.shape
    resp = harris_response(grey)
    peak = (resp == maximum_filter(resp, size=5, mode="nearest")) & (resp > threshold)
    m = PATCH_RADIUS + 1
    peak[:m] = peak[-m:] = False
    peak[:, :m] = peak[:, -m:] = False
    ys, xs = np.nonzero(peak)
    order = np.argsort(-resp[ys, xs], kind="stable")[:max_n]
    ys, xs = ys[order], xs[order]
    angle = _orientation(grey, xs, ys)
    desc = _describe(gaussian_filter(grey, 1.0), xs, ys, angle)
    return FeatureSet(np.stack([xs, ys], axis=1).astype(np.float64), angle, desc)


def _orientation(grey, xs, ys):
    r = PATCH_RADIUS
    off = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(off, off, indexing="ij")
    disk = (dx * dx + dy * dy) <= r * r
    if len(xs) == 0:
        return np.zeros(0)
    patches = grey[ys[:, None, None] + dy[None], xs[:, None, None] + dx[None]] * disk[None]
    m01 = (patches * dy[None]).sum(axis=(1, 2))
    m10 = (patches * dx[None]).sum(axis=(1, 2))
    return np.arctan2(m01, m10)


def _describe(smooth, xs, ys, angle):
    n = len(xs)
    if n == 0:
        return np.zeros((0, N_BITS // 8), dtype=np.uint8)
    h, w = smooth.shape
    c, s = np.cos(angle)[:, None], np.sin(angle)[:, None]

    def sample(px, py):
        rx = np.round(c * px[None] - s * py[None]).astype(np.int64)
        ry = np.round(s * px[None] + c * py[None]).astype(np.int64)
        yy = np.clip(ys[:, None] + ry, 0, h - 1)
        xx = np.clip(xs[:, None] + rx, 0, w - 1)
        return smooth[yy, xx]

    a = sample(_PATTERN[:, 0], _PATTERN[:, 1])
    b = sample(_PATTERN[:, 2], _PATTERN[:, 3])
    return np.packbits(a < b, axis=1)


def hamming(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between packed descriptor sets."""
    x = da[:, None, :] ^ db[None, :, :]
    return np.bitwise_count(x).sum(axis=2, dtype=np.int64)


def _candidate_pairs(fa: FeatureSet, fb: FeatureSet, ratio: float):
    if len(fa) < 2 or len(fb) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    dist = hamming(fa.descriptors, fb.descriptors)
    ab = np.argmin(dist, axis=1)
    ba = np.argmin(dist, axis=0)
    rows = np.arange(len(fa))
    mutual = ba[ab] == rows
    part = np.partition(dist, 1, axis=1)
    best, second = part[:, 0], part[:, 1]
    ok = mutual & (best < ratio * second)
    return np.stack([rows[ok], ab[ok]], axis=1)


def _dlt_batch(src, dst):
    """Homographies from K x 4 x 2 point quadruples via SVD; K x 3 x 3."""
    k = src.shape[0]
    x, y = src[..., 0], src[..., 1]
    u, v = dst[..., 0], dst[..., 1]
    z, o = np.zeros_like(x), np.ones_like(x)
    r1 = np.stack([-x, -y, -o, z, z, z, u * x, u * y, u], axis=-1)
    r2 = np.stack([z, z, z, -x, -y, -o, v * x, v * y, v], axis=-1)
    a = np.concatenate([r1, r2], axis=1)  # K x 8 x 9
    _, _, vt = np.linalg.svd(a)
    return vt[:, -1, :].reshape(k, 3, 3)


def _transfer_error(hs, src, dst):
    """Squared reprojection error of every point under every homography; K x N."""
    p = np.concatenate([src, np.ones((len(src), 1))], axis=1)
    q = np.einsum("kij,nj->kni", hs, p)
    w = q[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = q[..., :2] / w[..., None]
    err = ((proj - dst[None]) ** 2).sum(axis=2)
    return np.where(np.isfinite(err), err, np.inf)


def match_and_ransac(fa: FeatureSet, fb: FeatureSet, *, inlier_px: float = 2.0, iterations: int = 500,
                     ratio: float = 0.8, seed: int = 0) -> MatchResult:
    """Mutual nearest-neighbour matching with a ratio test, then RANSAC
    homography fitting; a pair is an inlier within ``inlier_px`` pixels."""
    pairs = _candidate_pairs(fa, fb, ratio)
    n = len(pairs)
    if n < 4:
        return MatchResult(n, 0, None, pairs, np.zeros(n, dtype=bool))
    src = fa.xy[pairs[:, 0]]
    dst = fb.xy[pairs[:, 1]]
    rng = np.random.default_rng(seed)
    picks = np.argsort(rng.random((iterations, n)), axis=1)[:, :4]
    hs = _dlt_batch(src[picks], dst[picks])
    err = _transfer_error(hs, src, dst)
    inl = err <= inlier_px * inlier_px
    counts = inl.sum(axis=1)
    best = int(np.argmax(counts))
    return MatchResult(n, int(counts[best]), hs[best], pairs, inl[best])


def match_images(img_a, img_b, max_n: int = 2000, threshold: float = DEFAULT_THRESHOLD, **kw) -> MatchResult:
    if np.shape(img_a) != np.shape(img_b):
        raise ImagesMismatch(f"{np.shape(img_a)} vs {np.shape(img_b)}")
    return match_and_ransac(detect_corners(img_a, max_n, threshold), detect_corners(img_b, max_n, threshold), **kw)
