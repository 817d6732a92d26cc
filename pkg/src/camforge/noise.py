"""Affine (photon + thermal) sensor noise: calibration, generalization, synthesis.

Variance at mean intensity ``I``::

    var(I) = sigma_p_sq * I + sigma_r_sq

A model calibrated at gain ``g0`` and pixel area ``a0`` is moved to gain
``g`` and pixel area ``a`` by the effective gain ratio
``r = g * (a0 / a) / g0``: the photon term scales with ``r`` and the
thermal term with ``r**2``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from camforge.errors import AllClipped, InsufficientData, ParseError

CLIP_LOW = 0.05
CLIP_HIGH = 0.95


@dataclass(frozen=True)
class NoiseModel:
    sigma_p_sq: float
    sigma_r_sq: float
    g0_lin: float
    pixel_area0_um2: float
    clamped: bool = False

    def __post_init__(self):
        if self.sigma_p_sq < 0 or self.sigma_r_sq < 0:
            raise ValueError("noise coefficients must be non-negative")
        if self.g0_lin <= 0 or self.pixel_area0_um2 <= 0:
            raise ValueError("reference gain and pixel area must be positive")

    @property
    def g0_db(self) -> float:
        return 20.0 * math.log10(self.g0_lin)


REFERENCE_MODEL = NoiseModel(4e-4, 1e-5, 10.0 ** (15.0 / 20.0), 1.55 ** 2)
ZERO_MODEL = NoiseModel(0.0, 0.0, 1.0, 1.0)


def calibrate(samples, g0_lin: float, pixel_area0_um2: float) -> NoiseModel:
    """Weighted least-squares affine fit of (mean, variance) pairs.

    Levels near the clipping limits are dropped; negative coefficients are
    clamped to zero and flagged.
    """
    data = np.asarray(list(samples), dtype=np.float64).reshape(-1, 2)
    if len(data) < 2 or len(np.unique(data[:, 0])) < 2:
        raise InsufficientData("need at least two samples with distinct means")
    keep = (data[:, 0] >= CLIP_LOW) & (data[:, 0] <= CLIP_HIGH)
    data = data[keep]
    if len(data) == 0:
        raise AllClipped("every sample lies outside the unclipped range")
    if len(data) < 2 or len(np.unique(data[:, 0])) < 2:
        raise InsufficientData("fewer than two unclipped levels remain")
    A = np.stack([data[:, 0], np.ones(len(data))], axis=1)
    coef = np.linalg.lstsq(A, data[:, 1], rcond=None)[0]
    # a sample variance has standard error proportional to the variance itself,
    # so refit with rows weighted by 1 / fitted variance
    floor = max(float(np.abs(data[:, 1]).max()) * 1e-6, 1e-300)
    for _ in range(2):
        w = 1.0 / np.maximum(A @ coef, floor)
        coef = np.linalg.lstsq(A * w[:, None], data[:, 1] * w, rcond=None)[0]
    slope, intercept = coef
    clamped = slope < 0 or intercept < 0
    if clamped:
        warnings.warn(f"negative fitted noise coefficient clamped to 0 (slope={slope:g}, intercept={intercept:g})")
    return NoiseModel(max(float(slope), 0.0), max(float(intercept), 0.0), g0_lin, pixel_area0_um2, bool(clamped))


def generalize(model: NoiseModel, g_lin: float, pixel_area_um2: float) -> NoiseModel:
    """Model for another gain and pixel area; larger pixels act as lower gain."""
    if g_lin <= 0 or pixel_area_um2 <= 0:
        raise ValueError("gain and pixel area must be positive")
    g_eff = g_lin * (model.pixel_area0_um2 / pixel_area_um2)
    r = g_eff / model.g0_lin
    # the result is referenced to (g_lin, pixel_area) so repeated calls compose
    return NoiseModel(r * model.sigma_p_sq, r * r * model.sigma_r_sq, g_lin, pixel_area_um2, model.clamped)


def variance_at(model: NoiseModel, intensity):
    return model.sigma_p_sq * np.asarray(intensity, dtype=np.float64) + model.sigma_r_sq


def synthesize(image: np.ndarray, model: NoiseModel, seed, exact: bool = False) -> np.ndarray:
    """Noisy copy of an exposed image in [0, 1], clipped after noise.

    The default adds heteroscedastic Gaussian noise with the model variance;
    ``exact`` draws Poisson photon counts plus Gaussian read noise instead.
    """
    img = np.asarray(image, dtype=np.float64)
    if model.sigma_p_sq == 0 and model.sigma_r_sq == 0:
        return img.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if exact and model.sigma_p_sq > 0:
        counts = rng.poisson(np.maximum(img, 0.0) / model.sigma_p_sq)
        out = counts * model.sigma_p_sq + rng.normal(0.0, math.sqrt(model.sigma_r_sq), img.shape)
    else:
        out = img + rng.standard_normal(img.shape) * np.sqrt(variance_at(model, np.maximum(img, 0.0)))
    return np.clip(out, 0.0, 1.0)


def level_statistics(image: np.ndarray, labels: np.ndarray):
    """(label, mean, variance) per label over all channels, sorted by label."""
    img = np.asarray(image, dtype=np.float64)
    out = []
    for lab in np.unique(labels):
        vals = img[labels == lab].ravel()
        out.append((int(lab), float(vals.mean()), float(vals.var(ddof=1)) if vals.size > 1 else 0.0))
    return out


# ---------------------------------------------------------------- files


def save_model(model: NoiseModel, path) -> None:
    text = (
        f"sigma_p_sq = {model.sigma_p_sq!r}\n"
        f"sigma_r_sq = {model.sigma_r_sq!r}\n"
        f"g0_db = {model.g0_db!r}\n"
        f"pixel_area_um2 = {model.pixel_area0_um2!r}\n"
    )
    Path(path).write_text(text)


def load_model(path) -> NoiseModel:
    vals = {}
    for i, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", i)
        k, v = (s.strip() for s in line.split("=", 1))
        try:
            vals[k] = float(v)
        except ValueError:
            raise ParseError(f"bad number for {k}: {v!r}", i) from None
    missing = {"sigma_p_sq", "sigma_r_sq", "g0_db", "pixel_area_um2"} - vals.keys()
    if missing:
        raise ParseError(f"noise model file missing keys: {sorted(missing)}")
    return NoiseModel(vals["sigma_p_sq"], vals["sigma_r_sq"], 10.0 ** (vals["g0_db"] / 20.0), vals["pixel_area_um2"])


def read_samples_csv(path):
    """(mean, variance) rows from a CSV with a ``mean,variance`` header."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["mean", "variance"]:
            raise ParseError("expected header 'mean,variance'", 1)
        for i, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                raise ParseError(f"bad sample row {row!r}", i) from None
    return rows
