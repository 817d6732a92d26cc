"""Pinhole camera model, deterministic ray-cast renderer and exposure.

Images are numpy arrays indexed ``[row, col]`` (H x W, channels last).
Camera frame: ``right``, ``up``, ``forward``; pixel ``(u, v)`` covers the
continuous square ``[u, u+1) x [v, v+1)`` and ``x = cx + f_px * X / Z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from camforge import raycast
from camforge.errors import DegenerateSensor
from camforge.scene import SceneInstance, Texture

MID_GREY_ALBEDO = 0.18
CALIBRATION_EXPOSURE_MS = 30.0
CALIBRATION_GAIN_DB = 15.0
DEFAULT_RENDER_SIZE = (160, 120)


def gain_linear(gain_db: float) -> float:
    """Amplitude convention, 20 dB per decade."""
    return 10.0 ** (gain_db / 20.0)


@dataclass(frozen=True)
class CameraDesign:
    pitch_deg: float = 0.0
    height_m: float = 1.5
    focal_mm: float = 3.6
    sensor_w_mm: float = 6.2
    sensor_h_mm: float = 4.65
    pixel_um: float = 1.55
    exposure_ms: float = 30.0
    gain_db: float = 15.0
    baseline_m: float = 0.0
    n_cameras: int = 1
    aperture_f: float = 2.0  # accepted, not rendered

    @property
    def hfov_deg(self) -> float:
        return math.degrees(2.0 * math.atan(self.sensor_w_mm / (2.0 * self.focal_mm)))

    @property
    def pixel_area_um2(self) -> float:
        return self.pixel_um ** 2


@dataclass(frozen=True)
class Intrinsics:
    f_px: float
    cx: float
    cy: float
    width: int
    height: int

    @property
    def hfov_deg(self) -> float:
        return math.degrees(2.0 * math.atan(self.width / (2.0 * self.f_px)))

    def scaled(self, width: int, height: int) -> "Intrinsics":
        """Same field of view sampled on a ``width`` x ``height`` grid."""
        return Intrinsics(self.f_px * width / self.width, width / 2.0, height / 2.0, width, height)


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0

    def axes(self):
        yaw = math.radians(self.yaw_deg)
        pitch = math.radians(self.pitch_deg)
        forward = np.array([math.sin(yaw) * math.cos(pitch), math.sin(pitch), math.cos(yaw) * math.cos(pitch)])
        right = np.array([math.cos(yaw), 0.0, -math.sin(yaw)])
        up = np.cross(forward, right)
        return right, up, forward

    def shifted(self, right_m: float) -> "Pose":
        right, _, _ = self.axes()
        p = np.asarray(self.position) + right_m * right
        return Pose(tuple(float(v) for v in p), self.yaw_deg, self.pitch_deg)


@dataclass(frozen=True)
class Frame:
    irradiance: np.ndarray  # H x W x 3, linear
    exposed: np.ndarray  # H x W x 3 in [0, 1]
    depth: np.ndarray  # H x W meters along the optical axis, inf on a miss
    semantic: np.ndarray  # H x W class ids
    instance: np.ndarray  # H x W instance ids, 0 on a miss
    pose: Pose
    intrinsics: Intrinsics
    clipped: int = 0


def intrinsics_of(design: CameraDesign) -> Intrinsics:
    """Native pixel grid of the design."""
    if design.focal_mm <= 0 or design.sensor_w_mm <= 0 or design.sensor_h_mm <= 0 or design.pixel_um <= 0:
        raise DegenerateSensor(f"non-positive optics/sensor dimensions in {design}")
    w = int(math.floor(1000.0 * design.sensor_w_mm / design.pixel_um + 1e-9))
    h = int(math.floor(1000.0 * design.sensor_h_mm / design.pixel_um + 1e-9))
    if w < 8 or h < 8:
        raise DegenerateSensor(f"sensor resolves to {w}x{h} pixels; need at least 8x8")
    return Intrinsics(1000.0 * design.focal_mm / design.pixel_um, w / 2.0, h / 2.0, w, h)


def render_intrinsics(design: CameraDesign, scale: float = 1.0, max_size=DEFAULT_RENDER_SIZE) -> Intrinsics:
    """Native intrinsics resampled by ``scale`` and capped at ``max_size``.

    A fixed ``scale`` keeps relative resolution between designs; the cap
    bounds runtime.
    """
    k = intrinsics_of(design)
    s = scale
    if max_size is not None:
        s = min(s, max_size[0] / k.width, max_size[1] / k.height)
    w = max(8, int(round(k.width * s)))
    h = max(8, int(round(k.height * s)))
    if (w, h) == (k.width, k.height):
        return k
    return k.scaled(w, h)


def fov_to_focal(hfov_deg: float, sensor_w_mm: float) -> float:
    if not 0.0 < hfov_deg < 180.0:
        raise ValueError(f"hfov must be in (0, 180), got {hfov_deg}")
    return sensor_w_mm / (2.0 * math.tan(math.radians(hfov_deg) / 2.0))


def design_pose(design: CameraDesign, x: float, z: float, yaw_deg: float = 0.0, height_m=None) -> Pose:
    h = design.height_m if height_m is None else height_m
    return Pose((float(x), float(h), float(z)), yaw_deg, design.pitch_deg)


# ---------------------------------------------------------------- shading


def _hash01(i, j, k, seed):
    h = (i.astype(np.int64) * 73856093) ^ (j.astype(np.int64) * 19349663) ^ (k.astype(np.int64) * 83492791)
    h = (h ^ (seed * 2654435761)) & 0xFFFFFFFF
    h = (h ^ (h >> 15)) * 0x2C1B3C6D & 0xFFFFFFFF
    h = (h ^ (h >> 12)) * 0x297A2D39 & 0xFFFFFFFF
    h = h ^ (h >> 15)
    return (h & 0xFFFFFF) / float(0xFFFFFF)


def _value_noise(a, b, seed):
    ia, ib = np.floor(a), np.floor(b)
    fa, fb = a - ia, b - ib
    fa = fa * fa * (3 - 2 * fa)
    fb = fb * fb * (3 - 2 * fb)
    k = np.zeros_like(ia)
    v00 = _hash01(ia, ib, k, seed)
    v10 = _hash01(ia + 1, ib, k, seed)
    v01 = _hash01(ia, ib + 1, k, seed)
    v11 = _hash01(ia + 1, ib + 1, k, seed)
    return (v00 * (1 - fa) + v10 * fa) * (1 - fb) + (v01 * (1 - fa) + v11 * fa) * fb


def _fade(cycles_per_pixel):
    """Weight of a texture octave given its frequency in cycles per pixel;
    detail finer than the pixel footprint averages out instead of aliasing."""
    return np.clip(1.5 - 2.0 * cycles_per_pixel, 0.0, 1.0)


def _texture(points, axis, prim, arrays, footprint=None):
    """Albedo pattern in [0, 1] at hit points (1 = base albedo).

    ``footprint`` is the surface length covered by one pixel; octaves it
    cannot resolve are replaced by their mean.
    """
    kind = arrays["texture"][prim]
    freq = arrays["tex_freq"][prim]
    contrast = arrays["tex_contrast"][prim]
    fp = np.zeros(points.shape[0]) if footprint is None else footprint
    # in-face coordinates: the two axes other than the hit normal
    a_ax = np.where(axis == 0, 2, 0)
    b_ax = np.where(axis == 1, 2, 1)
    rows = np.arange(points.shape[0])
    a = points[rows, a_ax] * freq
    b = points[rows, b_ax] * freq
    c = fp * freq  # cycles per pixel of the base frequency
    pattern = np.zeros(points.shape[0])

    def blend(octave, mult, m):
        w = _fade(mult * c[m])
        return w * octave + (1.0 - w) * 0.5

    m = kind == Texture.CHECKER
    if m.any():
        pattern[m] = blend((np.floor(2 * a[m]) + np.floor(2 * b[m])) % 2, 1.0, m)
    m = kind == Texture.STRIPES
    if m.any():
        pattern[m] = blend(np.floor(2 * b[m]) % 2, 1.0, m)
    m = kind == Texture.NOISE
    if m.any():
        seeds = arrays["instance_id"][prim[m]]
        n1 = _value_noise(a[m], b[m], seeds)
        n2 = _value_noise(4 * a[m] + 17.0, 4 * b[m] + 31.0, seeds + 7)
        # blocky cells add corners that smooth value noise lacks
        cells = _hash01(np.floor(2 * a[m]), np.floor(2 * b[m]), np.ones_like(a[m]), seeds + 13)
        pattern[m] = 0.45 * blend(n1, 1.0, m) + 0.25 * blend(n2, 4.0, m) + 0.3 * blend(cells, 2.0, m)
    return 1.0 - contrast * pattern


def _pixel_dirs(k: Intrinsics, pose: Pose, supersample: int):
    right, up, forward = pose.axes()
    n = supersample
    offs = (np.arange(n) + 0.5) / n
    us = (np.arange(k.width)[:, None] + offs[None, :]).ravel()
    vs = (np.arange(k.height)[:, None] + offs[None, :]).ravel()
    x = (us - k.cx) / k.f_px
    y = (vs - k.cy) / k.f_px
    xx, yy = np.meshgrid(x, y)
    dirs = forward[None, :] + xx.ravel()[:, None] * right[None, :] - yy.ravel()[:, None] * up[None, :]
    return dirs, xx.shape


def _shade(scene: SceneInstance, origin, dirs, t, prim, axis, f_px=None):
    arr = scene.arrays
    n = dirs.shape[0]
    phi = np.full((n, 3), float(scene.sky))
    hit = prim >= 0
    if not hit.any():
        return phi
    p_idx = prim[hit]
    ax = axis[hit]
    d = dirs[hit]
    pts = origin[None, :] + t[hit, None] * d
    normal = np.zeros_like(pts)
    normal[np.arange(len(ax)), ax] = -np.sign(d[np.arange(len(ax)), ax])
    footprint = None
    if f_px is not None:
        norm = np.linalg.norm(d, axis=1)
        cos = np.abs(d[np.arange(len(ax)), ax]) / norm
        # geometric mean of the along- and across-slope footprints
        footprint = t[hit] * norm / (f_px * np.sqrt(np.maximum(cos, 0.05)))
    albedo = arr["albedo"][p_idx] * _texture(pts, ax, p_idx, arr, footprint)[:, None]
    illum = np.full(len(pts), float(scene.ambient))
    if scene.lights:
        lift = pts + 1e-4 * normal
        for light in scene.lights:
            lp = np.asarray(light.position, dtype=np.float64)
            to_l = lp[None, :] - lift
            r2 = np.einsum("ij,ij->i", to_l, to_l)
            cos = np.einsum("ij,ij->i", to_l, normal) / np.sqrt(r2)
            lit = cos > 0
            if not lit.any():
                continue
            shadow = raycast.occluded(lift[lit], lp, arr["lo"], arr["hi"], p_idx[lit])
            contrib = np.zeros(len(pts))
            contrib[np.flatnonzero(lit)[~shadow]] = (light.intensity * cos[lit] / r2[lit])[~shadow]
            illum += contrib
    phi[hit] = albedo * illum[:, None]
    return phi


def expose(irradiance: np.ndarray, exposure_ms: float, gain_db: float, kappa: float):
    """Clipped linear exposure ``kappa * E * G * phi``; returns (image, n_clipped)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    raw = kappa * exposure_ms * gain_linear(gain_db) * np.asarray(irradiance, dtype=np.float64)
    clipped = int(np.count_nonzero(raw > 1.0))
    return np.clip(raw, 0.0, 1.0), clipped


def default_kappa() -> float:
    """Radiometric scale mapping an 18% grey card to 0.5 under the day preset."""
    return KAPPA_DAY


def render(scene: SceneInstance, pose: Pose, design: CameraDesign, supersample: int = 1, *,
           scale: float = 1.0, max_size=None, kappa: float | None = None,
           intrinsics: Intrinsics | None = None, shade: bool = True) -> Frame:
    """Ray-cast one frame of ``scene`` seen from ``pose``.

    One ray per pixel center, or ``supersample**2`` stratified rays whose
    irradiance is averaged; depth and labels always come from the center ray.
    ``shade=False`` skips lighting and leaves the images black.
    """
    k = intrinsics or render_intrinsics(design, scale, max_size)
    kappa = KAPPA_DAY if kappa is None else kappa
    origin = np.asarray(pose.position, dtype=np.float64)
    arr = scene.arrays
    dirs, _ = _pixel_dirs(k, pose, 1)
    t, prim, axis = raycast.cast_shared_origin(origin, dirs, arr["lo"], arr["hi"])
    if not shade:
        phi = np.zeros((k.height, k.width, 3))
    elif supersample > 1:
        sdirs, _ = _pixel_dirs(k, pose, supersample)
        st, sprim, saxis = raycast.cast_shared_origin(origin, sdirs, arr["lo"], arr["hi"])
        phi = _shade(scene, origin, sdirs, st, sprim, saxis, k.f_px * supersample)
        s = supersample
        phi = phi.reshape(k.height, s, k.width, s, 3).mean(axis=(1, 3))
    else:
        phi = _shade(scene, origin, dirs, t, prim, axis, k.f_px).reshape(k.height, k.width, 3)
    hit = prim >= 0
    # dirs have unit forward component, so t is depth along the optical axis
    depth = np.where(hit, t, np.inf).reshape(k.height, k.width)
    semantic = np.where(hit, arr["class_id"][np.maximum(prim, 0)], 0).reshape(k.height, k.width)
    instance = np.where(hit, arr["instance_id"][np.maximum(prim, 0)], 0).reshape(k.height, k.width)
    exposed, clipped = expose(phi, design.exposure_ms, design.gain_db, kappa)
    return Frame(phi, exposed, depth, semantic, instance, pose, k, clipped)


@dataclass(frozen=True)
class StereoFrames:
    left: Frame
    right: Frame
    gt_disparity: np.ndarray  # NaN where not visible in both views
    in_range: np.ndarray  # visible and gt disparity < d_max
    baseline_m: float


def render_stereo(scene: SceneInstance, pose: Pose, design: CameraDesign, *, d_max: float = 192.0,
                  scale: float = 1.0, max_size=None, kappa: float | None = None) -> StereoFrames:
    """Parallel-axis pair, right camera displaced ``+baseline`` along x_cam."""
    if design.baseline_m <= 0:
        raise ValueError("stereo rendering needs a positive baseline")
    k = render_intrinsics(design, scale, max_size)
    left = render(scene, pose, design, intrinsics=k, kappa=kappa)
    right = render(scene, pose.shifted(design.baseline_m), design, intrinsics=k, kappa=kappa)
    depth = left.depth
    finite = np.isfinite(depth)
    disp = np.full(depth.shape, np.nan)
    disp[finite] = k.f_px * design.baseline_m / depth[finite]
    # visibility in the right view: reproject and compare depths
    cols = np.arange(k.width)[None, :] + 0.5 - np.nan_to_num(disp, nan=0.0)
    ur = np.floor(cols).astype(np.int64)
    rows = np.broadcast_to(np.arange(k.height)[:, None], depth.shape)
    inside = finite & (ur >= 0) & (ur < k.width)
    rd = np.full(depth.shape, np.nan)
    rd[inside] = right.depth[rows[inside], ur[inside]]
    # a shared surface sits at the same depth in both views
    visible = inside & (np.abs(rd - depth) <= 0.02 * depth + 1e-6)
    disp[~visible] = np.nan
    in_range = visible & (disp < d_max)
    return StereoFrames(left, right, disp, in_range, design.baseline_m)


def disparity_to_depth(disparity, f_px: float, baseline_m: float, max_depth: float = np.inf):
    d = np.asarray(disparity, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(d > 0, f_px * baseline_m / d, np.inf)
    return np.minimum(z, max_depth)


def project(points, pose: Pose, k: Intrinsics):
    """Continuous pixel coordinates (x, y) and depth of world points."""
    right, up, forward = pose.axes()
    rel = np.asarray(points, dtype=np.float64) - np.asarray(pose.position)[None, :]
    zc = rel @ forward
    x = k.cx + k.f_px * (rel @ right) / zc
    y = k.cy - k.f_px * (rel @ up) / zc
    return x, y, zc


def calibrate_kappa(target_level: float = 0.5, albedo: float = MID_GREY_ALBEDO, lux: float = 20.0,
                    exposure_ms: float = CALIBRATION_EXPOSURE_MS, gain_db: float = CALIBRATION_GAIN_DB,
                    tol: float = 1e-12) -> float:
    """Bisect kappa so a rendered grey card exposes to ``target_level``."""
    from camforge.scene import Box, SceneInstance as _SI, SceneKind, TARGET_CLASS
    card = _SI(SceneKind.TARGET, (1.0, 1.0, 1.0),
               (Box((-1.0, -1.0, 1.0), (1.0, 1.0, 1.0), TARGET_CLASS, 1, (albedo,) * 3),),
               (), lux, 0.0, (), (), illuminance_lux=lux)
    design = CameraDesign(focal_mm=1.0, sensor_w_mm=0.016, sensor_h_mm=0.016, pixel_um=1.0,
                          exposure_ms=exposure_ms, gain_db=gain_db)
    phi = render(card, Pose((0.0, 0.0, 0.0)), design, kappa=1.0).irradiance
    lo, hi = 0.0, 1.0
    while expose(phi, exposure_ms, gain_db, hi)[0].mean() < target_level:
        hi *= 2.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if expose(phi, exposure_ms, gain_db, mid)[0].mean() < target_level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# kappa for the day preset: 0.5 / (30 ms * 10**(15/20) * 0.18 * 20 lux)
KAPPA_DAY = 0.5 / (CALIBRATION_EXPOSURE_MS * gain_linear(CALIBRATION_GAIN_DB) * MID_GREY_ALBEDO * 20.0)


def with_sensor(design: CameraDesign, w_mm: float, h_mm: float, pixel_um: float) -> CameraDesign:
    return replace(design, sensor_w_mm=w_mm, sensor_h_mm=h_mm, pixel_um=pixel_um)
