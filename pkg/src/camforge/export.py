"""Binary PPM/PGM writers for debug images."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np


def _to_u8(image) -> np.ndarray:
    a = np.nan_to_num(np.asarray(image, dtype=np.float64), nan=0.0, posinf=1.0, neginf=0.0)
    return np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(image, path) -> None:
    """H x W x 3 image in [0, 1] as binary P6."""
    a = _to_u8(image)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"PPM needs H x W x 3, got {a.shape}")
    Path(path).write_bytes(f"P6\n{a.shape[1]} {a.shape[0]}\n255\n".encode() + a.tobytes())


def write_pgm(image, path) -> None:
    """H x W image in [0, 1] as binary 8-bit P5."""
    a = _to_u8(image)
    if a.ndim != 2:
        raise ValueError(f"PGM needs H x W, got {a.shape}")
    Path(path).write_bytes(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode() + a.tobytes())


def write_depth_pgm(depth, path, max_depth_m: float = 100.0) -> float:
    """Depth in meters as 16-bit P5; misses and depths beyond ``max_depth_m``
    saturate at 65535. Returns the meters-per-unit scale, also written as a
    header comment."""
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise ValueError(f"depth PGM needs H x W, got {d.shape}")
    scale = max_depth_m / 65535.0
    q = np.round(np.clip(np.nan_to_num(d, nan=np.inf), 0.0, max_depth_m) / scale).astype(">u2")
    head = f"P5\n# scale_m_per_unit {scale!r}\n{d.shape[1]} {d.shape[0]}\n65535\n"
    Path(path).write_bytes(head.encode() + q.tobytes())
    return scale


def write_label_pgm(labels, path) -> None:
    """Integer label map (ids < 256) as 8-bit P5."""
    a = np.asarray(labels)
    if a.ndim != 2 or a.min(initial=0) < 0 or a.max(initial=0) > 255:
        raise ValueError("label PGM needs an H x W map of ids in [0, 255]")
    Path(path).write_bytes(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode() + a.astype(np.uint8).tobytes())


def read_pnm(path) -> np.ndarray:
    """Image written by the functions above (uint8, or uint16 for maxval 65535)."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(data, pos)
        tokens.append(m.group(2))
        pos = m.end()
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in (b"P5", b"P6") or maxval not in (255, 65535):
        raise ValueError(f"unsupported PNM file {path}")
    shape = (h, w, 3) if magic == b"P6" else (h, w)
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype(np.uint8)
    body = data[pos + 1: pos + 1 + int(np.prod(shape)) * dtype.itemsize]
    return np.frombuffer(body, dtype=dtype).reshape(shape)


def label_colors(labels) -> np.ndarray:
    """Deterministic pseudo-color image for an integer label map."""
    lab = np.asarray(labels, dtype=np.int64)
    rgb = np.stack([(lab * 97) % 251, (lab * 57) % 241, (lab * 31) % 239], axis=-1) / 255.0
    return np.where((lab == 0)[..., None], 0.0, rgb)
