"""Per-superpixel color/position descriptors and descriptor distances."""

from __future__ import annotations

import numpy as np

from .imaging import rgb_to_hsv, rgb_to_lab

COLOR_SPACES = ("rgb", "lab", "hsv")

_CONVERTERS = {
    "rgb": lambda frame: frame,
    "lab": rgb_to_lab,
    "hsv": rgb_to_hsv,
}


def normalize_spaces(spaces) -> tuple:
    """Validate a color-space selection and return it in canonical order."""
    if isinstance(spaces, str):
        spaces = [s for s in spaces.split(",") if s]
    chosen = {s.strip().lower() for s in spaces}
    unknown = chosen - set(COLOR_SPACES)
    if unknown:
        raise ValueError(f"unknown color space(s): {sorted(unknown)}")
    if not chosen:
        raise ValueError("at least one color space is required")
    return tuple(s for s in COLOR_SPACES if s in chosen)


def describe(frame, grid, spaces=COLOR_SPACES) -> np.ndarray:
    """Mean color features and normalized centroid of every superpixel.

    Returns an ``(N, 3 * len(spaces) + 2)`` array. Colors are converted per
    pixel and then averaged; positions use ``x / (W - 1)`` and ``y / (H - 1)``
    so every component lies in [0, 1].
    """
    spaces = normalize_spaces(spaces)
    frame = np.asarray(frame, dtype=np.float64)
    height, width = frame.shape[:2]
    if grid.shape != (height, width):
        raise ValueError(f"grid shape {grid.shape} does not match frame {(height, width)}")

    flat = grid.labels.ravel()
    areas = grid.areas.astype(np.float64)
    columns = []
    for name in spaces:
        pix = _CONVERTERS[name](frame).reshape(-1, 3)
        for ch in range(3):
            columns.append(np.bincount(flat, weights=pix[:, ch], minlength=grid.count))
    ys, xs = np.mgrid[0:height, 0:width]
    columns.append(np.bincount(flat, weights=xs.ravel() / max(width - 1, 1), minlength=grid.count))
    columns.append(np.bincount(flat, weights=ys.ravel() / max(height - 1, 1), minlength=grid.count))
    feats = np.column_stack(columns) / areas[:, None]
    return np.clip(feats, 0.0, 1.0)


def l1_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"descriptor length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"descriptor length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def save_descriptors(feats, path) -> None:
    np.savetxt(path, np.asarray(feats), delimiter=",", fmt="%.8f")
