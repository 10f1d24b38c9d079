"""SLIC superpixels with 4-connectivity enforcement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from skimage.measure import label as connected_components

from .imaging import rgb_to_lab


@dataclass(frozen=True)
class SuperpixelGrid:
    """Per-pixel superpixel labels in ``[0, count)``."""

    labels: np.ndarray
    count: int
    areas: np.ndarray

    @classmethod
    def from_labels(cls, labels) -> "SuperpixelGrid":
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        count = int(labels.max()) + 1 if labels.size else 0
        areas = np.bincount(labels.ravel(), minlength=count)
        if count == 0 or np.any(areas == 0):
            raise ValueError("labels must cover every index in [0, count)")
        return cls(labels=labels, count=count, areas=areas)

    @property
    def shape(self):
        return self.labels.shape


def _grid_layout(height, width, target_count):
    nx = max(1, int(round(math.sqrt(target_count * width / height))))
    ny = max(1, int(round(target_count / nx)))
    return min(nx, width), min(ny, height)


def _gradient(lab):
    padded = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return (dx**2).sum(axis=-1) + (dy**2).sum(axis=-1)


def _relabel_first_seen(labels):
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = uniq[np.argsort(first, kind="stable")]
    lut = np.empty(int(uniq.max()) + 1, dtype=np.int64)
    lut[order] = np.arange(order.size)
    return lut[labels]


def enforce_connectivity(labels, min_size: float | None = None) -> np.ndarray:
    """Make every label a single 4-connected region.

    Each connected fragment becomes its own region; fragments smaller than
    ``min_size`` (default: a quarter of the mean region area) are merged into
    their largest adjacent region, smallest fragments first. Labels are
    re-compacted to ``[0, n)`` in raster order of first appearance.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.size == 0:
        raise ValueError("labels must be a non-empty 2-D array")
    if min_size is None:
        min_size = labels.size / np.unique(labels).size / 4.0

    # skimage treats 0 as background, so shift to strictly positive values
    shifted = labels.astype(np.int64) - labels.min() + 1
    comp = connected_components(shifted, background=0, connectivity=1) - 1
    ncomp = int(comp.max()) + 1
    size = np.bincount(comp.ravel(), minlength=ncomp).astype(np.int64)

    pairs = []
    horiz = comp[:, :-1] != comp[:, 1:]
    pairs.append(np.stack([comp[:, :-1][horiz], comp[:, 1:][horiz]], axis=1))
    vert = comp[:-1, :] != comp[1:, :]
    pairs.append(np.stack([comp[:-1, :][vert], comp[1:, :][vert]], axis=1))
    pairs = np.concatenate(pairs)
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)

    neighbors = [set() for _ in range(ncomp)]
    for a, b in pairs.tolist():
        neighbors[a].add(b)
        neighbors[b].add(a)

    parent = np.arange(ncomp)

    def find(c):
        root = c
        while parent[root] != root:
            root = parent[root]
        while parent[c] != root:
            parent[c], c = root, parent[c]
        return root

    for c in np.lexsort((np.arange(ncomp), size)).tolist():
        r = find(c)
        if size[r] >= min_size:
            continue
        adjacent = {find(n) for n in neighbors[r]} - {r}
        if not adjacent:
            continue
        target = min(adjacent, key=lambda n: (-size[n], n))
        parent[r] = target
        size[target] += size[r]
        neighbors[target] |= neighbors[r]
        neighbors[r] = set()

    roots = np.array([find(c) for c in range(ncomp)])
    return _relabel_first_seen(roots[comp])


def slic(
    frame,
    target_count: int = 300,
    compactness: float = 10.0,
    max_iters: int = 10,
) -> SuperpixelGrid:
    """Partition a frame into roughly ``target_count`` SLIC superpixels.

    Clustering runs in (L*, a*, b*, x, y) with distance
    ``sqrt(d_lab**2 + (compactness / S)**2 * d_xy**2)`` where ``S`` is the seed
    spacing; each center only competes for pixels inside a window of two grid
    cells around it.
    """
    frame = np.asarray(frame, dtype=np.float64)
    height, width = frame.shape[:2]
    npix = height * width
    if npix < 2:
        raise ValueError("cannot segment a single-pixel frame")
    if target_count < 2 or target_count > npix:
        raise ValueError(f"target_count must lie in [2, {npix}], got {target_count}")
    if compactness <= 0 or max_iters < 1:
        raise ValueError("compactness and max_iters must be positive")

    lab = rgb_to_lab(frame, rescale=False)
    nx, ny = _grid_layout(height, width, target_count)
    cell_w, cell_h = width / nx, height / ny
    step = math.sqrt(npix / (nx * ny))
    weight = (compactness / step) ** 2

    cx = (np.arange(nx) + 0.5) * cell_w
    cy = (np.arange(ny) + 0.5) * cell_h
    seed_x = np.tile(np.floor(cx).astype(int), ny)
    seed_y = np.repeat(np.floor(cy).astype(int), nx)

    # nudge seeds to the lowest-gradient pixel of their 3x3 neighborhood
    grad = _gradient(lab)
    padded = np.pad(grad, 1, mode="constant", constant_values=np.inf)
    offsets = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
    cand = np.stack([padded[seed_y + 1 + dy, seed_x + 1 + dx] for dy, dx in offsets])
    best = np.argmin(cand, axis=0)
    seed_y = seed_y + np.array([offsets[b][0] for b in best])
    seed_x = seed_x + np.array([offsets[b][1] for b in best])

    k = nx * ny
    centers = np.column_stack([lab[seed_y, seed_x], seed_x, seed_y]).astype(np.float64)

    ys, xs = np.mgrid[0:height, 0:width]
    labels = (np.minimum((ys / cell_h).astype(int), ny - 1) * nx
              + np.minimum((xs / cell_w).astype(int), nx - 1))
    flat_lab = lab.reshape(-1, 3)
    half_w, half_h = int(math.ceil(cell_w)), int(math.ceil(cell_h))

    for _ in range(max_iters):
        dist = np.full((height, width), np.inf)
        for c in range(k):
            l0, a0, b0, x0, y0 = centers[c]
            xi, yi = int(round(x0)), int(round(y0))
            ylo, yhi = max(0, yi - half_h), min(height, yi + half_h + 1)
            xlo, xhi = max(0, xi - half_w), min(width, xi + half_w + 1)
            win = lab[ylo:yhi, xlo:xhi]
            d = ((win[..., 0] - l0) ** 2 + (win[..., 1] - a0) ** 2
                 + (win[..., 2] - b0) ** 2)
            d += weight * ((xs[ylo:yhi, xlo:xhi] - x0) ** 2
                           + (ys[ylo:yhi, xlo:xhi] - y0) ** 2)
            closer = d < dist[ylo:yhi, xlo:xhi]
            dist[ylo:yhi, xlo:xhi][closer] = d[closer]
            labels[ylo:yhi, xlo:xhi][closer] = c

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k)
        alive = counts > 0
        sums = np.column_stack(
            [np.bincount(flat, weights=flat_lab[:, ch], minlength=k) for ch in range(3)]
            + [np.bincount(flat, weights=xs.ravel(), minlength=k),
               np.bincount(flat, weights=ys.ravel(), minlength=k)]
        )
        new_centers = centers.copy()
        new_centers[alive] = sums[alive] / counts[alive, None]
        if np.array_equal(new_centers, centers):
            break
        centers = new_centers

    merged = enforce_connectivity(labels, min_size=npix / k / 4.0)
    return SuperpixelGrid.from_labels(merged)


def boundary_length(labels) -> int:
    """Number of 4-neighbor pixel pairs carrying different labels."""
    labels = np.asarray(labels)
    return int((labels[:, :-1] != labels[:, 1:]).sum() + (labels[:-1, :] != labels[1:, :]).sum())
