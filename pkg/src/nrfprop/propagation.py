"""Temporal propagation of superpixel foregroundness and backgroundness.

Each frame's scores are pulled from its keyframes through the reversible
flow and blended with its own initialization by the closed-form minimizer of

    ||x - x_u||^2 + lambda_c * sum_v ||x - F_uv x_v||^2

after which foreground and background are fused into an importance map,
thresholded and closed.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import describe, normalize_spaces
from .flow import FLOW_MODES, build_flow, keyframe_set
from .imaging import morphological_close, resize_map
from .superpixel import SuperpixelGrid, slic

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PropagationConfig:
    lambda_c: float = 0.5
    k0: int = 15
    dk: int = 5
    threshold_ratio: float = 0.2
    closing_radius: int = 3
    superpixels: int = 300
    compactness: float = 10.0
    slic_iters: int = 10
    spaces: tuple = ("rgb", "lab", "hsv")
    flow_mode: str = "reversible"

    def __post_init__(self):
        if not (self.lambda_c >= 0):
            raise ValueError("lambda_c must be >= 0 or inf")
        if self.k0 < 1 or self.dk < 1:
            raise ValueError("k0 and dk must be >= 1")
        if not 0 < self.threshold_ratio <= 1:
            raise ValueError("threshold_ratio must lie in (0, 1]")
        if self.closing_radius < 1:
            raise ValueError("closing_radius must be >= 1")
        if self.superpixels < 2 or self.compactness <= 0 or self.slic_iters < 1:
            raise ValueError("invalid superpixel parameters")
        if self.flow_mode not in FLOW_MODES:
            raise ValueError(f"flow_mode must be one of {FLOW_MODES}")
        object.__setattr__(self, "spaces", normalize_spaces(self.spaces))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["spaces"] = list(self.spaces)
        if math.isinf(self.lambda_c):
            out["lambda_c"] = "inf"
        return out


def init_scores(values, grid: SuperpixelGrid) -> np.ndarray:
    """Mean map value inside every superpixel."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != grid.shape:
        raise ValueError(f"map shape {values.shape} does not match grid {grid.shape}")
    sums = np.bincount(grid.labels.ravel(), weights=values.ravel(), minlength=grid.count)
    return sums / grid.areas


def propagate(flow, scores_v) -> np.ndarray:
    """Scores of v carried onto the superpixels of u; empty rows give 0."""
    scores_v = np.asarray(scores_v, dtype=np.float64)
    if flow.cols != scores_v.shape[0]:
        raise ValueError(f"flow has {flow.cols} columns but got {scores_v.shape[0]} scores")
    return flow.matrix @ scores_v


def refine(own, propagated, lambda_c: float) -> np.ndarray:
    """Closed-form refinement ``(x + lambda_c * sum(p)) / (1 + lambda_c * n)``.

    ``lambda_c = inf`` drops the frame's own scores and returns the mean of the
    propagated vectors; an empty ``propagated`` list returns ``own`` unchanged.
    """
    own = np.asarray(own, dtype=np.float64)
    propagated = [np.asarray(p, dtype=np.float64) for p in propagated]
    for p in propagated:
        if p.shape != own.shape:
            raise ValueError(f"score length mismatch: {p.shape} vs {own.shape}")
    if lambda_c < 0:
        raise ValueError("lambda_c must be >= 0")
    if not propagated:
        return own.copy()
    total = np.sum(propagated, axis=0)
    if math.isinf(lambda_c):
        return total / len(propagated)
    return (own + lambda_c * total) / (1.0 + lambda_c * len(propagated))


def importance_map(grid: SuperpixelGrid, fg, bg) -> np.ndarray:
    fg = np.asarray(fg, dtype=np.float64)
    bg = np.asarray(bg, dtype=np.float64)
    if fg.shape != (grid.count,) or bg.shape != (grid.count,):
        raise ValueError("score vectors must have one entry per superpixel")
    return (fg * (1.0 - bg))[grid.labels]


def binarize(values, ratio: float = 0.2) -> np.ndarray:
    """Keep pixels at or above ``ratio`` times the map maximum."""
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    values = np.asarray(values, dtype=np.float64)
    peak = values.max(initial=0.0)
    if peak <= 0:
        return np.zeros(values.shape, dtype=bool)
    return values >= ratio * peak


@dataclass
class FrameState:
    grid: SuperpixelGrid
    features: np.ndarray
    fg: np.ndarray
    bg: np.ndarray
    timings: dict = field(default_factory=dict)


@dataclass
class FrameResult:
    keyframes: list
    fg: np.ndarray
    bg: np.ndarray
    propagated_fg: list
    propagated_bg: list
    importance: np.ndarray
    mask: np.ndarray
    flows: dict
    timings: dict


@dataclass
class VideoResult:
    states: list
    frames: list

    @property
    def masks(self) -> list:
        return [f.mask for f in self.frames]

    @property
    def timings(self) -> list:
        return [{**s.timings, **f.timings} for s, f in zip(self.states, self.frames)]


def _prepare_frame(frame, fg_map, bg_map, config: PropagationConfig) -> FrameState:
    frame = np.asarray(frame, dtype=np.float64)
    shape = frame.shape[:2]
    t0 = time.perf_counter()
    grid = slic(frame, config.superpixels, config.compactness, config.slic_iters)
    t1 = time.perf_counter()
    feats = describe(frame, grid, config.spaces)
    t2 = time.perf_counter()
    fg = init_scores(resize_map(fg_map, shape), grid)
    bg = init_scores(resize_map(bg_map, shape), grid)
    t3 = time.perf_counter()
    return FrameState(grid, feats, fg, bg,
                      {"superpixel": t1 - t0, "features": t2 - t1, "init": t3 - t2})


def _refine_frame(state, refs, config: PropagationConfig, keep_flows=False) -> FrameResult:
    """``refs`` maps keyframe index to its ``(features, fg, bg)``."""
    t0 = time.perf_counter()
    flows = {v: build_flow(state.features, feats_v, config.k0, config.flow_mode)
             for v, (feats_v, _, _) in refs.items()}
    t1 = time.perf_counter()
    prop_fg = [propagate(flows[v], fg_v) for v, (_, fg_v, _) in refs.items()]
    prop_bg = [propagate(flows[v], bg_v) for v, (_, _, bg_v) in refs.items()]
    fg = refine(state.fg, prop_fg, config.lambda_c)
    bg = refine(state.bg, prop_bg, config.lambda_c)
    t2 = time.perf_counter()
    imp = importance_map(state.grid, fg, bg)
    mask = morphological_close(binarize(imp, config.threshold_ratio), config.closing_radius)
    t3 = time.perf_counter()
    return FrameResult(
        keyframes=list(refs),
        fg=fg,
        bg=bg,
        propagated_fg=prop_fg,
        propagated_bg=prop_bg,
        importance=imp,
        mask=mask,
        flows=flows if keep_flows else {},
        timings={"flow": t1 - t0, "propagation": t2 - t1, "postprocess": t3 - t2},
    )


def _prepare_task(args):
    return _prepare_frame(*args)


def _refine_task(args):
    return _refine_frame(*args)


def _map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def process_video(frames, fg_maps, bg_maps, config=None, *, workers=1,
                  temporal=True, keep_flows=False) -> VideoResult:
    """Run the full pipeline and keep every intermediate.

    With ``temporal=False`` every frame is refined against an empty keyframe
    set, which gives the per-frame baseline.
    """
    config = config or PropagationConfig()
    frames, fg_maps, bg_maps = list(frames), list(fg_maps), list(bg_maps)
    if not (len(frames) == len(fg_maps) == len(bg_maps)):
        raise ValueError("frames, foreground maps and background maps must align")
    if not frames:
        raise ValueError("empty video")

    num = len(frames)
    states = _map(_prepare_task, [(f, x, y, config) for f, x, y in zip(frames, fg_maps, bg_maps)],
                  workers)
    tasks = []
    for u, state in enumerate(states):
        keys = keyframe_set(u, config.dk, num) if temporal else []
        refs = {v: (states[v].features, states[v].fg, states[v].bg) for v in keys}
        tasks.append((state, refs, config, keep_flows))
    results = _map(_refine_task, tasks, workers)
    log.debug("processed %d frames", num)
    return VideoResult(states=states, frames=results)


def run_video(frames, fg_maps, bg_maps, config=None, *, workers=1) -> list:
    """Temporally refined binary masks, one per frame."""
    return process_video(frames, fg_maps, bg_maps, config, workers=workers).masks


def baseline_masks(frames, fg_maps, bg_maps, config=None, *, workers=1) -> list:
    """Masks from each frame's own initialization, without propagation."""
    return process_video(frames, fg_maps, bg_maps, config, workers=workers, temporal=False).masks
