"""Complementary foreground/background segmentation loss with analytic gradients.

The total loss is

    E(F, G) + E(B, 1 - G) + lambda_cap * mean((F*B)**sigma_cap)
                          + lambda_cup * mean(|F + B - 1|**sigma_cup)

where E is the pixel-averaged binary cross-entropy. Maps are real-valued in
[0, 1] (the relaxed problem).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-7


@dataclass(frozen=True)
class ComplementaryWeights:
    lambda_cap: float = 0.4
    lambda_cup: float = 0.4
    sigma_cap: float = 2.0
    sigma_cup: float = 2.0

    def __post_init__(self):
        if self.lambda_cap < 0 or self.lambda_cup < 0:
            raise ValueError("loss weights must be non-negative")
        if self.sigma_cap <= 0 or self.sigma_cup <= 0:
            raise ValueError("penalty exponents must be positive")


@dataclass
class LossReport:
    empirical: float
    intersection: float
    union: float
    total: float
    grad_F: np.ndarray
    grad_B: np.ndarray

    def scalars(self) -> dict:
        return {
            "empirical": self.empirical,
            "intersection": self.intersection,
            "union": self.union,
            "total": self.total,
        }


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"map shapes differ: {a.shape} vs {b.shape}")
    return a, b


def cross_entropy(pred, target) -> float:
    pred, target = _pair(pred, target)
    p = np.clip(pred, EPS, 1.0 - EPS)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))


def cross_entropy_grad(pred, target) -> np.ndarray:
    pred, target = _pair(pred, target)
    p = np.clip(pred, EPS, 1.0 - EPS)
    g = -(target / p - (1.0 - target) / (1.0 - p)) / pred.size
    # the clamp is flat outside [EPS, 1 - EPS]
    return np.where((pred > EPS) & (pred < 1.0 - EPS), g, 0.0)


def intersection_loss(fg, bg, sigma_cap: float = 2.0) -> float:
    fg, bg = _pair(fg, bg)
    return float(np.mean((fg * bg) ** sigma_cap))


def intersection_grad(fg, bg, sigma_cap: float = 2.0):
    """Gradients of the intersection loss with respect to F and B."""
    fg, bg = _pair(fg, bg)
    prod = fg * bg
    # diverges at prod == 0 when sigma_cap < 1
    with np.errstate(divide="ignore"):
        dprod = sigma_cap * prod ** (sigma_cap - 1.0) / fg.size
    return dprod * bg, dprod * fg


def union_loss(fg, bg, sigma_cup: float = 2.0) -> float:
    fg, bg = _pair(fg, bg)
    return float(np.mean(np.abs(fg + bg - 1.0) ** sigma_cup))


def union_grad(fg, bg, sigma_cup: float = 2.0) -> np.ndarray:
    """Gradient of the union loss; identical for F and B."""
    fg, bg = _pair(fg, bg)
    dev = fg + bg - 1.0
    mag = np.abs(dev)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(mag > 0, sigma_cup * mag ** (sigma_cup - 1.0) * np.sign(dev), 0.0)
    return g / fg.size


def total_objective(fg, bg, gt, weights: ComplementaryWeights | None = None) -> LossReport:
    weights = weights or ComplementaryWeights()
    fg, bg = _pair(fg, bg)
    fg, gt = _pair(fg, gt)

    empirical = cross_entropy(fg, gt) + cross_entropy(bg, 1.0 - gt)
    inter = intersection_loss(fg, bg, weights.sigma_cap)
    uni = union_loss(fg, bg, weights.sigma_cup)
    total = empirical + weights.lambda_cap * inter + weights.lambda_cup * uni

    gi_f, gi_b = intersection_grad(fg, bg, weights.sigma_cap)
    gu = union_grad(fg, bg, weights.sigma_cup)
    grad_f = cross_entropy_grad(fg, gt) + weights.lambda_cap * gi_f + weights.lambda_cup * gu
    grad_b = cross_entropy_grad(bg, 1.0 - gt) + weights.lambda_cap * gi_b + weights.lambda_cup * gu
    return LossReport(empirical, inter, uni, total, grad_f, grad_b)
