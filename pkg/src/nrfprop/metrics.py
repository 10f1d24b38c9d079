"""Video segmentation metrics: per-video precision/recall/IoU, F-beta, stability.

Scores are averaged within each video first and then uniformly across videos,
so long and short videos weigh the same.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BETA_SQ = 0.3


def _masks(mask, gt):
    mask = np.asarray(mask, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if mask.shape != gt.shape:
        raise ValueError(f"mask shape {mask.shape} does not match ground truth {gt.shape}")
    return mask, gt


def frame_eval(mask, gt):
    """``(precision, recall, iou)`` of one binary mask.

    Empty denominators: no prediction scores precision 1 only when the ground
    truth is empty too; empty ground truth scores recall 1; an empty union
    scores IoU 1.
    """
    mask, gt = _masks(mask, gt)
    inter = int(np.count_nonzero(mask & gt))
    n_mask = int(np.count_nonzero(mask))
    n_gt = int(np.count_nonzero(gt))
    union = n_mask + n_gt - inter
    if n_mask == 0:
        precision = 1.0 if n_gt == 0 else 0.0
    else:
        precision = inter / n_mask
    recall = 1.0 if n_gt == 0 else inter / n_gt
    iou = 1.0 if union == 0 else inter / union
    return precision, recall, iou


@dataclass
class VideoEval:
    video_id: str
    precision: list
    recall: list
    iou: list
    stability: float | None = None

    @classmethod
    def from_frames(cls, video_id, evals, stability=None) -> "VideoEval":
        evals = list(evals)
        return cls(
            video_id=str(video_id),
            precision=[e[0] for e in evals],
            recall=[e[1] for e in evals],
            iou=[e[2] for e in evals],
            stability=stability,
        )

    @property
    def mean_precision(self) -> float:
        return math.fsum(self.precision) / len(self.precision)

    @property
    def mean_recall(self) -> float:
        return math.fsum(self.recall) / len(self.recall)

    @property
    def mean_iou(self) -> float:
        return math.fsum(self.iou) / len(self.iou)


@dataclass
class DatasetEval:
    mAP: float
    mAR: float
    mIoU: float
    f_beta: float
    mT: float | None = None


def f_beta(mean_precision: float, mean_recall: float, beta_sq: float = BETA_SQ) -> float:
    denom = beta_sq * mean_precision + mean_recall
    if denom == 0:
        return 0.0
    return (1.0 + beta_sq) * mean_precision * mean_recall / denom


def dataset_eval(videos, beta_sq: float = BETA_SQ) -> DatasetEval:
    """Average per-video means uniformly over videos."""
    videos = list(videos)
    if not videos or any(len(v.iou) == 0 for v in videos):
        raise ValueError("need at least one video, each with at least one evaluated frame")
    n = len(videos)
    m_ap = math.fsum(v.mean_precision for v in videos) / n
    m_ar = math.fsum(v.mean_recall for v in videos) / n
    m_iou = math.fsum(v.mean_iou for v in videos) / n
    stab = [v.stability for v in videos if v.stability is not None]
    m_t = math.fsum(stab) / len(stab) if stab else None
    return DatasetEval(m_ap, m_ar, m_iou, f_beta(m_ap, m_ar, beta_sq), m_t)


def temporal_stability_variant(masks) -> float:
    """Mean normalized symmetric difference between consecutive masks.

    Each pair contributes ``|A xor B| / max(1, |A| + |B|)``: 0 for identical
    masks and 1 for disjoint ones. This is a simple consistency score and is
    not numerically comparable with other published temporal-stability
    measures.
    """
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if len(masks) < 2:
        raise ValueError("temporal stability needs at least two masks")
    shape = masks[0].shape
    if any(m.shape != shape for m in masks):
        raise ValueError("all masks must share one shape")
    rates = []
    for a, b in zip(masks[:-1], masks[1:]):
        diff = np.count_nonzero(a ^ b)
        rates.append(diff / max(1, np.count_nonzero(a) + np.count_nonzero(b)))
    return math.fsum(rates) / len(rates)


def report(videos, beta_sq: float = BETA_SQ) -> dict:
    """JSON-ready report with ``per_video`` and ``dataset`` sections."""
    videos = list(videos)
    summary = dataset_eval(videos, beta_sq)
    return {
        "per_video": [
            {
                "id": v.video_id,
                "precision": v.mean_precision,
                "recall": v.mean_recall,
                "iou": v.mean_iou,
                "stability": v.stability,
            }
            for v in videos
        ],
        "dataset": {
            "mAP": summary.mAP,
            "mAR": summary.mAR,
            "f_beta": summary.f_beta,
            "mIoU": summary.mIoU,
            "mT": summary.mT,
        },
    }
