"""Neighborhood reversible flow between the superpixels of two frames.

Two superpixels are k-reversible when each sits in the other's k nearest
neighbors (l1 distance on descriptors). The tightest such k weights the
pair by ``exp(-2k / k0)``, pairs beyond ``k0`` get nothing, and every
non-empty row is normalized to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

FLOW_MODES = ("reversible", "cosine")


@dataclass(frozen=True)
class FlowMatrix:
    """Row-normalized sparse correspondence from frame u to frame v.

    ``matrix`` is an ``N_u x N_v`` CSR matrix; ``zero_rows`` flags superpixels
    of u that found no partner in v (their rows stay all-zero).
    """

    matrix: sparse.csr_matrix
    zero_rows: np.ndarray

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def entries(self):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return list(zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()))

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            for i, j, w in self.entries():
                fh.write(f"{i} {j} {w:.10g}\n")


def knn_ranks(feats_u, feats_v, kmax: int) -> np.ndarray:
    """1-based rank of each of the ``kmax`` nearest V-superpixels of every U-superpixel.

    Returns a dense ``N_u x N_v`` integer table; 0 marks superpixels outside the
    ``kmax`` list. Distance ties go to the lower index.
    """
    feats_u = np.asarray(feats_u, dtype=np.float64)
    feats_v = np.asarray(feats_v, dtype=np.float64)
    if len(feats_u) == 0 or len(feats_v) == 0:
        raise ValueError("feature sets must be non-empty")
    n_u, n_v = len(feats_u), len(feats_v)
    if not 1 <= kmax <= n_v:
        raise ValueError(f"kmax must lie in [1, {n_v}], got {kmax}")
    dist = cdist(feats_u, feats_v, metric="cityblock")
    order = np.argsort(dist, axis=1, kind="stable")[:, :kmax]
    ranks = np.zeros((n_u, n_v), dtype=np.int64)
    ranks[np.arange(n_u)[:, None], order] = np.arange(1, kmax + 1)
    return ranks


def reversible_rank(i: int, j: int, ranks_uv, ranks_vu, k0: int):
    """Smallest k for which i and j are mutual k-nearest neighbors, or None."""
    r_ij = int(ranks_uv[i, j])
    r_ji = int(ranks_vu[j, i])
    if r_ij == 0 or r_ji == 0:
        return None
    k = max(r_ij, r_ji)
    return k if k <= k0 else None


def flow_weights(k, k0: int):
    """``exp(-2k/k0)`` for ``k <= k0`` and 0 beyond; accepts arrays."""
    k = np.asarray(k, dtype=np.float64)
    out = np.where(k <= k0, np.exp(-2.0 * k / k0), 0.0)
    return float(out) if out.ndim == 0 else out


def _normalize(weights: sparse.csr_matrix) -> FlowMatrix:
    sums = np.asarray(weights.sum(axis=1)).ravel()
    zero = sums <= 0
    scale = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, sums))
    normalized = sparse.diags(scale) @ weights
    normalized = sparse.csr_matrix(normalized)
    normalized.eliminate_zeros()
    normalized.sort_indices()
    return FlowMatrix(matrix=normalized, zero_rows=zero)


def raw_weights(feats_u, feats_v, k0: int = 15, mode: str = "reversible") -> sparse.csr_matrix:
    """Unnormalized correspondence weights (the support of the flow)."""
    if mode not in FLOW_MODES:
        raise ValueError(f"unknown flow mode {mode!r}")
    if k0 < 1:
        raise ValueError("k0 must be >= 1")
    feats_u = np.asarray(feats_u, dtype=np.float64)
    feats_v = np.asarray(feats_v, dtype=np.float64)
    n_u, n_v = len(feats_u), len(feats_v)
    ranks_uv = knn_ranks(feats_u, feats_v, min(k0, n_v))

    if mode == "reversible":
        ranks_vu = knn_ranks(feats_v, feats_u, min(k0, n_u))
        mutual = np.maximum(ranks_uv, ranks_vu.T)
        keep = (ranks_uv > 0) & (ranks_vu.T > 0)
        rows, cols = np.nonzero(keep)
        data = flow_weights(mutual[rows, cols], k0)
    else:
        rows, cols = np.nonzero(ranks_uv)
        nu = np.linalg.norm(feats_u, axis=1)
        nv = np.linalg.norm(feats_v, axis=1)
        denom = nu[rows] * nv[cols]
        dots = np.einsum("ij,ij->i", feats_u[rows], feats_v[cols])
        cos = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
        data = np.maximum(cos, 0.0)

    data = np.atleast_1d(data)
    nz = data > 0
    return sparse.csr_matrix((data[nz], (rows[nz], cols[nz])), shape=(n_u, n_v))


def build_flow(feats_u, feats_v, k0: int = 15, mode: str = "reversible") -> FlowMatrix:
    """Row-normalized flow matrix from the superpixels of u to those of v.

    ``mode="cosine"`` replaces the reversibility weight by the (clipped)
    cosine similarity, restricted to each row's ``k0`` nearest neighbors.
    """
    return _normalize(raw_weights(feats_u, feats_v, k0, mode))


def keyframe_set(u: int, dk: int, num_frames: int) -> list:
    """Reference frames ``u - 2dk, u - dk, u + dk, u + 2dk`` that exist."""
    if not 0 <= u < num_frames:
        raise ValueError(f"frame index {u} outside [0, {num_frames})")
    if dk < 1:
        raise ValueError("dk must be >= 1")
    return [t for t in (u - 2 * dk, u - dk, u + dk, u + 2 * dk) if 0 <= t < num_frames]

