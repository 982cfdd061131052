"""Token-to-grid correlation, top-k grid retention and visual context pooling."""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError, ShapeError
from .numeric import as_matrix, matmul, softmax_rows, top_k_mask


@dataclass(frozen=True)
class CorrelationWeights:
    W_t: np.ndarray  # (D_t, D_shared)
    W_v: np.ndarray  # (D_v, D_shared)


@dataclass(frozen=True)
class CorrelationScores:
    """Per-head token-to-grid scores, shape ``(H, T, G)``.

    ``mask`` and ``renormalized`` are ``None`` until :func:`apply_topk` runs.
    """

    scores: np.ndarray
    mask: np.ndarray = None
    renormalized: np.ndarray = None

    @property
    def k(self):
        if self.mask is None:
            return None
        return int(self.mask[0, 0].sum())


def project_shared(xt, xv, w):
    """Map text and grid embeddings into the shared latent space (``X W``)."""
    xt = as_matrix(xt, "xt")
    xv = as_matrix(xv, "xv")
    if w.W_t.shape[1] != w.W_v.shape[1]:
        raise ShapeError(
            f"project_shared: W_t {w.W_t.shape} and W_v {w.W_v.shape} disagree on shared width"
        )
    return matmul(xt, w.W_t), matmul(xv, w.W_v)


def split_heads(x, H):
    """``(N, H*D_H)`` -> ``(H, N, D_H)``; head ``h`` owns channels ``[h*D_H, (h+1)*D_H)``."""
    x = as_matrix(x, "x")
    if H < 1 or x.shape[1] % H:
        raise ParameterError(f"split_heads: width {x.shape[1]} not divisible into {H} heads")
    n, d = x.shape
    return np.ascontiguousarray(x.reshape(n, H, d // H).transpose(1, 0, 2))


def merge_heads(x):
    """Inverse of :func:`split_heads`."""
    H, n, dh = x.shape
    return np.ascontiguousarray(x.transpose(1, 0, 2).reshape(n, H * dh))


def correlate(xtH, xvH):
    """Scaled dot-product scores, softmaxed over the grid axis."""
    if xtH.ndim != 3 or xvH.ndim != 3:
        raise ShapeError(f"correlate: expected 3-D inputs, got {xtH.shape} and {xvH.shape}")
    if xtH.shape[0] != xvH.shape[0] or xtH.shape[2] != xvH.shape[2]:
        raise ShapeError(f"correlate: head tensors {xtH.shape} and {xvH.shape} disagree")
    logits = np.matmul(xtH, xvH.transpose(0, 2, 1)) / np.sqrt(xtH.shape[2])
    return CorrelationScores(scores=softmax_rows(logits))


def apply_topk(scores, k):
    """Keep the ``k`` best grids per (head, token) row and renormalise them.

    The selection is made on the post-softmax scores, ties going to the
    lower grid index; discarded entries become exactly zero.
    """
    G = scores.scores.shape[-1]
    if not 1 <= k <= G:
        raise ParameterError(f"apply_topk: k={k} outside [1, {G}]")
    mask = top_k_mask(scores.scores, k)
    kept = np.where(mask, scores.scores, 0.0)
    renorm = kept / kept.sum(axis=-1, keepdims=True)
    return replace(scores, mask=mask, renormalized=renorm)


def aggregate_context(scores, xv_proj):
    """Average renormalised scores over heads, then weight the projected grids.

    Returns the ``(T, D_shared)`` context; each row is a convex combination
    of the rows of ``xv_proj``.
    """
    if scores.renormalized is None:
        raise ParameterError("aggregate_context: scores have not been through apply_topk")
    xv_proj = as_matrix(xv_proj, "xv_proj")
    s_hat = scores.renormalized.mean(axis=0)
    return matmul(s_hat, xv_proj)
