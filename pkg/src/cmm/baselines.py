"""Attention-based connectors used as ablation baselines.

``prepend_forward`` pushes MLP-projected grid features in front of the
tokens and runs one self-attention layer over the whole ``G + T`` sequence,
so its cost is quadratic in ``T``.  ``cross_attention_forward`` lets tokens
attend to the (projected) grids only, which is linear in ``T`` for fixed
``G``.  Both use a post-LN transformer layer:
``u = LN(x + attn)``, ``out = LN(u + FFN(u))``.
"""

from dataclasses import dataclass

import numpy as np

from .block import FusionOutput, feed_forward, stage
from .correlation import merge_heads, split_heads
from .errors import ShapeError
from .numeric import as_matrix, layer_norm, matmul, softmax_rows

# Query rows processed per block; bounds the score buffer at chunk x (G+T).
ATTENTION_CHUNK = 1024


@dataclass(frozen=True)
class AttentionWeights:
    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray
    W_o: np.ndarray


@dataclass(frozen=True)
class EncoderLayerWeights:
    attn: AttentionWeights
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray


@dataclass(frozen=True)
class PrependWeights:
    mlp_w1: np.ndarray  # (D_v, 2*D_t)
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray  # (2*D_t, D_t)
    mlp_b2: np.ndarray
    layer: EncoderLayerWeights


@dataclass(frozen=True)
class CrossAttentionWeights:
    W_vproj: np.ndarray  # (D_v, D_t)
    layer: EncoderLayerWeights


def attention_core(q, k, v, H, chunk=ATTENTION_CHUNK):
    """Multi-head softmax(QK^T / sqrt(D_H)) V on already-projected operands.

    ``q`` is ``(Nq, D)``; ``k`` and ``v`` are ``(Nk, D)``.  Returns ``(Nq, D)``.
    """
    qH, kH, vH = split_heads(q, H), split_heads(k, H), split_heads(v, H)
    scale = 1.0 / np.sqrt(qH.shape[2])
    out = np.empty_like(qH)
    for start in range(0, qH.shape[1], chunk):
        blk = slice(start, start + chunk)
        logits = np.matmul(qH[:, blk], kH.transpose(0, 2, 1)) * scale
        out[:, blk] = np.matmul(softmax_rows(logits), vH)
    return merge_heads(out)


def multi_head_attention(x_q, x_kv, w: AttentionWeights, H):
    q = matmul(x_q, w.W_q)
    k = matmul(x_kv, w.W_k)
    v = matmul(x_kv, w.W_v)
    return matmul(attention_core(q, k, v, H), w.W_o)


def encoder_layer(x_q, x_kv, w: EncoderLayerWeights, H, eps=1e-5):
    u = layer_norm(x_q + multi_head_attention(x_q, x_kv, w.attn, H), w.ln1_gamma, w.ln1_beta, eps)
    return layer_norm(
        u + feed_forward(u, w.ffn_w1, w.ffn_b1, w.ffn_w2, w.ffn_b2), w.ln2_gamma, w.ln2_beta, eps
    )


def _inputs(xt, xv, D_v):
    xt = as_matrix(xt, "xt")
    xv = np.asarray(xv, dtype=np.float64).reshape(-1, D_v)
    return xt, xv


def prepend_forward(xt, xv, w: PrependWeights, H, eps=1e-5, pool_output=True):
    D_v = w.mlp_w1.shape[0]
    xt, xv = _inputs(xt, xv, D_v)
    if xt.shape[1] != w.mlp_w2.shape[1]:
        raise ShapeError(f"[inputs] xt width {xt.shape[1]} != D_t={w.mlp_w2.shape[1]}")
    with stage("prepend-mlp"):
        prefix = feed_forward(xv, w.mlp_w1, w.mlp_b1, w.mlp_w2, w.mlp_b2)
    seq = np.concatenate([prefix, xt], axis=0)
    with stage("self-attention"):
        out = encoder_layer(seq, seq, w.layer, H, eps)[prefix.shape[0]:]
    return FusionOutput(out, out.mean(axis=0), None, pool_output)


def cross_attention_forward(xt, xv, w: CrossAttentionWeights, H, eps=1e-5, pool_output=True):
    D_v = w.W_vproj.shape[0]
    xt, xv = _inputs(xt, xv, D_v)
    if xv.shape[0] == 0:
        raise ShapeError("[inputs] cross-attention needs at least one grid")
    if xt.shape[1] != w.layer.attn.W_q.shape[0]:
        raise ShapeError(f"[inputs] xt width {xt.shape[1]} != D_t={w.layer.attn.W_q.shape[0]}")
    with stage("grid-projection"):
        kv = matmul(xv, w.W_vproj)
    with stage("cross-attention"):
        out = encoder_layer(xt, kv, w.layer, H, eps)
    return FusionOutput(out, out.mean(axis=0), None, pool_output)
