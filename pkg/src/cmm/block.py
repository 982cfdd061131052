"""The cross-modal modulator forward pass.

Pipeline, for text tokens ``xt`` (T x D_t) and grid features ``xv`` (G x D_v):

    project -> split heads -> correlate -> top-k -> head-average context c
    -> FiLM-in on LN(xt) -> SSM over tokens -> FiLM-out
    -> LN((xt + y) + FFN(xt + y)) -> mean pool

The residual in the last stage adds the *raw* text embeddings, not the
FiLM-modulated ones.
"""

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .config import CmmConfig
from .correlation import (
    CorrelationScores,
    CorrelationWeights,
    aggregate_context,
    apply_topk,
    correlate,
    project_shared,
    split_heads,
)
from .errors import ShapeError
from .film import FilmWeights, film_generate, film_in, film_out
from .numeric import as_matrix, gelu, layer_norm, matmul
from .ssm import DiagonalSsmParams, SelectiveScanParams, run_ssm


@dataclass(frozen=True)
class CmmWeights:
    correlation: CorrelationWeights
    film: FilmWeights
    ssm: object  # DiagonalSsmParams | SelectiveScanParams
    ffn_w1: np.ndarray  # (D_t, ffn_hidden)
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray  # (ffn_hidden, D_t)
    ffn_b2: np.ndarray
    out_ln_gamma: np.ndarray
    out_ln_beta: np.ndarray


@dataclass(frozen=True)
class FusionOutput:
    sequence: np.ndarray  # (T, D_t)
    pooled: np.ndarray  # (D_t,)
    scores: CorrelationScores = None
    pool_output: bool = True

    @property
    def value(self):
        """The pooled vector or the full sequence, whichever the config asked for."""
        return self.pooled if self.pool_output else self.sequence


@dataclass(frozen=True)
class CmmTrace:
    """Every intermediate of one forward pass, for inspection and testing."""

    xt_proj: np.ndarray
    xv_proj: np.ndarray
    scores: CorrelationScores
    context: np.ndarray
    gamma_in: np.ndarray
    beta_in: np.ndarray
    x_film: np.ndarray
    y_ssm: np.ndarray
    gamma_out: np.ndarray
    beta_out: np.ndarray
    y_film: np.ndarray
    residual: np.ndarray
    sequence: np.ndarray
    pooled: np.ndarray


@contextmanager
def stage(name):
    try:
        yield
    except ShapeError as exc:
        raise ShapeError(f"[{name}] {exc}") from exc


def feed_forward(u, w1, b1, w2, b2):
    return matmul(gelu(matmul(u, w1) + b1), w2) + b2


def _check_inputs(xt, xv, D_t, D_v):
    xt = as_matrix(xt, "xt")
    xv = as_matrix(xv, "xv")
    if xt.shape[1] != D_t:
        raise ShapeError(f"[inputs] xt width {xt.shape[1]} != D_t={D_t}")
    if xv.shape[1] != D_v:
        raise ShapeError(f"[inputs] xv width {xv.shape[1]} != D_v={D_v}")
    return xt, xv


def cmm_trace(xt, xv, w, cfg: CmmConfig):
    xt, xv = _check_inputs(xt, xv, cfg.D_t, cfg.D_v)
    with stage("project"):
        xt_p, xv_p = project_shared(xt, xv, w.correlation)
    with stage("correlate"):
        scores = correlate(split_heads(xt_p, cfg.H), split_heads(xv_p, cfg.H))
    with stage("top-k"):
        scores = apply_topk(scores, cfg.k)
    with stage("context"):
        c = aggregate_context(scores, xv_p)
    with stage("film-in"):
        g_in, b_in = film_generate(c, w.film.W_f)
        x_f = film_in(xt, g_in, b_in, w.film.alpha, w.film.ln_gamma, w.film.ln_beta, cfg.ln_eps)
    with stage("ssm"):
        y_ssm = run_ssm(x_f, w.ssm, mode=cfg.ssm_mode)
    with stage("film-out"):
        g_out, b_out = film_generate(c, w.film.W_f_out)
        y_film = film_out(y_ssm, g_out, b_out, w.film.alpha)
    with stage("ffn"):
        u = xt + y_film
        seq = layer_norm(
            u + feed_forward(u, w.ffn_w1, w.ffn_b1, w.ffn_w2, w.ffn_b2),
            w.out_ln_gamma,
            w.out_ln_beta,
            cfg.ln_eps,
        )
    return CmmTrace(
        xt_proj=xt_p, xv_proj=xv_p, scores=scores, context=c,
        gamma_in=g_in, beta_in=b_in, x_film=x_f, y_ssm=y_ssm,
        gamma_out=g_out, beta_out=b_out, y_film=y_film, residual=u,
        sequence=seq, pooled=seq.mean(axis=0),
    )


def cmm_forward(xt, xv, w, cfg: CmmConfig):
    """Run the fusion block and return sequence, pooled vector and scores."""
    tr = cmm_trace(xt, xv, w, cfg)
    return FusionOutput(tr.sequence, tr.pooled, tr.scores, cfg.pool_output)


__all__ = [
    "CmmTrace",
    "CmmWeights",
    "DiagonalSsmParams",
    "FilmWeights",
    "FusionOutput",
    "SelectiveScanParams",
    "cmm_forward",
    "cmm_trace",
    "feed_forward",
]
