"""Gated FiLM conditioning of the text stream on the visual context."""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numeric import as_matrix, layer_norm, matmul


@dataclass(frozen=True)
class FilmWeights:
    W_f: np.ndarray  # (D_shared, 2*D_t), FiLM-in map
    W_f_out: np.ndarray  # (D_shared, 2*D_t), FiLM-out map
    alpha: float
    ln_gamma: np.ndarray  # (D_t,)
    ln_beta: np.ndarray  # (D_t,)


def film_generate(c, w):
    """Linear map of the context to ``(gamma, beta)``; no bias term."""
    c = as_matrix(c, "c")
    w = as_matrix(w, "w")
    if w.shape[1] % 2:
        raise ShapeError(f"film_generate: map width {w.shape[1]} is not even")
    out = matmul(c, w)
    d = w.shape[1] // 2
    return out[:, :d], out[:, d:]


def _check(name, ref, *others):
    for o in others:
        if o.shape != ref.shape:
            raise ShapeError(f"{name}: shape {o.shape} does not match {ref.shape}")


def film_in(xt, gamma, beta, alpha, ln_gamma, ln_beta, eps=1e-5):
    xn = layer_norm(xt, ln_gamma, ln_beta, eps)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    _check("film_in", xn, gamma, beta)
    return xn * (1.0 + alpha * gamma) + alpha * beta


def film_out(y, gamma, beta, alpha):
    y = np.asarray(y, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    _check("film_out", y, gamma, beta)
    return y * (1.0 + alpha * gamma) + alpha * beta
