"""Dense float64 primitives shared by every stage of the fusion block.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 and
head-split tensors are 3-D arrays indexed ``(head, row, channel)``.  Every
function here is pure: it never mutates its inputs and returns fresh arrays.
"""

import numpy as np
from scipy.special import erf

from .errors import ParameterError, ShapeError

# Sequence length at which causal_conv switches from the direct sum to FFT.
FFT_CROSSOVER = 512


def as_matrix(x, name="matrix"):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b):
    """Matrix product ``a @ b`` with an explicit shape check.

    Raises:
        ShapeError: if ``a.shape[1] != b.shape[0]``; the message names both shapes.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(m):
    """Row-wise softmax over the last axis, max-shifted for stability.

    Works on any array with at least one dimension; the normalisation is
    always along the final axis.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        raise ShapeError("softmax_rows: empty input")
    peak = m.max(axis=-1, keepdims=True)
    if np.any(np.isneginf(peak)):
        raise ParameterError("softmax_rows: empty support row")
    e = np.exp(m - peak)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm(x, gamma, beta, eps=1e-5):
    x = np.asarray(x, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not match width {x.shape[-1]}"
        )
    if eps <= 0:
        raise ParameterError("layer_norm: eps must be positive")
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + eps) * gamma + beta


def gelu(x):
    """Exact GELU, ``x * Phi(x)`` with Phi written through erf."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def top_k_indices(row, k):
    """Indices of the ``k`` largest entries of ``row``, returned sorted ascending.

    Ties are resolved in favour of the lower index.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ShapeError(f"top_k_indices: expected a vector, got shape {row.shape}")
    if not 1 <= k <= row.shape[0]:
        raise ParameterError(f"top_k_indices: k={k} outside [1, {row.shape[0]}]")
    order = np.argsort(-row, kind="stable")
    return np.sort(order[:k])


def top_k_mask(x, k):
    """Boolean mask marking the ``k`` largest entries along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if not 1 <= k <= n:
        raise ParameterError(f"top_k_mask: k={k} outside [1, {n}]")
    order = np.argsort(-x, axis=-1, kind="stable")
    mask = np.zeros(x.shape, dtype=bool)
    np.put_along_axis(mask, order[..., :k], True, axis=-1)
    return mask


def _causal_conv_direct(signal, kernel):
    T = signal.shape[0]
    out = np.zeros_like(signal)
    for s in range(T):
        out[s:] += kernel[s] * signal[: T - s]
    return out


def _causal_conv_fft(signal, kernel):
    T = signal.shape[0]
    n = 1 << (2 * T - 1).bit_length()
    fs = np.fft.rfft(signal, n=n, axis=0)
    fk = np.fft.rfft(kernel, n=n, axis=0)
    return np.fft.irfft(fs * fk, n=n, axis=0)[:T]


def causal_conv(signal, kernel, method="auto"):
    """Per-channel causal convolution ``y[t] = sum_{s<=t} kernel[s] * signal[t-s]``.

    Args:
        signal: ``(T, C)`` array.
        kernel: ``(T, C)`` array, one filter per channel.
        method: ``"direct"``, ``"fft"`` or ``"auto"`` (FFT once ``T >= FFT_CROSSOVER``).
    """
    signal = as_matrix(signal, "signal")
    kernel = as_matrix(kernel, "kernel")
    if signal.shape != kernel.shape:
        raise ShapeError(f"causal_conv: signal {signal.shape} vs kernel {kernel.shape}")
    if method == "auto":
        method = "fft" if signal.shape[0] >= FFT_CROSSOVER else "direct"
    if method == "direct":
        return _causal_conv_direct(signal, kernel)
    if method == "fft":
        return _causal_conv_fft(signal, kernel)
    raise ParameterError(f"causal_conv: unknown method {method!r}")
