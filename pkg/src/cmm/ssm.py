"""Linear-time sequence mixers run over the token axis.

Two families are provided:

* a diagonal linear time-invariant SSM (complex diagonal state matrix,
  zero-order-hold discretisation) that can be evaluated either as a
  recurrence or as a causal convolution with its impulse response, and
* an input-dependent selective scan whose step size and input/output maps
  are functions of the current token, evaluated as a recurrence only.

Complex quantities are stored as paired real arrays (``*_re``/``*_im``) so
the parameter sets serialise as plain float64 tensors.  Outputs of the
diagonal model take ``2 * Re(.)``, the usual conjugate-pair convention.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .numeric import as_matrix, causal_conv, softplus


class SsmBackend(str, enum.Enum):
    DIAGONAL_LTI = "diagonal_lti"
    SELECTIVE_SCAN = "selective_scan"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"lti": cls.DIAGONAL_LTI, "s4d": cls.DIAGONAL_LTI, "s4": cls.DIAGONAL_LTI,
                   "mamba": cls.SELECTIVE_SCAN, "selective": cls.SELECTIVE_SCAN}
        value = str(value).lower()
        if value in aliases:
            return aliases[value]
        return cls(value)


@dataclass(frozen=True)
class DiagonalSsmParams:
    lambda_re: np.ndarray  # (N,)
    lambda_im: np.ndarray  # (N,)
    B_re: np.ndarray  # (N,)
    B_im: np.ndarray  # (N,)
    C_re: np.ndarray  # (D, N)
    C_im: np.ndarray  # (D, N)
    D_skip: np.ndarray  # (D,)
    log_dt: np.ndarray  # (D,)

    @property
    def N(self):
        return self.lambda_re.shape[0]

    @property
    def channels(self):
        return self.D_skip.shape[0]

    @property
    def Lambda(self):
        return self.lambda_re + 1j * self.lambda_im

    @property
    def B(self):
        return self.B_re + 1j * self.B_im

    @property
    def C(self):
        return self.C_re + 1j * self.C_im


@dataclass(frozen=True)
class SelectiveScanParams:
    A_log: np.ndarray  # (D, N); A = -exp(A_log)
    W_delta: np.ndarray  # (D, D)
    W_B: np.ndarray  # (D, N)
    W_C: np.ndarray  # (D, N)
    D_skip: np.ndarray  # (D,)

    @property
    def N(self):
        return self.A_log.shape[1]

    @property
    def channels(self):
        return self.D_skip.shape[0]

    @property
    def A(self):
        return -np.exp(self.A_log)


def discretize_zoh(params):
    """Zero-order-hold discretisation, one step size per channel.

    Returns:
        ``(Abar, Bbar)``, complex arrays of shape ``(D, N)`` with
        ``Abar = exp(dt * Lambda)`` and ``Bbar = (Abar - 1) / Lambda * B``.
    """
    lam = params.Lambda
    if np.any(lam == 0):
        raise ParameterError("discretize_zoh: zero eigenvalue makes the ZOH map singular")
    dt = np.exp(params.log_dt)[:, None]
    dtA = dt * lam[None, :]
    Abar = np.exp(dtA)
    # expm1 keeps (Abar - 1) accurate for tiny steps
    Bbar = _cexpm1(dtA) / lam[None, :] * params.B[None, :]
    return Abar, Bbar


def _cexpm1(z):
    # exp(z) - 1 for complex z without cancellation: expm1(a)cos b - 2 sin^2(b/2) + i e^a sin b
    a, b = z.real, z.imag
    return (np.expm1(a) * np.cos(b) - 2.0 * np.sin(b / 2) ** 2) + 1j * np.exp(a) * np.sin(b)


def _check_input(x, channels, name):
    x = as_matrix(x, "x")
    if x.shape[1] != channels:
        raise ShapeError(f"{name}: input width {x.shape[1]} != {channels} channels")
    return x


def ssm_scan_recurrent(x, params):
    """Evaluate the diagonal SSM step by step, ``O(T)`` in sequence length."""
    x = _check_input(x, params.channels, "ssm_scan_recurrent")
    Abar, Bbar = discretize_zoh(params)
    C = params.C
    T = x.shape[0]
    h = np.zeros(Abar.shape, dtype=np.complex128)
    y = np.empty_like(x)
    for t in range(T):
        h = Abar * h + Bbar * x[t][:, None]
        y[t] = 2.0 * (C * h).sum(axis=1).real
    return y + params.D_skip * x


def ssm_kernel(params, T, chunk=1024):
    """Impulse response ``K[t] = 2 Re(sum_n C Abar^t Bbar)``, shape ``(T, D)``.

    ``K[0]`` also carries the skip term, so ``causal_conv(x, K)`` reproduces
    :func:`ssm_scan_recurrent` exactly in exact arithmetic.
    """
    if T < 1:
        raise ParameterError(f"ssm_kernel: T={T} must be positive")
    Abar, Bbar = discretize_zoh(params)
    dtA = np.exp(params.log_dt)[:, None] * params.Lambda[None, :]
    CB = params.C * Bbar
    K = np.empty((T, params.channels))
    for start in range(0, T, chunk):
        t = np.arange(start, min(start + chunk, T), dtype=np.float64)
        powers = np.exp(t[:, None, None] * dtA[None])
        K[start : start + len(t)] = 2.0 * np.einsum("tdn,dn->td", powers, CB).real
    K[0] += params.D_skip
    return K


def ssm_conv(x, params, method="auto"):
    """Evaluate the diagonal SSM as a causal convolution with its kernel."""
    x = _check_input(x, params.channels, "ssm_conv")
    return causal_conv(x, ssm_kernel(params, x.shape[0]), method=method)


def selective_scan(x, params):
    """Input-dependent SSM recurrence.

    Per step: ``dt = softplus(x_t W_delta)``, ``Abar = exp(dt * A)``,
    ``h = Abar * h + (dt * B_t) x_t`` with ``B_t = x_t W_B``, and
    ``y_t = h C_t + D x_t`` with ``C_t = x_t W_C``.
    """
    x = _check_input(x, params.channels, "selective_scan")
    A = params.A
    delta = softplus(x @ params.W_delta)
    Bt = x @ params.W_B
    Ct = x @ params.W_C
    h = np.zeros(A.shape)
    y = np.empty_like(x)
    for t in range(x.shape[0]):
        d = delta[t][:, None]
        h = np.exp(d * A) * h + (d * Bt[t][None, :]) * x[t][:, None]
        y[t] = h @ Ct[t]
    return y + params.D_skip * x


def run_ssm(x, params, mode="recurrent"):
    """Dispatch on the parameter type; ``mode`` only affects the diagonal model."""
    if isinstance(params, SelectiveScanParams):
        return selective_scan(x, params)
    if mode == "recurrent":
        return ssm_scan_recurrent(x, params)
    if mode == "conv":
        return ssm_conv(x, params)
    raise ParameterError(f"run_ssm: unknown mode {mode!r}")
