"""Counter-based random streams that any language can reproduce exactly.

Element ``i`` of stream ``s`` under seed ``seed`` is defined as::

    GOLDEN = 0x9E3779B97F4A7C15
    mix(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
             z = (z ^ (z >> 27)) * 0x94D049BB133111EB
             return z ^ (z >> 31)                       # all mod 2**64
    key    = mix(seed + GOLDEN * (s + 1))
    bits   = mix(key + GOLDEN * (i + 1))
    u      = ((bits >> 11) + 0.5) * 2**-53              # in (0, 1)

Normal variates are ``acklam_ndtri(u)``, the rational inverse-CDF
approximation whose coefficients are listed below (relative error below
1.2e-9, no refinement step).
"""

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed, stream):
    return mix64(np.uint64((seed + GOLDEN * (stream + 1)) & MASK64))


def random_bits(seed, stream, n, start=0):
    """``n`` raw 64-bit outputs of ``stream`` beginning at counter ``start``."""
    key = stream_key(seed, stream)
    i = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(key + np.uint64(GOLDEN) * i)


def uniform(seed, stream, n, start=0):
    bits = random_bits(seed, stream, n, start)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def acklam_ndtri(p):
    """Inverse standard-normal CDF by Acklam's rational approximation."""
    p = np.asarray(p, dtype=np.float64)
    x = np.empty_like(p)

    lo = p < _P_LOW
    hi = p > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = p[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    x[mid] = num / den

    for sel, tail, sign in ((lo, p[lo], 1.0), (hi, 1.0 - p[hi], -1.0)):
        q = np.sqrt(-2.0 * np.log(tail))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[sel] = sign * num / den
    return x


def normal(seed, stream, n, start=0):
    return acklam_ndtri(uniform(seed, stream, n, start))
