"""Numerically stable exponential-integral primitives.

Every closed-form evaluation in this package (wave profiles, synaptic
profiles, stability-matrix entries, the inter-event propagator) reduces to
integrals of ``t**k * exp(s*t)`` over finite or semi-infinite intervals.
Naive antiderivative formulas divide by exponent differences and lose all
precision when rates nearly coincide (synaptic rate crossing a kernel rate,
or beta crossing 1). The helpers here evaluate those primitives uniformly
in the rates, with no precision cliff at the coincidences.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import exprel as _exprel_real

__all__ = ["exprel", "exp_diff", "iexp_pow"]

# Below this |z|, moment functions use their power series (22 terms reach
# full double precision for |z| <= 0.8).
_SERIES_RADIUS = 0.8
_SERIES_TERMS = 22


def exprel(z):
    """(exp(z) - 1)/z, elementwise, with the removable singularity filled in.

    Real input is delegated to scipy; complex input uses a series for small
    modulus and the direct formula otherwise.
    """
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        return _exprel_real(z)
    out = np.empty_like(z, dtype=complex)
    small = np.abs(z) < _SERIES_RADIUS
    zs = z[small]
    acc = np.zeros_like(zs)
    for n in range(_SERIES_TERMS, 0, -1):
        acc = (acc + 1.0 / math.factorial(n)) * zs
    out[small] = acc / np.where(zs == 0, 1.0, zs) + np.where(zs == 0, 1.0, 0.0)
    zl = z[~small]
    out[~small] = (np.exp(zl) - 1.0) / zl
    return out


def exp_diff(r1, r2, x):
    """(exp(-r1*x) - exp(-r2*x)) / (r2 - r1) for x >= 0.

    Stable as r2 -> r1 (limit x*exp(-r1*x)). Both rates must have
    non-negative real part so no exponential overflows; callers in this
    package always satisfy that.
    """
    x = np.asarray(x, dtype=float)
    d = r2 - r1
    dx = d * x
    small = np.abs(dx) < 0.01
    # x * exp(-r1 x) * exprel(-d x) == (e^{-r1 x} - e^{-r2 x}) / d
    out = np.where(
        small,
        x * np.exp(-r1 * x) * _exprel_real(np.where(small, -dx, 0.0)),
        (np.exp(-r1 * x) - np.exp(-r2 * np.where(small, 0.0, x))) / np.where(small, 1.0, d),
    )
    return out


def _moments(z, kmax):
    """m_j(z) = integral_0^1 t^j exp(z t) dt for j = 0..kmax, exponent-shifted.

    Returns (shift, [m_0*e^-shift, ..., m_kmax*e^-shift]) where
    shift = max(Re z, 0) elementwise, so every returned value is O(1) even
    when exp(z) would overflow.
    """
    z = np.asarray(z)
    cplx = np.iscomplexobj(z)
    shift = np.maximum(np.real(z), 0.0)
    small = np.abs(z) < _SERIES_RADIUS
    dt = complex if cplx else float
    ms = [np.empty(z.shape, dtype=dt) for _ in range(kmax + 1)]

    if np.any(small):
        zs = z[small]
        es = np.exp(-shift[small])
        for j in range(kmax + 1):
            term = np.ones_like(zs)
            acc = term / (j + 1.0)
            for i in range(1, _SERIES_TERMS + 1):
                term = term * zs / i
                acc = acc + term / (j + i + 1.0)
            ms[j][small] = acc * es

    if np.any(~small):
        zl = z[~small]
        ez = np.exp(zl - shift[~small])  # e^{z - shift}, magnitude <= 1 for Re z > 0
        e0 = np.exp(-shift[~small])
        prev = (ez - e0) / zl
        ms[0][~small] = prev
        for j in range(1, kmax + 1):
            prev = (ez - j * prev) / zl
            ms[j][~small] = prev

    return shift, ms


def iexp_pow(k, s, l, u, log_scale=0.0):
    """integral_l^u t^k exp(s*t) dt, scaled by exp(log_scale).

    Stable for any rate ``s`` (including 0 and complex) and any interval,
    provided ``Re(s*t) + log_scale`` stays below ~700 on the interval, which
    callers guarantee. ``k`` in 0..3. Arguments broadcast.
    """
    if k not in (0, 1, 2, 3):
        raise ValueError("k must be in 0..3")
    s = np.asarray(s)
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    s, l, u = np.broadcast_arrays(s, l, u)
    delta = u - l
    z = s * delta
    shift, ms = _moments(z, k)
    # integral = e^{s l} * sum_j C(k,j) l^{k-j} delta^{j+1} m_j(s*delta)
    acc = np.zeros(z.shape, dtype=ms[0].dtype)
    for j in range(k + 1):
        acc = acc + math.comb(k, j) * l ** (k - j) * delta ** (j + 1) * ms[j]
    return acc * np.exp(s * l + shift + log_scale)
