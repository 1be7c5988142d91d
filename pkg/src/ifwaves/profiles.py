"""Closed-form comoving profiles and stability-matrix entries.

For the exponential coupling choices, the voltage profile of an m-spike wave
in the comoving coordinate xi = c*t - x is a finite sum of exponentials.
With q = beta/c and per-kernel-term amplitude

    A_k = a_k * beta * c / ((b_k*c + beta) * (b_k*c + 1)),

the synaptic contribution of spike j at offset x = xi - c*T_j is

    x <= 0:   sum_k A_k * exp(b_k * x)
    x >  0:   exp(-x/c) * sum_k A_k
              + (1/c) * sum_k a_k*beta * [ xd(1/c, q, x)/(b_k + q) - T2_k(x) ]

where xd(r1, r2, x) = (e^{-r1 x} - e^{-r2 x})/(r2 - r1) and T2_k is the
divided difference (xd(1/c, b_k, x) - xd(1/c, q, x))/(b_k - q), evaluated
through a short Taylor expansion when b_k*c is within ~1e-4 of beta. The
reset of spike j contributes -exp(-x/c) strictly for x > 0, which encodes
the left-limit convention: evaluating at xi = c*T_j excludes spike j's own
reset, so the value at a crossing equals the left limit there.

All formulas are exact in beta across beta = 1 (no switchover window is
needed; the stable primitives realize the analytic limits).

The linearization ingredients follow the same pattern. The memory function

    psi_ij(y) = beta - beta^2 * (exp((1-beta)*x) - 1)/(1-beta),
    x = y/c - (T_j - T_i),

enters the stability matrix entries

    M_ij(z) = e^{T_ji} * [ 1_{j<i}
              + int_{c*T_ji}^inf e^{-(z + 1/c) y} w(y) psi_ij(y) dy ],

whose tail reduces, after exact cancellation of the 1/(1-beta) poles, to

    a_k*beta * e^{T_ji - kappa*Lam}
        * (kappa*(1 - beta*xl*exprel((1-beta)*xl)) - 1/c) / (kappa*(kappa - rho))

with kappa = z + 1/c + b_k, rho = (1-beta)/c, Lam = max(c*T_ji, 0), and
xl = Lam/c - T_ji. The finite piece over [c*T_ji, 0) (present when j < i)
uses the stable moment primitives.
"""

from __future__ import annotations

import numpy as np

from .model import CoarseWave, ModelParams
from .stable import exp_diff, exprel, iexp_pow

__all__ = [
    "profile_nu",
    "profile_sigma",
    "profile_nu_prime",
    "psi",
    "stability_entry_M",
    "synaptic_amplitudes",
]

# |d * x| below this uses the Taylor form of the divided difference T2.
_DD_SWITCH = 1e-4


def synaptic_amplitudes(c: float, p: ModelParams) -> np.ndarray:
    """Per-kernel-term amplitude A_k of the synaptic profile at a crossing."""
    out = []
    for a_k, b_k in p.kernel_terms:
        out.append(a_k * p.beta * c / ((b_k * c + p.beta) * (b_k * c + 1.0)))
    return np.asarray(out)


def _synaptic_contrib(x, c: float, p: ModelParams):
    """Synaptic contribution of one spike at signed offset x = xi - c*T_j."""
    x = np.asarray(x, dtype=float)
    beta = p.beta
    q = beta / c
    A = synaptic_amplitudes(c, p)
    out = np.zeros_like(x)

    neg = x <= 0
    if np.any(neg):
        xs = x[neg]
        acc = np.zeros_like(xs)
        for A_k, (_, b_k) in zip(A, p.kernel_terms):
            acc += A_k * np.exp(b_k * xs)
        out[neg] = acc

    pos = ~neg
    if np.any(pos):
        xs = x[pos]
        acc = A.sum() * np.exp(-xs / c)
        base = exp_diff(1.0 / c, q, xs)
        for A_k, (a_k, b_k) in zip(A, p.kernel_terms):
            d_k = b_k - q
            t2 = np.empty_like(xs)
            taylor = np.abs(d_k * xs) < _DD_SWITCH
            if np.any(~taylor):
                xg = xs[~taylor]
                t2[~taylor] = (exp_diff(1.0 / c, b_k, xg) - exp_diff(1.0 / c, q, xg)) / d_k
            if np.any(taylor):
                xt = xs[taylor]
                sq = (beta - 1.0) / c
                ls = -xt / c
                t2[taylor] = (
                    iexp_pow(1, sq, -xt, 0.0, log_scale=ls)
                    + 0.5 * d_k * iexp_pow(2, sq, -xt, 0.0, log_scale=ls)
                    + d_k * d_k / 6.0 * iexp_pow(3, sq, -xt, 0.0, log_scale=ls)
                ).real
            acc = acc + (a_k * beta / c) * (base / (b_k + q) - t2)
        out[pos] = acc
    return out


def profile_nu(xi, wave: CoarseWave, p: ModelParams):
    """Voltage profile nu_m(xi; c, T) of the travelling wave, vectorized.

    At xi = c*T_j exactly, the value returned is the left limit (spike j's
    own reset excluded), so converged waves satisfy nu(c*T_i) == 1.
    """
    xi = np.asarray(xi, dtype=float)
    scalar = xi.ndim == 0
    xi = np.atleast_1d(xi)
    if not np.all(np.isfinite(xi)):
        raise ValueError("xi must be finite")
    c = wave.c
    X = xi[..., None] - c * wave.T  # (..., m) offsets, all spikes at once
    resets = np.where(X > 0, np.exp(-np.maximum(X, 0.0) / c), 0.0).sum(axis=-1)
    total = p.I - resets + _synaptic_contrib(X, c, p).sum(axis=-1)
    return total[0] if scalar else total


def profile_sigma(xi, wave: CoarseWave, p: ModelParams):
    """Synaptic profile sigma_m(xi; c, T); continuous in xi."""
    xi = np.asarray(xi, dtype=float)
    scalar = xi.ndim == 0
    xi = np.atleast_1d(xi)
    c = wave.c
    beta = p.beta
    q = beta / c
    X = xi[..., None] - c * wave.T
    neg = X <= 0
    acc = np.zeros_like(X)
    for a_k, b_k in p.kernel_terms:
        coeff = a_k * beta / (c * (b_k + q))
        if np.any(neg):
            acc[neg] += coeff * np.exp(b_k * X[neg])
        if np.any(~neg):
            xs = X[~neg]
            acc[~neg] += coeff * np.exp(-q * xs) + (a_k * beta / c) * exp_diff(q, b_k, xs)
    total = acc.sum(axis=-1)
    return total[0] if scalar else total


def profile_nu_prime(xi, wave: CoarseWave, p: ModelParams):
    """d(nu)/d(xi) away from the reset discontinuities.

    Uses the comoving balance c*nu' = I - nu + c*sigma, which the closed
    forms satisfy identically.
    """
    nu = profile_nu(xi, wave, p)
    sig = profile_sigma(xi, wave, p)
    return (p.I - nu) / wave.c + sig


def psi(i: int, j: int, y, wave: CoarseWave, p: ModelParams):
    """Memory function psi_ij(y) of the linearised threshold operator.

    Indices are 0-based into wave.T. Defined for y >= c*(T[j] - T[i]);
    the beta = 1 limit 1 - (y/c - T_ji) is reached exactly.
    """
    y = np.asarray(y, dtype=float)
    T_ji = wave.T[j] - wave.T[i]
    x = y / wave.c - T_ji
    if np.any(x < -1e-12):
        raise ValueError("psi evaluated left of its domain y >= c*(T_j - T_i)")
    beta = p.beta
    # beta - beta^2 * x * exprel((1-beta) x)
    return beta - beta * beta * x * exprel((1.0 - beta) * x)


def stability_entry_M(i: int, j: int, z, wave: CoarseWave, p: ModelParams):
    """Entry M_ij(z) of the stability matrix, closed form, vectorized in z.

    Requires Re(z) > -eta (the strip where the defining integral converges).
    Indices are 0-based into wave.T.
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(z.real <= -p.eta):
        raise ValueError("stability entries require Re(z) > -eta")
    c = wave.c
    beta = p.beta
    T_ji = wave.T[j] - wave.T[i]
    l = c * T_ji
    rho = (1.0 - beta) / c
    lam = max(l, 0.0)
    x_l = lam / c - T_ji

    val = np.full(z.shape, np.exp(T_ji) if j < i else 0.0, dtype=complex)
    psi_fac = 1.0 - beta * x_l * float(exprel(np.asarray((1.0 - beta) * x_l)))
    for a_k, b_k in p.kernel_terms:
        kappa = z + 1.0 / c + b_k
        val += (
            a_k
            * beta
            * np.exp(T_ji - kappa * lam)
            * (kappa * psi_fac - 1.0 / c)
            / (kappa * (kappa - rho))
        )
        if l < 0:
            # finite piece over [c*T_ji, 0): kernel branch exp(+b_k y)
            T_ij = -T_ji
            s = c * (b_k - z) - 1.0
            x0 = iexp_pow(0, s, 0.0, T_ij)
            sig = 1.0 - beta
            if abs(sig * T_ij) > _DD_SWITCH:
                x1 = (iexp_pow(0, s + sig, 0.0, T_ij) - x0) / sig
            else:
                x1 = (
                    iexp_pow(1, s, 0.0, T_ij)
                    + 0.5 * sig * iexp_pow(2, s, 0.0, T_ij)
                    + sig * sig / 6.0 * iexp_pow(3, s, 0.0, T_ij)
                )
            val += a_k * c * np.exp(l * (b_k - z)) * (beta * x0 - beta * beta * x1)
    return val[0] if scalar else val
