"""Linear stability of travelling waves via the complex determinant E.

Exponential perturbations Phi*exp(lambda*x) of the firing functions are
neutral modes of the linearised threshold operator exactly when lambda is a
root of E(z) = det[D - M(z)] inside the strip |Re z| <= eta, with D the
diagonal of row sums of M(0). The zero root, with kernel vector (1,...,1),
is the translational mode; a wave is classified by the sign of the largest
remaining real part.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .model import CoarseWave, ModelParams, kernel_w
from .profiles import psi, stability_entry_M

__all__ = [
    "StabilityMatrices",
    "StabilityRoot",
    "StabilityReport",
    "RootWindow",
    "build_matrices",
    "evaluate_E",
    "find_roots",
    "classify",
    "linearized_apply",
]

# roots closer to 0 than this are treated as the trivial translational root
_ZERO_RADIUS = 1e-6


@dataclass(frozen=True)
class RootWindow:
    re_min: float
    re_max: float
    im_max: float

    @classmethod
    def default(cls, p: ModelParams) -> "RootWindow":
        return cls(re_min=-p.eta + 0.05, re_max=1.0, im_max=20.0 * p.beta)


@dataclass(frozen=True)
class StabilityMatrices:
    m: int
    D: np.ndarray
    M_at: callable  # z (scalar or array) -> (m, m) or (N, m, m) complex
    log_scale: float  # sum_i log max(|D_i|, 1), the tolerance normalization

    def E(self, z):
        return evaluate_E(z, self)


@dataclass(frozen=True)
class StabilityRoot:
    lam: complex
    phi: np.ndarray
    residual: float
    sigma_ratio: float  # smallest over largest singular value at the root

    def to_dict(self):
        return {
            "re": self.lam.real,
            "im": self.lam.imag,
            "residual": self.residual,
            "sigma_ratio": self.sigma_ratio,
            "phi_re": np.real(self.phi).tolist(),
            "phi_im": np.imag(self.phi).tolist(),
        }


@dataclass(frozen=True)
class StabilityReport:
    wave: CoarseWave
    beta: float
    roots: list
    classification: str  # stable | unstable | marginal
    leading: StabilityRoot | None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "wave": self.wave.to_dict(),
            "beta": self.beta,
            "classification": self.classification,
            "leading": self.leading.to_dict() if self.leading else None,
            "roots": [r.to_dict() for r in self.roots],
            "diagnostics": self.diagnostics,
        }


def build_matrices(wave: CoarseWave, p: ModelParams) -> StabilityMatrices:
    """Assemble D and the M(z) evaluator for a coarse wave."""
    m = wave.m

    def M_at(z):
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        zf = np.atleast_1d(z)
        out = np.empty((zf.size, m, m), dtype=complex)
        for i in range(m):
            for j in range(m):
                out[:, i, j] = stability_entry_M(i, j, zf, wave, p)
        return out[0] if scalar else out

    M0 = M_at(0.0)
    D = np.diag(M0.sum(axis=1).real)
    log_scale = float(np.sum(np.log(np.maximum(np.abs(np.diag(D)), 1.0))))
    return StabilityMatrices(m=m, D=D, M_at=M_at, log_scale=log_scale)


def evaluate_E(z, mats: StabilityMatrices):
    """E(z) = det[D - M(z)] normalized by the product of |D_i| scales.

    Computed through the log-determinant so the normalized value stays
    representable at large m, where the raw determinant would underflow.
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    zf = np.atleast_1d(z).ravel()
    out = np.empty(zf.shape, dtype=complex)
    chunk = 8192
    for k in range(0, zf.size, chunk):
        Mz = mats.M_at(zf[k:k + chunk])
        sign, logabs = np.linalg.slogdet(mats.D[None, :, :] - Mz)
        with np.errstate(over="ignore"):
            out[k:k + chunk] = sign * np.exp(logabs - mats.log_scale)
    if scalar:
        return out[0]
    return out.reshape(np.atleast_1d(z).shape)


def _kernel_vector(lam, mats: StabilityMatrices):
    A = mats.D - mats.M_at(lam)
    _, s, Vh = np.linalg.svd(A)
    phi = Vh[-1].conj()
    k = int(np.argmax(np.abs(phi)))
    phi = phi / phi[k]
    ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
    return phi, ratio


def _polish_root(z0, mats, tol, max_iter=50):
    z = complex(z0)
    for _ in range(max_iter):
        E0 = evaluate_E(z, mats)
        if abs(E0) <= tol:
            return z, abs(E0)
        h = 1e-7 * (1.0 + abs(z))
        dE = (evaluate_E(z + h, mats) - evaluate_E(z - h, mats)) / (2 * h)
        if dE == 0:
            return None
        step = E0 / dE
        if not np.isfinite(step):
            return None
        if abs(step) > 2.0:
            step *= 2.0 / abs(step)
        z = z - step
    E0 = evaluate_E(z, mats)
    if abs(E0) <= tol:
        return z, abs(E0)
    return None


def find_roots(mats: StabilityMatrices, window: RootWindow, grid=(81, 321),
               root_tol: float = 1e-9, eta: float | None = None,
               kernel_tol: float = 1e-6):
    """Locate roots of E in the window by level-set scanning plus polishing.

    E is sampled on a rectangular grid over Im >= 0; cells where both the
    real and imaginary parts change sign seed a damped complex Newton
    polish. Roots with positive imaginary part are mirrored by conjugacy.
    The trivial zero root is always attempted. Diverged candidates are
    dropped and counted in the returned diagnostics, as are polished
    points whose matrix is not actually rank-deficient (singular-value
    ratio above kernel_tol).
    """
    nr, ni = grid
    res = np.linspace(window.re_min, window.re_max, nr)
    ims = np.linspace(0.0, max(window.im_max, 1e-3), ni)
    Z = res[None, :] + 1j * ims[:, None]
    E = evaluate_E(Z, mats)
    # the fixed normalization still leaves a strong m-dependence in the
    # magnitude of E; measure the window-local scale so root_tol is truly
    # dimensionless at any m
    mags = np.abs(E[np.isfinite(E) & (E != 0)])
    ref = float(np.median(mags)) if mags.size else 1.0
    tol_eff = root_tol * max(ref, 1e-300)
    sr = np.signbit(E.real)
    si = np.signbit(E.imag)

    def cell_mixed(s):
        c = s[:-1, :-1]
        return (c != s[1:, :-1]) | (c != s[:-1, 1:]) | (c != s[1:, 1:])

    cand_mask = cell_mixed(sr) & cell_mixed(si)
    seeds = [0.0 + 0.0j]
    ii, jj = np.nonzero(cand_mask)
    for a, b in zip(ii, jj):
        seeds.append(complex(0.5 * (res[b] + res[b + 1]), 0.5 * (ims[a] + ims[a + 1])))

    roots = []
    dropped = 0
    for z0 in seeds:
        got = _polish_root(z0, mats, tol_eff)
        if got is None:
            dropped += 1
            continue
        z, resid = got
        resid = resid / ref
        if not (window.re_min - 0.05 <= z.real <= window.re_max + 0.05):
            continue
        if abs(z.imag) > window.im_max + 1.0:
            continue
        if eta is not None and z.real <= -eta:
            continue
        z = complex(z.real, abs(z.imag))
        if any(abs(z - r[0]) < 1e-6 for r in roots):
            continue
        roots.append((z, resid))

    out = []
    not_rank_deficient = 0
    for z, resid in sorted(roots, key=lambda r: (-r[0].real, r[0].imag)):
        phi, ratio = _kernel_vector(z, mats)
        if ratio > kernel_tol:
            not_rank_deficient += 1
            continue
        out.append(StabilityRoot(lam=z, phi=phi, residual=resid, sigma_ratio=ratio))
        if z.imag > _ZERO_RADIUS:
            out.append(StabilityRoot(lam=np.conj(z), phi=phi.conj(), residual=resid,
                                     sigma_ratio=ratio))
    return out, {"candidates": len(seeds), "dropped": dropped,
                 "not_rank_deficient": not_rank_deficient}


def classify(wave: CoarseWave, p: ModelParams, window: RootWindow | None = None,
             grid=(81, 321), root_tol: float = 1e-9,
             class_tol: float = 1e-7) -> StabilityReport:
    """Classify a wave by the largest nonzero-root real part of E."""
    if window is None:
        window = RootWindow.default(p)
    mats = build_matrices(wave, p)
    roots, diag = find_roots(mats, window, grid=grid, root_tol=root_tol, eta=p.eta)
    nontrivial = [r for r in roots if abs(r.lam) > _ZERO_RADIUS]
    leading = max(nontrivial, key=lambda r: r.lam.real, default=None)
    if leading is None or leading.lam.real < -class_tol:
        cls = "stable"
    elif leading.lam.real > class_tol:
        cls = "unstable"
    else:
        cls = "marginal"
    diag["E0"] = abs(complex(evaluate_E(0.0, mats)))
    return StabilityReport(wave=wave, beta=p.beta, roots=roots,
                           classification=cls, leading=leading, diagnostics=diag)


def linearized_apply(Phi, lam, wave: CoarseWave, p: ModelParams, x_samples=None):
    """Apply the linearised threshold operator to exponential modes.

    Evaluates, by quadrature, the weighted sum

        (L phi)_i(x) = sum_j e^{T_ji} [ 1_{j<i} (phi_i - phi_j)(x)
            + int_{c T_ji}^inf e^{-y/c} w(y) psi_ij(y)
                  (phi_i(x) - phi_j(x - y)) dy ]

    for phi_j(x) = Phi_j exp(lam x), and returns (residual_matrix, worst)
    where residual_matrix[i, k] = e^{-lam x_k} (L phi)_i(x_k). For a true
    root pair the result vanishes; for the constant vector it vanishes
    identically.
    """
    Phi = np.asarray(Phi, dtype=complex)
    lam = complex(lam)
    m = wave.m
    c = wave.c
    if x_samples is None:
        x_samples = np.linspace(-1.0, 1.0, 3)
    x_samples = np.atleast_1d(np.asarray(x_samples, dtype=float))

    # quadrature of the two integrals per (i, j): weight e^{-y/c} w psi and
    # the same against e^{-lam y}
    bmin = min(p.b1, p.b2)
    out = np.zeros((m, x_samples.size), dtype=complex)
    for i in range(m):
        for j in range(m):
            T_ji = wave.T[j] - wave.T[i]
            lo = c * T_ji
            rate = min(1.0, p.beta) / c + bmin + min(lam.real, 0.0)
            hi = max(lo, 0.0) + 50.0 / max(rate, 0.05)

            def w_psi(y):
                return np.exp(-y / c) * kernel_w(y, p) * psi(i, j, y, wave, p)

            q0, _ = quad(w_psi, lo, hi, points=[0.0] if lo < 0 < hi else None,
                         limit=300, epsabs=1e-12, epsrel=1e-11)
            qr, _ = quad(lambda y: (w_psi(y) * np.exp(-lam * y)).real, lo, hi,
                         points=[0.0] if lo < 0 < hi else None,
                         limit=300, epsabs=1e-12, epsrel=1e-11)
            qi, _ = quad(lambda y: (w_psi(y) * np.exp(-lam * y)).imag, lo, hi,
                         points=[0.0] if lo < 0 < hi else None,
                         limit=300, epsabs=1e-12, epsrel=1e-11)
            qlam = qr + 1j * qi
            ind = 1.0 if j < i else 0.0
            # e^{-lam x} (L phi)_i picks up constant coefficients only
            out[i, :] += np.exp(T_ji) * (
                ind * (Phi[i] - Phi[j]) + Phi[i] * q0 - Phi[j] * qlam
            )
    worst = float(np.max(np.abs(out)))
    return out, worst
