"""Branch continuation in the synaptic rate and its bifurcation events.

Waves are continued in beta by pseudo-arclength: a secant predictor in the
extended unknowns (c, T_2..T_m, beta) and a Newton corrector on the m
threshold conditions plus the arclength normalization. Two monitors run
along the branch: the grazing monitor g = 1 - (largest trailing local
maximum of the profile), whose vanishing terminates the branch at a
tangency, and the Hopf monitor h = largest nonzero-root real part, whose
sign changes mark oscillatory bifurcations. Grazing and Hopf points are
then polished on their own extended systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (NoConvergence, TangencyOrderViolation,
                     ZeroFrequencyCollapse)
from .model import CoarseWave, ModelParams
from .profiles import profile_nu, profile_nu_prime
from .solver import (SecondaryMax, SolveOptions, WaveRecord, _find_secondary_max,
                     solve_wave, threshold_residuals, validate_subthreshold)
from .stability import RootWindow, classify

__all__ = [
    "BranchPoint",
    "BranchEvent",
    "Branch",
    "ContinuationOptions",
    "GrazingPoint",
    "HopfPoint",
    "continue_branch",
    "solve_grazing",
    "solve_hopf",
    "grazing_scaling_study",
]


@dataclass(frozen=True)
class BranchPoint:
    beta: float
    wave: CoarseWave
    residual: float
    validated: bool
    secondary_max: SecondaryMax | None
    tangent: np.ndarray  # unit vector in (c, T_2.., beta)
    grazing_monitor: float | None = None
    leading_re: float | None = None
    leading_im: float | None = None


@dataclass(frozen=True)
class BranchEvent:
    kind: str  # grazing | hopf | fold
    beta: float
    wave: CoarseWave
    data: dict = field(default_factory=dict)


@dataclass
class Branch:
    m: int
    points: list = field(default_factory=list)
    events: list = field(default_factory=list)
    termination: str = "max_points"


@dataclass(frozen=True)
class ContinuationOptions:
    step: float = 0.2
    step_min: float = 1e-4
    step_max: float = 0.75
    direction: int = 1  # initial sign of the beta component of the tangent
    max_points: int = 400
    beta_min: float = 0.05
    beta_max: float = 25.0
    corrector_tol: float = 1e-10
    corrector_max_iter: int = 12
    # Hopf-monitor cadence: -1 = every point up to m = 10, every 5th above;
    # None disables the monitor
    stability_every: int | None = -1
    stability_grid: tuple = (61, 241)
    stability_window: RootWindow | None = None
    event_tol: float = 1e-6
    solve_opts: SolveOptions = field(default_factory=SolveOptions)

    def cadence(self, m: int) -> int | None:
        if self.stability_every is None:
            return None
        if self.stability_every == -1:
            return 1 if m <= 10 else 5
        return self.stability_every


def _unknowns(wave: CoarseWave, beta: float) -> np.ndarray:
    return np.concatenate([[wave.c], wave.T[1:], [beta]])


def _wave_beta(m: int, u: np.ndarray):
    c = float(u[0])
    T = np.concatenate([[0.0], u[1:-1]]) if m > 1 else np.zeros(1)
    return CoarseWave(m=m, c=c, T=T), float(u[-1])


def _admissible(m, u):
    if u[0] <= 0 or u[-1] <= 0:
        return False
    if m > 1 and np.any(np.diff(np.concatenate([[0.0], u[1:-1]])) <= 0):
        return False
    return True


def _extended_residual(u, m, base: ModelParams):
    wave, beta = _wave_beta(m, u)
    return threshold_residuals(wave, base.with_(beta=beta))


def _corrector(u_pred, tangent, u_prev, ds, m, base, opts: ContinuationOptions):
    """Newton on thresholds + tangent*(u - u_prev) = ds."""
    u = u_pred.copy()
    for _ in range(opts.corrector_max_iter):
        if not _admissible(m, u):
            raise NoConvergence("corrector left the admissible cone")
        F = _extended_residual(u, m, base)
        arc = float(tangent @ (u - u_prev) - ds)
        R = np.concatenate([F, [arc]])
        if np.max(np.abs(R)) <= opts.corrector_tol:
            return u
        J = np.empty((m + 1, m + 1))
        for k in range(m + 1):
            h = 1e-6 * max(1.0, abs(u[k]))
            up = u.copy(); up[k] += h
            dn = u.copy(); dn[k] -= h
            J[:m, k] = (_extended_residual(up, m, base) - _extended_residual(dn, m, base)) / (2 * h)
        J[m, :] = tangent
        try:
            u = u - np.linalg.solve(J, R)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular corrector Jacobian: {exc}") from exc
    F = _extended_residual(u, m, base)
    arc = float(tangent @ (u - u_prev) - ds)
    if max(np.max(np.abs(F)), abs(arc)) <= opts.corrector_tol:
        return u
    raise NoConvergence("corrector did not converge")


def _grazing_monitor(wave: CoarseWave, p: ModelParams):
    sm = _find_secondary_max(wave, p)
    return 1.0 - sm.value, sm


def _hopf_monitor(wave, p, opts: ContinuationOptions):
    window = opts.stability_window or RootWindow.default(p)
    rep = classify(wave, p, window=window, grid=opts.stability_grid)
    if rep.leading is None:
        return None, None
    return rep.leading.lam.real, rep.leading.lam.imag


def _bisect_beta(m, base, lo_u, hi_u, crossing, tol):
    """Bisect in beta between two branch points; re-solves the wave at each midpoint.

    ``crossing(record, params)`` returns the monitored scalar; its sign
    differs at the two inputs. Returns (record, params) at the refined beta.
    """
    wave_lo, beta_lo = _wave_beta(m, lo_u)
    wave_hi, beta_hi = _wave_beta(m, hi_u)
    rec_lo = solve_wave(m, wave_lo, base.with_(beta=beta_lo))
    f_lo = crossing(rec_lo, base.with_(beta=beta_lo))
    best = None
    for _ in range(60):
        if abs(beta_hi - beta_lo) <= tol:
            break
        beta_mid = 0.5 * (beta_lo + beta_hi)
        frac = (beta_mid - beta_lo) / (beta_hi - beta_lo) if beta_hi != beta_lo else 0.5
        guess_T = wave_lo.T + frac * (wave_hi.T - wave_lo.T)
        guess = CoarseWave(m=m, c=wave_lo.c + frac * (wave_hi.c - wave_lo.c), T=guess_T)
        rec_mid = solve_wave(m, guess, base.with_(beta=beta_mid))
        f_mid = crossing(rec_mid, base.with_(beta=beta_mid))
        if np.sign(f_mid) == np.sign(f_lo):
            beta_lo, wave_lo, f_lo = beta_mid, rec_mid.wave, f_mid
        else:
            beta_hi, wave_hi = beta_mid, rec_mid.wave
        best = (rec_mid, base.with_(beta=beta_mid))
    if best is None:
        best = (rec_lo, base.with_(beta=beta_lo))
    return best


def continue_branch(start: WaveRecord, p: ModelParams,
                    opts: ContinuationOptions = ContinuationOptions()) -> Branch:
    """Trace a branch from a solved wave, recording events along the way.

    Terminates at a grazing tangency (normal branch end), at the beta
    bounds, after max_points, or when the corrector fails below step_min.
    Fold events are detected from sign changes of the tangent's beta
    component; Hopf events from sign changes of the leading nonzero root's
    real part, refined by bisection.
    """
    m = start.wave.m
    base = p
    branch = Branch(m=m)

    u0 = _unknowns(start.wave, start.beta)
    # initial tangent by a small natural-parameter step
    db = 1e-4 * max(1.0, start.beta)
    rec1 = solve_wave(m, start.wave, base.with_(beta=start.beta + db), opts.solve_opts)
    u1 = _unknowns(rec1.wave, start.beta + db)
    tangent = (u1 - u0) / np.linalg.norm(u1 - u0)
    if np.sign(tangent[-1]) != np.sign(opts.direction):
        tangent = -tangent

    def make_point(u, tangent):
        wave, beta = _wave_beta(m, u)
        params = base.with_(beta=beta)
        res = float(np.max(np.abs(threshold_residuals(wave, params))))
        validated = validate_subthreshold(wave, params, opts.solve_opts)
        g, sm = _grazing_monitor(wave, params)
        point = BranchPoint(beta=beta, wave=wave, residual=res, validated=validated,
                            secondary_max=sm, tangent=tangent.copy(), grazing_monitor=g)
        return point

    cadence = opts.cadence(m)
    pt = make_point(u0, tangent)
    if cadence:
        re, im = _hopf_monitor(pt.wave, base.with_(beta=pt.beta), opts)
        pt = BranchPoint(**{**pt.__dict__, "leading_re": re, "leading_im": im})
    branch.points.append(pt)

    u_prev = u0
    step = opts.step
    while len(branch.points) < opts.max_points:
        accepted = None
        while step >= opts.step_min:
            u_pred = u_prev + step * tangent
            try:
                u_new = _corrector(u_pred, tangent, u_prev, step, m, base, opts)
                accepted = u_new
                break
            except NoConvergence:
                step *= 0.5
        if accepted is None:
            branch.termination = "corrector_failure"
            break
        new_tangent = (accepted - u_prev) / np.linalg.norm(accepted - u_prev)
        pt_new = make_point(accepted, new_tangent)
        k = len(branch.points)
        if cadence and k % cadence == 0:
            re, im = _hopf_monitor(pt_new.wave, base.with_(beta=pt_new.beta), opts)
            pt_new = BranchPoint(**{**pt_new.__dict__, "leading_re": re, "leading_im": im})
        prev_pt = branch.points[-1]

        # fold: beta component of the tangent changes sign
        if np.sign(new_tangent[-1]) != np.sign(prev_pt.tangent[-1]):
            branch.events.append(BranchEvent(kind="fold", beta=pt_new.beta,
                                             wave=pt_new.wave, data={}))
        # Hopf: leading real part changes sign
        if (pt_new.leading_re is not None and prev_pt.leading_re is not None
                and np.sign(pt_new.leading_re) != np.sign(prev_pt.leading_re)
                and abs(pt_new.leading_re - prev_pt.leading_re) < 1.0):
            def h_cross(rec, params):
                re, _ = _hopf_monitor(rec.wave, params, opts)
                return re if re is not None else -1.0
            try:
                rec_h, params_h = _bisect_beta(m, base, _unknowns(prev_pt.wave, prev_pt.beta),
                                               _unknowns(pt_new.wave, pt_new.beta),
                                               h_cross, opts.event_tol)
                _, omega = _hopf_monitor(rec_h.wave, params_h, opts)
                branch.events.append(BranchEvent(kind="hopf", beta=params_h.beta,
                                                 wave=rec_h.wave,
                                                 data={"omega": abs(omega or 0.0)}))
            except (NoConvergence, Exception):
                branch.events.append(BranchEvent(kind="hopf", beta=pt_new.beta,
                                                 wave=pt_new.wave, data={"refined": False}))
        # grazing: monitor reaches zero (trailing maximum touches threshold)
        if pt_new.grazing_monitor is not None and prev_pt.grazing_monitor is not None \
                and np.sign(pt_new.grazing_monitor) != np.sign(prev_pt.grazing_monitor):
            def g_cross(rec, params):
                g, _ = _grazing_monitor(rec.wave, params)
                return g
            rec_g, params_g = _bisect_beta(m, base, _unknowns(prev_pt.wave, prev_pt.beta),
                                           _unknowns(pt_new.wave, pt_new.beta),
                                           g_cross, opts.event_tol)
            sm = _find_secondary_max(rec_g.wave, params_g)
            branch.events.append(BranchEvent(kind="grazing", beta=params_g.beta,
                                             wave=rec_g.wave,
                                             data={"T_G": sm.xi / rec_g.wave.c}))
            branch.points.append(pt_new)
            branch.termination = "grazing"
            return branch

        branch.points.append(pt_new)
        if not (opts.beta_min <= pt_new.beta <= opts.beta_max):
            branch.termination = "beta_bound"
            break
        u_prev = accepted
        tangent = new_tangent
        step = min(step * 1.3, opts.step_max)
    return branch


@dataclass(frozen=True)
class GrazingPoint:
    beta: float
    wave: CoarseWave
    T_G: float
    residual: float

    def to_dict(self):
        return {"beta": self.beta, "wave": self.wave.to_dict(),
                "T_G": self.T_G, "residual": self.residual}


@dataclass(frozen=True)
class HopfPoint:
    beta: float
    wave: CoarseWave
    omega: float
    residual: float

    def to_dict(self):
        return {"beta": self.beta, "wave": self.wave.to_dict(),
                "omega": self.omega, "residual": self.residual}


def solve_grazing(wave: CoarseWave, T_G: float, beta: float, p: ModelParams,
                  tol: float = 1e-11, max_iter: int = 60) -> GrazingPoint:
    """Newton on the extended tangency system.

    Unknowns (c, T_2..T_m, T_G, beta); equations: the m thresholds,
    profile value 1 at the tangency, zero slope at the tangency.
    """
    m = wave.m
    if T_G <= wave.T[-1]:
        raise TangencyOrderViolation("tangency offset must exceed the last firing offset")
    theta0 = np.concatenate([[wave.c], wave.T[1:], [T_G, beta]])

    def residual(theta):
        c = theta[0]
        T = np.concatenate([[0.0], theta[1:m]])
        tg, b = theta[m], theta[m + 1]
        wv = CoarseWave(m=m, c=c, T=T)
        params = p.with_(beta=b)
        out = np.empty(m + 2)
        out[:m] = threshold_residuals(wv, params)
        out[m] = profile_nu(c * tg, wv, params) - 1.0
        out[m + 1] = profile_nu_prime(c * tg, wv, params)
        return out

    def admissible(_, theta):
        if theta[0] <= 0 or theta[m + 1] <= 0:
            return False
        T = np.concatenate([[0.0], theta[1:m], [theta[m]]])
        return not np.any(np.diff(T) <= 0)

    theta, res = _newton_extended(residual, theta0, admissible, tol, max_iter)
    c = theta[0]
    T = np.concatenate([[0.0], theta[1:m]])
    return GrazingPoint(beta=float(theta[m + 1]), wave=CoarseWave(m=m, c=float(c), T=T),
                        T_G=float(theta[m]), residual=res)


def solve_hopf(wave: CoarseWave, beta: float, omega: float, p: ModelParams,
               tol: float = 1e-10, max_iter: int = 60) -> HopfPoint:
    """Newton on the extended oscillatory-bifurcation system.

    Unknowns (c, T_2..T_m, beta, omega); equations: the m thresholds and
    the real and imaginary parts of E(i*omega).
    """
    from .stability import build_matrices, evaluate_E

    if omega <= 0:
        raise ZeroFrequencyCollapse("need a positive frequency guess")
    m = wave.m
    theta0 = np.concatenate([[wave.c], wave.T[1:], [beta, omega]])
    # scale the determinant equations by the generic local magnitude of E
    # (measured a fixed offset away from the seed, which may itself sit on
    # the root) so the shared tolerance is meaningful at any spike count
    E_ref = evaluate_E(0.2 + 1j * omega, build_matrices(wave, p.with_(beta=beta)))
    e_scale = max(abs(E_ref), 1e-300)

    def residual(theta):
        c = theta[0]
        T = np.concatenate([[0.0], theta[1:m]])
        b, om = theta[m], theta[m + 1]
        wv = CoarseWave(m=m, c=c, T=T)
        params = p.with_(beta=b)
        out = np.empty(m + 2)
        out[:m] = threshold_residuals(wv, params)
        Ev = evaluate_E(1j * om, build_matrices(wv, params)) / e_scale
        out[m] = Ev.real
        out[m + 1] = Ev.imag
        return out

    def admissible(_, theta):
        if theta[0] <= 0 or theta[m] <= 0:
            return False
        if m > 1 and np.any(np.diff(np.concatenate([[0.0], theta[1:m]])) <= 0):
            return False
        return True

    theta, res = _newton_extended(residual, theta0, admissible, tol, max_iter)
    omega_out = float(theta[m + 1])
    if abs(omega_out) < 1e-6:
        raise ZeroFrequencyCollapse("Hopf solve collapsed onto the trivial root")
    c = theta[0]
    T = np.concatenate([[0.0], theta[1:m]])
    return HopfPoint(beta=float(theta[m]), wave=CoarseWave(m=m, c=float(c), T=T),
                     omega=abs(omega_out), residual=res)


def _newton_extended(residual, theta0, admissible, tol, max_iter):
    theta = np.asarray(theta0, dtype=float).copy()
    F = residual(theta)
    for _ in range(max_iter):
        nrm = np.max(np.abs(F))
        if nrm <= tol:
            return theta, float(nrm)
        J = np.empty((F.size, theta.size))
        for k in range(theta.size):
            h = 1e-6 * max(1.0, abs(theta[k]))
            up = theta.copy(); up[k] += h
            dn = theta.copy(); dn[k] -= h
            J[:, k] = (residual(up) - residual(dn)) / (2 * h)
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, F, rcond=None)
        # trust cap: polished points must stay near their seeds
        cap = np.max(np.abs(step) / np.maximum(1.0, np.abs(theta)))
        if cap > 0.5:
            step = step * (0.5 / cap)
        scale = 1.0
        for _ in range(25):
            cand = theta - scale * step
            if admissible(None, cand):
                Fc = residual(cand)
                if np.all(np.isfinite(Fc)):
                    break
            scale *= 0.5
        else:
            raise NoConvergence("extended Newton could not stay admissible")
        theta, F = cand, Fc
    nrm = np.max(np.abs(F))
    if nrm <= tol:
        return theta, float(nrm)
    raise NoConvergence(f"extended Newton stalled at {nrm:.3e}", residual=float(nrm))


def grazing_scaling_study(p: ModelParams, m_max: int, start: GrazingPoint,
                          progress=None):
    """Bootstrap grazing points from m to m+1 up to m_max.

    From a grazing point of an m-spike wave, the next guess inserts a new
    firing offset halfway between T_m and the tangency offset, keeping the
    tangency as the new guess. Returns (rows, last_grazing, gain_curve)
    where rows have columns (m, beta_G, c, T_m, c*T_m); the chain reports
    partial results if a solve breaks.
    """
    rows = []
    gp = start
    m = gp.wave.m
    rows.append((m, gp.beta, gp.wave.c, float(gp.wave.T[-1]), gp.wave.c * float(gp.wave.T[-1])))
    while m < m_max:
        T_new = np.concatenate([gp.wave.T, [(gp.wave.T[-1] + gp.T_G) / 2.0]])
        guess = CoarseWave(m=m + 1, c=gp.wave.c, T=T_new)
        try:
            gp = solve_grazing(guess, gp.T_G, gp.beta, p)
        except (NoConvergence, TangencyOrderViolation, ValueError) as exc:
            return rows, gp, _gain_curve(gp), f"chain stopped at m={m}: {exc}"
        m += 1
        rows.append((m, gp.beta, gp.wave.c, float(gp.wave.T[-1]), gp.wave.c * float(gp.wave.T[-1])))
        if progress:
            progress(m, gp)
    return rows, gp, _gain_curve(gp), None


def _gain_curve(gp: GrazingPoint):
    """Instantaneous firing rate 1/(T_{i+1} - T_i) against position c*T_i."""
    T = gp.wave.T
    if T.size < 2:
        return np.empty((0, 2))
    pos = gp.wave.c * T[:-1]
    gain = 1.0 / np.diff(T)
    return np.column_stack([pos, gain])


def continue_event_in_parameter(kind: str, start, p: ModelParams,
                                param: str, values):
    """Two-parameter continuation of a grazing or Hopf point.

    Re-solves the extended system at each value of a secondary parameter
    (``param`` names a scalar field of the model), seeding from the
    previous solution. Returns the list of solved points; stops early on
    failure, reporting what was reached.
    """
    out = [start]
    point = start
    for val in values:
        params = p.with_(**{param: float(val)})
        try:
            if kind == "grazing":
                point = solve_grazing(point.wave, point.T_G, point.beta, params)
            elif kind == "hopf":
                point = solve_hopf(point.wave, point.beta, point.omega, params)
            else:
                raise ValueError(f"unknown event kind {kind!r}")
        except NoConvergence:
            break
        out.append(point)
    return out
