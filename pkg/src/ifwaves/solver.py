"""Newton solution of the coarse travelling-wave problem.

A wave with m spikes is pinned down by m threshold conditions
nu(c*T_i^-) = 1 on the unknowns (c, T_2..T_m), with the phase fixed by
T_1 = 0. A converged root is only accepted as a wave after checking that
the profile stays below threshold away from the crossings; roots that fail
that check are kept but flagged, since they delimit where branches
terminate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import InsufficientEvents, NoConvergence, OrderViolation
from .model import CoarseWave, ModelParams
from .profiles import profile_nu, profile_nu_prime, synaptic_amplitudes

__all__ = [
    "SolveOptions",
    "SecondaryMax",
    "WaveRecord",
    "solve_wave",
    "compatibility_m1",
    "find_m1_speed",
    "seed_from_simulation",
    "seed_composite",
    "seed_next_spike",
]


@dataclass(frozen=True)
class SolveOptions:
    newton_tol: float = 1e-10
    max_iter: int = 50
    grid_count: int = 4001
    grid_span: tuple[float, float] | None = None  # explicit (xi_min, xi_max)
    threshold_margin: float = 0.0
    finite_diff_step: float = 1e-6
    crossing_exclusion: float = 1e-6  # scaled by c
    max_damping: int = 20

    def __post_init__(self):
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.grid_count < 2:
            raise ValueError("grid_count must be at least 2")
        if self.threshold_margin < 0:
            raise ValueError("threshold_margin must be non-negative")


@dataclass(frozen=True)
class SecondaryMax:
    xi: float
    value: float


@dataclass(frozen=True)
class WaveRecord:
    wave: CoarseWave
    beta: float
    residual: float
    validated: bool
    secondary_max: SecondaryMax | None = None

    def to_dict(self) -> dict:
        """Flat JSON-ready form: coarse variables and flags at top level."""
        d = {
            "m": self.wave.m,
            "c": self.wave.c,
            "T": self.wave.T.tolist(),
            "beta": self.beta,
            "residual": self.residual,
            "validated": self.validated,
        }
        if self.secondary_max is not None:
            d["secondary_max_xi"] = self.secondary_max.xi
            d["secondary_max_value"] = self.secondary_max.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WaveRecord":
        if "wave" in d:  # older nested form
            wave = CoarseWave.from_dict(d["wave"])
        else:
            wave = CoarseWave.from_dict(d)
        sm = None
        if "secondary_max_xi" in d:
            sm = SecondaryMax(float(d["secondary_max_xi"]),
                              float(d["secondary_max_value"]))
        return cls(
            wave=wave,
            beta=float(d["beta"]),
            residual=float(d["residual"]),
            validated=bool(d["validated"]),
            secondary_max=sm,
        )


def _wave_from_theta(m, theta):
    c = theta[0]
    T = np.concatenate([[0.0], theta[1:]]) if m > 1 else np.zeros(1)
    return CoarseWave(m=m, c=float(c), T=T)


def _theta_admissible(m, theta):
    if theta[0] <= 0:
        return False
    if m > 1:
        T = np.concatenate([[0.0], theta[1:]])
        if np.any(np.diff(T) <= 0):
            return False
    return True


def threshold_residuals(wave: CoarseWave, p: ModelParams) -> np.ndarray:
    """nu(c*T_i^-) - 1 for every spike (the left limit is built in)."""
    return profile_nu(wave.c * wave.T, wave, p) - 1.0


def newton_system(residual_fn, theta0, m, tol, max_iter, fd_step, max_damping):
    """Damped Newton with finite-difference Jacobian on the admissible cone."""
    theta = np.asarray(theta0, dtype=float).copy()
    if not _theta_admissible(m, theta):
        raise OrderViolation("initial guess violates c > 0 or offset ordering")
    F = residual_fn(theta)
    best = np.max(np.abs(F))
    for it in range(max_iter):
        if best <= tol:
            return theta, best, it
        J = np.empty((F.size, theta.size))
        for k in range(theta.size):
            h = fd_step * max(1.0, abs(theta[k]))
            up = theta.copy(); up[k] += h
            dn = theta.copy(); dn[k] -= h
            if not _theta_admissible(m, up) or not _theta_admissible(m, dn):
                h *= 0.01
                up = theta.copy(); up[k] += h
                dn = theta.copy(); dn[k] -= h
            J[:, k] = (residual_fn(up) - residual_fn(dn)) / (2 * h)
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, F, rcond=None)
        scale = 1.0
        for _ in range(max_damping + 1):
            cand = theta - scale * step
            if _theta_admissible(m, cand):
                Fc = residual_fn(cand)
                if np.all(np.isfinite(Fc)):
                    break
            scale *= 0.5
        else:
            raise OrderViolation("Newton step could not be damped into the admissible cone")
        theta, F = cand, Fc
        best = np.max(np.abs(F))
    if best <= tol:
        return theta, best, max_iter
    raise NoConvergence(f"Newton stalled at residual {best:.3e}", residual=best, iterations=max_iter)


def _find_secondary_max(wave: CoarseWave, p: ModelParams, span=None, count=2001):
    """Largest local maximum of nu beyond the last crossing, derivative-refined."""
    c = wave.c
    lo = c * wave.T[-1]
    hi = span if span is not None else lo + 10.0 / min(p.b1, p.b2)
    xs = np.linspace(lo + 1e-9 * max(1.0, c), hi, count)
    dv = profile_nu_prime(xs, wave, p)
    best = None
    sign = np.sign(dv)
    idx = np.nonzero((sign[:-1] > 0) & (sign[1:] <= 0))[0]
    for k in idx:
        try:
            xstar = brentq(lambda x: profile_nu_prime(x, wave, p), xs[k], xs[k + 1], xtol=1e-12)
        except ValueError:
            continue
        val = float(profile_nu(xstar, wave, p))
        if best is None or val > best.value:
            best = SecondaryMax(xi=float(xstar), value=val)
    if best is None:
        # profile monotone on the window; report the endpoint supremum
        vals = profile_nu(xs, wave, p)
        k = int(np.argmax(vals))
        best = SecondaryMax(xi=float(xs[k]), value=float(vals[k]))
    return best


def validate_subthreshold(wave: CoarseWave, p: ModelParams, opts: SolveOptions):
    """Check nu < 1 - margin on a grid, excluding crossing neighborhoods."""
    c = wave.c
    if opts.grid_span is not None:
        lo, hi = opts.grid_span
    else:
        width = c * wave.T[-1]
        lo, hi = -0.5 * width - 5.0, 2.0 * width + 5.0
    xs = np.linspace(lo, hi, opts.grid_count)
    keep = np.ones(xs.shape, dtype=bool)
    for T_j in wave.T:
        keep &= np.abs(xs - c * T_j) > opts.crossing_exclusion * c
    nu = profile_nu(xs[keep], wave, p)
    return bool(np.all(nu < 1.0 - opts.threshold_margin))


def solve_wave(m: int, guess: CoarseWave, p: ModelParams,
               opts: SolveOptions = SolveOptions()) -> WaveRecord:
    """Solve the m threshold conditions from a coarse guess and validate.

    Returns a WaveRecord; ``validated`` is False when the converged root has
    a superthreshold excursion (such roots delimit branch terminations and
    are deliberately kept).
    """
    if guess.m != m:
        raise ValueError(f"guess has m={guess.m}, expected {m}")
    theta0 = np.concatenate([[guess.c], guess.T[1:]])

    def residual(theta):
        return threshold_residuals(_wave_from_theta(m, theta), p)

    theta, res, _ = newton_system(residual, theta0, m, opts.newton_tol,
                                  opts.max_iter, opts.finite_diff_step, opts.max_damping)
    wave = _wave_from_theta(m, theta)
    validated = validate_subthreshold(wave, p, opts)
    secondary = _find_secondary_max(wave, p)
    return WaveRecord(wave=wave, beta=p.beta, residual=float(res),
                      validated=validated, secondary_max=secondary)


def compatibility_m1(c: float, p: ModelParams) -> float:
    """Single-spike speed residual: the closed synaptic gain minus (1 - I).

    The gain equals sum_k a_k*beta*c/((b_k c + beta)(b_k c + 1)); a wave
    with one spike exists where it balances the threshold deficit 1 - I.
    """
    if c <= 0:
        raise ValueError("speed must be positive")
    return float(synaptic_amplitudes(c, p).sum() - (1.0 - p.I))


def find_m1_speed(p: ModelParams, c_range=(1e-3, 50.0), samples=400, branch="fast"):
    """Bracket and bisect the compatibility residual for a single-spike speed.

    The residual generally has two roots (a fast and a slow wave); ``branch``
    selects which. Raises NoConvergence when no sign change is found.
    """
    cs = np.geomspace(c_range[0], c_range[1], samples)
    vals = np.array([compatibility_m1(c, p) for c in cs])
    sign = np.sign(vals)
    brackets = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if brackets.size == 0:
        raise NoConvergence("compatibility residual has no sign change in range")
    k = brackets[-1] if branch == "fast" else brackets[0]
    return float(brentq(lambda c: compatibility_m1(c, p), cs[k], cs[k + 1], xtol=1e-14, rtol=1e-15))


def seed_from_simulation(traj, m: int) -> CoarseWave:
    """Fit linear firing fronts to the last epoch of a trajectory.

    Uses each neuron's last m firing events: offsets from the median
    inter-ordinal gaps, speed from a least-squares line through the
    unwrapped front of first-of-last-m times.
    """
    events = traj.events_array()  # columns: time, neuron, ordinal
    if events.shape[0] == 0:
        raise InsufficientEvents("trajectory contains no firing events")
    x = traj.positions
    L = traj.L
    times_by_neuron = {}
    for t, i, _ in events:
        times_by_neuron.setdefault(int(i), []).append(t)
    rows = []
    for i, ts in times_by_neuron.items():
        if len(ts) >= m:
            rows.append((i, sorted(ts)[-m:]))
    if len(rows) < max(4, m):
        raise InsufficientEvents(
            f"only {len(rows)} neurons carry {m} firing events; need at least {max(4, m)}")
    last = np.array([r[1] for r in rows])
    offsets = np.median(last - last[:, :1], axis=0)

    # front of first-of-last-m times: unwrap positions along time order
    t1 = last[:, 0]
    xi = np.array([x[r[0]] for r in rows])
    order = np.argsort(t1)
    t1, xi = t1[order], xi[order]
    xu = xi.copy()
    for k in range(1, xu.size):
        d = xu[k] - xu[k - 1]
        d = (d + L) % (2 * L) - L
        xu[k] = xu[k - 1] + d
    A = np.column_stack([xu, np.ones_like(xu)])
    slope, _ = np.linalg.lstsq(A, t1, rcond=None)[0]
    if abs(slope) < 1e-12:
        raise InsufficientEvents("firing front is flat; no propagation to fit")
    c = 1.0 / abs(slope)
    T = offsets - offsets[0]
    if np.any(np.diff(T) <= 0):
        raise InsufficientEvents("fitted offsets are not strictly increasing")
    return CoarseWave(m=m, c=float(c), T=T)


def seed_composite(waves: list[CoarseWave], gaps: list[float]) -> CoarseWave:
    """Concatenate wave groups with positive inter-group gaps into one guess."""
    if len(waves) == 0:
        raise ValueError("need at least one group")
    if len(gaps) != max(len(waves) - 1, 0):
        raise ValueError("need exactly len(waves) - 1 gaps")
    if any(g <= 0 for g in gaps):
        raise OrderViolation("inter-group gaps must be positive")
    T = list(waves[0].T)
    for wave, gap in zip(waves[1:], gaps):
        start = T[-1] + gap
        T.extend(start + (wave.T - wave.T[0]))
    T = np.asarray(T)
    if np.any(np.diff(T) <= 0):
        raise OrderViolation("composite offsets are not strictly increasing")
    return CoarseWave(m=T.size, c=waves[0].c, T=T - T[0])


def wave_family(p: ModelParams, m_max: int,
                opts: SolveOptions = SolveOptions(),
                speed_trend: str = "down") -> dict[int, WaveRecord]:
    """Solve the tight family of waves for m = 1..m_max at fixed parameters.

    The single-spike wave comes from the compatibility bisection; the
    two-spike wave from a small scan over first-gap guesses (taking the
    tightest validated pair); each further spike is appended one gap behind
    the previous last offset. ``speed_trend`` filters the ladder onto the
    family whose speed decreases with m ("down", the lateral-inhibition
    case) or increases ("up", the purely excitatory case). Returns whatever
    prefix of the family could be solved.
    """
    if speed_trend not in ("down", "up"):
        raise ValueError("speed_trend must be 'down' or 'up'")
    out: dict[int, WaveRecord] = {}
    c1 = find_m1_speed(p)
    out[1] = solve_wave(1, CoarseWave.from_offsets(c1, [0.0]), p, opts)
    if m_max < 2:
        return out
    best = None
    for gap in (0.25, 0.4, 0.6, 0.9, 1.3, 1.8):
        for cf in (0.55, 0.7, 0.85, 1.05):
            try:
                rec = solve_wave(2, CoarseWave.from_offsets(c1 * cf, [0.0, gap]), p, opts)
            except (NoConvergence, OrderViolation):
                continue
            if rec.validated and rec.wave.T[1] < 8.0 \
                    and (best is None or rec.wave.T[1] < best.wave.T[1]):
                best = rec
    if best is None:
        return out
    out[2] = best
    rec = best
    shrinks = (0.93, 0.97, 0.88) if speed_trend == "down" else (1.02, 1.0, 1.05)
    for m in range(3, m_max + 1):
        T = rec.wave.T
        gap = T[-1] - T[-2]
        solved = None
        for shrink in shrinks:
            guess = CoarseWave.from_offsets(rec.wave.c * shrink,
                                            np.concatenate([T, [T[-1] + gap]]))
            try:
                cand = solve_wave(m, guess, p, opts)
            except (NoConvergence, OrderViolation):
                continue
            ratio = cand.wave.c / rec.wave.c
            if speed_trend == "down" and 0.5 < ratio < 1.0:
                solved = cand
                break
            if speed_trend == "up" and 1.0 <= ratio < 2.0:
                solved = cand
                break
        if solved is None:
            break
        out[m] = solved
        rec = solved
    return out


def seed_next_spike(record: WaveRecord, shrink: float = 0.98) -> CoarseWave:
    """Guess for a wave with one more spike, placed at the secondary maximum.

    The profile almost reaches threshold again at its trailing local
    maximum; appending a firing offset there seeds the (m+1)-spike solve.
    """
    wave = record.wave
    if record.secondary_max is None:
        raise ValueError("record carries no secondary maximum")
    T_new = record.secondary_max.xi / wave.c
    if T_new <= wave.T[-1]:
        T_new = wave.T[-1] + (wave.T[-1] - wave.T[-2] if wave.m > 1 else 0.5)
    T = np.concatenate([wave.T, [T_new]])
    return CoarseWave(m=wave.m + 1, c=wave.c * shrink, T=T)
