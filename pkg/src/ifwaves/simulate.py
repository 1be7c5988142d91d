"""Exact event-driven simulation of the discrete n-neuron ring network.

Between firing events every neuron obeys the linear system
dv/dt = Ieff - v + s, ds/dt = -beta*s, which is solved in closed form; the
only numerics is the scalar search for the earliest threshold upcrossing,
which exploits that f'(t)*e^t is monotone between events, so each voltage
has at most two monotonicity segments. Events apply the reset v -> 0 to
the firing neuron and kick every synaptic variable by (2*L*beta/n) times
the corresponding connectivity column. The dynamics is deterministic:
identical inputs give bit-identical event sequences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from .errors import InsufficientEvents, IntegrationError, LevelNotCrossed
from .model import CoarseWave, ModelParams, kernel_w
from .profiles import profile_nu, profile_sigma
from .stable import exp_diff, exprel

__all__ = [
    "NetworkState",
    "FiringEvent",
    "SpeedStats",
    "NetworkTrajectory",
    "ring_positions",
    "ring_connectivity",
    "propagate",
    "step_to_next_event",
    "apply_reset",
    "simulate",
    "seed_state_from_wave",
    "track_levelset",
    "fit_saltatory_amplitude",
]

_TIE_WINDOW = 1e-12
_EVENT_TOL = 1e-12


@dataclass
class NetworkState:
    t: float
    v: np.ndarray
    s: np.ndarray
    W: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class FiringEvent:
    neuron: int
    time: float
    ordinal: int


@dataclass(frozen=True)
class SpeedStats:
    c_bar: float
    sigma_c: float
    c_min: float
    c_max: float
    samples: np.ndarray

    def to_dict(self):
        return {
            "c_bar": self.c_bar,
            "sigma_c": self.sigma_c,
            "c_min": self.c_min,
            "c_max": self.c_max,
            "count": int(self.samples.size),
        }


@dataclass
class NetworkTrajectory:
    positions: np.ndarray
    L: float
    events: list = field(default_factory=list)
    sample_times: np.ndarray | None = None
    v_samples: np.ndarray | None = None
    s_samples: np.ndarray | None = None
    levelset: np.ndarray | None = None
    speed_stats: SpeedStats | None = None

    def events_array(self) -> np.ndarray:
        """Events as float rows (time, neuron, ordinal), globally time-ordered."""
        if not self.events:
            return np.empty((0, 3))
        return np.array([(e.time, e.neuron, e.ordinal) for e in self.events])


def ring_positions(p: ModelParams) -> np.ndarray:
    n, L = p.domain.n, p.domain.L
    return -L + 2.0 * L * np.arange(1, n + 1) / n


def ring_connectivity(p: ModelParams) -> np.ndarray:
    """Symmetric W_ik = w(d(x_i, x_k)) with the wrapped ring distance."""
    x = ring_positions(p)
    L = p.domain.L
    diff = np.abs(x[:, None] - x[None, :])
    dist = np.minimum(diff, 2 * L - diff)
    return kernel_w(dist, p)


def propagate(v, s, drive, beta, dt):
    """Closed-form update over an event-free interval of length dt.

    Exact for every beta, including beta = 1 (the removable singularity of
    the two-exponential term is evaluated stably).
    """
    ev = np.exp(-dt)
    es = np.exp(-beta * dt)
    mix = exp_diff(beta, 1.0, dt)  # (e^{-beta dt} - e^{-dt})/(1 - beta)
    return drive + (v - drive) * ev + s * mix, s * es


def _crossing_candidates(v, s, drive, beta, horizon):
    """Earliest upcrossing time of v = 1 per neuron within (0, horizon].

    Returns an array of times (inf where no crossing). The scaled slope
    g(dt) = f'(dt) e^{dt} = -(v - drive) + s*G(dt) has a monotone G, so g
    changes sign at most once and f has exactly one rising segment (if
    any). Candidates are bracketed on that segment and resolved by a fixed
    vectorized bisection, which keeps the search deterministic.
    """
    n = v.size
    times = np.full(n, np.inf)

    def f(dt, idx):
        ev = np.exp(-dt)
        mix = exp_diff(beta, 1.0, dt)
        return drive[idx] + (v[idx] - drive[idx]) * ev + s[idx] * mix

    def G(dt):
        # (1 - beta*exp((1-beta) dt))/(1 - beta), stable across beta = 1
        return 1.0 - beta * dt * exprel((1.0 - beta) * dt)

    g0 = -(v - drive) + s * G(0.0)
    gH = -(v - drive) + s * G(np.asarray(horizon))

    # critical point of f where G(dt) = (v - drive)/s
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        gamma = (v - drive) / s
        if abs(1.0 - beta) < 1e-9:
            tstar = (1.0 - gamma) / beta
        else:
            arg = 1.0 + (1.0 - gamma) * (1.0 - beta) / beta
            tstar = np.where(arg > 0, np.log(np.maximum(arg, 1e-300)) / (1.0 - beta), np.nan)
    has_crit = np.isfinite(tstar) & (tstar > 0) & (tstar < horizon) & \
        (np.signbit(g0) != np.signbit(gH))

    # the single rising segment [a, b] per neuron
    a = np.where(has_crit & (g0 <= 0), tstar, 0.0)
    b = np.where(has_crit & (g0 > 0), tstar, horizon)
    rising = (g0 > 0) | (gH > 0)
    idx = np.nonzero(rising)[0]
    if idx.size == 0:
        return times
    fb = f(b[idx], idx)
    idx = idx[fb >= 1.0 - 1e-15]
    if idx.size == 0:
        return times
    lo, hi = a[idx].copy(), b[idx].copy()
    flo = f(lo, idx)
    if np.any(~np.isfinite(flo)):
        raise IntegrationError("non-finite voltage during crossing search")
    # f(lo) < 1 on the rising segment start (v < 1 between events)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        fm = f(mid, idx)
        below = fm < 1.0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo < _EVENT_TOL * 0.5):
            break
    times[idx] = 0.5 * (lo + hi)
    return times


def _drive_at(p: ModelParams, x: np.ndarray, t: float) -> np.ndarray:
    stim = p.stimulus
    base = np.full(x.shape, p.I)
    if stim.d1 != 0.0 and t < stim.tau_ext:
        base = base + stim.d1 / np.cosh(stim.d2 * x)
    return base


def step_to_next_event(state: NetworkState, p: ModelParams, t_max: float):
    """Advance to the next firing event or to t_max, whichever is earlier.

    Returns the neuron index fired, or None when the horizon was reached.
    The stimulus switch-off time acts as an internal breakpoint.
    """
    while True:
        stim_active = p.stimulus.d1 != 0.0 and state.t < p.stimulus.tau_ext
        t_break = min(t_max, p.stimulus.tau_ext) if stim_active else t_max
        horizon = t_break - state.t
        if horizon <= 0:
            return None
        drive = _drive_at(p, state.x, state.t)
        times = _crossing_candidates(state.v, state.s, drive, p.beta, horizon)
        t_fire = times.min()
        if np.isinf(t_fire) or t_fire >= horizon:
            state.v, state.s = propagate(state.v, state.s, drive, p.beta, horizon)
            state.t = t_break
            if t_break >= t_max:
                return None
            continue  # crossed the stimulus switch; re-derive drive
        winners = np.nonzero(times <= t_fire + _TIE_WINDOW)[0]
        state.v, state.s = propagate(state.v, state.s, drive, p.beta, float(t_fire))
        state.t = state.t + float(t_fire)
        return int(winners[0])  # ties resolved in ascending neuron index


def apply_reset(state: NetworkState, neuron: int, p: ModelParams):
    """Reset the firing neuron and kick all synaptic inputs."""
    n = p.domain.n
    state.v[neuron] = 0.0
    state.s += (2.0 * p.domain.L * p.beta / n) * state.W[:, neuron]


def seed_state_from_wave(wave: CoarseWave, p: ModelParams,
                         phase: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Initial (v0, s0) sampled from the reflected wave profile.

    The network's synaptic input obeys dv/dt = drive - v + s, while the
    comoving balance reads c*nu' = I - nu + c*sigma, so the seeded synaptic
    variable is c*sigma(-x). The mirrored wave then travels in the +x
    direction at speed c. ``phase`` places the wave's leading crossing a
    fraction of a grid cell off the nodes; the midpoint default avoids the
    degenerate on-node alignment where a sample sits exactly at threshold.
    """
    x = ring_positions(p)
    if wave.c * wave.T[-1] > p.domain.L / 2:
        warnings.warn("wave support is comparable to the ring size; "
                      "seeding will wrap", stacklevel=2)
    x0 = phase * 2.0 * p.domain.L / p.domain.n
    v0 = np.asarray(profile_nu(-(x - x0), wave, p))
    s0 = wave.c * np.asarray(profile_sigma(-(x - x0), wave, p))
    # a sample can still land on a threshold crossing (left limit 1);
    # nudge below so the event loop fires it immediately instead
    v0 = np.minimum(v0, 1.0 - 1e-9)
    return v0, s0


def simulate(init, p: ModelParams, horizon: float, sampling_dt: float | None = None,
             max_events: int | None = None) -> NetworkTrajectory:
    """Run the event loop from t = 0 to the horizon.

    ``init`` is either a dict with arrays ``v0`` and ``s0`` or an object
    with a ``wave`` attribute (a solved wave record), in which case the
    profile seeds the network. Snapshots are taken every ``sampling_dt``.
    """
    n = p.domain.n
    x = ring_positions(p)
    if isinstance(init, dict):
        v0 = np.asarray(init["v0"], dtype=float).copy()
        s0 = np.asarray(init["s0"], dtype=float).copy()
    else:
        wave = init.wave if hasattr(init, "wave") else init
        v0, s0 = seed_state_from_wave(wave, p)
        v0, s0 = v0.copy(), s0.copy()
    if v0.shape != (n,) or s0.shape != (n,):
        raise ValueError(f"initial arrays must have shape ({n},)")
    if np.any(v0 >= 1.0):
        raise ValueError("initial voltages must be below threshold")

    state = NetworkState(t=0.0, v=v0, s=s0, W=ring_connectivity(p), x=x)
    traj = NetworkTrajectory(positions=x, L=p.domain.L)
    ordinals = np.zeros(n, dtype=int)

    sample_times = []
    v_samples = []
    s_samples = []
    next_sample = 0.0 if sampling_dt else None

    def record_through(t_target):
        nonlocal next_sample
        if sampling_dt is None:
            return
        while next_sample is not None and next_sample <= t_target + 1e-15:
            dt = next_sample - state.t
            drive = _drive_at(p, state.x, state.t)
            vs, ss = propagate(state.v, state.s, drive, p.beta, max(dt, 0.0))
            sample_times.append(next_sample)
            v_samples.append(vs)
            s_samples.append(ss)
            next_sample += sampling_dt
            if next_sample > horizon + 1e-15:
                next_sample = None

    while state.t < horizon:
        before = NetworkState(state.t, state.v.copy(), state.s.copy(), state.W, state.x)
        fired = step_to_next_event(state, p, horizon)
        if sampling_dt is not None and state.t > before.t:
            # samples inside the elapsed interval use the pre-event fields
            saved = state
            state = before
            record_through(saved.t - 1e-15 if fired is not None else saved.t)
            state = saved
        if fired is None:
            break
        ordinals[fired] += 1
        traj.events.append(FiringEvent(neuron=fired, time=state.t, ordinal=int(ordinals[fired])))
        apply_reset(state, fired, p)
        # cascaded same-time firings (defensive; generic crossings are single)
        while np.any(state.v >= 1.0):
            k = int(np.nonzero(state.v >= 1.0)[0][0])
            ordinals[k] += 1
            traj.events.append(FiringEvent(neuron=k, time=state.t, ordinal=int(ordinals[k])))
            apply_reset(state, k, p)
        if max_events is not None and len(traj.events) >= max_events:
            break

    record_through(horizon)
    if sampling_dt is not None:
        traj.sample_times = np.asarray(sample_times)
        traj.v_samples = np.asarray(v_samples)
        traj.s_samples = np.asarray(s_samples)
    return traj


def _level_crossings(x, s, level, L):
    """All ring positions where the interpolated profile crosses level."""
    s_next = np.roll(s, -1)
    x_next = np.roll(x, -1)
    x_next[-1] = x[-1] + (x[1] - x[0])  # unwrap the seam
    mask = ((s - level) * (s_next - level) < 0) | (s == level)
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        raise LevelNotCrossed("synaptic profile does not cross the level")
    out = []
    for k in idx:
        if s[k] == level:
            xc = x[k]
        else:
            frac = (level - s[k]) / (s_next[k] - s[k])
            xc = x[k] + frac * (x_next[k] - x[k])
        out.append(((xc + L) % (2 * L)) - L)
    return np.asarray(out)


def _rightmost_crossing(x, s, level, L):
    return float(np.max(_level_crossings(x, s, level, L)))


def track_levelset(traj: NetworkTrajectory, level: float = 0.1,
                   t_window: tuple[float, float] | None = None):
    """Level-set track z(t) of the synaptic profile and its speed statistics.

    The track starts at the rightmost crossing of s = level and then
    follows the same front by picking, at each later sample, the crossing
    nearest (in wrapped ring distance) to the previous one; this keeps the
    track continuous when the front transits the ring seam. Instantaneous
    speeds are forward differences, summarized by their mean, standard
    deviation and extrema. Samples with no crossing are skipped (their
    count is returned).
    """
    if traj.s_samples is None or traj.sample_times is None:
        raise ValueError("trajectory carries no snapshots; simulate with sampling_dt")
    x, L = traj.positions, traj.L
    ts, zs, skipped = [], [], 0
    prev = None
    for t, s in zip(traj.sample_times, traj.s_samples):
        if t_window is not None and not (t_window[0] <= t <= t_window[1]):
            continue
        try:
            xc = _level_crossings(x, s, level, L)
        except LevelNotCrossed:
            skipped += 1
            continue
        if prev is None:
            z0 = float(np.max(xc))
        else:
            d = (xc - prev + L) % (2 * L) - L
            z0 = float(xc[int(np.argmin(np.abs(d)))])
        prev = z0
        zs.append(z0)
        ts.append(t)
    if len(zs) < 3:
        raise LevelNotCrossed("fewer than 3 usable level-set samples")
    ts = np.asarray(ts)
    zraw = np.asarray(zs)
    z = zraw.copy()
    for k in range(1, z.size):
        d = zraw[k] - zraw[k - 1]
        d = (d + L) % (2 * L) - L
        z[k] = z[k - 1] + d
    c_k = np.diff(z) / np.diff(ts)
    stats = SpeedStats(
        c_bar=float(np.mean(c_k)),
        sigma_c=float(np.std(c_k, ddof=1)) if c_k.size > 1 else 0.0,
        c_min=float(np.min(c_k)),
        c_max=float(np.max(c_k)),
        samples=c_k,
    )
    traj.levelset = z
    traj.speed_stats = stats
    return z, stats, skipped


def count_fronts(traj: NetworkTrajectory, t_window: tuple[float, float],
                 gap_threshold: float = 2.5) -> int:
    """Number of firing fronts of a travelling structure in a time window.

    A passing m-front wave makes each neuron fire m times in a tight burst
    once per lap, so per-neuron spike trains split into bursts at gaps
    larger than the threshold; the modal size of interior bursts is the
    front count. Returns 0 when no neuron carries a complete burst.
    """
    ev = traj.events_array()
    if ev.shape[0] == 0:
        return 0
    sel = ev[(ev[:, 0] >= t_window[0]) & (ev[:, 0] <= t_window[1])]
    by_neuron = {}
    for t, i, _ in sel:
        by_neuron.setdefault(int(i), []).append(t)
    sizes = []
    for ts in by_neuron.values():
        ts = np.sort(np.asarray(ts))
        cuts = np.nonzero(np.diff(ts) > gap_threshold)[0]
        bursts = np.split(ts, cuts + 1)
        # only bursts clear of the window edges are guaranteed complete
        for b in bursts:
            if b[0] > t_window[0] + gap_threshold and b[-1] < t_window[1] - gap_threshold:
                sizes.append(len(b))
    if not sizes:
        return 0
    vals, counts = np.unique(sizes, return_counts=True)
    return int(vals[np.argmax(counts)])


def fit_saltatory_amplitude(stats_by_n: dict[int, SpeedStats], tail_fraction: float = 0.5):
    """Log-log slope of the comoving speed-oscillation amplitude versus n.

    ``stats_by_n`` maps network size to speed statistics from a stationary
    window. Returns (slope, amplitudes). Raises InsufficientEvents for
    fewer than 3 sizes; zero-variance inputs are rejected.
    """
    if len(stats_by_n) < 3:
        raise InsufficientEvents("need at least 3 network sizes for a scaling fit")
    ns, amps = [], []
    for n, st in sorted(stats_by_n.items()):
        ck = st.samples
        cut = int((1.0 - tail_fraction) * ck.size)
        head, tail = ck[:cut], ck[cut:]
        amp = float(np.max(tail) - np.min(tail))
        if amp <= 0:
            raise InsufficientEvents("zero-variance speed series; nothing to fit")
        head_amp = float(np.max(head) - np.min(head)) if head.size > 1 else amp
        if head_amp > 5.0 * amp or (amp > 5.0 * head_amp and head.size > 1):
            raise InsufficientEvents(
                f"speed series at n={n} is non-stationary; fit unreliable")
        ns.append(n)
        amps.append(amp)
    slope = float(np.polyfit(np.log(ns), np.log(amps), 1)[0])
    return slope, dict(zip(ns, amps))
