"""Event-driven network simulation: propagation, events, diagnostics."""

import numpy as np
import pytest

from ifwaves.errors import InsufficientEvents, LevelNotCrossed
from ifwaves.model import Domain, ModelParams, Stimulus
from ifwaves.oracles import rk_reference
from ifwaves.simulate import (NetworkTrajectory, SpeedStats, apply_reset,
                              count_fronts, fit_saltatory_amplitude, propagate,
                              ring_connectivity, ring_positions,
                              seed_state_from_wave, simulate, step_to_next_event,
                              track_levelset, NetworkState)


@pytest.mark.parametrize("beta", [0.5, 1.0, 1.0 + 1e-7, 4.5])
def test_propagator_matches_runge_kutta(beta):
    p = ModelParams(beta=beta)
    rng = np.random.default_rng(3)
    v0 = rng.uniform(0, 0.9, 5)
    s0 = rng.uniform(-1, 2, 5)
    drive = rng.uniform(0.5, 1.2, 5)
    sol = rk_reference(v0, s0, drive, p, (0.0, 1.0),
                       t_eval=np.linspace(0.1, 1.0, 7))
    for k, t in enumerate(sol.t):
        v, s = propagate(v0, s0, drive, beta, t)
        assert np.max(np.abs(sol.y[:5, k] - v)) <= 1e-9
        assert np.max(np.abs(sol.y[5:, k] - s)) <= 1e-9


def test_propagator_linear_superposition():
    p = ModelParams(beta=4.5)
    drive = np.array([0.9])
    v1, _ = propagate(np.array([0.9 + 0.2]), np.array([0.0]), drive, p.beta, 0.7)
    v2, _ = propagate(np.array([0.9 + 0.4]), np.array([0.0]), drive, p.beta, 0.7)
    assert (v2[0] - 0.9) == pytest.approx(2 * (v1[0] - 0.9), abs=1e-13)


def test_homogeneous_state_never_fires():
    p = ModelParams(beta=4.5, domain=Domain(L=1.0, n=40))
    traj = simulate({"v0": np.full(40, 0.9), "s0": np.zeros(40)}, p, horizon=10.0)
    assert len(traj.events) == 0


def test_homogeneous_perturbation_decays_at_unit_rate():
    p = ModelParams(beta=4.5, domain=Domain(L=1.0, n=16))
    v0 = np.full(16, p.I - 0.05)
    traj = simulate({"v0": v0, "s0": np.zeros(16)}, p, horizon=3.0, sampling_dt=0.5)
    devs = np.abs(traj.v_samples - p.I).max(axis=1)
    rate = -np.polyfit(traj.sample_times, np.log(devs), 1)[0]
    assert rate == pytest.approx(1.0, abs=1e-6)


def test_event_legality_and_reset_law():
    p = ModelParams(beta=4.5, domain=Domain(L=1.0, n=8))
    rng = np.random.default_rng(0)
    v0 = rng.uniform(0.2, 0.8, 8)
    s0 = np.zeros(8)
    s0[3] = 6.0
    state = NetworkState(t=0.0, v=v0.copy(), s=s0.copy(), W=ring_connectivity(p),
                         x=ring_positions(p))
    fired = step_to_next_event(state, p, t_max=5.0)
    assert fired == 3
    # interpolated v at the event time equals threshold
    v_at, _ = propagate(v0, s0, np.full(8, p.I), p.beta, state.t)
    assert v_at[3] == pytest.approx(1.0, abs=1e-10)
    s_before = state.s.copy()
    apply_reset(state, fired, p)
    assert state.v[3] == 0.0
    kick = state.s - s_before
    expected = (2 * p.domain.L * p.beta / p.domain.n) * state.W[:, 3]
    assert np.allclose(kick, expected, atol=0, rtol=0)
    assert np.sum(kick) == pytest.approx(
        (2 * p.domain.L * p.beta / p.domain.n) * state.W[:, 3].sum())


def test_near_simultaneous_ties_processed_in_index_order():
    # two symmetric neurons cross within the tie window; both fire at the
    # same time, ascending index first
    p = ModelParams(beta=4.5, domain=Domain(L=1.0, n=4))
    v0 = np.array([0.95, 0.2, 0.95, 0.2])
    s0 = np.array([2.0, 0.0, 2.0, 0.0])
    traj = simulate({"v0": v0, "s0": s0}, p, horizon=2.0, max_events=4)
    assert len(traj.events) >= 2
    t0, t1 = traj.events[0], traj.events[1]
    assert t0.neuron == 0 and t1.neuron == 2
    assert abs(t0.time - t1.time) <= 1e-10


def test_determinism_bit_identical():
    p = ModelParams(beta=4.5, stimulus=Stimulus(d1=2.0, d2=10.0, tau_ext=2.0),
                    domain=Domain(L=1.0, n=60))
    runs = []
    for _ in range(2):
        traj = simulate({"v0": np.full(60, 0.5), "s0": np.zeros(60)}, p,
                        horizon=8.0, sampling_dt=0.5)
        runs.append(traj)
    a, b = runs
    assert np.array_equal(a.events_array(), b.events_array())
    assert np.array_equal(a.v_samples, b.v_samples)
    assert np.array_equal(a.s_samples, b.s_samples)


def test_all_voltages_subthreshold_after_each_event():
    p = ModelParams(beta=1.0, stimulus=Stimulus(d1=2.0, d2=10.0, tau_ext=2.0),
                    domain=Domain(L=1.0, n=40))
    traj = simulate({"v0": np.full(40, 0.5), "s0": np.zeros(40)}, p, horizon=6.0,
                    sampling_dt=0.25)
    assert np.all(traj.v_samples < 1.0 + 1e-12)


def test_wave_seeding_and_propagation(family_beta45):
    rec = family_beta45[2]
    p = ModelParams(beta=4.5, domain=Domain(L=3.0, n=400))
    v0, s0 = seed_state_from_wave(rec.wave, p)
    assert np.all(v0 < 1.0)
    traj = simulate(rec, p, horizon=15.0, sampling_dt=0.1)
    z, st, skipped = track_levelset(traj, 0.1, t_window=(5.0, 15.0))
    # reflected seeding propagates at +c within a discretization error
    assert st.c_bar == pytest.approx(rec.wave.c, abs=0.01)
    assert st.c_min <= st.c_bar <= st.c_max
    assert count_fronts(traj, (5.0, 15.0)) == 2


def test_seeding_warns_when_support_wraps(family_beta45):
    p = ModelParams(beta=4.5, domain=Domain(L=0.3, n=60))
    with pytest.warns(UserWarning):
        seed_state_from_wave(family_beta45[2].wave, p)


def test_track_levelset_requires_snapshots_and_crossings():
    traj = NetworkTrajectory(positions=np.linspace(-1, 1, 10), L=1.0)
    with pytest.raises(ValueError):
        track_levelset(traj)
    traj.sample_times = np.array([0.0, 0.5, 1.0])
    traj.s_samples = np.zeros((3, 10))
    with pytest.raises(LevelNotCrossed):
        track_levelset(traj, 0.1)


def test_track_levelset_synthetic_constant_speed():
    n, L = 200, 2.0
    x = -L + 2 * L * np.arange(1, n + 1) / n
    times = np.arange(0.0, 8.0, 0.1)
    s = np.array([1.0 / np.cosh(5.0 * (((x - 0.45 * t + L) % (2 * L)) - L))
                  for t in times])
    traj = NetworkTrajectory(positions=x, L=L)
    traj.sample_times = times
    traj.s_samples = s
    z, st, skipped = track_levelset(traj, 0.1)
    assert skipped == 0
    assert st.c_bar == pytest.approx(0.45, abs=5e-3)
    assert st.sigma_c < 0.2


def test_fit_saltatory_amplitude_controls():
    rng = np.random.default_rng(8)
    stats = {}
    for n in [250, 500, 1000]:
        ck = 0.3 + (1.0 / n) * np.sin(np.linspace(0, 40, 400)) \
            + (0.05 / n) * rng.normal(size=400)
        stats[n] = SpeedStats(c_bar=0.3, sigma_c=float(np.std(ck)),
                              c_min=float(ck.min()), c_max=float(ck.max()),
                              samples=ck)
    slope, amps = fit_saltatory_amplitude(stats)
    assert slope == pytest.approx(-1.0, abs=0.1)
    with pytest.raises(InsufficientEvents):
        fit_saltatory_amplitude({250: stats[250]})
    # constant speed series: zero variance is rejected
    flat = SpeedStats(0.3, 0.0, 0.3, 0.3, np.full(50, 0.3))
    with pytest.raises(InsufficientEvents):
        fit_saltatory_amplitude({250: flat, 500: flat, 1000: flat})
    # non-stationary series (an unstable wave's growing oscillation) flagged
    grow = 0.3 + np.concatenate([1e-4 * np.sin(np.arange(200)),
                                 0.5 * np.sin(np.arange(200))])
    unstable = SpeedStats(0.3, float(np.std(grow)), float(grow.min()),
                          float(grow.max()), grow)
    with pytest.raises(InsufficientEvents):
        fit_saltatory_amplitude({250: stats[250], 500: stats[500], 1000: unstable})


def test_count_fronts_synthetic():
    traj = NetworkTrajectory(positions=np.linspace(-1, 1, 10), L=1.0)
    from ifwaves.simulate import FiringEvent
    # three-spike bursts every 12 units on two neurons
    for i in (2, 7):
        for lap in range(3):
            base = 5.0 + 12.0 * lap + 0.1 * i
            for k in range(3):
                traj.events.append(FiringEvent(neuron=i, time=base + 0.6 * k,
                                               ordinal=3 * lap + k + 1))
    assert count_fronts(traj, (0.0, 41.0)) == 3
    assert count_fronts(traj, (0.0, 1.0)) == 0
