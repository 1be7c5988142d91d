"""Branches in the synaptic rate; grazing and oscillatory bifurcations."""

import numpy as np
import pytest

from ifwaves.continuation import (ContinuationOptions, continue_branch,
                                  continue_event_in_parameter,
                                  grazing_scaling_study, solve_grazing, solve_hopf)
from ifwaves.errors import TangencyOrderViolation, ZeroFrequencyCollapse
from ifwaves.model import CoarseWave, ModelParams
from ifwaves.profiles import profile_nu, profile_nu_prime
from ifwaves.stability import RootWindow

WIN = RootWindow(re_min=-1.5, re_max=0.8, im_max=40.0)


@pytest.fixture(scope="module")
def tw3_down_branch(family_beta10):
    p = ModelParams(beta=10.0)
    return continue_branch(family_beta10[3], p, ContinuationOptions(
        direction=-1, step=0.25, max_points=150, beta_min=0.5, beta_max=25.0,
        stability_every=None))


@pytest.fixture(scope="module")
def tw3_grazing(tw3_down_branch):
    ev = [e for e in tw3_down_branch.events if e.kind == "grazing"][0]
    return solve_grazing(ev.wave, ev.data["T_G"], ev.beta, ModelParams()), ev


def test_tw3_branch_terminates_at_grazing(tw3_down_branch):
    assert tw3_down_branch.termination == "grazing"
    ev = [e for e in tw3_down_branch.events if e.kind == "grazing"]
    assert len(ev) == 1
    assert 2.17 < ev[0].beta < 10.0


def test_grazing_polish_consistency(tw3_grazing):
    gp, ev = tw3_grazing
    assert gp.residual <= 1e-10
    assert abs(gp.beta - ev.beta) <= 1e-6  # branch bisection vs extended solve
    p = ModelParams(beta=gp.beta)
    # tangency: value 1, slope 0, beyond the last crossing
    assert gp.T_G > gp.wave.T[-1]
    assert profile_nu(gp.wave.c * gp.T_G, gp.wave, p) == pytest.approx(1.0, abs=1e-9)
    assert profile_nu_prime(gp.wave.c * gp.T_G, gp.wave, p) == pytest.approx(0.0, abs=1e-8)
    # m crossings plus a tangency: the profile touches threshold from below
    xs = np.linspace(gp.wave.c * gp.wave.T[-1] + 1e-3, gp.wave.c * gp.T_G + 2.0, 2000)
    assert profile_nu(xs, gp.wave, p).max() <= 1.0 + 1e-7


def test_grazing_guess_requires_order():
    w = CoarseWave.from_offsets(0.3, [0.0, 0.7])
    with pytest.raises(TangencyOrderViolation):
        solve_grazing(w, 0.5, 4.0, ModelParams())


def test_tw3_upward_hopf_cascade(family_beta10):
    p = ModelParams(beta=10.0)
    br = continue_branch(family_beta10[3], p, ContinuationOptions(
        direction=1, step=0.25, step_max=0.5, max_points=60, beta_min=0.5,
        beta_max=19.5, stability_every=1, stability_grid=(41, 161),
        stability_window=WIN))
    hops = [e for e in br.events if e.kind == "hopf"]
    assert len(hops) >= 2
    assert 10.0 < hops[0].beta < 16.0
    hp = solve_hopf(hops[0].wave, hops[0].beta, hops[0].data["omega"], p)
    assert hp.residual <= 1e-9
    # branch bisection and the extended solve agree in beta
    assert abs(hp.beta - hops[0].beta) <= 2e-6
    assert hp.omega > 0


def test_event_order_on_tw3_branch(tw3_grazing, family_beta10):
    gp, _ = tw3_grazing
    p = ModelParams(beta=10.0)
    br = continue_branch(family_beta10[3], p, ContinuationOptions(
        direction=1, step=0.25, max_points=40, beta_min=0.5, beta_max=17.0,
        stability_every=1, stability_grid=(41, 161), stability_window=WIN))
    hops = sorted(e.beta for e in br.events if e.kind == "hopf")
    assert hops and gp.beta < hops[0]


def test_tw1_branch_folds_without_grazing(family_beta45):
    p = ModelParams(beta=4.5)
    br = continue_branch(family_beta45[1], p, ContinuationOptions(
        direction=-1, step=0.2, max_points=120, beta_min=0.2, beta_max=25.0,
        stability_every=None))
    kinds = [e.kind for e in br.events]
    assert kinds.count("fold") == 1
    assert "grazing" not in kinds
    assert br.termination in ("beta_bound", "max_points")


def test_hopf_requires_positive_frequency(family_beta10):
    with pytest.raises(ZeroFrequencyCollapse):
        solve_hopf(family_beta10[3].wave, 10.0, 0.0, ModelParams(beta=10.0))


def test_bootstrap_chain_and_widths(family_beta45):
    p = ModelParams(beta=4.5)
    br = continue_branch(family_beta45[2], p, ContinuationOptions(
        direction=-1, step=0.25, max_points=100, beta_min=0.3, stability_every=None))
    ev = [e for e in br.events if e.kind == "grazing"][0]
    gp2 = solve_grazing(ev.wave, ev.data["T_G"], ev.beta, p)
    rows, gp_last, gain, err = grazing_scaling_study(p, 8, gp2)
    assert err is None
    arr = np.asarray(rows)
    assert arr[-1, 0] == 8
    assert np.all(np.diff(arr[:, 2]) < 0)  # c decreasing in m
    assert np.all(np.diff(arr[:, 3]) > 0)  # T_m increasing
    # bootstrap seed recipe: midpoint insertion converged at every step
    assert gp_last.wave.m == 8


def test_two_parameter_hopf_locus(family_beta10):
    p = ModelParams(beta=10.0)
    br = continue_branch(family_beta10[3], p, ContinuationOptions(
        direction=1, step=0.3, max_points=40, beta_min=0.5, beta_max=16.5,
        stability_every=1, stability_grid=(41, 161), stability_window=WIN))
    hops = [e for e in br.events if e.kind == "hopf"]
    hp = solve_hopf(hops[0].wave, hops[0].beta, hops[0].data["omega"], p)
    drive_values = p.I + np.linspace(0.001, 0.01, 10)
    locus = continue_event_in_parameter("hopf", hp, p, "I", drive_values)
    assert len(locus) == 11
    betas = np.array([pt.beta for pt in locus])
    assert np.all(np.isfinite(betas))
    # smooth: increments do not oscillate wildly
    inc = np.diff(betas)
    assert np.all(np.abs(inc) < 0.5)
