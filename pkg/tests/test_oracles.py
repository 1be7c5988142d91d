"""Self-consistency of the brute-force references."""

import numpy as np
import pytest

from ifwaves.model import CoarseWave, ModelParams
from ifwaves.oracles import (QuadratureSpec, fd_linearization_check, quad_nu,
                             rk_reference, voltage_mapping_residual)


def test_quad_nu_tolerance_self_consistency():
    p = ModelParams(beta=4.5)
    w = CoarseWave.from_offsets(0.5, [0.0, 0.4, 1.1])
    loose = QuadratureSpec(abs_tol=1e-6, rel_tol=1e-6)
    tight = QuadratureSpec(abs_tol=1e-10, rel_tol=1e-10)
    for xi in [-1.0, 0.2, 0.8]:
        assert quad_nu(xi, w, p, loose) == pytest.approx(
            quad_nu(xi, w, p, tight), abs=1e-6)


def test_quad_nu_translation_covariance():
    p = ModelParams(beta=4.5)
    w = CoarseWave.from_offsets(0.5, [0.0, 0.4, 1.1])
    delta = 0.37
    shifted = CoarseWave(m=3, c=w.c, T=w.T)  # same offsets; shift xi and T jointly
    a = quad_nu(0.3 + w.c * delta,
                CoarseWave(m=3, c=w.c, T=w.T + 0.0), p)
    # tau -> tau + delta with xi -> xi + c*delta leaves the profile unchanged;
    # realize it by shifting every offset (phase condition relaxed here)
    w_shift = CoarseWave.__new__(CoarseWave)
    object.__setattr__(w_shift, "m", 3)
    object.__setattr__(w_shift, "c", w.c)
    Ts = (w.T + delta).copy()
    Ts.setflags(write=False)
    object.__setattr__(w_shift, "T", Ts)
    b = quad_nu(0.3 + w.c * delta, w_shift, p)
    a0 = quad_nu(0.3, w, p)
    assert b == pytest.approx(a0, abs=1e-9)


def test_rk_reference_rejects_failure_paths():
    p = ModelParams(beta=4.5)
    sol = rk_reference([0.5], [0.0], [0.9], p, (0.0, 2.0))
    assert sol.success


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)


def test_uniform_shift_residual_vanishes(family_beta10):
    # a homogeneous shift of the firing set maps waves to waves exactly
    p = ModelParams(beta=10.0)
    rec = family_beta10[2]
    order, residuals = fd_linearization_check(rec.wave, p, 0.0, np.ones(2),
                                              eps_list=(1e-2, 1e-3))
    assert np.all(residuals < 1e-9)
    assert order == np.inf


def test_voltage_mapping_residual_zero_on_exact_wave(family_beta10):
    p = ModelParams(beta=10.0)
    rec = family_beta10[3]
    c = rec.wave.c
    fns = [lambda y, j=j: y / c + rec.wave.T[j] for j in range(3)]
    for i in range(3):
        r = voltage_mapping_residual(0.2, i, fns, rec.wave, p)
        assert abs(r) < 1e-10
