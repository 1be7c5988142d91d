"""Stability matrices, the determinant function and root finding."""

import numpy as np
import pytest

from ifwaves.model import CoarseWave, ModelParams
from ifwaves.stability import (RootWindow, build_matrices, classify, evaluate_E,
                               find_roots, linearized_apply)

WIN = RootWindow(re_min=-1.5, re_max=0.8, im_max=40.0)


def test_row_sum_construction_and_trivial_root(family_beta10):
    p = ModelParams(beta=10.0)
    for m, rec in family_beta10.items():
        mats = build_matrices(rec.wave, p)
        resid = np.abs((mats.D - mats.M_at(0.0)) @ np.ones(m)).max()
        assert resid <= 1e-12
        assert abs(evaluate_E(0.0, mats)) <= 1e-10


def test_E_scalar_for_single_spike(family_beta10):
    p = ModelParams(beta=10.0)
    rec = family_beta10[1]
    mats = build_matrices(rec.wave, p)
    from ifwaves.profiles import stability_entry_M
    z = 0.2 + 3.0j
    direct = (mats.D[0, 0] - stability_entry_M(0, 0, z, rec.wave, p)) \
        / np.exp(mats.log_scale)
    assert evaluate_E(z, mats) == pytest.approx(direct)


def test_E_conjugate_symmetry(family_beta10):
    p = ModelParams(beta=10.0)
    mats = build_matrices(family_beta10[3].wave, p)
    rng = np.random.default_rng(2)
    for _ in range(10):
        z = complex(rng.uniform(-1.2, 0.7), rng.uniform(0.1, 30.0))
        assert evaluate_E(np.conj(z), mats) == pytest.approx(
            np.conj(evaluate_E(z, mats)))


def test_tw3_stability_flip(family_beta10, tw3_beta16):
    rep10 = classify(family_beta10[3].wave, ModelParams(beta=10.0), window=WIN)
    assert rep10.classification == "stable"
    nontrivial = [r for r in rep10.roots if abs(r.lam) > 1e-6]
    assert nontrivial and all(r.lam.real < 0 for r in nontrivial)

    rep16 = classify(tw3_beta16.wave, ModelParams(beta=16.0), window=WIN)
    assert rep16.classification == "unstable"
    assert rep16.leading.lam.real > 1e-4
    assert rep16.leading.lam.imag != 0
    # leading pair is complex conjugate
    lams = [r.lam for r in rep16.roots]
    assert any(abs(ell - np.conj(rep16.leading.lam)) < 1e-8 for ell in lams)


def test_trivial_root_present_with_uniform_kernel_vector(family_beta10):
    p = ModelParams(beta=10.0)
    mats = build_matrices(family_beta10[3].wave, p)
    roots, diag = find_roots(mats, WIN, grid=(41, 161))
    z0 = min(roots, key=lambda r: abs(r.lam))
    assert abs(z0.lam) <= 1e-8
    phi = z0.phi / z0.phi[0]
    assert np.allclose(phi, np.ones(3), atol=1e-7)


def test_roots_stable_under_grid_refinement(family_beta10):
    p = ModelParams(beta=10.0)
    mats = build_matrices(family_beta10[3].wave, p)
    roots_a, _ = find_roots(mats, WIN, grid=(101, 101))
    roots_b, _ = find_roots(mats, WIN, grid=(201, 201))
    la = sorted((r.lam for r in roots_a), key=lambda z: (round(z.real, 8), z.imag))
    lb = sorted((r.lam for r in roots_b), key=lambda z: (round(z.real, 8), z.imag))
    assert len(la) == len(lb)
    for a, b in zip(la, lb):
        assert abs(a - b) <= 1e-6


def test_conjugate_pairs_and_kernel_quality(family_beta10):
    p = ModelParams(beta=10.0)
    rep = classify(family_beta10[3].wave, p, window=WIN)
    for r in rep.roots:
        assert r.residual <= 1e-9
        assert r.sigma_ratio <= 1e-8
        if r.lam.imag > 1e-6:
            assert any(abs(q.lam - np.conj(r.lam)) < 1e-9 for q in rep.roots)


def test_window_strip_violation():
    p = ModelParams()
    w = CoarseWave.from_offsets(0.3, [0.0, 0.7])
    mats = build_matrices(w, p)
    with pytest.raises(ValueError):
        evaluate_E(complex(-p.eta - 0.1, 0.0), mats)


def test_linearized_apply_identities(family_beta10):
    p = ModelParams(beta=10.0)
    rec = family_beta10[3]
    rep = classify(rec.wave, p, window=WIN)
    root = next(r for r in rep.roots if r.lam.imag > 0)
    _, worst = linearized_apply(root.phi, root.lam, rec.wave, p)
    assert worst <= 1e-8
    # constant vector: annihilated exactly (row-sum kernel)
    _, worst0 = linearized_apply(np.ones(3), 0.0, rec.wave, p)
    assert worst0 <= 1e-12
    # negative control
    rng = np.random.default_rng(3)
    _, worst_r = linearized_apply(rng.normal(size=3) + 1j * rng.normal(size=3),
                                  root.lam, rec.wave, p)
    assert worst_r > 1e-3
