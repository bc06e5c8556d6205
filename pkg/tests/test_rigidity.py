import json

import numpy as np
import pytest

from teichlab.fields import HolomorphicField
from teichlab.moebius import classify, hyperbolic, pullback
from teichlab.rigidity import (ConjugatedPower, coboundary_residual, decay_class_check, orbit_series,
                               pullback_values, truncation_order, write_certificate)

LAM, ALPHA = 0.25, 0.5


@pytest.fixture(scope="module")
def gamma():
    return hyperbolic(LAM)


@pytest.fixture(scope="module")
def psi(grid, gamma):
    return HolomorphicField.from_func(lambda z: pullback(lambda w: w ** -4.0, gamma, z) - z ** -4.0, grid)


@pytest.fixture(scope="module")
def attracting(psi, gamma):
    return orbit_series(psi, gamma, ALPHA, "attracting_sum")


def test_truncation_order_arithmetic():
    # lam^alpha = 1/2: 2^-(N+1) / (1 - 1/2) < 1e-10 first holds at N = 34
    assert truncation_order(LAM, ALPHA, 1e-10) == 34
    q = LAM ** ALPHA
    assert q ** 35 / (1 - q) < 1e-10 <= q ** 34 / (1 - q)


def test_zero_input(grid, gamma):
    res = orbit_series(HolomorphicField.zero(grid), gamma, ALPHA)
    assert res.N == 0 and res.tail == 0
    assert np.all(res.phi.values == 0)


def test_conjugated_powers_match_iteration(gamma):
    h = classify(gamma).normalizer
    z = np.array([1.5, -2j, 3 + 1j])
    w = z.copy()
    for _ in range(5):
        w = gamma(w)
    assert np.allclose(ConjugatedPower(h, LAM, 5)(z), w, rtol=1e-12)


def test_construct_then_recover(attracting, psi, gamma, grid):
    assert attracting.N == 34
    r = coboundary_residual(attracting.phi, gamma, psi)
    assert r <= attracting.tail + 1e-8
    # recovered phi and z^-4 differ by a gamma-invariant field
    phi0 = HolomorphicField.from_func(lambda z: z ** -4.0, grid)
    diff = attracting.phi - phi0
    assert coboundary_residual(diff, gamma, HolomorphicField.zero(grid)) < 1e-8


def test_repelling_sum_and_two_sided_consistency(attracting, psi, gamma, grid):
    rep = orbit_series(psi, gamma, ALPHA, "repelling_sum")
    assert coboundary_residual(rep.phi, gamma, psi) <= rep.tail + 1e-8
    d = attracting.phi - rep.phi
    assert coboundary_residual(d, gamma, HolomorphicField.zero(grid)) < attracting.tail + rep.tail + 1e-8


def test_telescoping_partial_sums(psi, gamma):
    z = np.array([1.3, 2j, -1.5 + 0.5j, 0.2 - 1.4j])
    for N in (0, 3, 7):
        phiN = orbit_series(psi, gamma, ALPHA, N=N).phi
        lhs = pullback_values(phiN, gamma, z) - phiN.at(z)
        h = classify(gamma).normalizer
        rhs = psi.at(z) - pullback_values(psi, ConjugatedPower(h, LAM, N + 1), z)
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_orbit_terms_vanish(psi, gamma):
    h = classify(gamma).normalizer
    z = np.array([1.5 + 0.5j, -2.0, 0.3j - 1.2])
    rho2 = (2 / (np.abs(z) ** 2 - 1)) ** 2
    vals = [np.max(np.abs(pullback_values(psi, ConjugatedPower(h, LAM, n), z)) / rho2) for n in (5, 10, 20, 40)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-8


def test_perturbed_input_residual(attracting, psi, gamma, grid):
    eps = 1e-3
    bumped = psi + HolomorphicField.from_func(lambda z: eps * z ** -4.0, grid)
    r = coboundary_residual(attracting.phi, gamma, bumped)
    # grid sup of rho^-2 |eps z^-4| is eps/4 (approached at the largest |z|)
    assert r == pytest.approx(eps / 4, rel=1e-2)


def test_certificate(attracting, psi, gamma, tmp_path):
    r = coboundary_residual(attracting.phi, gamma, psi)
    write_certificate(tmp_path / "c.json", attracting, r)
    cert = json.loads((tmp_path / "c.json").read_text())
    assert cert["N"] == 34 and cert["multiplier"] == pytest.approx(LAM)
    assert cert["residual"] <= cert["tail_bound"]


def test_rejects_non_hyperbolic(psi):
    from teichlab.moebius import rotation
    with pytest.raises(ValueError):
        orbit_series(psi, rotation(0.3, "exterior"), ALPHA)


def synthetic(grid, a):
    # rho^-2 |phi| ~ (|z| - 1)^a near the grid angle theta_0
    e = np.exp(1j * grid.theta[0])
    return HolomorphicField.from_func(lambda z: z ** -4.0 * (1 - e / z) ** (a - 2.0), grid)


def test_decay_class_check(grid):
    phi = synthetic(grid, 0.6)
    ok = decay_class_check(phi, 0.6)
    assert ok.passed and ok.fitted == pytest.approx(0.6, abs=0.05)
    assert not decay_class_check(phi, 0.8).passed
    assert decay_class_check(HolomorphicField.zero(grid), 0.6).passed
