import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teichlab.fields import HolomorphicField, sup_norm_weighted
from teichlab.moebius import (DomainError, MobiusMap, classify, density, disk_automorphism,
                              halfplane_inverse, halfplane_transfer, hyperbolic, pullback, rotation)

unit = st.floats(0, 2 * np.pi)
inner = st.floats(0, 0.8)


def quartic(z):
    return np.asarray(z, complex) ** -4.0


def test_identity_classifies_as_identity():
    assert classify(MobiusMap.identity()).kind == "identity"


def test_halfplane_dilation_is_hyperbolic():
    m = MobiusMap.from_matrix([[0.5, 0], [0, 2]], "halfplane")
    c = classify(m)
    assert c.kind == "hyperbolic"
    assert c.multiplier == pytest.approx(0.25, abs=1e-14)
    fps = set(np.round(c.fixed_points, 12).tolist())
    assert fps == {0j, complex(np.inf)}


def test_rotation_is_elliptic():
    c = classify(rotation(np.pi / 3))
    assert c.kind == "elliptic"
    assert 0j in [complex(p) for p in c.fixed_points]


def test_multiplier_relation_with_trace():
    c = classify(hyperbolic(0.3))
    lam = c.multiplier
    assert lam + 1 / lam + 2 == pytest.approx(c.trace.real ** 2, rel=1e-12)


@pytest.mark.parametrize("lam", [0.25, 0.6, 0.01])
def test_normalizer_gives_normal_form(lam):
    g = hyperbolic(lam, p=np.exp(0.4j), q=np.exp(2.5j))
    c = classify(g)
    h = c.normalizer
    zeta = np.array([1j, 2 + 0.5j, -3 + 4j])
    assert np.max(np.abs(h(g(h.inverse()(zeta))) - lam * zeta)) < 1e-10
    assert abs(h(np.exp(0.4j))) < 1e-12


def test_classify_normal_form_idempotent():
    c = classify(hyperbolic(0.37))
    nf = MobiusMap.from_matrix((c.normalizer @ hyperbolic(0.37) @ c.normalizer.inverse()).matrix, "halfplane")
    assert classify(nf).multiplier == pytest.approx(c.multiplier, abs=1e-12)


@pytest.mark.parametrize("domain,z,val", [("disk", 0, 2.0), ("exterior", 2, 2 / 3), ("halfplane", 1j, 1.0)])
def test_density_values(domain, z, val):
    assert density(domain, z) == pytest.approx(val, abs=1e-15)


@pytest.mark.parametrize("domain,z", [("disk", 1.0), ("exterior", 0.5), ("halfplane", 1.0)])
def test_density_rejects_outside(domain, z):
    with pytest.raises(DomainError):
        density(domain, z)


@given(a_r=inner, a_t=unit, th=unit)
def test_disk_maps_preserve_circle(a_r, a_t, th):
    m = disk_automorphism(a_r * np.exp(1j * a_t), th)
    s = np.exp(2j * np.pi * (np.arange(16) + 0.5) / 16)
    assert np.max(np.abs(np.abs(m(s)) - 1)) < 1e-12
    assert m.preserves("disk")


@given(a=inner, b=inner, t=unit)
def test_composition_is_matrix_product(a, b, t):
    m1, m2 = disk_automorphism(a * np.exp(1j * t)), disk_automorphism(b, t)
    z = np.array([0.1 + 0.2j, -0.5j, 0.7])
    assert np.allclose((m1 @ m2)(z), m1(m2(z)), atol=1e-12)
    det = np.linalg.det((m1 @ m2).matrix)
    assert abs(det - 1) < 1e-12


@settings(max_examples=30)
@given(a=inner, b=inner, t1=unit, t2=unit)
def test_pullback_group_action(a, b, t1, t2):
    g1 = disk_automorphism(a * np.exp(1j * t1), t2, domain="exterior")
    g2 = disk_automorphism(b * np.exp(1j * t2), t1, domain="exterior")
    z = 1.5 * np.exp(1j * np.linspace(0, 6, 7))
    lhs = pullback(quartic, g1 @ g2, z)
    inner_pb = lambda w: pullback(quartic, g1, w)
    rhs = pullback(inner_pb, g2, z)
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1, np.max(np.abs(lhs)))


def test_pullback_identity_and_rotation(grid):
    phi = HolomorphicField.from_func(quartic, grid)
    z = grid.zext[::7, ::5]
    assert np.allclose(pullback(phi, MobiusMap.identity("exterior"), z), quartic(z))
    th = 0.7
    r = pullback(phi, rotation(th, "exterior"), z)
    assert np.allclose(r, np.exp(-2j * th) * quartic(z), atol=1e-14)
    n0 = sup_norm_weighted(phi, -2).value
    assert sup_norm_weighted(pullback(phi, rotation(th, "exterior")), -2).value == pytest.approx(n0, rel=1e-12)


def test_pullback_isometry_hyperbolic():
    # sup of rho^-2 |z^-4| is 1/4, approached at infinity; for gamma^* phi it sits at gamma^-1(inf)
    g = hyperbolic(0.25)
    w = 1e5 * np.exp(1j * np.linspace(0, 2 * np.pi, 64, endpoint=False))
    z = g.inverse()(w)
    rho2 = (2 / (np.abs(z) ** 2 - 1)) ** 2
    vals = np.abs(pullback(quartic, g, z)) / rho2
    assert abs(vals.max() - 0.25) < 1e-8
    # nowhere above the sup
    zz = (1 + np.logspace(-4, 2, 200))[:, None] * np.exp(1j * np.linspace(0, 2 * np.pi, 97))[None, :]
    assert np.max(np.abs(pullback(quartic, g, zz)) / (2 / (np.abs(zz) ** 2 - 1)) ** 2) <= 0.25 + 1e-12


def test_pullback_rejects_non_exterior_map():
    m = MobiusMap.from_matrix([[1, 0.5], [0, 1]])
    with pytest.raises(DomainError):
        pullback(quartic, m, np.array([2.0]))


def test_halfplane_transfer_weighted_identity(rng):
    h = classify(hyperbolic(0.25)).normalizer
    psi = lambda z: np.asarray(z, complex) ** -4 + 0.3 * np.asarray(z, complex) ** -5
    t = halfplane_transfer(psi, h)
    z = (1 + rng.exponential(1.0, 100)) * np.exp(2j * np.pi * rng.random(100))
    zeta = h(z)
    lhs = zeta.imag ** 2 * np.abs(t(zeta))
    rhs = ((np.abs(z) ** 2 - 1) / 2) ** 2 * np.abs(psi(z))
    assert np.max(np.abs(lhs - rhs) / rhs) < 1e-10
    back = halfplane_inverse(t, h)
    assert np.max(np.abs(back(z) - psi(z)) / np.abs(psi(z))) < 1e-10


def test_halfplane_transfer_of_zero_and_wrong_map():
    h = classify(hyperbolic(0.25)).normalizer
    t = halfplane_transfer(lambda z: 0 * np.asarray(z, complex), h)
    assert np.all(t(np.array([1j, 2 + 3j])) == 0)
    with pytest.raises(DomainError):
        halfplane_transfer(quartic, MobiusMap.identity())
