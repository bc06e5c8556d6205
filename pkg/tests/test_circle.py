import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teichlab import circle
from teichlab.circle import (CircleMapLift, UnsupportedOperation, ValidationError, holder_seminorm,
                             liouville_norm, qs_quotient, symmetry_modulus, symmetry_profile)

X = np.arange(1024) / 1024


def test_identity_and_rotation_quotients():
    for g in (circle.identity(), circle.rotation(0.37)):
        for t in (0.5, 0.1, 1e-3):
            assert np.all(qs_quotient(g, X, t) == pytest.approx(1.0, abs=1e-12))
        assert symmetry_modulus(g, 0.2) < 1e-12


@settings(max_examples=25)
@given(a=st.floats(-5, 5), t=st.floats(1e-4, 0.5))
def test_rotations_give_unit_quotient(a, t):
    m = qs_quotient(circle.rotation(a), X, t)
    assert np.max(np.abs(m - 1)) < 1e-9


def test_sine_quotient_against_refined_grid():
    g = circle.sine_family(0.1)
    t = 0.05
    coarse = np.max(qs_quotient(g, np.arange(4096) / 4096, t))
    fine = np.max(qs_quotient(g, np.arange(2 ** 16) / 2 ** 16, t))
    assert coarse == pytest.approx(fine, abs=1e-6)


def test_mobius_boundary_is_symmetric():
    g = circle.mobius_boundary([[1, -0.4], [-0.4, 1]])
    # from t = 1/4 down (at t = 1/2 the quotient still sees the whole circle)
    prof = symmetry_profile(g, 2.0 ** -np.arange(2, 12))
    assert np.all(np.diff(prof) < 0)
    assert prof[-1] < 1e-2 * prof[0]


def test_corner_is_not_symmetric():
    g = circle.piecewise_linear(0.5, 0.5)
    prof = symmetry_profile(g, 2.0 ** -np.arange(3, 12), x_grid=np.arange(2 ** 14) / 2 ** 14)
    # slopes 1/2 and 3/2 meet at x = 1/2: m(1/2, t) = 3 for every small t
    assert np.all(prof == pytest.approx(2.0, abs=1e-9))


def test_validation_errors():
    with pytest.raises(ValidationError):
        CircleMapLift(lambda x: x - 0.3 * np.sin(2 * np.pi * x) * 2, name="folded")
    with pytest.raises(ValidationError):
        CircleMapLift(lambda x: 1.5 * x, name="not periodic")
    with pytest.raises(ValueError):
        qs_quotient(circle.identity(), X, 0.0)


def test_inverse_roundtrip_gives_identity_quotient():
    g = circle.sine_family(0.3, 2)
    gi = g.inverse_lift()
    h = g.compose(gi)
    assert np.max(np.abs(h(X) - X)) < 1e-11
    m = qs_quotient(h, X, 0.01)
    assert np.max(np.abs(m - 1)) < 1e-8
    # the spacings a, b induced by g pull back under g^-1 to the symmetric pair (t, t)
    x, t = X[::17], 1e-3
    gx = g(x)
    a, b = g(x + t) - gx, gx - g(x - t)
    assert np.allclose(gi(gx + a) - x, t, atol=1e-10)
    assert np.allclose(x - gi(gx - b), t, atol=1e-10)
    assert np.allclose(a / b, qs_quotient(g, x, t), rtol=1e-12)


def test_holder_identity_and_missing_derivative():
    assert holder_seminorm(circle.identity(), 0.5) == 0
    with pytest.raises(UnsupportedOperation):
        holder_seminorm(CircleMapLift(lambda x: x + 0.0, name="bare"), 0.5)
    with pytest.raises(UnsupportedOperation):
        holder_seminorm(None, 0.5)


def test_holder_cosine_against_refined_grid():
    d = lambda n: 1 + 0.2 * np.cos(2 * np.pi * np.arange(n) / n)
    assert holder_seminorm(d(4096), 0.5) == pytest.approx(holder_seminorm(d(16384), 0.5), rel=0.02)


def test_holder_detects_rougher_derivative():
    d = lambda n: 1 + 0.2 * np.abs(np.sin(np.pi * np.arange(n) / n)) ** 0.3
    vals = [holder_seminorm(d(n), 0.5) for n in (512, 2048, 8192)]
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] / vals[1] > 1.3  # grows like n^0.2


@pytest.mark.parametrize("s", [0.5, 2.0])
def test_holder_homogeneous(s):
    base = 1 + 0.1 * np.cos(2 * np.pi * np.arange(1024) / 1024) + 0.05 * np.sin(6 * np.pi * np.arange(1024) / 1024)
    scaled = 1 + s * (base - 1)
    assert holder_seminorm(scaled, 0.4) == pytest.approx(s * holder_seminorm(base, 0.4), rel=1e-12)


def test_liouville_trivial_cases():
    for g in (circle.identity(), circle.rotation(0.3)):
        r = liouville_norm(g, n=512)
        assert r.value < 1e-8 and r.band < 1e-8
    with pytest.raises(UnsupportedOperation):
        liouville_norm(CircleMapLift(lambda x: x + 0.0, name="bare"))


def test_liouville_smooth_perturbation_stable():
    g = circle.sine_family(0.05)
    vals = [liouville_norm(g, n).value for n in (1024, 2048, 4096)]
    assert vals[0] > 0
    assert abs(vals[-1] - vals[-2]) < 0.05 * vals[-1]
    assert abs(vals[-1] - vals[0]) < 0.05 * vals[-1]


def test_liouville_mobius_vanishes():
    g = circle.mobius_boundary([[1, -0.3j], [0.3j, 1]])
    assert liouville_norm(g, 1024).value < 1e-6


def test_tables_and_builtins(tmp_path):
    g = circle.builtin("sine", amp=0.2, freq=3)
    circle.write_csv(tmp_path / "g.csv", g, n=512)
    h = circle.read_csv(tmp_path / "g.csv")
    x = np.linspace(0, 3, 301)
    assert np.max(np.abs(h(x) - g(x))) < 1e-5
    assert np.max(np.abs(h.derivative(x) - g.derivative(x))) < 1e-4
    with pytest.raises(KeyError):
        circle.builtin("nope")
    with pytest.raises(ValidationError):
        circle.from_samples([0, 0.5], [0.2, 0.1])
