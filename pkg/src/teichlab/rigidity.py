"""Recovering a quadratic differential from its coboundary under a hyperbolic Moebius map."""
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .fields import HolomorphicField, decay_exponent_fit, sup_norm_weighted
from .moebius import MobiusMap, classify, _field_values

DIRECTIONS = ("attracting_sum", "repelling_sum")


class DivergenceWarning(RuntimeWarning):
    pass


class ConjugatedPower:
    """gamma^n = h^-1 o (zeta -> lam^n zeta) o h.

    Matrix powers lose the determinant to cancellation after a few dozen steps; this
    form stays accurate for any n."""

    def __init__(self, h, lam, n):
        self.h, self.hinv, self.s, self.n = h, h.inverse(), lam ** n, n

    def __call__(self, z):
        return self.hinv(self.s * self.h(z))

    def deriv(self, z):
        return self.hinv.deriv(self.s * self.h(z)) * self.s * self.h.deriv(z)


def _powers(h, lam, n, start=0):
    return [ConjugatedPower(h, lam, i) for i in range(start, n + 1)]


def pullback_values(psi, g, z):
    return _field_values(psi, g(z)) * g.deriv(z) ** 2


def transfer_norm(psi, h, alpha, decades=8, nr=161, nth=64):
    """sup over the upper half-plane of (Im zeta)^(2 - alpha) |h_* psi(zeta)|.

    Log-polar sampling over |zeta| in [10^-decades, 10^decades], then local
    refinement from the best samples.  Returns (value, converged flag)."""
    hinv = h.inverse()

    def wv(zeta):
        zeta = np.asarray(zeta, complex)
        vals = _field_values(psi, hinv(zeta)) * hinv.deriv(zeta) ** 2
        return zeta.imag ** (2 - alpha) * np.abs(vals)

    def sample(dec):
        R = np.logspace(-dec, dec, nr)
        th = np.pi * (np.arange(nth) + 0.5) / nth
        Z = R[:, None] * np.exp(1j * th)[None, :]
        return Z, wv(Z)

    Z, W = sample(decades)
    W = np.where(np.isfinite(W), W, 0.0)
    best = float(W.max())
    # the sup should not sit on the outer sampling shell
    edge = max(W[0].max(), W[-1].max())
    converged = edge < 1e-3 * best if best > 0 else True
    order = np.argsort(W.ravel())[::-1][:4]
    for idx in order:
        z0 = Z.ravel()[idx]
        x0 = np.array([np.log(abs(z0)), np.angle(z0)])
        f = lambda x: -float(wv(np.exp(x[0]) * np.exp(1j * np.clip(x[1], 1e-9, np.pi - 1e-9))))
        res = minimize(f, x0, method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-14, maxiter=400))
        best = max(best, -res.fun)
    return best, converged


def _normalizers(gamma):
    c = classify(gamma)
    if c.kind != "hyperbolic":
        raise ValueError(f"orbit series needs a hyperbolic map, got {c.kind}")
    h = c.normalizer
    # swap 0 and infinity for the repelling direction
    flip = MobiusMap.from_matrix(np.array([[0, -1], [1, 0]]) @ h.matrix)
    return c, h, flip


def truncation_order(lam, alpha, rel_tol=1e-10):
    """Smallest N with lam^(alpha (N + 1)) / (1 - lam^alpha) < rel_tol."""
    q = lam ** alpha
    N = 0
    while q ** (N + 1) / (1 - q) >= rel_tol:
        N += 1
    return N


@dataclass
class OrbitSeriesResult:
    phi: HolomorphicField
    N: int
    tail: float
    direction: str
    multiplier: float
    alpha: float
    psi_norm: float
    terms: list = None

    def certificate(self, residual=None):
        return dict(schema="orbit-series-certificate/1", multiplier=self.multiplier, alpha=self.alpha,
                    N=self.N, tail_bound=self.tail, psi_alpha_norm=self.psi_norm,
                    direction=self.direction, residual=residual)


def orbit_series(psi, gamma, alpha, direction="attracting_sum", rel_tol=1e-10, N=None):
    """phi = -sum_{i=0}^N (gamma^*)^i psi  or  phi = sum_{i=1}^N (gamma^*)^-i psi.

    The tail bound is ||psi~||_{inf,alpha} lam^(alpha (N+1)) / (1 - lam^alpha), with psi~
    the transfer of psi to the half-plane in which gamma (or its inverse) is z -> lam z."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    c, h, flip = _normalizers(gamma)
    lam = c.multiplier
    hh = h if direction == "attracting_sum" else flip
    grid = psi.grid
    norm, ok = transfer_norm(psi, hh, alpha)
    if not ok or not np.isfinite(norm):
        warnings.warn("weighted sup of the transferred field is not attained on the sampled region",
                      DivergenceWarning)
    if norm == 0:
        return OrbitSeriesResult(HolomorphicField.zero(grid), 0, 0.0, direction, lam, alpha, 0.0, [])
    if N is None:
        N = truncation_order(lam, alpha, rel_tol)
    q = lam ** alpha
    tail = norm * q ** (N + 1) / (1 - q)
    if direction == "attracting_sum":
        maps, sign = _powers(h, lam, N), -1.0
    else:
        maps, sign = _powers(h, 1.0 / lam, N, start=1), 1.0

    def func(z):
        z = np.asarray(z, complex)
        out = np.zeros(z.shape, complex)
        for g in maps:  # fixed order keeps the sum reproducible
            out += pullback_values(psi, g, z)
        return sign * out

    phi = HolomorphicField.from_func(func, grid)
    return OrbitSeriesResult(phi, N, float(tail), direction, lam, alpha, float(norm), maps)


def working_mask(grid, gamma, radius=0.05):
    c = classify(gamma)
    z = grid.zext
    m = np.ones(z.shape, bool)
    for p in c.fixed_points:
        if np.isfinite(p):
            m &= np.abs(z - p) >= radius
        else:
            m &= np.abs(z) <= 1.0 / radius
    return m


def coboundary_residual(phi, gamma, psi, radius=0.05, grid=None):
    """sup over the working region of rho^-2 |gamma^* phi - phi - psi|."""
    g = grid if grid is not None else phi.grid
    z = g.zext
    m = working_mask(g, gamma, radius)
    if g.closed:
        m[-1] = False
    zz = z[m]
    r = pullback_values(phi, gamma, zz) - _field_values(phi, zz) - _field_values(psi, zz)
    rho = 2.0 / (np.abs(zz) ** 2 - 1)
    return float(np.max(np.abs(r) / rho ** 2))


@dataclass
class DecayCheck:
    passed: bool
    fitted: float
    alpha: float
    growth_slope: float

    def __bool__(self):
        return self.passed


def decay_class_check(phi, alpha, octaves=6, tol=0.05):
    """Membership test for the alpha decay class from the boundary ring profile."""
    fitted, _ = decay_exponent_fit(phi, octaves=octaves)
    if not np.isfinite(fitted):
        return DecayCheck(True, fitted, alpha, 0.0)
    ring = sup_norm_weighted(phi, -2 + alpha).ring_values
    g = phi.grid
    octs = g.octave[:len(ring)]
    sel = octs > octs.max() - octaves
    x = np.log(1.0 / g.r[:len(ring)][sel] - 1.0)
    y = np.log(np.maximum(ring[sel], 1e-300))
    # growth toward the boundary shows up as a negative slope against log(|z| - 1)
    slope = float(np.polyfit(x, y, 1)[0])
    ok = fitted >= alpha - tol and slope >= -tol
    return DecayCheck(bool(ok), fitted, alpha, float(slope))


def write_certificate(path, result, residual=None):
    with open(path, "w") as fh:
        json.dump(result.certificate(residual), fh, indent=2, sort_keys=True)
