"""Schwarzian derivatives, the Bers projection, its derivative at 0 and the Ahlfors-Weill section."""
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .fields import (BeltramiField, HolomorphicField, LaurentSeries, default_grid,
                     sup_norm_weighted)
from .moebius import DomainError
from .solver import DiskSolution, GridSolution, conformal_exterior, polar_ops, solver_grid


class AccuracyError(RuntimeError):
    pass


FIT_RADII = (1.5, 2.0, 3.0)
NEHARI_SLACK = 1.05


def _grid_cauchy_eval(sol, z, chunk=64):
    """f(z) = z + (1/pi) sum fzb h^2 / (z - zeta) for a square-grid solution (cell-centre rule)."""
    h = sol.x[1] - sol.x[0]
    zs = sol.z.ravel()
    a = sol.fzb.ravel() * h * h / np.pi
    keep = a != 0
    zs, a = zs[keep], a[keep]
    flat = np.asarray(z, complex).ravel()
    out = np.empty_like(flat)
    for i in range(0, flat.size, chunk):
        blk = flat[i:i + chunk]
        out[i:i + chunk] = blk + (a[None, :] / (blk[:, None] - zs[None, :])).sum(axis=1)
    return out.reshape(np.shape(z))


def _circle_coeffs(values, R, kmax):
    # f(R e^{it}) - R e^{it} = sum b_k R^-k e^{-ikt}
    n = len(values)
    c = np.fft.fft(values) / n
    ks = np.arange(1, kmax + 1)
    return c[(-ks) % n] * R ** ks


def laurent_fit(sol, radii=FIT_RADII, nfit=128, tol=1e-7, floor=1e-12):
    """Exterior expansion f(z) = z + sum b_k z^-k of a solution conformal outside the unit disk.

    Samples f on circles |z| = R by direct Cauchy quadrature, takes discrete Fourier
    coefficients and cross-checks them between radii.  For a polar solution the
    coefficients beyond the fit range come from the solver's exact mode moments,
    which the fitted block must agree with."""
    t = 2 * np.pi * np.arange(nfit) / nfit
    ev = sol.cauchy_eval if isinstance(sol, DiskSolution) else (lambda z: _grid_cauchy_eval(sol, z))
    kmax = nfit // 2 - 1
    fits = []
    for R in radii:
        z = R * np.exp(1j * t)
        fits.append(_circle_coeffs(ev(z) - z, R, kmax))
    # coefficients resolvable on circle R: |b_k| R^-k above the floor
    R0 = min(radii)
    ref = fits[0]
    scale = max(np.abs(ref).max(), 1e-300)
    K = 1
    for k in range(1, kmax + 1):
        if abs(ref[k - 1]) * R0 ** (-k) >= floor * max(scale, 1):
            K = k
    disagreement = 0.0
    for R, c in zip(radii[1:], fits[1:]):
        # only compare where both circles resolve the coefficient above round-off
        ok = np.arange(1, K + 1) * np.log(R) < np.log(1e-7 / 1e-15)
        d = np.abs(c[:K] - ref[:K])[ok]
        if d.size:
            disagreement = max(disagreement, float(d.max()))
    if disagreement > tol:
        raise AccuracyError(f"Laurent coefficients disagree across radii by {disagreement:.2e}")
    if isinstance(sol, DiskSolution):
        b = sol.b.copy()
        dev = float(np.max(np.abs(b[:K] - ref[:K]))) if K else 0.0
        # the direct quadrature is only second order in the ring width, so this is a gross check
        if dev > max(tol, 1e-3 * float(np.abs(b).max())):
            raise AccuracyError(f"fitted and moment coefficients differ by {dev:.2e}")
        series = LaurentSeries(b, 1, map_form=True).truncated(1e-16)
    else:
        series = LaurentSeries(ref[:K].copy(), 1, map_form=True)
    series.fit_order = K
    series.fit_disagreement = disagreement
    return series


def _mul(a, b, n):
    return np.convolve(a, b)[:n]


def _recip(a, n):
    """Power-series reciprocal of a (a[0] != 0) to n terms."""
    q = np.zeros(n, complex)
    q[0] = 1.0 / a[0]
    a = np.concatenate([a[:n], np.zeros(max(0, n - len(a)))])
    for j in range(1, n):
        q[j] = -np.dot(a[1:j + 1], q[j - 1::-1]) / a[0]
    return q


def schwarzian_series(series, extra=None, rel_tail=1e-16, max_terms=4096):
    """Schwarzian of f(z) = z + sum b_n z^-n as a series sum_{k>=4} c_k z^-k.

    A finite b still gives an infinite series: the number of powers of u = 1/z is
    doubled until the last few terms fall below rel_tail (or fixed by `extra`)."""
    b = np.asarray(series.coeffs, complex)
    n = len(b) + 4 + (extra if extra is not None else 60)
    while True:
        s = _schwarzian_terms(b, n)
        if extra is not None or n >= max_terms:
            break
        if np.abs(s[-8:]).max() <= rel_tail * max(np.abs(s).max(), 1e-300):
            break
        n = min(2 * n, max_terms)
    low = np.abs(s[:4]).max()
    if low > 1e-8:
        raise AccuracyError(f"Schwarzian has low-order terms of size {low:.2e}")
    return LaurentSeries(s[4:], 4).truncated(1e-17)


def _schwarzian_terms(b, n):
    K = len(b)
    nn = np.arange(1, K + 1)
    d1 = np.zeros(n, complex)
    d2 = np.zeros(n, complex)
    d3 = np.zeros(n, complex)
    d1[0] = 1.0
    # f' = 1 - sum n b_n u^{n+1}; f'' = sum n(n+1) b_n u^{n+2}; f''' = -sum n(n+1)(n+2) b_n u^{n+3}
    i1, i2, i3 = nn + 1, nn + 2, nn + 3
    m1, m2, m3 = i1 < n, i2 < n, i3 < n
    d1[i1[m1]] = -(nn * b)[m1]
    d2[i2[m2]] = (nn * (nn + 1) * b)[m2]
    d3[i3[m3]] = -(nn * (nn + 1) * (nn + 2) * b)[m3]
    r = _recip(d1, n)
    a = _mul(d2, r, n)
    return _mul(d3, r, n) - 1.5 * _mul(a, a, n)


def schwarzian(f, grid=None, z=None):
    """Schwarzian of a map given by a LaurentSeries (map form) or an analytic evaluator.

    An evaluator must provide f(z), f'(z), f''(z), f'''(z) via a `derivs(z)` method."""
    if isinstance(f, LaurentSeries):
        s = schwarzian_series(f)
        if z is not None:
            d1 = f.deriv(z)
            if np.any(np.abs(d1) < 1e-14):
                raise DomainError("f' vanishes on the evaluation set")
            return s(z)
        g = grid if grid is not None else default_grid(closed=True)
        d1 = f.deriv(g.zext)
        if np.any(np.abs(d1) < 1e-14):
            raise DomainError("f' vanishes on the evaluation set")
        return HolomorphicField.from_laurent(s, g)
    zz = z if z is not None else (grid if grid is not None else default_grid(closed=True)).zext
    _, d1, d2, d3 = f.derivs(zz)
    if np.any(np.abs(d1) < 1e-14):
        raise DomainError("f' vanishes on the evaluation set")
    s = d3 / d1 - 1.5 * (d2 / d1) ** 2
    if z is not None:
        return s
    g = grid if grid is not None else default_grid(closed=True)
    return HolomorphicField(g, s, None, lambda w: schwarzian(f, z=w))


def bers_projection(mu, grid=None, solution=None, gate=True):
    """Phi(mu): Schwarzian of the conformal extension f_mu on the exterior of the disk."""
    g = solver_grid(grid if grid is not None else mu.grid)
    if mu.sup == 0:
        return HolomorphicField.zero(g)
    sol = solution if solution is not None else conformal_exterior(mu, g)
    series = laurent_fit(sol)
    phi = schwarzian(series, g)
    if gate:
        bound = 1.5 * mu.sup * NEHARI_SLACK
        val = sup_norm_weighted(phi, -2).value
        if val > bound:
            raise AccuracyError(f"||Phi(mu)|| = {val:.4g} exceeds the Nehari gate {bound:.4g}")
    return phi


def disk_moments(mu, grid=None):
    """m_n = int mu zeta^n dA over the disk for n = 0 .. M/2, by the solver's radial product rule."""
    g = solver_grid(grid if grid is not None else mu.grid)
    vals = mu.on(g).values
    ops = polar_ops(g)
    # first Neumann step: f = z + C(mu) has b_n = m_{n-1}/pi
    _, b = ops.cauchy(vals, with_moments=True)
    return np.pi * b[:-1]


def d0_phi(mu, grid=None):
    """d0Phi(mu)(z) = -(6/pi) int mu(zeta) (zeta - z)^-4 dA, as a series in 1/z."""
    g = solver_grid(grid if grid is not None else mu.grid)
    m = disk_moments(mu, g)
    n = np.arange(len(m))
    c = -(6 / np.pi) * comb(n + 3, 3) * m
    s = LaurentSeries(c, 4).truncated(1e-17)
    return HolomorphicField.from_laurent(s, g)


def d0_phi_at(mu, z, grid=None):
    """Direct quadrature of the quartic kernel integral at exterior targets."""
    z = np.asarray(z, complex)
    if np.any(np.abs(z) <= 1):
        raise DomainError("targets must lie outside the closed unit disk")
    g = solver_grid(grid if grid is not None else mu.grid)
    a = (mu.on(g).values * g.w).ravel()
    zs = g.z.ravel()
    flat = z.ravel()
    out = np.array([np.sum(a / (zs - t) ** 4) for t in flat])
    return (-(6 / np.pi) * out).reshape(z.shape)


def aw_values(phi, z):
    """-2 rho_ext^-2(z*) (z z*)^2 phi(z*) with z* = 1/conj(z)."""
    z = np.asarray(z, complex)
    zs = 1.0 / np.conj(z)
    rho2 = ((np.abs(zs) ** 2 - 1) / 2) ** 2
    return -2 * rho2 * (z * zs) ** 2 * phi(zs)


def aw_section(phi, grid=None, check=True):
    """Ahlfors-Weill Beltrami coefficient sigma(phi) on the disk (linear in phi)."""
    g = grid if grid is not None else phi.grid
    if check:
        nrm = sup_norm_weighted(phi, -2).value
        if nrm >= 0.5:
            raise DomainError(f"||phi|| = {nrm:.4g} must be below 1/2")
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = aw_values(phi, g.z)
    vals = np.where(g.z == 0, 0, vals)
    # closed grids: the last node sits where the formula vanishes like (1 - |z|^2)^2
    return BeltramiField(g, vals, lambda z: aw_values(phi, z), check=check)


def d_sigma(psi, grid=None):
    """Derivative of the (linear) section: d sigma(psi) = sigma(psi)."""
    return aw_section(psi, grid, check=False)


@dataclass
class DecayProfile:
    t: np.ndarray
    beta: np.ndarray
    weighted: np.ndarray
    alpha: float


def preschwarzian_decay(f, ts=None, alpha=0.0, n_theta=512, n_r=48):
    """beta(t) = sup over 1 < |z| <= 1 + t of (|z| - 1)|f''/f'|, and the (|z|-1)^(1-alpha) weighted sup."""
    series = f if isinstance(f, LaurentSeries) else getattr(f, "series", None)
    if series is None:
        raise TypeError("preschwarzian decay needs Laurent data")
    if ts is None:
        ts = 2.0 ** -np.arange(1, 11)
    ts = np.asarray(ts, float)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    beta = np.zeros(len(ts))
    wbeta = np.zeros(len(ts))
    for i, t in enumerate(ts):
        d = t * 2.0 ** -np.linspace(0, 6, n_r)  # |z| - 1 in (t 2^-6, t]
        z = (1 + d)[:, None] * np.exp(1j * th)[None, :]
        ratio = np.abs(series.deriv(z, 2) / series.deriv(z, 1))
        beta[i] = float((d[:, None] * ratio).max())
        wbeta[i] = float((d[:, None] ** (1 - alpha) * ratio).max())
    return DecayProfile(ts, beta, wbeta, alpha)
