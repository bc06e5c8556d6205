"""Polar grids on the disk and its exterior, sampled fields, weighted norms and quadrature."""
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .moebius import DomainError


class DiskGrid:
    """Polar grid of the unit disk with geometric rings toward the boundary.

    Rings: `inner` uniform rings on [0, 1/2], then `per_octave` rings per octave
    1 - r in [2^-j, 2^-(j+1)] down to 1 - r = 2^-k.  With closed=True a last
    ring [1 - 2^-k, 1] is appended so that weights integrate over the whole disk.
    Nodes sit at ring and angle midpoints.
    """

    def __init__(self, k=14, M=1024, per_octave=16, inner=32, closed=False, radius=1.0):
        if k < 1 or k > 16:
            raise ValueError("cutoff k must be in 1..16")
        if M % 2:
            raise ValueError("angle count must be even")
        self.k, self.M, self.per_octave, self.inner = k, M, per_octave, inner
        self.closed = closed
        self.radius = float(radius)
        e = list(np.linspace(0.0, 0.5, inner + 1))
        s = np.linspace(1.0, k, (k - 1) * per_octave + 1)
        e += list(1.0 - 2.0 ** (-s[1:]))
        octv = [0] * inner + [int(np.floor(x - 1e-9)) for x in s[1:]]
        if closed:
            e.append(1.0)
            octv.append(k)
        self.edges = np.array(e) * radius
        self.octave = np.array(octv)
        self.r = 0.5 * (self.edges[1:] + self.edges[:-1])
        self.theta = 2 * np.pi * (np.arange(M) + 0.5) / M
        self.z = self.r[:, None] * np.exp(1j * self.theta)[None, :]
        area = np.pi * (self.edges[1:] ** 2 - self.edges[:-1] ** 2) / M
        self.w = np.repeat(area[:, None], M, axis=1)

    @property
    def shape(self):
        return self.z.shape

    @property
    def nrings(self):
        return len(self.r)

    @property
    def cutoff(self):
        return 1.0 - 2.0 ** (-self.k)

    @property
    def zext(self):
        return 1.0 / np.conj(self.z)

    @property
    def wext(self):
        return self.w / np.abs(self.z) ** 4

    def params(self):
        return dict(k=self.k, M=self.M, per_octave=self.per_octave, inner=self.inner,
                    closed=self.closed, radius=self.radius)

    def same_as(self, other):
        return self.params() == other.params()

    def __repr__(self):
        return "DiskGrid(%s)" % ", ".join(f"{a}={b}" for a, b in self.params().items())


@lru_cache(maxsize=16)
def default_grid(k=14, M=1024, per_octave=16, inner=32, closed=False):
    return DiskGrid(k, M, per_octave, inner, closed)


def _lagrange4(x, nodes):
    """Cubic Lagrange weights; x shape (n,), nodes shape (n, 4)."""
    w = np.ones(nodes.shape)
    for i in range(4):
        for j in range(4):
            if i != j:
                w[:, i] *= (x - nodes[:, j]) / (nodes[:, i] - nodes[:, j])
    return w


class PolarInterpolator:
    """Tensor cubic interpolation on a DiskGrid (radius mirrored through the centre)."""

    def __init__(self, grid, values):
        M = grid.M
        vals = np.asarray(values)
        mirror = np.roll(vals[3::-1], M // 2, axis=1)
        self.r = np.concatenate([-grid.r[3::-1], grid.r]) / grid.radius
        self.v = np.concatenate([mirror, vals], axis=0)
        self.M = M
        self.scale = grid.radius

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        shp = z.shape
        z = z.ravel() / self.scale
        rr = np.abs(z)
        th = np.mod(np.angle(z), 2 * np.pi)
        i0 = np.clip(np.searchsorted(self.r, rr) - 2, 0, len(self.r) - 4)
        ridx = i0[:, None] + np.arange(4)
        wr = _lagrange4(rr, self.r[ridx])
        t = th * self.M / (2 * np.pi) - 0.5
        j0 = np.floor(t).astype(int) - 1
        jidx = j0[:, None] + np.arange(4)
        wt = _lagrange4(t, jidx.astype(float))
        jidx %= self.M
        out = np.zeros(z.shape, dtype=self.v.dtype)
        for a in range(4):
            out += wr[:, a] * np.sum(self.v[ridx[:, a][:, None], jidx] * wt, axis=1)
        return out.reshape(shp)


@dataclass
class LaurentSeries:
    """sum_{k >= k0} c[k - k0] z^{-k}, optionally plus z (map form)."""
    coeffs: np.ndarray
    k0: int = 1
    map_form: bool = False

    @property
    def order(self):
        return self.k0 + len(self.coeffs) - 1

    def powers(self):
        return np.arange(self.k0, self.k0 + len(self.coeffs))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        u = 1.0 / z
        out = np.zeros_like(z)
        for c in self.coeffs[::-1]:
            out = out * u + c
        out = out * u ** self.k0
        return out + z if self.map_form else out

    def deriv(self, z, n=1):
        """n-th derivative."""
        z = np.asarray(z, dtype=complex)
        ks = self.powers().astype(float)
        fac = np.ones_like(ks)
        for j in range(n):
            fac = fac * -(ks + j)
        s = LaurentSeries(self.coeffs * fac, self.k0 + n)
        out = s(z)
        if self.map_form and n == 1:
            out = out + 1
        return out

    def on_grid(self, grid):
        """Evaluate on the exterior nodes of grid (ring-wise FFT)."""
        M = grid.M
        R = 1.0 / grid.r  # exterior ring radii (grid radius 1)
        ks = self.powers()
        out = np.zeros(grid.shape, dtype=complex)
        ph = np.exp(-1j * np.pi * ks / M)
        idx = ks % M
        for i, Ri in enumerate(R):
            a = np.zeros(M, complex)
            np.add.at(a, idx, self.coeffs * Ri ** (-ks.astype(float)) * ph)
            out[i] = np.fft.fft(a)
        if self.map_form:
            out += grid.zext
        return out

    def truncated(self, tol=1e-15):
        c = self.coeffs
        big = np.nonzero(np.abs(c) > tol * max(np.abs(c).max(), 1e-300))[0]
        n = big[-1] + 1 if len(big) else 1
        return LaurentSeries(c[:n].copy(), self.k0, self.map_form)


class BeltramiField:
    """Sampled Beltrami coefficient on a DiskGrid, optionally backed by a formula."""

    def __init__(self, grid, values, func=None, check=True):
        self.grid = grid
        self.values = np.asarray(values, dtype=complex)
        self.func = func
        self._interp = None
        if self.values.shape != grid.shape:
            raise ValueError("sample array does not match grid")
        if check and not (self.sup < 1):
            raise ValueError(f"Beltrami coefficient needs sup|mu| < 1, got {self.sup:.6g}")

    @classmethod
    def from_func(cls, func, grid, check=True):
        return cls(grid, func(grid.z), func, check)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros(grid.shape), lambda z: np.zeros(np.shape(z), complex))

    @property
    def sup(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def at(self, z):
        z = np.asarray(z, dtype=complex)
        inside = np.abs(z) < 1
        if self.func is not None:
            out = np.zeros(z.shape, complex)
            out[inside] = self.func(z[inside])
            return out
        if self._interp is None:
            self._interp = PolarInterpolator(self.grid, self.values)
        return np.where(inside, self._interp(z), 0)

    def on(self, grid):
        if grid is self.grid or grid.same_as(self.grid):
            return self
        return BeltramiField(grid, self.at(grid.z), self.func, check=False)

    def scaled(self, t):
        f = self.func
        return BeltramiField(self.grid, t * self.values, (lambda z: t * f(z)) if f else None)

    def __sub__(self, other):
        f, g = self.func, other.on(self.grid).func
        fn = (lambda z: f(z) - g(z)) if (f and g) else None
        return BeltramiField(self.grid, self.values - other.on(self.grid).values, fn, check=False)


class HolomorphicField:
    """Samples on the exterior nodes of a DiskGrid with optional Laurent data or formula."""

    def __init__(self, grid, values, laurent=None, func=None):
        self.grid = grid
        self.values = np.asarray(values, dtype=complex)
        self.laurent = laurent
        self.func = func
        self._interp = None

    @classmethod
    def from_func(cls, func, grid):
        return cls(grid, func(grid.zext), None, func)

    @classmethod
    def from_laurent(cls, series, grid):
        return cls(grid, series.on_grid(grid), series)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros(grid.shape), LaurentSeries(np.zeros(1), 4))

    def at(self, z):
        z = np.asarray(z, dtype=complex)
        if self.func is not None:
            return self.func(z)
        if self.laurent is not None:
            return self.laurent(z)
        if self._interp is None:
            self._interp = PolarInterpolator(self.grid, self.values)
        return self._interp(1.0 / np.conj(z))

    __call__ = at

    def scaled(self, t):
        f = self.func
        lr = None if self.laurent is None else LaurentSeries(t * self.laurent.coeffs, self.laurent.k0)
        return HolomorphicField(self.grid, t * self.values, lr, (lambda z: t * f(z)) if f else None)

    @property
    def exact(self):
        return self.func is not None or self.laurent is not None

    def __add__(self, other):
        lr = _add_series(self.laurent, other.laurent)
        fn = None
        if lr is None and self.exact and other.exact:
            fn = lambda z: self.at(z) + other.at(z)
        return HolomorphicField(self.grid, self.values + other.values, lr, fn)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def series_agreement(self, radius=2.0):
        """max |samples - series| on the exterior ring nearest |z| = radius."""
        if self.laurent is None:
            return float("nan")
        j = int(np.argmin(np.abs(1.0 / self.grid.r - radius)))
        z = self.grid.zext[j]
        return float(np.max(np.abs(self.values[j] - self.laurent(z))))

    def cr_residual(self, order=7):
        """Polar Cauchy-Riemann residual dv/dR - dv/dtheta / (i R), relative to max |dv/dR|.

        Spectral in the angle; `order`-point Lagrange stencils in log R."""
        g = self.grid
        n = g.nrings - (1 if g.closed else 0)
        R = 1.0 / g.r[:n]
        s = np.log(R)
        v = self.values[:n]
        k = np.fft.fftfreq(g.M, 1.0 / g.M)
        k[g.M // 2] = 0
        dv_dth = np.fft.ifft(1j * k * np.fft.fft(v, axis=1), axis=1)
        h = order // 2
        rows = range(h, n - h)
        dv_dR = np.empty((len(rows), g.M), complex)
        rhs = np.zeros(order)
        rhs[1] = 1.0
        for j, i in enumerate(rows):
            V = np.vander(s[i - h:i + h + 1] - s[i], order, increasing=True).T
            dv_dR[j] = np.linalg.solve(V, rhs) @ v[i - h:i + h + 1] / R[i]
        res = dv_dR - dv_dth[h:n - h] / (1j * R[h:n - h, None])
        return float(np.max(np.abs(res)) / (np.max(np.abs(dv_dR)) + 1e-300))


def _add_series(a, b):
    if a is None or b is None:
        return None
    k0 = min(a.k0, b.k0)
    n = max(a.order, b.order) - k0 + 1
    c = np.zeros(n, complex)
    c[a.k0 - k0:a.k0 - k0 + len(a.coeffs)] += a.coeffs
    c[b.k0 - k0:b.k0 - k0 + len(b.coeffs)] += b.coeffs
    return LaurentSeries(c, k0)


@dataclass
class NormReport:
    value: float
    kind: str
    cutoff: float
    tail: float = 0.0
    ring: int = -1
    ring_values: np.ndarray = field(default=None, repr=False)

    def __float__(self):
        return float(self.value)


def _rho_disk(z):
    return 2.0 / (1.0 - np.abs(z) ** 2)


def _rho_ext(z):
    return 2.0 / (np.abs(z) ** 2 - 1.0)


def sup_norm_weighted(fld, weight):
    """Grid max of rho^weight |field| (disk density for mu, exterior density for phi)."""
    g = fld.grid
    if isinstance(fld, HolomorphicField):
        if weight > -1:
            raise DomainError("quadratic differentials take weight -2 or -2 + alpha")
        vals = _rho_ext(g.zext) ** weight * np.abs(fld.values)
        kind = "sup_hyp" if weight == -2 else f"sup_hyp_alpha({weight + 2:g})"
    elif isinstance(fld, BeltramiField):
        if weight < 0:
            raise DomainError("Beltrami coefficients take weight alpha >= 0")
        vals = _rho_disk(g.z) ** weight * np.abs(fld.values)
        kind = "Linf" if weight == 0 else f"sup_hyp_alpha({weight:g})"
    else:
        raise DomainError("unsupported field type")
    if g.closed:
        vals = vals[:-1]
    ring_max = vals.max(axis=1)
    j = int(np.argmax(ring_max))
    return NormReport(float(ring_max[j]), kind, g.cutoff, 0.0, j, ring_max)


def _octave_totals(grid, ring_totals):
    octs = grid.octave[: len(ring_totals)]
    return np.array([ring_totals[octs == o].sum() for o in range(octs.max() + 1)])


def _tail(grid, ring_totals):
    t = _octave_totals(grid, ring_totals)
    if len(t) < 3 or t[-1] == 0:
        return 0.0
    q = t[-1] / t[-2] if t[-2] > 0 else 1.0
    return float(t[-1] * q / (1 - q)) if q < 1 else float("inf")


def lp_norm_hyperbolic(fld, p):
    """Hyperbolic L^p norm: int |mu|^p rho^2 over the disk, or int rho^(2-2p)|phi|^p over the exterior."""
    if p < 1:
        raise ValueError("p must be >= 1")
    g = fld.grid
    n = g.nrings - (1 if g.closed else 0)
    if isinstance(fld, BeltramiField):
        integrand = np.abs(fld.values[:n]) ** p * _rho_disk(g.z[:n]) ** 2 * g.w[:n]
    elif isinstance(fld, HolomorphicField):
        ze = g.zext[:n]
        integrand = _rho_ext(ze) ** (2 - 2 * p) * np.abs(fld.values[:n]) ** p * g.wext[:n]
    else:
        raise DomainError("unsupported field type")
    rings = integrand.sum(axis=1)
    total = float(rings.sum())
    tail = _tail(g, rings)
    return NormReport(total ** (1.0 / p), f"Lp_hyp({p:g})", g.cutoff, tail ** (1.0 / p) if np.isfinite(tail) else tail,
                      -1, rings)


def embedding_constant(p):
    """c_p with c_p^p = (2p - 1)/(4 pi)."""
    return ((2 * p - 1) / (4 * np.pi)) ** (1.0 / p)


def quartic_kernel_integral(zeta, grid=None):
    """Quadrature of the integral of |z - zeta|^-4 over the unit disk."""
    zeta = complex(zeta)
    if abs(zeta) <= 1:
        raise DomainError("zeta must lie outside the closed unit disk")
    g = grid if grid is not None else default_grid(closed=True)
    return float(np.sum(g.w / np.abs(g.z - zeta) ** 4))


def decay_exponent_fit(phi, octaves=6, ceiling=2.0):
    """Slope of log(ring max of rho^-2 |phi|) against log(|z| - 1) over the boundary octaves."""
    g = phi.grid
    n = g.nrings - (1 if g.closed else 0)
    ze = g.zext[:n]
    wv = _rho_ext(ze) ** -2 * np.abs(phi.values[:n])
    octs = g.octave[:n]
    last = octs.max()
    sel = octs > last - octaves
    ring_max = wv[sel].max(axis=1)
    if np.all(ring_max <= 1e-300):
        return float("inf"), 0.0
    x = np.log(1.0 / g.r[:n][sel] - 1.0)
    y = np.log(np.maximum(ring_max, 1e-300))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(min(coef[0], ceiling)), resid


def pullback_beltrami(mu, gamma):
    """gamma^* mu = mu(gamma z) conj(gamma'(z)) / gamma'(z) for a disk automorphism."""
    def f(z):
        d = gamma.deriv(z)
        return mu.at(gamma(z)) * np.conj(d) / d
    return BeltramiField.from_func(f, mu.grid)


# ---- file formats ----------------------------------------------------------

_MAGIC = b"TLFD"


def write_field_csv(path, points, values):
    points = np.asarray(points).ravel()
    values = np.asarray(values).ravel()
    data = np.column_stack([points.real, points.imag, values.real, values.imag])
    np.savetxt(path, data, delimiter=",", header="re_z,im_z,re_value,im_value", comments="", fmt="%.17g")


def read_field_csv(path):
    d = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return d[:, 0] + 1j * d[:, 1], d[:, 2] + 1j * d[:, 3]


def write_field_binary(path, fld, exterior=None):
    """Little-endian float64 records (re z, im z, re v, im v) after a fixed header."""
    g = fld.grid
    if exterior is None:
        exterior = isinstance(fld, HolomorphicField)
    pts = (g.zext if exterior else g.z).ravel()
    vals = fld.values.ravel()
    header = struct.pack("<4sIIIIIIdQ", _MAGIC, 1, g.k, g.M, g.per_octave, g.inner,
                         (1 if g.closed else 0) | (2 if exterior else 0), g.radius, pts.size)
    rec = np.column_stack([pts.real, pts.imag, vals.real, vals.imag]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rec.tobytes())


def read_field_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    size = struct.calcsize("<4sIIIIIIdQ")
    magic, ver, k, M, po, inner, flags, radius, n = struct.unpack("<4sIIIIIIdQ", raw[:size])
    if magic != _MAGIC:
        raise ValueError("not a field dump")
    grid = DiskGrid(k, M, po, inner, bool(flags & 1), radius)
    rec = np.frombuffer(raw[size:], dtype="<f8").reshape(n, 4)
    vals = (rec[:, 2] + 1j * rec[:, 3]).reshape(grid.shape)
    if flags & 2:
        return HolomorphicField(grid, vals)
    return BeltramiField(grid, vals, check=False)


def write_laurent_csv(path, series):
    ks = series.powers()
    data = np.column_stack([ks, series.coeffs.real, series.coeffs.imag])
    np.savetxt(path, data, delimiter=",", header="k,re_c,im_c", comments="", fmt=["%d", "%.17g", "%.17g"])


def read_laurent_csv(path, map_form=False):
    d = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ks = d[:, 0].astype(int)
    c = np.zeros(ks.max() - ks.min() + 1, complex)
    c[ks - ks.min()] = d[:, 1] + 1j * d[:, 2]
    return LaurentSeries(c, int(ks.min()), map_form)
