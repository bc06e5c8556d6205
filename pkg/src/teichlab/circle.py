"""Circle homeomorphisms through their lifts to the real line (period 1)."""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator


class ValidationError(ValueError):
    pass


class UnsupportedOperation(TypeError):
    pass


class CircleMapLift:
    """Lift g: R -> R with g(x + 1) = g(x) + 1, increasing."""

    def __init__(self, func, deriv=None, name="lift", validate=True, n_check=4096):
        self.func = func
        self.deriv = deriv
        self.name = name
        if validate:
            self.validate(n_check)

    def __call__(self, x):
        return self.func(np.asarray(x, float))

    def validate(self, n=4096):
        x = np.arange(n) / n
        y = self(x)
        if np.any(np.diff(np.append(y, self(1.0))) <= 0):
            raise ValidationError(f"{self.name}: lift is not strictly increasing on the sample grid")
        per = np.max(np.abs(self(x + 1) - y - 1))
        if per > 1e-9:
            raise ValidationError(f"{self.name}: lift is not 1-periodic modulo 1 (residual {per:.2e})")

    def derivative(self, x):
        if self.deriv is None:
            raise UnsupportedOperation(f"{self.name}: no derivative available")
        return self.deriv(np.asarray(x, float))

    def inverse(self, y, tol=1e-12):
        """Bisection on the monotone lift."""
        y = np.asarray(y, float)
        g0 = float(self(0.0))
        lo = y - g0 - 1.0
        hi = y - g0 + 1.0
        while np.max(hi - lo) > tol:
            mid = 0.5 * (lo + hi)
            up = self(mid) < y
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
        return 0.5 * (lo + hi)

    def inverse_lift(self):
        d = None
        if self.deriv is not None:
            d = lambda y: 1.0 / self.derivative(self.inverse(y))
        return CircleMapLift(self.inverse, d, f"{self.name}^-1", validate=False)

    def compose(self, other):
        """self o other."""
        d = None
        if self.deriv is not None and other.deriv is not None:
            d = lambda x: self.derivative(other(x)) * other.derivative(x)
        return CircleMapLift(lambda x: self(other(x)), d, f"{self.name}o{other.name}", validate=False)


def identity():
    return CircleMapLift(lambda x: x + 0.0, lambda x: np.ones_like(x), "identity")


def rotation(a):
    return CircleMapLift(lambda x: x + a, lambda x: np.ones_like(x), f"rotation({a:g})")


def sine_family(amp, freq=1):
    """In the angle variable: theta + amp sin(freq theta)/freq."""
    if freq < 1 or int(freq) != freq:
        raise ValueError("frequency must be a positive integer")
    if abs(amp) >= 1:
        raise ValidationError("amplitude must be below 1 for a homeomorphism")
    w = 2 * np.pi * freq
    return CircleMapLift(lambda x: x + amp * np.sin(w * x) / w,
                         lambda x: 1 + amp * np.cos(w * x), f"sine({amp:g},{freq})")


def mobius_boundary(mat):
    """Boundary map of a disk automorphism z -> (A z + B)/(C z + D)."""
    (A, B), (C, D) = np.asarray(mat, complex)
    if A == 0:
        raise ValidationError("matrix does not define a disk automorphism")
    a = -B / A
    if abs(a) >= 1:
        raise ValidationError("matrix does not define a disk automorphism")
    m = lambda z: (A * z + B) / (C * z + D)
    rot = m(1.0) * (1 - np.conj(a)) / (1 - a)
    if abs(abs(rot) - 1) > 1e-10:
        raise ValidationError("matrix does not define a disk automorphism")
    phi = np.angle(rot)

    def g(x):
        e = np.exp(-2j * np.pi * x)
        return x + (phi + 2 * np.angle(1 - a * e)) / (2 * np.pi)

    def dg(x):
        e = np.exp(2j * np.pi * x)
        return (1 - abs(a) ** 2) / np.abs(1 - np.conj(a) * e) ** 2

    return CircleMapLift(g, dg, "mobius")


def piecewise_linear(c, s):
    """Two-slope lift: slope s on [0, c], slope (1 - s c)/(1 - c) on [c, 1]."""
    s2 = (1 - s * c) / (1 - c)
    if s <= 0 or s2 <= 0:
        raise ValidationError("slopes must be positive")

    def g(x):
        n = np.floor(x)
        t = x - n
        return n + np.where(t < c, s * t, s * c + s2 * (t - c))

    def dg(x):
        t = x - np.floor(x)
        return np.where(t < c, s, s2)

    return CircleMapLift(g, dg, f"corner({c:g},{s:g})")


def from_samples(x, gx, gpx=None, name="table"):
    """Monotone interpolant of samples over one period (x in [0, 1))."""
    x = np.asarray(x, float)
    gx = np.asarray(gx, float)
    order = np.argsort(x)
    x, gx = x[order], gx[order]
    if np.any(np.diff(gx) <= 0) or gx[-1] >= gx[0] + 1:
        raise ValidationError("samples are not strictly increasing within one period")
    xe = np.concatenate([x - 1, x, x + 1, [x[0] + 2]])
    ge = np.concatenate([gx - 1, gx, gx + 1, [gx[0] + 2]])
    sp = PchipInterpolator(xe, ge)

    def g(t):
        n = np.floor(t)
        return sp(t - n) + n

    if gpx is not None:
        gpx = np.asarray(gpx, float)[order]
        dsp = CubicSpline(np.append(x, x[0] + 1), np.append(gpx, gpx[0]), bc_type="periodic")
        d = lambda t: dsp(t - np.floor(t))
    else:
        d = lambda t: sp(t - np.floor(t), 1)
    return CircleMapLift(g, d, name)


def read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                continue  # header
    a = np.array(rows)
    return from_samples(a[:, 0], a[:, 1], a[:, 2] if a.shape[1] > 2 else None, name=str(path))


def write_csv(path, g, n=1024, with_derivative=True):
    x = np.arange(n) / n
    cols = [x, g(x)]
    header = ["x", "g"]
    if with_derivative and g.deriv is not None:
        cols.append(g.derivative(x))
        header.append("gprime")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in zip(*cols):
            w.writerow([repr(float(v)) for v in r])


def builtin(name, **kw):
    table = {"identity": identity, "rotation": rotation, "sine": sine_family, "mobius": mobius_boundary,
             "corner": piecewise_linear}
    if name not in table:
        raise KeyError(f"unknown circle map {name!r}")
    return table[name](**kw)


# ---- diagnostics ---------------------------------------------------------------

def qs_quotient(g, x, t):
    """m_g(x, t) = (g(x + t) - g(x)) / (g(x) - g(x - t))."""
    t = np.asarray(t, float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    x = np.asarray(x, float)
    gx = g(x)
    num = g(x + t) - gx
    den = gx - g(x - t)
    if np.any(num <= 0) or np.any(den <= 0):
        raise ValidationError("lift is not increasing")
    return num / den


def symmetry_modulus(g, t, x_grid=None):
    """sup over x of |m_g(x, t) - 1|."""
    if x_grid is None:
        x_grid = np.arange(4096) / 4096
    return float(np.max(np.abs(qs_quotient(g, x_grid, t) - 1)))


def symmetry_profile(g, ts=None, x_grid=None):
    if ts is None:
        ts = 2.0 ** -np.arange(1, 13)
    return np.array([symmetry_modulus(g, t, x_grid) for t in ts])


def holder_seminorm(gprime, alpha, n=4096):
    """max over pairs with circular distance <= 1/2 of |g'(x) - g'(y)| / |x - y|^alpha.

    gprime: samples on a uniform grid of [0, 1) or a CircleMapLift with a derivative."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if isinstance(gprime, CircleMapLift):
        if gprime.deriv is None:
            raise UnsupportedOperation("holder seminorm needs derivative samples")
        v = gprime.derivative(np.arange(n) / n)
    elif gprime is None:
        raise UnsupportedOperation("holder seminorm needs derivative samples")
    else:
        v = np.asarray(gprime, float)
    N = len(v)
    best = 0.0
    for L in range(1, N // 2 + 1):
        d = np.max(np.abs(np.roll(v, -L) - v))
        best = max(best, d / (L / N) ** alpha)
    return float(best)


@dataclass
class LiouvilleReport:
    value: float
    band: float
    eps: float
    n: int

    def __float__(self):
        return float(self.value)


def _cocycle_rows(gs, gp, N):
    """|c(g)| on the pairs (theta_j, theta_{j+L}) for L = 1..N-1, angles theta = 2 pi x."""
    h = 2 * np.pi / N
    for L in range(1, N):
        shifted = np.roll(gs, -L)
        shifted[N - L:] += 1.0
        dG = 2 * np.pi * (shifted - gs)
        dX = L * h
        c = gp * np.roll(gp, -L) / (4 * np.sin(dG / 2) ** 2) - 1.0 / (4 * np.sin(dX / 2) ** 2)
        yield L, c


def liouville_norm(g, n=4096, eps=1e-3):
    """Double integral of |c(g)| over the torus of angle pairs, excluding |theta - phi| < eps.

    The excluded band is estimated from the diagonal limit of c(g), extrapolated
    from the two nearest off-diagonal lags, and reported separately."""
    if g.deriv is None:
        raise UnsupportedOperation("Liouville norm needs the derivative of the lift")
    x = (np.arange(n) + 0.5) / n
    gs = g(x)
    gp = g.derivative(x)
    h = 2 * np.pi / n
    main = 0.0
    rows = {}
    for L, c in _cocycle_rows(gs, gp, n):
        d = min(L, n - L) * h
        # lag L covers distances [d - h/2, d + h/2]; keep the part outside the band
        wgt = np.clip((d + h / 2 - max(eps, d - h / 2)) / h, 0.0, 1.0)
        main += wgt * np.sum(np.abs(c)) * h * h
        if L in (1, 2):
            rows[L] = c
    # c is even in the lag to leading order: c(d) = c0 + c2 d^2
    c0 = (4 * rows[1] - rows[2]) / 3
    band = 2 * eps * np.sum(np.abs(c0)) * h
    return LiouvilleReport(main + band, band, eps, n)
