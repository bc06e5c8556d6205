"""Moebius maps of the disk, its exterior and the upper half-plane."""
from dataclasses import dataclass, field

import numpy as np

DOMAINS = ("disk", "exterior", "halfplane", "plane")


class DomainError(ValueError):
    pass


def _normalize(mat):
    mat = np.asarray(mat, dtype=complex)
    det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    if det == 0:
        raise ValueError("singular matrix")
    return mat / np.sqrt(det)


@dataclass(frozen=True)
class MobiusMap:
    """z -> (a z + b)/(c z + d) with ad - bc = 1 and a domain tag."""
    a: complex
    b: complex
    c: complex
    d: complex
    domain: str = "plane"

    @classmethod
    def from_matrix(cls, mat, domain="plane"):
        if domain not in DOMAINS:
            raise ValueError(f"unknown domain tag {domain!r}")
        m = _normalize(mat)
        return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]), domain)

    @classmethod
    def identity(cls, domain="plane"):
        return cls(1, 0, 0, 1, domain)

    @property
    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=complex)

    @property
    def trace(self):
        return self.a + self.d

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        num = self.a * z + self.b
        den = self.c * z + self.d
        with np.errstate(divide="ignore", invalid="ignore"):
            w = num / den
        inf = np.isinf(z)
        if np.any(inf):
            w = np.where(inf, self.a / self.c if self.c != 0 else np.inf, w)
        w = np.where((den == 0) & ~inf, np.inf, w)
        return w if w.ndim else complex(w)

    def deriv(self, z):
        z = np.asarray(z, dtype=complex)
        return 1.0 / (self.c * z + self.d) ** 2

    def __matmul__(self, other):
        """self o other."""
        dom = self.domain if self.domain == other.domain else "plane"
        return MobiusMap.from_matrix(self.matrix @ other.matrix, dom)

    def inverse(self):
        return MobiusMap(self.d, -self.b, -self.c, self.a, self.domain)

    def power(self, n):
        mat = np.linalg.matrix_power(self.matrix, abs(int(n)))
        m = MobiusMap.from_matrix(mat, self.domain)
        return m if n >= 0 else m.inverse()

    def preserves(self, domain, n=16, tol=1e-12):
        """Check that the boundary goes to the boundary and the domain into itself."""
        if domain in ("disk", "exterior"):
            s = np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)
            img = self(s)
            if np.max(np.abs(np.abs(img) - 1)) > tol:
                return False
            probe = 0.0 if domain == "disk" else 3.0
            v = abs(self(probe))
            return v < 1 if domain == "disk" else v > 1
        if domain == "halfplane":
            x = np.tan(np.pi * ((np.arange(n) + 0.5) / n - 0.5))
            img = self(x)
            fin = np.isfinite(img)
            if np.max(np.abs(img[fin].imag) / (1 + np.abs(img[fin]))) > tol:
                return False
            return self(1j).imag > 0
        return True


@dataclass(frozen=True)
class MobiusClass:
    kind: str
    fixed_points: tuple = ()
    multiplier: float = float("nan")
    normalizer: MobiusMap = field(default=None)
    trace: complex = 0


def fixed_points(m):
    a, b, c, d = m.a, m.b, m.c, m.d
    if abs(c) < 1e-14:
        if abs(a - d) < 1e-14:
            return ()
        return (b / (d - a), complex(np.inf))
    disc = np.sqrt((a - d) ** 2 + 4 * b * c)
    z1 = ((a - d) + disc) / (2 * c)
    z2 = ((a - d) - disc) / (2 * c)
    if abs(z1 - z2) < 1e-12:
        return (z1,)
    return (z1, z2)


def _multiplier_at(m, z):
    if np.isinf(z):
        # derivative at infinity in the chart 1/z
        return abs(m.d / m.a) if m.c == 0 else np.inf
    return abs(m.deriv(z))


def classify(m: MobiusMap) -> MobiusClass:
    tr = m.trace
    eye = np.allclose(m.matrix, np.eye(2), atol=1e-12) or np.allclose(m.matrix, -np.eye(2), atol=1e-12)
    if eye:
        return MobiusClass("identity", (), 1.0, MobiusMap.identity(), tr)
    fps = fixed_points(m)
    if abs(tr * tr - 4) < 1e-10:
        return MobiusClass("parabolic", fps, 1.0, None, tr)
    if abs(tr.imag) < 1e-12 and abs(tr.real) < 2:
        return MobiusClass("elliptic", fps, 1.0, None, tr)
    if abs(tr.imag) > 1e-12:
        return MobiusClass("loxodromic", fps, float("nan"), None, tr)
    t2 = tr.real ** 2
    # lambda + 1/lambda + 2 = tr^2, lambda in (0,1)
    s = t2 - 2
    lam = (s - np.sqrt(s * s - 4)) / 2
    p, q = fps
    if _multiplier_at(m, p) > 1:
        p, q = q, p
    h = _to_halfplane(p, q, m.domain)
    return MobiusClass("hyperbolic", (p, q), float(lam), h, tr)


def _to_halfplane(p, q, domain):
    """Moebius h with h(p)=0, h(q)=inf; sends the tagged domain to the upper half-plane."""
    if np.isinf(q):
        mat = np.array([[1, -p], [0, 1]], dtype=complex)
    elif np.isinf(p):
        mat = np.array([[0, 1], [1, -q]], dtype=complex)
    else:
        mat = np.array([[1, -p], [1, -q]], dtype=complex)
    h = MobiusMap.from_matrix(mat)
    if domain in ("disk", "exterior"):
        s = np.exp(2j * np.pi * np.array([0.137, 0.611, 0.883]))
        s = s[np.argmax(np.minimum(np.abs(s - p), np.abs(s - q)))]
        v = h(s)
        rot = np.conj(v) / abs(v)
        probe = 0.0 if domain == "disk" else 4.0 * np.exp(0.3j)
        if (rot * h(probe)).imag < 0:
            rot = -rot
    elif domain == "halfplane":
        rot = 1.0
        if (h(1j + 0.1)).imag < 0:
            rot = -1.0
    else:
        rot = 1.0
    r = np.sqrt(rot)
    return MobiusMap.from_matrix(np.array([[r, 0], [0, 1 / r]]) @ h.matrix, "plane")


def hyperbolic(lam, p=1.0, q=-1.0, domain="exterior"):
    """Hyperbolic map of the tagged domain with attracting point p, repelling q and multiplier lam."""
    h = _to_halfplane(p, q, domain)
    s = np.sqrt(lam)
    g = MobiusMap.from_matrix(np.array([[s, 0], [0, 1 / s]]))
    return MobiusMap.from_matrix((h.inverse() @ g @ h).matrix, domain)


def rotation(theta, domain="disk"):
    e = np.exp(0.5j * theta)
    return MobiusMap(e, 0, 0, 1 / e, domain)


def disk_automorphism(a, theta=0.0, domain="disk"):
    """z -> e^{i theta} (z - a)/(1 - conj(a) z)."""
    e = np.exp(1j * theta)
    return MobiusMap.from_matrix(np.array([[e, -e * a], [-np.conj(a), 1]]), domain)


def density(domain, z):
    z = np.asarray(z, dtype=complex)
    if domain == "disk":
        t = 1 - np.abs(z) ** 2
        if np.any(t <= 0):
            raise DomainError("point not inside the unit disk")
        return 2 / t
    if domain == "exterior":
        t = np.abs(z) ** 2 - 1
        if np.any(t <= 0) or np.any(~np.isfinite(z)):
            raise DomainError("point not in the exterior disk")
        return 2 / t
    if domain == "halfplane":
        if np.any(z.imag <= 0):
            raise DomainError("point not in the upper half-plane")
        return 1 / z.imag
    raise DomainError(f"unknown domain {domain!r}")


def _field_values(phi, z):
    f = getattr(phi, "at", None)
    return f(z) if f is not None else phi(z)


def pullback(phi, gamma, z=None):
    """(gamma^* phi)(z) = phi(gamma z) gamma'(z)^2.

    With z given, returns values there; otherwise a field on phi's grid."""
    if gamma.domain not in ("exterior", "disk") or not gamma.preserves("exterior"):
        raise DomainError("pullback needs a map preserving the exterior disk")
    if z is not None:
        z = np.asarray(z, dtype=complex)
        return _field_values(phi, gamma(z)) * gamma.deriv(z) ** 2
    from .fields import HolomorphicField
    return HolomorphicField.from_func(lambda w: _field_values(phi, gamma(w)) * gamma.deriv(w) ** 2,
                                      phi.grid)


class HalfPlaneField:
    """h_* psi on the upper half-plane."""

    def __init__(self, psi, h):
        self.psi = psi
        self.h = h
        self.hinv = h.inverse()

    def at(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        return _field_values(self.psi, self.hinv(zeta)) * self.hinv.deriv(zeta) ** 2

    __call__ = at


def halfplane_transfer(psi, h):
    hi = h.inverse()
    probe = np.array([3.0, -2.5j, 1.7 + 1.7j])
    if np.any(np.abs(hi(1j * np.array([0.5, 1.0, 2.0]))) <= 1) or np.any(h(probe).imag <= 0):
        raise DomainError("h does not carry the exterior disk to the upper half-plane")
    return HalfPlaneField(psi, h)


def halfplane_inverse(psit, h):
    """Inverse transfer back to the exterior disk: psi(z) = psit(h z) h'(z)^2."""
    class _F:
        def at(self, z):
            z = np.asarray(z, dtype=complex)
            return _field_values(psit, h(z)) * h.deriv(z) ** 2
        __call__ = at
    return _F()
