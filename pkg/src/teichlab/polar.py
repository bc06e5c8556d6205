"""Cauchy and Beurling transforms of fields supported in a disk, computed mode by mode.

For h = a(r) e^{i m t} supported in |z| < 1,

    C h = 2 r I_m(r) e^{i (m-1) t},      S h = (a + 2 (m-1) I_m(r)) e^{i (m-2) t},

with I_m(r) = int_0^r a(s) (s/r)^(2-m) ds/s for m <= 0 and
I_m(r) = -int_r^1 a(s) (r/s)^(m-2) ds/s for m >= 1.  The radial integrals use
exact kernel weights on each ring with a piecewise-linear model of a.
"""
import numpy as np


def _w(t, q):
    # int (s/hi)^q ds/s over [lo, hi], t = lo/hi; same value for the (lo/s)^q form
    q = np.asarray(q, float)
    t = np.asarray(t, float)
    qs = np.where(q == 0, 1.0, q)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = -np.log(np.where(t > 0, t, 1.0))
        return np.where(q == 0, lg, (1 - t ** q) / qs)


class PolarOps:
    def __init__(self, grid):
        self.grid = grid
        R = grid.radius
        e = grid.edges / R
        r = grid.r / R
        self.e, self.r = e, r
        M = grid.M
        self.M = M
        self.m = np.rint(np.fft.fftfreq(M, 1.0 / M)).astype(int)
        self.ph = np.exp(-1j * np.pi * self.m / M)
        self.neg = self.m <= 0
        self.pos = ~self.neg
        Nr = len(r)
        qn = (2 - self.m[self.neg]).astype(float)[None, :]
        lo, mid, hi = e[:-1, None], r[:, None], e[1:, None]
        # m <= 0
        t = lo / mid
        self.P1 = t ** qn
        W0 = _w(t, qn)
        W1 = mid * _w(t, qn + 1)
        self.U0, self.U1 = W0, W1 - mid * W0
        t = lo / hi
        self.P2 = t ** qn
        W0 = _w(t, qn)
        W1 = hi * _w(t, qn + 1)
        self.V0, self.V1 = W0, W1 - mid * W0
        # m >= 1
        qp = (self.m[self.pos] - 2).astype(float)[None, :]
        t = mid / hi
        self.Q1 = t ** qp
        W0 = _w(t, qp)
        W1 = mid * _w(t, qp - 1)
        self.X0, self.X1 = W0, W1 - mid * W0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(lo > 0, lo / hi, 1.0)
            self.Q2 = np.where(lo > 0, t ** qp, 0.0)
            W0 = _w(t, qp)
            W1 = lo * _w(t, qp - 1)
            self.Y0 = np.where(lo > 0, W0, 0.0)
            self.Y1 = np.where(lo > 0, W1 - mid * W0, 0.0)
        self.Nr = Nr
        self.area = np.pi * (e[1:] ** 2 - e[:-1] ** 2)  # ring areas, unit radius

    def modes(self, a):
        return np.fft.fft(a, axis=1) / self.M * self.ph

    def synth(self, B, shift):
        mm = self.m + shift
        C = np.zeros_like(B)
        C[:, mm % self.M] = B * np.exp(1j * np.pi * mm / self.M)
        return np.fft.ifft(C, axis=1) * self.M

    def radial(self, A):
        """I_m on the nodes, plus the full-disk integrals for m <= 0."""
        D = np.gradient(A, self.r, axis=0)
        I = np.empty_like(A)
        An, Dn = A[:, self.neg], D[:, self.neg]
        In = np.empty_like(An)
        acc = np.zeros(An.shape[1], complex)
        for j in range(self.Nr):
            In[j] = acc * self.P1[j] + An[j] * self.U0[j] + Dn[j] * self.U1[j]
            acc = acc * self.P2[j] + An[j] * self.V0[j] + Dn[j] * self.V1[j]
        I[:, self.neg] = In
        full = acc
        Ap, Dp = A[:, self.pos], D[:, self.pos]
        Ip = np.empty_like(Ap)
        acc = np.zeros(Ap.shape[1], complex)
        for j in range(self.Nr - 1, -1, -1):
            Ip[j] = -(acc * self.Q1[j] + Ap[j] * self.X0[j] + Dp[j] * self.X1[j])
            acc = acc * self.Q2[j] + Ap[j] * self.Y0[j] + Dp[j] * self.Y1[j]
        I[:, self.pos] = Ip
        return I, full

    def beurling(self, a):
        A = self.modes(a)
        I, _ = self.radial(A)
        return self.synth(A + 2 * (self.m - 1) * I, -2)

    def cauchy(self, a, with_moments=False):
        A = self.modes(a)
        I, full = self.radial(A)
        out = self.synth(2 * self.r[:, None] * I, -1) * self.grid.radius
        if not with_moments:
            return out
        # exterior coefficients: f = z + sum_n b_n z^-n with b_n = 2 int a_{1-n}(s) s^n ds
        mneg = self.m[self.neg]
        n = 1 - mneg
        order = np.argsort(n)
        b = 2 * full[order] * self.grid.radius ** (n[order] + 1)
        return out, b

    def center_value(self, a):
        """Cauchy transform at the origin, -(1/pi) int a/zeta dA."""
        g = self.grid
        return complex(-np.sum(a * g.w / g.z) / np.pi)
