"""p-integrable tangent norms, distance bounds and the randomized inequality suite."""
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .bers import aw_section, bers_projection, d0_phi
from .fields import (BeltramiField, DiskGrid, HolomorphicField, LaurentSeries, NormReport, _tail,
                     embedding_constant, lp_norm_hyperbolic, sup_norm_weighted)
from .moebius import DomainError
from .solver import SelfMap, r_translate, solver_grid


class PreconditionError(ValueError):
    pass


class SubdivisionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Constants:
    p: float = 2.0
    delta0: float = 0.25

    @property
    def c_p(self):
        return embedding_constant(self.p)

    @property
    def delta_p(self):
        return self.delta0 / self.c_p


CERTIFIED = {"cui": 3.0, "c-y": 24.0, "derivative_upper": 16.0, "derivative_inverse": 128.0,
             "sandwich_lower": 1 / 128.0, "sandwich_upper": 16.0, "embedding": None, "nehari": 1.5}
RATIO_TOL = 1.01


def sup(fld):
    """Sup norm: plain for Beltrami coefficients, rho^-2 weighted for quadratic differentials."""
    return sup_norm_weighted(fld, 0 if isinstance(fld, BeltramiField) else -2).value


def teich_distance(mu1, mu2):
    """log((1 + k)/(1 - k)), k = ||(mu1 - mu2)/(1 - conj(mu2) mu1)||_inf at the given representatives."""
    a = mu1.values
    b = mu2.on(mu1.grid).values
    k1 = np.abs((a - b) / (1 - np.conj(b) * a)).max()
    k2 = np.abs((b - a) / (1 - np.conj(a) * b)).max()
    k = float(max(k1, k2))
    if k >= 1:
        raise DomainError("coefficients must have sup norm below 1")
    return float(np.log((1 + k) / (1 - k)))


def _hyperbolic_ring_area(grid):
    # exact integral of rho^2 over each ring (per node)
    e = grid.edges / grid.radius
    lo, hi = e[:-1], e[1:]
    with np.errstate(divide="ignore"):
        a = 4 * np.pi * (1 / (1 - hi ** 2) - 1 / (1 - lo ** 2))
    return a / grid.M


def _integral_rho2(vals, grid):
    """Integral of vals * rho^2 over the disk truncated at the grid cutoff, with a tail estimate."""
    n = grid.nrings - (1 if grid.closed else 0)
    wa = _hyperbolic_ring_area(grid)[:n]
    rings = (vals[:n] * wa[:, None]).sum(axis=1)
    return float(rings.sum()), _tail(grid, rings)


def k_p_functional(mu, p=2):
    """(int (|mu|^2/(1 - |mu|^2))^(p/2) rho^2 dA)^(1/p) at the given representative."""
    m2 = np.abs(mu.values) ** 2
    total, tail = _integral_rho2((m2 / (1 - m2)) ** (p / 2), mu.grid)
    return NormReport(total ** (1 / p), f"k_p({p:g})", mu.grid.cutoff,
                      tail ** (1 / p) if np.isfinite(tail) else tail)


def cy_functional(mu, nu, p=2):
    """(int (|mu - nu|^2 / ((1 - |mu|^2)(1 - |nu|^2)))^(p/2) rho^2 dA)^(1/p)."""
    a, b = mu.values, nu.on(mu.grid).values
    q = np.abs(a - b) ** 2 / ((1 - np.abs(a) ** 2) * (1 - np.abs(b) ** 2))
    total, tail = _integral_rho2(q ** (p / 2), mu.grid)
    return NormReport(total ** (1 / p), f"cy({p:g})", mu.grid.cutoff,
                      tail ** (1 / p) if np.isfinite(tail) else tail)


def pnorm(phi, p):
    return lp_norm_hyperbolic(phi, p).value


# ---- derivative chain ---------------------------------------------------------------

class _Identity:
    def __init__(self, grid):
        self.grid = grid
        self.f = grid.z
        self.fz = np.ones(grid.shape, complex)
        self.fzb = np.zeros(grid.shape, complex)


def _pushforward_moments(lam, nu_vals, F, nmax):
    """m_n = int mu'(w) w^n dA(w) for mu' = d r(lam), by the change of variables w = F(z)."""
    g = F.grid
    J = np.abs(F.fz) ** 2 - np.abs(F.fzb) ** 2
    a = lam / (1 - np.abs(nu_vals) ** 2) * F.fz / np.conj(F.fz) * J * g.w
    a = a.ravel()
    w = F.f.ravel()
    m = np.empty(nmax + 1, complex)
    pw = np.ones_like(w)
    for n in range(nmax + 1):
        m[n] = np.dot(a, pw)
        pw = pw * w
    return m


def dr_star(phi, psi, p=2, grid=None, selfmap=None, delta0=0.25):
    """Derivative of the reflection-translation chain at phi applied to psi.

    lam = d sigma(psi), then lam/(1 - |nu|^2) F_z/conj(F_z) pushed to w = F(z) with
    F the self-map for nu = sigma(phi), then d0 Phi.  Returns a HolomorphicField."""
    g = solver_grid(grid if grid is not None else psi.grid)
    if sup(phi) > delta0 * (1 + 1e-9):
        raise PreconditionError(f"||phi|| = {sup(phi):.4g} exceeds delta0 = {delta0}")
    nu = aw_section(phi, g)
    F = selfmap
    if F is None:
        F = _Identity(g) if nu.sup == 0 else SelfMap(nu, g)
    lam = aw_section(psi, g, check=False).values
    if not np.any(lam):
        return HolomorphicField.zero(g)
    nmax = g.M // 2
    m = _pushforward_moments(lam, nu.values, F, nmax)
    n = np.arange(nmax + 1)
    c = -(6 / np.pi) * comb(n + 3, 3) * m
    return HolomorphicField.from_laurent(LaurentSeries(c, 4).truncated(1e-17), g)


def _lin(phi0, phi1, t):
    return phi0.scaled(1 - t) + phi1.scaled(t)


def segment_length(phi0, phi1, p=2, m=8, grid=None, delta0=0.25):
    """Gauss-Legendre quadrature of t -> ||dr_star(phi_t, phi1 - phi0)||_p over [0, 1]."""
    for ph in (phi0, phi1):
        if sup(ph) > delta0:
            raise PreconditionError("segment leaves the delta0 ball")
    d = phi1 - phi0
    if sup(d) == 0:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(m)
    t = 0.5 * (x + 1)
    vals = [pnorm(dr_star(_lin(phi0, phi1, tk), d, p, grid, delta0=delta0), p) for tk in t]
    return float(0.5 * np.dot(w, vals))


@dataclass
class SubdivisionTrace:
    n: int
    t: np.ndarray
    phis: list
    norms: list
    sup_norms: list
    step_sup: list
    bound: float
    step_limit: float = 0.0

    def summary(self):
        return dict(n=self.n, t=[float(v) for v in self.t], step_p_norms=[float(v) for v in self.norms],
                    step_sup_norms=[float(v) for v in self.sup_norms],
                    step_dilatation_sup=[float(v) for v in self.step_sup], step_limit=self.step_limit,
                    bound=self.bound)


def subdivision_count(k, delta0=0.25):
    """Smallest n with n > 3k / (2 delta0 (1 - k^2))."""
    thr = 3 * k / (2 * delta0 * (1 - k * k))
    return max(1, int(np.floor(thr)) + 1)


def wp_upper_bound_subdivision(mu, p=2, delta0=0.25, grid=None):
    g = solver_grid(grid if grid is not None else mu.grid)
    mu = mu.on(g)
    k = mu.sup
    if k > 0.5:
        raise PreconditionError("subdivision bound needs ||mu|| <= 0.5")
    if k == 0:
        return SubdivisionTrace(1, np.array([0.0, 1.0]), [], [], [], [], 0.0)
    n = subdivision_count(k, delta0)
    t = np.arange(n + 1) / n
    limit = k / (n * (1 - k * k))
    phis, norms, sups, rs = [], [], [], []
    for i in range(1, n + 1):
        target = mu.scaled(t[i])
        if i == 1:
            r = target
        else:
            r = r_translate(mu.scaled(t[i - 1]), target)
        rs.append(r.sup)
        if r.sup > limit * (1 + 1e-6) + 1e-9:
            raise SubdivisionError(f"step {i}: ||r|| = {r.sup:.4g} exceeds {limit:.4g}")
        phi = bers_projection(r, g)
        s = sup(phi)
        if s >= delta0:
            raise SubdivisionError(f"step {i}: ||phi_i|| = {s:.4g} not below {delta0}; use a larger n")
        phis.append(phi)
        norms.append(pnorm(phi, p))
        sups.append(s)
    return SubdivisionTrace(n, t, phis, norms, sups, rs, float(16 * sum(norms)), limit)


# ---- random test data ---------------------------------------------------------------

def random_beltrami(rng, grid, amplitude, s=1.0, degree=3):
    """Boundary-vanishing smooth coefficient: (1 - |z|^2)^s times a random polynomial in z, conj(z)."""
    terms = [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]
    c = rng.standard_normal(len(terms)) + 1j * rng.standard_normal(len(terms))

    def shape(z):
        z = np.asarray(z, complex)
        out = np.zeros(z.shape, complex)
        for (a, b), ck in zip(terms, c):
            out += ck * z ** a * np.conj(z) ** b
        return out * np.clip(1 - np.abs(z) ** 2, 0, None) ** s

    scale = amplitude / np.abs(shape(grid.z)).max()
    f = lambda z: scale * shape(z)
    return BeltramiField.from_func(f, grid)


def random_differential(rng, grid, size, kmin=4, kmax=9):
    """Random polynomial in 1/z from z^-kmin, scaled to the given rho^-2 weighted sup."""
    c = (rng.standard_normal(kmax - kmin + 1) + 1j * rng.standard_normal(kmax - kmin + 1))
    c /= np.arange(kmin, kmax + 1)
    s = LaurentSeries(c, kmin)
    phi = HolomorphicField.from_laurent(s, grid)
    return phi.scaled(size / sup(phi))


# ---- the suite ----------------------------------------------------------------------

DEFAULT_SUITE = dict(seed=0, mu_trials=40, psi_trials=10, pairs=3, report_trials=3, p_list=[2, 3],
                     amplitude=0.3, envelopes=[0.5, 1.0],
                     resolution=dict(k=10, M=256, per_octave=8, inner=16), quadrature_nodes=8,
                     derivative_base=0.05, alpha=0.5, epsilon=0.1)


@dataclass
class Trial:
    inequality: str
    p: float
    lhs: float
    rhs: float
    certified: bool
    note: str = ""

    @property
    def ratio(self):
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else float("inf"))


def _envelope_for(p, envelopes):
    # (1 - |z|^2)^s makes the p-integrals finite only when p s > 1
    ok = [s for s in envelopes if p * s > 1]
    return ok or [1.0]


def inequality_suite(config=None, out_dir=None, log=None):
    cfg = dict(DEFAULT_SUITE)
    cfg.update(config or {})
    rng = np.random.default_rng(cfg["seed"])
    grid = DiskGrid(closed=True, **cfg["resolution"])
    trials = []
    say = log or (lambda *a: None)

    # Bers projection bounds on random coefficients
    for i in range(cfg["mu_trials"]):
        amp = cfg["amplitude"] * rng.uniform(0.2, 1.0)
        envs = cfg["envelopes"]
        s = envs[i % len(envs)]
        mu = random_beltrami(rng, grid, amp, s)
        phi = bers_projection(mu, grid)
        trials.append(Trial("nehari", 0, sup(phi), 1.5 * mu.sup, True))
        phi_nu = random_differential(rng, grid, rng.uniform(0.02, 0.2))
        nu = aw_section(phi_nu, grid)
        Phi_nu = bers_projection(nu, grid)
        for p in cfg["p_list"]:
            if s not in _envelope_for(p, envs):
                continue
            trials.append(Trial("cui", p, pnorm(phi, p), 3 * k_p_functional(mu, p).value, True))
            trials.append(Trial("c-y", p, pnorm(phi - Phi_nu, p), 24 * cy_functional(mu, nu, p).value, True))
            trials.append(Trial("embedding", p, sup(phi), embedding_constant(p) * pnorm(phi, p), True))
        say(f"mu trial {i + 1}/{cfg['mu_trials']}")

    # derivative bounds at a fixed base point
    base = HolomorphicField.from_func(lambda z, c=cfg["derivative_base"]: c * z ** -4.0, grid)
    F = SelfMap(aw_section(base, grid), grid)
    for j in range(cfg["psi_trials"]):
        psi = random_differential(rng, grid, rng.uniform(0.01, 0.1))
        out = dr_star(base, psi, grid=grid, selfmap=F)
        for p in cfg["p_list"]:
            a, b = pnorm(out, p), pnorm(psi, p)
            trials.append(Trial("derivative_upper", p, a, 16 * b, True))
            trials.append(Trial("derivative_inverse", p, b, 128 * a, True))
            trials.append(Trial("embedding", p, sup(psi), embedding_constant(p) * b, True))
        say(f"psi trial {j + 1}/{cfg['psi_trials']}")

    # distance sandwich on pairs inside the delta_p/3 ball
    for j in range(cfg["pairs"]):
        p = cfg["p_list"][j % len(cfg["p_list"])]
        lim = Constants(p).delta_p / 3
        ends = []
        for _ in range(2):
            ph = random_differential(rng, grid, 1.0)
            ends.append(ph.scaled(rng.uniform(0.2, 0.9) * lim / pnorm(ph, p)))
        L = segment_length(ends[0], ends[1], p, cfg["quadrature_nodes"], grid)
        d = pnorm(ends[1] - ends[0], p)
        trials.append(Trial("sandwich_lower", p, d / 128, L, True))
        trials.append(Trial("sandwich_upper", p, L, 16 * d, True))
        say(f"pair {j + 1}/{cfg['pairs']}")

    # estimates with unspecified constants: ratios only
    a, eps = cfg["alpha"], cfg["epsilon"]
    for j in range(cfg["report_trials"]):
        nu = random_beltrami(rng, grid, 0.15, 1.0)
        mu2 = random_beltrami(rng, grid, 0.15, 1.0)
        mu1 = BeltramiField.from_func(lambda z, f=mu2.func, g=random_beltrami(rng, grid, 0.05, 1.0).func:
                                      f(z) + g(z), grid)
        dmu = sup_norm_weighted(mu1 - mu2, a).value
        trials.append(Trial("modification", a, sup_norm_weighted(bers_projection(mu1, grid) - bers_projection(mu2, grid), -2 + a - eps).value,
                            dmu, False))
        Fn = SelfMap(nu, grid)
        r1, r2 = r_translate(nu, mu1, Fn), r_translate(nu, mu2, Fn)
        trials.append(Trial("cancel", a, sup_norm_weighted(r1 - r2, a - eps).value, dmu, False))
        trials.append(Trial("base", a, sup_norm_weighted(bers_projection(r1, grid) - bers_projection(r2, grid), -2 + a - eps).value,
                            dmu, False))
        say(f"report trial {j + 1}/{cfg['report_trials']}")

    report = _summarize(trials, cfg)
    if out_dir is not None:
        write_suite(out_dir, report, trials)
    return report, trials


def _summarize(trials, cfg):
    rows = {}
    for t in trials:
        key = (t.inequality, t.p)
        rows.setdefault(key, []).append(t)
    out = []
    for (name, p), ts in sorted(rows.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        r = np.array([t.ratio for t in ts])
        entry = dict(inequality=name, p=p, trials=len(ts), certified=ts[0].certified,
                     max_ratio=float(r.max()), median_ratio=float(np.median(r)), min_ratio=float(r.min()))
        if ts[0].certified:
            entry["passed"] = bool(r.max() <= RATIO_TOL)
        out.append(entry)
    ok = all(e.get("passed", True) for e in out)
    return dict(schema="inequality-suite/1", config=cfg, results=out, all_certified_pass=ok)


def write_suite(out_dir, report, trials):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "suite.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
    with open(os.path.join(out_dir, "suite_ratios.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["inequality", "p", "lhs", "rhs", "ratio", "certified"])
        for t in trials:
            w.writerow([t.inequality, t.p, repr(t.lhs), repr(t.rhs), repr(t.ratio), int(t.certified)])
