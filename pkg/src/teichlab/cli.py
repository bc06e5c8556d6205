"""Command-line driver: each subcommand runs one experiment and writes a hashed run record."""
import csv
import hashlib
import json
import os
import sys
import time

import click
import numpy as np

from . import __version__
from . import bers, circle, fields, rigidity, solver, wp
from .fields import BeltramiField, DiskGrid, HolomorphicField, sup_norm_weighted
from .moebius import hyperbolic, pullback

SCHEMA = "teichlab-run/1"
EXIT_OK, EXIT_INEQUALITY, EXIT_CONVERGENCE, EXIT_CONFIG = 0, 2, 3, 4
MAX_K, MAX_GRID = 16, 4096


class ConfigError(ValueError):
    pass


# ---- configuration ---------------------------------------------------------------

DEFAULTS = {
    "solve": dict(mu=dict(kind="constant", k=0.3), n=1024, half_width=2.5, tol=1e-10, maxit=200),
    "bers": dict(mu=dict(kind="constant", k=0.2), resolution=dict(k=14, M=1024, per_octave=16, inner=32)),
    "aw": dict(c=0.1, resolution=dict(k=14, M=1024, per_octave=16, inner=32)),
    "rigidity": dict(lam=0.25, alpha=0.5, rel_tol=1e-10, radius=0.05,
                     resolution=dict(k=10, M=256, per_octave=8, inner=16)),
    "wp-bound": dict(mu=dict(kind="bump", k=0.3, power=2), p=2, delta0=0.25,
                     resolution=dict(k=10, M=256, per_octave=8, inner=16)),
    "qs": dict(map=dict(name="sine", amp=0.1), ladder=12, samples=4096),
    "cocycle": dict(map=dict(name="sine", amp=0.05), n=4096, eps=1e-3),
    "verify": dict(wp.DEFAULT_SUITE),
}


def _merge(base, extra):
    out = dict(base)
    for key, val in (extra or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _check_positive(cfg, keys):
    for k in keys:
        if k in cfg and not (isinstance(cfg[k], (int, float)) and cfg[k] > 0):
            raise ConfigError(f"{k} must be positive")


def validate(cmd, cfg):
    res = cfg.get("resolution")
    if res is not None:
        if not 1 <= int(res.get("k", 14)) <= MAX_K:
            raise ConfigError(f"resolution k must lie in 1..{MAX_K}")
        for key in ("M", "per_octave", "inner"):
            v = int(res.get(key, 2))
            if v < 2 or v > MAX_GRID:
                raise ConfigError(f"resolution {key} must lie in 2..{MAX_GRID}")
        if int(res.get("M", 2)) % 2:
            raise ConfigError("angle count M must be even")
    for key in ("n", "samples"):
        if key in cfg and not 2 <= int(cfg[key]) <= MAX_GRID:
            raise ConfigError(f"{key} must lie in 2..{MAX_GRID}")
    _check_positive(cfg, ["maxit", "tol", "rel_tol", "half_width", "eps", "lam", "alpha", "delta0", "radius", "p"])
    if "lam" in cfg and not cfg["lam"] < 1:
        raise ConfigError("multiplier must lie in (0, 1)")
    if cmd == "verify":
        for key in ("mu_trials", "psi_trials", "pairs", "report_trials"):
            if int(cfg[key]) < 0:
                raise ConfigError(f"{key} must be non-negative")
        if any(p < 2 or p > 4 for p in cfg["p_list"]):
            raise ConfigError("p must lie in [2, 4]")
    return cfg


def load_config(cmd, path, seed, resolution, threads):
    cfg = dict(DEFAULTS[cmd])
    if path:
        try:
            with open(path) as fh:
                cfg = _merge(cfg, json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
    if seed is not None:
        cfg["seed"] = seed
    cfg.setdefault("seed", 0)
    if resolution is not None:
        if "resolution" in cfg:
            cfg["resolution"] = dict(cfg["resolution"], k=resolution)
        else:
            raise ConfigError(f"{cmd} has no polar resolution")
    if cmd == "verify":
        # shorthand keys
        if "trials" in cfg:
            cfg["mu_trials"] = cfg["psi_trials"] = int(cfg.pop("trials"))
        if "p" in cfg:
            cfg["p_list"] = [cfg.pop("p")]
    cfg["threads"] = threads
    return validate(cmd, cfg)


def grid_from(cfg):
    return DiskGrid(closed=True, **cfg["resolution"])


def make_mu(desc, grid):
    kind, k = desc.get("kind", "constant"), float(desc.get("k", 0.0))
    if kind == "constant":
        f = lambda z: k + 0 * z
    elif kind == "disk":
        r = float(desc.get("radius", 0.5))
        f = lambda z: np.where(np.abs(z) <= r, k, 0) + 0j
    elif kind == "bump":
        s = float(desc.get("power", 1))
        f = lambda z: k * (1 - np.abs(z) ** 2) ** s + 0j
    elif kind == "random":
        rng = np.random.default_rng(int(desc.get("seed", 0)))
        return wp.random_beltrami(rng, grid, k, float(desc.get("power", 1.0)))
    else:
        raise ConfigError(f"unknown coefficient kind {kind!r}")
    return BeltramiField.from_func(f, grid)


def make_circle_map(desc):
    desc = dict(desc)
    if "csv" in desc:
        return circle.read_csv(desc["csv"])
    name = desc.pop("name")
    try:
        return circle.builtin(name, **desc)
    except (KeyError, TypeError) as exc:
        raise ConfigError(str(exc))


# ---- run records ------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def payload_hash(subcommand, config, outputs):
    blob = json.dumps(_clean(dict(schema=SCHEMA, subcommand=subcommand, config=config, outputs=outputs)),
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def make_record(subcommand, config, outputs, passed, timings):
    h = payload_hash(subcommand, config, outputs)
    return _clean(dict(schema=SCHEMA, version=__version__, subcommand=subcommand, config=config,
                       outputs=outputs, passed=passed, timings=timings, hash=h))


def run_dir(out, record):
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    d = os.path.join(out, f"{stamp}-{record['hash'][:12]}")
    os.makedirs(d, exist_ok=True)
    return d


def write_tidy(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# ---- experiments ------------------------------------------------------------------

def _fd_dilatation(sol):
    """Dilatation of the computed map by central differences (independent of the solver's f_z)."""
    h = sol.x[1] - sol.x[0]
    f = sol.f
    fx = (f[2:, 1:-1] - f[:-2, 1:-1]) / (2 * h)
    fy = (f[1:-1, 2:] - f[1:-1, :-2]) / (2 * h)
    fz = 0.5 * (fx - 1j * fy)
    fzb = 0.5 * (fx + 1j * fy)
    return fzb / fz


def exp_solve(cfg, files):
    desc = cfg["mu"]
    kind, k = desc.get("kind", "constant"), float(desc.get("k", 0.3))
    if kind == "constant":
        mu = lambda z: np.where(np.abs(z) < 1, k, 0) + 0j
        jump = 1.0
    elif kind == "bump":
        s = float(desc.get("power", 1))
        mu = lambda z: np.where(np.abs(z) < 1, k * np.clip(1 - np.abs(z) ** 2, 0, None) ** s, 0) + 0j
        jump = None
    else:
        raise ConfigError("solve supports mu kinds 'constant' and 'bump'")
    sol = solver.solve_principal(mu, n=int(cfg["n"]), half_width=float(cfg["half_width"]), tol=float(cfg["tol"]),
                                 maxit=int(cfg["maxit"]), jump_radius=jump, workers=cfg.get("threads"))
    out = dict(sol.diagnostics())
    Z = sol.z
    if kind == "constant":
        exact = np.where(np.abs(Z) <= 1, Z + k * np.conj(Z), Z + k / Z)
        out["sup_error"] = float(np.max(np.abs(sol.f - exact)))
        passed = out["sup_error"] < 1e-3
    else:
        d = _fd_dilatation(sol)
        zi = Z[1:-1, 1:-1]
        inner = np.abs(zi) <= 0.9
        out["roundtrip_error"] = float(np.max(np.abs(d - mu(zi))[inner]))
        passed = out["roundtrip_error"] < 1e-2
    x = sol.x
    mid = len(x) // 2
    files["profile.csv"] = (["x", "re_f", "im_f"], [(x[i], sol.f[i, mid].real, sol.f[i, mid].imag)
                                                   for i in range(0, len(x), max(1, len(x) // 256))])
    return out, passed


def _closed_form_coeffs(k, K):
    # -6k/(z^2 - k)^2 = -6k sum (j + 1) k^j z^(-4 - 2j)
    c = np.zeros(K, complex)
    for j in range((K + 1) // 2):
        if 2 * j < K:
            c[2 * j] = -6 * k * (j + 1) * k ** j
    return c


def exp_bers(cfg, files):
    g = grid_from(cfg)
    mu = make_mu(cfg["mu"], g)
    phi = bers.bers_projection(mu, g)
    s = phi.laurent
    out = dict(order=int(s.order), sup_norm=sup_norm_weighted(phi, -2).value,
               coefficients=[[int(kk), float(c.real), float(c.imag)] for kk, c in zip(s.powers()[:12], s.coeffs[:12])])
    passed = True
    if cfg["mu"].get("kind", "constant") == "constant":
        k = float(cfg["mu"]["k"])
        ex = HolomorphicField.from_func(lambda z: -6 * k / (z ** 2 - k) ** 2, g)
        out["weighted_sup_error"] = sup_norm_weighted(phi - ex, -2).value
        K = min(len(s.coeffs), 40)
        out["coefficient_error"] = float(np.max(np.abs(s.coeffs[:K] - _closed_form_coeffs(k, K))))
        passed = out["weighted_sup_error"] < 1e-4 and out["coefficient_error"] < 1e-4
    files["laurent.csv"] = (["k", "re", "im"], [(int(kk), c.real, c.imag) for kk, c in zip(s.powers(), s.coeffs)])
    return out, passed


def exp_aw(cfg, files):
    g = grid_from(cfg)
    c = float(cfg["c"])
    phi = HolomorphicField.from_func(lambda z: c * z ** -4.0, g)
    mu = bers.aw_section(phi, g)
    back = bers.bers_projection(mu, g)
    n = sup_norm_weighted(phi, -2).value
    err = sup_norm_weighted(back - phi, -2).value
    out = dict(phi_sup=n, sigma_sup=mu.sup, relative_roundtrip_error=err / n)
    return out, bool(err <= 0.02 * n)


def exp_rigidity(cfg, files):
    g = grid_from(cfg)
    gam = hyperbolic(float(cfg["lam"]))
    phi0 = HolomorphicField.from_func(lambda z: z ** -4.0, g)
    psi = HolomorphicField.from_func(lambda z: pullback(phi0, gam, z) - z ** -4.0, g)
    out = {}
    passed = True
    for direction in rigidity.DIRECTIONS:
        res = rigidity.orbit_series(psi, gam, float(cfg["alpha"]), direction, float(cfg["rel_tol"]))
        r = rigidity.coboundary_residual(res.phi, gam, psi, float(cfg["radius"]))
        cert = res.certificate(r)
        out[direction] = cert
        passed &= r <= res.tail + 1e-8
        files[f"certificate_{direction}.json"] = cert
    return out, bool(passed)


def exp_wp(cfg, files):
    g = grid_from(cfg)
    mu = make_mu(cfg["mu"], g)
    p, d0 = float(cfg["p"]), float(cfg["delta0"])
    tr = wp.wp_upper_bound_subdivision(mu, p, d0, g)
    out = tr.summary()
    out["threshold"] = 3 * mu.sup / (2 * d0 * (1 - mu.sup ** 2))
    Phi = bers.bers_projection(mu, g)
    out["lower_bound"] = wp.pnorm(Phi, p) / 128
    if wp.sup(Phi) <= d0:
        out["single_segment"] = wp.segment_length(HolomorphicField.zero(g), Phi, p, grid=g, delta0=d0)
    passed = out["bound"] >= out.get("single_segment", 0) and out["bound"] >= out["lower_bound"]
    files["subdivision.csv"] = (["step", "t", "p_norm", "sup_norm"],
                                [(i + 1, tr.t[i + 1], a, b) for i, (a, b) in enumerate(zip(tr.norms, tr.sup_norms))])
    return out, bool(passed)


def exp_qs(cfg, files):
    g = make_circle_map(cfg["map"])
    ts = 2.0 ** -np.arange(1, int(cfg["ladder"]) + 1)
    x = np.arange(int(cfg["samples"])) / int(cfg["samples"])
    prof = [circle.symmetry_modulus(g, t, x) for t in ts]
    qmax = [float(np.max(circle.qs_quotient(g, x, t))) for t in ts]
    out = dict(ladder=[float(t) for t in ts], symmetry_modulus=prof, quotient_max=qmax)
    files["symmetry_profile.csv"] = (["t", "symmetry_modulus", "quotient_max"], list(zip(ts, prof, qmax)))
    return out, True


def exp_cocycle(cfg, files):
    g = make_circle_map(cfg["map"])
    r = circle.liouville_norm(g, int(cfg["n"]), float(cfg["eps"]))
    return dict(value=r.value, band=r.band, eps=r.eps, n=r.n), True


def exp_verify(cfg, files):
    suite_cfg = {k: v for k, v in cfg.items() if k in wp.DEFAULT_SUITE}
    suite_cfg["seed"] = cfg["seed"]
    report, trials = wp.inequality_suite(suite_cfg)
    files["suite.json"] = report
    files["suite_ratios.csv"] = (["inequality", "p", "lhs", "rhs", "ratio", "certified"],
                                 [(t.inequality, t.p, t.lhs, t.rhs, t.ratio, int(t.certified)) for t in trials])
    return dict(results=report["results"]), bool(report["all_certified_pass"])


EXPERIMENTS = {"solve": exp_solve, "bers": exp_bers, "aw": exp_aw, "rigidity": exp_rigidity,
               "wp-bound": exp_wp, "qs": exp_qs, "cocycle": exp_cocycle, "verify": exp_verify}


def run(subcommand, config, out=None):
    """Execute one experiment; returns the run record (and writes it under `out`)."""
    files = {}
    t0 = time.perf_counter()
    outputs, passed = EXPERIMENTS[subcommand](config, files)
    timings = dict(wall_seconds=time.perf_counter() - t0)
    record = make_record(subcommand, config, outputs, bool(passed), timings)
    if out is not None:
        d = run_dir(out, record)
        for name, content in files.items():
            path = os.path.join(d, name)
            if name.endswith(".csv"):
                write_tidy(path, *content)
            else:
                with open(path, "w") as fh:
                    json.dump(_clean(content), fh, indent=2, sort_keys=True)
        with open(os.path.join(d, "record.json"), "w") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
        record["run_dir"] = d
    return record


# ---- click wiring -----------------------------------------------------------------

def _common(f):
    f = click.option("--json", "as_json", is_flag=True, help="Print the run record as JSON.")(f)
    f = click.option("--threads", type=int, default=None, help="FFT worker threads.")(f)
    f = click.option("--resolution", type=int, default=None, help="Polar grid cutoff k (rings to 1 - 2^-k).")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for run outputs.")(f)
    f = click.option("--seed", type=int, default=None)(f)
    f = click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")(f)
    return f


def _execute(cmd, config_path, seed, out, resolution, threads, as_json):
    cfg = load_config(cmd, config_path, seed, resolution, threads)
    rec = run(cmd, cfg, out)
    if as_json:
        click.echo(json.dumps(rec, sort_keys=True))
    else:
        click.echo(f"{cmd}: {'pass' if rec['passed'] else 'FAIL'}  hash={rec['hash'][:16]}"
                   + (f"  dir={rec['run_dir']}" if "run_dir" in rec else ""))
        for key, val in rec["outputs"].items():
            if isinstance(val, (int, float, str)):
                click.echo(f"  {key} = {val}")
    if not rec["passed"] and cmd == "verify":
        raise SystemExit(EXIT_INEQUALITY)
    return rec


@click.group()
@click.version_option(__version__)
def main():
    """Quasiconformal maps, Bers coordinates and Weil-Petersson bounds."""


def _register(name, doc):
    @_common
    def cmd(config_path, seed, out, resolution, threads, as_json):
        _execute(name, config_path, seed, out, resolution, threads, as_json)
    cmd.__doc__ = doc
    main.command(name)(cmd)


for _name, _doc in [("solve", "Principal solution on the square grid with its exactness check."),
                    ("bers", "Bers projection of a named coefficient."),
                    ("aw", "Ahlfors-Weill section and its round trip."),
                    ("rigidity", "Orbit series for a coboundary with a certificate."),
                    ("wp-bound", "Subdivision upper bound for the p-distance."),
                    ("qs", "Quasisymmetry diagnostics of a circle map."),
                    ("cocycle", "Liouville cocycle norm of a circle map."),
                    ("verify", "Randomized inequality suite.")]:
    _register(_name, _doc)


def entry(argv=None):
    """Console entry point mapping failures to exit codes."""
    try:
        main.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.UsageError, ConfigError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except solver.ConvergenceError as exc:
        click.echo(f"solver did not converge: {exc}", err=True)
        return EXIT_CONVERGENCE
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(entry())
