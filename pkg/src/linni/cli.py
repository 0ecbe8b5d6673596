"""Command-line front end: each subcommand runs one verification pipeline.

Every run writes <out>/summary.json (assertions with value, target, tolerance
and error estimate) plus CSV plot data.  Exit status: 0 when every assertion
passes, 1 when some assertion fails, 2 for configuration errors, 3 for
numerical accuracy errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

SUBCOMMANDS = ("profiles", "green", "ansatz-residual", "energy-verify", "reduced-landscape",
               "find-critical", "minmax-certificate", "shoot", "dichotomy")


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    subcommand: str
    domain: str = ""
    dim: int = 6
    eps: list = field(default_factory=list)
    lam: float | None = None
    eta: float | None = None
    Q: list | None = None
    beta: float = 0.3
    c1: float | None = None
    C: dict = field(default_factory=dict)
    delta: float | None = None
    mu: list = field(default_factory=list)
    dims: list = field(default_factory=list)
    R: float = 1.0
    u0: float | None = None
    normalized: bool = False
    widen: float = 1.0
    grid: int = 0
    tol: float | None = None
    out: str = "linni-run"
    seed: int = 0
    jobs: int = 1
    unsafe: bool = False


# ---------------------------------------------------------------------------
# parsing


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def parse_domain(text: str, dim: int | None = None):
    """ball4, box6, ball4:2.0 (radius) or box4:2,1,1,1 (edge lengths)."""
    from .green import ball, box

    name, _, arg = text.partition(":")
    kind = name.rstrip("0123456789")
    digits = name[len(kind):]
    n = int(digits) if digits else dim
    if kind not in ("ball", "box") or n is None:
        raise ConfigError(f"unknown domain {text!r}")
    try:
        if kind == "ball":
            return ball(n, float(arg) if arg else 1.0)
        return box(n, _floats(arg) if arg else None)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linni", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"linni {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int, help="worker count (default: LINNI_JOBS or 1)")
        p.add_argument("--unsafe", action="store_true", default=None, help="allow overrides outside the parameter boxes")
        p.add_argument("--tol", type=float)
        if name in ("green",):
            p.add_argument("--domain")
            p.add_argument("--Q", type=_floats)
            p.add_argument("--grid", type=int, help="grid resolution for the finite-difference oracle (boxes)")
        if name in ("ansatz-residual", "energy-verify", "reduced-landscape", "find-critical", "minmax-certificate"):
            p.add_argument("--dim", type=int)
            p.add_argument("--domain")
            p.add_argument("--eps", type=_floats)
            p.add_argument("--lam", type=float)
            p.add_argument("--eta", type=float)
            p.add_argument("--Q", type=_floats)
            p.add_argument("--beta", type=float)
            p.add_argument("--c1", type=float)
            p.add_argument("--delta", type=float)
            for c in range(6):
                p.add_argument(f"--C{c}", type=float)
        if name in ("shoot", "dichotomy"):
            p.add_argument("--mu", type=_floats)
            p.add_argument("--R", type=float)
        if name == "shoot":
            p.add_argument("--dim", type=int)
            p.add_argument("--u0", type=float, help="initial value; default scans the bracket family")
            p.add_argument("--normalized", action="store_true", default=None)
        if name == "dichotomy":
            p.add_argument("--dims", type=_ints)
            p.add_argument("--widen", type=float)
    return parser


_DEFAULT_EPS = {"ansatz-residual": [0.1, 0.05, 0.025, 0.0125], "energy-verify": [0.05, 0.025],
                "reduced-landscape": [0.05], "find-critical": [1e-2, 1e-3, 1e-4], "minmax-certificate": [0.05, 0.025]}


def make_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config: {err}") from err
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "subcommand")}
    C = dict(values.pop("C", {}))
    for c in range(6):
        v = flags.pop(f"C{c}", None)
        if v is not None:
            C[f"C{c}"] = v
    values.update(flags)
    values["C"] = C
    values["subcommand"] = args.subcommand
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "jobs" not in values:
        values["jobs"] = int(os.environ.get("LINNI_JOBS", "1"))
    cfg = RunConfig(**values)
    if not cfg.eps:
        cfg.eps = list(_DEFAULT_EPS.get(cfg.subcommand, []))
    if cfg.subcommand == "dichotomy":
        cfg.mu = cfg.mu or [0.1, 0.05, 0.02]
        cfg.dims = cfg.dims or [3, 4, 5, 6, 7]
    if cfg.subcommand == "shoot":
        cfg.mu = cfg.mu or [0.1]
    if cfg.subcommand == "find-critical" and "dim" not in values:
        cfg.dim = 4
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    if cfg.subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {cfg.subcommand!r}")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be positive")
    if any(m <= 0 for m in cfg.mu):
        raise ConfigError("mu values must be positive")
    if cfg.R <= 0 or cfg.widen < 1:
        raise ConfigError("R must be positive and widen at least 1")
    if cfg.subcommand in _DEFAULT_EPS:
        if cfg.dim not in (4, 6):
            raise ConfigError("dimension must be 4 or 6")
        if any(not 0 < e <= 0.2 for e in cfg.eps) and not cfg.unsafe:
            raise ConfigError("eps values must lie in (0, 0.2]")
        if not 0 < cfg.beta < 1 / 3:
            raise ConfigError("beta must lie in (0, 1/3)")
        if cfg.subcommand not in ("find-critical", "minmax-certificate") and not cfg.unsafe:
            from .ansatz import in_parameter_box

            for e in cfg.eps:
                try:
                    p = _params(cfg, e)
                except ValueError as err:
                    raise ConfigError(str(err)) from err
                if not in_parameter_box(p, cfg.beta):
                    raise ConfigError(f"Lambda/eta outside the admissible box at eps={e}; pass --unsafe to override")
    if cfg.subcommand == "dichotomy" and any(n < 3 for n in cfg.dims):
        raise ConfigError("dimensions must be at least 3")


def _domain(cfg: RunConfig):
    return parse_domain(cfg.domain or f"ball{cfg.dim}", cfg.dim)


def _params(cfg, eps):
    from .ansatz import blowup_params

    return blowup_params(_domain(cfg), eps, lam=cfg.lam, Q=cfg.Q, eta=cfg.eta, delta=cfg.delta, c1=cfg.c1)


# ---------------------------------------------------------------------------
# output


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class Report:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.assertions = []
        self.results = {}
        self.tables = {}

    def check(self, name, value, passed, target=None, tolerance=None, error=None, note=None):
        entry = {"name": name, "value": value, "target": target, "tolerance": tolerance,
                 "error_estimate": error, "passed": bool(passed)}
        if note:
            entry["note"] = note
        self.assertions.append(entry)
        return bool(passed)

    def close(self, name, value, target, rel, error=None):
        dev = abs(value - target) / abs(target)
        return self.check(name, value, dev <= rel, target, {"relative": rel}, error)

    def table(self, name, header, rows):
        self.tables[name] = (header, rows)

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def write(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        summary = {"subcommand": self.cfg.subcommand, "version": __version__, "config": asdict(self.cfg),
                   "assertions": self.assertions, "results": self.results, "passed": self.passed,
                   "artifacts": sorted(f"{k}.csv" for k in self.tables)}
        (out / "summary.json").write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")
        for name, (header, rows) in self.tables.items():
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for row in rows:
                    w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return v


def _slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# ---------------------------------------------------------------------------
# pipelines


def run_profiles(cfg, rep):
    from . import profiles as P

    r = np.array([1e3, 1e4])
    drift = float(abs(np.diff(P.psi_bar_exact(r) + 0.5 * np.log(r))[0]))
    rep.check("psi_bar_log_drift_1e3_1e4", drift, drift < 1e-4, 0.0, {"absolute": 1e-4})
    val = float(4 * 100.0**2 * P.psi6_exact(100.0))
    rep.check("psi6_4r2_at_100", val, abs(val - 1) <= 1e-4, 1.0, {"absolute": 1e-4})
    b4, o4 = P.bubble_integrals(4), P.beta_oracles(4)
    b6, o6 = P.bubble_integrals(6), P.beta_oracles(6)
    rep.close("int_U4_R4_vs_pi2_over_6", b4["U^crit"], math.pi**2 / 6, 1e-8, abs(b4["U^crit"] - o4["U^crit"]))
    rep.close("int_U4_R4_vs_beta", b4["U^crit"], float(o4["U^crit"]), 1e-8)
    rep.close("int_U3_R6_vs_pi3_over_30", b6["U^crit"], math.pi**3 / 30, 1e-8, abs(b6["U^crit"] - o6["U^crit"]))
    rep.close("int_U3_R6_vs_beta", b6["U^crit"], float(o6["U^crit"]), 1e-8)
    for lam in (0.5, 1.0, 2.0):
        v = P.radial_integral(lambda s: (lam / (lam**2 + s * s)) ** 3, 4)
        rep.close(f"int_U_lam3_R4_lam_{lam}", v, P.c_n(4) * lam / 8, 1e-8)
    rr = np.geomspace(1e-3, 1e4, 200)
    rep.table("profiles", ["r", "psi_bar", "psi6"], zip(rr, P.psi_bar_exact(rr), P.psi6_exact(rr)))
    rep.results["psi6_4r2_at_100"] = val
    rep.results["int_U3_R6"] = b6["U^crit"]


def run_green(cfg, rep):
    from .green import ball_center_robin, compare_with_grid, green_field, green_oracle_grid

    dom = parse_domain(cfg.domain or "ball4")
    Q = dom.center if cfg.Q is None else np.asarray(cfg.Q, dtype=float)
    if Q.size == 1:
        Q = np.full(dom.n, Q[0])
    if Q.size != dom.n or not dom.contains(Q):
        raise ConfigError("Q must be an interior point with one coordinate per dimension")
    gf = green_field(dom, Q)
    H = gf.robin
    rep.results.update(H_QQ=H, H_QQ_times_volume=H * dom.volume, volume=dom.volume, Q=Q)
    if dom.shape == "ball" and not np.any(Q):
        rep.close("robin_series_vs_radial_closed_form", H, ball_center_robin(dom.n, dom.radius), 1e-8)
    if cfg.grid:
        if dom.shape != "box":
            raise ConfigError("the grid oracle is implemented for boxes")
        grid = green_oracle_grid(dom, Q, cfg.grid)
        cmp = compare_with_grid(gf, grid)
        err = cmp["rel_error"]
        rep.check("series_vs_grid_oracle", err, err <= 1e-2, 0.0, {"relative_max": 1e-2},
                  note=f"{cmp['points']} cells, median pointwise {cmp['median_pointwise']:.3g}")
    x = dom.center + np.linspace(-0.9, 0.9, 41)[:, None] * (
        np.eye(dom.n)[0] * (dom.radius if dom.shape == "ball" else dom.lengths[0] / 2))
    rep.table("green_line", ["x1", "H", "G"], zip(x[:, 0], gf.H(x), gf.G(x)))


def run_ansatz_residual(cfg, rep):
    from .ansatz import assemble, weighted_norm

    kind = "quadstar" if cfg.dim == 6 else "starstar"
    norms = []
    for e in cfg.eps:
        p = _params(cfg, e)
        f = assemble(p)
        norms.append(weighted_norm(f.residual, kind, p))
    rows = list(zip(cfg.eps, norms))
    rep.table("residual_norms", ["eps", f"norm_{kind}"], rows)
    rep.results["norms"] = dict(zip(map(str, cfg.eps), norms))
    if len(cfg.eps) >= 2:
        s = _slope(cfg.eps, norms)
        rep.results["slope"] = s
        if cfg.dim == 6:
            rep.check("residual_slope_n6", s, 2.35 <= s <= 2.95, 8 / 3, {"band": [2.35, 2.95]})
        else:
            rep.check("residual_slope_n4", s, s >= 0.9, None, {"minimum": 0.9})


def run_energy_verify(cfg, rep):
    from .energy import j_eps_quadrature, j_expansion

    rems, rows = [], []
    for e in cfg.eps:
        p = _params(cfg, e)
        J = j_eps_quadrature(p, cfg.tol)
        E = j_expansion(p)
        rem = abs(float(J["value"]) - float(E["value"]))
        rems.append(rem)
        rows.append((e, float(J["value"]), float(J["error"]), float(E["value"]), rem))
    rep.table("energy", ["eps", "J_quadrature", "J_error", "J_expansion", "remainder"], rows)
    rep.results["remainders"] = dict(zip(map(str, cfg.eps), rems))
    for (e1, r1, q1), (e2, r2, q2) in zip(zip(cfg.eps, rems, rows), list(zip(cfg.eps, rems, rows))[1:]):
        if abs(e1 / e2 - 2) > 1e-9:
            continue
        ratio = r1 / r2
        err = q1[2] / r2 + q2[2] * r1 / r2**2
        if cfg.dim == 6:
            rep.check(f"remainder_ratio_{e1}_{e2}", ratio, 16 <= ratio <= 64, 32.0, {"band": [16, 64]}, err)
        else:
            c1 = r1 / (e1**4 * math.log(e1) ** 2)
            c2 = r2 / (e2**4 * math.log(e2) ** 2)
            rep.check(f"remainder_constant_{e1}_{e2}", c2 / c1, abs(c2 / c1 - 1) <= 0.25, 1.0,
                      {"relative": 0.25}, err)


def run_reduced_landscape(cfg, rep):
    from .energy import eta_lambda_polynomial, k_eps4, k_eps6_ab
    from .green import f_landscape, green_field
    from .profiles import c_n

    dom = _domain(cfg)
    vol = dom.volume
    eps = cfg.eps[0]
    Q = np.asarray(cfg.Q, dtype=float) if cfg.Q is not None else dom.center
    if cfg.dim == 6:
        c6 = c_n(6)
        eta = 1 / 48
        lam = math.sqrt(vol / (96 * c6))
        ident = 24 * eta**2 - eta + c6 * lam**2 / vol
        rep.check("stationarity_24eta2", ident, abs(ident) <= 1e-12, 0.0, {"absolute": 1e-12})
        coef = eta_lambda_polynomial(eta, lam, vol)
        rep.check("eps3_coefficient", coef, abs(coef - vol / 6912) <= 1e-12, vol / 6912, {"absolute": 1e-12})
        F = f_landscape(dom, Q)
        a = np.linspace(-0.05, 0.05, 41)
        rows = [(x, y, float(k_eps6_ab(x, y, F, eps, vol))) for x in a for y in a]
        rep.table("landscape", ["a", "b", "K"], rows)
        rep.results.update(F=F, eta_center=eta, lam_center=lam)
    else:
        c1 = cfg.c1 or 2 * c_n(4) / vol
        H = green_field(dom, Q).robin
        lam = np.exp(np.linspace(-4, 3, 141))
        rep.table("landscape", ["Lambda", "K"], zip(lam, k_eps4(lam, H, eps, c1, vol)))
        rep.results.update(robin=H, c1=c1)


def run_find_critical(cfg, rep):
    from .search import BoundaryHitError, SearchBox4, find_max4, find_saddle6, stationarity_oracle4

    dom = _domain(cfg)
    if cfg.dim == 4:
        rows = []
        for e in cfg.eps:
            box = SearchBox4(e, cfg.beta)
            f_only = find_max4(dom, box, c1=cfg.c1, robin_term=False)
            rep.close(f"F_only_maximizer_eps_{e}", f_only["lam"], math.exp(-0.5), 1e-6)
            try:
                pt = find_max4(dom, box, c1=cfg.c1)
                oracle = pt["oracle_lam"]
                drift = abs(math.log(pt["lam"]) + 0.5)
                odrift = abs(math.log(oracle) + 0.5)
                ok = abs(drift - odrift) <= 0.2 * max(odrift, 1e-300)
                rep.check(f"full_maximizer_interior_eps_{e}", pt["lam"], ok, oracle, {"relative_drift": 0.2})
                rows.append((e, pt["lam"], oracle, 1))
            except BoundaryHitError as err:
                pt = err.point
                rep.check(f"full_maximizer_interior_eps_{e}", pt["lam"], False, pt.get("oracle_lam"),
                          {"relative_drift": 0.2}, note=str(err))
                rows.append((e, pt["lam"], pt.get("oracle_lam", float("nan")), 0))
        rep.table("maximizers", ["eps", "Lambda", "oracle_Lambda", "interior"], rows)
    else:
        spacing = 0.7 * (dom.radius if dom.shape == "ball" else min(dom.lengths) / 2) / 9
        rows = []
        for e in cfg.eps:
            s = find_saddle6(dom, e)
            dist = float(np.linalg.norm(s["Q"] - dom.center))
            rep.check(f"saddle_ab_eps_{e}", max(abs(s["a"]), abs(s["b"])), max(abs(s["a"]), abs(s["b"])) <= 1e-6,
                      0.0, {"absolute": 1e-6})
            rep.check(f"saddle_Q_eps_{e}", dist, dist <= spacing, 0.0, {"absolute": spacing})
            rows.append((e, s["a"], s["b"], dist, s["value"]))
        rep.table("saddles", ["eps", "a", "b", "Q_distance", "K"], rows)


def run_minmax(cfg, rep):
    from .search import SearchBox6, minmax_certificate

    dom = _domain(cfg)
    if dom.n != 6:
        raise ConfigError("the certificate is for dimension 6")
    box = SearchBox6.for_domain(dom, **cfg.C)
    rep.check("constants_consistent", box.violations, box.valid, [], None)
    rows = []
    for e in cfg.eps:
        cert = minmax_certificate(dom, e, box, seed=cfg.seed)
        for k, v in cert["inequalities"].items():
            rep.check(f"{k}_eps_{e}", v, v > 0, 0.0, {"margin": "> 0"})
            rows.append((e, k, v))
    rep.table("certificate", ["eps", "inequality", "margin"], rows)


def run_shoot(cfg, rep):
    from .shooting import ShootingProblem, scan, shoot

    for mu in cfg.mu:
        prob = ShootingProblem(cfg.dim, mu, cfg.R, cfg.normalized)
        if cfg.u0 is not None:
            s = shoot(prob, cfg.u0)
            rep.results[f"slope_mu_{mu}"] = s
            continue
        out = scan(prob, cfg.widen)
        rep.table(f"scan_mu_{mu}", ["log_u0", "slope"], zip(out["grid"], out["slopes"]))
        for i, r in enumerate(out["found"]):
            rep.check(f"root_{i}_mu_{mu}", r.slope, abs(r.slope) < 1e-9, 0.0, {"absolute": 1e-9}, r.weak_residual)
            rep.table(f"profile_mu_{mu}_{i}", ["r", "u_over_u_R"], zip(r.r, r.profile))
        rep.results[f"nonconstant_mu_{mu}"] = [r.log_u0 for r in out["found"]]


def run_dichotomy(cfg, rep):
    from .shooting import dichotomy_scan

    rows = dichotomy_scan(cfg.dims, cfg.mu, cfg.R, widen=cfg.widen, jobs=cfg.jobs)
    rep.table("dichotomy", ["n", "mu", "classification", "log_u0", "slope", "weak_residual"],
              [(r["n"], r["mu"], r["classification"], r.get("log_u0", float("nan")), r.get("slope", float("nan")),
                r.get("weak_residual", float("nan"))) for r in rows])
    for r in rows:
        expect = "nonconstant-found" if r["n"] in (4, 5, 6) else "none-found"
        rep.check(f"n{r['n']}_mu_{r['mu']}", r["classification"], r["classification"] == expect, expect)
    rep.results["table"] = rows


PIPELINES = {"profiles": run_profiles, "green": run_green, "ansatz-residual": run_ansatz_residual,
             "energy-verify": run_energy_verify, "reduced-landscape": run_reduced_landscape,
             "find-critical": run_find_critical, "minmax-certificate": run_minmax, "shoot": run_shoot,
             "dichotomy": run_dichotomy}


def run(cfg: RunConfig) -> int:
    from .ansatz import blowup_params  # noqa: F401  (fail early on a broken install)
    from .energy import EnergyAccuracyError
    from .green import GreenAccuracyError
    from .profiles import ProfileAccuracyError
    from .shooting import StiffnessError

    rep = Report(cfg)
    try:
        PIPELINES[cfg.subcommand](cfg, rep)
    except (GreenAccuracyError, EnergyAccuracyError, ProfileAccuracyError, StiffnessError) as err:
        rep.results["error"] = {"module": type(err).__module__, "type": type(err).__name__, "message": str(err)}
        rep.write(Path(cfg.out))
        return EXIT_NUMERIC
    rep.write(Path(cfg.out))
    return EXIT_OK if rep.passed else EXIT_FAIL


def main(argv=None) -> int:
    try:
        cfg = make_config(argv)
    except ConfigError as err:
        print(f"linni: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = run(cfg)
    except ConfigError as err:
        print(f"linni: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    summary = json.loads((Path(cfg.out) / "summary.json").read_text())
    for a in summary["assertions"]:
        print(f"{'PASS' if a['passed'] else 'FAIL'}  {a['name']}: {a['value']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
