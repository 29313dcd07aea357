"""Experiment runner: config parsing, subcommands, deterministic reports.

Config files are flat INI (key = value sections), diffable and hashable;
every report embeds the config hash and one record per checked assertion,
with a stable assertion id.  Reports are written with sorted keys and no
timestamps, so identical config + seed gives byte-identical output.

Exit codes: 0 all assertions pass, 1 assertion failures, 2 config errors.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .grids import GridFunction, HolderParams
from .maps import BakerMap
from .norms import LpConfig, norm_report
from .suite import DENSITY_SUITE, OPERATOR_PROBE_SUITE, build_suite


DEFAULT_CONFIG = """
[map]
kappa = 2
lambda = 1/2
layout = stacked

[norms]
alpha = 0.5
beta = 0.5
beta_prime = 0.75
leaf_grid = 128
witness_leaves = 6
kadic_level = 2
function = one

[ly]
n_max = 6
slack = 1.05
maps = 2:1/2, 2:1/4, 3:1/8

[spectral]
p = 7
q = 7
t_refine = 64
restarts = 64
cell_cap = 400000
decay_n_max = 24

[limits]
n = 10000
count = 100000
seed = 20240811
observable = sin_s
z_star = 1.6
z_points = 33
ldp_count = 1000000
ldp_n = 60,120,180
ldp_t = -0.22,-0.2,0.2,0.22

[singular]
kappa = 2
schedule = 1/5,1/10,1/20,1/40
ulam_p = 6
ulam_q = 2
ulam_refine = 64

[contracting]
map = affine
alpha = 0.5
n_max = 10

[output]
dir = out
"""


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    parser: configparser.ConfigParser
    text: str

    @staticmethod
    def load(path: Optional[str]) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(DEFAULT_CONFIG)
        if path is not None:
            try:
                with open(path) as fh:
                    cp.read_file(fh)
            except (OSError, configparser.Error) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
        buf = io.StringIO()
        cp.write(buf)
        cfg = ExperimentConfig(cp, buf.getvalue())
        cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            alpha = self.parser.getfloat("norms", "alpha")
            beta = self.parser.getfloat("norms", "beta")
            bprime = self.parser.getfloat("norms", "beta_prime")
            HolderParams(alpha, beta, bprime)
            self.map()
        except (ValueError, KeyError, configparser.Error) as exc:
            raise ConfigError(str(exc)) from exc

    def hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]

    def map(self) -> BakerMap:
        sec = self.parser["map"]
        kappa = int(sec["kappa"])
        lam = Fraction(sec["lambda"])
        layout = sec.get("layout", "stacked")
        if layout == "stacked":
            return BakerMap.stacked(kappa, lam)
        return BakerMap.parse(f"kappa={kappa} lambda={lam} layout={layout}")

    def holder(self) -> HolderParams:
        sec = self.parser["norms"]
        return HolderParams(float(sec["alpha"]), float(sec["beta"]),
                            float(sec["beta_prime"]))

    def lp(self) -> LpConfig:
        sec = self.parser["norms"]
        return LpConfig(leaf_grid=int(sec["leaf_grid"]),
                        witness_leaves=int(sec["witness_leaves"]),
                        kadic_level=int(sec["kadic_level"]))

    def ly_maps(self) -> list[BakerMap]:
        toks = self.parser.get("ly", "maps").split(",")
        out = []
        for tok in toks:
            k, lam = tok.strip().split(":")
            out.append(BakerMap.stacked(int(k), Fraction(lam)))
        return out


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------


def _assertion(check_id: str, lhs: float, rhs: float, passed: bool) -> dict:
    return {"check": check_id, "lhs": lhs, "rhs": rhs, "passed": bool(passed)}


def write_json(out_dir: Path, name: str, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / name, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(out_dir: Path, name: str, header: str, rows) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / name, "w") as fh:
        fh.write(f"# {header}\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


PLOT_SCRIPT = """\
# two-column plotter for the CSV reports in this directory
import sys
import matplotlib.pyplot as plt
xs, ys = [], []
for line in open(sys.argv[1]):
    if line.startswith('#'):
        continue
    a, b = line.split(',')[:2]
    xs.append(float(a)); ys.append(float(b))
plt.semilogy(xs, ys, marker='o')
plt.xlabel('n'); plt.ylabel('value'); plt.tight_layout()
plt.savefig(sys.argv[1] + '.png', dpi=150)
"""


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def run_norms(cfg: ExperimentConfig, out: Path) -> list[dict]:
    params = cfg.holder()
    lp = cfg.lp()
    m = cfg.map()
    name = cfg.parser.get("norms", "function")
    pool = dict(DENSITY_SUITE)
    if name not in pool:
        raise ConfigError(f"unknown suite function {name!r}")
    f = GridFunction.from_callable(pool[name], lp.leaf_grid, lp.leaf_grid, "C1_Wu")
    rep = norm_report(f, params, lp, m.kappa)
    assertions = [
        _assertion("norms.weak_le_strong_stable", rep.weak, rep.strong_stable,
                   rep.weak <= rep.strong_stable + 1e-12),
        _assertion("norms.total_is_sum", rep.strong_total,
                   rep.strong_stable + rep.strong_unstable,
                   abs(rep.strong_total - rep.strong_stable - rep.strong_unstable) < 1e-12),
    ]
    write_json(out, "norms.json", {"config_hash": cfg.hash(), "function": name,
                                   "report": rep.to_dict(), "assertions": assertions})
    return assertions


def run_ly_check(cfg: ExperimentConfig, out: Path) -> list[dict]:
    from .spectral import ly_check
    params = cfg.holder()
    lp = cfg.lp()
    n_max = cfg.parser.getint("ly", "n_max")
    slack = cfg.parser.getfloat("ly", "slack")
    all_rows = []
    assertions = []
    for m in cfg.ly_maps():
        suite = build_suite(DENSITY_SUITE, lp.leaf_grid, lp.leaf_grid)
        rows = ly_check(m, suite, n_max, params.alpha, params.beta, lp, slack)
        fails = [r for r in rows if not r.passed]
        assertions.append(_assertion(f"ly.zero_failures.{m.kappa}_{m.lam}",
                                     float(len(fails)), 0.0, len(fails) == 0))
        all_rows.extend({"map": f"{m.kappa}:{m.lam}", **r.to_dict()} for r in rows)
    write_json(out, "ly_check.json", {"config_hash": cfg.hash(), "rows": all_rows,
                                      "assertions": assertions})
    return assertions


def run_spectrum(cfg: ExperimentConfig, out: Path) -> list[dict]:
    from .spectral import (build_ulam, correlation_decay, invariant_measure,
                           leading_eigs, srb_conditional_deviation)
    params = cfg.holder()
    sec = cfg.parser["spectral"]
    m = cfg.map()
    t_refine = int(sec["t_refine"]) if float(m.lam) != 0.5 else None
    model = build_ulam(m, int(sec["p"]), int(sec["q"]), t_refine,
                       cell_cap=int(sec["cell_cap"]))
    mu0, lam1 = invariant_measure(model)
    g = lambda s, t: np.sin(2 * np.pi * s)
    fit = correlation_decay(model, mu0, g, g, int(sec["decay_n_max"]))
    rep = leading_eigs(model, params.alpha, params.beta,
                       restarts=int(sec["restarts"]),
                       decay=(fit.rate, fit.below_floor))
    srb_dev = srb_conditional_deviation(model, mu0)
    assertions = [
        _assertion("spectrum.leading_eigenvalue", abs(rep.leading_eigenvalue - 1.0),
                   1e-10, abs(rep.leading_eigenvalue - 1.0) <= 1e-10),
        _assertion("spectrum.second_modulus", rep.second_modulus, 0.95,
                   rep.second_modulus < 0.95),
        _assertion("spectrum.srb_conditional_uniform", srb_dev, 0.01, srb_dev <= 0.01),
    ]
    if float(m.lam) * m.kappa == 1.0:
        dev = float(np.max(np.abs(rep.invariant_vector - 1.0 / model.n_cells)))
        assertions.append(_assertion("spectrum.uniform_invariant", dev, 1e-10,
                                     dev <= 1e-10))
    write_json(out, "spectrum.json", {"config_hash": cfg.hash(),
                                      "report": rep.to_dict(),
                                      "srb_conditional_deviation": srb_dev,
                                      "assertions": assertions})
    return assertions


def run_correlations(cfg: ExperimentConfig, out: Path) -> list[dict]:
    from .spectral import (build_ulam, correlation_decay, invariant_measure,
                           second_eigenvalue_modulus)
    sec = cfg.parser["spectral"]
    m = cfg.map()
    t_refine = int(sec["t_refine"]) if float(m.lam) != 0.5 else None
    model = build_ulam(m, int(sec["p"]), int(sec["q"]), t_refine,
                       cell_cap=int(sec["cell_cap"]))
    mu0, _ = invariant_measure(model)
    second = second_eigenvalue_modulus(model, mu0, restarts=int(sec["restarts"]))
    n_max = int(sec["decay_n_max"])
    g_s = lambda s, t: np.sin(2 * np.pi * s)
    g_t = lambda s, t: np.sin(2 * np.pi * t)
    fit_s = correlation_decay(model, mu0, g_s, g_s, n_max)
    fit_t = correlation_decay(model, mu0, g_t, g_t, n_max)
    rate_s = 0.0 if fit_s.below_floor else fit_s.rate
    assertions = [
        _assertion("correlations.rate_vs_gap", rate_s, second + 0.05,
                   rate_s <= second + 0.05),
    ]
    write_csv(out, "decay_sin_s.csv", "n,C_n", fit_s.table)
    write_csv(out, "decay_sin_t.csv", "n,C_n", fit_t.table)
    write_json(out, "correlations.json", {
        "config_hash": cfg.hash(), "second_modulus": second,
        "sin_s": {"rate": fit_s.rate, "below_floor": fit_s.below_floor},
        "sin_t": {"rate": fit_t.rate, "below_floor": fit_t.below_floor},
        "assertions": assertions})
    return assertions


def run_clt(cfg: ExperimentConfig, out: Path) -> list[dict]:
    from .limits import (ObservableSpec, clt_check, green_kubo_variance,
                         lebesgue_sampler, tilted_sampler)
    from .spectral import build_ulam, invariant_measure
    sec = cfg.parser["limits"]
    spc = cfg.parser["spectral"]
    m = cfg.map()
    t_refine = int(spc["t_refine"]) if float(m.lam) != 0.5 else None
    model = build_ulam(m, int(spc["p"]), int(spc["q"]), t_refine)
    mu0, _ = invariant_measure(model)
    pool = dict(DENSITY_SUITE)
    g = ObservableSpec.centered_from(sec["observable"], pool[sec["observable"]],
                                     model, mu0)
    var = green_kubo_variance(model, mu0, g)
    n = int(sec["n"])
    count = int(sec["count"])
    seed = int(sec["seed"])
    rep_leb = clt_check(m, g, var.value, n, count, lebesgue_sampler, seed)
    rep_tilt = clt_check(m, g, var.value, n, count, tilted_sampler, seed + 1)
    var_rel = abs(rep_leb.empirical_variance - var.value) / var.value if var.value else 0.0
    assertions = [
        _assertion("clt.ks_lebesgue", rep_leb.ks_statistic, 0.02,
                   rep_leb.ks_statistic <= 0.02),
        _assertion("clt.ks_tilted", rep_tilt.ks_statistic, 0.02,
                   rep_tilt.ks_statistic <= 0.02),
        _assertion("clt.variance_match", var_rel, 0.05, var_rel <= 0.05),
    ]
    write_json(out, "clt.json", {"config_hash": cfg.hash(),
                                 "green_kubo": var.value,
                                 "lebesgue": rep_leb.to_dict(),
                                 "tilted": rep_tilt.to_dict(),
                                 "assertions": assertions})
    return assertions


def run_ldp(cfg: ExperimentConfig, out: Path) -> list[dict]:
    from .limits import (ObservableSpec, green_kubo_variance, ldp_empirical,
                         pressure_curvature_at_zero, rate_function)
    from .spectral import build_ulam, invariant_measure
    sec = cfg.parser["limits"]
    spc = cfg.parser["spectral"]
    m = cfg.map()
    t_refine = int(spc["t_refine"]) if float(m.lam) != 0.5 else None
    model = build_ulam(m, int(spc["p"]), int(spc["q"]), t_refine)
    mu0, _ = invariant_measure(model)
    pool = dict(DENSITY_SUITE)
    g = ObservableSpec.centered_from(sec["observable"], pool[sec["observable"]],
                                     model, mu0)
    var = green_kubo_variance(model, mu0, g)
    z_star = float(sec["z_star"])
    z = np.linspace(-z_star, z_star, int(sec["z_points"]))
    lr = rate_function(model, mu0, g, z)
    d1, d2 = pressure_curvature_at_zero(lr)
    p0 = float(lr.pressure[int(np.argmin(np.abs(lr.z_grid)))])
    curv_rel = abs(d2 - var.value) / var.value if var.value else 0.0
    t_grid = [float(x) for x in sec["ldp_t"].split(",")]
    n_grid = [int(x) for x in sec["ldp_n"].split(",")]
    emp = ldp_empirical(m, g, t_grid, n_grid, int(sec["ldp_count"]),
                        seed=int(sec["seed"]) + 2)
    assertions = [
        _assertion("ldp.pressure_at_zero", abs(p0), 0.0, p0 == 0.0),
        _assertion("ldp.mean_slope", abs(d1), 1e-3, abs(d1) <= 1e-3),
        _assertion("ldp.curvature_vs_green_kubo", curv_rel, 0.05, curv_rel <= 0.05),
    ]
    for t in t_grid:
        slope = emp.slopes[t]
        target = -lr.rate_at(t)
        if slope is None or target == 0.0:
            continue
        rel = abs(slope - target) / abs(target)
        assertions.append(_assertion(f"ldp.exponent_t_{t}", rel, 0.15, rel <= 0.15))
    write_csv(out, "pressure.csv", "z,P", zip(lr.z_grid, lr.pressure))
    write_csv(out, "rate.csv", "t,I", zip(lr.t_grid, lr.rate))
    write_csv(out, "ldp_empirical.csv", "t,n,empirical_exponent,neg_rate",
              [(c.t, c.n,
                c.exponent if c.exponent is not None else float("nan"),
                -lr.rate_at(c.t)) for c in emp.cells])
    write_json(out, "ldp.json", {"config_hash": cfg.hash(),
                                 "pressure_curvature": d2, "green_kubo": var.value,
                                 "slopes": {str(k): v for k, v in emp.slopes.items()},
                                 "assertions": assertions})
    return assertions


def run_singular_limit(cfg: ExperimentConfig, out: Path) -> list[dict]:
    from .singular import (SingularFamily, apply_limit_operator,
                           limit_invariant_measure, limit_ly_check,
                           perturbation_scan)
    params = cfg.holder()
    lp = cfg.lp()
    sec = cfg.parser["singular"]
    kappa = int(sec["kappa"])
    schedule = tuple(Fraction(x.strip()) for x in sec["schedule"].split(","))
    fam = SingularFamily.default(kappa, schedule)
    n_t = max(lp.leaf_grid, 2 * int(np.ceil(4.0 / float(min(schedule)))))
    suite = build_suite(DENSITY_SUITE[:8], lp.leaf_grid, n_t)
    ly_rows = limit_ly_check(fam, suite, 4, params.alpha, params.beta, lp)
    fails = [r for r in ly_rows if not r.passed]
    mu0 = limit_invariant_measure(fam)
    l_mu = apply_limit_operator(fam, mu0)
    fixed = all(np.array_equal(a.density, b.density) and a.coefficient == b.coefficient
                for a, b in zip(l_mu.terms, mu0.terms))
    probe = build_suite(OPERATOR_PROBE_SUITE, lp.leaf_grid, n_t)
    scan = perturbation_scan(fam, probe, params.alpha, params.beta, lp,
                             ulam_p=int(sec["ulam_p"]), ulam_q=int(sec["ulam_q"]),
                             ulam_refine=int(sec["ulam_refine"]))
    dists = [r.mu_weak_distance for r in scan]
    decreasing = all(a > b for a, b in zip(dists, dists[1:]))
    assertions = [
        _assertion("singular.ly_zero_failures", float(len(fails)), 0.0, not fails),
        _assertion("singular.fixed_point_exact", 0.0 if fixed else 1.0, 0.0, fixed),
        _assertion("singular.mu_distance_decreasing", 0.0 if decreasing else 1.0,
                   0.0, decreasing),
        _assertion("singular.mu_distance_final", dists[-1], 0.2, dists[-1] <= 0.2),
    ]
    for r in scan:
        assertions.append(_assertion(f"singular.perturbation_lam_{r.lam}",
                                     r.estimate, r.bound, r.passed))
    write_csv(out, "perturbation_scan.csv", "lambda,estimate,bound",
              [(r.lam, r.estimate, r.bound) for r in scan])
    write_json(out, "singular_limit.json", {
        "config_hash": cfg.hash(),
        "ly_rows": [r.to_dict() for r in ly_rows],
        "scan": [r.to_dict() for r in scan],
        "assertions": assertions})
    return assertions


def run_contracting(cfg: ExperimentConfig, out: Path) -> list[dict]:
    from .contracting import (NAMED_MAPS, DualMeasure, decay_to_delta,
                              ly_dual_check)
    sec = cfg.parser["contracting"]
    name = sec["map"]
    if name not in NAMED_MAPS:
        raise ConfigError(f"unknown contracting map {name!r}")
    cmap = NAMED_MAPS[name]
    alpha = float(sec["alpha"])
    n_max = int(sec["n_max"])
    lp = cfg.lp()
    leb = DualMeasure.lebesgue()
    rows = ly_dual_check(cmap, leb, alpha, n_max, lp)
    rep = decay_to_delta(cmap, leb, alpha, n_max, lp)
    all_pass = all(r["passed"] and r["weak_passed"] for r in rows)
    assertions = [
        _assertion("contracting.ly_all_pass", 0.0 if all_pass else 1.0, 0.0, all_pass),
    ]
    if rep.fitted_rate is not None:
        assertions.append(_assertion("contracting.decay_rate", rep.fitted_rate,
                                     rep.rate_bound + 0.05,
                                     rep.fitted_rate <= rep.rate_bound + 0.05))
    write_csv(out, "contracting_decay.csv", "n,distance",
              [(r.n, r.distance) for r in rep.rows])
    write_json(out, "contracting.json", {
        "config_hash": cfg.hash(), "map": name,
        "ly_rows": rows,
        "fitted_rate": rep.fitted_rate, "rate_bound": rep.rate_bound,
        "assertions": assertions})
    return assertions


SUBCOMMANDS: dict[str, Callable] = {
    "norms": run_norms,
    "ly-check": run_ly_check,
    "spectrum": run_spectrum,
    "correlations": run_correlations,
    "clt": run_clt,
    "ldp": run_ldp,
    "singular-limit": run_singular_limit,
    "contracting": run_contracting,
}


def main(argv: Optional[list[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="bakerlab",
                                 description="baker-map transfer operator laboratory")
    ap.add_argument("subcommand", choices=list(SUBCOMMANDS) + ["all"])
    ap.add_argument("--config", default=None, help="INI config file")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override [limits] seed")
    ap.add_argument("--n", type=int, default=None, help="override [limits] n")
    ap.add_argument("--count", type=int, default=None, help="override [limits] count")
    ap.add_argument("--norm-resolution", type=int, default=None,
                    help="override [norms] leaf_grid")
    ap.add_argument("--leaf-samples", type=int, default=None,
                    help="override [norms] witness_leaves")
    ap.add_argument("--map", default=None, choices=["half", "affine", "quad"],
                    help="override [contracting] map")
    ap.add_argument("--alpha", type=float, default=None,
                    help="override [contracting] alpha")
    ap.add_argument("--nmax", type=int, default=None,
                    help="override [contracting] n_max")
    args = ap.parse_args(argv)

    threads = os.environ.get("BAKERLAB_THREADS")
    if threads:
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(int(threads))
        except Exception:
            pass  # single-threaded algorithms; the cap only affects BLAS

    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg.parser.set("limits", "seed", str(args.seed))
        if args.n is not None:
            cfg.parser.set("limits", "n", str(args.n))
        if args.count is not None:
            cfg.parser.set("limits", "count", str(args.count))
        if args.norm_resolution is not None:
            cfg.parser.set("norms", "leaf_grid", str(args.norm_resolution))
        if args.leaf_samples is not None:
            cfg.parser.set("norms", "witness_leaves", str(args.leaf_samples))
        if args.map is not None:
            cfg.parser.set("contracting", "map", args.map)
        if args.alpha is not None:
            cfg.parser.set("contracting", "alpha", str(args.alpha))
        if args.nmax is not None:
            cfg.parser.set("contracting", "n_max", str(args.nmax))
        buf = io.StringIO()
        cfg.parser.write(buf)
        cfg = ExperimentConfig(cfg.parser, buf.getvalue())
        cfg.validate()
        out = Path(args.out if args.out is not None
                   else cfg.parser.get("output", "dir"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    names = list(SUBCOMMANDS) if args.subcommand == "all" else [args.subcommand]
    failures = []
    out.mkdir(parents=True, exist_ok=True)
    (out / "plot_two_column.py.txt").write_text(PLOT_SCRIPT)
    for name in names:
        try:
            assertions = SUBCOMMANDS[name](cfg, out)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        for a in assertions:
            status = "pass" if a["passed"] else "FAIL"
            print(f"[{name}] {a['check']}: {status} (lhs={a['lhs']:.6g} rhs={a['rhs']:.6g})")
            if not a["passed"]:
                failures.append((name, a))
    if failures:
        print(f"{len(failures)} assertion(s) failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
