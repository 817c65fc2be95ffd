"""Reproducible command-line experiments over the library.

Subcommands: ``env | walk | sep | homog | hdl | check-all``.  Options come
from an optional ``key = value`` config file plus flags (flags win).  Every
random draw derives from the single ``--seed``, so a rerun of the same
resolved configuration writes byte-identical reports at ``--threads 1``.
Reports are JSON (stable schema) with optional long-format CSV companions
and matplotlib figures rendered next to them.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import reporting
from .environment import EnvLaw, constant_law, iid_law, markov_law, \
    sample_environment
from .exclusion import (binomial_config, duality_suite,
                        ladder_direct_equivalence_check, reversibility_check,
                        simulate_sep_direct, simulate_sep_ladder,
                        ladder_from_config, single_particle_equivalence_check)
from .homogenization import estimate_sigma_msd, sigma_oracle_1d
from .hydrodynamics import BudgetError, hdl_experiment
from .random_walk import (generator, semigroup, simulate_walk,
                          time_change_equivalence_check, transition_row,
                          walk_ensemble)
from .seeding import derive_seed
from .testfunctions import gaussian_bump, sine_profile


class ConfigError(Exception):
    def __init__(self, fieldname: str, message: str):
        super().__init__(message)
        self.fieldname = fieldname


def parse_law(text: str) -> EnvLaw:
    """Law syntax: ``constant:V`` | ``iid:v1,v2[@w1,w2]`` | ``markov:v1,v2@stay``."""
    try:
        kind, _, rest = text.partition(":")
        if kind == "constant":
            return constant_law(int(rest))
        if kind == "iid":
            vals, _, ws = rest.partition("@")
            support = tuple(int(v) for v in vals.split(","))
            weights = tuple(float(w) for w in ws.split(",")) if ws else None
            return iid_law(support, weights)
        if kind == "markov":
            vals, _, stay = rest.partition("@")
            support = tuple(int(v) for v in vals.split(","))
            if len(support) != 2:
                raise ValueError("markov shorthand takes two values")
            q = float(stay)
            T = [[q, 1 - q], [1 - q, q]]
            return markov_law(support, T)
        raise ValueError(f"unknown law kind {kind!r}")
    except (ValueError, TypeError) as exc:
        raise ConfigError("law", f"invalid law {text!r}: {exc}") from exc


def parse_dims(text: str):
    try:
        return tuple(int(p) for p in str(text).lower().split("x"))
    except ValueError as exc:
        raise ConfigError("dims", f"invalid dims {text!r}") from exc


def parse_grid(text: str):
    try:
        return tuple(float(p) for p in str(text).split(","))
    except ValueError as exc:
        raise ConfigError("grid", f"invalid grid {text!r}") from exc


def load_config(path) -> dict:
    out = {}
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {i}: expected key = value")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


_DEFAULTS = {
    "law": "iid:1,2",
    "dims": "16",
    "seed": "0",
    "threads": "1",
    "out": "out",
    "format": "json",
    "figures": "1",
    "kind": "alpha_walk",
    "horizon": "1.0",
    "replicas": "2000",
    "x0": "0",
    "p": "0.5",
    "t_grid": "0.01,0.05,0.1",
    "n_grid": "16,32",
    "n_env": "4",
    "d": "1",
    "event_budget": "",
}

_REQUIRED = {
    "env": ("law", "dims", "seed"),
    "walk": ("law", "dims", "seed", "kind", "horizon"),
    "sep": ("law", "dims", "seed", "horizon", "p"),
    "homog": ("law", "dims", "seed", "horizon", "replicas"),
    "hdl": ("law", "seed", "n_grid", "t_grid", "replicas"),
    "check-all": ("law", "dims", "seed"),
}


def resolve_options(command: str, args) -> dict:
    cfg = dict(_DEFAULTS)
    if args.config:
        file_cfg = load_config(args.config)
        unknown = set(file_cfg) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(sorted(unknown)[0],
                              f"unknown config field {sorted(unknown)[0]!r}")
        cfg.update(file_cfg)
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = str(flag)
    for fieldname in _REQUIRED[command]:
        if not cfg.get(fieldname):
            raise ConfigError(fieldname, f"missing required field {fieldname!r}")
    return cfg


def _spaced(env, n=3):
    """A few well-separated site indices for spot checks."""
    return [int(k * env.n_sites / n) for k in range(n)]


# ---------------------------------------------------------------------------
# subcommand bodies: each returns (results dict, passed, csv_rows, figures)
# ---------------------------------------------------------------------------

def run_env(cfg, out_dir: Path):
    law = parse_law(cfg["law"])
    dims = parse_dims(cfg["dims"])
    seed = int(cfg["seed"])
    env = sample_environment(law, dims, seed)
    twin = sample_environment(law, dims, seed)
    regen_ok = bool(np.array_equal(env.alpha, twin.alpha))
    env_path = out_dir / "environment.json"
    env_path.parent.mkdir(parents=True, exist_ok=True)
    env_path.write_text(env.to_json() + "\n")
    results = {
        "env_hash": env.content_hash(),
        "mean_alpha_empirical": float(env.alpha.mean()),
        "mean_alpha_law": law.mean_alpha(),
        "c_max": env.c_max,
        "regeneration_identical": regen_ok,
        "environment_file": env_path.name,
    }
    figures = [("environment.png",
                lambda p: reporting.fig_environment(env, p))]
    rows = [("site", "alpha")] + [(i, int(a)) for i, a in enumerate(env.alpha)]
    return results, regen_ok, rows, figures


def run_walk(cfg, out_dir: Path):
    law = parse_law(cfg["law"])
    dims = parse_dims(cfg["dims"])
    seed = int(cfg["seed"])
    kind = cfg["kind"]
    horizon = float(cfg["horizon"])
    replicas = min(int(cfg["replicas"]), 20000)
    env = sample_environment(law, dims, derive_seed(seed, "env"))
    x0 = int(cfg["x0"])

    traj = simulate_walk(env, kind, x0, horizon, derive_seed(seed, "traj"))
    rows = [("replica", "event_index", "time", "site")]
    rows += list(traj.to_csv_rows(0))

    gen = generator(env, kind)
    checks = {}
    if env.n_sites <= 1024:
        tab = semigroup(gen, horizon, 1e-10)
        checks["row_sum_residual"] = tab.row_sum_residual()
        checks["reversibility_residual"] = tab.reversibility_residual()
    tc = time_change_equivalence_check(env, x0, [horizon], replicas,
                                       derive_seed(seed, "tc"))
    checks["time_change_p_values"] = {str(k): v for k, v in tc.items()}
    passed = all(p > 0.01 for p in tc.values()) and \
        checks.get("row_sum_residual", 0.0) <= 1e-9

    ens = walk_ensemble(env, kind, x0, [horizon], replicas,
                        derive_seed(seed, "hist"))
    ref = transition_row(gen, x0, horizon) if env.n_sites <= 1024 else None
    figures = [("walk_histogram.png",
                lambda p: reporting.fig_walk_histogram(
                    env, ens.sites[0], horizon, p, reference=ref))]
    results = {"env_hash": env.content_hash(), "kind": kind,
               "n_jumps": traj.n_jumps, **checks}
    return results, passed, rows, figures


def run_sep(cfg, out_dir: Path):
    law = parse_law(cfg["law"])
    dims = parse_dims(cfg["dims"])
    seed = int(cfg["seed"])
    horizon = float(cfg["horizon"])
    p = float(cfg["p"])
    replicas = min(int(cfg["replicas"]), 20000)
    env = sample_environment(law, dims, derive_seed(seed, "env"))
    eta0 = binomial_config(env, p, derive_seed(seed, "init"))

    direct = simulate_sep_direct(env, eta0, horizon, derive_seed(seed, "dir"))
    ladder = simulate_sep_ladder(env, ladder_from_config(env, eta0), horizon,
                                 derive_seed(seed, "lad"))
    rows = [("replica", "time", "from_site", "to_site")]
    rows += list(direct.to_csv_rows(0))
    rows += list(ladder.to_csv_rows(1))

    equiv = ladder_direct_equivalence_check(env, eta0, min(horizon, 1.0),
                                            replicas, derive_seed(seed, "eq"))
    single = single_particle_equivalence_check(env, 0, min(horizon, 1.0),
                                               replicas,
                                               derive_seed(seed, "sp"))
    conserved = bool(direct.replay(env).sum() == eta0.sum())
    results = {"env_hash": env.content_hash(),
               "direct_events": direct.n_events,
               "ladder_events": ladder.n_events,
               "particles_conserved": conserved,
               "ladder_vs_direct_max_z": equiv.max_abs_z,
               "single_particle_p_value": single}
    passed = conserved and equiv.passed and single > 0.01
    figures = []
    if env.ndim == 1:
        figures.append(("sep_kymograph.png",
                        lambda p: reporting.fig_sep_kymograph(env, direct, p)))
    return results, passed, rows, figures


def run_homog(cfg, out_dir: Path):
    law = parse_law(cfg["law"])
    dims = parse_dims(cfg["dims"])
    seed = int(cfg["seed"])
    horizon = float(cfg["horizon"])
    replicas = int(cfg["replicas"])
    kind = cfg["kind"] if cfg["kind"].startswith("msd") else "msd_alpha_walk"
    est = estimate_sigma_msd(law, dims, kind, horizon, replicas, seed)
    results = {"sigma": est.to_json_dict()}
    passed = True
    if len(dims) == 1 and law.kind in ("iid", "constant"):
        oracle = sigma_oracle_1d(law)
        rel = abs(est.scalar() - oracle) / oracle
        results["oracle_1d"] = oracle
        results["relative_error"] = rel
        # sanity envelope for user-chosen budgets; the pinned 2% gate runs
        # in the acceptance suite at calibrated horizon and replica counts
        envelope = max(0.05, 5.0 * est.stderr[0, 0] / oracle)
        results["envelope"] = envelope
        passed = rel <= envelope
    rows = [("component_i", "component_j", "sigma", "stderr")]
    d = est.sigma.shape[0]
    rows += [(i, j, est.sigma[i, j], est.stderr[i, j])
             for i in range(d) for j in range(d)]
    print(reporting.render_table(rows[0],
                                 [(i, j, f"{s:.6f}", f"{e:.2e}")
                                  for i, j, s, e in rows[1:]]))
    return results, passed, rows, []


def run_hdl(cfg, out_dir: Path):
    law = parse_law(cfg["law"])
    seed = int(cfg["seed"])
    d = int(cfg["d"])
    n_grid = tuple(int(n) for n in parse_grid(cfg["n_grid"]))
    t_grid = parse_grid(cfg["t_grid"])
    replicas = int(cfg["replicas"])
    n_env = int(cfg["n_env"])
    threads = int(cfg["threads"])
    budget = float(cfg["event_budget"]) if cfg["event_budget"] else None
    rho = sine_profile()
    # centered on the sine crest so the limiting field genuinely evolves
    G = gaussian_bump([0.25], 0.2, period=1.0)
    sigma = sigma_oracle_1d(law) if d == 1 and law.kind in ("iid", "constant") \
        else 2.0
    report = hdl_experiment(law, d, n_grid, rho, [G], t_grid, sigma,
                            replicas, seed, n_env=n_env, threads=threads,
                            event_budget=budget)
    errs = report.err
    ns = sorted(errs)
    monotone = all(errs[b] <= errs[a] + 2 * (report.err_stderr[a]
                                             + report.err_stderr[b])
                   for a, b in zip(ns, ns[1:]))
    results = report.to_json_dict()
    results["monotone_within_2se"] = monotone
    table = [(n, t, g, f"{c['empirical']:.5f}", f"{c['limit']:.5f}",
              f"{c['abs_err']:.5f}", f"{c['stderr']:.5f}")
             for (n, t, g), c in sorted(report.cells.items())]
    print(reporting.render_table(
        ("N", "t", "G", "empirical", "limit", "abs_err", "stderr"), table))
    figures = [("hdl_err_decay.png",
                lambda p: reporting.fig_err_decay(errs, p))]

    # empirical field values against the limit across the grid, largest N
    N = ns[-1]
    ts = sorted(report.t_grid)
    emp = [report.cells[(N, t, "G0")]["empirical"] for t in ts]
    lim = [report.cells[(N, t, "G0")]["limit"] for t in ts]
    figures.append(("hdl_field_vs_limit.png",
                    lambda p: reporting.fig_density_vs_limit(
                        ts, emp, lim, max(ts), p)))
    rows = list(report.csv_rows())
    return results, monotone, rows, figures


def run_check_all(cfg, out_dir: Path):
    law = parse_law(cfg["law"])
    dims = parse_dims(cfg["dims"])
    seed = int(cfg["seed"])
    env = sample_environment(law, dims, derive_seed(seed, "env"))
    replicas = min(int(cfg["replicas"]), 20000)

    checks = {}
    dual = duality_suite([derive_seed(seed, "dual", i) for i in range(3)],
                         [dims], cases_per_env=20, seed=seed, law=law)
    checks["duality"] = dual.to_json_dict()
    multi = duality_suite([derive_seed(seed, "mdual", i) for i in range(2)],
                          [dims], cases_per_env=5, seed=seed,
                          dual_particles=2, law=law)
    checks["multi_duality"] = multi.to_json_dict()
    rev = reversibility_check(env, float(cfg["p"]), 2000,
                              derive_seed(seed, "rev"))
    checks["reversibility"] = rev.to_json_dict()
    eta0 = binomial_config(env, float(cfg["p"]), derive_seed(seed, "init"))
    lad = ladder_direct_equivalence_check(env, eta0, 1.0, replicas,
                                          derive_seed(seed, "lad"))
    checks["ladder_vs_direct"] = lad.to_json_dict()
    if env.n_sites <= 1024:
        gen = generator(env, "alpha_walk")
        tab1 = semigroup(gen, 0.5, 1e-10)
        tab2 = semigroup(gen, 1.0, 1e-10)
        ck = float(np.abs(tab1.p @ tab1.p - tab2.p).max())
        checks["semigroup"] = {
            "reversibility_residual": tab1.reversibility_residual(),
            "chapman_kolmogorov_residual": ck,
            "row_sum_residual": tab1.row_sum_residual(),
            "pass": bool(tab1.reversibility_residual() <= 1e-9
                         and ck <= 1e-8)}
    tc = time_change_equivalence_check(env, 0, [1.0],
                                       min(replicas, 20000),
                                       derive_seed(seed, "tc"))
    checks["time_change"] = {"p_values": {str(k): v for k, v in tc.items()},
                             "pass": all(p > 0.01 for p in tc.values())}

    passed = (dual.passed and multi.passed and rev.passed and lad.passed
              and checks["time_change"]["pass"]
              and checks.get("semigroup", {}).get("pass", True))
    results = {"env_hash": env.content_hash(), **checks}
    return results, passed, None, []


_RUNNERS = {
    "env": run_env,
    "walk": run_walk,
    "sep": run_sep,
    "homog": run_homog,
    "hdl": run_hdl,
    "check-all": run_check_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepenv",
        description="exclusion dynamics in quenched environments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=("json", "csv", "both"),
                       default=None)
        p.add_argument("--figures", dest="figures", action="store_const",
                       const="1", default=None)
        p.add_argument("--no-figures", dest="figures", action="store_const",
                       const="0")
        p.add_argument("--law", default=None)
        p.add_argument("--dims", default=None)
        p.add_argument("--kind", default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--replicas", type=int, default=None)
        p.add_argument("--x0", type=int, default=None)
        p.add_argument("--p", type=float, default=None)
        p.add_argument("--t-grid", dest="t_grid", default=None)
        p.add_argument("--n-grid", dest="n_grid", default=None)
        p.add_argument("--n-env", dest="n_env", type=int, default=None)
        p.add_argument("--d", type=int, default=None)
        p.add_argument("--event-budget", dest="event_budget", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        cfg = resolve_options(command, args)
    except ConfigError as exc:
        print(f"config error in field '{exc.fieldname}': {exc}",
              file=sys.stderr)
        return 2

    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        results, passed, csv_rows, figures = _RUNNERS[command](cfg, out_dir)
    except ConfigError as exc:
        print(f"config error in field '{exc.fieldname}': {exc}",
              file=sys.stderr)
        return 2
    except BudgetError as exc:
        print(f"resource budget exceeded: {exc}", file=sys.stderr)
        return 3

    payload = {"command": command,
               "config": {k: cfg[k] for k in sorted(cfg)},
               "results": results,
               "pass": bool(passed)}
    stem = command.replace("-", "_")
    if cfg["format"] in ("json", "both"):
        reporting.write_json(out_dir / f"{stem}_report.json", payload)
    if cfg["format"] in ("csv", "both") and csv_rows:
        reporting.write_csv(out_dir / f"{stem}_report.csv", csv_rows)
    if cfg["figures"] == "1":
        for fname, fn in figures:
            fn(out_dir / fname)
    print(f"{command}: {'pass' if passed else 'FAIL'}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
