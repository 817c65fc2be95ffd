"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Every tolerance is pinned here; statistical checks use frozen seeds so the
suite is deterministic.  Run with ``pytest tests/test_acceptance.py -v -s``
to see the per-criterion lines and runtimes.
"""

import json
import time

import numpy as np
import pytest

import sepenv as sv
from sepenv.cli import main as cli_main
from sepenv.seeding import derive_seed

LAW12 = sv.iid_law((1, 2))
BUMP = sv.gaussian_bump([0.25], 0.2, period=1.0)


def report(name, passed, detail, t0, limit_s):
    elapsed = time.time() - t0
    line = f"ACCEPTANCE {name}: {'PASS' if passed else 'FAIL'} " \
           f"({detail}) [{elapsed:.1f}s / limit {limit_s:.0f}s]"
    print(line)
    assert passed, line
    assert elapsed < limit_s, f"{name} exceeded its runtime budget: {line}"


def test_c01_duality_identity():
    t0 = time.time()
    rep = sv.duality_suite(
        env_seeds=[101, 202],
        dims_list=[(6,), (8,), (12,), (6, 6), (8, 8), (12, 12)],
        cases_per_env=17, seed=9001, dual_particles=1, law=sv.iid_law((1, 2, 3)))
    report("1 duality", rep.passed and rep.cases >= 200,
           f"{rep.cases} cases, max residual {rep.max_abs_residual:.2e}",
           t0, 10)


def test_c02_multi_particle_self_duality():
    t0 = time.time()
    rep = sv.duality_suite(
        env_seeds=[303, 404],
        dims_list=[(6,), (8,), (6, 6)],
        cases_per_env=9, seed=9002, dual_particles=3, law=sv.iid_law((1, 2, 3)))
    report("2 multi-duality", rep.passed and rep.cases >= 50,
           f"{rep.cases} cases, max residual {rep.max_abs_residual:.2e}",
           t0, 30)


def test_c03_binomial_reversibility():
    t0 = time.time()
    worst = 0.0
    for i, dims in enumerate([(24,), (6, 6)]):
        env = sv.sample_environment(sv.iid_law((1, 2, 3)), dims,
                                    derive_seed(9003, i))
        rep = sv.reversibility_check(env, 0.37, 5000, derive_seed(9003, "c", i))
        worst = max(worst, rep.max_residual)
    report("3 reversibility", worst <= 1e-10,
           f"10000 ratios, max relative residual {worst:.2e}", t0, 10)


def test_c04_semigroup_reversibility_and_ck():
    t0 = time.time()
    tol = 1e-10
    worst_rev = worst_ck = worst_mass = 0.0
    for dims in [(64,), (16, 16)]:
        env = sv.sample_environment(LAW12, dims, 9004)
        gen = sv.generator(env, "alpha_walk")
        tabs = {t: sv.semigroup(gen, t, tol) for t in (0.5, 1.0, 2.0)}
        for t, tab in tabs.items():
            worst_rev = max(worst_rev, tab.reversibility_residual())
            worst_mass = max(worst_mass, tab.row_sum_residual())
        worst_ck = max(
            worst_ck,
            float(np.abs(tabs[0.5].p @ tabs[0.5].p - tabs[1.0].p).max()),
            float(np.abs(tabs[1.0].p @ tabs[1.0].p - tabs[2.0].p).max()))
    ok = worst_rev <= 1e-8 and worst_ck <= 1e-8 and worst_mass <= 1e-8
    report("4 semigroup", ok,
           f"reversibility {worst_rev:.2e}, CK {worst_ck:.2e}, "
           f"mass {worst_mass:.2e}", t0, 60)


def test_c05_time_change_equivalence():
    t0 = time.time()
    pvals = []
    for e in range(3):
        env = sv.sample_environment(LAW12, (24,), derive_seed(9005, e))
        out = sv.time_change_equivalence_check(env, 0, [0.5, 1.0, 2.0],
                                               10 ** 5, derive_seed(9005, "t", e))
        pvals.extend(out.values())
    report("5 time-change", all(p > 0.01 for p in pvals),
           "9 chi-square tests, min p = " + f"{min(pvals):.3f}", t0, 300)


def test_c06_ladder_equivalence():
    t0 = time.time()
    env = sv.sample_environment(LAW12, (16,), 9006)
    eta0 = sv.binomial_config(env, 0.5, derive_seed(9006, "init"))
    rep = sv.ladder_direct_equivalence_check(env, eta0, 1.0, 10 ** 5,
                                             derive_seed(9006, "run"))
    report("6 ladder-equivalence", rep.passed,
           f"max site |z| = {rep.max_abs_z:.2f} (cap 3)", t0, 600)


def test_c07_mild_solution_mean():
    t0 = time.time()
    env = sv.sample_environment(LAW12, (32,), 9007)
    eta0 = np.where(np.arange(32) < 16, env.alpha, 0)  # step profile
    rep = sv.mean_density_evolution_check(env, eta0, [0.5, 1.0, 2.0],
                                          10 ** 5, derive_seed(9007, "r"))
    report("7 mild-solution", rep.passed,
           f"max |z| = {rep.max_abs_z:.2f} (cap 4)", t0, 600)


def test_c08_martingale_covariations():
    t0 = time.time()
    env = sv.sample_environment(LAW12, (16,), 9008)
    eta0 = sv.binomial_config(env, 0.5, derive_seed(9008, "init"))
    adjacent = [(0, 1), (3, 4), (6, 7), (9, 10), (12, 13)]
    far = [(0, 5), (2, 9), (4, 11), (6, 13), (8, 15)]
    rep = sv.martingale_covariation_check(env, eta0, adjacent + far, 1.0,
                                          10 ** 5, derive_seed(9008, "run"))
    report("8 covariations", rep.passed,
           f"5 adjacent + 5 non-adjacent pairs, max |z| = "
           f"{rep.max_abs_z:.2f} (cap 4)", t0, 600)


def test_c09_diffusion_calibration():
    t0 = time.time()
    est1 = sv.estimate_sigma_msd(sv.constant_law(1), (256,), "msd_alpha_walk",
                                 64.0, 10 ** 5, 9109)
    rel1 = abs(est1.scalar() - 2.0) / 2.0
    est2 = sv.estimate_sigma_msd(sv.constant_law(2), (256,), "msd_alpha_walk",
                                 32.0, 10 ** 5, 9109)
    rel2 = abs(est2.scalar() - 4.0) / 4.0
    est3 = sv.estimate_sigma_msd(sv.constant_law(1), (128, 128),
                                 "msd_alpha_walk", 32.0, 10 ** 5, 9109)
    rel3 = max(abs(est3.sigma[0, 0] - 2.0), abs(est3.sigma[1, 1] - 2.0)) / 2.0
    off = abs(est3.sigma[0, 1])
    off_ok = off <= 3.0 * est3.stderr[0, 1]
    ok = rel1 <= 0.02 and rel2 <= 0.02 and rel3 <= 0.02 and off_ok
    report("9 calibration", ok,
           f"d1 a=1: {est1.scalar():.4f}, a=2: {est2.scalar():.4f}, "
           f"d2 diag: {est3.sigma[0,0]:.4f}/{est3.sigma[1,1]:.4f}, "
           f"offdiag {off:.4f}", t0, 300)


def test_c10_homogenization_oracle():
    t0 = time.time()
    oracle = sv.sigma_oracle_1d(LAW12)
    assert oracle == pytest.approx(2.3703703703703702, abs=1e-12)
    est = sv.estimate_sigma_msd(LAW12, (16384,), "msd_alpha_walk", 2048.0,
                                2 * 10 ** 5, 5, n_env=64)
    rel = abs(est.scalar() - oracle) / oracle
    report("10 sigma-oracle", rel <= 0.02,
           f"sigma = {est.scalar():.4f} vs {oracle:.6f} "
           f"(rel {rel*100:.2f}%, stderr {est.stderr[0,0]:.4f})", t0, 600)


def test_c11_variance_bound():
    t0 = time.time()
    reps = {}
    for N in (32, 64):
        env = sv.sample_environment(LAW12, (N,), 9011)
        reps[N] = sv.variance_bound_check(env, 0.5, N, BUMP, [0.5, 1.0],
                                          1500, derive_seed(9011, N))
    bound_ok = all(r.passed for by_t in reps.values() for r in by_t.values())
    mean32 = np.mean([reps[32][t].variance for t in (0.5, 1.0)])
    mean64 = np.mean([reps[64][t].variance for t in (0.5, 1.0)])
    ratio = mean32 / mean64
    report("11 variance-bound", bound_ok and ratio >= 1.8,
           f"bound holds at 4 cells, var(32)/var(64) = {ratio:.2f}", t0, 600)


def test_c12_semigroup_convergence():
    t0 = time.time()
    sigma = sv.sigma_oracle_1d(LAW12)
    wins_sup = wins_l1 = 0
    n_env = 20
    for e in range(n_env):
        envs = [sv.sample_environment(LAW12, (N,), derive_seed(9012, e, N))
                for N in (32, 128)]
        rep = sv.semigroup_convergence(envs, BUMP, sigma, T=0.2,
                                       t_grid=[0.05, 0.1])
        wins_sup += rep.sup_metric[128] < rep.sup_metric[32]
        wins_l1 += rep.l1_metric[128] < rep.l1_metric[32]
    report("12 semigroup-convergence",
           wins_sup >= 15 and wins_l1 >= 15,
           f"sup {wins_sup}/20, weighted-l1 {wins_l1}/20 decreasing", t0, 1200)


def test_c13_hydrodynamic_limit():
    t0 = time.time()
    sigma = sv.sigma_oracle_1d(LAW12)
    rho = sv.sine_profile()
    G2 = sv.gaussian_bump([0.75], 0.15, period=1.0)
    rep = sv.hdl_experiment(LAW12, 1, [32, 64, 128], rho, [BUMP, G2],
                            [0.01, 0.05, 0.1], sigma, replicas=6, seed=2024,
                            n_env=24)
    ns = sorted(rep.err)
    monotone = all(
        rep.err[b] <= rep.err[a] + 2.0 * (rep.err_stderr[a]
                                          + rep.err_stderr[b])
        for a, b in zip(ns, ns[1:]))
    cap = 0.05 * LAW12.mean_alpha() * BUMP.abs_integral()
    final_ok = rep.err[128] <= cap
    report("13 hydrodynamic-limit", monotone and final_ok,
           f"err = {[round(rep.err[n], 5) for n in ns]} vs cap {cap:.4f}",
           t0, 7200)


def test_c14_harness_determinism(tmp_path):
    t0 = time.time()
    args = ["check-all", "--seed", "11", "--dims", "10", "--law", "iid:1,2",
            "--replicas", "1000", "--out", str(tmp_path / "det"),
            "--no-figures"]
    assert cli_main(args) == 0
    first = (tmp_path / "det" / "check_all_report.json").read_bytes()
    assert cli_main(args) == 0
    second = (tmp_path / "det" / "check_all_report.json").read_bytes()
    payload = json.loads(first)
    report("14 determinism", first == second and payload["pass"],
           "byte-identical rerun at threads=1", t0, 300)
