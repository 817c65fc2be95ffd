from fractions import Fraction

import numpy as np
import pytest

import sepenv as sv
from sepenv.random_walk import DENSE_SITE_CAP

from conftest import explicit_env


class TestRatesAndDistributions:
    def test_holding_rate_explicit(self):
        # neighbors of site 1 carry alpha (2, 3)
        env = explicit_env([2, 5, 3, 1])
        assert sv.holding_rate(env, 1) == 5.0
        r = sv.jump_distribution(env, 1)
        assert r.tolist() == [3 / 5, 2 / 5]  # slots: +e then -e

    def test_homogeneous_2d(self):
        env = sv.sample_environment(sv.constant_law(1), (4, 4), 0)
        assert sv.holding_rate(env, 5) == 4.0
        assert np.allclose(sv.jump_distribution(env, 5), 0.25)

    def test_omega_holding_rate_factorizes(self, env123_8):
        for x in range(env123_8.n_sites):
            lam_a = sv.holding_rate(env123_8, x, "alpha_walk")
            lam_w = sv.holding_rate(env123_8, x, "omega_walk")
            assert lam_w == env123_8.alpha[x] * lam_a

    def test_jump_distribution_sums_exactly(self, env123_8):
        for x in range(env123_8.n_sites):
            nbr = env123_8.torus.neighbors[x]
            lam = Fraction(int(env123_8.alpha[nbr].sum()))
            total = sum(Fraction(int(a)) / lam for a in env123_8.alpha[nbr])
            assert total == 1
            assert abs(sv.jump_distribution(env123_8, x).sum() - 1.0) < 1e-15


class TestGenerator:
    def test_rows_sum_to_zero_exactly(self, env123_8):
        for kind in ("alpha_walk", "omega_walk"):
            gen = sv.generator(env123_8, kind)
            assert np.all(gen.row_sums() == 0)

    def test_rates_match_definitions(self, env123_8):
        tor = env123_8.torus
        a = env123_8.alpha
        gen_a = sv.generator(env123_8, "alpha_walk")
        gen_w = sv.generator(env123_8, "omega_walk")
        for x in range(env123_8.n_sites):
            for j, y in enumerate(tor.neighbors[x]):
                assert gen_a.off_rates[x, j] == a[y]
                assert gen_w.off_rates[x, j] == a[x] * a[y]

    def test_dense_action_agree(self, env123_8):
        gen = sv.generator(env123_8, "alpha_walk")
        v = np.sin(np.arange(env123_8.n_sites))
        assert np.allclose(gen.to_dense() @ v, gen.apply(v))


class TestSemigroup:
    def test_identity_at_zero(self, env123_8):
        gen = sv.generator(env123_8, "alpha_walk")
        tab = sv.semigroup(gen, 0.0, 1e-10)
        assert np.array_equal(tab.p, np.eye(env123_8.n_sites))

    @pytest.mark.parametrize("kind", ["alpha_walk", "omega_walk"])
    def test_methods_agree(self, env123_8, kind):
        gen = sv.generator(env123_8, kind)
        t1 = sv.semigroup(gen, 0.8, 1e-12)
        t2 = sv.semigroup(gen, 0.8, 1e-12, method="scaling_squaring")
        assert np.abs(t1.p - t2.p).max() < 1e-10

    def test_chapman_kolmogorov(self, env123_8):
        gen = sv.generator(env123_8, "alpha_walk")
        tol = 1e-10
        pa = sv.semigroup(gen, 0.6, tol).p
        pb = sv.semigroup(gen, 0.9, tol).p
        pc = sv.semigroup(gen, 1.5, tol).p
        assert np.abs(pa @ pb - pc).max() <= 100 * tol

    def test_mass_conservation_and_reversibility(self, env123_8):
        gen = sv.generator(env123_8, "alpha_walk")
        tol = 1e-10
        for t in (0.5, 2.0):
            tab = sv.semigroup(gen, t, tol)
            assert tab.row_sum_residual() <= 10 * tol
            assert tab.reversibility_residual() <= 10 * tol

    def test_invalid_tol_rejected(self, env123_8):
        gen = sv.generator(env123_8, "alpha_walk")
        with pytest.raises(ValueError):
            sv.semigroup(gen, 1.0, 0.0)

    def test_dense_cap(self, law12):
        env = sv.sample_environment(law12, (DENSE_SITE_CAP + 2,), 0)
        with pytest.raises(ValueError):
            sv.semigroup(sv.generator(env, "alpha_walk"), 1.0)

    def test_action_matches_dense(self, env123_8):
        gen = sv.generator(env123_8, "alpha_walk")
        v = np.cos(np.arange(env123_8.n_sites) / 3.0)
        tab = sv.semigroup(gen, 1.3, 1e-12)
        assert np.allclose(sv.semigroup_action(gen, v, 1.3, 1e-12), tab.p @ v)

    def test_action_grid_incremental(self, env123_8):
        gen = sv.generator(env123_8, "alpha_walk")
        v = np.cos(np.arange(env123_8.n_sites) / 3.0)
        grid = sv.semigroup_action_grid(gen, v, [0.4, 1.0], 1e-12)
        direct = sv.semigroup_action(gen, v, 1.0, 1e-12)
        assert np.abs(grid[1] - direct).max() < 1e-10

    def test_transition_row(self, env123_8):
        gen = sv.generator(env123_8, "alpha_walk")
        tab = sv.semigroup(gen, 0.7, 1e-12)
        row = sv.transition_row(gen, 3, 0.7, 1e-12)
        assert np.abs(row - tab.p[3]).max() < 1e-10

    def test_table_exports(self, env123_8, tmp_path):
        gen = sv.generator(env123_8, "alpha_walk")
        tab = sv.semigroup(gen, 0.5, 1e-10)
        rows = list(tab.to_csv_rows())
        assert rows[0][0].startswith("# t=")
        assert len(rows) == 2 + 8 * 8
        path = tab.save_npz(tmp_path / "table.npz")
        loaded = np.load(path)
        assert np.array_equal(loaded["p"], tab.p)
        assert float(loaded["t"]) == 0.5


class TestHeatKernel:
    def test_delta_initial_law(self, env123_8):
        assert sv.heat_kernel(env123_8, 0.0, 2, 5) == 0.0
        assert sv.heat_kernel(env123_8, 0.0, 2, 2) == pytest.approx(
            1.0 / env123_8.alpha[2])

    def test_symmetry(self, env123_8):
        for (x, y) in [(0, 3), (1, 6), (2, 7)]:
            a = sv.heat_kernel(env123_8, 0.8, x, y)
            b = sv.heat_kernel(env123_8, 0.8, y, x)
            assert abs(a - b) <= 1e-10

    def test_bound_constant_stable_over_tori(self):
        cs = []
        for L in (64, 128, 256):
            env = sv.sample_environment(sv.constant_law(1), (L,), 0)
            rep = sv.heat_kernel_bound_check(env, [1.0], 1e-10)
            cs.append(rep.c_fit)
        ref = cs[-1]
        assert all(abs(c - ref) / ref < 0.05 for c in cs)

    def test_bound_requires_positive_t(self, env123_8):
        with pytest.raises(ValueError):
            sv.heat_kernel_bound_check(env123_8, [0.0])


class TestDirichletAndNash:
    def test_constant_function_vanishes(self, env123_8):
        assert sv.dirichlet_form(env123_8, np.ones(8)) == 0.0

    def test_indicator_value_by_hand(self):
        env = sv.sample_environment(sv.constant_law(1), (16,), 0)
        f = np.zeros(16)
        f[7] = 1.0
        assert sv.dirichlet_form(env, f) == pytest.approx(2.0)

    def test_monotone_in_conductance(self, env123_8):
        ones = sv.sample_environment(sv.constant_law(1), (8,), 0)
        rng = np.random.default_rng(4)
        for _ in range(25):
            f = rng.normal(size=8)
            assert sv.dirichlet_form(env123_8, f) >= sv.dirichlet_form(ones, f)

    def test_nash_ratio_zero_rejected(self, env123_8):
        with pytest.raises(ValueError):
            sv.nash_ratio(env123_8, np.zeros(8))

    def test_nash_ratio_positive_floor_on_localized_vectors(self, law12):
        # torus constants defeat the whole-lattice inequality, so the floor
        # is probed on vectors supported in a half-torus window
        env = sv.sample_environment(law12, (32,), 9)
        rng = np.random.default_rng(11)
        ratios = []
        for _ in range(200):
            f = np.zeros(32)
            width = rng.integers(2, 16)
            start = rng.integers(0, 32 - width)
            f[start:start + width] = rng.normal(size=width)
            if np.any(f):
                ratios.append(sv.nash_ratio(env, f))
        assert min(ratios) > 0.05


class TestTrajectories:
    def test_tiny_horizon_is_empty(self, env123_8):
        traj = sv.simulate_walk(env123_8, "alpha_walk", 0, 1e-9, 1)
        assert traj.n_jumps == 0
        assert traj.site_at(1e-10) == 0

    def test_consecutive_sites_are_neighbors(self, env123_8):
        traj = sv.simulate_walk(env123_8, "alpha_walk", 0, 20.0, 5)
        assert traj.n_jumps > 0
        assert traj.validate_neighbors(env123_8)
        assert np.all(np.diff(traj.times) > 0)
        assert traj.times[-1] <= traj.horizon

    def test_deterministic_in_seed(self, env123_8):
        t1 = sv.simulate_walk(env123_8, "omega_walk", 2, 5.0, 42)
        t2 = sv.simulate_walk(env123_8, "omega_walk", 2, 5.0, 42)
        assert np.array_equal(t1.times, t2.times)
        assert np.array_equal(t1.sites, t2.sites)

    def test_poisson_jump_counts_homogeneous(self):
        # alpha = 1, d = 1: jumps ~ Poisson(2T)
        env = sv.sample_environment(sv.constant_law(1), (64,), 0)
        T = 4.0
        ens = sv.walk_ensemble(env, "alpha_walk", 0, [T], 10 ** 4, 3)
        mean = ens.jump_counts.mean()
        stderr = ens.jump_counts.std(ddof=1) / 100.0
        assert abs(mean - 2 * T) <= 3 * stderr

    def test_jump_counts_rate_m(self):
        # alpha = m: total jump rate 2 d m
        env = sv.sample_environment(sv.constant_law(3), (64,), 0)
        T = 2.0
        ens = sv.walk_ensemble(env, "alpha_walk", 0, [T], 10 ** 4, 3)
        mean = ens.jump_counts.mean()
        stderr = ens.jump_counts.std(ddof=1) / 100.0
        assert abs(mean - 2 * 3 * T) <= 3 * stderr


class TestTimeChange:
    def test_unit_speed_identity(self):
        env = sv.sample_environment(sv.constant_law(1), (16,), 0)
        traj = sv.simulate_walk(env, "omega_walk", 0, 5.0, 9)
        changed = sv.time_change(traj, env)
        assert np.allclose(changed.times, traj.times)
        assert changed.horizon == pytest.approx(traj.horizon)

    def test_constant_speed_scales_times(self):
        env = sv.sample_environment(sv.constant_law(3), (16,), 0)
        traj = sv.simulate_walk(env, "omega_walk", 0, 2.0, 9)
        changed = sv.time_change(traj, env)
        assert np.allclose(changed.times, 3.0 * traj.times)
        assert changed.horizon == pytest.approx(3.0 * traj.horizon)

    def test_requires_omega_kind(self, env123_8):
        traj = sv.simulate_walk(env123_8, "alpha_walk", 0, 1.0, 9)
        with pytest.raises(ValueError):
            sv.time_change(traj, env123_8)

    def test_distributional_equivalence_quick(self, env12_16):
        pvals = sv.time_change_equivalence_check(env12_16, 0, [1.0], 30000, 7)
        assert all(p > 0.01 for p in pvals.values())


class TestMsdLinearity:
    def test_homogeneous_msd_r_squared(self):
        env = sv.sample_environment(sv.constant_law(1), (512,), 0)
        T = 16.0
        ts = np.linspace(T / 2, T, 9)
        ens = sv.walk_ensemble(env, "alpha_walk", 0, ts, 10 ** 5, 21)
        var = ens.displacement[:, :, 0].astype(float).var(axis=1)
        A = np.vstack([ts, np.ones_like(ts)]).T
        coef, res, *_ = np.linalg.lstsq(A, var, rcond=None)
        ss_tot = ((var - var.mean()) ** 2).sum()
        r2 = 1.0 - res[0] / ss_tot
        assert r2 >= 0.999
