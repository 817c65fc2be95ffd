import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import sepenv as sv
from sepenv.seeding import derive_seed

from conftest import explicit_env


class TestEnvLaw:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            sv.EnvLaw("iid", (1, 2), (0.5, 0.6))

    def test_support_must_be_positive(self):
        with pytest.raises(ValueError):
            sv.EnvLaw("iid", (0, 1), (0.5, 0.5))

    def test_markov_needs_stationary_weights(self):
        T = ((0.9, 0.1), (0.1, 0.9))
        with pytest.raises(ValueError):
            sv.EnvLaw("markov_chain_1d_product", (1, 2), (0.9, 0.1), T)
        law = sv.markov_law((1, 2), T)
        assert law.weights == pytest.approx((0.5, 0.5), abs=1e-12)

    def test_markov_rows_must_be_stochastic(self):
        with pytest.raises(ValueError):
            sv.EnvLaw("markov_chain_1d_product", (1, 2), (0.5, 0.5),
                      ((0.9, 0.2), (0.1, 0.9)))

    def test_moments(self):
        law = sv.iid_law((1, 2))
        assert law.mean_alpha() == pytest.approx(1.5)
        assert law.mean_inv_alpha() == pytest.approx(0.75)


class TestSampling:
    def test_constant_law_is_degenerate(self):
        env = sv.sample_environment(sv.constant_law(1), (8,), 5)
        assert np.all(env.alpha == 1)

    def test_iid_mean_large_torus(self):
        # law of large numbers: mean within 1.5 +- 0.002 (4 binomial sigma)
        env = sv.sample_environment(sv.iid_law((1, 2)), (10 ** 6,), 17)
        assert abs(env.alpha.mean() - 1.5) < 0.002

    def test_markov_lag1_autocorrelation(self):
        # second transition eigenvalue 0.8 is the stationary autocorrelation
        law = sv.markov_law((1, 2), ((0.9, 0.1), (0.1, 0.9)))
        env = sv.sample_environment(law, (10 ** 6,), 23)
        a = env.alpha.astype(float)
        a0 = a - a.mean()
        rho1 = np.dot(a0[:-1], a0[1:]) / np.dot(a0, a0)
        assert abs(rho1 - 0.8) < 0.01

    def test_determinism_bit_for_bit(self, law12):
        e1 = sv.sample_environment(law12, (64, 64), 99)
        e2 = sv.sample_environment(law12, (64, 64), 99)
        assert np.array_equal(e1.alpha, e2.alpha)

    def test_ellipticity_enforced(self, law123):
        for seed in range(5):
            env = sv.sample_environment(law123, (10, 10), seed)
            assert env.alpha.min() >= 1 and env.alpha.max() <= env.c_max

    def test_invalid_c_max_rejected(self, law12):
        with pytest.raises(ValueError):
            sv.sample_environment(law12, (8,), 0, c_max=1)

    def test_dims_must_be_at_least_two(self, law12):
        with pytest.raises(ValueError):
            sv.sample_environment(law12, (1,), 0)


class TestConductances:
    def test_identity_case(self):
        env = sv.sample_environment(sv.constant_law(1), (8,), 0)
        assert np.all(sv.conductances(env).omega == 1)

    def test_explicit_products(self):
        env = explicit_env([2, 3, 1])
        cf = sv.conductances(env)
        assert cf.omega.tolist() == [6, 3, 2]

    def test_symmetry_and_range(self, env123_8):
        cf = sv.conductances(env123_8)
        directed = cf.directed()
        tor = env123_8.torus
        for b in range(tor.n_directed_bonds):
            x, y = tor.bond_from[b], tor.bond_to[b]
            assert cf.value(int(x), int(y)) == cf.value(int(y), int(x))
        assert directed.min() >= 1
        assert directed.max() <= env123_8.c_max ** 2

    def test_non_neighbor_rejected(self, env12_16):
        with pytest.raises(ValueError):
            sv.conductances(env12_16).value(0, 5)


class TestTranslate:
    def test_zero_shift_identity(self, env123_8):
        assert np.array_equal(sv.translate(env123_8, [0]).alpha,
                              env123_8.alpha)

    def test_full_wrap_identity(self, env123_8):
        assert np.array_equal(sv.translate(env123_8, [8]).alpha,
                              env123_8.alpha)

    def test_definition(self):
        env = explicit_env([1, 2, 3, 4])
        shifted = sv.translate(env, [1])
        assert shifted.alpha.tolist() == [2, 3, 4, 1]

    @settings(max_examples=30, deadline=None)
    @given(shift=st.integers(-20, 20), seed=st.integers(0, 50))
    def test_group_action_involution(self, shift, seed):
        env = sv.sample_environment(sv.iid_law((1, 2, 3)), (6, 5), seed)
        back = sv.translate(sv.translate(env, [shift, 2]), [-shift, -2])
        assert np.array_equal(back.alpha, env.alpha)


class TestSerialization:
    def test_roundtrip_bit_for_bit(self, env123_8):
        clone = sv.Environment.from_json(env123_8.to_json())
        assert np.array_equal(clone.alpha, env123_8.alpha)
        assert clone.law == env123_8.law
        assert clone.dims == env123_8.dims
        assert clone.content_hash() == env123_8.content_hash()


class TestErgodicAverage:
    def test_constant_factorization(self):
        env = sv.sample_environment(sv.constant_law(2), (64,), 0)
        F = sv.polynomial_bump([0.5], 0.3)
        pts = env.torus.positions(scale=64)
        riemann = float(F(pts).sum() / 64)
        assert sv.ergodic_average(env, F, 64) == pytest.approx(2 * riemann)

    def test_riemann_limit(self):
        # alpha = 1: pure Riemann sum; grid-misaligned bump so the error is
        # visible, decaying far faster than the 1/N guarantee
        F = sv.gaussian_bump([0.537], 0.251)
        errs = []
        for N in (32, 64, 128, 256):
            env = sv.sample_environment(sv.constant_law(1), (N,), 0)
            errs.append(abs(sv.ergodic_average(env, F, N) - F.integral()))
        assert errs[-1] < errs[0]
        assert errs[-1] < 1.0 / 256

    def test_iid_mean_with_ci(self, law12):
        F = sv.gaussian_bump([0.25], 0.25)
        scale = F.integral()
        vals = [sv.ergodic_average(
            sv.sample_environment(law12, (512,), derive_seed(7, s)), F, 512)
            / scale for s in range(50)]
        assert abs(np.mean(vals) - 1.5) < 0.05

    def test_deviation_non_increasing_in_N(self, law12):
        F = sv.gaussian_bump([0.25], 0.25)
        target = 1.5 * F.integral()
        mean_dev = {}
        devs_by_n = {}
        for N in (64, 128, 256, 512):
            devs = [abs(sv.ergodic_average(
                sv.sample_environment(law12, (N,), derive_seed(13, N, s)),
                F, N) - target) for s in range(50)]
            mean_dev[N] = np.mean(devs)
            devs_by_n[N] = np.std(devs, ddof=1) / np.sqrt(50)
        ns = sorted(mean_dev)
        for a, b in zip(ns, ns[1:]):
            slack = 2.0 * (devs_by_n[a] + devs_by_n[b])
            assert mean_dev[b] <= mean_dev[a] + slack

    def test_support_overflow_rejected(self, env12_16):
        F = sv.gaussian_bump([0.5], 0.3)
        with pytest.raises(ValueError):
            sv.ergodic_average(env12_16, F, 64)  # support [0.2,0.8] vs 16/64
