import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amortclust.features import acf
from amortclust.simulate import (ARSpec, GARCHSpec, PACFSpec, SETARSpec, StationarityError,
                                 check_ar_stationary, durbin_levinson, sample_student_t_std,
                                 simulate_ar, simulate_garch, simulate_setar)


def _roots_outside(phi):
    # roots of 1 - phi1 z - phi2 z^2 - phi3 z^3, highest power first for np.roots
    coeffs = [-phi[2], -phi[1], -phi[0], 1.0]
    while coeffs and coeffs[0] == 0:
        coeffs.pop(0)
    return np.all(np.abs(np.roots(coeffs)) > 1.0)


class TestDurbinLevinson:
    def test_ar1_passthrough(self):
        assert durbin_levinson(PACFSpec((0.5, 0.0, 0.0))) == pytest.approx((0.5, 0.0, 0.0), abs=1e-15)

    def test_two_terms_by_hand(self):
        # phi1 = k1 (1 - k2), phi2 = k2
        assert durbin_levinson(PACFSpec((0.5, 0.2, 0.0))) == pytest.approx((0.4, 0.2, 0.0), abs=1e-15)

    def test_extreme_pacf_is_causal(self):
        phi = durbin_levinson(PACFSpec((0.9, -0.9, 0.9)))
        assert _roots_outside(phi)
        assert check_ar_stationary(phi)

    @pytest.mark.parametrize("bad", [(1.0, 0, 0), (0, -1.0, 0), (0, 0, 1.5)])
    def test_rejects_boundary(self, bad):
        with pytest.raises(ValueError):
            durbin_levinson(PACFSpec(bad))

    def test_random_sweep_agrees_with_root_oracle(self, rng):
        for kappa in rng.uniform(-0.999, 0.999, size=(2000, 3)):
            phi = durbin_levinson(PACFSpec(tuple(kappa)))
            assert _roots_outside(phi)


class TestStationarityCheck:
    def test_examples(self):
        assert check_ar_stationary((0, 0, 0))
        assert not check_ar_stationary((1.0, 0, 0))
        assert check_ar_stationary((0.4, 0.2, 0))

    @settings(max_examples=200, deadline=None)
    @given(st.tuples(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5),
                     st.floats(-2.5, 2.5).filter(lambda v: abs(v) > 1e-3)))
    def test_matches_polynomial_roots(self, phi):
        # cubic term kept away from zero so np.roots stays well conditioned
        roots = np.roots([-phi[2], -phi[1], -phi[0], 1.0])
        margin = np.min(np.abs(roots)) - 1
        if abs(margin) < 1e-6:
            return
        assert check_ar_stationary(phi) == (margin > 0)


class TestAR:
    def test_white_noise_variance(self):
        x = simulate_ar(ARSpec((0, 0, 0), 1.0), 100_000, np.random.default_rng(1))
        assert abs(x.var() - 1) < 0.05

    def test_ar1_lag1(self):
        x = simulate_ar(ARSpec((0.5, 0, 0), 1.0), 100_000, np.random.default_rng(2))
        assert abs(acf(x, [1])[0] - 0.5) < 0.02

    def test_deterministic(self):
        spec = ARSpec((0.3, -0.2, 0.1), 0.7)
        a = simulate_ar(spec, 300, np.random.default_rng(9))
        b = simulate_ar(spec, 300, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_matches_explicit_recursion(self):
        spec = ARSpec((0.3, -0.2, 0.1), 0.7)
        T, burn = 50, 20
        x = simulate_ar(spec, T, np.random.default_rng(4), burn_in=burn)
        eps = np.random.default_rng(4).normal(0.0, np.sqrt(0.7), T + burn)
        full = np.zeros(T + burn + 3)
        for t in range(T + burn):
            full[t + 3] = 0.3 * full[t + 2] - 0.2 * full[t + 1] + 0.1 * full[t] + eps[t]
        assert np.allclose(x, full[-T:], rtol=0, atol=1e-12)

    def test_rejects_noncausal(self):
        with pytest.raises(StationarityError):
            simulate_ar(ARSpec((1.0, 0, 0), 1.0), 10, np.random.default_rng(0))

    def test_white_noise_acf_band(self):
        T = 500
        hits = 0
        for s in range(1000):
            x = simulate_ar(ARSpec((0, 0, 0), 1.0), T, np.random.default_rng(s))
            hits += np.all(np.abs(acf(x, [1, 2, 3])) < 4 / np.sqrt(T))
        assert hits >= 950


class TestStudentT:
    def _moments(self, nu, seed):
        z = sample_student_t_std(nu, np.random.default_rng(seed), size=1_000_000)
        return z.var(), ((z - z.mean()) ** 4).mean() / z.var() ** 2 - 3

    def test_near_gaussian(self):
        var, kurt = self._moments(10000, 0)
        assert abs(var - 1) < 0.01
        assert abs(kurt) < 0.05

    def test_nu5(self):
        assert abs(self._moments(5, 1)[0] - 1) < 0.02

    def test_nu3(self):
        assert abs(self._moments(3, 2)[0] - 1) < 0.10

    def test_rejects_small_nu(self):
        with pytest.raises(ValueError):
            sample_student_t_std(2.0, np.random.default_rng(0))


class TestGARCH:
    def test_iid_reduction(self):
        x = simulate_garch(GARCHSpec(1.0, 0.0, 0.0, 10000), 100_000, np.random.default_rng(3))
        assert abs(x.var() - 1) < 0.05

    def test_unconditional_variance(self):
        spec = GARCHSpec(1e-5, 0.1, 0.85, 10000)
        x = simulate_garch(spec, 200_000, np.random.default_rng(4))
        assert spec.unconditional_variance == pytest.approx(2e-4)
        assert abs(x.var() / 2e-4 - 1) < 0.15

    def test_volatility_clustering(self):
        x = simulate_garch(GARCHSpec(1e-5, 0.2, 0.7, 10000), 100_000, np.random.default_rng(5))
        assert acf(x ** 2, [1])[0] > 0

    def test_rejects_nonstationary(self):
        with pytest.raises(StationarityError):
            simulate_garch(GARCHSpec(1e-5, 0.3, 0.7), 10, np.random.default_rng(0))

    def test_finite_over_long_runs(self, rng):
        for _ in range(100):
            a = rng.uniform(0.01, 0.3)
            b = rng.uniform(0.7, 1 - a)
            nu = rng.choice([3, 4, 5, 6, 7, 8, 10000])
            x = simulate_garch(GARCHSpec(rng.uniform(1e-6, 1e-4), a, b, nu), 10_000, rng)
            assert np.all(np.isfinite(x))
        x = simulate_garch(GARCHSpec(1e-5, 0.29, 0.7099, 3), 1_000_000, rng)
        assert np.all(np.isfinite(x))


class TestSETAR:
    def test_equal_regimes_is_ar1(self):
        x = simulate_setar(SETARSpec(0.6, 0.6, 0.3), 100_000, np.random.default_rng(6))
        assert abs(acf(x, [1])[0] - 0.6) < 0.02

    def test_asymmetric_regimes_mean(self):
        spec = SETARSpec(0.8, -0.8, 0.0)
        x = simulate_setar(spec, 100_000, np.random.default_rng(7))
        assert np.all(np.isfinite(x))
        long_run = simulate_setar(spec, 10_000_000, np.random.default_rng(8)).mean()
        assert abs(x.mean() - long_run) < 0.05

    def test_deterministic(self):
        spec = SETARSpec(0.5, -0.3, 0.1)
        assert np.array_equal(simulate_setar(spec, 200, np.random.default_rng(1)),
                              simulate_setar(spec, 200, np.random.default_rng(1)))

    def test_regime_switch_by_hand(self):
        # zero noise is not available, so check the recursion on the realised path
        spec = SETARSpec(0.9, -0.4, 0.25)
        x = simulate_setar(spec, 2000, np.random.default_rng(2), burn_in=0)
        resid = x[1:] - np.where(x[:-1] <= 0.25, 0.9, -0.4) * x[:-1]
        assert abs(resid.std() - 1) < 0.05
        wrong = x[1:] - np.where(x[:-1] > 0.25, 0.9, -0.4) * x[:-1]
        assert wrong.std() > resid.std() + 0.05

    def test_rejects_explosive(self):
        with pytest.raises(StationarityError):
            simulate_setar(SETARSpec(1.0, 0.2, 0.0), 10, np.random.default_rng(0))
