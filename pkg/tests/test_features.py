import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from amortclust.features import (DegenerateSeriesError, FeatureDataset, FeatureExtractionError, FeatureSpec,
                                 acf, empirical_quantile, extract_features, qaf, read_features_csv,
                                 write_features_csv)
from amortclust.scenarios import ScenarioConfig, collection_rng, generate


def acf_loop(x, lags):
    """Double-loop estimator, no vectorisation."""
    T = len(x)
    m = sum(x) / T
    den = sum((v - m) ** 2 for v in x)
    out = []
    for l in lags:
        num = 0.0
        for t in range(T - l):
            num += (x[t + l] - m) * (x[t] - m)
        out.append(num / den)
    return np.array(out)


def quantile_by_position(x, tau):
    s = sorted(x)
    pos = 1 + (len(s) - 1) * tau  # 1-based
    lo = int(np.floor(pos))
    frac = pos - lo
    if lo >= len(s):
        return s[-1]
    return s[lo - 1] + frac * (s[lo] - s[lo - 1])


def qaf_loop(x, levels, lags):
    T = len(x)
    out = []
    for tau, tau2 in itertools.product(levels, levels):
        q1, q2 = quantile_by_position(x, tau), quantile_by_position(x, tau2)
        for l in lags:
            count = 0
            for t in range(T - l):
                count += (x[t] <= q1) and (x[t + l] <= q2)
            out.append((count / T - tau * tau2) / np.sqrt(tau * (1 - tau) * tau2 * (1 - tau2)))
    return np.array(out)


def _rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))


class TestACF:
    def test_hand_example(self):
        assert acf([1, 2, 3, 4, 5], [1])[0] == pytest.approx(0.4, abs=1e-15)

    def test_lag_zero(self):
        assert acf(np.random.default_rng(0).normal(size=30), [0])[0] == 1.0

    def test_constant_rejected(self):
        with pytest.raises(DegenerateSeriesError):
            acf(np.full(10, 3.0), [1])

    def test_against_loop(self, rng):
        for _ in range(200):
            x = rng.normal(size=rng.integers(5, 60))
            lags = list(range(1, min(4, len(x))))
            assert _rel_err(acf(x, lags), acf_loop(x.tolist(), lags)) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(4, 40), elements=st.floats(-1e3, 1e3)))
    def test_bounded(self, x):
        if np.ptp(x) < 1e-6:
            return
        assert np.all(np.abs(acf(x, range(1, len(x)))) <= 1 + 1e-12)


class TestQuantile:
    def test_examples(self):
        assert empirical_quantile([1, 2, 3, 4, 5], 0.5) == 3
        assert empirical_quantile([1, 2, 3, 4], 0.5) == 2.5
        assert empirical_quantile(np.arange(101), 0.25) == 25

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1])
    def test_rejects_level(self, tau):
        with pytest.raises(ValueError):
            empirical_quantile([1, 2], tau)

    def test_matches_position_rule(self, rng):
        for _ in range(200):
            x = rng.normal(size=rng.integers(1, 30))
            tau = rng.uniform(0.01, 0.99)
            assert empirical_quantile(x, tau) == pytest.approx(quantile_by_position(x.tolist(), tau), rel=1e-12)


class TestQAF:
    def test_increasing_series_hand_count(self):
        assert qaf(np.arange(1.0, 6.0), [0.5], [1])[0] == pytest.approx(0.6, abs=1e-15)

    def test_iid_near_zero(self):
        x = np.random.default_rng(0).normal(size=100_000)
        assert np.all(np.abs(qaf(x, [0.5], [1, 2, 3])) < 0.02)

    def test_against_loop(self, rng):
        levels, lags = (0.1, 0.5, 0.9), (1, 2, 3)
        for _ in range(100):
            x = rng.standard_t(4, size=rng.integers(5, 40))
            assert _rel_err(qaf(x, levels, lags), qaf_loop(x.tolist(), levels, lags)) < 1e-12

    def test_layout_is_lexicographic(self, rng):
        x = rng.normal(size=200)
        spec = FeatureSpec.paper_qaf()
        v = qaf(x, spec.levels, spec.lags)
        for k, (t1, t2, l) in enumerate(spec.layout()):
            assert v[k] == pytest.approx(qaf_loop(x.tolist(), [t1, t2], [l])[1], rel=1e-12)
        assert spec.column_names()[spec.layout().index((0.1, 0.9, 2))] == "qaf_0.1_0.9_2"

    def test_monotone_transform_invariance(self, rng):
        x = rng.normal(size=300)
        spec = FeatureSpec.paper_qaf()
        assert np.max(np.abs(qaf(x, spec.levels, spec.lags) - qaf(np.exp(x), spec.levels, spec.lags))) < 1e-9

    def test_constant_series_computes(self):
        v = qaf(np.ones(20), [0.5], [1])
        assert np.isfinite(v).all()


class TestSpec:
    def test_dimensions(self):
        assert FeatureSpec("acf", (1, 2, 3)).dim == 3
        assert FeatureSpec.paper_qaf().dim == 27

    @pytest.mark.parametrize("kw", [dict(kind="acf", lags=(2, 1)), dict(kind="acf", lags=(0,)),
                                    dict(kind="qaf", lags=(1,), levels=(0.5, 0.1)),
                                    dict(kind="qaf", lags=(1,), levels=(1.0,)),
                                    dict(kind="acf", lags=(1,), levels=(0.5,)), dict(kind="pacf")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            FeatureSpec(**kw)

    def test_max_lag_below_length(self):
        with pytest.raises(FeatureExtractionError) as ei:
            extract_features(np.random.default_rng(0).normal(size=(3, 3)), FeatureSpec("acf", (1, 2, 3)))
        assert ei.value.index == 0


class TestExtract:
    def test_shape_and_labels(self):
        coll = generate(ScenarioConfig(scenario=1, T=100), collection_rng(0, 0))
        ds = extract_features(coll, FeatureSpec())
        assert ds.values.shape == (20, 3)
        assert np.array_equal(ds.labels, coll.labels)

    def test_qaf_dim(self):
        coll = generate(ScenarioConfig(scenario=1, T=100), collection_rng(0, 1))
        assert extract_features(coll, FeatureSpec.paper_qaf()).d == 27

    def test_order_equivariance(self, rng):
        X = rng.normal(size=(15, 80))
        perm = rng.permutation(15)
        spec = FeatureSpec.paper_qaf()
        assert np.array_equal(extract_features(X[perm], spec).values, extract_features(X, spec).values[perm])

    def test_error_names_series(self, rng):
        X = rng.normal(size=(5, 50))
        X[3] = 1.0
        with pytest.raises(FeatureExtractionError) as ei:
            extract_features(X, FeatureSpec())
        assert ei.value.index == 3

    def test_csv_roundtrip(self, tmp_path, rng):
        for spec in (FeatureSpec("acf", (1, 2, 5)), FeatureSpec.paper_qaf()):
            ds = FeatureDataset(rng.normal(size=(7, spec.dim)), spec, rng.integers(0, 3, 7))
            write_features_csv(ds, tmp_path / "f.csv", ids=[f"s{i}" for i in range(7)])
            back, ids = read_features_csv(tmp_path / "f.csv")
            assert ids == [f"s{i}" for i in range(7)]
            assert back.spec == spec
            assert np.array_equal(back.values, ds.values)
            assert np.array_equal(back.labels, ds.labels)
