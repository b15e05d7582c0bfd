"""Test statistic, simulated nulls, p-values and the cache format."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conetest import (
    Dataset,
    NullDistribution,
    build_convex,
    build_monotone,
    critical_value,
    negate_cone,
    p_value,
    run_test,
    simulate_null_bootstrap,
    simulate_null_knownG,
    statistic_T,
)
from conetest.engine import cone_set_hash, standardized_residuals


def double(cone):
    return [cone, negate_cone(cone)]


def null_of(samples):
    samples = np.asarray(samples, dtype=float)
    return NullDistribution(samples=samples, seed=0, nsim=len(samples), provenance="known-G",
                            cone_set_hash=b"\0" * 32)


class TestStatistic:
    def test_hand_example(self):
        # mean 1, SSE0 = 2; increasing fit (.5, .5, 2), decreasing fit constant
        out = statistic_T([1.0, 0.0, 2.0], double(build_monotone(3)))
        assert out.components == pytest.approx([0.75, 0.0])
        assert out.T == pytest.approx(0.75)
        assert out.argmax_cone == "monotone"
        assert out.sse0 == pytest.approx(2.0)

    def test_degenerate(self):
        with pytest.raises(ValueError, match="degenerate"):
            statistic_T(np.full(5, 2.0), double(build_monotone(5)))

    def test_ties_go_to_first_cone(self):
        out = statistic_T([0.0, 1.0, 0.0], double(build_monotone(3)))
        assert out.components[0] == pytest.approx(out.components[1])
        assert out.argmax_cone == "monotone"

    @given(st.integers(4, 20), st.integers(0, 10 ** 6), st.floats(0.001, 1000))
    def test_invariance(self, n, seed, sigma):
        rng = np.random.default_rng(seed)
        cone = build_convex(np.sort(rng.uniform(0, 1, n)))
        y = rng.standard_normal(n)
        beta = rng.standard_normal(2) * 10
        t = statistic_T(y, double(cone)).T
        assert statistic_T(y + cone.null_basis @ beta, double(cone)).T == pytest.approx(t, abs=1e-9)
        assert statistic_T(sigma * y, double(cone)).T == pytest.approx(t, abs=1e-9)
        assert 0.0 <= t <= 1.0

    def test_to_json(self):
        out = statistic_T([1.0, 0.0, 2.0], double(build_monotone(3)))
        js = out.to_json(include_fits=True)
        assert js["T"] == pytest.approx(0.75)
        assert "fits" in js


class TestPValues:
    def test_p_value_counts_ties(self):
        null = null_of([0.1, 0.2, 0.3, 0.4])
        assert p_value(0.25, null) == pytest.approx(3 / 5)
        assert p_value(0.3, null) == pytest.approx(3 / 5)
        assert p_value(0.5, null) == pytest.approx(1 / 5)
        assert p_value(0.0, null) == pytest.approx(1.0)

    def test_critical_value_order_statistic(self):
        null = null_of(np.arange(1, 20) / 20)
        # ceil(.95 * 20) = 19th smallest of 19
        assert critical_value(null, 0.05) == pytest.approx(19 / 20)
        assert critical_value(null, 0.5) == pytest.approx(10 / 20)
        with pytest.raises(ValueError):
            critical_value(null, 1.0)

    def test_rejection_consistent_with_p_value(self, rng):
        cone = build_monotone(12)
        y = rng.standard_normal(12) + np.linspace(0, 2, 12)
        out = run_test(y, double(cone), nsim=199, seed=1)
        assert out.reject == (out.p_value <= out.alpha)


class TestSimulation:
    def test_seed_reproducible_and_sorted(self):
        fam = double(build_monotone(10))
        a = simulate_null_knownG(fam, nsim=50, seed=3)
        b = simulate_null_knownG(fam, nsim=50, seed=3)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert np.all(np.diff(a.samples) >= 0)
        c = simulate_null_knownG(fam, nsim=50, seed=4)
        assert not np.array_equal(a.samples, c.samples)

    def test_worker_count_does_not_change_draws(self, monkeypatch):
        fam = double(build_monotone(8))
        monkeypatch.setenv("CONETEST_THREADS", "1")
        one = simulate_null_knownG(fam, nsim=40, seed=9)
        monkeypatch.setenv("CONETEST_THREADS", "2")
        two = simulate_null_knownG(fam, nsim=40, seed=9)
        np.testing.assert_array_equal(one.samples, two.samples)

    def test_custom_quantile_function(self):
        from scipy.special import ndtri

        fam = double(build_monotone(8))
        a = simulate_null_knownG(fam, nsim=30, seed=2)
        b = simulate_null_knownG(fam, nsim=30, seed=2, G=ndtri)
        np.testing.assert_allclose(a.samples, b.samples)
        with pytest.raises(ValueError):
            simulate_null_knownG(fam, nsim=5, G="cauchy")

    def test_standardized_residuals(self, rng):
        cone = build_convex(np.arange(10.0))
        y = rng.standard_normal(10) * 4 + np.arange(10.0)
        r = standardized_residuals(y, cone.null_basis)
        assert r.mean() == pytest.approx(0.0, abs=1e-12)
        assert np.mean(r ** 2) == pytest.approx(1.0)

    def test_bootstrap_from_constant_residual_law(self):
        # residuals +-1 only: every bootstrap error vector is a sign vector
        fam = double(build_monotone(6))
        res = np.array([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0])
        null = simulate_null_bootstrap(fam, residuals=res, nsim=20, seed=0)
        assert null.provenance == "bootstrap"
        assert np.all((null.samples >= 0) & (null.samples <= 1))
        with pytest.raises(ValueError):
            simulate_null_bootstrap(fam, nsim=5)


class TestCache:
    def test_round_trip(self, tmp_path):
        fam = double(build_monotone(6))
        null = simulate_null_knownG(fam, nsim=25, seed=11)
        path = tmp_path / "n.null"
        null.save(path)
        back = NullDistribution.load(path, expected_hash=null.cone_set_hash)
        np.testing.assert_array_equal(back.samples, null.samples)
        assert (back.seed, back.nsim, back.provenance) == (11, 25, "known-G")

    def test_hash_mismatch_and_magic(self, tmp_path):
        fam = double(build_monotone(6))
        null = simulate_null_knownG(fam, nsim=5, seed=1)
        path = tmp_path / "n.null"
        null.save(path)
        other = cone_set_hash(double(build_monotone(7)))
        with pytest.raises(ValueError):
            NullDistribution.load(path, expected_hash=other)
        bad = tmp_path / "bad.null"
        bad.write_bytes(b"NOTACONE" + path.read_bytes()[8:])
        with pytest.raises(ValueError, match="not a null-distribution cache"):
            NullDistribution.load(bad)

    def test_hash_depends_on_provenance(self):
        fam = double(build_monotone(6))
        assert cone_set_hash(fam, provenance="known-G") != cone_set_hash(fam,
                                                                          provenance="bootstrap")

    def test_run_test_reuses_cache(self, tmp_path, rng):
        fam = double(build_monotone(10))
        y = rng.standard_normal(10)
        first = run_test(Dataset(x=np.arange(10.0), y=y), fam, nsim=60, seed=5,
                         cache_dir=tmp_path)
        files = list(tmp_path.iterdir())
        assert len(files) == 1
        second = run_test(y, fam, nsim=60, seed=5, cache_dir=tmp_path)
        assert second.p_value == first.p_value
        assert len(list(tmp_path.iterdir())) == 1
        boot = run_test(y, fam, nsim=60, seed=5, cache_dir=tmp_path, null_mode="bootstrap")
        assert boot.null_provenance == "bootstrap"
        assert len(list(tmp_path.iterdir())) == 2

    def test_cache_hit_for_any_null_basis(self, tmp_path, rng):
        # the convex basis is not a bitwise fixed point of re-orthonormalisation
        fam = double(build_convex(np.sort(rng.uniform(size=15))))
        y = rng.standard_normal(15)
        first = run_test(y, fam, nsim=30, seed=2, cache_dir=tmp_path)
        second = run_test(y, fam, nsim=30, seed=2, cache_dir=tmp_path)
        assert second.p_value == first.p_value
        assert len(list(tmp_path.iterdir())) == 1

    def test_bad_null_mode(self, rng):
        with pytest.raises(ValueError, match="null_mode"):
            run_test(rng.standard_normal(5), double(build_monotone(5)), nsim=5,
                     null_mode="permutation")


class TestDataset:
    def test_validation(self):
        with pytest.raises(ValueError, match="rows"):
            Dataset(x=np.zeros(3), y=np.zeros(4))
        with pytest.raises(ValueError, match="weights"):
            Dataset(x=np.zeros(3), y=np.zeros(3), weights=[1.0, -1.0, 1.0])
        with pytest.raises(ValueError, match="NaN"):
            Dataset(x=np.zeros(3), y=[0.0, np.nan, 1.0])
        d = Dataset(x=np.arange(3.0), y=np.zeros(3))
        assert (d.n, d.d) == (3, 1)
