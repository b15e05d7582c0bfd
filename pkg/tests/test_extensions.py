"""Weighted and correlated errors, partial-linear, additive and multi-d constant tests."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conetest import (
    Dataset,
    build_monotone,
    build_partial_linear,
    collapse_duplicates,
    cone_for_predictor,
    negate_cone,
    project_cone,
    run_test,
    statistic_T,
    test_additive,
    test_constant_multid,
    test_partial_linear,
    whiten,
)
from conetest.extensions import whiten_family

from test_projection import weighted_isotonic_oracle


class TestWhitening:
    def test_identity_covariance(self, rng):
        y = rng.standard_normal(6)
        data = Dataset(x=np.arange(6.0), y=y)
        prob = whiten(data, build_monotone(6), np.eye(6))
        np.testing.assert_allclose(prob.y_tilde, y)
        np.testing.assert_allclose(project_cone(y, prob.cone_tilde).fit,
                                   project_cone(y, build_monotone(6)).fit, atol=1e-12)

    def test_transform_whitens(self, rng):
        M = rng.standard_normal((5, 5))
        Sigma = M @ M.T + 5 * np.eye(5)
        prob = whiten(Dataset(x=np.arange(5.0), y=rng.standard_normal(5)), build_monotone(5),
                      Sigma)
        np.testing.assert_allclose(prob.transform @ Sigma @ prob.transform.T, np.eye(5),
                                   atol=1e-10)
        np.testing.assert_allclose(prob.unwhiten(prob.y_tilde), prob.original.y, atol=1e-12)

    @given(st.integers(2, 8), st.integers(0, 10 ** 6))
    def test_weights_give_weighted_isotonic(self, n, seed):
        rng = np.random.default_rng(seed)
        y = rng.standard_normal(n)
        w = rng.uniform(0.2, 5, n)
        data = Dataset(x=np.arange(float(n)), y=y, weights=w)
        cone = build_monotone(n)
        yt, fam = whiten_family(data, [cone, negate_cone(cone)])
        fit = project_cone(yt, fam[0]).fit / np.sqrt(w)
        np.testing.assert_allclose(fit, weighted_isotonic_oracle(y, w), atol=1e-8)

    @given(st.integers(0, 10 ** 6))
    def test_round_trip_fit_is_feasible(self, seed):
        rng = np.random.default_rng(seed)
        n = 8
        M = rng.standard_normal((n, n))
        Sigma = M @ M.T + n * np.eye(n)
        cone = build_monotone(n)
        prob = whiten(Dataset(x=np.arange(float(n)), y=rng.standard_normal(n)), cone, Sigma)
        fit = prob.unwhiten(project_cone(prob.y_tilde, prob.cone_tilde).fit)
        assert np.min(cone.A @ fit) >= -1e-8

    def test_scalar_covariance_leaves_T_unchanged(self, rng):
        y = rng.standard_normal(10)
        cone = build_monotone(10)
        fam = [cone, negate_cone(cone)]
        plain = statistic_T(y, fam).T
        data = Dataset(x=np.arange(10.0), y=y, covariance=3.5 * np.eye(10))
        yt, wfam = whiten_family(data, fam)
        assert statistic_T(yt, wfam).T == pytest.approx(plain, abs=1e-12)

    @pytest.mark.parametrize("Sigma, match", [
        (np.array([[1.0, 2.0], [2.0, 1.0]]), "positive definite"),
        (np.array([[1.0, 0.5], [0.0, 1.0]]), "symmetric"),
    ])
    def test_bad_covariance(self, Sigma, match):
        data = Dataset(x=np.arange(2.0), y=[0.0, 1.0])
        with pytest.raises(ValueError, match=match):
            whiten(data, build_monotone(2), Sigma)


class TestCollapse:
    @given(st.integers(0, 10 ** 6))
    def test_anova_identity(self, seed):
        # weighted SSE0 of the collapsed data = full SSE0 - within-group sum of squares
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 5, 20).astype(float)
        y = rng.standard_normal(20)
        out = collapse_duplicates(Dataset(x=x, y=y))
        full = np.sum((y - y.mean()) ** 2)
        within = sum(np.sum((y[x == v] - y[x == v].mean()) ** 2) for v in np.unique(x))
        ybar = np.average(out.y, weights=out.weights)
        collapsed = np.sum(out.weights * (out.y - ybar) ** 2)
        assert collapsed == pytest.approx(full - within)

    def test_means_and_weights(self):
        data = Dataset(x=[0.0, 1.0, 0.0], y=[1.0, 5.0, 3.0])
        out = collapse_duplicates(data)
        np.testing.assert_array_equal(out.x[:, 0], [0.0, 1.0])
        np.testing.assert_array_equal(out.y, [2.0, 5.0])
        np.testing.assert_array_equal(out.weights, [2.0, 1.0])

    def test_existing_weights_combine(self):
        data = Dataset(x=[0.0, 0.0], y=[0.0, 4.0], weights=[3.0, 1.0])
        out = collapse_duplicates(data)
        np.testing.assert_array_equal(out.y, [1.0])
        np.testing.assert_array_equal(out.weights, [4.0])

    def test_distinct_design_is_returned_as_is(self):
        data = Dataset(x=[0.0, 1.0], y=[0.0, 4.0])
        assert collapse_duplicates(data) is data

    def test_conflicting_covariates(self):
        data = Dataset(x=[0.0, 0.0, 1.0], y=[0.0, 1.0, 2.0], Z=[0.0, 1.0, 0.0])
        with pytest.raises(ValueError, match="covariates differ"):
            collapse_duplicates(data)


class TestPartialLinear:
    def test_generators_orthogonal_to_L(self, rng):
        n = 12
        Z = rng.standard_normal((n, 2))
        cone = build_partial_linear(cone_for_predictor(np.sort(rng.uniform(size=n)), "linear"), Z)
        assert cone.k == 4
        np.testing.assert_allclose(cone.null_basis.T @ cone.generators, 0.0, atol=1e-10)

    def test_identifiability(self):
        with pytest.raises(ValueError, match="identifiability"):
            build_partial_linear(build_monotone(5), np.ones(5))

    def test_covariate_effect_is_invisible(self, rng):
        n = 20
        x = np.sort(rng.uniform(size=n))
        Z = rng.standard_normal((n, 2))
        y = rng.standard_normal(n)
        a = test_partial_linear(Dataset(x=x, y=y, Z=Z), "constant", nsim=50, seed=1)
        b = test_partial_linear(Dataset(x=x, y=y + Z @ [4.0, -2.0], Z=Z), "constant", nsim=50,
                                seed=1)
        assert a.T == pytest.approx(b.T, abs=1e-10)
        assert a.p_value == b.p_value

    def test_detects_monotone_trend(self, rng):
        n = 40
        x = np.repeat(np.linspace(0, 1, 20), 2)
        Z = rng.integers(0, 2, n).astype(float)
        y = 3 * x + Z + 0.2 * rng.standard_normal(n)
        out = test_partial_linear(Dataset(x=x, y=y, Z=Z), "constant", nsim=99, seed=3)
        assert out.argmax_cone == "monotone"
        assert out.p_value == pytest.approx(0.01)

    def test_needs_one_predictor(self, rng):
        data = Dataset(x=rng.uniform(size=(6, 2)), y=rng.standard_normal(6))
        with pytest.raises(ValueError, match="one-dimensional"):
            test_partial_linear(data, nsim=5)


class TestAdditive:
    @pytest.mark.parametrize("signs", [(1, 1), (1, -1), (-1, 1), (-1, -1)])
    def test_argmax_sign_pattern(self, rng, signs):
        n = 30
        x = rng.uniform(size=(n, 2))
        y = signs[0] * x[:, 0] ** 3 * 4 + signs[1] * x[:, 1] ** 3 * 4
        y = y + 0.01 * rng.standard_normal(n)
        out = test_additive(Dataset(x=x, y=y), kinds=["constant", "constant"], nsim=20)
        label = "additive(" + ",".join("+" if s > 0 else "-" for s in signs) + ")"
        assert out.argmax_cone == label

    def test_single_component_is_plain_double_cone(self, rng):
        x = rng.uniform(size=15)
        y = rng.standard_normal(15)
        add = test_additive(Dataset(x=x, y=y), kinds=["linear"], nsim=40, seed=6)
        cone = cone_for_predictor(x, "linear")
        plain = run_test(y, [cone, negate_cone(cone)], nsim=40, seed=6)
        assert add.T == pytest.approx(plain.T, abs=1e-12)
        assert add.p_value == plain.p_value

    def test_kind_count(self, rng):
        data = Dataset(x=rng.uniform(size=(8, 2)), y=rng.standard_normal(8))
        with pytest.raises(ValueError, match="one null kind"):
            test_additive(data, kinds=["linear"], nsim=5)


class TestConstantMultid:
    def test_duplicates_are_collapsed(self, rng):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] * 3)
        y = x.sum(axis=1) + 0.1 * rng.standard_normal(12)
        out = test_constant_multid(Dataset(x=x, y=y), nsim=99, seed=0)
        assert out.argmax_cone == "isotonic(+,+)"
        assert out.fits["S"].shape == (4,)

    def test_sign_flip_permutes_family(self, rng):
        x = rng.uniform(size=(20, 2))
        y = rng.standard_normal(20)
        a = test_constant_multid(Dataset(x=x, y=y), nsim=30, seed=1)
        b = test_constant_multid(Dataset(x=x * [1.0, -1.0], y=y), nsim=30, seed=1)
        assert a.T == pytest.approx(b.T, abs=1e-10)
        assert sorted(a.components) == pytest.approx(sorted(b.components), abs=1e-10)

    def test_one_predictor_is_monotone_double_cone(self, rng):
        x = rng.uniform(size=12)
        y = rng.standard_normal(12)
        a = test_constant_multid(Dataset(x=x, y=y), nsim=40, seed=2)
        cone = cone_for_predictor(x, "constant")
        plain = run_test(y, [cone, negate_cone(cone)], nsim=40, seed=2)
        assert a.T == pytest.approx(plain.T, abs=1e-12)
        assert a.p_value == plain.p_value

    def test_limits(self, rng):
        with pytest.raises(ValueError, match="at most 3"):
            test_constant_multid(Dataset(x=rng.uniform(size=(10, 4)), y=rng.standard_normal(10)))
        with pytest.raises(ValueError, match="covariates"):
            test_constant_multid(Dataset(x=rng.uniform(size=(10, 2)), y=rng.standard_normal(10),
                                         Z=rng.standard_normal(10)))
