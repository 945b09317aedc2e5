import numpy as np
import pytest
from sklearn.base import clone

from kernelfusion import (
    Dataset,
    FeatureSet,
    KernelSpaceRegressor,
    RegressionProblem,
    build_fusion_basis,
    monomial,
    solve_centralized,
    solve_dual,
    solve_primal_oracle,
    upload,
)

from helpers import identifiable_sample, random_agent_pair, random_feature_set

BOX = ((-2.0, 2.0),)


def quad_space():
    return FeatureSet((monomial(0), monomial(1), monomial(2)), 1, BOX)


def random_problem(rng, ridge):
    fs = random_feature_set(rng)
    m = int(rng.integers(3, 25))
    xs = rng.uniform(-2, 2, m)
    target = fs.function(rng.normal(size=fs.size))
    noise = rng.normal(scale=0.1, size=m)
    return RegressionProblem(Dataset(xs, target(xs) + noise), ridge, fs), fs


class TestSolveDual:
    def test_zero_outputs_give_zero(self):
        xs = np.linspace(-2, 2, 7)
        p = RegressionProblem(Dataset(xs, np.zeros(7)), 1e-6, quad_space())
        sol = solve_dual(p)
        np.testing.assert_allclose(sol.function.coeffs, 0.0, atol=1e-12)
        assert sol.objective_value == pytest.approx(0.0, abs=1e-20)

    def test_single_point_closed_form(self):
        # one sample at x=0 only excites the constant feature, so the
        # minimizer of (y - w)^2 + ridge * w^2 is w = y / (1 + ridge)
        fs = quad_space()
        ridge = 0.3
        p = RegressionProblem(Dataset([0.0], [2.0]), ridge, fs)
        sol = solve_dual(p)
        np.testing.assert_allclose(sol.function.coeffs,
                                   [2.0 / (1 + ridge), 0.0, 0.0],
                                   atol=1e-10)

    def test_exact_recovery_at_small_ridge(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            fs, xs = identifiable_sample(rng)
            target = fs.function(rng.normal(size=fs.size))
            p = RegressionProblem(Dataset(xs, target(xs)), 1e-8, fs)
            sol = solve_dual(p)
            np.testing.assert_allclose(sol.function.coeffs, target.coeffs,
                                       atol=1e-4)

    def test_huge_ridge_collapses_to_zero(self):
        rng = np.random.default_rng(1)
        xs = rng.uniform(-2, 2, 10)
        ys = rng.normal(size=10)
        p = RegressionProblem(Dataset(xs, ys), 1e12, quad_space())
        sol = solve_dual(p)
        assert sol.function.norm() <= 1e-6 * np.linalg.norm(ys)

    def test_works_on_combined_space(self):
        rng = np.random.default_rng(2)
        _, _, basis = random_agent_pair(rng)
        xs = rng.uniform(-2, 2, 12)
        target = basis.function(rng.normal(size=basis.rank))
        p = RegressionProblem(Dataset(xs, target(xs)), 1e-8, basis)
        sol = solve_dual(p)
        grid = np.linspace(-2, 2, 50)
        np.testing.assert_allclose(sol.function(grid), target(grid),
                                   atol=1e-4)

    def test_ridge_must_be_positive(self):
        with pytest.raises(ValueError):
            RegressionProblem(Dataset([0.0], [1.0]), 0.0, quad_space())

    def test_non_finite_data_rejected(self):
        with pytest.raises(ValueError):
            Dataset([0.0], [np.inf])


class TestPrimalOracle:
    def test_zero_outputs_give_zero(self):
        xs = np.linspace(-2, 2, 7)
        p = RegressionProblem(Dataset(xs, np.zeros(7)), 1e-6, quad_space())
        sol = solve_primal_oracle(p)
        np.testing.assert_allclose(sol.function.coeffs, 0.0, atol=1e-12)

    def test_single_point_closed_form(self):
        fs = quad_space()
        ridge = 0.3
        p = RegressionProblem(Dataset([0.0], [2.0]), ridge, fs)
        sol = solve_primal_oracle(p)
        np.testing.assert_allclose(sol.function.coeffs,
                                   [2.0 / (1 + ridge), 0.0, 0.0],
                                   atol=1e-12)

    def test_agrees_with_dual(self):
        rng = np.random.default_rng(3)
        grid = np.linspace(-2, 2, 100)
        for ridge in (1e-6, 1e-2, 1.0):
            for _ in range(17):
                p, _ = random_problem(rng, ridge)
                vd = solve_dual(p).function(grid)
                vp = solve_primal_oracle(p).function(grid)
                assert np.max(np.abs(vd - vp)) <= 1e-8 * (1 + np.max(np.abs(vp)))

    def test_dual_weights_agree_when_gram_regular(self):
        rng = np.random.default_rng(4)
        fs = quad_space()
        xs = np.array([-1.5, 0.25, 1.25])  # three points keep the Gram regular
        ys = rng.normal(size=3)
        p = RegressionProblem(Dataset(xs, ys), 1e-3, fs)
        ad = solve_dual(p).dual_coeffs
        ap = solve_primal_oracle(p).dual_coeffs
        np.testing.assert_allclose(ad, ap, rtol=1e-6, atol=1e-9)

    def test_dual_weight_difference_is_null_when_gram_singular(self):
        # with more points than dimensions the section weights are not
        # unique; the two routes may differ only along null(K), which
        # the design matrix annihilates
        rng = np.random.default_rng(5)
        fs = quad_space()
        xs = rng.uniform(-2, 2, 8)
        ys = rng.normal(size=8)
        p = RegressionProblem(Dataset(xs, ys), 1e-3, fs)
        ad = solve_dual(p).dual_coeffs
        ap = solve_primal_oracle(p).dual_coeffs
        E = fs.design_matrix(xs)
        np.testing.assert_allclose(E.T @ (ad - ap), 0.0, atol=1e-8)
        assert np.linalg.norm(ad) <= np.linalg.norm(ap) * (1 + 1e-10)


class TestOptimality:
    def test_objective_is_stationary(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            p, fs = random_problem(rng, 1e-3)
            sol = solve_dual(p)
            E = fs.design_matrix(p.data.inputs)
            y = p.data.outputs
            w = sol.function.coeffs
            scale = 1 + np.linalg.norm(E.T @ y)
            for j in range(fs.size):
                h = 1e-6 * (1 + abs(w[j]))
                for sign in (1.0, -1.0):
                    wp = w.copy()
                    wp[j] += sign * h
                    resid = y - E @ wp
                    obj = np.dot(resid, resid) + p.ridge * np.dot(wp, wp)
                    # one-sided finite-difference slope stays tiny at a minimum
                    slope = (obj - sol.objective_value) / h
                    assert slope >= -1e-5 * scale

    def test_objective_beats_perturbations(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            p, fs = random_problem(rng, 1e-2)
            sol = solve_dual(p)
            E = fs.design_matrix(p.data.inputs)
            y = p.data.outputs
            w = sol.function.coeffs
            for _ in range(20):
                wp = w + rng.normal(scale=0.1, size=w.shape)
                resid = y - E @ wp
                obj = np.dot(resid, resid) + p.ridge * np.dot(wp, wp)
                assert sol.objective_value <= obj + 1e-12 * (1 + obj)

    def test_dual_weights_insensitive_in_null_directions(self):
        # moving alpha along null(K) leaves the materialized function fixed
        rng = np.random.default_rng(7)
        fs = quad_space()
        xs = np.array([-1.0, -1.0, 0.5, 0.5, 1.5])  # repeats make K singular
        ys = rng.normal(size=5)
        p = RegressionProblem(Dataset(xs, ys), 1e-4, fs)
        sol = solve_dual(p)
        E = fs.design_matrix(xs)
        K = E @ E.T
        _, svals, vt = np.linalg.svd(K)
        null = vt[svals < 1e-10 * svals[0]]
        assert null.shape[0] > 0
        grid = np.linspace(-2, 2, 60)
        base = sol.function(grid)
        for z in null:
            w = E.T @ (sol.dual_coeffs + z)
            shifted = fs.function(w)
            np.testing.assert_allclose(shifted(grid), base,
                                       rtol=1e-10, atol=1e-10)


class TestCentralized:
    def test_recovers_combined_space_target(self):
        rng = np.random.default_rng(8)
        fs1, fs2, basis = random_agent_pair(rng)
        target = basis.function(rng.normal(size=basis.rank))
        x1 = rng.uniform(-2, 2, 15)
        x2 = rng.uniform(-2, 2, 15)
        sol = solve_centralized(Dataset(x1, target(x1)),
                                Dataset(x2, target(x2)),
                                basis, 1e-8)
        grid = np.linspace(-2, 2, 80)
        np.testing.assert_allclose(sol.function(grid), target(grid),
                                   atol=1e-4)

    def test_pools_both_datasets(self):
        rng = np.random.default_rng(9)
        fs1, fs2, basis = random_agent_pair(rng)
        x1, x2 = rng.uniform(-2, 2, (2, 8))
        y1, y2 = rng.normal(size=(2, 8))
        sol = solve_centralized(Dataset(x1, y1), Dataset(x2, y2),
                                basis, 1e-4)
        pooled = RegressionProblem(
            Dataset(np.concatenate([x1, x2]), np.concatenate([y1, y2])),
            1e-4, basis)
        direct = solve_dual(pooled)
        np.testing.assert_allclose(sol.function.coeffs,
                                   direct.function.coeffs, atol=1e-12)

    def test_can_beat_single_agent_on_cross_region_target(self):
        # agent 1 never samples beyond its window, so the pooled fit has
        # strictly more information about a combined-space target
        rng = np.random.default_rng(10)
        fs1 = FeatureSet((monomial(0), monomial(1)), 1, BOX)
        fs2 = FeatureSet((monomial(2),), 1, BOX)
        basis = build_fusion_basis(fs1, fs2)
        target = basis.function([0.3, -0.5, 1.4])
        x1 = rng.uniform(-0.5, 0.5, 12)
        x2 = rng.uniform(-2, 2, 12)
        noise1 = rng.normal(scale=0.05, size=12)
        noise2 = rng.normal(scale=0.05, size=12)
        one = solve_dual(RegressionProblem(
            Dataset(x1, target(x1) + noise1), 1e-6, fs1))
        both = solve_centralized(Dataset(x1, target(x1) + noise1),
                                 Dataset(x2, target(x2) + noise2),
                                 basis, 1e-6)
        grid = np.linspace(-2, 2, 120)
        up = upload(one.function, basis)
        rmse_one = np.sqrt(np.mean((up(grid) - target(grid)) ** 2))
        rmse_both = np.sqrt(np.mean((both.function(grid) - target(grid)) ** 2))
        assert rmse_both < rmse_one


class TestKernelSpaceRegressor:
    def test_fit_predict(self):
        rng = np.random.default_rng(11)
        fs = quad_space()
        target = fs.function([1.0, -2.0, 0.5])
        xs = rng.uniform(-2, 2, 30)
        reg = KernelSpaceRegressor(space=fs, ridge=1e-8).fit(xs, target(xs))
        grid = np.linspace(-2, 2, 40)
        np.testing.assert_allclose(reg.predict(grid), target(grid), atol=1e-4)
        np.testing.assert_allclose(reg.coef_, [1.0, -2.0, 0.5], atol=1e-4)
        assert reg.n_features_in_ == 1

    def test_solvers_agree(self):
        rng = np.random.default_rng(12)
        fs = quad_space()
        xs = rng.uniform(-2, 2, 15)
        ys = rng.normal(size=15)
        a = KernelSpaceRegressor(space=fs, ridge=1e-3).fit(xs, ys)
        b = KernelSpaceRegressor(space=fs, ridge=1e-3,
                                 solver="primal").fit(xs, ys)
        grid = np.linspace(-2, 2, 50)
        np.testing.assert_allclose(a.predict(grid), b.predict(grid),
                                   rtol=1e-8, atol=1e-10)

    def test_get_params_and_clone(self):
        fs = quad_space()
        reg = KernelSpaceRegressor(space=fs, ridge=0.5, solver="primal")
        params = reg.get_params()
        assert params["ridge"] == 0.5
        assert params["solver"] == "primal"
        assert params["space"] is fs
        twin = clone(reg)
        assert twin.ridge == 0.5 and twin.space == fs

    def test_score_is_r2(self):
        rng = np.random.default_rng(13)
        fs = quad_space()
        target = fs.function([0.5, 1.0, -0.25])
        xs = rng.uniform(-2, 2, 25)
        reg = KernelSpaceRegressor(space=fs, ridge=1e-8).fit(xs, target(xs))
        assert reg.score(xs, target(xs)) == pytest.approx(1.0, abs=1e-8)

    def test_unfitted_predict_raises(self):
        with pytest.raises(AttributeError):
            KernelSpaceRegressor(space=quad_space()).predict([0.0])

    def test_missing_space_rejected(self):
        with pytest.raises(ValueError):
            KernelSpaceRegressor().fit([0.0], [1.0])

    def test_unknown_solver_rejected(self):
        with pytest.raises(ValueError):
            KernelSpaceRegressor(space=quad_space(),
                                 solver="qp").fit([0.0], [1.0])
