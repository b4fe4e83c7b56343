import cvxpy as cp
import numpy as np
import pytest

from cooplearn import glm
from cooplearn.core import build_augmented, predict
from cooplearn.data import DataError, MultiViewDataset
from cooplearn.enet import SolverError
from cooplearn.glm import (
    IRLSState,
    build_weighted_augmented,
    coop_logistic_objective,
    coop_logistic_path,
    fit_coop_logistic,
    irls_update,
    logistic_lambda_max,
    sigmoid,
)

from conftest import make_dataset


def cvxpy_logistic(views, y, rho, lam):
    thetas = [cp.Variable(v.shape[1]) for v in views]
    b0 = cp.Variable()
    fits = [v @ t for v, t in zip(views, thetas)]
    eta = b0 + sum(fits)
    obj = cp.sum(cp.logistic(eta)) - y @ eta + lam * sum(cp.norm1(t) for t in thetas)
    if rho > 0:
        obj = obj + 0.5 * rho * cp.sum_squares(fits[0] - fits[1])
    cp.Problem(cp.Minimize(obj)).solve(solver=cp.CLARABEL, tol_gap_abs=1e-11, tol_gap_rel=1e-11,
                                       tol_feas=1e-11)
    return [t.value for t in thetas], float(b0.value), float(obj.value)


class TestIRLSUpdate:
    def test_at_zero(self):
        s = irls_update(np.zeros(2), np.array([1.0, 0.0]))
        np.testing.assert_allclose(s.mu, [0.5, 0.5])
        np.testing.assert_allclose(s.weights, [0.25, 0.25])
        np.testing.assert_allclose(s.working_response, [2.0, -2.0])
        assert s.deviance == pytest.approx(4 * np.log(2))

    def test_weight_floor(self):
        s = irls_update(np.array([20.0]), np.array([0.0]))
        assert s.weights[0] == glm.WEIGHT_FLOOR
        assert s.working_response[0] == pytest.approx(20.0 - s.mu[0] / glm.WEIGHT_FLOOR)
        assert np.isfinite(s.working_response).all()

    def test_iteration_counter(self):
        s = irls_update(np.zeros(3), np.ones(3))
        assert irls_update(s, np.ones(3)).iteration == 1

    def test_rejects_bad_labels(self):
        with pytest.raises(DataError):
            irls_update(np.zeros(2), np.array([0.0, 2.0]))
        with pytest.raises(DataError):
            irls_update(np.zeros(2), np.zeros(3))

    def test_sigmoid_stable(self):
        out = sigmoid(np.array([-800.0, 0.0, 800.0]))
        np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])


class TestWeightedSystem:
    def test_unit_weights_reduce_to_gaussian(self, rng):
        views = [rng.standard_normal((7, 3)), rng.standard_normal((7, 2))]
        z = rng.standard_normal(7)
        state = IRLSState(np.zeros(7), np.zeros(7), z, np.ones(7), 0.0)
        w = build_weighted_augmented(views, state, 0.8)
        g = build_augmented(views, z, 0.8)
        np.testing.assert_array_equal(w.x_tilde, g.x_tilde)
        np.testing.assert_array_equal(w.y_tilde, g.y_tilde)

    def test_constant_weights_scale_data_rows_only(self, rng):
        views = [rng.standard_normal((5, 2)), rng.standard_normal((5, 2))]
        z = rng.standard_normal(5)
        state = IRLSState(np.zeros(5), np.zeros(5), z, np.full(5, 4.0), 0.0)
        w = build_weighted_augmented(views, state, 0.5, intercept=True)
        g = build_augmented(views, z, 0.5)
        np.testing.assert_allclose(w.x_tilde[:5, :4], 2 * g.x_tilde[:5])
        np.testing.assert_allclose(w.x_tilde[5:, :4], g.x_tilde[5:])
        np.testing.assert_allclose(w.y_tilde[:5], 2 * z)
        np.testing.assert_allclose(w.x_tilde[:, 4], [2.0] * 5 + [0.0] * 5)
        assert w.block_spans[-1][0] == "(intercept)"

    def test_newton_step_is_weighted_least_squares(self, rng):
        X = rng.standard_normal((30, 3))
        y = (rng.random(30) < sigmoid(X[:, 0])).astype(float)
        eta = 0.3 * X[:, 1]
        s = irls_update(eta, y)
        sys_ = build_weighted_augmented([X], s, 0.0, intercept=True)
        step = np.linalg.lstsq(sys_.x_tilde, sys_.y_tilde, rcond=None)[0]
        A = np.column_stack([X, np.ones(30)])
        W = np.diag(s.weights)
        hand = np.linalg.solve(A.T @ W @ A, A.T @ W @ s.working_response)
        np.testing.assert_allclose(step, hand, rtol=1e-10)
        # equivalently eta + H^-1 score
        score = A.T @ (y - s.mu)
        np.testing.assert_allclose(A @ hand, eta + A @ np.linalg.solve(A.T @ W @ A, score), atol=1e-10)

    def test_rejects_bad_weights(self, rng):
        views = [rng.standard_normal((4, 2))]
        state = IRLSState(np.zeros(4), np.zeros(4), np.zeros(4), np.array([1.0, -1.0, 1.0, 1.0]), 0.0)
        with pytest.raises(DataError):
            build_weighted_augmented(views, state, 0.0)


class TestLogisticFit:
    @pytest.mark.parametrize("rho", [0.0, 0.6])
    def test_matches_convex_oracle(self, rng, rho):
        ds = make_dataset(rng, n=60, widths=(4, 3), family="binomial")
        y = ds.response.values
        lam = 2.0
        fit = fit_coop_logistic(ds, rho, lam, tol=1e-13)
        thetas, b0, obj = cvxpy_logistic(ds.matrices, y, rho, lam)
        np.testing.assert_allclose(fit.thetas["v0"], thetas[0], atol=2e-5)
        np.testing.assert_allclose(fit.thetas["v1"], thetas[1], atol=2e-5)
        assert fit.intercept == pytest.approx(b0, abs=2e-5)
        assert fit.objective == pytest.approx(obj, rel=1e-7)
        assert fit.objective <= obj + 1e-7
        assert fit.converged

    def test_objective_never_increases(self, rng):
        ds = make_dataset(rng, n=80, family="binomial")
        fit = fit_coop_logistic(ds, 1.0, 0.5)
        h = fit.extras["history"]
        assert np.all(np.diff(h) <= 1e-12 * (1 + np.abs(h[:-1])))

    def test_intercept_score_equation(self, rng):
        ds = make_dataset(rng, n=50, family="binomial")
        for rho, lam in [(0.0, 1e-3), (2.0, 3.0)]:
            fit = fit_coop_logistic(ds, rho, lam, tol=1e-13)
            mu = predict(fit, [v.matrix for v in ds.raw])
            assert mu.mean() == pytest.approx(ds.raw_y.mean(), abs=1e-6)

    def test_lambda_max_zeroes_all(self, rng):
        ds = make_dataset(rng, n=50, family="binomial")
        lm = logistic_lambda_max(ds)
        at = fit_coop_logistic(ds, 0.7, lm * (1 + 1e-9))
        assert all(not np.any(t) for t in at.thetas.values())
        below = fit_coop_logistic(ds, 0.7, lm * 0.9)
        assert any(np.any(t) for t in below.thetas.values())

    def test_flipped_labels_negate(self, rng):
        ds = make_dataset(rng, n=60, family="binomial")
        flipped = MultiViewDataset.build(list(ds.raw), 1 - ds.raw_y, "binomial", ds.names)
        a = fit_coop_logistic(ds, 0.5, 1.0, tol=1e-13)
        b = fit_coop_logistic(flipped, 0.5, 1.0, tol=1e-13)
        for nm in ds.names:
            np.testing.assert_allclose(b.thetas[nm], -a.thetas[nm], atol=1e-7)
        assert b.intercept == pytest.approx(-a.intercept, abs=1e-7)
        assert b.objective == pytest.approx(a.objective, rel=1e-10)

    def test_separable_data_stays_finite(self):
        x = np.linspace(-2, 2, 20)[:, None]
        z = np.cos(np.arange(20.0))[:, None]
        y = (x[:, 0] > 0).astype(float)
        ds = MultiViewDataset.build([x, z], y, "binomial", ["x", "z"])
        fit = fit_coop_logistic(ds, 0.5, 0.05)
        assert np.isfinite(fit.objective)
        assert np.all(np.isfinite(fit.beta))
        assert fit.converged

    def test_objective_function_agrees(self, rng):
        ds = make_dataset(rng, n=40, family="binomial")
        fit = fit_coop_logistic(ds, 0.3, 0.8)
        val = coop_logistic_objective(ds.matrices, ds.response.values, fit.thetas, fit.intercept, 0.3, 0.8)
        assert val == pytest.approx(fit.objective, rel=1e-12)

    def test_path_warm_starts(self, rng):
        ds = make_dataset(rng, n=50, family="binomial")
        lm = logistic_lambda_max(ds)
        fits = coop_logistic_path(ds, 0.5, lm * np.array([1.0 + 1e-9, 0.5, 0.1]))
        df = [f.df for f in fits]
        assert df[0] == 0 and df == sorted(df)

    def test_needs_binomial(self, rng):
        with pytest.raises(DataError):
            fit_coop_logistic(make_dataset(rng), 0.0, 1.0)

    def test_failed_halving_raises(self, rng, monkeypatch):
        ds = make_dataset(rng, n=30, family="binomial")

        class Wild:
            def __init__(self, beta):
                self.beta = beta

        def bad_solve(self, spec, warm=None, tol=None, max_sweeps=None):
            return Wild(np.full(self.p, 1e6))

        monkeypatch.setattr(glm.GramProblem, "solve", bad_solve)
        with pytest.raises(SolverError, match="step halvings"):
            fit_coop_logistic(ds, 0.5, 1.0)
