"""Cooperative logistic regression by iteratively reweighted least squares.

Each outer step forms the quadratic approximation of the binomial negative
log-likelihood at the current linear predictor and solves the weighted
augmented elastic-net problem: data rows scaled by sqrt(w) with target
sqrt(w) z, agreement rows left unweighted.  An unpenalized intercept rides
along as an extra column that is sqrt(w) on the data rows and zero on the
agreement rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    AugmentedSystem,
    CoopFit,
    build_augmented,
    make_fit,
)
from .data import BINOMIAL, DataError, MultiViewDataset
from .enet import GramProblem, PenaltySpec, SolverError

WEIGHT_FLOOR = 1e-5
MAX_HALVINGS = 10


def sigmoid(eta):
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def binomial_nll(eta, y) -> float:
    """sum_i log(1 + exp(eta_i)) - y_i eta_i."""
    eta = np.asarray(eta, dtype=float)
    return float(np.sum(np.logaddexp(0.0, eta) - np.asarray(y, float) * eta))


@dataclass(frozen=True)
class IRLSState:
    eta: np.ndarray
    mu: np.ndarray
    working_response: np.ndarray
    weights: np.ndarray
    deviance: float
    iteration: int = 0


def irls_update(state_or_eta, y01, iteration: int | None = None) -> IRLSState:
    """Quadratic approximation at the current linear predictor."""
    if isinstance(state_or_eta, IRLSState):
        eta = state_or_eta.eta
        it = state_or_eta.iteration + 1 if iteration is None else iteration
    else:
        eta = np.asarray(state_or_eta, dtype=float)
        it = 0 if iteration is None else iteration
    y = np.asarray(y01, dtype=float)
    if y.shape != eta.shape:
        raise DataError(f"response has {y.size} entries, linear predictor {eta.size}")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("binomial response must take values in {0, 1}")
    mu = sigmoid(eta)
    w = np.maximum(mu * (1.0 - mu), WEIGHT_FLOOR)
    z = eta + (y - mu) / w
    return IRLSState(eta, mu, z, w, 2.0 * binomial_nll(eta, y), it)


def build_weighted_augmented(views, state: IRLSState, rho: float, names=None,
                             intercept: bool = False) -> AugmentedSystem:
    """Augmented system with the data rows weighted by sqrt(w).

    With ``intercept`` an extra last column (named ``"(intercept)"``) holds
    sqrt(w) on the data rows and zeros on the agreement rows.
    """
    views = [np.asarray(v, dtype=float) for v in views]
    n = views[0].shape[0]
    if state.weights.shape != (n,):
        raise DataError(f"{state.weights.size} weights for {n} rows")
    if np.any(state.weights < 0) or not np.all(np.isfinite(state.weights)):
        raise DataError("IRLS weights must be finite and nonnegative")
    base = build_augmented(views, state.working_response, rho, names)
    root = np.sqrt(state.weights)
    xt = base.x_tilde.copy()
    xt[:n] *= root[:, None]
    yt = base.y_tilde.copy()
    yt[:n] *= root
    spans = base.block_spans
    if intercept:
        col = np.zeros((xt.shape[0], 1))
        col[:n, 0] = root
        xt = np.hstack([xt, col])
        spans = spans + (("(intercept)", slice(xt.shape[1] - 1, xt.shape[1])),)
    return AugmentedSystem(xt, yt, spans, base.row_blocks, base.rho)


def coop_logistic_objective(views, y, thetas, intercept: float, rho: float, lam, alpha: float = 1.0,
                            penalty_factors=None) -> float:
    """Binomial NLL + agreement + elastic-net penalty."""
    views = [np.asarray(v, float) for v in views]
    thetas = list(thetas.values()) if isinstance(thetas, dict) else [np.asarray(t, float) for t in thetas]
    widths = np.cumsum([0] + [t.size for t in thetas])
    spans = [(None, slice(int(widths[i]), int(widths[i + 1]))) for i in range(len(thetas))]
    return _objective(views, y, np.concatenate(thetas), intercept, spans, rho, lam, alpha, penalty_factors)


def _objective(views, y, beta, b0, spans, rho, lam, alpha, pf):
    thetas = [beta[s] for _, s in spans]
    fits = [v @ t for v, t in zip(views, thetas)]
    eta = b0 + sum(fits)
    val = binomial_nll(eta, y)
    for a in range(len(fits)):
        for b in range(a + 1, len(fits)):
            d = fits[a] - fits[b]
            val += 0.5 * rho * float(d @ d)
    return val + PenaltySpec(lam, alpha, pf).value(beta)


def logistic_lambda_max(dataset: MultiViewDataset, alpha: float = 1.0, penalty_factors=None) -> float:
    """Smallest lambda with all view coefficients zero (intercept at logit(ybar)).

    The agreement term and its gradient vanish at zero coefficients, so
    the value does not depend on rho.
    """
    y = dataset.response.values
    X = np.hstack(dataset.matrices)
    score = np.abs(X.T @ (y - y.mean()))
    pf = np.ones(X.shape[1]) if penalty_factors is None else np.asarray(penalty_factors, float)
    pen = pf > 0
    return float(np.max(score[pen] / (max(alpha, 1e-3) * pf[pen])))


def fit_coop_logistic(dataset: MultiViewDataset, rho: float, lam: float, alpha: float = 1.0,
                      penalty_factors=None, tol: float = 1e-10, max_outer: int = 100,
                      warm: CoopFit | None = None, inner_tol: float = 1e-10) -> CoopFit:
    """Penalized cooperative logistic fit by IRLS with step-halving.

    A step that raises the objective is halved up to ten times; if none of
    the halved steps decreases it, a ``SolverError`` is raised with the
    objective trace.  Accepted steps never increase the objective.
    """
    if dataset.family != BINOMIAL:
        raise DataError("fit_coop_logistic needs a binomial response")
    if not rho >= 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    views = dataset.matrices
    y = dataset.response.values
    p = sum(v.shape[1] for v in views)
    pf = np.ones(p) if penalty_factors is None else np.asarray(penalty_factors, float)
    if pf.shape != (p,):
        raise ValueError(f"{pf.size} penalty factors for {p} features")
    spans = build_augmented([v[:1] for v in views], y[:1], rho, dataset.names).block_spans
    if warm is not None:
        beta = np.concatenate([warm.thetas[nm] for nm in dataset.names])
        b0 = warm.intercept
    else:
        beta = np.zeros(p)
        ybar = min(max(y.mean(), 1e-6), 1 - 1e-6)
        b0 = math.log(ybar / (1 - ybar))
    spec = PenaltySpec(lam, alpha, np.concatenate([pf, [0.0]]))
    obj = _objective(views, y, beta, b0, spans, rho, lam, alpha, pf)
    history = [obj]
    X = np.hstack(views)
    converged = False
    halvings = 0
    it = 0
    while it < max_outer:
        it += 1
        state = irls_update(b0 + X @ beta, y, it)
        system = build_weighted_augmented(views, state, rho, dataset.names, intercept=True)
        prob = GramProblem.from_data(system.x_tilde, system.y_tilde)
        sol = prob.solve(spec, warm=np.concatenate([beta, [b0]]), tol=inner_tol, max_sweeps=100_000)
        new_beta, new_b0 = sol.beta[:p], float(sol.beta[p])
        step = 1.0
        cand = _objective(views, y, new_beta, new_b0, spans, rho, lam, alpha, pf)
        k = 0
        while cand > obj + 1e-13 * (1.0 + abs(obj)) and k < MAX_HALVINGS:
            k += 1
            step *= 0.5
            tb = beta + step * (new_beta - beta)
            t0 = b0 + step * (new_b0 - b0)
            cand = _objective(views, y, tb, t0, spans, rho, lam, alpha, pf)
            if cand <= obj:
                new_beta, new_b0 = tb, t0
        halvings += k
        if cand > obj + 1e-13 * (1.0 + abs(obj)):
            if abs(cand - obj) < tol * (1.0 + abs(obj)):
                converged = True
                break
            raise SolverError(
                f"IRLS failed to decrease the objective after {MAX_HALVINGS} step halvings "
                f"(outer step {it}, rho={rho}, lambda={lam}, objective trace {history[-5:]})"
            )
        change = obj - cand
        beta, b0, obj = new_beta, new_b0, cand
        history.append(obj)
        if change < tol * (1.0 + abs(obj)):
            converged = True
            break
    thetas = {nm: np.array(beta[s]) for nm, s in spans}
    return make_fit(dataset, thetas, rho, lam, alpha, obj, intercept=b0, family=BINOMIAL,
                    algorithm="direct", iterations=it, converged=converged,
                    extras={"history": np.array(history), "halvings": halvings})


def coop_logistic_path(dataset: MultiViewDataset, rho: float, grid, alpha: float = 1.0,
                       penalty_factors=None, tol: float = 1e-8, max_outer: int = 100) -> list[CoopFit]:
    """Warm-started fits along a decreasing lambda grid."""
    fits = []
    warm = None
    for lam in np.asarray(grid, dtype=float):
        warm = fit_coop_logistic(dataset, rho, float(lam), alpha, penalty_factors, tol=tol,
                                 max_outer=max_outer, warm=warm, inner_tol=max(tol, 1e-10))
        fits.append(warm)
    return fits
