"""Cross-validation over (rho, lambda) and adaptive per-view penalties.

Folds are drawn over the original rows.  Each fold re-standardizes its
training rows, builds its own augmented system and scores held-out rows on
prediction error only.  The lambda grid for a given rho comes from the
full-data augmented system so all folds share it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    PairSpec,
    augmented_problem,
    coop_direct_fit,
    coop_objective,
)
from .data import BINOMIAL, DataError, MultiViewDataset
from .enet import GramProblem, PenaltySpec, default_min_ratio, grid_from_max

DEFAULT_RHO_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0, 4.0, 8.0)
RULE_MIN = "min"
RULE_ONE_SE = "one_se"
RATIO_BOUNDS = (1e-6, 1e6)


@dataclass(frozen=True)
class FoldPlan:
    n: int
    k: int
    assignments: np.ndarray
    seed: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=int)
        if a.shape != (self.n,) or a.min() < 0 or a.max() >= self.k:
            raise ValueError("fold assignments must label every row with a fold in [0, k)")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def test_rows(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == f)

    def train_rows(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != f)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "seed": self.seed, "assignments": self.assignments.tolist()}


def make_folds(n: int, k: int, seed: int = 0) -> FoldPlan:
    """Balanced random fold assignment; deterministic under ``seed``."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    a = np.empty(n, dtype=int)
    a[perm] = np.arange(n) % k
    return FoldPlan(n, k, a, seed)


@dataclass
class CVResult:
    rhos: np.ndarray
    lambdas: np.ndarray          # (n_rho, n_lambda), row i is the grid for rhos[i]
    mean_error: np.ndarray
    sd_error: np.ndarray
    fold_errors: np.ndarray      # (k, n_rho, n_lambda)
    selected_index: tuple[int, int]
    rule: str
    refit: object
    folds: FoldPlan
    oof_predictions: np.ndarray  # held-out predictions at the selected cell
    n_unconverged: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def selected(self) -> tuple[float, float]:
        i, j = self.selected_index
        return float(self.rhos[i]), float(self.lambdas[i, j])

    @property
    def grid(self) -> list[tuple[float, float]]:
        return [(float(r), float(l)) for r, row in zip(self.rhos, self.lambdas) for l in row]

    @property
    def se_error(self) -> np.ndarray:
        return self.sd_error / math.sqrt(self.folds.k)

    @property
    def min_error(self) -> float:
        return float(self.mean_error[self.selected_index])

    def to_dict(self) -> dict:
        from .core import SCHEMA_VERSION, _jsonable

        rho, lam = self.selected
        return _jsonable({
            "schema": SCHEMA_VERSION,
            "rule": self.rule,
            "rho_grid": self.rhos,
            "lambda_grid": self.lambdas,
            "mean_error": self.mean_error,
            "sd_error": self.sd_error,
            "selected": {"rho": rho, "lambda": lam, "rho_index": self.selected_index[0],
                         "lambda_index": self.selected_index[1],
                         "mean_error": self.min_error},
            "seed": self.folds.seed,
            "folds": self.folds.to_dict(),
            "n_unconverged": self.n_unconverged,
            "extras": self.extras,
        })


def select_cell(mean: np.ndarray, se: np.ndarray, rule: str = RULE_MIN) -> tuple[int, int]:
    """Pick a (rho, lambda) cell; ties go to the smaller rho, then the larger lambda.

    Rows of ``mean`` are in increasing rho and columns in decreasing lambda,
    so the first cell in row-major order wins any tie.  ``one_se`` takes the
    first cell whose error is within one standard error of the minimum.
    """
    if not np.all(np.isfinite(mean)):
        raise FloatingPointError("non-finite cross-validation error")
    best = int(np.argmin(mean))
    if rule == RULE_ONE_SE:
        thr = mean.flat[best] + se.flat[best]
        best = int(np.flatnonzero(mean.ravel() <= thr)[0])
    elif rule != RULE_MIN:
        raise ValueError(f"unknown selection rule {rule!r}")
    return tuple(int(v) for v in np.unravel_index(best, mean.shape))


def _standardize_like(train: MultiViewDataset, raw_views: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [v.transform(r) for v, r in zip(train.views, raw_views)]


def _pf_for(penalty_factors, rho):
    if isinstance(penalty_factors, Mapping):
        return penalty_factors[rho]
    return penalty_factors


def _heldout(family, y_te, eta):
    if family == BINOMIAL:
        mu = 1.0 / (1.0 + np.exp(-eta))
        loss = np.logaddexp(0.0, eta) - y_te[:, None] * eta
        return 2.0 * loss.mean(axis=0), mu
    return ((y_te[:, None] - eta) ** 2).mean(axis=0), eta


def _fold_path(train, rho, grid, alpha, pf, pairs, tol):
    """Coefficient matrix (n_lambda, p), intercepts and convergence flags."""
    if train.family == BINOMIAL:
        from .glm import coop_logistic_path

        fits = coop_logistic_path(train, rho, grid, alpha=alpha, penalty_factors=pf, tol=tol)
        return (np.array([f.beta for f in fits]), np.array([f.intercept for f in fits]),
                np.array([f.converged for f in fits]))
    _, prob = augmented_problem(train, rho, pairs)
    res = prob.path(PenaltySpec(1.0, alpha, pf), grid, tol=tol)
    b0 = np.full(len(grid), train.response.mean)
    return res.betas, b0, np.array([c.converged for c in res.coefs])


def full_lambda_grid(dataset, rho, alpha, pf, n_lambda, min_ratio, pairs=None) -> np.ndarray:
    if dataset.family == BINOMIAL:
        from .glm import logistic_lambda_max

        lam_max = logistic_lambda_max(dataset, alpha, pf)
        p = sum(v.p for v in dataset.views)
    else:
        _, prob = augmented_problem(dataset, rho, pairs)
        lam_max, p = prob.lambda_max(alpha, pf), prob.p
    mr = default_min_ratio(dataset.n, p) if min_ratio is None else min_ratio
    return grid_from_max(lam_max, n_lambda, mr)


def split_folds(dataset: MultiViewDataset, folds: FoldPlan) -> list:
    """Per fold: (training dataset, test rows, test views standardized with training statistics)."""
    out = []
    for f in range(folds.k):
        tr, te = folds.train_rows(f), folds.test_rows(f)
        train = dataset.take(tr)
        out.append((train, te, _standardize_like(train, [v.matrix[te] for v in dataset.raw])))
    return out


def heldout_errors(dataset, fold_sets, rho, grid, alpha=1.0, pf=None, pairs=None, tol=1e-7):
    """Fold errors (k, n_lambda), held-out predictions (n, n_lambda), unconverged count."""
    y = dataset.raw_y
    errs = np.empty((len(fold_sets), len(grid)))
    oof = np.empty((dataset.n, len(grid)))
    bad = 0
    for f, (train, te, test_views) in enumerate(fold_sets):
        betas, b0, conv = _fold_path(train, rho, grid, alpha, pf, pairs, tol)
        eta = np.hstack(test_views) @ betas.T + b0
        errs[f], oof[te] = _heldout(dataset.family, y[te], eta)
        bad += int(np.count_nonzero(~conv))
    return errs, oof, bad


def cv_coop(dataset: MultiViewDataset, rho_grid=DEFAULT_RHO_GRID, folds: FoldPlan | None = None,
            rule: str = RULE_MIN, *, k: int = 10, seed: int = 0, alpha: float = 1.0,
            n_lambda: int = 100, min_ratio: float | None = None, penalty_factors=None,
            pairs: PairSpec | None = None, workers: int = 1, tol: float = 1e-7) -> CVResult:
    """K-fold CV of the cooperative path over a rho grid, then a full-data refit.

    ``penalty_factors`` is one vector over the concatenated features or a
    mapping from rho to such a vector.
    """
    rhos = np.array(sorted(set(float(r) for r in rho_grid)))
    if rhos.size == 0 or np.any(rhos < 0):
        raise ValueError("rho grid must be non-empty and nonnegative")
    if folds is None:
        folds = make_folds(dataset.n, k, seed)
    if folds.n != dataset.n:
        raise DataError(f"fold plan covers {folds.n} rows, dataset has {dataset.n}")
    fold_sets = split_folds(dataset, folds)

    def job(rho):
        pf = _pf_for(penalty_factors, rho)
        grid = full_lambda_grid(dataset, rho, alpha, pf, n_lambda, min_ratio, pairs)
        return (grid,) + heldout_errors(dataset, fold_sets, rho, grid, alpha, pf, pairs, tol)

    if workers > 1 and rhos.size > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, rhos))
    else:
        results = [job(r) for r in rhos]
    lambdas = np.array([r[0] for r in results])
    fold_errors = np.stack([r[1] for r in results], axis=1)
    mean = fold_errors.mean(axis=0)
    sd = fold_errors.std(axis=0, ddof=1)
    i, j = select_cell(mean, sd / math.sqrt(folds.k), rule)
    rho_star = float(rhos[i])
    refit = refit_at(dataset, rho_star, lambdas[i][: j + 1], alpha,
                     _pf_for(penalty_factors, rho_star), pairs)
    return CVResult(rhos, lambdas, mean, sd, fold_errors, (i, j), rule, refit, folds,
                    results[i][2][:, j].copy(), sum(r[3] for r in results))


def refit_at(dataset, rho, grid, alpha, pf, pairs=None, tol: float = 1e-9):
    """Full-data fit at the last lambda of ``grid``, warm started along it."""
    if dataset.family == BINOMIAL:
        from .glm import coop_logistic_path

        return coop_logistic_path(dataset, rho, grid, alpha=alpha, penalty_factors=pf)[-1]
    return coop_direct_fit(dataset, rho, grid, penalty_factors=pf, alpha=alpha, pairs=pairs, tol=tol)[-1]


class FoldLasso:
    """CV-tuned lasso on one fixed design with per-fold Gram matrices cached.

    Each fold centers its training rows (an unpenalized intercept); the
    full-data fit uses the design as given.
    """

    def __init__(self, X: np.ndarray, folds: FoldPlan):
        self.X = np.asarray(X, dtype=float)
        self.folds = folds
        self.full = GramProblem.from_data(self.X, np.zeros(self.X.shape[0]))
        self._folds = []
        for f in range(folds.k):
            tr, te = folds.train_rows(f), folds.test_rows(f)
            Xtr = self.X[tr]
            m = Xtr.mean(axis=0)
            G = Xtr.T @ Xtr - tr.size * np.outer(m, m)
            self._folds.append((tr, te, m, GramProblem(G, np.zeros(G.shape[0]), 0.0, tr.size)))

    def cv(self, target, n_lambda: int = 100, min_ratio: float | None = None,
           alpha: float = 1.0, tol: float = 1e-7):
        """Return (lambda*, cv error at lambda*, full-data coefficients at lambda*)."""
        target = np.asarray(target, dtype=float)
        full = self.full.with_target(self.X.T @ target, float(target @ target))
        lam_max = full.lambda_max(alpha)
        p = self.X.shape[1]
        if not lam_max > 0:
            return float(np.finfo(float).tiny), float(np.mean((target - target.mean()) ** 2)), np.zeros(p)
        mr = default_min_ratio(self.X.shape[0], p) if min_ratio is None else min_ratio
        grid = grid_from_max(lam_max, n_lambda, mr)
        spec = PenaltySpec(1.0, alpha)
        errs = np.zeros(grid.size)
        for tr, te, m, prob in self._folds:
            t_tr = target[tr]
            tbar = t_tr.mean()
            tc = t_tr - tbar
            xty = self.X[tr].T @ tc
            res = prob.with_target(xty, float(tc @ tc)).path(spec, grid, tol=tol)
            pred = tbar + (self.X[te] - m) @ res.betas.T
            errs += ((target[te][:, None] - pred) ** 2).sum(axis=0)
        errs /= self.X.shape[0]
        j = int(np.argmin(errs))
        beta = full.path(spec, grid[: j + 1], tol=tol).coefs[-1].beta
        return float(grid[j]), float(errs[j]), beta


XZ = "XZ"
ZX = "ZX"


@dataclass
class AdaptiveState:
    lambda_x_star: float
    lambda_z_star: float
    cv_error_sum: float
    orientation: str
    iterations: int = 0
    converged: bool = False
    theta_x: np.ndarray | None = field(default=None, repr=False)
    theta_z: np.ndarray | None = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)

    def penalty_ratio(self) -> tuple[float, bool]:
        """lambda_z* / lambda_x*, clamped; the flag reports clamping."""
        lo, hi = RATIO_BOUNDS
        if self.lambda_x_star <= 0:
            return hi, True
        r = self.lambda_z_star / self.lambda_x_star
        c = min(max(r, lo), hi)
        return c, c != r


def _two_views(dataset):
    if len(dataset.views) != 2:
        raise ValueError(f"adaptive cooperative learning supports exactly two views, got {len(dataset.views)}")


def adaptive_one_at_a_time(dataset: MultiViewDataset, rho: float, folds: FoldPlan,
                           orientation: str = XZ, *, n_lambda: int = 100,
                           min_ratio: float | None = None, alpha: float = 1.0,
                           max_iter: int = 20, tol: float = 1e-5,
                           _cache: dict | None = None) -> AdaptiveState:
    """Alternate CV-tuned lasso fits on the two views' partial residuals.

    Stops when the relative change of the cooperative objective (each view
    penalized at its own lambda*) drops below ``tol`` or after ``max_iter``
    rounds.  The lambdas are on the per-view subproblem scale.
    """
    _two_views(dataset)
    if orientation not in (XZ, ZX):
        raise ValueError(f"orientation must be {XZ!r} or {ZX!r}")
    if _cache is None:
        _cache = {}
    X, Z = dataset.matrices
    y = dataset.response.values
    solvers = [_cache.setdefault(m, FoldLasso(M, folds)) for m, M in enumerate((X, Z))]
    mats = (X, Z)
    thetas = [np.zeros(X.shape[1]), np.zeros(Z.shape[1])]
    lams = [0.0, 0.0]
    errs = [0.0, 0.0]
    order = (0, 1) if orientation == XZ else (1, 0)
    prev = None
    history = []
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        for m in order:
            other = mats[1 - m] @ thetas[1 - m]
            target = (y - (1.0 - rho) * other) / (1.0 + rho)
            lams[m], errs[m], thetas[m] = solvers[m].cv(target, n_lambda, min_ratio, alpha)
        obj = coop_objective([X, Z], y, thetas, rho, [(1 + rho) * lams[0], (1 + rho) * lams[1]], alpha)
        history.append(obj)
        if prev is not None and abs(obj - prev) < tol * max(abs(prev), np.finfo(float).tiny):
            converged = True
            break
        prev = obj
    return AdaptiveState(lams[0], lams[1], errs[0] + errs[1], orientation, it, converged,
                         thetas[0], thetas[1], history)


def adaptive_direct(dataset: MultiViewDataset, rho_grid=DEFAULT_RHO_GRID, folds: FoldPlan | None = None,
                    rule: str = RULE_MIN, *, k: int = 10, seed: int = 0, alpha: float = 1.0,
                    n_lambda: int = 100, min_ratio: float | None = None, workers: int = 1,
                    max_iter: int = 20) -> CVResult:
    """Cooperative CV with per-view penalty factors from the adaptive search.

    For each rho both update orders are run on the same folds and the one
    with the lower summed CV error supplies the ratio lambda_z*/lambda_x*,
    applied as the penalty factor of the second view.
    """
    _two_views(dataset)
    if folds is None:
        folds = make_folds(dataset.n, k, seed)
    px, pz = (v.p for v in dataset.views)
    cache: dict = {}
    pfs, info = {}, {}
    for rho in sorted(set(float(r) for r in rho_grid)):
        states = [adaptive_one_at_a_time(dataset, rho, folds, o, n_lambda=n_lambda, min_ratio=min_ratio,
                                         alpha=alpha, max_iter=max_iter, _cache=cache)
                  for o in (XZ, ZX)]
        best = min(states, key=lambda s: s.cv_error_sum)
        ratio, clamped = best.penalty_ratio()
        pfs[rho] = np.concatenate([np.ones(px), np.full(pz, ratio)])
        info[rho] = {"orientation": best.orientation, "lambda_x_star": best.lambda_x_star,
                     "lambda_z_star": best.lambda_z_star, "cv_error_sum": best.cv_error_sum,
                     "ratio": ratio, "clamped": clamped, "iterations": best.iterations}
    res = cv_coop(dataset, list(pfs), folds, rule, alpha=alpha, n_lambda=n_lambda,
                  min_ratio=min_ratio, penalty_factors=pfs, workers=workers)
    res.extras["adaptive"] = {str(r): v for r, v in info.items()}
    res.refit.extras["penalty_factors_ratio"] = info[res.selected[0]]["ratio"]
    return res
