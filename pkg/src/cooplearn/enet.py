"""Penalized least squares by cyclic coordinate descent.

Minimizes

    (1/2) ||y - X b||^2 + lam * sum_j pf_j * (alpha * |b_j| + (1 - alpha) * b_j^2 / 2)

using covariance updates: the kernel works on the Gram matrix ``X'X`` and
``X'y`` so repeated solves on one design (paths, warm starts, changing
targets) never touch the rows again.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

DEFAULT_TOL = 1e-7
DEFAULT_MAX_SWEEPS = 10_000
# lambda_max for pure ridge is infinite; use this mixing floor instead
_ALPHA_FLOOR = 1e-3


class SolverError(ArithmeticError):
    """Raised when an iterative solver cannot make progress."""


def soft_threshold(z, gamma):
    """sign(z) * max(|z| - gamma, 0)."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("threshold must be nonnegative")
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


@numba.njit(cache=True, nogil=True)
def _cd_kernel(G, c, beta, l1, l2, tol, max_sweeps):
    p = beta.shape[0]
    grad = c - G @ beta
    n_sweeps = 0
    max_change = 0.0
    converged = False
    while n_sweeps < max_sweeps:
        n_sweeps += 1
        max_change = 0.0
        max_abs = 0.0
        for j in range(p):
            denom = G[j, j] + l2[j]
            old = beta[j]
            if denom <= 0.0:
                new = 0.0
            else:
                z = grad[j] + G[j, j] * old
                if z > l1[j]:
                    new = (z - l1[j]) / denom
                elif z < -l1[j]:
                    new = (z + l1[j]) / denom
                else:
                    new = 0.0
            delta = new - old
            if delta != 0.0:
                beta[j] = new
                for k in range(p):
                    grad[k] -= G[k, j] * delta
                if abs(delta) > max_change:
                    max_change = abs(delta)
            if abs(new) > max_abs:
                max_abs = abs(new)
        if max_change < tol * (1.0 + max_abs):
            converged = True
            break
    return n_sweeps, converged, max_change


@dataclass(frozen=True)
class PenaltySpec:
    lam: float
    alpha: float = 1.0
    penalty_factors: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and nonnegative, got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.penalty_factors is not None:
            pf = np.asarray(self.penalty_factors, dtype=float)
            if pf.ndim != 1 or not np.all(np.isfinite(pf)) or np.any(pf < 0):
                raise ValueError("penalty factors must be a finite nonnegative vector")
            object.__setattr__(self, "penalty_factors", pf)

    def factors(self, p: int) -> np.ndarray:
        if self.penalty_factors is None:
            return np.ones(p)
        if self.penalty_factors.shape[0] != p:
            raise ValueError(
                f"{self.penalty_factors.shape[0]} penalty factors for {p} features"
            )
        return self.penalty_factors

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(lam, self.alpha, self.penalty_factors)

    def weights(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-feature (l1, l2) weights."""
        pf = self.factors(p)
        return self.lam * pf * self.alpha, self.lam * pf * (1.0 - self.alpha)

    def value(self, beta: np.ndarray) -> float:
        l1, l2 = self.weights(beta.shape[0])
        return float(np.sum(l1 * np.abs(beta)) + 0.5 * np.sum(l2 * beta**2))


@dataclass
class Coefs:
    beta: np.ndarray
    n_iter: int
    converged: bool
    objective: float

    @property
    def df(self) -> int:
        return int(np.count_nonzero(self.beta))


@dataclass
class PathResult:
    lambdas: np.ndarray
    coefs: list[Coefs]
    df: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.df is None:
            self.df = np.array([c.df for c in self.coefs])

    @property
    def betas(self) -> np.ndarray:
        """(n_lambda, p) coefficient matrix."""
        return np.array([c.beta for c in self.coefs])

    @property
    def all_converged(self) -> bool:
        return all(c.converged for c in self.coefs)


class GramProblem:
    """A least-squares design reduced to its sufficient statistics."""

    def __init__(self, gram: np.ndarray, xty: np.ndarray, yty: float, n: int | None = None):
        self.gram = np.ascontiguousarray(gram, dtype=float)
        self.xty = np.ascontiguousarray(xty, dtype=float)
        self.yty = float(yty)
        self.n = n
        p = self.xty.shape[0]
        if self.gram.shape != (p, p):
            raise ValueError(f"Gram matrix shape {self.gram.shape} does not match {p} features")

    @classmethod
    def from_data(cls, X, y) -> "GramProblem":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"dimension mismatch: X is {X.shape}, y has {y.shape[0]} entries")
        return cls(X.T @ X, X.T @ y, float(y @ y), X.shape[0])

    @property
    def p(self) -> int:
        return self.xty.shape[0]

    def with_target(self, xty, yty) -> "GramProblem":
        return GramProblem(self.gram, xty, yty, self.n)

    def loss(self, beta) -> float:
        return 0.5 * self.yty - float(self.xty @ beta) + 0.5 * float(beta @ self.gram @ beta)

    def objective(self, beta, spec: PenaltySpec) -> float:
        return self.loss(beta) + spec.value(beta)

    def solve(self, spec: PenaltySpec, warm=None, tol: float = DEFAULT_TOL,
              max_sweeps: int = DEFAULT_MAX_SWEEPS, check_descent: bool = False) -> Coefs:
        if tol <= 0:
            raise ValueError("tol must be positive")
        l1, l2 = spec.weights(self.p)
        if warm is None:
            beta = np.zeros(self.p)
        else:
            beta = np.array(warm.beta if isinstance(warm, Coefs) else warm, dtype=float)
            if beta.shape != (self.p,):
                raise ValueError(f"warm start has shape {beta.shape}, expected ({self.p},)")
        if not check_descent:
            n_sweeps, converged, _ = _cd_kernel(self.gram, self.xty, beta, l1, l2, tol, max_sweeps)
            return Coefs(beta, int(n_sweeps), bool(converged), self.objective(beta, spec))
        # debug mode: one sweep at a time, asserting descent
        prev = self.objective(beta, spec)
        converged = False
        n_sweeps = 0
        while n_sweeps < max_sweeps and not converged:
            _, converged, _ = _cd_kernel(self.gram, self.xty, beta, l1, l2, tol, 1)
            n_sweeps += 1
            cur = self.objective(beta, spec)
            assert cur <= prev + 1e-12 * (1.0 + abs(prev)), (
                f"objective increased in sweep {n_sweeps}: {prev} -> {cur}"
            )
            prev = cur
        return Coefs(beta, n_sweeps, bool(converged), prev)

    def lambda_max(self, alpha: float = 1.0, penalty_factors=None) -> float:
        pf = np.ones(self.p) if penalty_factors is None else np.asarray(penalty_factors, float)
        free = pf == 0
        score = self.xty
        if np.any(free):
            # residualize on the unpenalized columns first
            b = np.linalg.lstsq(self.gram[np.ix_(free, free)], self.xty[free], rcond=None)[0]
            score = self.xty - self.gram[:, free] @ b
        pen = ~free
        if not np.any(pen):
            raise ValueError("no penalized features")
        return float(np.max(np.abs(score[pen]) / (max(alpha, _ALPHA_FLOOR) * pf[pen])))

    def path(self, spec: PenaltySpec, lambdas, tol: float = DEFAULT_TOL,
             max_sweeps: int = DEFAULT_MAX_SWEEPS, warm=None) -> PathResult:
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.ndim != 1 or lambdas.size == 0:
            raise ValueError("lambda grid must be a non-empty vector")
        if np.any(np.diff(lambdas) >= 0):
            raise ValueError("lambda grid must be strictly decreasing")
        coefs = []
        prev = warm
        for lam in lambdas:
            fit = self.solve(spec.with_lambda(lam), warm=prev, tol=tol, max_sweeps=max_sweeps)
            coefs.append(fit)
            prev = fit
        return PathResult(lambdas, coefs)


def default_min_ratio(n: int, p: int) -> float:
    return 1e-4 if n > p else 1e-2


def grid_from_max(lam_max: float, n_lambda: int = 100, min_ratio: float = 1e-3) -> np.ndarray:
    if n_lambda < 2:
        raise ValueError("n_lambda must be at least 2")
    if not 0 < min_ratio < 1:
        raise ValueError("min_ratio must lie in (0, 1)")
    if not lam_max > 0:
        raise ValueError("degenerate response: lambda_max is zero")
    return lam_max * np.exp(np.linspace(0.0, np.log(min_ratio), n_lambda))


def lambda_max(X, y, alpha: float = 1.0, penalty_factors=None) -> float:
    """Smallest lambda at which every penalized coefficient is zero."""
    return GramProblem.from_data(X, y).lambda_max(alpha, penalty_factors)


def lambda_grid(X, y, alpha: float = 1.0, penalty_factors=None, n_lambda: int = 100,
                min_ratio: float | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if min_ratio is None:
        min_ratio = default_min_ratio(*X.shape)
    return grid_from_max(lambda_max(X, y, alpha, penalty_factors), n_lambda, min_ratio)


def _objective(X, y, beta, spec):
    r = y - X @ beta
    return 0.5 * float(r @ r) + spec.value(beta)


def coordinate_descent(X, y, spec: PenaltySpec, warm=None, tol: float = DEFAULT_TOL,
                       max_sweeps: int = DEFAULT_MAX_SWEEPS, check_descent: bool = False) -> Coefs:
    """Solve one elastic-net problem.

    Non-convergence is reported through ``Coefs.converged``, not raised.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    prob = GramProblem.from_data(X, y)
    out = prob.solve(spec, warm, tol, max_sweeps, check_descent)
    out.objective = _objective(X, y, out.beta, spec)
    return out


def fit_path(X, y, spec: PenaltySpec, grid, tol: float = DEFAULT_TOL,
             max_sweeps: int = DEFAULT_MAX_SWEEPS) -> PathResult:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    res = GramProblem.from_data(X, y).path(spec, grid, tol, max_sweeps)
    for lam, c in zip(res.lambdas, res.coefs):
        c.objective = _objective(X, y, c.beta, spec.with_lambda(lam))
    return res


def kkt_violation(X, y, beta, spec: PenaltySpec) -> float:
    """Largest violation of the stationarity conditions at ``beta``."""
    X = np.asarray(X, dtype=float)
    score = X.T @ (np.asarray(y, float) - X @ beta)
    l1, l2 = spec.weights(beta.shape[0])
    score = score - l2 * beta
    active = beta != 0
    viol = np.zeros_like(beta)
    viol[active] = np.abs(score[active] - l1[active] * np.sign(beta[active]))
    viol[~active] = np.maximum(np.abs(score[~active]) - l1[~active], 0.0)
    return float(viol.max()) if viol.size else 0.0
