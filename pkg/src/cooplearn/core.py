"""Cooperative regularized regression across data views.

The agreement-penalized objective for views X_1..X_M,

    1/2 ||y - sum_m X_m t_m||^2 + rho/2 sum_{m<m'} ||X_m t_m - X_m' t_m'||^2 + penalty,

equals an ordinary penalized least-squares problem on an augmented design
with one block of n contrast rows per view pair.  ``coop_direct_fit`` solves
that augmented problem along a lambda path; ``coop_iterative_fit`` cycles
over views, refitting each on a penalty-adjusted partial residual.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Protocol, Sequence

import numpy as np

from .data import BINOMIAL, GAUSSIAN, DataError, MultiViewDataset
from .enet import (
    DEFAULT_MAX_SWEEPS,
    GramProblem,
    PenaltySpec,
    default_min_ratio,
    grid_from_max,
)

SCHEMA_VERSION = 1
DIRECT = "direct"
ONE_AT_A_TIME = "one_at_a_time"
LATE_FUSION = "late_fusion"


@dataclass(frozen=True)
class AugmentedSystem:
    x_tilde: np.ndarray
    y_tilde: np.ndarray
    block_spans: tuple[tuple[str, slice], ...]
    row_blocks: tuple[tuple[str, object, slice], ...]
    rho: float

    @property
    def n_features(self) -> int:
        return self.x_tilde.shape[1]

    def split(self, beta: np.ndarray) -> dict[str, np.ndarray]:
        return {name: np.array(beta[span]) for name, span in self.block_spans}

    def span(self, name: str) -> slice:
        for n, s in self.block_spans:
            if n == name:
                return s
        raise KeyError(name)


def _view_names(views, names):
    if names is None:
        return [f"view{i + 1}" for i in range(len(views))]
    if len(names) != len(views):
        raise ValueError("one name per view required")
    return list(names)


def _check_views(views, y=None):
    views = [np.asarray(v, dtype=float) for v in views]
    if not views:
        raise ValueError("at least one view required")
    n = views[0].shape[0]
    for v in views:
        if v.ndim != 2 or v.shape[0] != n:
            raise ValueError("views must be 2-d matrices sharing the same number of rows")
    if y is not None and np.asarray(y).shape[0] != n:
        raise ValueError(f"response has {np.asarray(y).shape[0]} entries, views have {n} rows")
    return views


def build_augmented(views: Sequence[np.ndarray], y, rho: float, names=None) -> AugmentedSystem:
    """Stack the data rows over one contrast block per view pair.

    The block for pair (m, m') holds -sqrt(rho) X_m and +sqrt(rho) X_m';
    pairs are ordered lexicographically.
    """
    if not rho >= 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    views = _check_views(views, y)
    names = _view_names(views, names)
    n = views[0].shape[0]
    widths = [v.shape[1] for v in views]
    offsets = np.concatenate([[0], np.cumsum(widths)])
    spans = tuple((names[m], slice(int(offsets[m]), int(offsets[m + 1]))) for m in range(len(views)))
    pairs = list(combinations(range(len(views)), 2))
    xt = np.zeros((n * (1 + len(pairs)), int(offsets[-1])))
    xt[:n] = np.hstack(views)
    root = math.sqrt(rho)
    row_blocks = [("data", None, slice(0, n))]
    for b, (m, k) in enumerate(pairs, start=1):
        rows = slice(b * n, (b + 1) * n)
        xt[rows, spans[m][1]] = -root * views[m]
        xt[rows, spans[k][1]] = root * views[k]
        row_blocks.append(("agreement", (names[m], names[k]), rows))
    yt = np.zeros(xt.shape[0])
    yt[:n] = np.asarray(y, dtype=float)
    return AugmentedSystem(xt, yt, spans, tuple(row_blocks), float(rho))


PAIR_ROW = "row"
PAIR_COLUMN = "column"


@dataclass(frozen=True)
class PairSpec:
    """Paired features across views, penalized towards agreement.

    ``mode="row"`` appends one row per pair (view_a, j, view_b, k) with
    +sqrt(rho2) on feature j of view_a and -sqrt(rho2) on feature k of
    view_b; the objective gains rho2/2 * (t_aj - t_bk)^2.

    ``mode="column"`` appends n rows per pair holding
    sqrt(2 rho2) * [X_aj, -X_bk]; the objective gains
    rho2 * ||X_aj t_aj - X_bk t_bk||^2.
    """

    pairs: tuple[tuple[str, int, str, int], ...]
    rho2: float
    mode: str = PAIR_ROW

    def __post_init__(self):
        if not self.rho2 >= 0:
            raise ValueError(f"rho2 must be nonnegative, got {self.rho2}")
        if self.mode not in (PAIR_ROW, PAIR_COLUMN):
            raise ValueError(f"unknown pairing mode {self.mode!r}")
        pairs = tuple((str(a), int(j), str(b), int(k)) for a, j, b, k in self.pairs)
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate feature pairs")
        object.__setattr__(self, "pairs", pairs)

    def with_rho2(self, rho2: float) -> "PairSpec":
        return PairSpec(self.pairs, rho2, self.mode)

    def validate(self, widths: Mapping[str, int]) -> None:
        for a, j, b, k in self.pairs:
            for view, col in ((a, j), (b, k)):
                if view not in widths:
                    raise ValueError(f"pair refers to unknown view {view!r}")
                if not 0 <= col < widths[view]:
                    raise ValueError(f"column {col} out of range for view {view!r} ({widths[view]} columns)")

    def discrepancy(self, thetas: Mapping[str, np.ndarray], views: Mapping[str, np.ndarray] | None = None) -> float:
        """The summed pair disagreement this mode penalizes.

        Row mode: sum of (t_aj - t_bk)^2.  Column mode (needs ``views``):
        sum of ||X_aj t_aj - X_bk t_bk||^2.
        """
        if self.mode == PAIR_ROW:
            return float(sum((thetas[a][j] - thetas[b][k]) ** 2 for a, j, b, k in self.pairs))
        if views is None:
            raise ValueError("column-mode discrepancy needs the view matrices")
        total = 0.0
        for a, j, b, k in self.pairs:
            d = views[a][:, j] * thetas[a][j] - views[b][:, k] * thetas[b][k]
            total += float(d @ d)
        return total

    def penalty(self, thetas, views=None) -> float:
        scale = 0.5 if self.mode == PAIR_ROW else 1.0
        return scale * self.rho2 * self.discrepancy(thetas, views)


def add_paired_rows(system: AugmentedSystem, spec: PairSpec, views=None) -> AugmentedSystem:
    """Append pairing rows; column mode needs the view matrices in block order."""
    widths = {name: s.stop - s.start for name, s in system.block_spans}
    spec.validate(widths)
    p = system.n_features
    if spec.mode == PAIR_ROW:
        extra = np.zeros((len(spec.pairs), p))
        root = math.sqrt(spec.rho2)
        for i, (a, j, b, k) in enumerate(spec.pairs):
            extra[i, system.span(a).start + j] += root
            extra[i, system.span(b).start + k] -= root
    else:
        if views is None:
            raise ValueError("column-mode pairing needs the view matrices")
        mats = dict(zip([n for n, _ in system.block_spans], views))
        n = next(iter(mats.values())).shape[0]
        extra = np.zeros((n * len(spec.pairs), p))
        root = math.sqrt(2.0 * spec.rho2)
        for i, (a, j, b, k) in enumerate(spec.pairs):
            rows = slice(i * n, (i + 1) * n)
            extra[rows, system.span(a).start + j] += root * mats[a][:, j]
            extra[rows, system.span(b).start + k] -= root * mats[b][:, k]
    start = system.x_tilde.shape[0]
    blocks = system.row_blocks + (("paired", spec.pairs, slice(start, start + extra.shape[0])),)
    return AugmentedSystem(
        np.vstack([system.x_tilde, extra]),
        np.concatenate([system.y_tilde, np.zeros(extra.shape[0])]),
        system.block_spans, blocks, system.rho,
    )


def _as_list(thetas, names):
    if isinstance(thetas, Mapping):
        return [np.asarray(thetas[n], dtype=float) for n in names]
    return [np.asarray(t, dtype=float) for t in thetas]


def _per_view(value, m: int) -> list:
    if np.ndim(value) == 0:
        return [float(value)] * m
    value = list(value)
    if len(value) != m:
        raise ValueError(f"expected {m} per-view values, got {len(value)}")
    return value


def coop_objective(views, y, thetas, rho: float, lam=0.0, alpha: float = 1.0,
                   penalty_factors=None, pairs: PairSpec | None = None, names=None) -> float:
    """Prediction loss + pairwise agreement + elastic-net penalty.

    ``lam`` may be a scalar or one value per view; ``penalty_factors`` covers
    the concatenated features.
    """
    views = _check_views(views, y)
    names = _view_names(views, names)
    thetas = _as_list(thetas, names)
    for v, t in zip(views, thetas):
        if t.shape != (v.shape[1],):
            raise ValueError(f"coefficient vector of shape {t.shape} for a view with {v.shape[1]} columns")
    fits = [v @ t for v, t in zip(views, thetas)]
    r = np.asarray(y, dtype=float) - sum(fits)
    value = 0.5 * float(r @ r)
    for m, k in combinations(range(len(views)), 2):
        d = fits[m] - fits[k]
        value += 0.5 * rho * float(d @ d)
    lams = _per_view(lam, len(views))
    beta = np.concatenate(thetas)
    pf = np.ones(beta.size) if penalty_factors is None else np.asarray(penalty_factors, float)
    lam_vec = np.concatenate([np.full(t.size, l) for t, l in zip(thetas, lams)]) * pf
    value += float(np.sum(lam_vec * (alpha * np.abs(beta) + 0.5 * (1 - alpha) * beta**2)))
    if pairs is not None:
        value += pairs.penalty(dict(zip(names, thetas)), dict(zip(names, views)))
    return value


@dataclass
class CoopFit:
    thetas: dict[str, np.ndarray]
    rho: float
    lam: float
    alpha: float
    intercept: float
    objective: float
    algorithm: str = DIRECT
    iterations: int = 0
    family: str = GAUSSIAN
    centers: dict[str, np.ndarray] = field(default_factory=dict)
    scales: dict[str, np.ndarray] = field(default_factory=dict)
    column_names: dict[str, tuple[str, ...]] = field(default_factory=dict)
    converged: bool = True
    extras: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return list(self.thetas)

    @property
    def df(self) -> int:
        return int(sum(np.count_nonzero(t) for t in self.thetas.values()))

    def df_per_view(self) -> dict[str, int]:
        return {k: int(np.count_nonzero(t)) for k, t in self.thetas.items()}

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate(list(self.thetas.values()))

    def linear_predictor(self, standardized_views) -> np.ndarray:
        out = self.intercept
        for name, X in zip(self.names, standardized_views):
            out = out + np.asarray(X, float) @ self.thetas[name]
        return np.asarray(out, dtype=float)

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)

        views = []
        for name, t in self.thetas.items():
            entry = {"name": name, "coefficients": [float(v) for v in t]}
            if name in self.centers:
                entry["column_means"] = [float(v) for v in self.centers[name]]
                entry["column_sds"] = [float(v) for v in self.scales[name]]
            if name in self.column_names:
                entry["column_names"] = list(self.column_names[name])
            views.append(entry)
        out = {
            "schema": SCHEMA_VERSION,
            "family": self.family,
            "algorithm": self.algorithm,
            "views": views,
            "rho": num(self.rho),
            "lambda": num(self.lam),
            "alpha": num(self.alpha),
            "intercept": float(self.intercept),
            "objective": num(self.objective),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }
        extras = {k: v for k, v in self.extras.items() if k != "history"}
        if extras:
            out["extras"] = _jsonable(extras)
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "CoopFit":
        if d.get("schema") != SCHEMA_VERSION:
            raise DataError(f"unsupported fit schema {d.get('schema')!r}")

        def num(x):
            return float("nan") if x is None else float(x)

        thetas, centers, scales, cols = {}, {}, {}, {}
        for v in d["views"]:
            thetas[v["name"]] = np.asarray(v["coefficients"], dtype=float)
            if "column_means" in v:
                centers[v["name"]] = np.asarray(v["column_means"], dtype=float)
                scales[v["name"]] = np.asarray(v["column_sds"], dtype=float)
            if "column_names" in v:
                cols[v["name"]] = tuple(v["column_names"])
        return cls(thetas, num(d["rho"]), num(d["lambda"]), num(d["alpha"]), float(d["intercept"]),
                   num(d["objective"]), d.get("algorithm", DIRECT), int(d.get("iterations", 0)),
                   d.get("family", GAUSSIAN), centers, scales, cols, bool(d.get("converged", True)),
                   d.get("extras", {}))

    @classmethod
    def from_json(cls, text: str) -> "CoopFit":
        return cls.from_dict(json.loads(text))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _stats(dataset: MultiViewDataset):
    return (
        {v.source_name: v.column_means for v in dataset.views},
        {v.source_name: v.column_sds for v in dataset.views},
        {v.source_name: v.column_names for v in dataset.views},
    )


def make_fit(dataset: MultiViewDataset, thetas: dict, rho, lam, alpha, objective, **kw) -> CoopFit:
    centers, scales, cols = _stats(dataset)
    intercept = kw.pop("intercept", dataset.response.mean)
    return CoopFit(thetas, float(rho), float(lam), float(alpha), float(intercept), float(objective),
                   centers=centers, scales=scales, column_names=cols,
                   family=kw.pop("family", dataset.family), **kw)


@dataclass
class CoopPath:
    lambdas: np.ndarray
    fits: list[CoopFit]
    df: np.ndarray
    rho: float
    converged: np.ndarray

    def __len__(self):
        return len(self.fits)

    def __getitem__(self, i) -> CoopFit:
        return self.fits[i]

    def l1_norms(self) -> np.ndarray:
        return np.array([np.abs(f.beta).sum() for f in self.fits])


def augmented_problem(dataset: MultiViewDataset, rho: float, pairs: PairSpec | None = None):
    system = build_augmented(dataset.matrices, dataset.response.values, rho, dataset.names)
    if pairs is not None:
        system = add_paired_rows(system, pairs, dataset.matrices)
    return system, GramProblem.from_data(system.x_tilde, system.y_tilde)


def coop_lambda_grid(dataset: MultiViewDataset, rho: float, alpha: float = 1.0, penalty_factors=None,
                     n_lambda: int = 100, min_ratio: float | None = None,
                     pairs: PairSpec | None = None) -> np.ndarray:
    _, prob = augmented_problem(dataset, rho, pairs)
    if min_ratio is None:
        min_ratio = default_min_ratio(dataset.n, prob.p)
    return grid_from_max(prob.lambda_max(alpha, penalty_factors), n_lambda, min_ratio)


def coop_direct_fit(dataset: MultiViewDataset, rho: float, grid=None, penalty_factors=None,
                    alpha: float = 1.0, n_lambda: int = 100, min_ratio: float | None = None,
                    pairs: PairSpec | None = None, tol: float = 1e-9,
                    max_sweeps: int = DEFAULT_MAX_SWEEPS) -> CoopPath:
    """Solve the augmented lasso / elastic net along a decreasing lambda grid."""
    if dataset.family != GAUSSIAN:
        raise DataError("coop_direct_fit handles the gaussian family; use coop_glm for binomial")
    system, prob = augmented_problem(dataset, rho, pairs)
    if grid is None:
        mr = default_min_ratio(dataset.n, prob.p) if min_ratio is None else min_ratio
        grid = grid_from_max(prob.lambda_max(alpha, penalty_factors), n_lambda, mr)
    base = PenaltySpec(1.0, alpha, penalty_factors)
    path = prob.path(base, grid, tol=tol, max_sweeps=max_sweeps)
    views, y = dataset.matrices, dataset.response.values
    fits = []
    for lam, c in zip(path.lambdas, path.coefs):
        thetas = system.split(c.beta)
        obj = coop_objective(views, y, thetas, rho, lam, alpha, penalty_factors, pairs, dataset.names)
        extras = {}
        if pairs is not None:
            extras["paired_discrepancy"] = pairs.discrepancy(thetas, dict(zip(dataset.names, views)))
        fits.append(make_fit(dataset, thetas, rho, lam, alpha, obj, algorithm=DIRECT,
                             iterations=c.n_iter, converged=c.converged, extras=extras))
    return CoopPath(path.lambdas, fits, path.df, float(rho), np.array([c.converged for c in path.coefs]))


class Fitter(Protocol):
    """Per-view fitting mechanism for the one-at-a-time algorithm.

    ``fit`` minimizes ``weight/2 * ||target - f(X)||^2 + penalty(f)``.
    """

    def fit(self, X: np.ndarray, target: np.ndarray, weight: float = 1.0) -> "Fitter": ...

    def predict(self, X: np.ndarray) -> np.ndarray: ...

    def penalty(self) -> float: ...


class LassoFitter:
    """Elastic-net fitter; ``lam`` is on the scale of the joint objective.

    Keeps its coefficients between calls so successive fits warm start.
    """

    def __init__(self, lam: float, alpha: float = 1.0, penalty_factors=None, tol: float = 1e-12,
                 max_sweeps: int = 100_000):
        self.spec = PenaltySpec(lam, alpha, penalty_factors)
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.coef_ = None
        self.converged_ = True
        self._X = None
        self._prob = None

    def fit(self, X, target, weight: float = 1.0):
        if self._X is not X:
            self._prob = GramProblem.from_data(X, np.zeros(X.shape[0]))
            self._X = X
        target = np.asarray(target, float)
        prob = self._prob.with_target(X.T @ target, float(target @ target))
        res = prob.solve(self.spec.with_lambda(self.spec.lam / weight), warm=self.coef_,
                         tol=self.tol, max_sweeps=self.max_sweeps)
        self.coef_ = res.beta
        self.converged_ = res.converged
        return self

    def predict(self, X):
        if self.coef_ is None:
            return np.zeros(np.asarray(X).shape[0])
        return np.asarray(X) @ self.coef_

    def penalty(self) -> float:
        return 0.0 if self.coef_ is None else self.spec.value(self.coef_)


def coop_iterative_fit(dataset: MultiViewDataset, rho: float, lambdas=None, fitters=None,
                       alpha: float = 1.0, tol: float = 1e-12, max_iter: int = 1000) -> CoopFit:
    """One-at-a-time cooperative fit, cycling over the views in input order.

    View m is refit on the partial residual

        y*_m = y / (1 + (M-1) rho) - (1 - rho) sum_{m' != m} f_m' / (1 + (M-1) rho)

    with squared-error weight 1 + (M-1) rho, which is the exact block
    minimizer of the joint objective.  All views start at zero.  Hitting
    ``max_iter`` is reported by ``iterations == max_iter`` and
    ``converged=False``.
    """
    if not rho >= 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    views, y = dataset.matrices, dataset.response.values
    m_views = len(views)
    if fitters is None:
        if lambdas is None:
            raise ValueError("give per-view lambdas or fitters")
        fitters = [LassoFitter(l, alpha) for l in _per_view(lambdas, m_views)]
    if len(fitters) != m_views:
        raise ValueError(f"{len(fitters)} fitters for {m_views} views")
    weight = 1.0 + (m_views - 1) * rho
    preds = [np.zeros(dataset.n) for _ in views]
    fitted = [False] * m_views

    def objective():
        r = y - sum(preds)
        val = 0.5 * float(r @ r)
        for a, b in combinations(range(m_views), 2):
            d = preds[a] - preds[b]
            val += 0.5 * rho * float(d @ d)
        return val + sum(float(getattr(f, "penalty", lambda: 0.0)()) for f, done in zip(fitters, fitted) if done)

    prev = objective()
    history = [prev]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        for m in range(m_views):
            others = sum(preds[k] for k in range(m_views) if k != m)
            target = (y - (1.0 - rho) * others) / weight
            fitters[m].fit(views[m], target, weight)
            preds[m] = np.asarray(fitters[m].predict(views[m]), dtype=float)
            fitted[m] = True
            history.append(objective())
        cur = history[-1]
        if abs(prev - cur) < tol * (1.0 + abs(cur)):
            converged = True
            break
        prev = cur
    thetas = {}
    for name, f, X in zip(dataset.names, fitters, views):
        coef = getattr(f, "coef_", None)
        thetas[name] = np.asarray(coef, float) if coef is not None else np.full(X.shape[1], np.nan)
    lam_out = float(lambdas) if lambdas is not None and np.ndim(lambdas) == 0 else float("nan")
    return make_fit(dataset, thetas, rho, lam_out, alpha, history[-1], algorithm=ONE_AT_A_TIME,
                    iterations=it, converged=converged,
                    extras={"history": np.array(history), "fitters": fitters})


def predict(fit: CoopFit, views) -> np.ndarray:
    """Predict from raw (unstandardized) view matrices in the fit's view order.

    Views are standardized with the training statistics stored in the fit;
    the binomial family returns probabilities.
    """
    if len(views) != len(fit.thetas):
        raise DataError(f"fit has {len(fit.thetas)} views, got {len(views)}")
    eta = None
    for name, raw in zip(fit.names, views):
        raw = np.asarray(getattr(raw, "matrix", raw), dtype=float)
        if raw.ndim == 1:
            raw = raw[None, :]
        theta = fit.thetas[name]
        if raw.shape[1] != theta.shape[0]:
            raise DataError(f"view {name!r}: expected {theta.shape[0]} columns, got {raw.shape[1]}")
        Xs = (raw - fit.centers[name]) / fit.scales[name] if name in fit.centers else raw
        part = Xs @ theta
        eta = part if eta is None else eta + part
    eta = eta + fit.intercept
    if fit.family == BINOMIAL:
        return 1.0 / (1.0 + np.exp(-eta))
    return eta


def early_fusion_fit(dataset: MultiViewDataset, grid=None, **kw) -> CoopPath:
    """Lasso on the concatenated views: the rho = 0 cooperative path."""
    return coop_direct_fit(dataset, 0.0, grid, **kw)


def combine_predictions(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-norm least-squares weights of y on the columns of P."""
    return np.linalg.lstsq(np.asarray(P, float), np.asarray(y, float), rcond=None)[0]


def late_fusion_fit(dataset: MultiViewDataset, folds=None, k: int = 10, seed: int = 0,
                    n_lambda: int = 100, min_ratio: float | None = None,
                    alpha: float = 1.0) -> CoopFit:
    """Per-view CV lasso, then least squares on out-of-fold view predictions.

    The combiner is fit on cross-fitted predictions (each row predicted by
    models that never saw it); the final predictor applies the weights to the
    full-data view fits, so it stays linear in the views.
    """
    from .selection import cv_coop, make_folds

    if folds is None:
        folds = make_folds(dataset.n, k, seed)
    y = dataset.raw_y
    ybar = dataset.response.mean
    thetas, lams, oof = {}, {}, []
    for m, name in enumerate(dataset.names):
        Xm = dataset.matrices[m]
        if not np.any(Xm.T @ dataset.response.values):
            # nothing to fit: the view predicts the mean everywhere
            thetas[name], lams[name] = np.zeros(Xm.shape[1]), float("nan")
            oof.append(np.zeros(dataset.n))
            continue
        single = MultiViewDataset.build([dataset.raw[m]], y, dataset.family)
        cv = cv_coop(single, [0.0], folds, alpha=alpha, n_lambda=n_lambda, min_ratio=min_ratio)
        thetas[name] = cv.refit.thetas[name]
        lams[name] = cv.selected[1]
        oof.append(cv.oof_predictions - ybar)
    P = np.column_stack(oof)
    w = combine_predictions(P, y - ybar)
    weighted = {name: w[m] * thetas[name] for m, name in enumerate(dataset.names)}
    return make_fit(dataset, weighted, float("nan"), float("nan"), alpha, float("nan"),
                    algorithm=LATE_FUSION,
                    extras={"weights": w, "view_lambdas": lams, "view_thetas": thetas})
