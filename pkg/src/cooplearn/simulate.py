"""Seeded latent-factor data generators and the method-comparison harness.

Draw order from a single ``numpy.random.default_rng(seed)`` stream:

1. view columns, view by view, each view drawn as ``standard_normal((p_m, n))``
   and transposed so columns come out one after another;
2. the latent factors, ``s_u * standard_normal((p_u, n))`` transposed;
3. the noise, ``standard_normal(n)`` scaled by sigma.

Factor column i is added, times t_m, to column i of every view.  The
signal-to-noise ratio is the realized one, ``var(U beta_u) / sigma^2``.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import late_fusion_fit, predict
from .data import MultiViewDataset, write_csv
from .enet import GramProblem, PenaltySpec, grid_from_max
from .selection import DEFAULT_RHO_GRID, adaptive_direct, cv_coop, make_folds


@dataclass(frozen=True)
class FactorSimParams:
    n: int
    p_per_view: tuple[int, ...]
    p_u: int
    s_u: float
    t_per_view: tuple[float, ...]
    beta_u: tuple[float, ...]
    sigma: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "p_per_view", tuple(int(p) for p in self.p_per_view))
        object.__setattr__(self, "t_per_view", tuple(float(t) for t in self.t_per_view))
        object.__setattr__(self, "beta_u", tuple(float(b) for b in self.beta_u))
        if self.n < 1:
            raise ValueError("n must be positive")
        if len(self.p_per_view) != len(self.t_per_view) or not self.p_per_view:
            raise ValueError("one factor loading per view required")
        if len(self.beta_u) != self.p_u:
            raise ValueError(f"beta_u has {len(self.beta_u)} entries for p_u={self.p_u}")
        if not 0 < self.p_u < min(self.p_per_view):
            raise ValueError(f"need 0 < p_u < every view width, got p_u={self.p_u}, widths {self.p_per_view}")
        if self.s_u < 0 or self.sigma < 0 or any(t < 0 for t in self.t_per_view):
            raise ValueError("scale parameters must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimulatedDataset:
    views: list[np.ndarray]
    y: np.ndarray
    latent: np.ndarray
    realized_snr: float
    params: FactorSimParams
    signal: np.ndarray = field(repr=False, default=None)

    def split(self, n_train: int) -> tuple["SimulatedDataset", "SimulatedDataset"]:
        parts = []
        for rows in (slice(0, n_train), slice(n_train, None)):
            parts.append(SimulatedDataset([v[rows] for v in self.views], self.y[rows], self.latent[rows],
                                          self.realized_snr, self.params, self.signal[rows]))
        return parts[0], parts[1]

    def dataset(self, names=None) -> MultiViewDataset:
        names = names or [f"view{i + 1}" for i in range(len(self.views))]
        return MultiViewDataset.build(self.views, self.y, names=names)

    def write(self, directory, names=None) -> None:
        """CSV per view, the response, and a JSON sidecar of params and realized SNR."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        names = names or [f"view{i + 1}" for i in range(len(self.views))]
        for name, v in zip(names, self.views):
            write_csv(d / f"{name}.csv", v, [f"{name}_{j + 1}" for j in range(v.shape[1])])
        write_csv(d / "y.csv", self.y, ["y"])
        sidecar = {"schema": 1, "params": self.params.to_dict(), "realized_snr": self.realized_snr,
                   "views": names, "n": int(self.y.size)}
        (d / "sim.json").write_text(json.dumps(sidecar, indent=2))


def _draw(params: FactorSimParams):
    rng = np.random.default_rng(params.seed)
    n = params.n
    views = [rng.standard_normal((p, n)).T.copy() for p in params.p_per_view]
    U = params.s_u * rng.standard_normal((params.p_u, n)).T
    noise = rng.standard_normal(n)
    for v, t in zip(views, params.t_per_view):
        v[:, : params.p_u] += t * U
    return views, U, noise


def gen_factor_dataset(params: FactorSimParams) -> SimulatedDataset:
    views, U, noise = _draw(params)
    signal = U @ np.asarray(params.beta_u)
    y = signal + params.sigma * noise
    snr = float(np.var(signal) / params.sigma**2) if params.sigma > 0 else float("inf")
    return SimulatedDataset(views, y, U, snr, params, signal)


def calibrate_sigma(params: FactorSimParams, target_snr: float) -> float:
    """Noise level giving ``target_snr`` on the realized factor draw."""
    if not target_snr > 0:
        raise ValueError("target SNR must be positive")
    _, U, _ = _draw(params)
    v = float(np.var(U @ np.asarray(params.beta_u)))
    if not np.any(np.asarray(params.beta_u)) or v == 0:
        raise ValueError("no signal: beta_u is zero")
    return float(np.sqrt(v / target_snr))


def factor_params(n: int, p: int, t, snr: float, seed: int = 0, p_u: int = 30, s_u: float = 1.0,
                  beta: float = 2.0) -> FactorSimParams:
    """Configuration with equal view widths and sigma calibrated to ``snr``."""
    t = tuple(t)
    base = FactorSimParams(n, (p,) * len(t), p_u, s_u, t, (beta,) * p_u, 1.0, seed)
    return replace(base, sigma=calibrate_sigma(base, snr))


EXPERIMENTS = {
    # two correlated views, both carrying the factor signal
    "shared": dict(t=(2.0, 2.0), snr=1.8),
    # uncorrelated views, only the first carries signal
    "x_only": dict(t=(2.0, 0.0), snr=3.5),
}
METHODS = ("separate_x", "separate_z", "early_fusion", "late_fusion", "coop", "adaptive_coop")


@dataclass
class ComparisonResult:
    experiment: str
    test_mse: dict[str, list[float]]
    selected_rho: dict[str, list[float]]
    realized_snr: list[float]
    config: dict

    def mean(self, method: str) -> float:
        return float(np.mean(self.test_mse[method]))

    def wins(self, a: str, b: str) -> int:
        """Replicates where method ``a`` has test MSE at most that of ``b``."""
        return int(sum(x <= y for x, y in zip(self.test_mse[a], self.test_mse[b])))

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "experiment": self.experiment,
            "config": self.config,
            "test_mse": self.test_mse,
            "mean_test_mse": {m: self.mean(m) for m in self.test_mse},
            "selected_rho": self.selected_rho,
            "realized_snr": self.realized_snr,
            "ranking": sorted(self.test_mse, key=self.mean),
        }


def _mse(fit, views, y):
    return float(np.mean((y - predict(fit, views)) ** 2))


def run_replicate(params: FactorSimParams, n_train: int, methods=METHODS, k: int = 10,
                  rho_grid=DEFAULT_RHO_GRID, n_lambda: int = 100, workers: int = 1) -> dict:
    """Fit every method on one draw; return test MSE and selected rho per method."""
    sim = gen_factor_dataset(params)
    train, test = sim.split(n_train)
    ds = train.dataset(["X", "Z"])
    folds = make_folds(ds.n, k, params.seed)
    out, rho = {}, {}
    for method in methods:
        if method in ("separate_x", "separate_z"):
            m = 0 if method == "separate_x" else 1
            single = MultiViewDataset.build([ds.raw[m]], train.y)
            fit = cv_coop(single, [0.0], folds, n_lambda=n_lambda).refit
            out[method] = _mse(fit, [test.views[m]], test.y)
            continue
        if method == "early_fusion":
            res = cv_coop(ds, [0.0], folds, n_lambda=n_lambda)
        elif method == "late_fusion":
            fit = late_fusion_fit(ds, folds, n_lambda=n_lambda)
            out[method] = _mse(fit, test.views, test.y)
            continue
        elif method == "coop":
            res = cv_coop(ds, rho_grid, folds, n_lambda=n_lambda, workers=workers)
        elif method == "adaptive_coop":
            res = adaptive_direct(ds, rho_grid, folds, n_lambda=n_lambda, workers=workers)
        else:
            raise ValueError(f"unknown method {method!r}")
        out[method] = _mse(res.refit, test.views, test.y)
        rho[method] = res.selected[0]
    return {"test_mse": out, "selected_rho": rho, "realized_snr": sim.realized_snr}


def run_comparison(experiment: str, replicates: int = 10, seed: int = 0, n_train: int = 200,
                   n_test: int = 1000, p: int = 100, methods=METHODS, k: int = 10,
                   rho_grid=DEFAULT_RHO_GRID, n_lambda: int = 100, workers: int = 1,
                   log=None) -> ComparisonResult:
    """Replicated comparison of the fusion strategies on a factor-model setting.

    Replicate r uses seed ``seed + r``; train and test rows come from one draw.
    """
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}; choose from {sorted(EXPERIMENTS)}")
    cfg = EXPERIMENTS[experiment]
    test_mse = {m: [] for m in methods}
    sel = {m: [] for m in methods if m in ("coop", "adaptive_coop")}
    snrs = []
    for r in range(replicates):
        t0 = time.perf_counter()
        params = factor_params(n_train + n_test, p, cfg["t"], cfg["snr"], seed + r)
        rep = run_replicate(params, n_train, methods, k, rho_grid, n_lambda, workers)
        for m in methods:
            test_mse[m].append(rep["test_mse"][m])
        for m in sel:
            sel[m].append(rep["selected_rho"][m])
        snrs.append(rep["realized_snr"])
        if log is not None:
            log(f"{experiment} replicate {r + 1}/{replicates} done in {time.perf_counter() - t0:.1f}s")
    config = {"replicates": replicates, "seed": seed, "n_train": n_train, "n_test": n_test,
              "p_per_view": p, "p_u": 30, "s_u": 1.0, "beta_u": 2.0, "t": list(cfg["t"]),
              "target_snr": cfg["snr"], "k": k, "rho_grid": list(rho_grid), "n_lambda": n_lambda}
    return ComparisonResult(experiment, test_mse, sel, snrs, config)


SPARSITY_RHOS = (0.0, 0.5, 1.0, 2.0)


@dataclass
class SparsityTable:
    rhos: tuple[float, ...]
    l1_grid: np.ndarray
    mean_nonzero: np.ndarray  # (n_rho, n_grid)
    replicates: int
    mean_snr: float

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(r), float(s), float(c))
                for r, row in zip(self.rhos, self.mean_nonzero) for s, c in zip(self.l1_grid, row)]

    def to_dict(self) -> dict:
        return {"schema": 1, "rhos": list(self.rhos), "l1_grid": self.l1_grid.tolist(),
                "mean_nonzero": self.mean_nonzero.tolist(), "replicates": self.replicates,
                "mean_realized_snr": self.mean_snr}


def sparsity_replicate(seed: int, n: int = 100, p: int = 20, coef: float = 2.0, snr: float = 2.0):
    """Independent Gaussian views with y = X b + Z b + noise, all b equal to ``coef``."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((p, n)).T
    Z = rng.standard_normal((p, n)).T
    signal = (X + Z) @ np.full(p, coef)
    sigma = np.sqrt(np.var(signal) / snr)
    y = signal + sigma * rng.standard_normal(n)
    return X, Z, y, float(np.var(signal) / sigma**2)


def nonzero_at_l1(l1: np.ndarray, df: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Nonzero count at the first path point whose l1 norm reaches each grid value."""
    idx = np.searchsorted(np.maximum.accumulate(l1), grid, side="left")
    idx = np.minimum(idx, l1.size - 1)
    return df[idx].astype(float)


def sparsity_study(seed: int = 0, replicates: int = 100, rhos=SPARSITY_RHOS, l1_grid=None,
                   n_lambda: int = 200, min_ratio: float = 1e-4) -> SparsityTable:
    """Mean nonzero count against solution l1 norm for several agreement weights.

    Paths are computed on standardized views with a centered response; each
    replicate uses seed ``seed + r``.
    """
    from .core import build_augmented

    rhos = tuple(float(r) for r in rhos)
    if l1_grid is None:
        l1_grid = np.linspace(2.0, 40.0, 20)
    l1_grid = np.asarray(l1_grid, dtype=float)
    counts = np.zeros((len(rhos), l1_grid.size))
    snrs = []
    for r in range(replicates):
        X, Z, y, snr = sparsity_replicate(seed + r)
        snrs.append(snr)
        ds = MultiViewDataset.build([X, Z], y)
        for i, rho in enumerate(rhos):
            sys_ = build_augmented(ds.matrices, ds.response.values, rho)
            prob = GramProblem.from_data(sys_.x_tilde, sys_.y_tilde)
            grid = grid_from_max(prob.lambda_max(), n_lambda, min_ratio)
            path = prob.path(PenaltySpec(1.0), grid, tol=1e-9)
            betas = path.betas
            counts[i] += nonzero_at_l1(np.abs(betas).sum(axis=1), path.df, l1_grid)
    return SparsityTable(rhos, l1_grid, counts / replicates, replicates, float(np.mean(snrs)))

