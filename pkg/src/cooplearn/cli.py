"""Command-line interface.

Subcommands: fit, cv, predict, simulate, theory-check.
Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import CoopFit, PairSpec, coop_direct_fit, predict
from .data import FAMILIES, GAUSSIAN, DataError, MultiViewDataset, load_response, load_view, write_csv
from .enet import SolverError, grid_from_max
from .selection import DEFAULT_RHO_GRID, RULE_MIN, RULE_ONE_SE, adaptive_direct, cv_coop, make_folds

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    """Invalid run configuration; the message names the field."""


@dataclass
class RunConfig:
    view_paths: list[str] = field(default_factory=list)
    response_path: str | None = None
    view_names: list[str] | None = None
    family: str = GAUSSIAN
    rho_grid: list[float] = field(default_factory=lambda: list(DEFAULT_RHO_GRID))
    rho: float | None = None
    lam: float | None = None
    n_lambda: int = 100
    min_ratio: float | None = None
    alpha_mix: float = 1.0
    k_folds: int = 10
    seed: int = 0
    rule: str = RULE_MIN
    adaptive: bool = False
    pairs_path: str | None = None
    rho2: float = 1.0
    pair_mode: str = "row"
    has_header: bool = True
    output_dir: str = "."
    workers: int = 1

    def validate(self, need_data: bool = True) -> None:
        if need_data:
            if len(self.view_paths) < 1:
                raise ConfigError("view_paths: at least one view file is required")
            for p in self.view_paths:
                if not Path(p).is_file():
                    raise ConfigError(f"view_paths: no such file: {p}")
            if self.response_path is None:
                raise ConfigError("response_path: a response file is required")
            if not Path(self.response_path).is_file():
                raise ConfigError(f"response_path: no such file: {self.response_path}")
            if self.view_names is not None and len(self.view_names) != len(self.view_paths):
                raise ConfigError("view_names: one name per view file required")
        if self.pairs_path is not None and not Path(self.pairs_path).is_file():
            raise ConfigError(f"pairs_path: no such file: {self.pairs_path}")
        if self.family not in FAMILIES:
            raise ConfigError(f"family: must be one of {FAMILIES}, got {self.family!r}")
        if not self.rho_grid or any(not (r >= 0) for r in self.rho_grid):
            raise ConfigError("rho_grid: must be a non-empty list of nonnegative numbers")
        if self.rho is not None and not self.rho >= 0:
            raise ConfigError("rho: must be nonnegative")
        if self.lam is not None and not self.lam > 0:
            raise ConfigError("lambda: must be positive")
        if self.n_lambda < 2:
            raise ConfigError("n_lambda: must be at least 2")
        if self.min_ratio is not None and not 0 < self.min_ratio < 1:
            raise ConfigError("min_ratio: must lie in (0, 1)")
        if not 0 <= self.alpha_mix <= 1:
            raise ConfigError("alpha_mix: must lie in [0, 1]")
        if self.k_folds < 2:
            raise ConfigError("k_folds: must be at least 2")
        if self.rule not in (RULE_MIN, RULE_ONE_SE):
            raise ConfigError(f"rule: must be {RULE_MIN!r} or {RULE_ONE_SE!r}")
        if self.rho2 < 0:
            raise ConfigError("rho2: must be nonnegative")
        if self.pair_mode not in ("row", "column"):
            raise ConfigError("pair_mode: must be 'row' or 'column'")
        if self.workers < 1:
            raise ConfigError("workers: must be at least 1")

    @classmethod
    def merged(cls, file_values: dict, flag_values: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        values = {}
        for source in (file_values, flag_values):
            for k, v in source.items():
                key = "lam" if k == "lambda" else k
                if key not in known:
                    raise ConfigError(f"{k}: unknown configuration field")
                if v is not None:
                    values[key] = v
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _logger(out: Path) -> logging.Logger:
    log = logging.getLogger(f"cooplearn.run.{out.resolve()}")
    log.setLevel(logging.INFO)
    log.handlers.clear()
    h = logging.FileHandler(out / "run.log", mode="w")
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(h)
    log.propagate = False
    return log


def _load_dataset(cfg: RunConfig) -> MultiViewDataset:
    views = []
    for i, p in enumerate(cfg.view_paths):
        name = cfg.view_names[i] if cfg.view_names else None
        views.append(load_view(p, cfg.has_header, name))
    names = [v.name for v in views]
    if len(set(names)) != len(names):
        raise ConfigError(f"view_names: view names must be unique, got {names}")
    y = load_response(cfg.response_path, cfg.has_header)
    return MultiViewDataset.build(views, y, cfg.family)


def load_pairs(path, dataset: MultiViewDataset, rho2: float, mode: str = "row") -> PairSpec:
    """Read a pair file with columns view_a, col_a, view_b, col_b.

    Columns are given as 0-based indices or as column names of the view.
    """
    cols = {v.source_name: list(v.column_names) for v in dataset.views}
    pairs = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty pair file")
    if rows[0][0].strip().lower() == "view_a":
        rows = rows[1:]

    def col(view, token, line):
        if view not in cols:
            raise DataError(f"{path}: line {line}: unknown view {view!r}")
        token = token.strip()
        if token in cols[view]:
            return cols[view].index(token)
        try:
            return int(token)
        except ValueError:
            raise DataError(f"{path}: line {line}: unknown column {token!r} of view {view!r}") from None

    for line, r in enumerate(rows, start=1):
        if len(r) != 4:
            raise DataError(f"{path}: line {line}: expected 4 fields, got {len(r)}")
        a, j, b, k = (c.strip() for c in r)
        pairs.append((a, col(a, j, line), b, col(b, k, line)))
    spec = PairSpec(tuple(pairs), rho2, mode)
    spec.validate({v.source_name: v.p for v in dataset.views})
    return spec


def _path_rows(path, names):
    rows = []
    for lam, f in zip(path.lambdas, path.fits):
        dfv = f.df_per_view()
        rows.append([repr(float(lam))] + [str(dfv[n]) for n in names] + [str(f.df), repr(float(f.objective))])
    return rows


def _write_path(out: Path, path, names) -> None:
    with (out / "path.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda"] + [f"df_{n}" for n in names] + ["df_total", "objective"])
        w.writerows(_path_rows(path, names))


def _fit_record(fit: CoopFit, dataset: MultiViewDataset) -> dict:
    rec = fit.to_dict()
    rec["fitted_values"] = [float(v) for v in predict(fit, dataset.raw)]
    return rec


def _lambda_path(dataset, cfg, rho, pairs):
    from .selection import full_lambda_grid

    grid = full_lambda_grid(dataset, rho, cfg.alpha_mix, None, cfg.n_lambda, cfg.min_ratio, pairs)
    if cfg.lam is not None:
        if cfg.lam >= grid[0]:
            return np.array([cfg.lam])
        grid = grid_from_max(grid[0], cfg.n_lambda, cfg.lam / grid[0])
    return grid


def _fit_path(dataset, cfg, rho, grid, pairs, pf=None):
    if dataset.family == GAUSSIAN:
        return coop_direct_fit(dataset, rho, grid, penalty_factors=pf, alpha=cfg.alpha_mix, pairs=pairs)
    from .core import CoopPath
    from .glm import coop_logistic_path

    if pairs is not None:
        raise ConfigError("pairs_path: paired features are supported for the gaussian family only")
    fits = coop_logistic_path(dataset, rho, grid, alpha=cfg.alpha_mix, penalty_factors=pf)
    return CoopPath(np.asarray(grid), fits, np.array([f.df for f in fits]), rho,
                    np.array([f.converged for f in fits]))


def _run_cv(dataset, cfg, pairs, log):
    folds = make_folds(dataset.n, cfg.k_folds, cfg.seed)
    grid = [cfg.rho] if cfg.rho is not None else cfg.rho_grid
    t0 = time.perf_counter()
    if cfg.adaptive:
        if pairs is not None:
            raise ConfigError("adaptive: cannot be combined with pairs_path")
        res = adaptive_direct(dataset, grid, folds, cfg.rule, alpha=cfg.alpha_mix, n_lambda=cfg.n_lambda,
                              min_ratio=cfg.min_ratio, workers=cfg.workers)
    else:
        res = cv_coop(dataset, grid, folds, cfg.rule, alpha=cfg.alpha_mix, n_lambda=cfg.n_lambda,
                      min_ratio=cfg.min_ratio, pairs=pairs, workers=cfg.workers)
    log.info("cross-validation over %d rho values took %.2fs", len(grid), time.perf_counter() - t0)
    if res.n_unconverged:
        log.warning("%d inner fits did not converge", res.n_unconverged)
    return res


def cmd_fit(cfg: RunConfig, write_cv: bool = False) -> dict:
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = _logger(out)
    t0 = time.perf_counter()
    dataset = _load_dataset(cfg)
    pairs = load_pairs(cfg.pairs_path, dataset, cfg.rho2, cfg.pair_mode) if cfg.pairs_path else None
    log.info("loaded %d rows, views %s", dataset.n, dataset.names)
    cv = None
    if cfg.lam is not None and not write_cv:
        rho = cfg.rho if cfg.rho is not None else cfg.rho_grid[0]
        path = _fit_path(dataset, cfg, rho, _lambda_path(dataset, cfg, rho, pairs), pairs)
        fit = path[-1]
    else:
        cv = _run_cv(dataset, cfg, pairs, log)
        rho = cv.selected[0]
        i, j = cv.selected_index
        pf = None
        if cfg.adaptive:
            px = dataset.views[0].p
            ratio = cv.extras["adaptive"][str(rho)]["ratio"]
            pf = np.concatenate([np.ones(px), np.full(dataset.views[1].p, ratio)])
        path = _fit_path(dataset, cfg, rho, cv.lambdas[i], pairs, pf)
        fit = path[j]
    rec = _fit_record(fit, dataset)
    if pairs is not None:
        rec["paired_discrepancy"] = fit.extras.get("paired_discrepancy")
        rec["rho2"] = pairs.rho2
    if cv is not None:
        rec["selection"] = {"rule": cv.rule, "rho": cv.selected[0], "lambda": cv.selected[1],
                            "cv_error": cv.min_error}
    _dump(out / "fit.json", rec)
    _write_path(out, path, dataset.names)
    if write_cv and cv is not None:
        _dump(out / "cv.json", cv.to_dict())
    if not all(f.converged for f in path.fits):
        log.warning("some path fits did not converge")
    log.info("done in %.2fs", time.perf_counter() - t0)
    return rec


def cmd_cv(cfg: RunConfig) -> dict:
    return cmd_fit(cfg, write_cv=True)


def cmd_predict(fit_path, view_paths, output=None, has_header: bool = True) -> np.ndarray:
    if not Path(fit_path).is_file():
        raise ConfigError(f"fit: no such file: {fit_path}")
    for p in view_paths:
        if not Path(p).is_file():
            raise ConfigError(f"views: no such file: {p}")
    fit = CoopFit.from_json(Path(fit_path).read_text())
    views = [load_view(p, has_header).matrix for p in view_paths]
    pred = predict(fit, views)
    if output:
        write_csv(output, pred, ["prediction"])
    else:
        for v in pred:
            print(repr(float(v)))
    return pred


def cmd_simulate(args) -> dict:
    from . import simulate as sim

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = _logger(out)
    p = 500 if args.full else args.p
    if args.experiment == "sparsity":
        table = sim.sparsity_study(args.seed, args.replicates or 100)
        report = table.to_dict()
        with (out / "sparsity.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rho", "l1_norm", "mean_nonzero"])
            w.writerows([[repr(a), repr(b), repr(c)] for a, b, c in table.rows()])
    elif args.experiment == "dataset":
        t = tuple(args.t) if args.t else (2.0, 2.0)
        params = sim.factor_params(args.n, p, t, args.snr, args.seed)
        data = sim.gen_factor_dataset(params)
        names = [f"view{i + 1}" for i in range(len(t))]
        data.write(out, names)
        report = {"schema": 1, "params": params.to_dict(), "realized_snr": data.realized_snr}
    else:
        res = sim.run_comparison(args.experiment, args.replicates or 10, args.seed, p=p,
                                 workers=args.workers, log=log.info)
        report = res.to_dict()
    _dump(out / f"{args.experiment}.json", report)
    return report


def cmd_theory_check(args) -> dict:
    from .theory import LatentModelParams, theory_check

    params = LatentModelParams(args.gamma_x, args.gamma_z, args.gamma_y, args.sigma_x, args.sigma_z,
                               args.sigma_y, args.n)
    report = theory_check(params, args.seed, args.draws)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return report


def _add_data_args(p):
    p.add_argument("--config", help="JSON file of RunConfig fields; flags override it")
    p.add_argument("--views", dest="view_paths", nargs="+", help="one CSV file per view")
    p.add_argument("--response", dest="response_path", help="CSV file with one response column")
    p.add_argument("--view-names", dest="view_names", nargs="+")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--rho-grid", dest="rho_grid", type=float, nargs="+")
    p.add_argument("--rho", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--n-lambda", dest="n_lambda", type=int)
    p.add_argument("--min-ratio", dest="min_ratio", type=float)
    p.add_argument("--alpha-mix", dest="alpha_mix", type=float)
    p.add_argument("--k-folds", dest="k_folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rule", choices=(RULE_MIN, RULE_ONE_SE))
    p.add_argument("--adaptive", action="store_true", default=None)
    p.add_argument("--pairs", dest="pairs_path")
    p.add_argument("--rho2", type=float)
    p.add_argument("--pair-mode", dest="pair_mode", choices=("row", "column"))
    p.add_argument("--no-header", dest="has_header", action="store_false", default=None)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cooplearn", description="Cooperative multi-view regression")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_data_args(sub.add_parser("fit", help="fit at a given lambda, or select by CV"))
    _add_data_args(sub.add_parser("cv", help="cross-validate over (rho, lambda) and refit"))
    p = sub.add_parser("predict", help="predict from a saved fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--views", nargs="+", required=True)
    p.add_argument("--output")
    p.add_argument("--no-header", dest="has_header", action="store_false")
    p = sub.add_parser("simulate", help="generate data or run a simulation study")
    p.add_argument("--experiment", choices=("shared", "x_only", "sparsity", "dataset"), required=True)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=int, default=100, help="features per view")
    p.add_argument("--full", action="store_true", help="use 500 features per view")
    p.add_argument("--n", type=int, default=200, help="rows for --experiment dataset")
    p.add_argument("--t", type=float, nargs="+", help="factor loadings per view for --experiment dataset")
    p.add_argument("--snr", type=float, default=1.8)
    p.add_argument("--output-dir", default=".")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p = sub.add_parser("theory-check", help="verify the latent-model risk formulas numerically")
    for name in ("gamma-x", "gamma-z", "gamma-y", "sigma-x", "sigma-z", "sigma-y"):
        p.add_argument(f"--{name}", type=float, default=1.0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=50)
    p.add_argument("--output")
    return parser


def _config_from(args) -> RunConfig:
    file_values = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config: no such file: {path}")
        try:
            file_values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON in {path}: {exc}") from None
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if flags.get("workers") is None and "workers" not in file_values:
        flags["workers"] = os.cpu_count() or 1
    return RunConfig.merged(file_values, flags)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command in ("fit", "cv"):
            cfg = _config_from(args)
            (cmd_cv if args.command == "cv" else cmd_fit)(cfg)
        elif args.command == "predict":
            cmd_predict(args.fit, args.views, args.output, args.has_header)
        elif args.command == "simulate":
            cmd_simulate(args)
        else:
            report = cmd_theory_check(args)
            if not report["all_passed"]:
                return EXIT_NUMERIC
    except (ConfigError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
