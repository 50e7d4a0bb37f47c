"""Experiment orchestration: splits, valuation pipelines, point addition, timing.

Everything here is seed-partitioned: each repetition, each valued point and
each benchmark cell draws from its own derived stream, so results are
reproducible regardless of execution order or thread count.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import (
    AccuracyUtilityContext,
    DensityUtilityContext,
    RegressionUtilityContext,
    UtilitySpec,
    dshapley_mc_baseline,
)
from .classification import (
    dshapley_binary_bounds,
    estimate_weighted_second_moment,
    irls_fit,
    transform_query,
)
from .datasets import Dataset, gen_gaussian_r, gen_mixture_c
from .density import (
    DensityValueRequest,
    KernelSpec,
    _mean_self_convolution,
    dshapley_density,
    kde_evaluate,
    select_bandwidth,
)
from .errors import InvalidParameterError
from .estimates import BoundParams, MCControls
from .numerics import RandomStream, spd_inverse
from .regression import (
    PointQuery,
    dshapley_regression_bounds,
    dshapley_regression_exact,
    fit_background,
)

__all__ = [
    "ExperimentConfig",
    "PointAdditionCurve",
    "PointAdditionResult",
    "value_points",
    "run_point_addition",
    "run_time_bench",
    "DEFAULT_BANDWIDTH_GRID",
]

DEFAULT_BANDWIDTH_GRID = tuple(float(10.0 ** e) for e in
                               (-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0))

_TASKS = ("regression", "classification", "density")
_METHODS = ("fast", "baseline", "bounds")

# auxiliary substream ids, far above any per-point index
_STREAM_BANDWIDTH = 2**32
_STREAM_EVAL_POINTS = 2**32 + 1
_STREAM_ORDER = 2**32 + 2


@dataclass
class ExperimentConfig:
    """Resolved settings for a valuation experiment."""

    task: str
    method: str = "fast"
    n_value_points: int = 200
    m: int = 1000
    q: int | None = None
    gamma: float = 0.0
    seed: int = 0
    background_size: int = 2000
    heldout_size: int = 1000
    repetitions: int = 50
    mc: MCControls = field(default_factory=MCControls)
    bound_params: BoundParams = field(default_factory=BoundParams)
    bound_side: str = "lower"
    baseline_draws: int = 500
    density_budget: int = 2000
    density_eval_points: int = 500
    bandwidth_grid: tuple = DEFAULT_BANDWIDTH_GRID
    threads: int = 1

    def __post_init__(self):
        if self.task not in _TASKS:
            raise InvalidParameterError(f"unknown task {self.task!r}")
        if self.method not in _METHODS:
            raise InvalidParameterError(f"unknown method {self.method!r}")
        if self.method == "bounds" and self.task == "density":
            raise InvalidParameterError("bounds are available for regression and classification only")
        if self.bound_side not in ("lower", "upper"):
            raise InvalidParameterError("bound_side must be lower or upper")
        if self.n_value_points < 1:
            raise InvalidParameterError("n_value_points must be at least 1")
        if self.repetitions < 1:
            raise InvalidParameterError("repetitions must be at least 1")

    def resolved_q(self, p: int) -> int:
        return self.q if self.q is not None else p + 3

    def metadata(self) -> dict:
        meta = {
            "task": self.task, "method": self.method, "m": self.m,
            "q": self.q if self.q is not None else "auto",
            "gamma": self.gamma, "seed": self.seed,
            "n_value_points": self.n_value_points,
            "background_size": self.background_size,
            "heldout_size": self.heldout_size,
            "repetitions": self.repetitions,
            "baseline_draws": self.baseline_draws,
            "density_budget": self.density_budget,
            "bound_side": self.bound_side,
            "threads": self.threads,
        }
        return meta


@dataclass
class PointAdditionCurve:
    """Held-out utility after each addition, averaged over repetitions.

    ``utilities[k]`` is the mean utility with k points added (index 0 is the
    empty set); gaps where no repetition could fit a model are NaN.
    """

    ordering: str
    utilities: np.ndarray
    std_errors: np.ndarray
    repetitions: int


@dataclass
class PointAdditionResult:
    curves: list
    rep0_indices: np.ndarray
    rep0_values: np.ndarray


def _split_indices(n: int, config: ExperimentConfig, gen: np.random.Generator):
    if config.n_value_points > n:
        raise InvalidParameterError(
            f"n_value_points={config.n_value_points} exceeds the dataset size {n}")
    perm = gen.permutation(n)
    value_idx = perm[:config.n_value_points]
    rest = perm[config.n_value_points:]
    held = rest[:min(config.heldout_size, max(rest.size - 1, 0))]
    bg = rest[held.size:][:config.background_size]
    if bg.size == 0:
        raise InvalidParameterError("no samples left for the background after the split")
    return value_idx, held, bg


def _regression_valuer(dataset, bg_idx, held_idx, config, q):
    bx, by = dataset.x[bg_idx], dataset.y[bg_idx]
    env = fit_background(bx, by, m=config.m, q=q, gamma=config.gamma)
    if config.method == "fast":
        def value_one(x, y, sub):
            est = dshapley_regression_exact(PointQuery.from_point(x, y, env), env, config.mc, sub)
            return est.value, est.std_error
    elif config.method == "bounds":
        def value_one(x, y, sub):
            bounds = dshapley_regression_bounds(PointQuery.from_point(x, y, env), env,
                                                config.bound_params)
            return (bounds.lower if config.bound_side == "lower" else bounds.upper), 0.0
    else:
        spec = UtilitySpec("regression_risk", gate=q, constant=2.0 * env.sigma2,
                           evaluation_mode="heldout")
        ctx = RegressionUtilityContext(gamma=config.gamma,
                                       x_test=dataset.x[held_idx], y_test=dataset.y[held_idx])

        def value_one(x, y, sub):
            est = dshapley_mc_baseline((x, y), (bx, by), spec, m=config.m,
                                       max_draws=config.baseline_draws, rng=sub, context=ctx)
            return est.value, est.std_error
    return value_one


def _classification_valuer(dataset, bg_idx, held_idx, config, q):
    bx, by = dataset.x[bg_idx], dataset.y[bg_idx]
    if config.method in ("fast", "bounds"):
        state = irls_fit(bx, by)
        sigma_tilde_inv = spd_inverse(estimate_weighted_second_moment(bx, state.beta))
        side = config.bound_side if config.method == "bounds" else "lower"

        def value_one(x, y, sub):
            query = transform_query(x, int(y), state, sigma_tilde_inv, clamp_weight=True)
            bounds = dshapley_binary_bounds(query, config.m, q, config.bound_params)
            return (bounds.lower if side == "lower" else bounds.upper), 0.0
    else:
        spec = UtilitySpec("accuracy", gate=q, evaluation_mode="heldout")
        ctx = AccuracyUtilityContext(x_test=dataset.x[held_idx], y_test=dataset.y[held_idx])

        def value_one(x, y, sub):
            est = dshapley_mc_baseline((x, y), (bx, by), spec, m=config.m,
                                       max_draws=config.baseline_draws, rng=sub, context=ctx)
            return est.value, est.std_error
    return value_one


def _density_valuer(dataset, bg_idx, held_idx, config, rng):
    background = dataset.x[bg_idx]
    h = select_bandwidth(background, config.bandwidth_grid,
                         rng=rng.substream(_STREAM_BANDWIDTH))
    kernel = KernelSpec("gaussian", h, dataset.p)
    if config.method == "fast":
        def value_one(x, y, sub):
            request = DensityValueRequest(s_star=np.atleast_2d(x), m=config.m,
                                          mc_budget=config.density_budget)
            est = dshapley_density(request, background, kernel, sub)
            return est.value, est.std_error
    else:
        eval_idx = rng.substream(_STREAM_EVAL_POINTS).generator.integers(
            0, background.shape[0], size=config.density_eval_points)
        ctx = DensityUtilityContext(kernel=kernel, eval_points=background[eval_idx])
        spec = UtilitySpec("density_ise", gate=1)

        def value_one(x, y, sub):
            est = dshapley_mc_baseline(np.atleast_1d(x), background, spec, m=config.m,
                                       max_draws=config.baseline_draws, rng=sub, context=ctx)
            return est.value, est.std_error
    return value_one


def _make_valuer(dataset, bg_idx, held_idx, config, rng):
    q = config.resolved_q(dataset.p)
    if config.task == "regression":
        return _regression_valuer(dataset, bg_idx, held_idx, config, q)
    if config.task == "classification":
        return _classification_valuer(dataset, bg_idx, held_idx, config, q)
    return _density_valuer(dataset, bg_idx, held_idx, config, rng)


def value_points(dataset: Dataset, config: ExperimentConfig, rng: RandomStream,
                 value_idx=None, held_idx=None, bg_idx=None):
    """Value a set of points; returns (indices, values, std_errors).

    Without explicit index sets the dataset is split deterministically from
    the stream. Each point draws from its own substream, so thread-level
    parallelism cannot change the result.
    """
    if value_idx is None:
        value_idx, held_idx, bg_idx = _split_indices(dataset.n, config, rng.generator)
    value_one = _make_valuer(dataset, bg_idx, held_idx, config, rng)
    xs = dataset.x[value_idx]
    ys = dataset.y[value_idx] if dataset.y is not None else np.zeros(len(value_idx))

    def job(i):
        return value_one(xs[i], ys[i], rng.substream(i))

    n = len(value_idx)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(job, range(n)))
    else:
        results = [job(i) for i in range(n)]
    values = np.array([r[0] for r in results])
    std_errors = np.array([r[1] for r in results])
    return np.asarray(value_idx), values, std_errors


def _curve_utility_fn(dataset, held_idx, bg_idx, config, rng):
    """Held-out utility of the set added so far, or NaN when unfittable."""
    hx = dataset.x[held_idx]
    hy = dataset.y[held_idx] if dataset.y is not None else None
    if config.task == "regression":
        env = fit_background(dataset.x[bg_idx], dataset.y[bg_idx],
                             m=config.m, q=config.resolved_q(dataset.p))
        c_lin = 2.0 * env.sigma2

        def utility(xs, ys):
            if xs.shape[0] < dataset.p:
                return np.nan
            try:
                beta = np.linalg.solve(xs.T @ xs + config.gamma * np.eye(dataset.p), xs.T @ ys)
            except np.linalg.LinAlgError:
                return np.nan
            return c_lin - float(np.mean((hy - hx @ beta) ** 2))
    elif config.task == "classification":
        def utility(xs, ys):
            if xs.shape[0] <= dataset.p or np.unique(ys).size < 2:
                return np.nan
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    state = irls_fit(xs, ys, max_iter=25)
                except Exception:
                    return np.nan
            return float(np.mean((hx @ state.beta >= 0.0) == hy))
    else:
        h = select_bandwidth(dataset.x[bg_idx], config.bandwidth_grid,
                             rng=rng.substream(_STREAM_BANDWIDTH))
        kernel = KernelSpec("gaussian", h, dataset.p)

        def utility(xs, ys):
            if xs.shape[0] == 0:
                return np.nan
            ise_part = (_mean_self_convolution(kernel, xs)
                        - 2.0 * float(np.mean(kde_evaluate(xs, kernel, hx))))
            return -ise_part
    return utility


def run_point_addition(config: ExperimentConfig, dataset: Dataset,
                       rng: RandomStream, split=None) -> PointAdditionResult:
    """Largest-first, lowest-first and random point-addition curves.

    Every repetition resamples the split, revalues the value set with the
    configured method and tracks the held-out utility after each addition.
    Fit failures mid-curve are recorded as gaps, not aborts. Passing an
    explicit ``split = (value_idx, held_idx, bg_idx)`` pins the design across
    repetitions (only the valuation and the random ordering then vary).
    """
    steps = config.n_value_points
    orderings = ("largest", "lowest", "random")
    curves = {name: np.full((config.repetitions, steps + 1), np.nan) for name in orderings}
    rep0_values = None
    rep0_indices = None

    for rep in range(config.repetitions):
        sub = rng.substream(rep)
        if split is None:
            value_idx, held_idx, bg_idx = _split_indices(dataset.n, config, sub.generator)
        else:
            value_idx, held_idx, bg_idx = (np.asarray(part) for part in split)
        idx, values, _ = value_points(dataset, config, sub, value_idx, held_idx, bg_idx)
        if rep == 0:
            rep0_values, rep0_indices = values.copy(), idx.copy()
        utility = _curve_utility_fn(dataset, held_idx, bg_idx, config, sub)
        orders = {
            "largest": np.argsort(-values, kind="stable"),
            "lowest": np.argsort(values, kind="stable"),
            "random": sub.substream(_STREAM_ORDER).generator.permutation(steps),
        }
        for name, order in orders.items():
            ordered = idx[order]
            xs = dataset.x[ordered]
            ys = dataset.y[ordered] if dataset.y is not None else np.zeros(steps)
            row = curves[name][rep]
            row[0] = 0.0  # empty-set utility by convention
            for k in range(1, steps + 1):
                row[k] = utility(xs[:k], ys[:k])

    results = []
    for name in orderings:
        grid = curves[name]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            means = np.nanmean(grid, axis=0)
            counts = np.sum(~np.isnan(grid), axis=0)
            stds = np.nanstd(grid, axis=0, ddof=1)
        std_errors = np.where(counts > 1, stds / np.sqrt(np.maximum(counts, 1)), 0.0)
        results.append(PointAdditionCurve(ordering=name, utilities=means,
                                          std_errors=std_errors,
                                          repetitions=config.repetitions))
    return PointAdditionResult(curves=results, rep0_indices=rep0_indices,
                               rep0_values=rep0_values)


_BENCH_BASELINE_DRAWS = {"regression": 1000, "classification": 50, "density": 100}


def _bench_dataset(task: str, n: int, p: int, rng: RandomStream) -> Dataset:
    if task == "regression":
        return gen_gaussian_r(n, p, rng)
    if task == "classification":
        return gen_mixture_c(n, p, rng)
    gen = rng.generator
    return Dataset(x=gen.standard_normal((n, p)), y=None, name="gaussian-d")


def run_time_bench(grid, tasks, rng: RandomStream, *, repetitions: int = 5,
                   baseline_draws: dict | None = None, baseline_points: int = 20,
                   background_size: int = 2000, threads: int = 1):
    """Wall-clock comparison of the fast estimators against the sampled baseline.

    ``grid`` is a list of (n_points, p) cells. The fast method values every
    point; the baseline values ``baseline_points`` of them and its time is
    scaled up proportionally (per-point cost is flat), which the output
    records. Returns a list of row dicts ready for serialization.
    """
    if not grid:
        raise InvalidParameterError("the benchmark grid must be nonempty")
    budgets = dict(_BENCH_BASELINE_DRAWS)
    if baseline_draws:
        budgets.update(baseline_draws)
    rows = []
    for ti, task in enumerate(tasks):
        for ci, (n_points, p) in enumerate(grid):
            cell_rng = rng.substream(1000 * ti + ci)
            fast_times = []
            base_times = []
            timed_points = min(baseline_points, n_points)
            for rep in range(repetitions):
                rep_rng = cell_rng.substream(rep)
                data = _bench_dataset(task, n_points + background_size + 200, p,
                                      rep_rng.substream(0))
                config_common = dict(
                    task=task, n_value_points=n_points, m=n_points,
                    q=p + 3, seed=0, background_size=background_size,
                    heldout_size=200, repetitions=1, threads=threads,
                    baseline_draws=budgets[task],
                )
                fast_cfg = ExperimentConfig(method="fast", **config_common)
                split = _split_indices(data.n, fast_cfg, rep_rng.substream(1).generator)
                value_idx, held_idx, bg_idx = split

                start = time.perf_counter()
                value_points(data, fast_cfg, rep_rng.substream(2), *split)
                fast_times.append(time.perf_counter() - start)

                base_cfg = ExperimentConfig(method="baseline", **config_common)
                sub_idx = value_idx[:timed_points]
                start = time.perf_counter()
                value_points(data, base_cfg, rep_rng.substream(3), sub_idx, held_idx, bg_idx)
                elapsed = time.perf_counter() - start
                base_times.append(elapsed * (n_points / timed_points))
            fast_mean = float(np.mean(fast_times))
            base_mean = float(np.mean(base_times))
            rows.append({
                "task": task, "n_points": n_points, "p": p,
                "fast_seconds": fast_mean,
                "fast_seconds_std": float(np.std(fast_times)),
                "baseline_seconds": base_mean,
                "baseline_seconds_std": float(np.std(base_times)),
                "speedup": base_mean / fast_mean if fast_mean > 0 else float("inf"),
                "repetitions": repetitions,
                "baseline_draws": budgets[task],
                "baseline_points_timed": timed_points,
                "threads": threads,
            })
    return rows
