"""Benchmark harness: corruption sweeps with grid-searched hyper-parameters.

For every (corruption level, algorithm, repetition) the protocol corrupts
the training split, grid-searches the estimator hyper-parameter on the
clean validation split, refits on the training split and scores the test
split. Corruption draws are shared across algorithms at the same
(level, repetition) so the comparison is paired. Repetition summaries
report the median metric.
"""

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import losses
from .datagen import CorruptionSpec, SimSpec, corrupt_dataset, simulate
from .dataio import (
    BINARY,
    REGRESSION,
    LabelScaler,
    Preprocessor,
    SplitSpec,
    load_csv,
    split,
)
from .grad_estimators import GradientEstimator
from .robust_scalar import EstimatorSpec
from .solvers import EstimatedMOM, GivenLipschitz, SolverConfig, cgd_fit, gd_fit

MSE = "mse"
ACCURACY = "accuracy"
ORACLE_EXCESS = "oracle_excess"
METRICS = (MSE, ACCURACY, ORACLE_EXCESS)

GRID_POINTS = 7


def default_grid(estimator_kind):
    """Hyper-parameter grids mirroring the usual search ranges."""
    if estimator_kind == "mom":
        return {"block_size": np.geomspace(1e-5, 0.2, GRID_POINTS).tolist()}
    if estimator_kind == "tm":
        return {"trim": np.linspace(1e-5, 0.3, GRID_POINTS).tolist()}
    if estimator_kind == "ch":
        return {"delta": np.geomspace(np.exp(-10.0), 0.99, GRID_POINTS).tolist()}
    if estimator_kind == "gmom":
        return {"block_size": np.geomspace(1e-3, 0.2, GRID_POINTS).tolist()}
    return {}


def _grid_product(grid):
    if not grid:
        return [{}]
    # single-knob grids in practice; cartesian kept for generality
    items = sorted(grid.items())
    combos = [{}]
    for key, values in items:
        combos = [{**c, key: v} for c in combos for v in values]
    return combos


def make_estimator_spec(kind, hyper, n):
    if kind == "erm":
        return EstimatorSpec.erm()
    if kind == "mom":
        if "n_blocks" in hyper:
            return EstimatorSpec.mom(n_blocks=int(hyper["n_blocks"]))
        return EstimatorSpec.mom(block_size=float(hyper.get("block_size", 0.02)))
    if kind == "tm":
        return EstimatorSpec.tm(float(hyper.get("trim", 0.05)))
    if kind == "ch":
        return EstimatorSpec.ch(delta=float(hyper.get("delta", 0.01)))
    raise ValueError(f"unknown estimator kind {kind!r}")


def load_plan_dataset(plan):
    data = plan["data"]
    if "csv" in data:
        dataset = load_csv(data["csv"], label=data["label"], task=data.get("task"))
        return dataset, None
    spec = SimSpec(**data["simulate"])
    dataset, oracle = simulate(spec)
    return dataset, oracle


def _task_loss(plan, algo, dataset):
    name = algo.get("loss", plan.get("loss"))
    if name is None:
        if dataset.task == REGRESSION:
            name = losses.SQUARE
        elif dataset.task == BINARY:
            name = losses.LOGISTIC
        else:
            name = losses.MULTILOGIT
    return losses.parse_loss(name, n_classes=dataset.n_classes)


def predict_scores(theta, X, fit_intercept):
    if fit_intercept:
        return X @ theta[:-1] + theta[-1]
    return X @ theta


def metric_value(metric, task, theta, X, y, fit_intercept, oracle=None):
    if metric == ORACLE_EXCESS:
        core = theta[:-1] if fit_intercept else theta
        return oracle.excess_risk(core)
    scores = predict_scores(theta, X, fit_intercept)
    if metric == MSE:
        with np.errstate(over="ignore"):
            value = float(np.mean((scores - y) ** 2))
        return value if math.isfinite(value) else math.inf
    if task == BINARY:
        pred = (scores > 0).astype(np.int64)
    else:
        pred = scores.argmax(axis=1)
    return float(np.mean(pred == y))


def lower_is_better(metric):
    return metric != ACCURACY


def _fit(plan, algo, loss, train, seed, hyper):
    n = train.n
    cycles = int(plan.get("cycles", 100))
    fit_intercept = bool(plan.get("fit_intercept", False))
    if algo.get("solver", "cgd") == "gd":
        kind = algo["estimator"]
        if kind == "erm":
            grad_kind = GradientEstimator.vec_erm()
        elif kind == "gmom":
            k = max(1, int(np.ceil(float(hyper.get("block_size", 0.02)) * n)))
            grad_kind = GradientEstimator.gmom(min(k, n))
        else:
            grad_kind = GradientEstimator.coordwise(make_estimator_spec(kind, hyper, n))
        theta, _ = gd_fit(train.X, train.y, loss, grad_kind, max_iters=cycles, seed=seed)
        return theta, False
    spec = make_estimator_spec(algo["estimator"], hyper, n)
    if algo["estimator"] == "erm":
        # the non-robust baseline estimates its curvature non-robustly too
        steps = GivenLipschitz(loss.gamma * (train.X * train.X).mean(axis=0))
    else:
        steps = EstimatedMOM(delta=float(plan.get("step_delta", 0.01)))
    config = SolverConfig(
        sampling=plan.get("sampling", "cyclic"),
        estimator=spec,
        max_cycles=cycles,
        step_sizes=steps,
        seed=seed,
        fit_intercept=fit_intercept,
        record_objective=False,
    )
    theta, _ = cgd_fit(train.X, train.y, loss, config)
    return theta, fit_intercept


def _prepare_splits(plan, eta, corrupt_seed):
    dataset, oracle = load_plan_dataset(plan)
    split_cfg = plan.get("split", {})
    spec = SplitSpec(
        train=float(split_cfg.get("train", 0.70)),
        val=float(split_cfg.get("val", 0.15)),
        test=float(split_cfg.get("test", 0.15)),
        seed=int(split_cfg.get("seed", plan.get("seed", 0))),
    )
    train, val, test = split(dataset, spec)

    scaler = None
    if dataset.task == REGRESSION:
        # label scaling precedes corruption for regression tasks
        scaler = LabelScaler().fit(train.y)
        train.y = scaler.transform(train.y)
        val.y = scaler.transform(val.y)
        test.y = scaler.transform(test.y)
    if eta > 0:
        train, _ = corrupt_dataset(train, CorruptionSpec(rate=eta, seed=corrupt_seed))
    pre = Preprocessor().fit(train)
    return pre.transform(train), pre.transform(val), pre.transform(test), oracle


def run_task(plan, eta_idx, algo_idx, rep):
    """One benchmark cell; failures come back as error records."""
    eta = float(plan["corruption_levels"][eta_idx])
    algo = plan["algorithms"][algo_idx]
    name = algo.get("name", f"{algo.get('solver', 'cgd')}-{algo['estimator']}")
    try:
        return _run_task_inner(plan, eta_idx, algo_idx, rep)
    except Exception as exc:  # noqa: BLE001 - the sweep must keep going
        return {
            "record": "error",
            "run_id": f"{name}:eta={eta:g}:rep={rep}",
            "algo": name,
            "estimator": algo["estimator"],
            "params": None,
            "cycle": None,
            "metric_name": "error",
            "metric_value": None,
            "elapsed_ns": 0,
            "seed": None,
            "eta": eta,
            "rep": rep,
            "message": f"{type(exc).__name__}: {exc}",
        }


def _run_task_inner(plan, eta_idx, algo_idx, rep):
    eta = float(plan["corruption_levels"][eta_idx])
    algo = plan["algorithms"][algo_idx]
    base_seed = int(plan.get("seed", 0))
    corrupt_seed = int(
        np.random.SeedSequence(entropy=base_seed, spawn_key=(1, eta_idx, rep)).generate_state(1)[0]
        % (2**31)
    )
    fit_seed = int(
        np.random.SeedSequence(
            entropy=base_seed, spawn_key=(2, eta_idx, algo_idx, rep)
        ).generate_state(1)[0]
        % (2**31)
    )

    t0 = time.perf_counter_ns()
    train, val, test, oracle = _prepare_splits(plan, eta, corrupt_seed)
    loss = _task_loss(plan, algo, train)
    metric = plan.get("metric", MSE if train.task == REGRESSION else ACCURACY)
    select_metric = MSE if train.task == REGRESSION else ACCURACY

    grid = algo.get("grid", default_grid(algo["estimator"]))
    combos = _grid_product(grid)
    best_hyper, best_score = None, None
    for g_idx, hyper in enumerate(combos):
        try:
            theta, intercept = _fit(plan, algo, loss, train, fit_seed + g_idx, hyper)
        except Exception:  # diverged grid point: skip it
            continue
        score = metric_value(select_metric, train.task, theta, val.X, val.y, intercept, oracle)
        better = (
            best_score is None
            or (score < best_score if lower_is_better(select_metric) else score > best_score)
        )
        if better:
            best_hyper, best_score = hyper, score
    if best_hyper is None:
        raise RuntimeError("every grid point diverged")

    theta, intercept = _fit(plan, algo, loss, train, fit_seed + len(combos), best_hyper)
    value = metric_value(metric, train.task, theta, test.X, test.y, intercept, oracle)
    if not np.isfinite(value):
        raise ArithmeticError(f"non-finite test metric for {algo['estimator']}")
    elapsed = time.perf_counter_ns() - t0

    name = algo.get("name", f"{algo.get('solver', 'cgd')}-{algo['estimator']}")
    return {
        "record": "eval",
        "run_id": f"{name}:eta={eta:g}:rep={rep}",
        "algo": name,
        "estimator": algo["estimator"],
        "params": best_hyper,
        "cycle": int(plan.get("cycles", 100)),
        "metric_name": metric,
        "metric_value": value,
        "elapsed_ns": elapsed,
        "seed": fit_seed,
        "eta": eta,
        "rep": rep,
    }


def run_bench(plan):
    """Execute a benchmark plan; returns eval records plus median summaries.

    Tasks run in a process pool capped by ROBUSTCGD_THREADS (default 1);
    records are ordered by task key so reruns are byte-identical apart from
    the elapsed_ns fields.
    """
    if "algorithms" not in plan or not plan["algorithms"]:
        raise ValueError("plan needs at least one algorithm")
    reps = int(plan.get("repetitions", 1))
    if reps < 1:
        raise ValueError("repetitions must be >= 1")
    levels = plan.get("corruption_levels", [0.0])
    if plan.get("metric") == ORACLE_EXCESS and "simulate" not in plan.get("data", {}):
        raise ValueError("oracle_excess metric needs simulated data")

    keys = [
        (eta_idx, algo_idx, rep)
        for eta_idx in range(len(levels))
        for algo_idx in range(len(plan["algorithms"]))
        for rep in range(reps)
    ]
    workers = int(os.environ.get("ROBUSTCGD_THREADS", "1"))
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_task, plan, *key) for key in keys]
            results = {key: fut.result() for key, fut in zip(keys, futures)}
    else:
        results = {key: run_task(plan, *key) for key in keys}
    for key in sorted(results):
        records.append(results[key])

    for eta_idx, eta in enumerate(levels):
        for algo_idx, algo in enumerate(plan["algorithms"]):
            name = algo.get("name", f"{algo.get('solver', 'cgd')}-{algo['estimator']}")
            values = [
                results[(eta_idx, algo_idx, rep)]["metric_value"]
                for rep in range(reps)
                if results[(eta_idx, algo_idx, rep)].get("record") == "eval"
            ]
            if not values:
                continue
            records.append(
                {
                    "record": "summary",
                    "run_id": f"{name}:eta={float(eta):g}:median",
                    "algo": name,
                    "estimator": algo["estimator"],
                    "params": None,
                    "cycle": int(plan.get("cycles", 100)),
                    "metric_name": results[(eta_idx, algo_idx, 0)]["metric_name"],
                    "metric_value": float(np.median(values)),
                    "elapsed_ns": 0,
                    "seed": int(plan.get("seed", 0)),
                    "eta": float(eta),
                    "rep": None,
                }
            )
    return records
