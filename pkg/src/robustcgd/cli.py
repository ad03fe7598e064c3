"""Command-line interface.

Subcommands: fit, predict, bench, simulate, corrupt, time-estimators.
Outputs are CSV for datasets, JSON for models and oracles, NDJSON for
records. Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import sys
import time

import numpy as np

from . import losses
from .bench import run_bench
from .datagen import CorruptionSpec, SimSpec, corrupt_dataset, simulate
from .dataio import (
    REGRESSION,
    LabelScaler,
    Preprocessor,
    load_csv,
    save_csv,
    write_ndjson,
)
from .rng import new_state, numpy_rng
from .robust_scalar import (
    EstimatorSpec,
    blocks_from_confidence,
    tm_eps_from_confidence,
)
from .solvers import EstimatedMOM, SolverConfig, cgd_fit


def _add_estimator_flags(p):
    p.add_argument("--estimator", choices=["erm", "mom", "tm", "ch"], default="mom")
    p.add_argument("--block-size", type=float, default=0.02,
                   help="MOM blocks as a fraction of n")
    p.add_argument("--trim", type=float, default=0.05, help="TM clipping proportion")
    p.add_argument("--ch-delta", type=float, default=0.01, help="CH confidence level")


def _estimator_from_flags(parser, args):
    if args.estimator == "mom":
        if not 0.0 < args.block_size <= 1.0:
            parser.error("block-size must be in (0, 1]")
        return EstimatorSpec.mom(block_size=args.block_size)
    if args.estimator == "tm":
        if not 0.0 <= args.trim < 0.5:
            parser.error("trim must be in [0, 0.5)")
        return EstimatorSpec.tm(args.trim)
    if args.estimator == "ch":
        if not 0.0 < args.ch_delta < 1.0:
            parser.error("ch-delta must be in (0, 1)")
        return EstimatorSpec.ch(delta=args.ch_delta)
    return EstimatorSpec.erm()


def _pick_loss(name, tau, dataset):
    if name == "auto":
        if dataset.task == REGRESSION:
            name = losses.SQUARE
        elif dataset.task == "binary":
            name = losses.LOGISTIC
        else:
            name = losses.MULTILOGIT
    return losses.parse_loss(name, tau=tau, n_classes=dataset.n_classes)


def cmd_fit(parser, args):
    spec = _estimator_from_flags(parser, args)
    dataset = load_csv(args.data, label=args.label, task=args.task)
    loss = _pick_loss(args.loss, args.tau, dataset)

    scaler = None
    if dataset.task == REGRESSION and args.standardize:
        scaler = LabelScaler().fit(dataset.y)
        dataset.y = scaler.transform(dataset.y)
    pre = None
    if args.standardize or any(c.kind == "categorical" for c in dataset.columns):
        pre = Preprocessor().fit(dataset)
        dataset = pre.transform(dataset)

    config = SolverConfig(
        sampling=args.sampling,
        estimator=spec,
        max_cycles=args.cycles,
        step_sizes=EstimatedMOM(delta=args.step_delta),
        seed=args.seed,
        fit_intercept=args.fit_intercept,
    )
    theta, record = cgd_fit(dataset.X, dataset.y, loss, config)

    model = {
        "theta": np.asarray(theta).tolist(),
        "fit_intercept": args.fit_intercept,
        "loss": {"kind": loss.kind, "tau": loss.tau, "n_classes": loss.n_classes},
        "task": dataset.task,
        "label_name": dataset.label_name,
        "label_classes": list(dataset.label_classes) if dataset.label_classes else None,
        "feature_names": [c.name for c in dataset.columns],
        "preprocess": pre.to_dict() if pre else None,
        "label_scaler": {"mean": scaler.mean, "std": scaler.std} if scaler else None,
        "estimator": spec.label(),
        "seed": args.seed,
    }
    with open(args.out_model, "w", encoding="utf-8") as fh:
        json.dump(model, fh, indent=2)

    trace = []
    for cycle in range(record.n_cycles):
        trace.append(
            {
                "run_id": f"fit:seed={args.seed}",
                "algo": "cgd",
                "estimator": spec.label(),
                "params": {"cycles": args.cycles, "sampling": args.sampling},
                "cycle": cycle + 1,
                "metric_name": "train_objective",
                "metric_value": float(record.objective[cycle]),
                "elapsed_ns": int(record.elapsed_ns[cycle]),
                "seed": args.seed,
            }
        )
    write_ndjson(args.out_trace, trace)
    print(f"wrote {args.out_model} and {args.out_trace}")
    return 0


def _load_feature_matrix(path, model):
    """Assemble the model's feature columns from a CSV, label optional."""
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    pre = model.get("preprocess")
    if pre:
        source = pre["columns"]
    else:
        source = [{"name": n, "kind": "continuous", "modalities": None} for n in model["feature_names"]]
    index = {}
    for col in source:
        if col["name"] not in header:
            raise ValueError(f"{path}: missing feature column {col['name']!r}")
        index[col["name"]] = header.index(col["name"])
    X = np.empty((len(rows), len(source)))
    for i, row in enumerate(rows):
        for j, col in enumerate(source):
            tok = row[index[col["name"]]]
            if col["kind"] == "categorical":
                if tok not in col["modalities"]:
                    raise ValueError(f"{path}: unseen modality {tok!r} in {col['name']!r}")
                X[i, j] = col["modalities"].index(tok)
            else:
                X[i, j] = float(tok)
    return X


def cmd_predict(parser, args):
    with open(args.model, encoding="utf-8") as fh:
        model = json.load(fh)
    X = _load_feature_matrix(args.data, model)
    if model["preprocess"]:
        from .dataio import Dataset

        pre = Preprocessor.from_dict(model["preprocess"])
        ds = Dataset(
            X=np.asfortranarray(X),
            y=np.zeros(X.shape[0]),
            columns=pre.source_columns,
            task=REGRESSION,
        )
        X = pre.transform(ds).X
    theta = np.asarray(model["theta"])
    if model["fit_intercept"]:
        scores = X @ theta[:-1] + theta[-1]
    else:
        scores = X @ theta
    task = model["task"]
    if task == REGRESSION:
        preds = scores
        if model.get("label_scaler"):
            preds = preds * model["label_scaler"]["std"] + model["label_scaler"]["mean"]
        out = [repr(float(v)) for v in preds]
    else:
        codes = (scores > 0).astype(int) if scores.ndim == 1 else scores.argmax(axis=1)
        classes = model.get("label_classes")
        out = [str(classes[c]) if classes else str(int(c)) for c in codes]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("prediction\n")
        fh.write("\n".join(out) + "\n")
    print(f"wrote {args.out}")
    return 0


def cmd_simulate(parser, args):
    spec = SimSpec(
        n=args.n,
        d=args.d,
        setting=args.setting,
        noise_scale=args.noise_scale,
        corruption_rate=args.eta,
        seed=args.seed,
    )
    dataset, oracle = simulate(spec)
    save_csv(dataset, args.out)
    if args.out_oracle:
        with open(args.out_oracle, "w", encoding="utf-8") as fh:
            json.dump(oracle.to_dict(), fh, indent=2)
        print(f"wrote {args.out} and {args.out_oracle}")
    else:
        print(f"wrote {args.out}")
    return 0


def cmd_corrupt(parser, args):
    dataset = load_csv(args.data, label=args.label, task=args.task)
    spec = CorruptionSpec(rate=args.eta, seed=args.seed)
    corrupted, outliers = corrupt_dataset(dataset, spec)
    save_csv(corrupted, args.out)
    if args.out_outliers:
        with open(args.out_outliers, "w", encoding="utf-8") as fh:
            json.dump({"outliers": outliers.tolist()}, fh)
    print(f"wrote {args.out} ({len(outliers)} corrupted rows)")
    return 0


def cmd_bench(parser, args):
    with open(args.plan, encoding="utf-8") as fh:
        plan = json.load(fh)
    records = run_bench(plan)
    write_ndjson(args.out, records)
    n_err = sum(1 for r in records if r.get("record") == "error")
    print(f"wrote {len(records)} records to {args.out} ({n_err} errors)")
    return 0


def cmd_time_estimators(parser, args):
    from .robust_scalar import _k

    grid = [int(tok) for tok in args.n_grid.split(",")]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        parser.error("n-grid must be strictly ascending")
    state = new_state(args.seed)
    gen = numpy_rng(state)
    records = []
    k_blocks = blocks_from_confidence(args.delta)
    for n in grid:
        # several draws per n, shared across estimators; averaging over
        # buffers washes out arrangement-dependent quickselect costs
        if args.distribution == "student":
            z = gen.standard_normal((args.buffers, n))
            v = gen.chisquare(2.1, (args.buffers, n))
            buffers = z / np.sqrt(v / 2.1)
        else:
            buffers = gen.standard_normal((args.buffers, n))
        trim = tm_eps_from_confidence(args.delta, 0.0, n)
        k = min(k_blocks, n)
        runners = {
            "erm": lambda b: _k.erm_mean(b),
            "mom": lambda b: _k.mom_alloc(b, k, state),
            "tm": lambda b: _k.tm_alloc(b, trim),
            "ch": lambda b: _k.catoni_holland(b, args.delta, 50, 1e-8),
        }
        for name, fn in runners.items():
            for w in range(args.warmup):
                fn(buffers[w % args.buffers])
            # batch fast calls so one timing sample spans ~2ms of work
            t0 = time.perf_counter_ns()
            fn(buffers[0])
            single = max(time.perf_counter_ns() - t0, 1)
            batch = max(1, min(64, int(2_000_000 / single)))
            samples = np.empty(args.reps)
            for r in range(args.reps):
                buf = buffers[r % args.buffers]
                t0 = time.perf_counter_ns()
                for _ in range(batch):
                    fn(buf)
                samples[r] = (time.perf_counter_ns() - t0) / batch
            records.append(
                {
                    "run_id": f"time:{name}:n={n}",
                    "algo": "time-estimators",
                    "estimator": name,
                    "params": {"n": n, "n_blocks": k, "trim": trim, "delta": args.delta},
                    "cycle": 0,
                    "metric_name": "mean_wall_ns",
                    "metric_value": float(samples.mean()),
                    "std_wall_ns": float(samples.std()),
                    "elapsed_ns": int(samples.sum()),
                    "seed": args.seed,
                    "n": n,
                }
            )
    write_ndjson(args.out, records)
    print(f"wrote {len(records)} timing records to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robustcgd",
        description="Robust coordinate gradient descent for linear learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="train one model from a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--task", choices=["regression", "binary", "multiclass"])
    p.add_argument("--loss", default="auto",
                   choices=["auto", "square", "huber", "logistic", "multilogit", "lad"])
    p.add_argument("--tau", type=float, default=losses.DEFAULT_HUBER_TAU)
    _add_estimator_flags(p)
    p.add_argument("--cycles", type=int, default=100)
    p.add_argument("--sampling", choices=["cyclic", "uniform", "importance"], default="cyclic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-delta", type=float, default=0.01)
    p.add_argument("--fit-intercept", action="store_true")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--out-model", default="model.json")
    p.add_argument("--out-trace", default="trace.ndjson")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("predict", help="apply a saved model to a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("bench", help="run a benchmark plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", default="results.ndjson")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--setting", required=True, choices=list("abcdef"))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="simulated.csv")
    p.add_argument("--out-oracle", default="oracle.json")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("corrupt", help="replace a fraction of rows with outliers")
    p.add_argument("--data", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--task", choices=["regression", "binary", "multiclass"])
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="corrupted.csv")
    p.add_argument("--out-outliers", default=None)
    p.set_defaults(handler=cmd_corrupt)

    p = sub.add_parser("time-estimators", help="wall-time the scalar estimators")
    p.add_argument("--n-grid", default="100,1000,10000,100000,1000000")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--buffers", type=int, default=5,
                   help="independent data draws per n, cycled across reps")
    p.add_argument("--distribution", choices=["student", "gaussian"], default="student")
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="timings.ndjson")
    p.set_defaults(handler=cmd_time_estimators)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(parser, args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
