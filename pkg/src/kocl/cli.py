"""Command line front end.

Subcommands:

* ``timeseries``: changepoint benchmark, learned versus stationary forgetting.
* ``classify``: streaming classification or regression over chunks, from a
  feature file, a CSV, or a built-in synthetic task stream.
* ``selfcheck``: desk-scale oracle and invariant checks.
* ``rerun``: re-execute a logged run from its embedded config.

Run output is JSON lines.  The first record of every run embeds the fully
resolved configuration, so any log can be reproduced bit for bit with
``kocl rerun``.  Exit codes: 0 success, 2 configuration or domain error,
3 data format error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterator, TextIO

import numpy as np

from .classification import ClassifierFilter
from .data_io import (
    LABEL_CLASS,
    FeatureFileReader,
    benchmark_series_spec,
    gen_class_stream,
    normalize_rows,
    read_csv_features,
    task_incremental_spec,
)
from .errors import ConfigError, DataFormatError, DomainError, NumericError
from .experiments import dips_after_changes, run_series_comparison
from .filter_core import Hyperparams
from .regression import MeanTransition, RegressionFilter
from .selfcheck import run_selfcheck
from .stream import (
    ReplayConfig,
    RunConfig,
    StreamChunk,
    TransitionMode,
    run_stream,
)

LOG_FORMAT_VERSION = 1

log = logging.getLogger(__name__)


def _configure_logging() -> None:
    name = os.environ.get("KOCL_LOG")
    if not name:
        return
    level = getattr(logging, name.upper(), None)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _emit(fh: TextIO, record: dict) -> None:
    fh.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kocl",
        description="Online Bayesian filtering with learned forgetting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ts = sub.add_parser(
        "timeseries",
        help="changepoint benchmark: learned forgetting vs the stationary baseline",
    )
    ts.add_argument("--seed", type=int, default=0, help="series noise seed")
    ts.add_argument("--noise-var", type=float, default=0.01, help="observation noise variance")
    ts.add_argument("--sigma2", type=float, default=0.05, help="model noise variance")
    ts.add_argument("--sigmaw2", type=float, default=0.01, help="prior weight variance")
    ts.add_argument("--delta-lr", type=float, default=1.0, help="forgetting step size")
    ts.add_argument("--out", default=None, help="output path (default stdout)")
    ts.add_argument("--sweep", action="append", default=None, metavar="KEY=V1,V2,...")
    ts.set_defaults(handler=_handle_timeseries)

    cl = sub.add_parser("classify", help="stream a dataset through the filter chunk by chunk")
    cl.add_argument(
        "--mode",
        choices=("classification", "regression"),
        default="classification",
        help="label type to model",
    )
    cl.add_argument(
        "--data",
        default=None,
        help="feature file or CSV; omit to generate the synthetic task stream",
    )
    cl.add_argument(
        "--chunk-size",
        type=int,
        default=None,
        help="points per chunk (default 10 synthetic, 128 feature file)",
    )
    cl.add_argument(
        "--gamma",
        type=float,
        default=None,
        help="fix the forgetting factor at this value (disables learning)",
    )
    cl.add_argument(
        "--learn-gamma",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="learn the forgetting factor online (default on)",
    )
    cl.add_argument("--gamma-init", type=float, default=None, help="initial forgetting factor")
    cl.add_argument("--alpha-init", type=float, default=1.0, help="initial inverse temperature")
    cl.add_argument(
        "--learn-alpha",
        action=argparse.BooleanOptionalAction,
        default=False,
        help="learn the inverse temperature online (default off)",
    )
    cl.add_argument(
        "--alpha-per-point",
        action="store_true",
        help="step the inverse temperature per point instead of per chunk",
    )
    cl.add_argument("--mc-samples", type=int, default=32, help="Monte Carlo samples per score")
    cl.add_argument(
        "--transition",
        choices=("always", "last"),
        default="always",
        help="state transition per point, or only at the last point of a chunk",
    )
    cl.add_argument("--replay-capacity", type=int, default=100, help="replay buffer capacity")
    cl.add_argument(
        "--replay-sample",
        type=int,
        default=0,
        help="replayed points per chunk (0 disables replay)",
    )
    cl.add_argument("--sigma2", type=float, default=None, help="model noise variance")
    cl.add_argument("--sigmaw2", type=float, default=None, help="prior weight variance")
    cl.add_argument("--delta-lr", type=float, default=0.1, help="forgetting step size")
    cl.add_argument("--alpha-lr", type=float, default=0.1, help="inverse temperature step size")
    cl.add_argument(
        "--mean-transition",
        choices=("shrinking", "non-shrinking"),
        default="shrinking",
        help="regression mean transition (regression mode only)",
    )
    cl.add_argument("--normalize-features", action="store_true", help="L2-normalize each row")
    cl.add_argument("--seed", type=int, default=0, help="seed for all run randomness")
    cl.add_argument("--tasks", type=int, default=10, help="synthetic stream: task count")
    cl.add_argument(
        "--classes-per-task", type=int, default=10, help="synthetic stream: classes per task"
    )
    cl.add_argument("--dim", type=int, default=32, help="synthetic stream: feature dimension")
    cl.add_argument(
        "--points-per-task", type=int, default=500, help="synthetic stream: points per task"
    )
    cl.add_argument(
        "--center-scale", type=float, default=1.0, help="synthetic stream: class center scale"
    )
    cl.add_argument(
        "--noise-scale", type=float, default=0.5, help="synthetic stream: feature noise scale"
    )
    cl.add_argument("--out", default=None, help="output path (default stdout)")
    cl.add_argument("--sweep", action="append", default=None, metavar="KEY=V1,V2,...")
    cl.set_defaults(handler=_handle_classify)

    sc = sub.add_parser("selfcheck", help="run the built-in oracle and invariant checks")
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("--inject-asymmetry", action="store_true", help=argparse.SUPPRESS)
    sc.set_defaults(handler=_handle_selfcheck)

    rr = sub.add_parser("rerun", help="re-execute a run from its logged config")
    rr.add_argument("input", help="JSONL log produced by a previous run")
    rr.add_argument("--out", default=None, help="output path (default stdout)")
    rr.add_argument(
        "--check",
        action="store_true",
        help="compare regenerated output against the log byte for byte",
    )
    rr.set_defaults(handler=_handle_rerun)

    return parser


# ---------------------------------------------------------------------------
# config resolution


def _resolve_gamma(args) -> tuple[bool, float]:
    if args.gamma is not None:
        if args.learn_gamma:
            raise ConfigError("--gamma fixes the forgetting factor; it conflicts with --learn-gamma")
        if args.gamma_init is not None:
            raise ConfigError("--gamma and --gamma-init are mutually exclusive")
        learn, init = False, args.gamma
    else:
        learn = True if args.learn_gamma is None else bool(args.learn_gamma)
        init = 1.0 if args.gamma_init is None else args.gamma_init
    if not 0.0 < init <= 1.0:
        raise ConfigError(f"initial forgetting factor must be in (0, 1], got {init}")
    return learn, float(init)


def _timeseries_config(args) -> dict:
    if args.noise_var < 0:
        raise ConfigError(f"noise variance must be >= 0, got {args.noise_var}")
    return {
        "command": "timeseries",
        "seed": args.seed,
        "noise_var": args.noise_var,
        "sigma2": args.sigma2,
        "sigmaw2": args.sigmaw2,
        "delta_lr": args.delta_lr,
    }


def _classify_config(args) -> dict:
    learn_gamma, gamma_init = _resolve_gamma(args)
    if args.alpha_init <= 0:
        raise ConfigError(f"initial inverse temperature must be > 0, got {args.alpha_init}")
    if args.mode == "regression" and (args.learn_alpha or args.alpha_per_point):
        raise ConfigError("inverse temperature options apply to classification only")
    if args.chunk_size is not None and args.chunk_size < 1:
        raise ConfigError(f"chunk size must be >= 1, got {args.chunk_size}")
    data = args.data
    if data is not None and not Path(data).exists():
        raise DataFormatError(f"no such data file: {data}")
    if data is None and args.mode == "regression":
        raise ConfigError("regression mode needs --data; the synthetic stream has class labels")
    if args.chunk_size is not None:
        chunk_size = args.chunk_size
    elif data is not None and not data.endswith(".csv"):
        chunk_size = 128
    else:
        chunk_size = 10
    return {
        "command": "classify",
        "mode": args.mode,
        "data": data,
        "chunk_size": chunk_size,
        "learn_gamma": learn_gamma,
        "gamma_init": gamma_init,
        "alpha_init": args.alpha_init,
        "learn_alpha": bool(args.learn_alpha),
        "alpha_per_point": args.alpha_per_point,
        "mc_samples": args.mc_samples,
        "transition": args.transition,
        "replay_capacity": args.replay_capacity,
        "replay_sample": args.replay_sample,
        "sigma2": args.sigma2,
        "sigmaw2": args.sigmaw2,
        "delta_lr": args.delta_lr,
        "alpha_lr": args.alpha_lr,
        "mean_transition": args.mean_transition,
        "normalize_features": args.normalize_features,
        "seed": args.seed,
        "tasks": args.tasks,
        "classes_per_task": args.classes_per_task,
        "dim": args.dim,
        "points_per_task": args.points_per_task,
        "center_scale": args.center_scale,
        "noise_scale": args.noise_scale,
    }


# ---------------------------------------------------------------------------
# runners (shared by the live commands, rerun, and sweeps)


def _run_timeseries(config: dict, fh: TextIO) -> dict:
    _emit(fh, {"kind": "config", "format_version": LOG_FORMAT_VERSION, "config": config})
    spec = dataclasses.replace(benchmark_series_spec(), noise_var=config["noise_var"])
    comp = run_series_comparison(
        spec=spec,
        seed=config["seed"],
        sigma2=config["sigma2"],
        sigmaw2=config["sigmaw2"],
        delta_lr=config["delta_lr"],
    )
    for variant, trace in (("learned", comp.learned), ("fixed", comp.fixed)):
        for i in range(comp.ys.shape[0]):
            _emit(
                fh,
                {
                    "kind": "step",
                    "variant": variant,
                    "index": i,
                    "y": float(comp.ys[i]),
                    "pred_mean": float(trace.pred_mean[i]),
                    "pred_std": float(trace.pred_std[i]),
                    "gamma_sq": float(trace.gamma_sq[i]),
                    "log_predictive": float(trace.log_predictive[i]),
                    "avg_log_predictive": float(trace.avg_log_predictive[i]),
                },
            )
        _emit(
            fh,
            {
                "kind": "variant_summary",
                "variant": variant,
                "n": int(comp.ys.shape[0]),
                "final_avg_log_predictive": trace.final_avg_log_predictive,
            },
        )
    dips = dips_after_changes(comp.learned.gamma_sq, comp.change_points)
    summary = {
        "kind": "summary",
        "learned_avg_log_predictive": comp.learned.final_avg_log_predictive,
        "fixed_avg_log_predictive": comp.fixed.final_avg_log_predictive,
        "advantage": comp.learned.final_avg_log_predictive - comp.fixed.final_avg_log_predictive,
        "changes_with_forgetting_dip": int(sum(dips)),
        "change_count": len(comp.change_points),
    }
    _emit(fh, summary)
    return summary


def _synthetic_chunks(config: dict) -> tuple[Iterator[StreamChunk], int, int]:
    spec = task_incremental_spec(
        num_tasks=config["tasks"],
        classes_per_task=config["classes_per_task"],
        dim=config["dim"],
        points_per_task=config["points_per_task"],
        center_scale=config["center_scale"],
        noise_scale=config["noise_scale"],
        seed=config["seed"],
    )
    return gen_class_stream(spec, config["chunk_size"]), spec.dim, spec.num_classes


def _csv_chunks(config: dict) -> tuple[Iterator[StreamChunk], int, int]:
    dim, num_classes, points = read_csv_features(config["data"])
    if config["mode"] == "classification":
        cast = []
        for i, (phi, label) in enumerate(points):
            if label != int(label):
                raise DataFormatError(
                    f"classification labels must be integers; record {i} has {label}"
                )
            k = int(label)
            if not 0 <= k < num_classes:
                raise DataFormatError(
                    f"record {i}: class {k} outside [0, {num_classes})"
                )
            cast.append((phi, k))
        points = cast
    from .stream import chunk_pairs

    return chunk_pairs(points, config["chunk_size"]), dim, num_classes


def _file_chunks(config: dict) -> tuple[Iterator[StreamChunk], int, int]:
    header_reader = FeatureFileReader(config["data"])
    header = header_reader.header
    header_reader.close()
    if config["mode"] == "classification" and header.label_kind != LABEL_CLASS:
        raise DataFormatError("classification mode needs a class-labelled feature file")
    # regression accepts either kind: integer class ids are valid real targets

    def gen() -> Iterator[StreamChunk]:
        with FeatureFileReader(config["data"]) as reader:
            yield from reader.iter_chunks(config["chunk_size"])

    return gen(), header.dim, header.num_classes


def _normalized(chunks: Iterator[StreamChunk]) -> Iterator[StreamChunk]:
    for chunk in chunks:
        yield StreamChunk(
            normalize_rows(chunk.features),
            chunk.labels,
            chunk.chunk_index,
            chunk.source_indices,
        )


def _regression_labels(chunks: Iterator[StreamChunk]) -> Iterator[StreamChunk]:
    for chunk in chunks:
        yield StreamChunk(
            chunk.features,
            np.asarray(chunk.labels, dtype=np.float64),
            chunk.chunk_index,
            chunk.source_indices,
        )


def _run_classify(config: dict, fh: TextIO) -> dict:
    data = config["data"]
    if data is None:
        chunks, dim, num_classes = _synthetic_chunks(config)
    elif data.endswith(".csv"):
        chunks, dim, num_classes = _csv_chunks(config)
    else:
        chunks, dim, num_classes = _file_chunks(config)
    if config["normalize_features"]:
        chunks = _normalized(chunks)

    delta0 = -2.0 * math.log(config["gamma_init"])
    classification = config["mode"] == "classification"
    if classification:
        hp = Hyperparams(
            sigma2=config["sigma2"] if config["sigma2"] is not None else 1.0 / num_classes,
            sigmaw2=config["sigmaw2"] if config["sigmaw2"] is not None else 1.0 / dim,
        )
        filt = ClassifierFilter(
            dim,
            num_classes,
            hp,
            delta0=delta0,
            alpha0=config["alpha_init"],
            delta_lr=config["delta_lr"],
            alpha_lr=config["alpha_lr"],
            num_mc_samples=config["mc_samples"],
            rng_seed=config["seed"],
        )
    else:
        hp = Hyperparams(
            sigma2=config["sigma2"] if config["sigma2"] is not None else 1.0,
            sigmaw2=config["sigmaw2"] if config["sigmaw2"] is not None else 1.0 / dim,
        )
        mode = {
            "shrinking": MeanTransition.SHRINKING,
            "non-shrinking": MeanTransition.NON_SHRINKING,
        }[config["mean_transition"]]
        filt = RegressionFilter(
            dim, hp, delta0=delta0, delta_lr=config["delta_lr"], mean_transition=mode
        )
        chunks = _regression_labels(chunks)

    replay = None
    if config["replay_sample"] > 0:
        replay = ReplayConfig(
            capacity=config["replay_capacity"], sample_size=config["replay_sample"]
        )
    run_cfg = RunConfig(
        transition_mode=TransitionMode(config["transition"]),
        chunk_size=config["chunk_size"],
        replay=replay,
        learn_delta=config["learn_gamma"],
        learn_alpha=config["learn_alpha"],
        alpha_per_point=config["alpha_per_point"],
        seed=config["seed"],
    )
    # config goes out only once the run is actually viable, so rejected
    # configs and unreadable inputs leave no partial log behind
    _emit(fh, {"kind": "config", "format_version": LOG_FORMAT_VERSION, "config": config})
    result = run_stream(filt, chunks, run_cfg)

    for stats in result.metrics.chunk_history:
        _emit(
            fh,
            {
                "kind": "chunk",
                "chunk": stats.chunk_index,
                "running_accuracy": stats.running_accuracy if classification else None,
                "cumulative_log_predictive": stats.cumulative_log_predictive,
                "gamma": stats.gamma,
                "alpha": stats.alpha,
            },
        )
    metrics = result.metrics
    summary = {
        "kind": "summary",
        "n_seen": metrics.n_seen,
        "running_accuracy": metrics.running_accuracy if classification else None,
        "cumulative_log_predictive": metrics.cumulative_log_predictive,
        "average_log_predictive": metrics.average_log_predictive,
        "final_gamma": filt.gamma,
        "final_alpha": filt.alpha if classification else None,
    }
    _emit(fh, summary)
    return summary


_RUNNERS = {"timeseries": _run_timeseries, "classify": _run_classify}


def _dispatch_config(config: dict, fh: TextIO) -> dict:
    try:
        runner = _RUNNERS[config["command"]]
    except KeyError:
        raise DataFormatError(f"config names unknown command {config.get('command')!r}")
    return runner(config, fh)


# ---------------------------------------------------------------------------
# sweeps


def _coerce_sweep_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _expand_sweep(config: dict, sweep_args: list[str]) -> list[tuple[str, dict]]:
    axes = []
    for spec in sweep_args:
        key, sep, values = spec.partition("=")
        if not sep or not values:
            raise ConfigError(f"sweep spec must look like key=v1,v2,... got {spec!r}")
        key = key.replace("-", "_")
        if key not in config or key == "command":
            raise ConfigError(f"unknown sweep key {key!r}")
        axes.append((key, [_coerce_sweep_value(v) for v in values.split(",")]))
    combos = []
    for values in itertools.product(*(vals for _, vals in axes)):
        cfg = dict(config)
        parts = []
        for (key, _), value in zip(axes, values):
            cfg[key] = value
            parts.append(f"{key}={value}")
        combos.append(("-".join(parts), cfg))
    return combos


def _sweep_worker(task: tuple[dict, str]) -> tuple[str, dict]:
    config, out_path = task
    with open(out_path, "w") as fh:
        summary = _dispatch_config(config, fh)
    return out_path, summary


def _run_sweep(config: dict, sweep_args: list[str], out: str | None) -> int:
    if out is None:
        raise ConfigError("--sweep needs --out to derive per-run output paths")
    base = Path(out)
    suffix = base.suffix or ".jsonl"
    tasks = []
    for label, cfg in _expand_sweep(config, sweep_args):
        tasks.append((cfg, str(base.with_name(f"{base.stem}-{label}{suffix}"))))
    workers = min(len(tasks), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for out_path, summary in pool.map(_sweep_worker, tasks):
            print(f"{out_path}\t{json.dumps(summary, sort_keys=True)}")
    return 0


# ---------------------------------------------------------------------------
# handlers


def _with_output(out: str | None, config: dict) -> int:
    if out is None:
        _dispatch_config(config, sys.stdout)
    else:
        with open(out, "w") as fh:
            _dispatch_config(config, fh)
    return 0


def _handle_timeseries(args) -> int:
    config = _timeseries_config(args)
    if args.sweep:
        return _run_sweep(config, args.sweep, args.out)
    return _with_output(args.out, config)


def _handle_classify(args) -> int:
    config = _classify_config(args)
    if args.sweep:
        return _run_sweep(config, args.sweep, args.out)
    return _with_output(args.out, config)


def _handle_selfcheck(args) -> int:
    tamper = None
    if args.inject_asymmetry:

        def tamper(cov):
            cov.values[0, 1] += 1e-6

    results = run_selfcheck(tamper=tamper, rng_seed=args.seed)
    for res in results:
        print(f"[{'PASS' if res.passed else 'FAIL'}] {res.name}: {res.detail}")
    summary = {
        "kind": "selfcheck",
        "passed": sum(r.passed for r in results),
        "failed": sum(not r.passed for r in results),
        "checks": {r.name: r.passed for r in results},
    }
    print(json.dumps(summary, sort_keys=True))
    return 0 if all(r.passed for r in results) else 1


def _handle_rerun(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise DataFormatError(f"no such run log: {args.input}")
    with open(path) as fh:
        first = fh.readline()
    try:
        record = json.loads(first)
    except json.JSONDecodeError as err:
        raise DataFormatError(f"first line of {args.input} is not JSON: {err}") from err
    if not isinstance(record, dict) or record.get("kind") != "config":
        raise DataFormatError(f"first line of {args.input} is not a config record")
    if record.get("format_version") != LOG_FORMAT_VERSION:
        raise DataFormatError(
            f"log format version {record.get('format_version')} not supported"
        )
    config = record.get("config")
    if not isinstance(config, dict):
        raise DataFormatError("config record carries no config object")

    if args.check:
        buf = io.StringIO()
        _dispatch_config(config, buf)
        regenerated = buf.getvalue()
        original = path.read_text()
        if regenerated == original:
            print(f"{args.input}: reproducible, {len(original.splitlines())} lines identical")
            return 0
        print(f"{args.input}: MISMATCH against regenerated output", file=sys.stderr)
        return 1
    return _with_output(args.out, config)


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, DomainError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DataFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
