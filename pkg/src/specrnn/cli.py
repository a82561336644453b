"""Command line interface: generate | learn | evaluate | experiment.

Exit codes: 0 on success, 1 on a user error (bad arguments, missing or
malformed files), 2 on an internal error.  The worker pool size for
experiment sweeps comes from ``--workers`` or the SPECRNN_WORKERS
environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import traceback
import warnings

import numpy as np

from . import experiment as xp
from .data import gen_arithmetic_task, gen_random_rnn_task, load_jsonl, save_jsonl
from .metrics import metrics
from .models import Linear2RNN
from .recovery import RecoveryConfig
from .refine import sgd_refine
from .spectral import spectral_learn, spectral_learn_general

METHOD_ALIASES = {
    "ls": "least_squares",
    "least-squares": "least_squares",
    "least_squares": "least_squares",
    "nuclear": "nuclear_norm",
    "nuclear-norm": "nuclear_norm",
    "nuclear_norm": "nuclear_norm",
    "iht": "iht",
    "tiht": "tiht",
    "tiht-tt": "tiht_tt",
    "tiht_tt": "tiht_tt",
}


class UsageError(Exception):
    """User-facing error: bad arguments, configs or input files."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors instead of argparse's 2
        raise UsageError(message)


def _write_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc


def cmd_generate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    L = args.length_base
    if args.all_lengths:
        lengths = list(range(0, 2 * L + 2))
    else:
        lengths = [L, 2 * L, 2 * L + 1]
    if args.task == "arithmetic":
        target, train, test = gen_arithmetic_task(
            args.size, args.noise, args.seed, L=L, lengths=lengths,
            test_size=args.test_size, test_length=args.test_length,
        )
    else:
        target, train, test = gen_random_rnn_task(
            args.size, args.noise, args.seed, L=L, lengths=lengths,
            test_size=args.test_size, test_length=args.test_length,
        )
    files = {}
    for l, ds in sorted(train.items()):
        path = os.path.join(args.out, f"train_l{l}.jsonl")
        save_jsonl(ds, path)
        files[str(l)] = os.path.basename(path)
    test_path = os.path.join(args.out, "test.jsonl")
    save_jsonl(test, test_path)
    model_path = os.path.join(args.out, "target_model.json")
    target.save(model_path)
    manifest = {
        "task": args.task,
        "size": args.size,
        "noise_variance": args.noise,
        "seed": args.seed,
        "L": L,
        "d": target.d,
        "p": target.p,
        "lengths": lengths,
        "train_files": files,
        "test_file": os.path.basename(test_path),
        "target_model": os.path.basename(model_path),
    }
    _write_json(manifest, os.path.join(args.out, "manifest.json"))
    print(f"wrote {len(files)} training files, test set and manifest to {args.out}")
    return 0


def _load_training(data_dir: str):
    manifest = _read_json(os.path.join(data_dir, "manifest.json"))
    d = int(manifest["d"])
    train = {}
    for key, name in manifest["train_files"].items():
        train[int(key)] = load_jsonl(os.path.join(data_dir, name), d=d)
    return manifest, train


def cmd_learn(args) -> int:
    manifest, train = _load_training(args.data)
    method = METHOD_ALIASES.get(args.method)
    if method is None:
        raise UsageError(
            f"unknown method {args.method!r}; choose from {sorted(set(METHOD_ALIASES))}"
        )
    config = RecoveryConfig(
        method=method,
        rank=args.rank,
        step=args.step,
        max_iters=args.max_iters,
        rel_tol=args.rel_tol,
        minibatch=args.minibatch,
        seed=args.seed,
    )
    start = time.perf_counter()
    rank_warnings = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.general:
            result = spectral_learn_general(train, config, L=int(manifest["L"]))
        else:
            triple = {
                l: ds
                for l, ds in train.items()
                if l in (manifest["L"], 2 * manifest["L"], 2 * manifest["L"] + 1)
            }
            if len(triple) != 3:
                raise UsageError(
                    "training directory lacks the (L, 2L, 2L+1) datasets; "
                    "regenerate or pass --general"
                )
            result = spectral_learn(triple, config)
        rank_warnings = [str(w.message) for w in caught]
    model = result.model
    report = {
        "method": method,
        "rank": args.rank,
        "general": bool(args.general),
        "rank_estimate": result.rank_estimate,
        "fallback": result.fallback,
        "fallback_reason": result.fallback_reason,
        "train_mse": result.train_mse,
        "zero_mse": result.zero_mse,
        "warnings": rank_warnings,
        "recoveries": {
            str(l): {
                "iterations": est.iterations,
                "converged": est.converged,
                "relative_residual": est.residual,
            }
            for l, est in result.estimates.items()
        },
        "converged": all(est.converged for est in result.estimates.values()),
    }
    if args.refine:
        refined = sgd_refine(
            model,
            train,
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr=args.lr,
            seed=args.seed,
        )
        model = refined.model
        report["refine"] = {
            "initial_train_mse": refined.initial_mse,
            "train_mse": refined.train_mse,
            "epochs_run": refined.epochs_run,
        }
    report["wall_time"] = time.perf_counter() - start
    model.save(args.out)
    if args.report:
        _write_json(report, args.report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    try:
        model = Linear2RNN.load(args.model)
    except FileNotFoundError as exc:
        raise UsageError(f"model file not found: {args.model}") from exc
    try:
        dataset = load_jsonl(args.data, d=model.d)
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    result = metrics(model, dataset)
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        _write_json(result, args.out)
    print(text)
    return 0


def cmd_experiment(args) -> int:
    doc = _read_json(args.config) if args.config else {}
    try:
        config = xp.SweepConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad sweep config: {exc}") from exc
    if args.full_grid:
        config.sizes = xp.FULL_SIZES
    os.makedirs(args.out_dir, exist_ok=True)

    def progress(done, total):
        print(f"\r{done}/{total} cells", end="", file=sys.stderr, flush=True)

    rows = xp.run_sweep(config, workers=args.workers, progress=progress)
    print("", file=sys.stderr)
    csv_path = os.path.join(args.out_dir, "results.csv")
    xp.write_csv(rows, csv_path)
    _write_json(
        {k: list(v) if isinstance(v, tuple) else v for k, v in vars(config).items()},
        os.path.join(args.out_dir, "sweep_manifest.json"),
    )
    outputs = [csv_path]
    if not args.no_plots:
        outputs.extend(xp.render_figures(rows, args.out_dir))
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"wrote {', '.join(outputs)} ({len(rows)} rows, {failed} failures)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="specrnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write synthetic training data")
    gen.add_argument("--task", choices=("arithmetic", "random-rnn"), default="arithmetic")
    gen.add_argument("--size", type=int, default=1000, help="examples per length")
    gen.add_argument("--noise", type=float, default=0.0, help="output noise variance")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--length-base", type=int, default=2, metavar="L")
    gen.add_argument("--all-lengths", action="store_true",
                     help="write lengths 0..2L+1 instead of (L, 2L, 2L+1)")
    gen.add_argument("--test-size", type=int, default=1000)
    gen.add_argument("--test-length", type=int, default=6)
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=cmd_generate)

    learn = sub.add_parser("learn", help="learn a model from generated data")
    learn.add_argument("--data", required=True, help="directory with manifest.json")
    learn.add_argument("--method", default="ls")
    learn.add_argument("--rank", type=int, required=True)
    learn.add_argument("--step", type=float, default=None)
    learn.add_argument("--max-iters", type=int, default=5000)
    learn.add_argument("--rel-tol", type=float, default=1e-7)
    learn.add_argument("--minibatch", type=int, default=None)
    learn.add_argument("--seed", type=int, default=0)
    learn.add_argument("--general", action="store_true",
                       help="use the length <= L basis algorithm")
    learn.add_argument("--refine", action="store_true",
                       help="refine the learned model with minibatch Adam")
    learn.add_argument("--epochs", type=int, default=100)
    learn.add_argument("--batch-size", type=int, default=64)
    learn.add_argument("--lr", type=float, default=1e-3)
    learn.add_argument("--out", required=True, help="model JSON path")
    learn.add_argument("--report", default=None, help="run report JSON path")
    learn.set_defaults(func=cmd_learn)

    ev = sub.add_parser("evaluate", help="metrics of a model on a dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True, help="JSON-lines dataset")
    ev.add_argument("--out", default=None, help="metrics JSON path")
    ev.set_defaults(func=cmd_evaluate)

    sweep = sub.add_parser("experiment", help="run a sweep and emit results.csv")
    sweep.add_argument("--config", default=None, help="sweep config JSON")
    sweep.add_argument("--out-dir", required=True)
    sweep.add_argument("--workers", type=int, default=None)
    sweep.add_argument("--full-grid", action="store_true",
                       help="use the full training-size grid")
    sweep.add_argument("--no-plots", action="store_true")
    sweep.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001 - anything else is an internal failure
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
