"""Sweep harness: learn across (method, N, noise, rank, seed) grids.

Each sweep cell regenerates its task from the cell seed, runs the spectral
learner (optionally followed by gradient refinement for the "tiht_sgd"
method), and reports train/test MSE and wall time.  Rows are written to a
tidy CSV; MSE-versus-N curves are rendered to PNG files next to it.
"""

from __future__ import annotations

import csv
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import gen_arithmetic_task, gen_random_rnn_task
from .metrics import mse
from .recovery import RecoveryConfig
from .refine import sgd_refine
from .spectral import spectral_learn

__all__ = [
    "SweepConfig",
    "SWEEP_METHODS",
    "CSV_COLUMNS",
    "run_cell",
    "run_sweep",
    "write_csv",
    "render_figures",
    "worker_count",
]

SWEEP_METHODS = ("least_squares", "nuclear_norm", "iht", "tiht", "tiht_tt", "tiht_sgd")
CSV_COLUMNS = (
    "method",
    "N",
    "sigma2",
    "R",
    "seed",
    "train_mse",
    "test_mse",
    "wall_time",
    "fallback",
    "status",
)
DESK_SIZES = (20, 100, 500, 2000, 10000)
FULL_SIZES = (20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, 20000)
WORKERS_ENV = "SPECRNN_WORKERS"


@dataclass
class SweepConfig:
    task: str = "arithmetic"
    methods: tuple = ("least_squares", "nuclear_norm", "iht", "tiht")
    sizes: tuple = DESK_SIZES
    noise_variances: tuple = (0.0, 1.0)
    ranks: tuple = (2,)
    seeds: tuple = (0, 1, 2, 3, 4)
    L: int = 2
    step: float | None = None
    max_iters: int = 5000
    rel_tol: float = 1e-7
    minibatch: int | None = None
    test_size: int = 1000
    test_length: int = 6
    refine_epochs: int = 50
    refine_batch: int = 64
    refine_lr: float = 1e-3

    def __post_init__(self):
        if self.task not in ("arithmetic", "random-rnn"):
            raise ValueError(f"unknown task {self.task!r}")
        bad = [m for m in self.methods if m not in SWEEP_METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {SWEEP_METHODS}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        coerced = {
            k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()
        }
        return cls(**coerced)

    def cells(self) -> list:
        return [
            (self, method, size, sigma2, rank, seed)
            for method in self.methods
            for size in self.sizes
            for sigma2 in self.noise_variances
            for rank in self.ranks
            for seed in self.seeds
        ]


def _generate(config: SweepConfig, size: int, sigma2: float, seed: int):
    if config.task == "arithmetic":
        _, train, test = gen_arithmetic_task(
            size,
            sigma2,
            seed,
            L=config.L,
            test_size=config.test_size,
            test_length=config.test_length,
        )
    else:
        _, train, test = gen_random_rnn_task(
            size,
            sigma2,
            seed,
            L=config.L,
            test_size=config.test_size,
            test_length=config.test_length,
        )
    return train, test


def run_cell(cell) -> dict:
    """One sweep cell; exceptions are captured into the status field."""
    config, method, size, sigma2, rank, seed = cell
    row = {
        "method": method,
        "N": size,
        "sigma2": sigma2,
        "R": rank,
        "seed": seed,
        "train_mse": float("nan"),
        "test_mse": float("nan"),
        "wall_time": float("nan"),
        "fallback": "",
        "status": "ok",
    }
    start = time.perf_counter()
    try:
        train, test = _generate(config, size, sigma2, seed)
        base_method = "tiht" if method == "tiht_sgd" else method
        rec = RecoveryConfig(
            method=base_method,
            rank=rank,
            step=config.step,
            max_iters=config.max_iters,
            rel_tol=config.rel_tol,
            minibatch=config.minibatch,
            seed=seed,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = spectral_learn(train, rec)
            model = result.model
            if method == "tiht_sgd":
                refined = sgd_refine(
                    model,
                    train,
                    epochs=config.refine_epochs,
                    batch_size=config.refine_batch,
                    lr=config.refine_lr,
                    seed=seed,
                )
                model = refined.model
                row["train_mse"] = refined.train_mse
            else:
                row["train_mse"] = result.train_mse
        row["test_mse"] = mse(model, test)
        row["fallback"] = "yes" if result.fallback else "no"
    except Exception as exc:  # noqa: BLE001 - cell failures become data
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    row["wall_time"] = time.perf_counter() - start
    return row


def worker_count(explicit: int | None = None) -> int:
    if explicit is not None and explicit > 0:
        return explicit
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def run_sweep(config: SweepConfig, workers: int | None = None, progress=None) -> list:
    """Run all cells (in a worker pool when workers > 1); rows come back
    sorted by (method, N, sigma2, R, seed) for reproducible output."""
    cells = config.cells()
    n_workers = worker_count(workers)
    rows = []
    if n_workers <= 1:
        for i, cell in enumerate(cells):
            rows.append(run_cell(cell))
            if progress:
                progress(i + 1, len(cells))
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for i, row in enumerate(pool.map(run_cell, cells)):
                rows.append(row)
                if progress:
                    progress(i + 1, len(cells))
    rows.sort(key=lambda r: (r["method"], r["N"], r["sigma2"], r["R"], r["seed"]))
    return rows


def write_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in CSV_COLUMNS})


def _format_sigma(sigma2: float) -> str:
    text = f"{sigma2:g}"
    return text.replace(".", "p")


def render_figures(rows, out_dir) -> list:
    """Mean test MSE versus training size, one figure per noise level."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok_rows = [r for r in rows if r["status"] == "ok" and np.isfinite(r["test_mse"])]
    if not ok_rows:
        return []
    paths = []
    sigmas = sorted({r["sigma2"] for r in ok_rows})
    for sigma2 in sigmas:
        fig, ax = plt.subplots(figsize=(6, 4))
        subset = [r for r in ok_rows if r["sigma2"] == sigma2]
        for method in sorted({r["method"] for r in subset}):
            series = [r for r in subset if r["method"] == method]
            sizes = sorted({r["N"] for r in series})
            means = [
                np.mean([r["test_mse"] for r in series if r["N"] == n]) for n in sizes
            ]
            ax.plot(sizes, means, marker="o", label=method)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("training examples per length")
        ax.set_ylabel("mean test MSE")
        ax.set_title(f"noise variance {sigma2:g}")
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, f"results_sigma{_format_sigma(sigma2)}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths
