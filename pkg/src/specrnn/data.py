"""Datasets of input/output sequences: synthetic generators and file formats.

A dataset groups equal-length examples: an ``(N, l, d)`` input array and
either ``(N, p)`` final outputs or ``(N, l, p)`` per-step outputs.  Length 0
(empty input sequences) is valid and means the output only reflects the
initial state.

File formats
    * JSON-lines datasets: one ``{"x": [[...], ...], "y": [...]}`` object per
      line; per-step outputs use a nested list for ``"y"``.
    * CSV ingestion: fixed-interval (timestamp, value) readings are averaged
      into an hourly series and windowed into fixed-length input sequences
      with an h-hours-ahead scalar target.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .models import Linear2RNN, random_rnn
from .tensor_ops import as_tensor

__all__ = [
    "SequenceDataset",
    "generate_dataset",
    "generate_per_step_dataset",
    "gen_random_rnn_task",
    "gen_arithmetic_task",
    "arithmetic_model",
    "arithmetic_targets",
    "augment_with_bias",
    "save_jsonl",
    "load_jsonl",
    "hourly_average",
    "windowed_examples",
    "load_sequences_csv",
]


@dataclass
class SequenceDataset:
    """Equal-length input/output examples plus generation metadata."""

    inputs: np.ndarray
    outputs: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = as_tensor(self.inputs)
        self.outputs = as_tensor(self.outputs)
        if self.inputs.ndim != 3:
            raise ValueError(f"inputs must be (N, l, d), got shape {self.inputs.shape}")
        if self.outputs.ndim not in (2, 3):
            raise ValueError(
                f"outputs must be (N, p) or (N, l, p), got shape {self.outputs.shape}"
            )
        if self.outputs.shape[0] != self.inputs.shape[0]:
            raise ValueError("inputs and outputs disagree on the number of examples")
        if self.per_step and self.outputs.shape[1] != self.length:
            raise ValueError("per-step outputs must cover every step")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def length(self) -> int:
        return self.inputs.shape[1]

    @property
    def d(self) -> int:
        return self.inputs.shape[2]

    @property
    def p(self) -> int:
        return self.outputs.shape[-1]

    @property
    def per_step(self) -> bool:
        return self.outputs.ndim == 3

    def subset(self, idx) -> "SequenceDataset":
        return SequenceDataset(self.inputs[idx], self.outputs[idx], dict(self.metadata))


def generate_dataset(
    model: Linear2RNN,
    length: int,
    size: int,
    noise_variance: float = 0.0,
    rng=None,
) -> SequenceDataset:
    """Examples with standard-normal inputs and optionally noisy outputs.

    Inputs are i.i.d. N(0, 1) entries; outputs are the model values plus
    isotropic Gaussian noise of the given variance on every coordinate.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if length < 0:
        raise ValueError("length must be >= 0")
    rng = np.random.default_rng(rng)
    inputs = rng.standard_normal((size, length, model.d))
    if length == 0:
        outputs = np.tile(model.Omega @ model.h0, (size, 1))
    else:
        outputs = model.evaluate_batch(inputs)
    if noise_variance > 0.0:
        outputs = outputs + np.sqrt(noise_variance) * rng.standard_normal(outputs.shape)
    meta = {"generator": "linear-2rnn", "length": length, "noise_variance": noise_variance}
    return SequenceDataset(inputs, outputs, meta)


def generate_per_step_dataset(
    model: Linear2RNN,
    length: int,
    size: int,
    noise_variance: float = 0.0,
    rng=None,
) -> SequenceDataset:
    """Like :func:`generate_dataset` but with outputs recorded at every step."""
    if length < 1:
        raise ValueError("per-step data needs length >= 1")
    rng = np.random.default_rng(rng)
    inputs = rng.standard_normal((size, length, model.d))
    outputs = model.evaluate_batch(inputs, per_step=True)
    if noise_variance > 0.0:
        outputs = outputs + np.sqrt(noise_variance) * rng.standard_normal(outputs.shape)
    meta = {
        "generator": "linear-2rnn-per-step",
        "length": length,
        "noise_variance": noise_variance,
    }
    return SequenceDataset(inputs, outputs, meta)


def gen_random_rnn_task(
    size: int,
    noise_variance: float = 0.0,
    seed=0,
    n: int = 5,
    d: int = 3,
    p: int = 2,
    L: int = 2,
    lengths=None,
    test_size: int = 1000,
    test_length: int = 6,
    scale: float = 0.2,
):
    """Random-target learning task: (target model, {length: dataset}, test set).

    The target is a random linear 2-RNN; training datasets cover lengths
    ``{L, 2L, 2L+1}`` by default (pass ``lengths`` for other collections, 0
    included).  ``size`` is either one count for every length or a mapping
    from length to count.  The test set contains noiseless outputs.
    """
    rng = np.random.default_rng(seed)
    target = random_rnn(n, d, p, scale, rng)
    if lengths is None:
        lengths = (L, 2 * L, 2 * L + 1)
    sizes = size if isinstance(size, dict) else {int(l): size for l in lengths}
    train = {
        int(l): generate_dataset(target, int(l), sizes[int(l)], noise_variance, rng)
        for l in lengths
    }
    test = generate_dataset(target, test_length, test_size, 0.0, rng)
    for ds in train.values():
        ds.metadata.update({"task": "random-rnn", "seed": seed})
    test.metadata.update({"task": "random-rnn", "seed": seed, "split": "test"})
    return target, train, test


def arithmetic_model() -> Linear2RNN:
    """Two-hidden-unit model computing the running sum of (second - first)
    input components, assuming a constant 1 in the last input channel."""
    a = np.zeros((2, 3, 2))
    a[0, 2, 0] = 1.0  # accumulated sum carries through the bias channel
    a[1, 0, 0] = -1.0
    a[1, 1, 0] = 1.0  # constant unit adds (x2 - x1) to the sum
    a[1, 2, 1] = 1.0  # constant unit carries
    return Linear2RNN(h0=np.array([0.0, 1.0]), A=a, Omega=np.array([[1.0, 0.0]]))


def arithmetic_targets(inputs: np.ndarray) -> np.ndarray:
    """Closed form sum of running differences for (N, l, >=2) inputs."""
    inputs = as_tensor(inputs)
    if inputs.shape[1] == 0:
        return np.zeros((inputs.shape[0], 1))
    return (inputs[:, :, 1] - inputs[:, :, 0]).sum(axis=1, keepdims=True)


def augment_with_bias(inputs: np.ndarray) -> np.ndarray:
    """Append a constant 1 channel to (N, l, d) inputs."""
    inputs = as_tensor(inputs)
    ones = np.ones(inputs.shape[:2] + (1,))
    return np.concatenate([inputs, ones], axis=2)


def gen_arithmetic_task(
    size: int,
    noise_variance: float = 0.0,
    seed=0,
    L: int = 2,
    lengths=None,
    test_size: int = 1000,
    test_length: int = 6,
):
    """Sum-of-running-differences task with a bias input channel (d=3, p=1)."""
    rng = np.random.default_rng(seed)
    reference = arithmetic_model()
    if lengths is None:
        lengths = (L, 2 * L, 2 * L + 1)
    sizes = size if isinstance(size, dict) else {int(l): size for l in lengths}

    def make(length, n_examples, noise):
        raw = rng.standard_normal((n_examples, length, 2))
        inputs = augment_with_bias(raw)
        outputs = arithmetic_targets(inputs)
        if noise > 0.0:
            outputs = outputs + np.sqrt(noise) * rng.standard_normal(outputs.shape)
        return SequenceDataset(
            inputs,
            outputs,
            {"task": "arithmetic", "length": length, "noise_variance": noise, "seed": seed},
        )

    train = {int(l): make(int(l), sizes[int(l)], noise_variance) for l in lengths}
    test = make(test_length, test_size, 0.0)
    test.metadata["split"] = "test"
    return reference, train, test


# ---------------------------------------------------------------------------
# JSON-lines serialization


def save_jsonl(dataset: SequenceDataset, path) -> None:
    """Write one example per line; shapes are recovered on load."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(dataset.n):
            doc = {
                "x": dataset.inputs[i].tolist(),
                "y": dataset.outputs[i].tolist(),
            }
            fh.write(json.dumps(doc, sort_keys=True))
            fh.write("\n")


def load_jsonl(path, d: int | None = None) -> SequenceDataset:
    """Read a dataset written by :func:`save_jsonl`.

    ``d`` is only needed to disambiguate the input dimension of length-0
    datasets (their "x" entries are empty lists).
    """
    xs, ys = [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                xs.append(np.asarray(doc["x"], dtype=float))
                ys.append(np.asarray(doc["y"], dtype=float))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: malformed example on line {line_no}") from exc
    if not xs:
        raise ValueError(f"{path}: empty dataset")
    length = 0 if xs[0].size == 0 else xs[0].shape[0]
    if length == 0:
        if d is None:
            raise ValueError(f"{path}: length-0 dataset needs an explicit input dimension")
        inputs = np.zeros((len(xs), 0, d))
    else:
        inputs = np.stack([x.reshape(length, -1) for x in xs])
    outputs = np.stack(ys)
    return SequenceDataset(inputs, outputs, {"source": str(path)})


# ---------------------------------------------------------------------------
# CSV ingestion (fixed-interval readings -> hourly series -> windows)


def _parse_timestamp(text: str) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise ValueError(f"bad timestamp {text!r}") from exc


def hourly_average(records, interval_minutes: int):
    """Average (timestamp, value) readings into a contiguous hourly series.

    A full hour needs ``60 / interval_minutes`` readings; incomplete or
    missing hours become NaN.  Returns (start hour, hourly values array).
    """
    per_hour: dict[datetime, list] = {}
    for ts, value in records:
        hour = ts.replace(minute=0, second=0, microsecond=0)
        per_hour.setdefault(hour, []).append(value)
    if not per_hour:
        raise ValueError("no readings to aggregate")
    expected = int(round(60 / interval_minutes))
    start = min(per_hour)
    end = max(per_hour)
    n_hours = int((end - start) / timedelta(hours=1)) + 1
    series = np.full(n_hours, np.nan)
    for hour, values in per_hour.items():
        if len(values) >= expected:
            idx = int((hour - start) / timedelta(hours=1))
            series[idx] = float(np.mean(values))
    return start, series


def windowed_examples(series: np.ndarray, window: int, horizon: int) -> SequenceDataset:
    """Slide a length-``window`` input over the series; the target is the
    value ``horizon`` steps after the last input.  Windows touching NaN
    values are dropped."""
    series = as_tensor(series).reshape(-1)
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    n_examples = series.size - window - horizon + 1
    if n_examples < 1:
        raise ValueError(
            f"series of {series.size} points is too short for window {window} "
            f"and horizon {horizon}"
        )
    xs, ys = [], []
    for i in range(n_examples):
        x = series[i : i + window]
        y = series[i + window - 1 + horizon]
        if np.isnan(x).any() or np.isnan(y):
            continue
        xs.append(x.reshape(window, 1))
        ys.append([y])
    if not xs:
        raise ValueError("every window overlapped a gap in the series")
    return SequenceDataset(
        np.stack(xs),
        np.asarray(ys, dtype=float),
        {"window": window, "horizon": horizon, "dropped": n_examples - len(xs)},
    )


def load_sequences_csv(
    path,
    schema: dict,
    window: int,
    horizon: int = 1,
    gap_policy: str = "drop",
) -> SequenceDataset:
    """Ingest a timestamp/value CSV into windowed hourly-average examples.

    ``schema`` needs ``timestamp_col``, ``value_col`` and
    ``interval_minutes``.  ``gap_policy`` is "drop" (discard windows touching
    incomplete hours) or "interpolate" (fill gaps linearly first).
    """
    ts_col = schema["timestamp_col"]
    value_col = schema["value_col"]
    interval = int(schema["interval_minutes"])
    if gap_policy not in ("drop", "interpolate"):
        raise ValueError(f"unknown gap policy {gap_policy!r}")
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for line_no, row in enumerate(reader, start=2):
            try:
                ts = _parse_timestamp(row[ts_col])
                value = float(row[value_col])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed row on line {line_no}: {exc}") from exc
            records.append((ts, value))
    start, series = hourly_average(records, interval)
    if gap_policy == "interpolate" and np.isnan(series).any():
        idx = np.arange(series.size)
        good = ~np.isnan(series)
        series = np.interp(idx, idx[good], series[good])
    dataset = windowed_examples(series, window, horizon)
    dataset.metadata.update(
        {"source": str(path), "start_hour": start.isoformat(), "gap_policy": gap_policy}
    )
    return dataset
