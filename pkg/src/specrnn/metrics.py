"""Prediction error metrics for learned models on datasets."""

from __future__ import annotations

import numpy as np

from .data import SequenceDataset
from .models import Linear2RNN

__all__ = ["predictions", "mse", "zero_mse", "metrics"]


def predictions(model: Linear2RNN, dataset: SequenceDataset) -> np.ndarray:
    return model.evaluate_batch(dataset.inputs, per_step=dataset.per_step)


def mse(model: Linear2RNN, dataset: SequenceDataset) -> float:
    """Mean squared error over every example and output coordinate."""
    return float(np.mean((predictions(model, dataset) - dataset.outputs) ** 2))


def zero_mse(dataset: SequenceDataset) -> float:
    """MSE of the constant-zero predictor (the fallback baseline)."""
    return float(np.mean(dataset.outputs**2))


def metrics(model: Linear2RNN, dataset: SequenceDataset) -> dict:
    """MSE, RMSE, MAE and MAPE of the model on the dataset.

    MAPE averages absolute relative errors over target entries larger than
    1e-12 in magnitude (NaN when no entry qualifies) and is reported in
    percent.
    """
    err = predictions(model, dataset) - dataset.outputs
    mse_val = float(np.mean(err**2))
    targets = dataset.outputs
    significant = np.abs(targets) > 1e-12
    if significant.any():
        mape = float(np.mean(np.abs(err[significant] / targets[significant]))) * 100.0
    else:
        mape = float("nan")
    return {
        "mse": mse_val,
        "rmse": float(np.sqrt(mse_val)),
        "mae": float(np.mean(np.abs(err))),
        "mape": mape,
    }
