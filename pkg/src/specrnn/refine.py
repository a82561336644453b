"""Gradient refinement of a learned model with an Adam optimizer.

Spectral estimates from noisy data can usually be improved by a few epochs
of minibatch gradient descent on the training mean squared error.  The
optimizer keeps the best iterate seen, so the returned model never has a
higher training MSE than the starting one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SequenceDataset
from .models import Linear2RNN, mse_gradients

__all__ = ["AdamState", "adam_init", "adam_step", "RefineResult", "sgd_refine"]


@dataclass
class AdamState:
    """Moment accumulators shaped like (h0, A, Omega), plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: tuple = None
    v: tuple = None


def adam_init(model: Linear2RNN, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    zeros = (np.zeros_like(model.h0), np.zeros_like(model.A), np.zeros_like(model.Omega))
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0,
                     m=zeros, v=tuple(z.copy() for z in zeros))


def adam_step(model: Linear2RNN, grads, state: AdamState):
    """One bias-corrected Adam update; returns the new model and state."""
    params = (model.h0, model.A, model.Omega)
    if any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match the model parameters")
    t = state.step + 1
    new_m, new_v, new_params = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_model = Linear2RNN(h0=new_params[0], A=new_params[1], Omega=new_params[2])
    new_state = AdamState(lr=state.lr, beta1=state.beta1, beta2=state.beta2,
                          eps=state.eps, step=t, m=tuple(new_m), v=tuple(new_v))
    return new_model, new_state


@dataclass
class RefineResult:
    model: Linear2RNN
    train_mse: float
    initial_mse: float
    epochs_run: int
    history: list = field(default_factory=list)


def _train_mse(model: Linear2RNN, datasets) -> float:
    sse = 0.0
    count = 0
    for ds in datasets:
        preds = model.evaluate_batch(ds.inputs, per_step=ds.per_step)
        sse += float(np.sum((preds - ds.outputs) ** 2))
        count += ds.outputs.size
    return sse / count


def sgd_refine(
    model: Linear2RNN,
    train,
    epochs: int = 100,
    batch_size: int = 64,
    lr: float = 1e-3,
    seed=0,
) -> RefineResult:
    """Minibatch Adam refinement; returns the best iterate by training MSE.

    ``train`` is a dataset or a mapping/list of datasets (mixed lengths and
    per-step outputs allowed; all available outputs enter the loss).  On a
    non-finite loss the epoch is abandoned, the learning rate halved and the
    best model restored, up to 3 times.
    """
    if isinstance(train, SequenceDataset):
        datasets = [train]
    elif isinstance(train, dict):
        datasets = [train[k] for k in sorted(train)]
    else:
        datasets = list(train)
    if not datasets:
        raise ValueError("no training data")
    rng = np.random.default_rng(seed)

    best_model = model
    best_mse = _train_mse(model, datasets)
    initial_mse = best_mse
    history = [best_mse]

    current = model
    state = adam_init(model, lr=lr)
    retries = 0
    epochs_run = 0
    while epochs_run < epochs:
        failed = False
        for ds in datasets:
            order = rng.permutation(ds.n)
            for start in range(0, ds.n, batch_size):
                idx = order[start : start + batch_size]
                grads = mse_gradients(current, ds.inputs[idx], ds.outputs[idx])
                if not all(np.all(np.isfinite(g)) for g in grads):
                    failed = True
                    break
                current, state = adam_step(current, grads, state)
                if not np.all(np.isfinite(current.A)):
                    failed = True
                    break
            if failed:
                break
        epochs_run += 1
        if failed:
            retries += 1
            if retries > 3:
                break
            current = best_model
            state = adam_init(best_model, lr=state.lr / 2.0)
            continue
        epoch_mse = _train_mse(current, datasets)
        history.append(epoch_mse)
        if np.isfinite(epoch_mse) and epoch_mse < best_mse:
            best_mse = epoch_mse
            best_model = current
    return RefineResult(best_model, best_mse, initial_mse, epochs_run, history)
