"""Linear second-order RNNs and vector-valued weighted automata.

A linear 2-RNN with n hidden units, input dimension d and output dimension p
is a triple ``(h0, A, Omega)``: initial state in R^n, transition tensor of
shape (n, d, n) and output matrix of shape (p, n).  The state update is
bilinear with identity activations,

    h_t[j] = sum_{i, s} A[i, s, j] * h_{t-1}[i] * x_t[s],

and the model maps an input sequence to ``Omega @ h_last`` (the empty
sequence maps to ``Omega @ h0``).  Restricted to sequences of a fixed length
the map is multilinear in its inputs.

A vector-valued weighted finite automaton (vv-WFA) over the alphabet
``{0, ..., d-1}`` is the discrete counterpart: ``(alpha, {A^s}, Omega)`` with
word value ``Omega @ (A^{s1} ... A^{sk}).T @ alpha``.  Stacking the
transition matrices along a middle axis converts between the two model
classes exactly on one-hot inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import as_tensor
from .tensor_train import TensorTrain

__all__ = [
    "Linear2RNN",
    "VvWFA",
    "rnn_from_wfa",
    "wfa_from_rnn",
    "change_of_basis",
    "hankel_tt",
    "mse_gradients",
    "random_rnn",
    "zero_rnn",
    "one_hot",
]


@dataclass(frozen=True, eq=False)
class Linear2RNN:
    """Linear second-order RNN ``(h0, A, Omega)``; treat arrays as read-only."""

    h0: np.ndarray
    A: np.ndarray
    Omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h0", as_tensor(self.h0))
        object.__setattr__(self, "A", as_tensor(self.A))
        object.__setattr__(self, "Omega", as_tensor(self.Omega))
        n = self.h0.shape[0]
        if self.h0.ndim != 1:
            raise ValueError("h0 must be a vector")
        if self.A.ndim != 3 or self.A.shape[0] != n or self.A.shape[2] != n:
            raise ValueError(
                f"transition tensor shape {self.A.shape} inconsistent with n={n}"
            )
        if self.Omega.ndim != 2 or self.Omega.shape[1] != n:
            raise ValueError(
                f"output matrix shape {self.Omega.shape} inconsistent with n={n}"
            )

    @property
    def n(self) -> int:
        return self.h0.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def p(self) -> int:
        return self.Omega.shape[0]

    def evaluate(self, xs) -> np.ndarray:
        """Output in R^p for one input sequence (possibly empty)."""
        h = self.h0
        for x in xs:
            x = as_tensor(x)
            if x.shape != (self.d,):
                raise ValueError(f"input of shape {x.shape}, expected ({self.d},)")
            h = np.einsum("isj,i,s->j", self.A, h, x)
        return self.Omega @ h

    def states(self, batch: np.ndarray) -> np.ndarray:
        """All hidden states for a batch: (N, l, d) inputs -> (N, l+1, n)."""
        batch = as_tensor(batch)
        n_seq, length, _ = batch.shape
        hs = np.empty((n_seq, length + 1, self.n))
        hs[:, 0, :] = self.h0
        for t in range(length):
            hs[:, t + 1, :] = np.einsum(
                "isj,bi,bs->bj", self.A, hs[:, t, :], batch[:, t, :], optimize=True
            )
        return hs

    def evaluate_batch(self, batch: np.ndarray, per_step: bool = False) -> np.ndarray:
        """Outputs for a batch of equal-length sequences.

        ``batch`` has shape (N, l, d).  Returns (N, p), or (N, l, p) with the
        outputs after every step when ``per_step`` is set.
        """
        hs = self.states(batch)
        if per_step:
            return np.einsum("pj,blj->blp", self.Omega, hs[:, 1:, :])
        return hs[:, -1, :] @ self.Omega.T

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "p": self.p,
            "h0": self.h0.tolist(),
            "A": self.A.reshape(-1).tolist(),
            "Omega": self.Omega.reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Linear2RNN":
        n, d, p = int(doc["n"]), int(doc["d"]), int(doc["p"])
        return cls(
            h0=np.asarray(doc["h0"], dtype=float).reshape(n),
            A=np.asarray(doc["A"], dtype=float).reshape(n, d, n),
            Omega=np.asarray(doc["Omega"], dtype=float).reshape(p, n),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Linear2RNN":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class VvWFA:
    """Vector-valued weighted automaton; ``transitions[s]`` is the matrix A^s."""

    alpha: np.ndarray
    transitions: np.ndarray
    Omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_tensor(self.alpha))
        object.__setattr__(self, "transitions", as_tensor(self.transitions))
        object.__setattr__(self, "Omega", as_tensor(self.Omega))
        n = self.alpha.shape[0]
        if self.transitions.ndim != 3 or self.transitions.shape[1:] != (n, n):
            raise ValueError(
                f"transitions shape {self.transitions.shape} inconsistent with n={n}"
            )
        if self.Omega.ndim != 2 or self.Omega.shape[1] != n:
            raise ValueError(
                f"output matrix shape {self.Omega.shape} inconsistent with n={n}"
            )

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def d(self) -> int:
        return self.transitions.shape[0]

    @property
    def p(self) -> int:
        return self.Omega.shape[0]

    def evaluate(self, word) -> np.ndarray:
        """Value of the automaton on a word of symbol indices."""
        h = self.alpha
        for sym in word:
            sym = int(sym)
            if not 0 <= sym < self.d:
                raise ValueError(f"symbol {sym} outside alphabet of size {self.d}")
            h = self.transitions[sym].T @ h
        return self.Omega @ h


def one_hot(sym: int, d: int) -> np.ndarray:
    v = np.zeros(d)
    v[sym] = 1.0
    return v


def rnn_from_wfa(wfa: VvWFA) -> Linear2RNN:
    """2-RNN with the same behavior on one-hot encodings of words."""
    a = np.moveaxis(wfa.transitions, 0, 1)  # (n, d, n), A[:, s, :] = A^s
    return Linear2RNN(h0=wfa.alpha.copy(), A=a, Omega=wfa.Omega.copy())


def wfa_from_rnn(model: Linear2RNN) -> VvWFA:
    """Inverse of :func:`rnn_from_wfa`: unstack the transition tensor."""
    return VvWFA(
        alpha=model.h0.copy(),
        transitions=np.moveaxis(model.A, 1, 0),
        Omega=model.Omega.copy(),
    )


def change_of_basis(model: Linear2RNN, basis: np.ndarray, cond_limit: float = 1e12) -> Linear2RNN:
    """Equivalent model with hidden states expressed in a new basis.

    For invertible ``basis`` P the returned model computes the same function:
    ``(P^{-T} h0, A x1 P x3 P^{-T}, Omega P^T ... )`` arranged so outputs are
    unchanged on every input sequence.
    """
    basis = as_tensor(basis)
    n = model.n
    if basis.shape != (n, n):
        raise ValueError(f"basis must be {n}x{n}, got {basis.shape}")
    if np.linalg.cond(basis) > cond_limit:
        raise ValueError("basis matrix is singular or too ill-conditioned")
    inv_t = np.linalg.inv(basis).T
    a = np.einsum("ai,isj,bj->asb", basis, model.A, inv_t, optimize=True)
    return Linear2RNN(h0=inv_t @ model.h0, A=a, Omega=model.Omega @ basis.T)


def hankel_tt(model: Linear2RNN, length: int) -> TensorTrain:
    """Hankel tensor of the model at the given length, in train form.

    The order-(length+1) tensor of shape (d, ..., d, p) whose entry at
    ``(i_1, ..., i_l, :)`` is the model output on the one-hot sequence
    ``(e_{i_1}, ..., e_{i_l})``.  Its train has first core ``A x1 h0``,
    ``length - 1`` copies of the transition tensor, and the transposed output
    matrix, so every bond rank is at most n.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    first = np.einsum("isj,i->sj", model.A, model.h0)[None, :, :]  # (1, d, n)
    cores = [first]
    cores.extend(model.A.copy() for _ in range(length - 1))
    cores.append(model.Omega.T[:, :, None])  # (n, p, 1)
    return TensorTrain(cores)


def mse_gradients(model: Linear2RNN, inputs, targets):
    """Exact gradients of the mean squared error on a batch.

    ``inputs`` has shape (N, l, d); ``targets`` either (N, p) for
    final-output examples or (N, l, p) for per-step outputs.  The loss is the
    mean of squared errors over every target entry.  Returns gradients with
    the shapes of ``(h0, A, Omega)``, computed by backpropagation through the
    bilinear recurrence.
    """
    inputs = as_tensor(inputs)
    targets = as_tensor(targets)
    n_seq, length, d = inputs.shape
    per_step = targets.ndim == 3
    if per_step and targets.shape[:2] != (n_seq, length):
        raise ValueError(f"per-step targets shape {targets.shape} mismatches inputs")
    if not per_step and targets.shape[0] != n_seq:
        raise ValueError(f"targets rows {targets.shape[0]} != batch size {n_seq}")

    hs = model.states(inputs)
    count = targets.size
    if per_step:
        preds = np.einsum("pj,blj->blp", model.Omega, hs[:, 1:, :])
        out_grads = 2.0 * (preds - targets) / count  # (N, l, p)
        grad_omega = np.einsum("blp,blj->pj", out_grads, hs[:, 1:, :], optimize=True)
        delta = out_grads[:, -1, :] @ model.Omega  # dL/dh_l
    else:
        preds = hs[:, -1, :] @ model.Omega.T
        out_grads = 2.0 * (preds - targets) / count  # (N, p)
        grad_omega = out_grads.T @ hs[:, -1, :]
        delta = out_grads @ model.Omega

    grad_a = np.zeros_like(model.A)
    for t in range(length - 1, -1, -1):
        x_t = inputs[:, t, :]
        grad_a += np.einsum("bi,bs,bj->isj", hs[:, t, :], x_t, delta, optimize=True)
        delta = np.einsum("isj,bs,bj->bi", model.A, x_t, delta, optimize=True)
        if per_step and t > 0:
            delta = delta + out_grads[:, t - 1, :] @ model.Omega
    grad_h0 = delta.sum(axis=0)
    return grad_h0, grad_a, grad_omega


def random_rnn(n: int, d: int, p: int, scale: float = 0.2, seed=None) -> Linear2RNN:
    """Model with i.i.d. zero-mean normal parameters of the given stdev."""
    if min(n, d, p) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    return Linear2RNN(
        h0=scale * rng.standard_normal(n),
        A=scale * rng.standard_normal((n, d, n)),
        Omega=scale * rng.standard_normal((p, n)),
    )


def zero_rnn(n: int, d: int, p: int) -> Linear2RNN:
    """Model computing the constant zero function."""
    return Linear2RNN(h0=np.zeros(n), A=np.zeros((n, d, n)), Omega=np.zeros((p, n)))
