"""Reconstructing a linear 2-RNN from recovered Hankel tensors.

Write H_l for the length-l Hankel tensor of the target function.  Given a
rank-R factorization ``P @ S`` of the balanced matricization of H_{2L}, the
model parameters follow from pseudo-inverse formulas applied to H_L and
H_{2L+1}; when the factorized matrix truly has rank R (a complete
equal-length basis), the reconstructed model computes the target function
exactly.

When no single length L yields a full-rank matricization, the general
variant assembles Hankel blocks over the basis of all sequences of length at
most L (empty sequence included when length-0 data is available) and applies
the same formulas to the assembled blocks.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from math import prod

import numpy as np

from .data import SequenceDataset
from .models import Linear2RNN, zero_rnn
from .recovery import (
    DivergenceError,
    HankelEstimate,
    RecoveryConfig,
    estimate_hankel,
)
from .tensor_ops import as_tensor, reshape_group
from .tensor_train import TensorTrain

__all__ = [
    "RankConditionWarning",
    "IllConditionedFactorization",
    "HankelTriple",
    "SpectralLearnResult",
    "rank_factorize",
    "tt_split",
    "recover_rnn",
    "spectral_learn",
    "spectral_learn_general",
    "per_step_datasets",
    "enumerate_basis",
    "GeneralHankelBlocks",
    "assemble_general_blocks",
    "numerical_rank",
]

PINV_CUTOFF = 1e-10


class RankConditionWarning(UserWarning):
    """The factorized Hankel matricization does not have numerical rank R."""


class IllConditionedFactorization(RuntimeError):
    """Factor conditioning too poor for the pseudo-inverse formulas."""


@dataclass
class HankelTriple:
    """Hankel tensors at lengths L, 2L and 2L+1 (shapes d x ... x d x p)."""

    h_L: np.ndarray
    h_2L: np.ndarray
    h_2L1: np.ndarray

    def __post_init__(self):
        self.h_L = as_tensor(self.h_L)
        self.h_2L = as_tensor(self.h_2L)
        self.h_2L1 = as_tensor(self.h_2L1)
        L = self.h_L.ndim - 1
        if L < 1:
            raise ValueError("base length must be >= 1")
        if self.h_2L.ndim != 2 * L + 1 or self.h_2L1.ndim != 2 * L + 2:
            raise ValueError("tensor orders are not (L+1, 2L+1, 2L+2)")
        d, p = self.h_L.shape[0], self.h_L.shape[-1]
        for t in (self.h_L, self.h_2L, self.h_2L1):
            if t.shape[:-1] != (d,) * (t.ndim - 1) or t.shape[-1] != p:
                raise ValueError(f"unexpected Hankel shape {t.shape}")

    @property
    def L(self) -> int:
        return self.h_L.ndim - 1

    @property
    def d(self) -> int:
        return self.h_L.shape[0]

    @property
    def p(self) -> int:
        return self.h_L.shape[-1]


def numerical_rank(mat: np.ndarray, cutoff: float = PINV_CUTOFF) -> int:
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s > cutoff * s[0]))


def rank_factorize(h_2L: np.ndarray, rank: int):
    """Rank-R factorization P @ S of the balanced matricization of H_{2L}.

    P holds the leading left singular vectors, S the scaled right ones; the
    product is the best rank-R approximation and is exact whenever the matrix
    rank is at most R.
    """
    h_2L = as_tensor(h_2L)
    if rank < 1:
        raise ValueError("rank must be >= 1")
    L = h_2L.ndim // 2
    mat = reshape_group(h_2L, [L, L + 1])
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    r = min(rank, s.size)
    return u[:, :r], s[:r, None] * vt[:r]


def tt_split(hankel: TensorTrain, L: int):
    """Exact factorization of the balanced matricization from a train's cores.

    Splitting the chain after core L gives P from the left cores and S from
    the right ones with ``P @ S`` equal to the matricization exactly; the
    inner dimension is the bond rank at the split.
    """
    if not 1 <= L < hankel.order:
        raise ValueError(f"split position {L} out of range")
    # Contract the left cores into (d^L, r_L).
    out = hankel.cores[0].reshape(-1, hankel.cores[0].shape[2])
    for core in hankel.cores[1:L]:
        r_prev, d, r_next = core.shape
        out = (out @ core.reshape(r_prev, d * r_next)).reshape(-1, r_next)
    p_factor = out
    # Contract the right cores into (r_L, prod(right dims)).
    right = hankel.cores[L].reshape(hankel.cores[L].shape[0], -1)
    for core in hankel.cores[L + 1 :]:
        r_prev, d, r_next = core.shape
        right = (
            right.reshape(-1, r_prev) @ core.reshape(r_prev, d * r_next)
        ).reshape(p_factor.shape[1], -1)
    return p_factor, right


def _guarded_pinv(mat: np.ndarray, what: str, cutoff: float = PINV_CUTOFF):
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        # All-zero factor: pseudo-inverse is zero, which reconstructs the
        # (legitimately) zero function.
        return np.zeros((mat.shape[1], mat.shape[0]))
    if s[-1] <= cutoff * s[0]:
        raise IllConditionedFactorization(
            f"{what} is rank deficient or too ill-conditioned "
            f"(singular values {s[:3]}...{s[-1:]})"
        )
    return vt.T @ (u / s).T


def recover_rnn(triple: HankelTriple, p_factor: np.ndarray, s_factor: np.ndarray) -> Linear2RNN:
    """Model parameters from the factorization and the short/odd Hankel tensors.

    Requires ``p_factor @ s_factor`` to equal the balanced matricization of
    H_{2L} with full column/row rank factors; raises
    :class:`IllConditionedFactorization` otherwise.
    """
    L, d, p = triple.L, triple.d, triple.p
    p_pinv = _guarded_pinv(p_factor, "prefix factor P")
    s_pinv = _guarded_pinv(s_factor, "suffix factor S")
    h0 = s_pinv.T @ triple.h_L.reshape(-1)
    omega = (p_pinv @ reshape_group(triple.h_L, [L, 1])).T
    mid = reshape_group(triple.h_2L1, [L, 1, L + 1])
    a = np.einsum("ra,aib,bs->ris", p_pinv, mid, s_pinv, optimize=True)
    return Linear2RNN(h0=h0, A=a, Omega=omega)


@dataclass
class SpectralLearnResult:
    """Learned model plus the diagnostics the CLI reports."""

    model: Linear2RNN
    estimates: dict
    rank_estimate: int
    fallback: bool
    fallback_reason: str | None
    train_mse: float
    zero_mse: float

    @property
    def hidden_size(self) -> int:
        return self.model.n


def _dataset_sse(model: Linear2RNN, ds: SequenceDataset):
    preds = model.evaluate_batch(ds.inputs, per_step=ds.per_step)
    return float(np.sum((preds - ds.outputs) ** 2)), ds.outputs.size


def _training_mses(model: Linear2RNN, datasets) -> tuple:
    sse = 0.0
    count = 0
    zero_sse = 0.0
    for ds in datasets:
        s, c = _dataset_sse(model, ds)
        sse += s
        count += c
        zero_sse += float(np.sum(ds.outputs**2))
    return sse / count, zero_sse / count


def _finalize(build_model, datasets, cfg: RecoveryConfig, estimates, rank_estimate):
    """Shared tail: build the model, then fall back to the zero function when
    the hypothesis is unusable or loses to the zero predictor on the data."""
    any_ds = next(iter(datasets.values()))
    d, p = any_ds.d, any_ds.p
    fallback_reason = None
    try:
        model = build_model()
    except (IllConditionedFactorization, DivergenceError) as exc:
        model = None
        fallback_reason = f"{type(exc).__name__}: {exc}"
    if model is not None:
        train_mse, zero_mse = _training_mses(model, list(datasets.values()))
        if not np.isfinite(train_mse) or train_mse > zero_mse:
            fallback_reason = (
                f"hypothesis train MSE {train_mse:.3e} exceeds zero-function "
                f"MSE {zero_mse:.3e}"
            )
            model = None
        else:
            return SpectralLearnResult(
                model, estimates, rank_estimate, False, None, train_mse, zero_mse
            )
    zero = zero_rnn(cfg.rank, d, p)
    train_mse, zero_mse = _training_mses(zero, list(datasets.values()))
    return SpectralLearnResult(
        zero, estimates, rank_estimate, True, fallback_reason, train_mse, zero_mse
    )


def _check_dims(datasets) -> tuple:
    dims = {(ds.d, ds.p) for ds in datasets.values()}
    if len(dims) != 1:
        raise ValueError(f"datasets disagree on input/output dimensions: {dims}")
    return dims.pop()


def _warn_rank(observed: int, configured: int, what: str) -> None:
    if observed != configured:
        kind = "exceeds" if observed > configured else "is below"
        warnings.warn(
            f"numerical rank {observed} of {what} {kind} the configured rank "
            f"{configured}; the reconstruction hypothesis rank == R is violated",
            RankConditionWarning,
            stacklevel=3,
        )


def spectral_learn(datasets, cfg: RecoveryConfig) -> SpectralLearnResult:
    """End-to-end learner on datasets of lengths {L, 2L, 2L+1}.

    Recovers the three Hankel tensors with the configured method, factorizes
    the middle one and applies the reconstruction formulas.  With noiseless
    data, at least d^l examples per length and the least-squares method, the
    learned model computes the target function with probability one.
    """
    lengths = sorted(int(l) for l in datasets)
    if len(lengths) != 3 or lengths[1] != 2 * lengths[0] or lengths[2] != 2 * lengths[0] + 1:
        raise ValueError(f"expected lengths (L, 2L, 2L+1), got {lengths}")
    L = lengths[0]
    _check_dims(datasets)
    estimates = {l: estimate_hankel(datasets[l], cfg) for l in lengths}

    h_2L = estimates[2 * L]
    if cfg.method == "tiht_tt":
        balanced = reshape_group(h_2L.dense(), [L, L + 1])
    else:
        balanced = reshape_group(h_2L.tensor, [L, L + 1])
    _warn_rank(numerical_rank(balanced), cfg.rank, "the balanced Hankel matricization")

    def build():
        triple = HankelTriple(
            estimates[L].dense(), h_2L.dense(), estimates[2 * L + 1].dense()
        )
        if cfg.method == "tiht_tt":
            p_factor, s_factor = tt_split(h_2L.tt, L)
        else:
            p_factor, s_factor = rank_factorize(h_2L.tensor, cfg.rank)
        return recover_rnn(triple, p_factor, s_factor)

    return _finalize(build, datasets, cfg, estimates, numerical_rank(balanced))


# ---------------------------------------------------------------------------
# General algorithm over the basis of all sequences of length <= L


def enumerate_basis(d: int, max_length: int, include_empty: bool = True) -> list:
    """All words over {0..d-1} of length <= max_length, shortest first and in
    lexicographic order within each length."""
    start = 0 if include_empty else 1
    basis = []
    for length in range(start, max_length + 1):
        basis.extend(itertools.product(range(d), repeat=length))
    return basis


@dataclass
class GeneralHankelBlocks:
    """Hankel blocks over a prefix/suffix basis: values on uv, u i v, and u."""

    h: np.ndarray  # (B, B, p)
    h_plus: np.ndarray  # (B, d, B, p)
    h_minus: np.ndarray  # (B, p)
    basis: list = field(repr=False)
    d: int = 0


def assemble_general_blocks(hankels: dict, d: int, L: int, include_empty: bool) -> GeneralHankelBlocks:
    """Copy entries of the per-length Hankel tensors into basis-indexed blocks.

    ``hankels`` maps length l to the (estimated) Hankel tensor of order l+1;
    lengths 1..2L+1 are required, length 0 additionally when the basis
    includes the empty word.
    """
    basis = enumerate_basis(d, L, include_empty)
    p = hankels[1].shape[-1]
    sizes = [d**length for length in (range(0, L + 1) if include_empty else range(1, L + 1))]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    lengths = list(range(0, L + 1) if include_empty else range(1, L + 1))
    b = len(basis)

    h = np.zeros((b, b, p))
    h_plus = np.zeros((b, d, b, p))
    h_minus = np.zeros((b, p))
    for iu, lu in enumerate(lengths):
        ou, su = offsets[iu], sizes[iu]
        h_minus[ou : ou + su] = hankels[lu].reshape(su, p)
        for iv, lv in enumerate(lengths):
            ov, sv = offsets[iv], sizes[iv]
            h[ou : ou + su, ov : ov + sv] = hankels[lu + lv].reshape(su, sv, p)
            h_plus[ou : ou + su, :, ov : ov + sv] = hankels[lu + 1 + lv].reshape(
                su, d, sv, p
            )
    return GeneralHankelBlocks(h, h_plus, h_minus, basis, d)


def recover_rnn_general(blocks: GeneralHankelBlocks, rank: int) -> Linear2RNN:
    """Reconstruction formulas applied to basis-indexed Hankel blocks."""
    b, _, p = blocks.h.shape
    mat = blocks.h.reshape(b, b * p)
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    r = min(rank, s.size)
    p_factor, s_factor = u[:, :r], s[:r, None] * vt[:r]
    p_pinv = _guarded_pinv(p_factor, "prefix factor P")
    s_pinv = _guarded_pinv(s_factor, "suffix factor S")
    h0 = s_pinv.T @ blocks.h_minus.reshape(-1)
    omega = (p_pinv @ blocks.h_minus).T
    mid = blocks.h_plus.reshape(b, blocks.d, b * p)
    a = np.einsum("ra,aib,bs->ris", p_pinv, mid, s_pinv, optimize=True)
    return Linear2RNN(h0=h0, A=a, Omega=omega)


def spectral_learn_general(datasets, cfg: RecoveryConfig, L: int | None = None) -> SpectralLearnResult:
    """Learner over the length <= L basis, for targets whose equal-length
    Hankel matricization is rank deficient.

    ``datasets`` maps lengths 1..2L+1 (and optionally 0: empty-input
    examples, used for the empty-word basis element) to datasets.  Every
    required length must be present; the empty word is dropped from the basis
    when no length-0 data is given.
    """
    lengths = sorted(int(l) for l in datasets)
    include_empty = 0 in lengths
    positive = [l for l in lengths if l > 0]
    if L is None:
        L = (max(positive) - 1) // 2
    required = list(range(1, 2 * L + 2))
    if positive != required:
        raise ValueError(f"expected datasets for lengths {required}, got {positive}")
    d, _ = _check_dims(datasets)
    estimates = {l: estimate_hankel(datasets[l], cfg) for l in lengths}
    hankels = {l: est.dense() for l, est in estimates.items()}
    blocks = assemble_general_blocks(hankels, d, L, include_empty)
    mat = blocks.h.reshape(blocks.h.shape[0], -1)
    rank_estimate = numerical_rank(mat)
    _warn_rank(rank_estimate, cfg.rank, "the basis Hankel block")
    return _finalize(
        lambda: recover_rnn_general(blocks, cfg.rank),
        datasets,
        cfg,
        estimates,
        rank_estimate,
    )


def per_step_datasets(dataset: SequenceDataset, L: int) -> dict:
    """Split one per-step dataset into the fixed-length prefix datasets.

    Each sequence of length T >= 2L+1 with outputs at every step contributes
    one (length-l prefix, output at step l) example for every l in 1..2L+1.
    """
    if not dataset.per_step:
        raise ValueError("per_step_datasets needs per-step outputs")
    if dataset.length < 2 * L + 1:
        raise ValueError(
            f"sequences of length {dataset.length} are too short for L={L} "
            f"(need at least {2 * L + 1})"
        )
    out = {}
    for l in range(1, 2 * L + 2):
        out[l] = SequenceDataset(
            dataset.inputs[:, :l, :].copy(),
            dataset.outputs[:, l - 1, :].copy(),
            dict(dataset.metadata, length=l),
        )
    return out
