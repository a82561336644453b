"""Tensor-train representation and algorithms.

A tensor train stores an order-p tensor as a chain of 3-way cores; core ``k``
has shape ``(r_{k-1}, d_k, r_k)`` with boundary ranks ``r_0 = r_p = 1``.  The
entry at ``(i_1, ..., i_p)`` is the product of the matrices obtained by fixing
the middle index of each core.

Alongside the generic operations (dense conversion, SVD-based compression,
rounding, addition, scaling) this module implements the batch design tensors
used for Hankel recovery from input/output sequences: the order-(l+1) tensor
whose slice ``i`` along the first mode is the Kronecker/outer product of the
``i``-th input sequence.  Such tensors admit an exact rank-M train with
diagonal cores, and applying them (or their adjoint) to a Hankel train never
materializes the underlying ``d**l``-sized arrays.
"""

from __future__ import annotations

from math import prod

import numpy as np

from .tensor_ops import as_tensor

__all__ = [
    "TensorTrain",
    "tt_svd",
    "tt_round",
    "tt_add",
    "tt_scale",
    "tt_inner",
    "tt_norm",
    "design_from_batch",
    "design_batch",
    "design_apply",
    "design_adjoint",
]

DEFAULT_SV_TOL = 1e-12


class TensorTrain:
    """Immutable-by-convention tensor train (list of 3-way cores)."""

    __slots__ = ("cores",)

    def __init__(self, cores):
        cores = [as_tensor(c) for c in cores]
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        for c in cores:
            if c.ndim != 3:
                raise ValueError(f"cores must be 3-way, got shape {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for left, right in zip(cores, cores[1:]):
            if left.shape[2] != right.shape[0]:
                raise ValueError(
                    f"adjacent core ranks mismatch: {left.shape} vs {right.shape}"
                )
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple:
        """Internal bond dimensions ``(r_1, ..., r_{p-1})``."""
        return tuple(c.shape[2] for c in self.cores[:-1])

    @classmethod
    def zeros(cls, shape) -> "TensorTrain":
        """Rank-1 train representing the all-zero tensor of ``shape``."""
        return cls([np.zeros((1, int(d), 1)) for d in shape])

    @classmethod
    def from_vectors(cls, vectors) -> "TensorTrain":
        """Rank-1 train for the outer product of the given vectors."""
        return cls([as_tensor(v).reshape(1, -1, 1) for v in vectors])

    def to_dense(self) -> np.ndarray:
        """Materialize the represented tensor as a dense array."""
        out = self.cores[0].reshape(self.cores[0].shape[1], -1)
        for core in self.cores[1:]:
            r_prev, d, r_next = core.shape
            out = out @ core.reshape(r_prev, d * r_next)
            out = out.reshape(-1, r_next)
        return out.reshape(self.shape)

    def __repr__(self) -> str:  # pragma: no cover
        return f"TensorTrain(shape={self.shape}, ranks={self.ranks})"


def _truncation_rank(s: np.ndarray, max_rank: int, tol: float) -> int:
    """Number of singular values to keep: at most ``max_rank``, above ``tol``
    relative to the largest one, and at least 1 to keep the chain valid."""
    if s.size == 0 or s[0] <= 0.0:
        return 1
    significant = int(np.count_nonzero(s > tol * s[0]))
    return max(1, min(int(max_rank), significant))


def tt_svd(t, max_rank: int, tol: float = DEFAULT_SV_TOL) -> TensorTrain:
    """Sequential-SVD compression of a dense tensor into a tensor train.

    Exact (up to floating point) when ``t`` has train rank at most
    ``max_rank``; otherwise each sweep step keeps the leading singular
    directions, which is the standard quasi-optimal truncation.
    """
    t = as_tensor(t)
    if t.ndim < 1:
        raise ValueError("tt_svd needs a tensor of order >= 1")
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    dims = t.shape
    cores = []
    rank = 1
    rest = t.reshape(1, -1)
    for k in range(len(dims) - 1):
        rest = rest.reshape(rank * dims[k], -1)
        u, s, vt = np.linalg.svd(rest, full_matrices=False)
        r_new = _truncation_rank(s, max_rank, tol)
        cores.append(u[:, :r_new].reshape(rank, dims[k], r_new))
        rest = s[:r_new, None] * vt[:r_new]
        rank = r_new
    cores.append(rest.reshape(rank, dims[-1], 1))
    return TensorTrain(cores)


def tt_round(tt: TensorTrain, max_rank: int, tol: float = DEFAULT_SV_TOL) -> TensorTrain:
    """Re-truncate a train to rank at most ``max_rank``.

    Right-to-left orthogonalization sweep followed by a left-to-right
    truncated-SVD sweep; exact when the effective train rank of the input is
    within budget.
    """
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    cores = [c.copy() for c in tt.cores]
    # Right-to-left: make every core except the first right-orthogonal.
    for k in range(len(cores) - 1, 0, -1):
        r_prev, d, r_next = cores[k].shape
        mat = cores[k].reshape(r_prev, d * r_next)
        q, r = np.linalg.qr(mat.T, mode="reduced")
        cores[k] = q.T.reshape(-1, d, r_next)
        cores[k - 1] = np.einsum("adb,cb->adc", cores[k - 1], r)
    # Left-to-right: truncate each unfolding.
    for k in range(len(cores) - 1):
        r_prev, d, r_next = cores[k].shape
        mat = cores[k].reshape(r_prev * d, r_next)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        r_new = _truncation_rank(s, max_rank, tol)
        cores[k] = u[:, :r_new].reshape(r_prev, d, r_new)
        carry = s[:r_new, None] * vt[:r_new]
        cores[k + 1] = np.einsum("ab,bdc->adc", carry, cores[k + 1])
    return TensorTrain(cores)


def tt_add(a: TensorTrain, b: TensorTrain) -> TensorTrain:
    """Elementwise sum; bond ranks add (block-diagonal cores)."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.order == 1:
        return TensorTrain([a.cores[0] + b.cores[0]])
    cores = []
    for k, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        if k == 0:
            cores.append(np.concatenate([ca, cb], axis=2))
        elif k == a.order - 1:
            cores.append(np.concatenate([ca, cb], axis=0))
        else:
            ra0, d, ra1 = ca.shape
            rb0, _, rb1 = cb.shape
            block = np.zeros((ra0 + rb0, d, ra1 + rb1))
            block[:ra0, :, :ra1] = ca
            block[ra0:, :, ra1:] = cb
            cores.append(block)
    return TensorTrain(cores)


def tt_scale(a: TensorTrain, c: float) -> TensorTrain:
    """Train representing ``c`` times the tensor of ``a``.

    Unscaled cores are shared with the input, not copied; trains are treated
    as immutable throughout the package.
    """
    return TensorTrain([a.cores[0] * float(c)] + a.cores[1:])


def tt_inner(a: TensorTrain, b: TensorTrain) -> float:
    """Frobenius inner product of the represented tensors, in train form."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    msg = np.ones((1, 1))
    for ca, cb in zip(a.cores, b.cores):
        msg = np.einsum("ac,adb,cde->be", msg, ca, cb, optimize=True)
    return float(msg[0, 0])


def tt_norm(a: TensorTrain) -> float:
    """Frobenius norm of the represented tensor."""
    return float(np.sqrt(max(tt_inner(a, a), 0.0)))


# ---------------------------------------------------------------------------
# Batch design tensors


def design_from_batch(batch) -> TensorTrain:
    """Train of the order-(l+1) design tensor for a batch of input sequences.

    ``batch`` is a sequence of M input sequences, each an ``(l, d)`` array (or
    list of l vectors in R^d).  The represented tensor has shape
    ``(M, d, ..., d)`` and slice ``i`` along the first mode equals the outer
    product of the i-th sequence.  Cores: an identity first core, then
    diagonal cores carrying the input vectors, giving ranks at most M.
    """
    arrays = [np.atleast_2d(as_tensor(seq)) for seq in batch]
    if not arrays:
        raise ValueError("design_from_batch needs at least one sequence")
    length, d = arrays[0].shape
    if length < 1:
        raise ValueError("design sequences must have length >= 1")
    for seq in arrays:
        if seq.shape != (length, d):
            raise ValueError(
                f"inconsistent sequence shapes: {seq.shape} vs {(length, d)}"
            )
    x = np.stack(arrays)  # (M, l, d)
    m = x.shape[0]
    cores = [np.eye(m).reshape(1, m, m)]
    for k in range(length - 1):
        core = np.zeros((m, d, m))
        core[np.arange(m), :, np.arange(m)] = x[:, k, :]
        cores.append(core)
    cores.append(x[:, length - 1, :].reshape(m, d, 1))
    return TensorTrain(cores)


def design_batch(design: TensorTrain) -> np.ndarray:
    """Recover the ``(M, l, d)`` input batch from a canonical design train.

    Inverse of :func:`design_from_batch`; raises if the cores do not have the
    identity-then-diagonal structure that constructor produces.
    """
    first = design.cores[0]
    m = first.shape[1]
    if first.shape != (1, m, m) or not np.array_equal(first[0], np.eye(m)):
        raise ValueError("design train does not start with an identity core")
    length = design.order - 1
    d = design.cores[1].shape[1]
    x = np.empty((m, length, d))
    for k in range(1, design.order - 1):
        core = design.cores[k]
        if core.shape != (m, d, m):
            raise ValueError(f"unexpected design core shape {core.shape}")
        x[:, k - 1, :] = core[np.arange(m), :, np.arange(m)]
        check = np.zeros_like(core)
        check[np.arange(m), :, np.arange(m)] = x[:, k - 1, :]
        if not np.array_equal(check, core):
            raise ValueError("design core is not diagonal in its rank indices")
    last = design.cores[-1]
    if last.shape != (m, d, 1):
        raise ValueError(f"unexpected design core shape {last.shape}")
    x[:, length - 1, :] = last[:, :, 0]
    return x


def design_apply(design: TensorTrain, hankel: TensorTrain) -> np.ndarray:
    """Measurements ``(M, p)``: contract each design slice with the Hankel train.

    Equals ``reshape_group(dense(design), [1, l]) @ reshape_group(dense(hankel),
    [l, 1])`` but is computed core by core, with cost polynomial in the batch
    size, ranks, mode dimension and length.
    """
    x = design_batch(design)
    m, length, d = x.shape
    if hankel.order != length + 1:
        raise ValueError(
            f"hankel order {hankel.order} does not match design length {length}"
        )
    if any(c.shape[1] != d for c in hankel.cores[:-1]):
        raise ValueError("hankel input dimensions do not match the design")
    msg = np.ones((m, 1))
    for k in range(length):
        msg = np.einsum("mc,cde,md->me", msg, hankel.cores[k], x[:, k, :], optimize=True)
    return msg @ hankel.cores[-1][:, :, 0]


def design_adjoint(design: TensorTrain, residual) -> TensorTrain:
    """Train of the adjoint measurement ``sum_i x_1^i (x) ... (x) x_l^i (x) r_i``.

    ``residual`` has shape ``(M, p)``; the result has shape
    ``(d, ..., d, p)`` and ranks at most M.
    """
    x = design_batch(design)
    residual = np.atleast_2d(as_tensor(residual))
    m, length, d = x.shape
    if residual.shape[0] != m:
        raise ValueError(f"residual rows {residual.shape[0]} != batch size {m}")
    cores = [x[:, 0, :].T.reshape(1, d, m)]
    for k in range(1, length):
        core = np.zeros((m, d, m))
        core[np.arange(m), :, np.arange(m)] = x[:, k, :]
        cores.append(core)
    cores.append(residual[:, :, None])
    return TensorTrain(cores)
