"""Dense tensor algebra on plain numpy arrays.

Tensors are numpy float64 arrays of any order (order 0 scalars and order 1
vectors included). One linearization convention, row-major (C) order, is used
by every reshaping operation in the package, so cross-operation identities
such as ``reshape_group(t, [t.ndim]) == vectorize(t)`` and the Kronecker
consistency of :func:`kron` with :func:`reshape_group` hold exactly.

Mode indices are 0-based.
"""

from __future__ import annotations

from functools import reduce
from math import prod

import numpy as np

__all__ = [
    "as_tensor",
    "matricize",
    "dematricize",
    "reshape_group",
    "mode_matrix_product",
    "mode_vector_product",
    "kron",
    "vectorize",
]


def as_tensor(t) -> np.ndarray:
    """Coerce input to a float64 ndarray."""
    return np.asarray(t, dtype=np.float64)


def _check_mode(t: np.ndarray, mode: int) -> None:
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for order-{t.ndim} tensor")


def matricize(t, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization: columns are the mode fibers of ``t``.

    Result has shape ``(t.shape[mode], prod(other dims))``; the column
    ordering is the C-order enumeration of the remaining modes.
    """
    t = as_tensor(t)
    _check_mode(t, mode)
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)


def dematricize(m, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`matricize` for a tensor of the given ``shape``."""
    m = as_tensor(m)
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    moved = (shape[mode],) + shape[:mode] + shape[mode + 1 :]
    if m.size != prod(shape):
        raise ValueError(f"matrix of size {m.size} does not fit shape {shape}")
    return np.moveaxis(m.reshape(moved), 0, mode)


def reshape_group(t, groups) -> np.ndarray:
    """Group consecutive modes of ``t`` into one mode each.

    ``groups`` lists how many consecutive modes go into each output mode and
    must sum to the order of ``t``.  Grouping all modes yields the
    vectorization; grouping as ``[1, order - 1]`` yields the mode-0
    matricization.
    """
    t = as_tensor(t)
    groups = [int(g) for g in groups]
    if any(g <= 0 for g in groups):
        raise ValueError(f"group sizes must be positive, got {groups}")
    if sum(groups) != t.ndim:
        raise ValueError(
            f"group sizes {groups} do not sum to tensor order {t.ndim}"
        )
    new_shape = []
    start = 0
    for g in groups:
        new_shape.append(prod(t.shape[start : start + g]))
        start += g
    return t.reshape(new_shape)


def mode_matrix_product(t, m, mode: int) -> np.ndarray:
    """Mode-``mode`` product of tensor ``t`` with matrix ``m``.

    Replaces dimension ``d_mode`` by ``m.shape[0]`` and satisfies
    ``matricize(result, mode) == m @ matricize(t, mode)``.
    """
    t = as_tensor(t)
    m = as_tensor(m)
    _check_mode(t, mode)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got order-{m.ndim} array")
    if m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix columns {m.shape[1]} != tensor dim {t.shape[mode]} at mode {mode}"
        )
    return np.moveaxis(np.tensordot(m, t, axes=(1, mode)), 0, mode)


def mode_vector_product(t, v, mode: int) -> np.ndarray:
    """Contract mode ``mode`` of ``t`` with vector ``v``; order drops by one."""
    t = as_tensor(t)
    v = as_tensor(v)
    _check_mode(t, mode)
    if v.ndim != 1 or v.shape[0] != t.shape[mode]:
        raise ValueError(
            f"vector of length {v.shape} does not match dim {t.shape[mode]} at mode {mode}"
        )
    return np.tensordot(t, v, axes=(mode, 0))


def kron(vs) -> np.ndarray:
    """Kronecker product of a non-empty list of vectors.

    The C-order convention makes ``kron([x1, ..., xl])`` the vectorization of
    the outer product ``x1 (x) ... (x) xl``, so contracting a tensor with the
    Kronecker product of vectors equals the chain of mode-vector products.
    """
    vs = [as_tensor(v) for v in vs]
    if not vs:
        raise ValueError("kron of an empty list of vectors is undefined")
    for v in vs:
        if v.ndim != 1:
            raise ValueError("kron expects 1-d vectors")
    return reduce(np.kron, vs)


def vectorize(t) -> np.ndarray:
    """Flatten ``t`` in the canonical (C) order."""
    return as_tensor(t).reshape(-1)
