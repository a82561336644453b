"""Hankel tensor estimation from input/output sequence examples.

An example ``((x_1, ..., x_l), y)`` is a linear measurement of the length-l
Hankel tensor: ``y = reshape_group(H, [l, 1]).T @ (x_1 (x) ... (x) x_l)``.
Regrouping N examples gives the regression problem ``X @ H_mat = Y`` with
Kronecker-product rows, which this module solves five ways:

* least squares (minimum-norm solution of the Frobenius objective),
* nuclear-norm minimization of the balanced matricization subject to the
  measurement constraint (alternating projections with annealed
  singular-value soft-thresholding),
* iterative hard thresholding (projected gradient descent with a rank-R
  truncated SVD of the balanced matricization),
* its tensor-train variant (projection by train compression), and
* the tensor-train variant computed entirely in train format with
  minibatch gradients, which never materializes a ``d**l``-sized array.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from math import ceil, prod

import numpy as np

from .data import SequenceDataset
from .tensor_ops import as_tensor, reshape_group
from .tensor_train import (
    TensorTrain,
    design_adjoint,
    design_apply,
    design_from_batch,
    tt_add,
    tt_norm,
    tt_round,
    tt_scale,
    tt_svd,
)

__all__ = [
    "RegressionData",
    "RecoveryConfig",
    "HankelEstimate",
    "DivergenceError",
    "ConvergenceWarning",
    "METHODS",
    "build_design",
    "recover_least_squares",
    "recover_nuclear_norm",
    "recover_iht",
    "recover_tiht",
    "recover_tiht_tt",
    "estimate_hankel",
]

METHODS = ("least_squares", "nuclear_norm", "iht", "tiht", "tiht_tt")


class DivergenceError(RuntimeError):
    """Projected gradient iteration diverged (objective rose repeatedly)."""


class ConvergenceWarning(UserWarning):
    """An iterative solver returned its best iterate without converging."""


@dataclass
class RegressionData:
    """Design matrix with Kronecker-product rows and stacked outputs."""

    X: np.ndarray  # (N, d**l)
    Y: np.ndarray  # (N, p)
    length: int
    d: int
    p: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def tensor_shape(self) -> tuple:
        return (self.d,) * self.length + (self.p,)


@dataclass
class RecoveryConfig:
    """Knobs shared by the recovery methods.

    ``step=None`` selects the safe default 1 / sigma_max(X)^2, recomputed per
    minibatch for the train-format method.  ``noise_tol`` relaxes the
    nuclear-norm equality constraint to a residual ball (extension for noisy
    data; 0 keeps the exact constraint).
    """

    method: str = "least_squares"
    rank: int = 1
    step: float | None = None
    max_iters: int = 5000
    rel_tol: float = 1e-7
    minibatch: int | None = None
    seed: int = 0
    noise_tol: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.step is not None and self.step < 0:
            raise ValueError("step must be nonnegative")


@dataclass
class HankelEstimate:
    """Recovered Hankel tensor plus solver diagnostics."""

    tensor: np.ndarray | None
    tt: TensorTrain | None
    method: str
    length: int
    iterations: int
    converged: bool
    residual: float

    def dense(self) -> np.ndarray:
        return self.tensor if self.tensor is not None else self.tt.to_dense()


def build_design(dataset: SequenceDataset) -> RegressionData:
    """Rows of Kronecker products of each example's inputs, plus outputs.

    Length-0 datasets produce a single all-ones column (the empty Kronecker
    product), so the regression solves for the one Hankel entry f(empty).
    """
    if dataset.per_step:
        raise ValueError("build_design expects final-output examples")
    inputs, outputs = dataset.inputs, dataset.outputs
    n = dataset.n
    x = np.ones((n, 1))
    for t in range(dataset.length):
        x = np.einsum("na,nb->nab", x, inputs[:, t, :]).reshape(n, -1)
    return RegressionData(
        X=x, Y=outputs.copy(), length=dataset.length, d=dataset.d, p=dataset.p
    )


def _balanced_groups(length: int) -> list:
    """Split of the l input modes + output mode used by the rank projections."""
    front = ceil(length / 2)
    return [front, length - front + 1]


def _default_step(x: np.ndarray) -> float:
    smax = np.linalg.norm(x, 2)
    if smax <= 0.0:
        return 1.0
    return 1.0 / smax**2


def recover_least_squares(rd: RegressionData) -> np.ndarray:
    """Minimum-norm minimizer of ||X H_mat - Y||_F, reshaped to a tensor."""
    solution, *_ = np.linalg.lstsq(rd.X, rd.Y, rcond=None)
    return solution.reshape(rd.tensor_shape)


def _project_rank(tensor: np.ndarray, rank: int, length: int) -> np.ndarray:
    mat = reshape_group(tensor, _balanced_groups(length))
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    r = min(rank, s.size)
    return (u[:, :r] @ (s[:r, None] * vt[:r])).reshape(tensor.shape)


def _project_tt(tensor: np.ndarray, rank: int) -> np.ndarray:
    return tt_svd(tensor, rank).to_dense()


# An objective increase only counts toward divergence when it grows by this
# relative factor; approaching a noisy fixed point from below produces long
# runs of much smaller benign increases.
DIVERGENCE_GROWTH = 1e-3
DIVERGENCE_RISES = 10


def _iht_loop(rd: RegressionData, cfg: RecoveryConfig, project, callback):
    x, y = rd.X, rd.Y
    gamma = cfg.step if cfg.step is not None else _default_step(x)
    # Normal-equation form of the gradient map: one (d^l x d^l) product per
    # iteration instead of two N-row ones.
    xtx = x.T @ x
    xty = x.T @ y
    y_norm2 = float(np.linalg.norm(y) ** 2)
    estimate = np.zeros((x.shape[1], rd.p))
    objective_prev = np.inf
    rises = 0
    iterations = 0
    converged = False
    for iterations in range(1, cfg.max_iters + 1):
        updated = estimate + gamma * (xty - xtx @ estimate)
        tensor = project(updated.reshape(rd.tensor_shape))
        new = tensor.reshape(estimate.shape)
        if callback is not None:
            callback(iterations, tensor)
        objective = y_norm2 - 2.0 * float(np.sum(new * xty)) + float(
            np.sum(new * (xtx @ new))
        )
        rises = rises + 1 if objective > objective_prev * (1 + DIVERGENCE_GROWTH) else 0
        if rises >= DIVERGENCE_RISES:
            raise DivergenceError(
                f"objective rose for {rises} consecutive iterations "
                f"(iteration {iterations}, objective {objective:.3e}); "
                f"reduce the step size (gamma={gamma:.3e})"
            )
        objective_prev = objective
        change = np.linalg.norm(new - estimate)
        estimate = new
        if change <= cfg.rel_tol * max(np.linalg.norm(new), 1e-300):
            converged = True
            break
    return estimate.reshape(rd.tensor_shape), iterations, converged


def recover_iht(rd: RegressionData, cfg: RecoveryConfig, callback=None) -> np.ndarray:
    """Projected gradient descent with a hard rank-R matrix projection."""
    tensor, _, _ = _iht_loop(
        rd, cfg, lambda t: _project_rank(t, cfg.rank, rd.length), callback
    )
    return tensor


def recover_tiht(rd: RegressionData, cfg: RecoveryConfig, callback=None) -> np.ndarray:
    """Projected gradient descent with a train-rank-R projection."""
    tensor, _, _ = _iht_loop(rd, cfg, lambda t: _project_tt(t, cfg.rank), callback)
    return tensor


def recover_nuclear_norm(rd: RegressionData, cfg: RecoveryConfig) -> np.ndarray:
    """Approximate nuclear-norm minimizer subject to the measurements.

    Alternates (a) orthogonal projection onto the affine set of
    measurement-consistent tensors with (b) singular-value soft-thresholding
    of the balanced matricization, with a geometrically annealed threshold.
    When X has full column rank the affine set is a single point and the
    method reduces to least squares.  A positive ``noise_tol`` relaxes the
    constraint to a residual ball of that radius.
    """
    x, y = rd.X, rd.Y
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    keep = s > max(s[0], 0.0) * 1e-12 if s.size else s.astype(bool)
    full_column_rank = int(np.count_nonzero(keep)) == x.shape[1]
    u, s, vt = u[:, keep], s[keep], vt[keep]

    def affine_project(mat):
        residual = x @ mat - y
        res_norm = np.linalg.norm(residual)
        if cfg.noise_tol > 0.0:
            if res_norm <= cfg.noise_tol:
                return mat
            residual = residual * (1.0 - cfg.noise_tol / res_norm)
        return mat - vt.T @ ((u.T @ residual) / s[:, None])

    groups = _balanced_groups(rd.length)

    def shrink(mat, tau):
        balanced = reshape_group(mat.reshape(rd.tensor_shape), groups)
        ub, sb, vbt = np.linalg.svd(balanced, full_matrices=False)
        sb = np.maximum(sb - tau, 0.0)
        return (ub @ (sb[:, None] * vbt)).reshape(mat.shape)

    estimate = affine_project(np.zeros((x.shape[1], rd.p)))
    if full_column_rank and cfg.noise_tol == 0.0:
        # The measurement-consistent set is a single point; nothing to minimize.
        return estimate.reshape(rd.tensor_shape)
    tau = 0.2 * float(
        np.linalg.norm(reshape_group(estimate.reshape(rd.tensor_shape), groups), 2)
    )
    decay = 0.995
    converged = False
    for _ in range(cfg.max_iters):
        new = affine_project(shrink(estimate, tau))
        change = np.linalg.norm(new - estimate)
        estimate = new
        tau *= decay
        if change <= cfg.rel_tol * max(np.linalg.norm(new), 1e-300) and tau <= max(
            cfg.rel_tol, 1e-12
        ):
            converged = True
            break
    if not converged:
        warnings.warn(
            "nuclear-norm solver returned its best iterate before convergence",
            ConvergenceWarning,
            stacklevel=2,
        )
    return estimate.reshape(rd.tensor_shape)


def _minibatch_step(batch: np.ndarray) -> float:
    """1 / sigma_max^2 of the (never materialized) minibatch design matrix.

    Uses the factorization of Kronecker inner products: the Gram matrix of
    the design rows is the entrywise product over steps of per-step Gram
    matrices.
    """
    gram = np.ones((batch.shape[0], batch.shape[0]))
    for t in range(batch.shape[1]):
        gram *= batch[:, t, :] @ batch[:, t, :].T
    lam = float(np.linalg.eigvalsh(gram)[-1])
    if lam <= 0.0:
        return 1.0
    return 1.0 / lam


def recover_tiht_tt(
    dataset: SequenceDataset, cfg: RecoveryConfig, callback=None
) -> TensorTrain:
    """Train-format hard thresholding with minibatch gradient updates.

    The Hankel estimate lives in train format throughout; each iteration
    samples a minibatch, applies the design train and its adjoint to form the
    gradient, and rounds the updated train back to rank R.  Nothing of size
    ``d**length`` is ever allocated.
    """
    if dataset.per_step:
        raise ValueError("recover_tiht_tt expects final-output examples")
    if dataset.length < 1:
        raise ValueError("train-format recovery needs length >= 1")
    n = dataset.n
    batch_size = min(cfg.minibatch or n, n)
    if batch_size < 1:
        raise ValueError("minibatch size must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    shape = (dataset.d,) * dataset.length + (dataset.p,)
    estimate = TensorTrain.zeros(shape)
    full_batch = batch_size == n
    objective_prev = np.inf
    rises = 0
    for iteration in range(1, cfg.max_iters + 1):
        if full_batch:
            idx = np.arange(n)
        else:
            idx = rng.choice(n, size=batch_size, replace=False)
        xb = dataset.inputs[idx]
        yb = dataset.outputs[idx]
        design = design_from_batch(xb)
        gamma = cfg.step if cfg.step is not None else _minibatch_step(xb)
        residual = yb - design_apply(design, estimate)
        objective = float(np.mean(residual**2))
        rises = rises + 1 if objective > objective_prev * (1 + DIVERGENCE_GROWTH) else 0
        if rises >= DIVERGENCE_RISES:
            raise DivergenceError(
                f"objective rose for {rises} consecutive iterations "
                f"(iteration {iteration}, objective {objective:.3e})"
            )
        objective_prev = objective
        gradient = design_adjoint(design, residual)
        del design  # keeps peak memory to the rounding step's working set
        new = tt_round(tt_add(estimate, tt_scale(gradient, gamma)), cfg.rank)
        if callback is not None:
            callback(iteration, new)
        diff = tt_norm(tt_add(new, tt_scale(estimate, -1.0)))
        estimate = new
        if diff <= cfg.rel_tol * max(tt_norm(new), 1e-300):
            break
    return estimate


def estimate_hankel(dataset: SequenceDataset, cfg: RecoveryConfig) -> HankelEstimate:
    """Run the configured recovery method on one dataset, with diagnostics.

    Length-0 datasets reduce to estimating the single vector f(empty), where
    every method coincides with the least-squares mean.
    """
    iterations = [0]

    def count(it, _):
        iterations[0] = it

    method = cfg.method
    if dataset.length == 0:
        rd = build_design(dataset)
        tensor = recover_least_squares(rd)
        residual = _relative_residual(rd, tensor)
        return HankelEstimate(tensor, None, method, 0, 0, True, residual)
    if method == "tiht_tt":
        tt = recover_tiht_tt(dataset, cfg, callback=count)
        residual = _relative_residual_tt(dataset, tt)
        return HankelEstimate(
            None,
            tt,
            method,
            dataset.length,
            iterations[0],
            iterations[0] < cfg.max_iters,
            residual,
        )
    rd = build_design(dataset)
    if method == "least_squares":
        tensor = recover_least_squares(rd)
        converged = True
    elif method == "nuclear_norm":
        tensor = recover_nuclear_norm(rd, cfg)
        converged = True
    elif method == "iht":
        tensor = recover_iht(rd, cfg, callback=count)
        converged = iterations[0] < cfg.max_iters
    elif method == "tiht":
        tensor = recover_tiht(rd, cfg, callback=count)
        converged = iterations[0] < cfg.max_iters
    else:  # pragma: no cover - guarded by RecoveryConfig
        raise ValueError(f"unknown method {method!r}")
    residual = _relative_residual(rd, tensor)
    return HankelEstimate(
        tensor, None, method, dataset.length, iterations[0], converged, residual
    )


def _relative_residual(rd: RegressionData, tensor: np.ndarray) -> float:
    y_norm = np.linalg.norm(rd.Y)
    mat = tensor.reshape(-1, rd.p)
    res = np.linalg.norm(rd.X @ mat - rd.Y)
    return float(res / max(y_norm, 1e-300))


def _relative_residual_tt(dataset: SequenceDataset, tt: TensorTrain) -> float:
    design = design_from_batch(dataset.inputs)
    res = np.linalg.norm(design_apply(design, tt) - dataset.outputs)
    return float(res / max(np.linalg.norm(dataset.outputs), 1e-300))
