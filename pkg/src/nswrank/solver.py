"""Nash social welfare maximization over stochastic ranking policies.

The welfare of a policy is the summed logarithm of per-item impacts, where
an item's impact is its relevance-weighted expected exposure over all users
and real positions.  The maximizer runs gradient ascent in the space of
per-user transport cost matrices: every ascent step solves the entropic
transport problem for all users at once, pulls the welfare gradient back
through the recorded Sinkhorn iterations, and applies an Adam update to the
costs.  Any strictly positive feasible policy is representable by some cost
tensor, so the reparameterization loses no optima.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DomainError,
    ExposureModel,
    ProblemShape,
    RankingPolicy,
    RelevanceMatrix,
    ShapeError,
    SolverConfig,
    SolverError,
    uniform_policy,
)
from .sinkhorn import Marginals, _sinkhorn_backward_batch, _sinkhorn_batch


def _check_instance(relevance: RelevanceMatrix, exposure: ExposureModel, shape: ProblemShape):
    if relevance.values.shape != (shape.num_users, shape.num_items):
        raise ShapeError(
            f"relevance shape {relevance.values.shape} does not match "
            f"({shape.num_users}, {shape.num_items})"
        )
    if exposure.num_positions != shape.num_positions:
        raise ShapeError(
            f"exposure is for m={exposure.num_positions}, shape has m={shape.num_positions}"
        )


def impact(policy: RankingPolicy, relevance: RelevanceMatrix, exposure: ExposureModel) -> np.ndarray:
    """Expected impact per item: sum over users and real positions of
    relevance * exposure * placement probability.  The dummy position
    contributes nothing."""
    shape = policy.shape
    _check_instance(relevance, exposure, shape)
    x = policy.values
    return np.einsum("ui,k,uik->i", relevance.values, exposure.values, x[:, :, : shape.num_positions - 1])


def nsw_objective(impacts) -> float:
    """Log Nash social welfare: sum of log impacts.

    Raises DomainError if any impact is nonpositive (welfare would be
    undefined; the product form is zero or negative).
    """
    imp = np.asarray(impacts, dtype=np.float64)
    if imp.size == 0 or imp.min() <= 0.0:
        raise DomainError("impacts must be strictly positive")
    return float(np.log(imp).sum())


def nsw_gradient_wrt_policy(
    policy: RankingPolicy, relevance: RelevanceMatrix, exposure: ExposureModel
) -> np.ndarray:
    """Gradient of the welfare with respect to every policy entry.

    Equals relevance * exposure / impact at real positions and zero at the
    dummy position.
    """
    shape = policy.shape
    _check_instance(relevance, exposure, shape)
    imp = impact(policy, relevance, exposure)
    if imp.min() <= 0.0:
        raise DomainError("impacts must be strictly positive to differentiate the welfare")
    grad = np.zeros_like(policy.values)
    _welfare_gradient(relevance.values, exposure.values, imp, out=grad)
    return grad


def _welfare_gradient(rel, exp_vec, imp, out):
    m1 = exp_vec.size
    np.multiply(rel[:, :, None], exp_vec[None, None, :], out=out[:, :, :m1])
    out[:, :, :m1] /= imp[None, :, None]


@dataclass
class AdamState:
    """First/second moment accumulators for the cost-tensor update."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), step=0)


def adam_update(params, grads, state: AdamState, config: SolverConfig):
    """One Adam ascent step (parameters move to increase the objective).

    Standard exponential moving averages with bias correction:
    step = lr * m_hat / (sqrt(v_hat) + eps).
    """
    g = np.asarray(grads, dtype=np.float64)
    p = np.asarray(params, dtype=np.float64)
    if g.shape != p.shape or g.shape != state.m.shape:
        raise ShapeError("params, grads and state must share one shape")
    b1, b2 = config.adam_beta1, config.adam_beta2
    step = state.step + 1
    m = b1 * state.m + (1.0 - b1) * g
    v = b2 * state.v + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    updated = p + config.adam_lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return updated, AdamState(m=m, v=v, step=step)


@dataclass
class SolveTrace:
    """Per-outer-iteration diagnostics of the ascent loop."""

    objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    sinkhorn_iterations: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.objective)


def solve_fair_ranking(
    relevance: RelevanceMatrix,
    exposure: ExposureModel,
    shape: ProblemShape,
    config: SolverConfig,
):
    """Maximize the log Nash social welfare over feasible ranking policies.

    Ascent runs on the per-user transport cost tensor, initialized so that
    its transport solution is exactly the uniform policy.  Each iteration
    solves all users' transport problems (one batched log-domain Sinkhorn
    pass), evaluates the welfare and its policy gradient, stops if the
    gradient norm over real positions falls below ``config.grad_threshold``,
    and otherwise backpropagates through the recorded iterations and takes
    an Adam step on the costs.  With ``config.warm_start`` the column duals
    of the previous iteration seed the next solve.

    Returns the feasible policy of the best iterate (the final one whenever
    ascent is monotone, and never worse than the uniform start) together
    with the iteration trace.

    Raises
    ------
    SolverError
        If more than half the users fail to reach the Sinkhorn tolerance on
        any outer iteration.
    DomainError
        If any item impact becomes nonpositive (cannot occur for strictly
        positive relevance).
    """
    _check_instance(relevance, exposure, shape)
    rel = relevance.values
    exp_vec = exposure.values
    n_users, n_items, m = shape.num_users, shape.num_items, shape.num_positions
    marginals = Marginals.for_shape(n_items, m)
    log_row = np.log(marginals.row)
    log_col = np.log(marginals.col)

    uniform = uniform_policy(shape).values
    cost = -config.epsilon * np.log(uniform)  # Sinkhorn solution of this cost is uniform
    adam = AdamState.zeros(cost.shape)
    log_v_init = np.zeros((n_users, m))
    log_kernel = np.empty_like(cost)
    grad_x = np.zeros_like(cost)

    trace = SolveTrace()
    best_objective = -np.inf
    best_plan = None
    for _ in range(config.outer_max_iters):
        tic = time.perf_counter()
        np.multiply(cost, -1.0 / config.epsilon, out=log_kernel)
        fwd = _sinkhorn_batch(
            log_kernel,
            log_row,
            log_col,
            marginals.row,
            marginals.col,
            tol=config.sinkhorn_tol,
            max_iters=config.sinkhorn_max_iters,
            log_v_init=log_v_init,
            record=True,
        )
        frac_failed = 1.0 - float(fwd.converged.mean())
        if frac_failed > 0.5:
            raise SolverError(
                f"Sinkhorn failed to converge for {frac_failed:.0%} of users "
                f"within {config.sinkhorn_max_iters} iterations"
            )
        imp = np.einsum("ui,k,uik->i", rel, exp_vec, fwd.plan[:, :, : m - 1])
        if imp.min() <= 0.0:
            raise DomainError("item impact became nonpositive during the solve")
        objective = float(np.log(imp).sum())
        _welfare_gradient(rel, exp_vec, imp, out=grad_x)
        grad_norm = float(np.linalg.norm(grad_x[:, :, : m - 1]))

        trace.objective.append(objective)
        trace.grad_norm.append(grad_norm)
        trace.sinkhorn_iterations.append(fwd.iterations)
        trace.wall_time.append(time.perf_counter() - tic)
        if objective >= best_objective:
            best_objective = objective
            best_plan = fwd.plan
        if grad_norm <= config.grad_threshold:
            break
        if len(trace) == config.outer_max_iters:
            break

        grad_kernel = _sinkhorn_backward_batch(
            log_kernel,
            log_row,
            log_col,
            fwd.log_v_hist,
            log_v_init,
            grad_x,
            fwd.plan,
            fwd.log_u,
        )
        grad_cost = grad_kernel
        grad_cost *= -1.0 / config.epsilon
        cost, adam = adam_update(cost, grad_cost, adam, config)
        trace.wall_time[-1] = time.perf_counter() - tic
        if config.warm_start:
            log_v_init = fwd.log_v
    return RankingPolicy(best_plan), trace
