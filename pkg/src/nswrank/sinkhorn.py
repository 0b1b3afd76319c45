"""Entropic optimal transport solver with a reverse-mode derivative.

Each user's ranking matrix is the solution of a transport problem

    minimize  <C_u, X> + eps * sum_ik x_ik (log x_ik - 1)
    s.t.      X 1 = row marginal,  X^T 1 = column marginal,  X >= 0,

solved by Sinkhorn scaling in the log domain (logsumexp updates on the dual
vectors, so arbitrarily large ``C/eps`` ratios neither overflow nor
underflow).  The recorded dual iterates are enough to replay the whole
iteration sequence backwards, which gives the exact reverse-mode derivative
of the plan with respect to the cost matrix.

The optimality condition of the unconstrained problem is
``c_ik + eps * log x_ik = 0``, so ``cost_from_policy`` maps any strictly
positive feasible plan to a cost matrix whose solve reproduces it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, ShapeError, SolverConfig, StateError


@dataclass(frozen=True)
class Marginals:
    """Prescribed row and column masses of a transport plan.

    For a ranking plan the rows are items (mass 1 each) and the columns are
    positions (mass 1 for every real position, ``n - m + 1`` for the dummy),
    so both sides total the item count.
    """

    row: np.ndarray
    col: np.ndarray

    def __post_init__(self):
        row = np.array(self.row, dtype=np.float64, copy=True)
        col = np.array(self.col, dtype=np.float64, copy=True)
        if row.ndim != 1 or col.ndim != 1:
            raise ShapeError("marginals must be 1-d vectors")
        if row.min() <= 0.0 or col.min() <= 0.0:
            raise DomainError("marginals must be strictly positive")
        total = row.sum()
        if abs(col.sum() - total) > 1e-9 * max(1.0, total):
            raise DomainError("row and column marginals must have equal total mass")
        row.setflags(write=False)
        col.setflags(write=False)
        object.__setattr__(self, "row", row)
        object.__setattr__(self, "col", col)

    @classmethod
    def for_shape(cls, num_items: int, num_positions: int) -> "Marginals":
        """Ranking marginals: unit item rows, unit real positions, dummy remainder."""
        col = np.ones(num_positions)
        col[-1] = num_items - num_positions + 1
        return cls(np.ones(num_items), col)


@dataclass(frozen=True)
class SinkhornState:
    """Forward-pass record needed to reconstruct and differentiate a solve.

    ``log_v_iterates`` holds the column dual after every iteration; the row
    dual of any iteration is a deterministic function of the previous column
    dual and is recomputed during the backward pass, so it is not stored.
    """

    epsilon: float
    log_kernel: np.ndarray
    log_row: np.ndarray
    log_col: np.ndarray
    log_u: np.ndarray
    log_v: np.ndarray
    log_v_init: np.ndarray
    log_v_iterates: np.ndarray | None
    iterations_used: int
    converged: bool
    final_residual: float


def sinkhorn_solve(cost, marginals: Marginals, config: SolverConfig, record_iterates: bool = True):
    """Solve one entropically regularized transport problem.

    Parameters
    ----------
    cost : ndarray, shape (n, m)
        Finite transport costs.
    marginals : Marginals
        Strictly positive row and column mass vectors with equal totals.
    config : SolverConfig
        Uses ``epsilon``, ``sinkhorn_tol`` and ``sinkhorn_max_iters``.
    record_iterates : bool
        Keep per-iteration duals so :func:`sinkhorn_backward` can run.

    Returns
    -------
    plan : ndarray, shape (n, m)
        Strictly positive transport plan; marginal residuals are below
        ``config.sinkhorn_tol`` in the max norm when ``state.converged``.
    state : SinkhornState
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ShapeError(f"cost must be 2-d, got ndim={c.ndim}")
    if not np.all(np.isfinite(c)):
        raise DomainError("cost contains non-finite entries")
    n, m = c.shape
    if marginals.row.size != n or marginals.col.size != m:
        raise ShapeError(
            f"marginals ({marginals.row.size}, {marginals.col.size}) do not match cost shape {(n, m)}"
        )

    log_kernel = -c / config.epsilon
    log_row = np.log(marginals.row)
    log_col = np.log(marginals.col)
    log_v0 = np.zeros((1, m))
    res = _sinkhorn_batch(
        log_kernel[None, :, :],
        log_row,
        log_col,
        marginals.row,
        marginals.col,
        tol=config.sinkhorn_tol,
        max_iters=config.sinkhorn_max_iters,
        log_v_init=log_v0,
        record=record_iterates,
    )
    state = SinkhornState(
        epsilon=config.epsilon,
        log_kernel=log_kernel,
        log_row=log_row,
        log_col=log_col,
        log_u=res.log_u[0],
        log_v=res.log_v[0],
        log_v_init=log_v0[0],
        log_v_iterates=None if res.log_v_hist is None else res.log_v_hist[:, 0, :],
        iterations_used=res.iterations,
        converged=bool(res.converged[0]),
        final_residual=float(res.residual[0]),
    )
    return res.plan[0], state


def sinkhorn_backward(state: SinkhornState, grad_plan) -> np.ndarray:
    """Reverse-mode derivative of a recorded solve.

    Propagates an upstream gradient with respect to the plan back through
    the exact iteration sequence the forward pass executed, returning the
    gradient with respect to the cost matrix.

    Raises
    ------
    StateError
        If the solve ran with ``record_iterates=False``.
    """
    if state.log_v_iterates is None:
        raise StateError("solve was run without iterate recording; cannot differentiate")
    g = np.asarray(grad_plan, dtype=np.float64)
    if g.shape != state.log_kernel.shape:
        raise ShapeError(f"grad_plan has shape {g.shape}, expected {state.log_kernel.shape}")
    plan = np.exp(state.log_u[:, None] + state.log_kernel + state.log_v[None, :])
    grad_log_kernel = _sinkhorn_backward_batch(
        state.log_kernel[None, :, :],
        state.log_row,
        state.log_col,
        state.log_v_iterates[:, None, :],
        state.log_v_init[None, :],
        g[None, :, :],
        plan[None, :, :],
        state.log_u[None, :],
    )
    return grad_log_kernel[0] / (-state.epsilon)


def cost_from_policy(plan, epsilon: float) -> np.ndarray:
    """Cost matrix whose entropic transport solution is the given plan.

    Elementwise ``-epsilon * log(plan)``; requires a strictly positive plan.
    Works on a single (items x positions) matrix or a stacked policy tensor.
    """
    x = np.asarray(plan, dtype=np.float64)
    if epsilon <= 0:
        raise DomainError("epsilon must be > 0")
    if x.size == 0 or x.min() <= 0.0:
        raise DomainError("plan must be strictly positive to take its logarithm")
    return -epsilon * np.log(x)


@dataclass
class _BatchResult:
    plan: np.ndarray          # (B, n, m)
    log_u: np.ndarray         # (B, n)
    log_v: np.ndarray         # (B, m)
    log_v_hist: np.ndarray | None  # (T, B, m)
    iterations: int
    converged: np.ndarray     # (B,) bool
    residual: np.ndarray      # (B,)


def _sinkhorn_batch(log_kernel, log_row, log_col, row, col, tol, max_iters, log_v_init, record):
    """Run lock-step Sinkhorn iterations for a stack of cost matrices.

    All matrices share the marginals and iterate until every one of them has
    max-norm marginal residual <= tol (or the budget runs out).  Buffers are
    reused across iterations; the loop allocates only small (B, n) slices.
    """
    B, n, m = log_kernel.shape
    log_u = np.zeros((B, n))
    log_v = log_v_init.copy()
    hist = np.empty((max_iters, B, m)) if record else None
    work = np.empty((B, n, m))
    iters = max_iters
    residual = np.full(B, np.inf)
    for t in range(max_iters):
        # row dual: log_u = log_row - lse_k(log_kernel + log_v)
        np.add(log_kernel, log_v[:, None, :], out=work)
        mx = work.max(axis=2)
        np.subtract(work, mx[:, :, None], out=work)
        np.exp(work, out=work)
        s = work.sum(axis=2)
        np.log(s, out=s)
        log_u = log_row[None, :] - (s + mx)
        # column dual: log_v = log_col - lse_i(log_kernel + log_u)
        np.add(log_kernel, log_u[:, :, None], out=work)
        mx = work.max(axis=1)
        np.subtract(work, mx[:, None, :], out=work)
        np.exp(work, out=work)
        s = work.sum(axis=1)
        np.log(s, out=s)
        log_v = log_col[None, :] - (s + mx)
        if record:
            hist[t] = log_v
        # feasibility of the reconstructed plan, checked every iteration
        np.add(log_kernel, log_u[:, :, None], out=work)
        np.add(work, log_v[:, None, :], out=work)
        np.exp(work, out=work)
        row_res = np.abs(work.sum(axis=2) - row[None, :]).max(axis=1)
        col_res = np.abs(work.sum(axis=1) - col[None, :]).max(axis=1)
        residual = np.maximum(row_res, col_res)
        if residual.max() <= tol:
            iters = t + 1
            break
    return _BatchResult(
        plan=work.copy(),
        log_u=log_u,
        log_v=log_v,
        log_v_hist=None if hist is None else hist[:iters].copy(),
        iterations=iters,
        converged=residual <= tol,
        residual=residual,
    )


def _sinkhorn_backward_batch(log_kernel, log_row, log_col, log_v_hist, log_v_init, grad_plan, plan, log_u_final):
    """Reverse-mode sweep over the recorded iterations of a batched solve.

    Returns the gradient with respect to ``log_kernel``.  At iteration t the
    two dual updates have softmax Jacobians; both softmaxes are recomputed
    from the stored column duals (the plan after t equals
    ``exp(log_u_t + log_kernel + log_v_t)``, so dividing by the marginals
    yields the softmax weights directly).
    """
    B, n, m = log_kernel.shape
    T = log_v_hist.shape[0]
    work = np.empty((B, n, m))

    # output layer: plan = exp(log_u_T + log_kernel + log_v_T)
    np.multiply(grad_plan, plan, out=work)
    grad_kernel = work.copy()
    g_u = work.sum(axis=2)
    g_v = work.sum(axis=1)

    log_u_t = log_u_final
    for t in range(T, 0, -1):
        log_v_t = log_v_hist[t - 1]
        log_v_prev = log_v_hist[t - 2] if t >= 2 else log_v_init
        # column-dual update v_t = log_col - lse_i(kernel + u_t):
        # d v_t[k] / d u_t[i] = d v_t[k] / d kernel[i,k] = -softmax_col[i,k]
        np.add(log_kernel, log_u_t[:, :, None], out=work)
        np.add(work, log_v_t[:, None, :], out=work)
        np.subtract(work, log_col[None, None, :], out=work)
        np.exp(work, out=work)
        np.multiply(work, g_v[:, None, :], out=work)
        grad_kernel -= work
        g_u -= work.sum(axis=2)
        # row-dual update u_t = log_row - lse_k(kernel + v_{t-1}):
        # d u_t[i] / d v_{t-1}[k] = d u_t[i] / d kernel[i,k] = -softmax_row[i,k]
        np.add(log_kernel, log_v_prev[:, None, :], out=work)
        np.add(work, log_u_t[:, :, None], out=work)
        np.subtract(work, log_row[None, :, None], out=work)
        np.exp(work, out=work)
        np.multiply(work, g_u[:, :, None], out=work)
        grad_kernel -= work
        g_v = -work.sum(axis=1)
        g_u = np.zeros((B, n))
        if t >= 2:
            # replay u_{t-1} from v_{t-2} for the next level's softmaxes
            np.add(log_kernel, (log_v_hist[t - 3] if t >= 3 else log_v_init)[:, None, :], out=work)
            mx = work.max(axis=2)
            np.subtract(work, mx[:, :, None], out=work)
            np.exp(work, out=work)
            s = work.sum(axis=2)
            np.log(s, out=s)
            log_u_t = log_row[None, :] - (s + mx)
    return grad_kernel
