"""Shared domain types for stochastic ranking policies.

A ranking instance couples a relevance matrix (users x items), a position
exposure vector, and a position count ``m`` whose last slot is a dummy that
absorbs the items left unranked.  Policies are tensors of per-user doubly
stochastic matrices; this module owns their construction-time checks, the
feasibility validator and the uniform reference policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RELEVANCE_FLOOR = 1e-6
FEASIBILITY_TOL = 1e-6


class ShapeError(ValueError):
    """Tensor dimensions do not match the problem shape."""


class DomainError(ValueError):
    """A value is outside the mathematical domain of an operation."""


class StateError(RuntimeError):
    """A solver state object is missing data required by the operation."""


class SolverError(RuntimeError):
    """The solver failed to produce a usable result."""


def _readonly(values, dtype=np.float64):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProblemShape:
    """Instance dimensions: user count, item count and position count.

    ``num_positions`` includes the dummy last position, so feasible shapes
    need ``2 <= num_positions <= num_items`` (the dummy column mass
    ``num_items - num_positions + 1`` must stay strictly positive).
    """

    num_users: int
    num_items: int
    num_positions: int

    def __post_init__(self):
        for name in ("num_users", "num_items", "num_positions"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ShapeError(f"{name} must be a positive integer, got {v!r}")
        if self.num_positions < 2:
            raise ShapeError("num_positions must be >= 2 (one real slot plus the dummy)")
        if self.num_positions > self.num_items:
            raise ShapeError(
                "num_positions must be <= num_items so the dummy column mass "
                f"{self.num_items - self.num_positions + 1} stays positive"
            )

    @property
    def dummy_mass(self) -> int:
        """Mass of the dummy column: items minus real positions."""
        return self.num_items - self.num_positions + 1


@dataclass(frozen=True)
class RelevanceMatrix:
    """Dense user-by-item relevance scores, each in (0, 1].

    Strict positivity is required so that every item impact is positive and
    its logarithm finite; loaders clamp raw scores to ``RELEVANCE_FLOOR``.
    """

    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = _readonly(self.values)
        if arr.ndim != 2:
            raise ShapeError(f"relevance must be 2-d (users x items), got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("relevance contains non-finite entries")
        if arr.min() <= 0.0 or arr.max() > 1.0:
            raise DomainError("relevance entries must lie in (0, 1]")
        object.__setattr__(self, "values", arr)

    @property
    def num_users(self) -> int:
        return self.values.shape[0]

    @property
    def num_items(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ExposureModel:
    """Exposure probabilities of the real positions 1..m-1, non-increasing.

    The dummy position carries zero exposure and is not stored.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.values)
        if arr.ndim != 1 or arr.size < 1:
            raise ShapeError("exposure must be a 1-d vector of length m-1 >= 1")
        if not np.all(np.isfinite(arr)):
            raise DomainError("exposure contains non-finite entries")
        if arr.min() <= 0.0 or arr.max() > 1.0:
            raise DomainError("exposure entries must lie in (0, 1]")
        if np.any(np.diff(arr) > 0):
            raise DomainError("exposure must be non-increasing in position")
        object.__setattr__(self, "values", arr)

    @property
    def num_positions(self) -> int:
        """Position count m including the dummy."""
        return self.values.size + 1


@dataclass(frozen=True)
class RankingPolicy:
    """Stochastic ranking policy: a (users, items, positions) tensor.

    Each user slice is doubly stochastic up to the dummy column, whose mass
    is ``num_items - num_positions + 1``.  Construction only checks shape
    and finiteness; use :func:`validate_policy` for feasibility.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.values)
        if arr.ndim != 3:
            raise ShapeError(f"policy must be 3-d (users x items x positions), got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("policy contains non-finite entries")
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> ProblemShape:
        u, i, m = self.values.shape
        return ProblemShape(u, i, m)


@dataclass(frozen=True)
class CostTensor:
    """Transport costs, one (items x positions) matrix per user."""

    values: np.ndarray

    def __post_init__(self):
        arr = _readonly(self.values)
        if arr.ndim != 3:
            raise ShapeError(f"costs must be 3-d (users x items x positions), got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("costs contain non-finite entries")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters for the transport solver and the outer ascent loop.

    ``epsilon`` is the entropic regularization strength; ``grad_threshold``
    is the stopping threshold on the policy-gradient norm.  ``warm_start``
    lets the outer loop seed each Sinkhorn solve with the previous dual
    vector (the standalone solver always starts from zero duals).
    """

    epsilon: float = 0.1
    sinkhorn_max_iters: int = 500
    sinkhorn_tol: float = 1e-6
    outer_max_iters: int = 300
    grad_threshold: float = 1e-3
    adam_lr: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    warm_start: bool = True

    def __post_init__(self):
        if self.epsilon <= 0:
            raise DomainError("epsilon must be > 0")
        if self.sinkhorn_tol <= 0:
            raise DomainError("sinkhorn_tol must be > 0")
        if self.grad_threshold <= 0:
            raise DomainError("grad_threshold must be > 0")
        if self.sinkhorn_max_iters <= 0 or self.outer_max_iters <= 0:
            raise DomainError("iteration budgets must be positive")


@dataclass(frozen=True)
class ValidationReport:
    """Worst residual per constraint family, and the pass/fail verdict."""

    ok: bool
    row_residual: float
    col_residual: float
    dummy_residual: float
    negativity: float
    tol: float

    @property
    def worst(self) -> float:
        return max(self.row_residual, self.col_residual, self.dummy_residual, self.negativity)


def uniform_policy(shape: ProblemShape) -> RankingPolicy:
    """Uniform reference policy: every item equally likely at every real position.

    Entries are ``1/num_items`` for real positions and
    ``dummy_mass/num_items`` for the dummy column, which satisfies the
    doubly stochastic constraints exactly.
    """
    n, m = shape.num_items, shape.num_positions
    x = np.empty((shape.num_users, n, m))
    x[:, :, : m - 1] = 1.0 / n
    x[:, :, m - 1] = shape.dummy_mass / n
    return RankingPolicy(x)


def validate_policy(policy: RankingPolicy, shape: ProblemShape, tol: float = FEASIBILITY_TOL) -> ValidationReport:
    """Check the doubly stochastic constraints of a policy.

    Four residual families are evaluated in the max norm: row sums against 1,
    real-position column sums against 1, dummy column sums against
    ``shape.dummy_mass``, and negativity.  ``ok`` is true iff all four are
    within ``tol``.

    Raises
    ------
    ShapeError
        If the policy tensor does not match ``shape``.
    """
    x = policy.values
    expected = (shape.num_users, shape.num_items, shape.num_positions)
    if x.shape != expected:
        raise ShapeError(f"policy has shape {x.shape}, expected {expected}")
    m = shape.num_positions
    row = float(np.abs(x.sum(axis=2) - 1.0).max())
    col = float(np.abs(x[:, :, : m - 1].sum(axis=1) - 1.0).max())
    dummy = float(np.abs(x[:, :, m - 1].sum(axis=1) - shape.dummy_mass).max())
    neg = float(max(0.0, -x.min()))
    ok = max(row, col, dummy, neg) <= tol
    return ValidationReport(ok, row, col, dummy, neg, tol)
