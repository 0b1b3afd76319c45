"""Reference ranking policies used as comparison points.

Both baselines are deterministic (0/1 placement probabilities) and feasible
by construction; ties are always broken toward the lower item index.
"""

from __future__ import annotations

import numpy as np

from .core import (
    ExposureModel,
    ProblemShape,
    RankingPolicy,
    RelevanceMatrix,
    RELEVANCE_FLOOR,
)
from .solver import _check_instance


def max_relevance_policy(relevance: RelevanceMatrix, shape: ProblemShape) -> RankingPolicy:
    """Rank items by descending relevance, independently per user.

    The top m-1 items occupy the real positions in relevance order; all
    remaining items go to the dummy position.
    """
    if relevance.values.shape != (shape.num_users, shape.num_items):
        from .core import ShapeError

        raise ShapeError(
            f"relevance shape {relevance.values.shape} does not match "
            f"({shape.num_users}, {shape.num_items})"
        )
    n_users, n_items, m = shape.num_users, shape.num_items, shape.num_positions
    order = np.argsort(-relevance.values, axis=1, kind="stable")
    x = np.zeros((n_users, n_items, m))
    users = np.arange(n_users)[:, None]
    x[users, order[:, : m - 1], np.arange(m - 1)[None, :]] = 1.0
    in_dummy = np.ones((n_users, n_items))
    in_dummy[users, order[:, : m - 1]] = 0.0
    x[:, :, m - 1] = in_dummy
    return RankingPolicy(x)


def nsw_greedy_policy(
    relevance: RelevanceMatrix, exposure: ExposureModel, shape: ProblemShape
) -> RankingPolicy:
    """Greedy welfare maximization, filling positions one at a time.

    For each real position (outer) and each user in index order (inner),
    the item not yet placed for that user with the largest welfare gain
    log(impact + relevance * exposure) - log(impact) is assigned, with
    accumulated impacts shared across all users and floored at the
    relevance floor so the first assignments are well defined.  Items a
    user never places end up in the dummy position.
    """
    _check_instance(relevance, exposure, shape)
    rel = relevance.values
    exp_vec = exposure.values
    n_users, n_items, m = shape.num_users, shape.num_items, shape.num_positions

    imp = np.zeros(n_items)
    position = np.full((n_users, n_items), m - 1, dtype=np.int64)
    taken = np.zeros((n_users, n_items), dtype=bool)
    for k in range(m - 1):
        for u in range(n_users):
            floored = np.maximum(imp, RELEVANCE_FLOOR)
            gain = np.log(floored + rel[u] * exp_vec[k]) - np.log(floored)
            gain[taken[u]] = -np.inf
            i = int(np.argmax(gain))
            position[u, i] = k
            taken[u, i] = True
            imp[i] += rel[u, i] * exp_vec[k]

    x = np.zeros((n_users, n_items, m))
    x[np.arange(n_users)[:, None], np.arange(n_items)[None, :], position] = 1.0
    return RankingPolicy(x)
