"""Evaluation metrics for stochastic ranking policies.

All four metrics are pure functions of a feasible policy, the relevance
matrix and the exposure vector.  The better-off/worse-off counts compare
item impacts against the uniform reference policy.
"""

from __future__ import annotations

import numpy as np

from .core import ExposureModel, RankingPolicy, RelevanceMatrix, uniform_policy
from .solver import _check_instance, impact


def user_utility(policy: RankingPolicy, relevance: RelevanceMatrix, exposure: ExposureModel) -> float:
    """Average per-user expected relevance-weighted exposure (larger is better)."""
    shape = policy.shape
    _check_instance(relevance, exposure, shape)
    x = policy.values[:, :, : shape.num_positions - 1]
    total = np.einsum("ui,k,uik->", relevance.values, exposure.values, x)
    return float(total / shape.num_users)


def mean_max_envy(policy: RankingPolicy, relevance: RelevanceMatrix, exposure: ExposureModel) -> float:
    """Average over items of the largest impact gain available by swapping
    allocations with any item (smaller is better, 0 means envy-free).

    The swap target ranges over all items including the item itself, so
    every per-item term is nonnegative.
    """
    shape = policy.shape
    _check_instance(relevance, exposure, shape)
    x = policy.values[:, :, : shape.num_positions - 1]
    # weighted allocation mass each user grants item j's slot
    alloc = np.einsum("ujk,k->uj", x, exposure.values)
    # cross[i, j] = impact item i would get from item j's allocation
    cross = relevance.values.T @ alloc
    envy = cross.max(axis=1) - np.diagonal(cross)
    return float(envy.mean())


def items_better_off(
    policy: RankingPolicy,
    relevance: RelevanceMatrix,
    exposure: ExposureModel,
    threshold: float = 0.10,
) -> float:
    """Fraction of items whose impact beats uniform by more than ``threshold``."""
    imp, imp_unif = _impact_vs_uniform(policy, relevance, exposure)
    return float(np.mean(imp > (1.0 + threshold) * imp_unif))


def items_worse_off(
    policy: RankingPolicy,
    relevance: RelevanceMatrix,
    exposure: ExposureModel,
    threshold: float = 0.10,
) -> float:
    """Fraction of items whose impact trails uniform by more than ``threshold``."""
    imp, imp_unif = _impact_vs_uniform(policy, relevance, exposure)
    return float(np.mean(imp < (1.0 - threshold) * imp_unif))


def _impact_vs_uniform(policy, relevance, exposure):
    shape = policy.shape
    imp = impact(policy, relevance, exposure)
    imp_unif = impact(uniform_policy(shape), relevance, exposure)
    return imp, imp_unif
