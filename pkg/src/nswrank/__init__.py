"""Impact-fair stochastic ranking policies via Nash social welfare maximization.

The library represents a ranking policy as one doubly stochastic matrix per
user (items by positions, with a dummy last position), scores a policy by
the summed log impact of every item, and maximizes that welfare by gradient
ascent on per-user transport cost matrices whose Sinkhorn solutions are the
policy.  Baseline policies, fairness metrics, dataset helpers and an
experiment CLI round out the package.

Submodules load lazily so the CLI can pin thread counts before numpy loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "core": (
        "ProblemShape",
        "RelevanceMatrix",
        "ExposureModel",
        "RankingPolicy",
        "CostTensor",
        "SolverConfig",
        "ValidationReport",
        "ShapeError",
        "DomainError",
        "StateError",
        "SolverError",
        "RELEVANCE_FLOOR",
        "uniform_policy",
        "validate_policy",
    ),
    "sinkhorn": (
        "Marginals",
        "SinkhornState",
        "sinkhorn_solve",
        "sinkhorn_backward",
        "cost_from_policy",
    ),
    "solver": (
        "AdamState",
        "SolveTrace",
        "adam_update",
        "impact",
        "nsw_objective",
        "nsw_gradient_wrt_policy",
        "solve_fair_ranking",
    ),
    "baselines": ("max_relevance_policy", "nsw_greedy_policy"),
    "metrics": ("user_utility", "mean_max_envy", "items_better_off", "items_worse_off"),
    "data": ("generate_synthetic", "load_sparse_relevance", "exposure_model", "SparseFormatError"),
    "experiments": ("run_experiment", "run_benchmark", "ConfigError"),
}

_ATTR_TO_MODULE = {name: module for module, names in _EXPORTS.items() for name in names}

__all__ = sorted(_ATTR_TO_MODULE) + ["__version__"]


def __getattr__(name):
    module_name = _ATTR_TO_MODULE.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
