"""Contextual bandits with large linearly structured action spaces.

Exploration is driven by barycentric spanners computed through an exact
linear argmax oracle, so per-round cost does not grow with the number of
actions.
"""
from .errors import SpannerCBError
from .linalg import DesignMatrixState, WeightedDesign, design_norm
from .oracles import BilinearRegressor, FiniteActionSet, RidgeRegressor, load_embeddings_csv
from .policies import EpsilonGreedy, ExplorationDistribution, SpannerGreedy, SpannerIGW, SquareCB
from .simulator import EnvSpec, bootstrap_ci, make_linear_env, run_episode
from .spanner import compute_spanner, init_spanner, local_search_init, spanner_to_design

__all__ = [
    "SpannerCBError", "DesignMatrixState", "WeightedDesign", "design_norm",
    "BilinearRegressor", "FiniteActionSet", "RidgeRegressor", "load_embeddings_csv",
    "EpsilonGreedy", "ExplorationDistribution", "SpannerGreedy", "SpannerIGW", "SquareCB",
    "EnvSpec", "bootstrap_ci", "make_linear_env", "run_episode",
    "compute_spanner", "init_spanner", "local_search_init", "spanner_to_design",
]
