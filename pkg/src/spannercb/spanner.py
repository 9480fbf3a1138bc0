"""Approximate barycentric spanners by determinant local search.

A C-approximate barycentric spanner is a set of d actions such that every
embedding is a combination of theirs with coefficients in ``[-C, C]``.  The
uniform distribution over such a set is a ``C^2 d``-approximate G-optimal
design.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonTerminationError, RankDeficiencyError, SingularUpdateError
from .linalg import DesignMatrixState, WeightedDesign, exceeds
from .oracles import ActionSet, ContextView

INIT_DET_FLOOR = 1e-12
GUARD_SCALE = 50

# (theta) -> (action id, embedding used for the column, <embedding, theta>)
AbsArgmax = Callable[[np.ndarray], "tuple[int, np.ndarray, float]"]


@dataclass
class SpannerState:
    action_ids: list
    matrix_state: DesignMatrixState
    C: float
    iterations: int = 0
    det_history: list = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.matrix_state.d

    @property
    def det(self) -> float:
        return self.matrix_state.det

    @property
    def vectors(self) -> np.ndarray:
        """Spanner embeddings as rows."""
        return self.matrix_state.matrix.T.copy()

    def coefficients(self, embeddings: np.ndarray) -> np.ndarray:
        return self.matrix_state.coefficients(embeddings)

    def max_coefficient(self, embeddings: np.ndarray) -> float:
        return float(np.max(np.abs(self.coefficients(embeddings))))

    def copy(self) -> "SpannerState":
        return SpannerState(list(self.action_ids), self.matrix_state.copy(), self.C,
                            self.iterations, list(self.det_history))


def spanner_guard(d: int, C: float) -> int:
    """Largest number of while-loop passes tolerated before declaring a bug."""
    log_term = math.log(d) / math.log(C) if d > 1 else 0.0
    return int(GUARD_SCALE * d * log_term + GUARD_SCALE)


def _view_abs_argmax(view: ContextView) -> AbsArgmax:
    def search(theta: np.ndarray):
        a, value = view.argmax_abs(theta)
        return a, view.embed(a), value

    return search


def build_initial(search: AbsArgmax, d: int, C: float) -> SpannerState:
    """Greedy column-by-column determinant maximization starting from the identity."""
    state = DesignMatrixState.identity(d)
    ids = []
    for i in range(d):
        theta = state.det_functional(i)
        a, phi, value = search(theta)
        if abs(value) <= INIT_DET_FLOOR:
            raise RankDeficiencyError(
                f"embeddings do not span R^{d}: no action has a component outside the span of the first {i}"
            )
        try:
            state.replace(i, phi)
        except SingularUpdateError as exc:
            raise RankDeficiencyError(str(exc)) from exc
        ids.append(a)
    if abs(state.det) <= INIT_DET_FLOOR:
        raise RankDeficiencyError(f"initial spanner determinant {state.det:.3e} is numerically zero")
    return SpannerState(ids, state, C, det_history=[abs(state.det)])


def local_improve(sp: SpannerState, search: AbsArgmax, factor: float, guard: int) -> SpannerState:
    """Swap columns while some action grows ``|det|`` by ``factor``; restarts the scan after each swap.

    ``sp.iterations`` counts while-loop passes: accepted swaps plus the final
    pass that finds nothing.
    """
    state = sp.matrix_state
    d = state.d
    passes = 0
    while True:
        passes += 1
        if passes > guard:
            raise NonTerminationError(
                f"spanner search exceeded {guard} passes (d={d}, factor={factor:.4g})"
            )
        for i in range(d):
            theta = state.det_functional(i)
            a, phi, value = search(theta)
            if exceeds(value, factor, state.det):
                state.replace(i, phi)
                sp.action_ids[i] = a
                sp.det_history.append(abs(state.det))
                break
        else:
            break
    sp.iterations = passes
    return sp


def init_spanner(action_set: ActionSet, x=None, C: float = 2.0) -> SpannerState:
    view = action_set.bind(x)
    return build_initial(_view_abs_argmax(view), view.d, C)


def compute_spanner(action_set: ActionSet, x=None, C: float = 2.0,
                    init: Optional[SpannerState] = None) -> SpannerState:
    if C <= 1:
        raise ValueError(f"approximation factor must exceed 1, got {C}")
    view = action_set.bind(x)
    search = _view_abs_argmax(view)
    sp = build_initial(search, view.d, C) if init is None else init.copy()
    sp.C = C
    return local_improve(sp, search, C, spanner_guard(view.d, C))


def spanner_to_design(sp: SpannerState) -> WeightedDesign:
    return WeightedDesign.uniform(list(sp.action_ids), sp.vectors, name="uniform spanner design")


def local_search_init(action_set: ActionSet, x=None) -> tuple[SpannerState, float]:
    """C=2 spanner plus ``r = |det|^(1/d)``, the certificate the reweighted search starts from."""
    sp = compute_spanner(action_set, x, C=2.0)
    r = abs(sp.det) ** (1.0 / sp.d)
    return sp, min(r, 1.0)


def ball_init(action_set: ActionSet, radius: float, x=None) -> SpannerState:
    """Start from the actions embedded at ``radius * e_i`` when the set contains such a ball."""
    view = action_set.bind(x)
    d = view.d
    ids = []
    for i in range(d):
        target = np.zeros(d)
        target[i] = radius
        hits = np.flatnonzero(np.all(np.isclose(view.embeddings, target, atol=1e-12), axis=1))
        if hits.size == 0:
            raise ValueError(f"no action embedded at {radius} * e_{i}")
        ids.append(int(view.ids[hits[0]]))
    state = DesignMatrixState(view.embed_many(ids).T)
    return SpannerState(ids, state, 2.0, det_history=[abs(state.det)])


class SpannerCache:
    """Reuses one spanner per action set when embeddings ignore the context."""

    def __init__(self, C: float = 2.0):
        self.C = C
        self._cached: Optional[tuple[SpannerState, float]] = None
        self.recomputed = False

    def get(self, action_set: ActionSet, x) -> tuple[SpannerState, float]:
        if action_set.context_independent and self._cached is not None:
            self.recomputed = False
            return self._cached
        if self.C == 2.0:
            sp, r = local_search_init(action_set, x)
        else:
            sp = compute_spanner(action_set, x, self.C)
            r = min(1.0, abs(sp.det) ** (1.0 / sp.d))
        self.recomputed = True
        if action_set.context_independent:
            self._cached = (sp, r)
        return sp, r
