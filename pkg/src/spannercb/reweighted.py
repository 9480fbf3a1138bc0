"""Gap-reweighted embeddings, the line-search argmax over them, and their spanner.

Embeddings are shrunk by ``sqrt(1 + eta * gap(a))`` where ``gap`` is the
estimated reward shortfall against the greedy action.  Maximizing
``<phi_bar(a), theta>^2`` is reduced to unweighted argmax calls through

    X^2 / Y^2 = sup_eps (2 eps X - eps^2 Y^2),

evaluated on a geometric grid of ``eps`` values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Union

import numpy as np

from .errors import ConfigurationError, InvariantViolation
from .linalg import DesignMatrixState
from .oracles import ActionSet, ContextView
from .spanner import GUARD_SCALE, SpannerState, local_improve

GAP_SLACK = 1e-9
MAX_GRID = 10_000
IOTA_TIE = 1e-12


@dataclass
class ReweightingContext:
    x: object
    ghat: np.ndarray
    a_hat: int
    eta: float
    f_hat_a: float

    @classmethod
    def build(cls, view: ContextView, ghat: np.ndarray, eta: float, x=None) -> "ReweightingContext":
        ghat = np.asarray(ghat, dtype=float)
        a_hat = view.argmax(ghat)
        return cls(x, ghat, a_hat, float(eta), float(view.embed(a_hat) @ ghat))

    def gap(self, phi: np.ndarray) -> np.ndarray | float:
        """``f_hat(a_hat) - <phi, ghat>`` for one embedding or a stack of rows."""
        g = self.f_hat_a - np.asarray(phi, dtype=float) @ self.ghat
        if np.any(g < -GAP_SLACK):
            raise InvariantViolation(
                f"negative gap {float(np.min(g)):.3e}: action {self.a_hat} is not the greedy maximizer"
            )
        return np.maximum(g, 0.0)

    def scale(self, phi: np.ndarray) -> np.ndarray | float:
        return 1.0 / np.sqrt(1.0 + self.eta * self.gap(phi))


def reweight(rc: ReweightingContext, phi: np.ndarray) -> np.ndarray:
    """``phi / sqrt(1 + eta * gap)``, row-wise for stacked input."""
    phi = np.asarray(phi, dtype=float)
    s = rc.scale(phi)
    return phi * (s[:, None] if phi.ndim == 2 else s)


@dataclass(frozen=True)
class GridSpec:
    d: int
    eta: float
    r: float

    def __post_init__(self) -> None:
        if not 0 < self.r <= 1:
            raise ConfigurationError(f"initialization constant r must lie in (0, 1], got {self.r}")
        if self.eta <= 0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        if self.N > MAX_GRID:
            raise ConfigurationError(
                f"line-search grid of size {self.N} exceeds {MAX_GRID} (eta={self.eta:.3g}, r={self.r:.3g})"
            )

    @cached_property
    def N(self) -> int:
        val = self.d * math.log((2 * self.eta + 1) / self.r) / math.log(4 / 3)
        return max(1, math.ceil(val - 1e-12))

    @cached_property
    def points(self) -> np.ndarray:
        """Positive points ``(3/4)^i`` first, then their negatives."""
        pos = 0.75 ** np.arange(1, self.N + 1)
        return np.concatenate([pos, -pos])

    @cached_property
    def _coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        eps = self.points
        return 2.0 * eps[:, None], (eps ** 2 * self.eta)[:, None]


@lru_cache(maxsize=64)
def grid_for(d: int, eta: float, r: float) -> GridSpec:
    return GridSpec(d, eta, r)


def _as_view(source: Union[ActionSet, ContextView], x) -> ContextView:
    return source if isinstance(source, ContextView) else source.bind(x)


def igw_argmax(rc: ReweightingContext, theta: np.ndarray, grid: GridSpec,
               source: Union[ActionSet, ContextView]) -> tuple[int, np.ndarray, float]:
    """Approximate maximizer of ``<phi_bar(a), theta>^2`` using ``2N`` exact argmax calls.

    Returns ``(action, phi_bar(action), <phi_bar(action), theta>)``.
    """
    view = _as_view(source, rc.x)
    lin, quad = grid._coefficients
    thetas = lin * theta[None, :] + quad * rc.ghat[None, :]
    cands = view.argmax_many(thetas)
    if len(cands) == 0:
        raise InvariantViolation("line search produced no candidates")
    bars = reweight(rc, view.embed_many(cands))
    vals = bars @ theta
    iota = vals ** 2
    best = iota.max()
    k = int(np.flatnonzero(iota >= best * (1.0 - IOTA_TIE))[0])
    return int(cands[k]), bars[k], float(vals[k])


def reweighted_guard(d: int, eta: float, r: float) -> int:
    return int(GUARD_SCALE * d * math.log(max(math.e, eta / r)) + GUARD_SCALE)


def reweighted_spanner(rc: ReweightingContext, source: Union[ActionSet, ContextView], C: float,
                       init: SpannerState, r: float) -> SpannerState:
    """C-approximate spanner of the reweighted embeddings, seeded by an unweighted spanner.

    ``init`` must satisfy ``|det phi(init)| >= r^d``.  A swap is accepted when
    it grows ``|det phi_bar(S)|`` by ``sqrt(2) C / 2``.
    """
    if C <= math.sqrt(2):
        raise ValueError(f"approximation factor must exceed sqrt(2), got {C}")
    view = _as_view(source, rc.x)
    grid = grid_for(view.d, rc.eta, r)
    cols = reweight(rc, view.embed_many(init.action_ids))
    state = DesignMatrixState(cols.T)
    sp = SpannerState(list(init.action_ids), state, C, det_history=[abs(state.det)])

    def search(theta):
        return igw_argmax(rc, theta, grid, view)

    return local_improve(sp, search, math.sqrt(2) * C / 2, reweighted_guard(view.d, rc.eta, r))


def determinant_floor(d: int, eta: float, r: float) -> float:
    """Lower bound ``(r / sqrt(1 + 2 eta))^d`` on ``|det phi_bar(S)|`` throughout the search."""
    return (r / math.sqrt(1.0 + 2.0 * eta)) ** d
