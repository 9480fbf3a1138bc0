"""Action optimization and online regression oracles.

An :class:`ActionSet` maps a context to a :class:`ContextView`, which answers
``argmax_a <phi(x, a), theta>`` exactly with the lowest action id winning ties.
Regressors produce ``ghat(x)`` in R^d and learn from ``(x, phi(x, a), r)``.
"""
from __future__ import annotations

import csv
import math
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EmbeddingFormatError, RankDeficiencyError

NORM_SLACK = 1e-9


def project_unit_ball(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 1.0 else v


class ContextView:
    """Embeddings of a finite action set at one fixed context.

    Rows with identical embeddings are collapsed onto the lowest id before any
    optimization, so appending exact duplicates never changes what the argmax
    routines compute.
    """

    def __init__(self, ids: np.ndarray, embeddings: np.ndarray):
        self.ids = ids
        self.embeddings = embeddings
        self._pos = {int(a): k for k, a in enumerate(ids)}
        self._sorted = bool(np.all(np.diff(ids) > 0))
        # np.unique sorts rows; re-sort the representatives by first occurrence
        _, first, inverse = np.unique(embeddings, axis=0, return_index=True, return_inverse=True)
        order = np.argsort(first)
        self._unique_rows = first[order]
        self.unique = embeddings[self._unique_rows]
        self.unique_ids = ids[self._unique_rows]
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        self._row_to_unique = rank[np.ravel(inverse)]

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def position(self, a: int) -> int:
        return self._pos[int(a)]

    def embed(self, a: int) -> np.ndarray:
        return self.embeddings[self._pos[int(a)]]

    def positions(self, actions: Sequence[int]) -> np.ndarray:
        if self._sorted:
            return np.searchsorted(self.ids, np.asarray(actions, dtype=np.int64))
        return np.array([self._pos[int(a)] for a in actions], dtype=np.int64)

    def embed_many(self, actions: Sequence[int]) -> np.ndarray:
        return self.embeddings[self.positions(actions)]

    def canonical(self, a: int) -> int:
        """Lowest id sharing ``a``'s embedding."""
        return int(self.unique_ids[self._row_to_unique[self._pos[int(a)]]])

    def scores(self, theta: np.ndarray) -> np.ndarray:
        """``<phi(a), theta>`` for every action, evaluated the way argmax evaluates them."""
        return (self.unique @ np.asarray(theta, dtype=float))[self._row_to_unique]

    def argmax(self, theta: np.ndarray) -> int:
        if len(self.ids) == 0:
            raise ValueError("argmax over an empty action set")
        scores = self.unique @ np.asarray(theta, dtype=float)
        return int(self.unique_ids[int(np.argmax(scores))])

    def argmax_many(self, thetas: np.ndarray) -> np.ndarray:
        """One exact argmax per row of ``thetas``."""
        if len(self.ids) == 0:
            raise ValueError("argmax over an empty action set")
        scores = self.unique @ np.asarray(thetas, dtype=float).T
        return self.unique_ids[np.argmax(scores, axis=0)]

    def argmax_abs(self, theta: np.ndarray) -> tuple[int, float]:
        """Maximize ``|<phi, theta>|`` with two argmax calls (``+theta`` and ``-theta``)."""
        a_plus = self.argmax(theta)
        a_minus = self.argmax(-theta)
        v_plus = float(self.embed(a_plus) @ theta)
        v_minus = float(self.embed(a_minus) @ theta)
        if abs(v_minus) > abs(v_plus) or (abs(v_minus) == abs(v_plus) and a_minus < a_plus):
            return a_minus, v_minus
        return a_plus, v_plus


class ActionSet(ABC):
    """An action space with embedding map ``phi(x, a)`` and an exact linear argmax."""

    d: int
    context_independent: bool

    @abstractmethod
    def bind(self, x: Optional[np.ndarray]) -> ContextView:
        """Return the embeddings at context ``x``."""

    def argmax(self, x, theta: np.ndarray) -> int:
        return self.bind(x).argmax(theta)

    def embed(self, x, a: int) -> np.ndarray:
        return self.bind(x).embed(a)


class FiniteActionSet(ActionSet):
    """A finite action set given by an embedding table.

    Parameters
    ----------
    embeddings : (n, d) array
        ``phi(a)`` for each action; rows with Euclidean norm above 1 are rejected.
    ids : optional sequence of distinct ints
        Stable action ids; defaults to ``0..n-1``.  Rows are stored sorted by id.
    context_map : optional callable ``(x, E) -> E_x``
        Makes the embedding context dependent.  It must act row by row and keep
        ``||phi(x, a)|| <= 1``.
    """

    def __init__(
        self,
        embeddings: np.ndarray,
        ids: Optional[Sequence[int]] = None,
        context_map: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
    ):
        emb = np.array(embeddings, dtype=float)
        if emb.ndim != 2 or emb.shape[0] == 0:
            raise ValueError("embeddings must be a nonempty 2-d array")
        ids_arr = np.arange(emb.shape[0]) if ids is None else np.asarray(ids, dtype=np.int64)
        if len(np.unique(ids_arr)) != len(ids_arr):
            raise ValueError("action ids must be distinct")
        norms = np.linalg.norm(emb, axis=1)
        bad = np.flatnonzero(norms > 1.0 + NORM_SLACK)
        if bad.size:
            raise EmbeddingFormatError(
                f"embedding row {int(bad[0])} (action {int(ids_arr[bad[0]])}) has norm {norms[bad[0]]:.6f} > 1"
            )
        order = np.argsort(ids_arr, kind="stable")
        self.ids = ids_arr[order]
        self.embeddings = emb[order]
        self.d = emb.shape[1]
        self.context_map = context_map
        self.context_independent = context_map is None
        self._static_view: Optional[ContextView] = None

    def __len__(self) -> int:
        return len(self.ids)

    def bind(self, x=None) -> ContextView:
        if self.context_map is None:
            if self._static_view is None:
                self._static_view = ContextView(self.ids, self.embeddings)
            return self._static_view
        emb = np.asarray(self.context_map(x, self.embeddings), dtype=float)
        return ContextView(self.ids, emb)

    def with_duplicates(self, action_id: int, copies: int) -> "FiniteActionSet":
        """Append ``copies`` exact copies of an action under fresh ids."""
        pos = int(np.flatnonzero(self.ids == action_id)[0])
        start = int(self.ids.max()) + 1
        new_ids = np.concatenate([self.ids, np.arange(start, start + copies)])
        new_emb = np.vstack([self.embeddings, np.repeat(self.embeddings[pos : pos + 1], copies, axis=0)])
        return FiniteActionSet(new_emb, new_ids, self.context_map)


def enumeration_argmax(action_set: ActionSet, x, theta: np.ndarray) -> int:
    return action_set.bind(x).argmax(theta)


def load_embeddings_csv(path: str | Path) -> FiniteActionSet:
    """Read ``action_id,dim_0,...,dim_{d-1}`` rows into a :class:`FiniteActionSet`."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmbeddingFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        d = len(header) - 1
        expected = ["action_id"] + [f"dim_{k}" for k in range(d)]
        if d < 1 or header != expected:
            raise EmbeddingFormatError(f"{path}: header must be {','.join(expected[:3])},...")
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise EmbeddingFormatError(f"{path}: row {lineno} has {len(row)} fields, expected {d + 1}")
            try:
                ids.append(int(row[0]))
                vec = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}: row {lineno}: {exc}") from None
            if math.sqrt(sum(v * v for v in vec)) > 1.0 + NORM_SLACK:
                raise EmbeddingFormatError(f"{path}: row {lineno} (action {ids[-1]}) has norm > 1")
            rows.append(vec)
    if not rows:
        raise EmbeddingFormatError(f"{path}: no embedding rows")
    return FiniteActionSet(np.array(rows), ids)


def write_embeddings_csv(path: str | Path, action_set: FiniteActionSet) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["action_id"] + [f"dim_{k}" for k in range(action_set.d)])
        for a, row in zip(action_set.ids, action_set.embeddings):
            w.writerow([int(a)] + [repr(float(v)) for v in row])


def check_spans(view: ContextView, tol: float = 1e-12) -> None:
    if np.linalg.matrix_rank(view.unique, tol=tol) < view.d:
        raise RankDeficiencyError("action embeddings do not span R^d")


# ---------------------------------------------------------------------------
# Regression oracles
# ---------------------------------------------------------------------------


class Regressor(ABC):
    """Online square-loss regressor over ``f(x, a) = <phi(x, a), g(x)>``."""

    d: int

    def __init__(self) -> None:
        self.n_updates = 0
        self.clipped_rewards = 0
        self.cumulative_square_loss = 0.0

    @abstractmethod
    def predict(self, x) -> np.ndarray:
        """``ghat(x)``, projected onto the unit ball."""

    @abstractmethod
    def _learn(self, x, phi: np.ndarray, r: float) -> None: ...

    def update(self, x, phi: np.ndarray, r: float) -> None:
        phi = np.asarray(phi, dtype=float)
        if r > 1.0 or r < -1.0:
            self.clipped_rewards += 1
            r = min(1.0, max(-1.0, r))
        pred = float(phi @ self.predict(x))
        self.cumulative_square_loss += (pred - r) ** 2
        self._learn(x, phi, float(r))
        self.n_updates += 1

    def default_regsq(self, T: int) -> float:
        """Nominal square-loss regret ``(#params) * log T`` used by the schedules."""
        return self.n_params * math.log(max(T, 2))

    @property
    @abstractmethod
    def n_params(self) -> int: ...


def _context_vector(x, k: int) -> np.ndarray:
    if k == 1 and x is None:
        return np.ones(1)
    return np.asarray(x, dtype=float).reshape(k)


class RidgeRegressor(Regressor):
    """Regularized least squares for ``g(x) = W x`` (or ``g(x) = theta``).

    With ``context_dim=None`` the model is the linear special case and the
    context is ignored.  Otherwise the features are ``kron(phi, x)``.
    """

    def __init__(self, d: int, context_dim: Optional[int] = None, ridge: float = 1.0):
        super().__init__()
        self.d = d
        self.linear = context_dim is None
        self.k = 1 if context_dim is None else int(context_dim)
        dim = d * self.k
        self.ridge = ridge
        self.gram = ridge * np.eye(dim)
        self.target = np.zeros(dim)
        self._weights: Optional[np.ndarray] = np.zeros(dim)

    @property
    def n_params(self) -> int:
        return self.d * self.k

    def _features(self, x, phi: np.ndarray) -> np.ndarray:
        if self.linear:
            return phi
        return np.kron(phi, _context_vector(x, self.k))

    @property
    def weights(self) -> np.ndarray:
        if self._weights is None:
            self._weights = np.linalg.solve(self.gram, self.target)
        return self._weights

    def predict(self, x=None) -> np.ndarray:
        if self.linear:
            g = self.weights.copy()
        else:
            g = self.weights.reshape(self.d, self.k) @ _context_vector(x, self.k)
        return project_unit_ball(g)

    def _learn(self, x, phi, r) -> None:
        z = self._features(x, phi)
        self.gram += np.outer(z, z)
        self.target += r * z
        self._weights = None


class BilinearRegressor(Regressor):
    """``f(x, a) = <phi(a), W x>`` trained by SGD on ``(f - r)^2 / 2``.

    The step size at update ``t`` is ``step_size / sqrt(t)`` when ``decay`` is
    set.  Predictions are projected onto the unit ball; ``W`` itself is not.
    """

    def __init__(self, d: int, context_dim: int, step_size: float = 0.05, decay: bool = True):
        super().__init__()
        self.d = d
        self.k = context_dim
        self.step_size = step_size
        self.decay = decay
        self.W = np.zeros((d, context_dim))

    @property
    def n_params(self) -> int:
        return self.d * self.k

    def predict(self, x) -> np.ndarray:
        return project_unit_ball(self.W @ _context_vector(x, self.k))

    def loss(self, W: np.ndarray, x, phi: np.ndarray, r: float) -> float:
        return 0.5 * (float(phi @ W @ _context_vector(x, self.k)) - r) ** 2

    def gradient(self, x, phi: np.ndarray, r: float) -> np.ndarray:
        xv = _context_vector(x, self.k)
        resid = float(phi @ self.W @ xv) - r
        return resid * np.outer(phi, xv)

    def current_step(self) -> float:
        t = self.n_updates + 1
        return self.step_size / math.sqrt(t) if self.decay else self.step_size

    def _learn(self, x, phi, r) -> None:
        self.W = self.W - self.current_step() * self.gradient(x, phi, r)
