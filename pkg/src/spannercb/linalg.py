"""Cached determinant/inverse of a square column matrix, and design norms.

A :class:`DesignMatrixState` holds the ``d x d`` matrix whose columns are the
embeddings of the current spanner, together with its inverse and determinant.
Replacing one column costs ``O(d^2)`` through the matrix determinant lemma and
the Sherman-Morrison formula.  Column indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg as sla

from .errors import RankDeficiencyError, SingularStateError, SingularUpdateError

DET_FLOOR = 1e-300
REFRESH_EVERY = 500
# "A >= c*B" comparisons on determinants use this relative slack.
TIE_GUARD = 1e-12


def exceeds(candidate: float, factor: float, current: float) -> bool:
    """Return ``|candidate| >= factor * |current|`` with a relative tie guard."""
    return abs(candidate) >= factor * abs(current) * (1.0 - TIE_GUARD)


class DesignMatrixState:
    """Columns, inverse and determinant of a square matrix, kept in sync.

    The state is refreshed from scratch every ``refresh_every`` rank-one
    updates to bound floating-point drift.
    """

    def __init__(self, columns: np.ndarray, refresh_every: int = REFRESH_EVERY):
        columns = np.array(columns, dtype=float)
        if columns.ndim != 2 or columns.shape[0] != columns.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {columns.shape}")
        self.matrix = columns
        self.refresh_every = refresh_every
        self.updates = 0
        self._recompute()

    @classmethod
    def identity(cls, d: int) -> "DesignMatrixState":
        return cls(np.eye(d))

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    def column(self, i: int) -> np.ndarray:
        return self.matrix[:, i]

    def copy(self) -> "DesignMatrixState":
        other = object.__new__(DesignMatrixState)
        other.matrix = self.matrix.copy()
        other.inverse = self.inverse.copy()
        other.det = self.det
        other.refresh_every = self.refresh_every
        other.updates = self.updates
        return other

    def _recompute(self) -> None:
        det = float(np.linalg.det(self.matrix))
        if not np.isfinite(det) or abs(det) <= DET_FLOOR:
            raise SingularStateError(f"matrix is singular (det={det:.3e})")
        self.det = det
        self.inverse = np.linalg.inv(self.matrix)

    def det_functional(self, i: int) -> np.ndarray:
        """Vector ``theta`` with ``<Y, theta> = det`` of the matrix whose column ``i`` is ``Y``."""
        if not 0 <= i < self.d:
            raise IndexError(f"column index {i} out of range for d={self.d}")
        if abs(self.det) < DET_FLOOR:
            raise SingularStateError(f"state is degenerate (det={self.det:.3e})")
        return self.det * self.inverse[i, :]

    def substituted_det(self, i: int, y: np.ndarray) -> float:
        return float(np.dot(self.det_functional(i), y))

    def replace(self, i: int, new_column: np.ndarray) -> "DesignMatrixState":
        """Replace column ``i`` in place; returns ``self``."""
        new_column = np.asarray(new_column, dtype=float)
        w = self.inverse @ new_column
        ratio = w[i]
        new_det = self.det * ratio
        if not np.isfinite(new_det) or abs(new_det) <= DET_FLOOR:
            raise SingularUpdateError(
                f"replacing column {i} would give det={new_det:.3e}"
            )
        row = self.inverse[i, :].copy()
        w[i] -= 1.0
        self.inverse -= np.outer(w / ratio, row)
        self.matrix[:, i] = new_column
        self.det = float(new_det)
        self.updates += 1
        if self.refresh_every and self.updates % self.refresh_every == 0:
            self._recompute()
        return self

    def coefficients(self, vectors: np.ndarray) -> np.ndarray:
        """Coordinates of each row of ``vectors`` in the column basis, row-wise."""
        return np.atleast_2d(vectors) @ self.inverse.T


@dataclass
class WeightedDesign:
    """A finitely supported distribution over embedding vectors."""

    action_ids: list
    probs: np.ndarray
    vectors: np.ndarray
    name: str = "design"
    _chol: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=float)
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if len(self.action_ids) != len(self.probs) or len(self.probs) != len(self.vectors):
            raise ValueError("support, probabilities and vectors must align")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, action_ids: Sequence, vectors: np.ndarray, name: str = "design") -> "WeightedDesign":
        n = len(action_ids)
        return cls(list(action_ids), np.full(n, 1.0 / n), vectors, name=name)

    @property
    def second_moment(self) -> np.ndarray:
        v = self.vectors
        m = (v * self.probs[:, None]).T @ v
        return 0.5 * (m + m.T)

    def _factor(self) -> tuple:
        if self._chol is None:
            v = self.second_moment
            try:
                chol = sla.cho_factor(v, lower=True)
            except np.linalg.LinAlgError as exc:
                raise RankDeficiencyError(f"{self.name}: second moment is singular") from exc
            eig = np.linalg.eigvalsh(v)
            if eig[0] <= 0 or eig[-1] / eig[0] > 1e12:
                raise RankDeficiencyError(
                    f"{self.name}: second moment is rank deficient "
                    f"(condition number {eig[-1] / max(eig[0], 1e-300):.3e})"
                )
            self._chol = chol
        return self._chol

    def norm(self, z: np.ndarray) -> np.ndarray | float:
        """``<z, V(q)^{-1} z>``; ``z`` may be a single vector or a stack of rows."""
        z = np.asarray(z, dtype=float)
        chol = self._factor()
        if z.ndim == 1:
            return float(max(0.0, z @ sla.cho_solve(chol, z)))
        sol = sla.cho_solve(chol, z.T)
        return np.maximum(0.0, np.einsum("ij,ji->i", z, sol))


def design_norm(design: WeightedDesign, z: np.ndarray):
    return design.norm(z)
