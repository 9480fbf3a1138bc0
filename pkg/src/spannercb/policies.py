"""Exploration policies: spanner-based greedy and inverse-gap weighting, plus finite-action baselines.

Every policy exposes ``step(action_set, x, ghat, u)`` which builds the round's
sampling distribution from the regressor's prediction ``ghat`` and draws one
action with the single uniform ``u``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, NumericalError
from .oracles import ActionSet, ContextView
from .reweighted import ReweightingContext, reweighted_spanner
from .spanner import SpannerCache

PROB_TOL = 1e-9
LAMBDA_TOL = 1e-10
MAX_BISECTIONS = 100


@dataclass
class ExplorationDistribution:
    action_ids: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        self.action_ids = np.asarray(self.action_ids, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=float)
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > PROB_TOL:
            raise NumericalError(f"invalid distribution (sum={self.probs.sum():.12f}, min={self.probs.min():.3e})")

    @classmethod
    def from_atoms(cls, atoms: dict) -> "ExplorationDistribution":
        return cls(np.fromiter(atoms.keys(), dtype=np.int64, count=len(atoms)),
                   np.fromiter(atoms.values(), dtype=float, count=len(atoms)))

    def __len__(self) -> int:
        return len(self.action_ids)

    def prob(self, a: int) -> float:
        hit = self.action_ids == a
        return float(self.probs[hit].sum())

    def as_dict(self) -> dict:
        return {int(a): float(p) for a, p in zip(self.action_ids, self.probs)}

    def sample(self, u: float) -> int:
        """Inverse-CDF draw over the atoms in stored order."""
        return int(self.sample_many(np.array([u]))[0])

    def sample_many(self, us: np.ndarray) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        k = np.searchsorted(cdf, np.asarray(us) * cdf[-1], side="right")
        return self.action_ids[np.minimum(k, len(cdf) - 1)]


@dataclass
class StepResult:
    action: int
    distribution: ExplorationDistribution
    a_hat: int
    lam: float = float("nan")
    gamma: float = float("nan")
    spanner_recomputed: bool = False
    diagnostics: dict = field(default_factory=dict)


def _mix(atoms: dict, a: int, p: float) -> None:
    atoms[a] = atoms.get(a, 0.0) + p


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


@dataclass
class ScheduleConfig:
    T: int
    d: int
    C_opt: float
    regsq: float
    delta: float = 0.05

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ConfigurationError("horizon T must be at least 1")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.C_opt < 1:
            raise ConfigurationError("C_opt must be at least 1")

    @classmethod
    def for_spanner(cls, T: int, d: int, C: float = 2.0, regsq: Optional[float] = None,
                    delta: float = 0.05) -> "ScheduleConfig":
        """``C_opt = C^2 d`` and, by default, ``regsq = d log T``."""
        if regsq is None:
            regsq = d * math.log(max(T, 2))
        return cls(T=T, d=d, C_opt=C * C * d, regsq=regsq, delta=delta)


def epsilon_schedule(gamma: float, cfg: ScheduleConfig) -> float:
    return min(1.0, math.sqrt(cfg.C_opt * cfg.d / (4.0 * gamma)))


def greedy_gamma_schedule(cfg: ScheduleConfig) -> float:
    denom = 2.0 * cfg.regsq + 64.0 * math.log(2.0 / cfg.delta)
    return max(1.0, (3.0 * cfg.T * math.sqrt(cfg.C_opt * cfg.d) / denom) ** (2.0 / 3.0))


def igw_gamma_schedule(cfg: ScheduleConfig) -> float:
    return math.sqrt(cfg.C_opt * cfg.d * cfg.T / (cfg.regsq + 32.0 * math.log(2.0 / cfg.delta)))


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def _bisect(h, lo: float, hi: float) -> float:
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= LAMBDA_TOL:
            break
        mid = 0.5 * (lo + hi)
        if h(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    if abs(h(lam) - 1.0) > 1e-8:
        raise NumericalError(f"normalization did not converge (lambda={lam:.12f}, residual={h(lam) - 1.0:.3e})")
    return lam


def solve_lambda(q: np.ndarray, gaps: np.ndarray, eta: float) -> float:
    """Root in ``[1/2, 1]`` of ``sum_a q(a) / (lambda + eta * gap(a)) = 1``.

    Requires ``q(a_hat) >= 1/2`` with ``gap(a_hat) = 0``.
    """
    qs = [float(v) for v in q]
    ws = [eta * float(g) for g in gaps]
    if not any(w > 0 for w in ws):
        return 1.0
    pairs = list(zip(qs, ws))
    return _bisect(lambda lam: sum(qa / (lam + wa) for qa, wa in pairs), 0.5, 1.0)


def solve_squarecb_lambda(gaps: np.ndarray, gamma: float) -> float:
    """Root in ``(0, |A|]`` of ``sum_a 1 / (lambda + gamma * gap(a)) = 1``."""
    w = gamma * np.asarray(gaps, dtype=float)
    n = len(w)
    if not np.any(w > 0):
        return float(n)
    return _bisect(lambda lam: float(np.sum(1.0 / (lam + w))), 0.0, float(n))


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


class Policy:
    name = "policy"

    def step(self, action_set: ActionSet, x, ghat: np.ndarray, u: float,
             view: Optional[ContextView] = None) -> StepResult:
        raise NotImplementedError


class SpannerGreedy(Policy):
    """Uniform exploration over a barycentric spanner with probability ``epsilon``."""

    name = "spanner-greedy"

    def __init__(self, epsilon: float, C: float = 2.0):
        if not 0 < epsilon <= 1:
            raise ConfigurationError(f"epsilon must lie in (0, 1], got {epsilon}")
        self.epsilon = epsilon
        self.C = C
        self.cache = SpannerCache(C)

    def distribution(self, view: ContextView, ids: list, a_hat: int) -> ExplorationDistribution:
        atoms: dict = {}
        for a in ids:
            _mix(atoms, a, self.epsilon / len(ids))
        _mix(atoms, a_hat, 1.0 - self.epsilon)
        return ExplorationDistribution.from_atoms(atoms)

    def step(self, action_set, x, ghat, u, view=None) -> StepResult:
        view = action_set.bind(x) if view is None else view
        sp, _ = self.cache.get(action_set, x)
        a_hat = view.argmax(ghat)
        dist = self.distribution(view, sp.action_ids, a_hat)
        return StepResult(dist.sample(u), dist, a_hat, spanner_recomputed=self.cache.recomputed,
                          diagnostics={"epsilon": self.epsilon})


class SpannerIGW(Policy):
    """Inverse-gap weighting over a spanner of the gap-reweighted embeddings.

    With ``practical=True`` the normalization search is skipped: spanner atoms
    get ``1 / (d_bar + gamma / (4d) * gap)`` and the greedy action takes the rest.
    """

    def __init__(self, gamma: float, C: float = 2.0, practical: bool = False):
        if gamma < 0 or (gamma == 0 and not practical):
            raise ConfigurationError(f"gamma must be positive, got {gamma}")
        self.gamma = gamma
        self.C = C
        self.practical = practical
        self.cache = SpannerCache(2.0)
        self.name = "spanner-igw-practical" if practical else "spanner-igw"

    def eta(self, d: int) -> float:
        if self.practical:
            # phi / sqrt(1 + d + c gap) spans like phi / sqrt(1 + c gap / (1 + d))
            return self.gamma / (4.0 * d * (1.0 + d))
        return self.gamma / (self.C * self.C * d * d)

    def reweighted(self, view: ContextView, x, ghat: np.ndarray, sp, r: float):
        rc = ReweightingContext.build(view, ghat, self.eta(view.d), x)
        if rc.eta <= 0:
            return rc, sp
        return rc, reweighted_spanner(rc, view, self.C, sp, r)

    def step(self, action_set, x, ghat, u, view=None) -> StepResult:
        view = action_set.bind(x) if view is None else view
        d = view.d
        sp, r = self.cache.get(action_set, x)
        rc, rsp = self.reweighted(view, x, ghat, sp, r)
        ids = list(rsp.action_ids)
        a_hat = rc.a_hat
        diag = {"eta": rc.eta, "spanner_iterations": rsp.iterations}
        if self.practical:
            support = list(dict.fromkeys(ids + [a_hat]))
            d_bar = len(support)
            gaps = rc.gap(view.embed_many(ids))
            atoms: dict = {}
            for a, g in zip(ids, gaps):
                atoms[a] = 1.0 / (d_bar + self.gamma / (4.0 * d) * g)
            _mix(atoms, a_hat, max(0.0, 1.0 - sum(atoms.values())))
            dist = ExplorationDistribution.from_atoms(atoms)
            lam = float("nan")
        else:
            atoms = {}
            for a in ids:
                _mix(atoms, a, 0.5 / len(ids))
            _mix(atoms, a_hat, 0.5)
            keys = list(atoms)
            q = np.array([atoms[a] for a in keys])
            gaps = rc.gap(view.embed_many(keys))
            lam = solve_lambda(q, gaps, rc.eta)
            p = q / (lam + rc.eta * gaps)
            dist = ExplorationDistribution(keys, p / p.sum())
        return StepResult(dist.sample(u), dist, a_hat, lam=lam, gamma=self.gamma,
                          spanner_recomputed=self.cache.recomputed or rc.eta > 0, diagnostics=diag)


class SquareCB(Policy):
    """Inverse-gap weighting over every action of a finite set."""

    name = "squarecb"

    def __init__(self, gamma: float):
        if gamma <= 0:
            raise ConfigurationError(f"gamma must be positive, got {gamma}")
        self.gamma = gamma

    def step(self, action_set, x, ghat, u, view=None) -> StepResult:
        view = action_set.bind(x) if view is None else view
        a_hat = view.argmax(ghat)
        scores = view.embeddings @ np.asarray(ghat, dtype=float)
        gaps = np.maximum(scores.max() - scores, 0.0)
        lam = solve_squarecb_lambda(gaps, self.gamma)
        p = 1.0 / (lam + self.gamma * gaps)
        dist = ExplorationDistribution(view.ids, p / p.sum())
        return StepResult(dist.sample(u), dist, a_hat, lam=lam, gamma=self.gamma)


class EpsilonGreedy(Policy):
    """Uniform exploration over every action with probability ``epsilon``."""

    name = "epsilon-greedy"

    def __init__(self, epsilon: float):
        if not 0 <= epsilon <= 1:
            raise ConfigurationError(f"epsilon must lie in [0, 1], got {epsilon}")
        self.epsilon = epsilon

    def step(self, action_set, x, ghat, u, view=None) -> StepResult:
        view = action_set.bind(x) if view is None else view
        a_hat = view.argmax(ghat)
        p = np.full(len(view), self.epsilon / len(view))
        p[view.position(a_hat)] += 1.0 - self.epsilon
        dist = ExplorationDistribution(view.ids, p)
        return StepResult(dist.sample(u), dist, a_hat, diagnostics={"epsilon": self.epsilon})


def make_policy(name: str, *, gamma: Optional[float] = None, epsilon: Optional[float] = None,
                C: float = 2.0) -> Policy:
    if name == "spanner-greedy":
        return SpannerGreedy(epsilon, C)
    if name == "spanner-igw":
        return SpannerIGW(gamma, C)
    if name == "spanner-igw-practical":
        return SpannerIGW(gamma, C, practical=True)
    if name == "squarecb":
        return SquareCB(gamma)
    if name == "epsilon-greedy":
        return EpsilonGreedy(epsilon)
    raise ConfigurationError(f"unknown policy {name!r}")


POLICY_NAMES = ("spanner-greedy", "spanner-igw", "spanner-igw-practical", "squarecb", "epsilon-greedy")
