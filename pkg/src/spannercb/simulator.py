"""Synthetic realizable environments, episode runner and regret accounting."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import EnvSpecError, SpannerCBError
from .oracles import FiniteActionSet, Regressor
from .policies import Policy

STREAMS = ("context", "reward", "sampling")


@dataclass(frozen=True)
class EnvSpec:
    d: int = 5
    n_actions: int = 100
    g_kind: str = "matrix"  # "matrix": g(x) = W x, "vector": g(x) = theta
    noise: str = "bernoulli"  # or "gaussian"
    sigma: float = 0.1
    pool_size: int = 512
    context_dim: Optional[int] = None
    last_action: str = "random"  # "worst": relabel so the last id has the lowest mean reward
    duplicates: int = 0
    seed: int = 0


def unit_ball(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random(n)[:, None] ** (1.0 / d)


@dataclass
class LinearEnvironment:
    action_set: FiniteActionSet
    g_kind: str
    g_param: np.ndarray
    contexts: np.ndarray
    noise: str = "bernoulli"
    sigma: float = 0.1
    spec: Optional[EnvSpec] = None
    _best: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        if self.noise not in ("bernoulli", "gaussian"):
            raise EnvSpecError(f"unknown noise model {self.noise!r}")
        if self.noise == "gaussian" and self.sigma <= 0:
            raise EnvSpecError("gaussian noise needs sigma > 0")

    @property
    def d(self) -> int:
        return self.action_set.d

    @property
    def context_dim(self) -> Optional[int]:
        return self.contexts.shape[1] if self.g_kind == "matrix" else None

    def g_star(self, x) -> np.ndarray:
        if self.g_kind == "matrix":
            return self.g_param @ x
        return self.g_param

    def f_star(self, x, a: int) -> float:
        return float(self.action_set.bind(x).embed(a) @ self.g_star(x))

    def mean_rewards(self, x) -> np.ndarray:
        """``f*(x, a)`` for every action in id order."""
        return self.action_set.bind(x).embeddings @ self.g_star(x)

    def optimal(self, context_id: int) -> tuple[int, float]:
        """Optimal action and its mean reward, via the exact argmax oracle."""
        if context_id not in self._best:
            x = self.contexts[context_id]
            view = self.action_set.bind(x)
            g = self.g_star(x)
            a = view.argmax(g)
            self._best[context_id] = (a, float(view.embed(a) @ g))
        return self._best[context_id]

    def reward(self, f: float, u: float) -> float:
        """Noisy reward with mean ``f`` from one uniform ``u``.

        Bernoulli rewards are ``+1`` with probability ``(1 + f) / 2`` and ``-1``
        otherwise.  Gaussian noise is truncated symmetrically to
        ``[-(1 - |f|), 1 - |f|]`` so the reward stays in ``[-1, 1]`` and the mean
        stays ``f``.
        """
        if self.noise == "bernoulli":
            return 1.0 if u < 0.5 * (1.0 + f) else -1.0
        c = 1.0 - abs(f)
        if c <= 0:
            return float(f)
        lo = ndtr(-c / self.sigma)
        z = ndtri(lo + u * (1.0 - 2.0 * lo))
        return float(min(1.0, max(-1.0, f + self.sigma * z)))


def make_linear_env(spec: EnvSpec, embeddings: Optional[np.ndarray] = None) -> LinearEnvironment:
    """Deterministic environment from ``spec``; optional fixed action embeddings."""
    if spec.d < 1 or spec.n_actions < 1 or spec.pool_size < 1:
        raise EnvSpecError("dimensions, action count and pool size must be positive")
    if spec.g_kind not in ("matrix", "vector"):
        raise EnvSpecError(f"unknown g_kind {spec.g_kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 7717]))
    if embeddings is None:
        emb = unit_ball(rng, spec.n_actions, spec.d)
    else:
        emb = np.asarray(embeddings, dtype=float)
        if emb.shape[1] != spec.d:
            raise EnvSpecError(f"embedding width {emb.shape[1]} does not match d={spec.d}")
    k = spec.context_dim or spec.d
    if spec.g_kind == "matrix":
        W = rng.standard_normal((spec.d, k))
        s = np.linalg.norm(W, 2)
        if s == 0:
            raise EnvSpecError("cannot normalize a zero reward matrix")
        g_param = W / s
    else:
        v = rng.standard_normal(spec.d)
        n = np.linalg.norm(v)
        if n == 0:
            raise EnvSpecError("cannot normalize a zero reward vector")
        g_param = v / n
    contexts = unit_ball(rng, spec.pool_size, k)
    if spec.last_action == "worst":
        g_bar = g_param @ contexts.mean(axis=0) if spec.g_kind == "matrix" else g_param
        means = emb @ g_bar
        worst = int(np.argmin(means))
        order = [i for i in range(len(emb)) if i != worst] + [worst]
        emb = emb[order]
    elif spec.last_action != "random":
        raise EnvSpecError(f"unknown last_action rule {spec.last_action!r}")
    env = LinearEnvironment(FiniteActionSet(emb), spec.g_kind, g_param, contexts, spec.noise, spec.sigma, spec)
    if spec.duplicates:
        env = duplicate_augment(env, int(env.action_set.ids[-1]), spec.duplicates)
    return env


def duplicate_augment(env: LinearEnvironment, action_id: int, copies: int) -> LinearEnvironment:
    """Append ``copies`` exact copies of ``action_id`` under fresh, larger ids."""
    if copies < 0:
        raise EnvSpecError("copies must be nonnegative")
    if copies == 0:
        return env
    return LinearEnvironment(env.action_set.with_duplicates(action_id, copies), env.g_kind, env.g_param,
                             env.contexts, env.noise, env.sigma, env.spec)


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------


@dataclass
class RoundRecord:
    round: int
    context_id: int
    action_id: int
    reward: float
    pseudo_regret_cum: float
    realized_regret_cum: float
    lam: float
    gamma: float
    spanner_recomputed: bool


class RegretTracker:
    """Per-round log of an episode, stored column-wise."""

    def __init__(self, T: int, d: int):
        self.T = T
        self.context_id = np.zeros(T, dtype=np.int64)
        self.action_id = np.zeros(T, dtype=np.int64)
        self.embedding = np.zeros((T, d))
        self.reward = np.zeros(T)
        self.pseudo_regret = np.zeros(T)
        self.realized_regret = np.zeros(T)
        self.lam = np.full(T, np.nan)
        self.gamma = np.full(T, np.nan)
        self.recomputed = np.zeros(T, dtype=bool)
        self.wall_clock = 0.0

    def log(self, t, context_id, action_id, phi, reward, pseudo, realized, lam, gamma, recomputed) -> None:
        self.context_id[t] = context_id
        self.action_id[t] = action_id
        self.embedding[t] = phi
        self.reward[t] = reward
        self.pseudo_regret[t] = pseudo
        self.realized_regret[t] = realized
        self.lam[t] = lam
        self.gamma[t] = gamma
        self.recomputed[t] = recomputed

    @property
    def cumulative_pseudo_regret(self) -> np.ndarray:
        return np.cumsum(self.pseudo_regret)

    @property
    def cumulative_realized_regret(self) -> np.ndarray:
        return np.cumsum(self.realized_regret)

    @property
    def progressive_reward(self) -> np.ndarray:
        return np.cumsum(self.reward) / np.arange(1, self.T + 1)

    @property
    def final_regret(self) -> float:
        return float(self.pseudo_regret.sum())

    def regret_at(self, t: int) -> float:
        """Cumulative pseudo-regret after ``t`` rounds."""
        return float(self.pseudo_regret[:t].sum())

    def records(self):
        pr, rr = self.cumulative_pseudo_regret, self.cumulative_realized_regret
        for t in range(self.T):
            yield RoundRecord(t + 1, int(self.context_id[t]), int(self.action_id[t]), float(self.reward[t]),
                              float(pr[t]), float(rr[t]), float(self.lam[t]), float(self.gamma[t]),
                              bool(self.recomputed[t]))


class EpisodeError(SpannerCBError):
    """A failure inside an episode, tagged with the failing module and round."""

    def __init__(self, module: str, round_index: int, cause: Exception):
        self.module = module
        self.round_index = round_index
        super().__init__(f"{module} failed at round {round_index}: {type(cause).__name__}: {cause}")


def origin_module(exc: BaseException) -> str:
    tb = exc.__traceback__
    name = __name__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", name)
        if mod.startswith("spannercb"):
            name = mod
        tb = tb.tb_next
    return name


def episode_streams(seed: int, T: int, pool_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Context ids, reward uniforms and sampling uniforms, one independent stream each."""
    ctx, rew, samp = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(STREAMS)))
    return ctx.integers(pool_size, size=T), rew.random(T), samp.random(T)


def run_episode(env: LinearEnvironment, policy: Policy, regressor: Regressor, T: int, seed: int) -> RegretTracker:
    """Context, predict, explore, sample, reward and update, ``T`` times."""

    if T < 1:
        raise ValueError("T must be at least 1")
    ctx_ids, rew_u, samp_u = episode_streams(seed, T, len(env.contexts))
    tracker = RegretTracker(T, env.d)
    start = time.perf_counter()
    for t in range(T):
        try:
            cid = int(ctx_ids[t])
            x = env.contexts[cid]
            view = env.action_set.bind(x)
            ghat = regressor.predict(x)
            res = policy.step(env.action_set, x, ghat, float(samp_u[t]), view)
            phi = view.embed(res.action)
            f = float(phi @ env.g_star(x))
            _, f_best = env.optimal(cid)
            r = env.reward(f, float(rew_u[t]))
            r_best = env.reward(f_best, float(rew_u[t]))
            regressor.update(x, phi, r)
        except SpannerCBError as exc:
            raise EpisodeError(origin_module(exc), t + 1, exc) from exc
        tracker.log(t, cid, res.action, phi, r, max(0.0, f_best - f), r_best - r,
                    res.lam, res.gamma, res.spanner_recomputed)
    tracker.wall_clock = time.perf_counter() - start
    return tracker


def bootstrap_ci(values, level: float = 0.90, resamples: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("bootstrap needs at least 2 values")
    if np.all(v == v[0]):
        return float(v[0]), float(v[0])
    rng = np.random.default_rng(seed)
    means = v[rng.integers(v.size, size=(resamples, v.size))].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)
