"""Command-line experiment runner.

Subcommands
-----------
run      one seed of every configured policy
sweep    every configured seed, optionally in parallel
spanner  inspect the barycentric spanner of an embedding file

Configuration is an INI file with ``[env]``, ``[policy]`` and ``[run]``
sections; see ``spannercb run --help`` for keys and defaults.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError, SpannerCBError
from .oracles import BilinearRegressor, RidgeRegressor, load_embeddings_csv
from .policies import (POLICY_NAMES, ScheduleConfig, epsilon_schedule, greedy_gamma_schedule,
                       igw_gamma_schedule, make_policy)
from .reweighted import ReweightingContext, reweighted_spanner
from .simulator import (EnvSpec, EpisodeError, RegretTracker, origin_module, bootstrap_ci, make_linear_env,
                        run_episode)
from .spanner import compute_spanner, local_search_init, spanner_guard

CSV_COLUMNS = ["round", "context_id", "action_id", "reward", "pseudo_regret_cum", "realized_regret_cum",
               "lambda", "gamma", "spanner_recomputed"]
SUMMARY_SEED = 20240101

CONFIG_HELP = """\
configuration keys (INI file):
  [env]     d=5 n_actions=100 g_kind=matrix|vector noise=bernoulli|gaussian sigma=0.1
            pool_size=512 context_dim=<d> duplicates=0 last_action=random|worst
            embeddings=<csv path, overrides d and n_actions> seed=0
  [policy]  name=spanner-igw (comma separated list allowed; one of %s)
            gamma=auto epsilon=auto C=2 practical=false
            regressor=ridge|bilinear ridge=1.0 step_size=0.05 regsq=auto delta=0.05
  [run]     T=1000 seeds=0 (list "0,1,2" or range "0-31") out=results
""" % ", ".join(POLICY_NAMES)


@dataclass
class PolicySpec:
    name: str
    gamma: str = "auto"
    epsilon: str = "auto"
    C: float = 2.0
    regressor: str = "ridge"
    ridge: float = 1.0
    step_size: float = 0.05
    regsq: str = "auto"
    delta: float = 0.05


@dataclass
class ExperimentConfig:
    env: EnvSpec
    policies: list
    T: int = 1000
    seeds: list = field(default_factory=lambda: [0])
    out: Path = Path("results")
    embeddings: Optional[Path] = None


def _parse_seeds(text: str) -> list:
    seeds = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigurationError("no seeds configured")
    return seeds


def load_config(path: Optional[str]) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise ConfigurationError(f"config file {path} does not exist")
        cp.read(path, encoding="utf-8")
    for sec in ("env", "policy", "run"):
        if not cp.has_section(sec):
            cp.add_section(sec)
    e, p, r = cp["env"], cp["policy"], cp["run"]
    try:
        emb_path = e.get("embeddings")
        ctx = e.get("context_dim")
        env = EnvSpec(
            d=e.getint("d", 5), n_actions=e.getint("n_actions", 100), g_kind=e.get("g_kind", "matrix"),
            noise=e.get("noise", "bernoulli"), sigma=e.getfloat("sigma", 0.1), pool_size=e.getint("pool_size", 512),
            context_dim=int(ctx) if ctx else None, last_action=e.get("last_action", "random"),
            duplicates=e.getint("duplicates", 0), seed=e.getint("seed", 0),
        )
        names = [n.strip() for n in p.get("name", "spanner-igw").split(",") if n.strip()]
        if p.getboolean("practical", False):
            names = ["spanner-igw-practical" if n == "spanner-igw" else n for n in names]
        for n in names:
            if n not in POLICY_NAMES:
                raise ConfigurationError(f"unknown policy {n!r}; expected one of {', '.join(POLICY_NAMES)}")
        policies = [PolicySpec(n, p.get("gamma", "auto"), p.get("epsilon", "auto"), p.getfloat("C", 2.0),
                               p.get("regressor", "ridge"), p.getfloat("ridge", 1.0), p.getfloat("step_size", 0.05),
                               p.get("regsq", "auto"), p.getfloat("delta", 0.05)) for n in names]
        cfg = ExperimentConfig(env, policies, r.getint("T", 1000), _parse_seeds(r.get("seeds", "0")),
                               Path(r.get("out", "results")))
    except ValueError as exc:
        raise ConfigurationError(f"invalid configuration value: {exc}") from None
    if emb_path:
        ep = Path(emb_path)
        if not ep.is_absolute() and path is not None:
            ep = Path(path).parent / ep
        if not ep.is_file():
            raise ConfigurationError(f"embedding file {ep} does not exist")
        cfg.embeddings = ep
    return cfg


def apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "T", None) is not None:
        cfg.T = args.T
    if getattr(args, "out", None) is not None:
        cfg.out = Path(args.out)
    if getattr(args, "duplicates", None) is not None:
        cfg.env = replace(cfg.env, duplicates=args.duplicates)
    for ps in cfg.policies:
        if getattr(args, "gamma", None) is not None:
            ps.gamma = str(args.gamma)
        if getattr(args, "epsilon", None) is not None:
            ps.epsilon = str(args.epsilon)
        if getattr(args, "practical", False) and ps.name == "spanner-igw":
            ps.name = "spanner-igw-practical"
    if cfg.T < 1:
        raise ConfigurationError("T must be at least 1")
    return cfg


def build_env(cfg: ExperimentConfig):
    if cfg.embeddings is not None:
        aset = load_embeddings_csv(cfg.embeddings)
        spec = replace(cfg.env, d=aset.d, n_actions=len(aset))
        return make_linear_env(spec, aset.embeddings)
    return make_linear_env(cfg.env)


def build_regressor(ps: PolicySpec, env):
    if ps.regressor == "ridge":
        return RidgeRegressor(env.d, env.context_dim, ridge=ps.ridge)
    if ps.regressor == "bilinear":
        if env.context_dim is None:
            raise ConfigurationError("the bilinear regressor needs g_kind = matrix")
        return BilinearRegressor(env.d, env.context_dim, step_size=ps.step_size)
    raise ConfigurationError(f"unknown regressor {ps.regressor!r}")


def resolve_parameters(ps: PolicySpec, env, T: int, regressor) -> tuple[Optional[float], Optional[float]]:
    """Numeric ``(gamma, epsilon)`` for a policy, filling ``auto`` from the schedules.

    The finite-action baselines use the same formulas with ``C_opt * d``
    replaced by the number of actions.
    """
    regsq = regressor.default_regsq(T) if ps.regsq == "auto" else float(ps.regsq)
    sched = ScheduleConfig.for_spanner(T, env.d, ps.C, regsq, ps.delta)
    if ps.name in ("squarecb", "epsilon-greedy"):
        n = len(env.action_set)
        sched = ScheduleConfig(T=T, d=1, C_opt=float(n), regsq=regsq, delta=ps.delta)
    gamma = epsilon = None
    if ps.name in ("spanner-igw", "spanner-igw-practical", "squarecb"):
        gamma = igw_gamma_schedule(sched) if ps.gamma == "auto" else float(ps.gamma)
    else:
        if ps.epsilon == "auto":
            gamma = greedy_gamma_schedule(sched)
            epsilon = epsilon_schedule(gamma, sched)
        else:
            epsilon = float(ps.epsilon)
    return gamma, epsilon


def _fmt(v: float) -> str:
    return repr(float(v))


def write_rounds_csv(path: Path, tracker: RegretTracker) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in tracker.records():
            w.writerow([rec.round, rec.context_id, rec.action_id, _fmt(rec.reward), _fmt(rec.pseudo_regret_cum),
                        _fmt(rec.realized_regret_cum), _fmt(rec.lam), _fmt(rec.gamma), int(rec.spanner_recomputed)])


def read_rounds_csv(path: Path) -> dict:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in CSV_COLUMNS}


def run_one(cfg: ExperimentConfig, ps: PolicySpec, seed: int, out_dir: Path) -> dict:
    """Run one (policy, seed) episode, write its CSV, return per-seed statistics."""
    env = build_env(cfg)
    reg = build_regressor(ps, env)
    gamma, epsilon = resolve_parameters(ps, env, cfg.T, reg)
    policy = make_policy(ps.name, gamma=gamma, epsilon=epsilon, C=ps.C)
    tracker = run_episode(env, policy, reg, cfg.T, seed)
    write_rounds_csv(out_dir / f"rounds_{seed}.csv", tracker)
    return {
        "seed": seed,
        "progressive_reward": float(tracker.progressive_reward[-1]),
        "final_regret": tracker.final_regret,
        "final_realized_regret": float(tracker.realized_regret.sum()),
        "wall_clock": tracker.wall_clock,
        "gamma": gamma,
        "epsilon": epsilon,
        "clipped_rewards": reg.clipped_rewards,
    }


def _task(args):
    cfg, ps, seed, out_dir = args
    return run_one(cfg, ps, seed, out_dir)


def summarize(per_seed: list) -> dict:
    rewards = [s["progressive_reward"] for s in per_seed]
    regrets = [s["final_regret"] for s in per_seed]
    out = {
        "seeds": [s["seed"] for s in per_seed],
        "mean_progressive_reward": float(np.mean(rewards)),
        "final_regret_mean": float(np.mean(regrets)),
        "wall_clock": float(sum(s["wall_clock"] for s in per_seed)),
        "gamma": per_seed[0]["gamma"],
        "epsilon": per_seed[0]["epsilon"],
    }
    if len(per_seed) >= 2:
        out["progressive_reward_ci90"] = list(bootstrap_ci(rewards, seed=SUMMARY_SEED))
        out["final_regret_ci90"] = list(bootstrap_ci(regrets, seed=SUMMARY_SEED))
    else:
        out["progressive_reward_ci90"] = None
        out["final_regret_ci90"] = None
    return out


def execute(cfg: ExperimentConfig, jobs: Optional[int] = None) -> dict:
    cfg.out.mkdir(parents=True, exist_ok=True)
    multi = len(cfg.policies) > 1
    tasks = [(cfg, ps, seed, cfg.out / ps.name if multi else cfg.out) for ps in cfg.policies for seed in cfg.seeds]
    if jobs is None:
        jobs = min(os.cpu_count() or 1, len(tasks))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    summary = {"T": cfg.T, "policies": {}}
    k = 0
    for ps in cfg.policies:
        per_seed = results[k:k + len(cfg.seeds)]
        k += len(cfg.seeds)
        summary["policies"][ps.name] = summarize(per_seed)
    with (cfg.out / "summary.json").open("w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def spanner_report(path: str, C: float = 2.0, eta: Optional[float] = None) -> dict:
    aset = load_embeddings_csv(path)
    view = aset.bind(None)
    if eta is None:
        sp = compute_spanner(aset, None, C)
        report = {"guard": spanner_guard(aset.d, C)}
        emb = view.embeddings
    else:
        init, r = local_search_init(aset, None)
        rc = ReweightingContext.build(view, np.zeros(aset.d), eta)
        sp = reweighted_spanner(rc, view, C, init, r)
        report = {"eta": eta, "r": r}
        emb = view.embeddings
    report.update({
        "action_ids": [int(a) for a in sp.action_ids],
        "abs_det": abs(sp.det),
        "max_coefficient": sp.max_coefficient(emb),
        "iterations": sp.iterations,
        "C": C,
    })
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spannercb", description=__doc__.split("\n\n")[0],
                                     epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI experiment file (defaults apply when omitted)")
        p.add_argument("--T", type=int, help="horizon, overrides [run] T")
        p.add_argument("--gamma", type=float, help="IGW exploration parameter, overrides auto schedule")
        p.add_argument("--epsilon", type=float, help="greedy exploration rate, overrides auto schedule")
        p.add_argument("--practical", action="store_true", help="use the normalization-free IGW variant")
        p.add_argument("--duplicates", type=int, help="copies of the last action to append")
        p.add_argument("--out", help="output directory, overrides [run] out")

    p_run = sub.add_parser("run", help="run a single seed", epilog=CONFIG_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p_run)
    p_run.add_argument("--seed", type=int, help="episode seed (default: first configured seed)")

    p_sweep = sub.add_parser("sweep", help="run all configured seeds", epilog=CONFIG_HELP,
                             formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, help="worker processes (default: cores, capped by task count)")

    p_sp = sub.add_parser("spanner", help="inspect the spanner of an embedding CSV")
    p_sp.add_argument("embeddings", help="CSV with header action_id,dim_0,...")
    p_sp.add_argument("--C", type=float, default=2.0, help="approximation factor (default 2)")
    p_sp.add_argument("--eta", type=float, help="report the reweighted spanner for ghat = 0 with this eta")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "spanner":
            report = spanner_report(args.embeddings, args.C, args.eta)
            for key in ("action_ids", "abs_det", "max_coefficient", "iterations"):
                print(f"{key}: {report[key]}")
            return 0
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "run":
            cfg.seeds = cfg.seeds[:1]
            summary = execute(cfg, jobs=1)
        else:
            summary = execute(cfg, jobs=args.jobs)
        for name, s in summary["policies"].items():
            print(f"{name}: mean progressive reward {s['mean_progressive_reward']:.4f}, "
                  f"mean final regret {s['final_regret_mean']:.2f}")
        return 0
    except EpisodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SpannerCBError as exc:
        hint = " (embeddings must span R^d)" if "span" in str(exc) else ""
        print(f"error in {origin_module(exc)}: {exc}{hint}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
