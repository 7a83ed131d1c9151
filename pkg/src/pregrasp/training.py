"""SAC training loop over the pregrasp environment."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import checkpoint
from .env import (
    ACTION_BOUND,
    InfeasibleScenario,
    PregraspEnv,
    RandomizationTable,
    check_feasible,
)
from .evaluation import EvalSummary, evaluate_policy
from .persist import atomic_write_text, provenance_header
from .sac import ReplayBuffer, SacAgent, SacConfig, Transition, policy_mean, policy_sample, sac_update

log = logging.getLogger(__name__)

METRIC_FIELDS = ("env_steps", "critic1_loss", "critic2_loss", "actor_loss", "alpha",
                 "eval_success_rate", "eval_mean_max_pitch")


@dataclass(frozen=True)
class TrainSettings:
    eval_every: int = 5_000
    eval_episodes: int = 20
    keep_checkpoints: bool = True

    def __post_init__(self):
        if self.eval_every < 1 or self.eval_episodes < 0:
            raise ValueError("eval_every must be >= 1 and eval_episodes >= 0")


@dataclass
class TrainResult:
    agent: SacAgent
    metrics_path: Path
    checkpoints: list[Path]
    best_checkpoint: Path
    records: list[dict]


def _fmt(x: float | None):
    return None if x is None or not math.isfinite(x) else float(x)


def metrics_record(env_steps: int, losses: list[tuple[float, float, float]], alpha: float,
                   summary: EvalSummary | None) -> dict:
    if losses:
        c1, c2, a = (float(np.mean(col)) for col in zip(*losses))
    else:
        c1 = c2 = a = None
    values = (env_steps, _fmt(c1), _fmt(c2), _fmt(a), _fmt(alpha),
              None if summary is None else summary.success_rate,
              None if summary is None else summary.mean_max_pitch)
    return dict(zip(METRIC_FIELDS, values))


def _new_episode(env: PregraspEnv, table: RandomizationTable, rng: np.random.Generator):
    while True:
        sc = env.config.draw(table, rng)
        try:
            if not sc.used_reference_init:
                check_feasible(sc, env.config.scene)
            return env.reset(sc, rng).as_array()
        except InfeasibleScenario:
            continue


def train(
    config: SacConfig,
    env_factory: Callable[[], PregraspEnv],
    seed: int,
    out_dir: str | Path,
    table: RandomizationTable = RandomizationTable(),
    settings: TrainSettings = TrainSettings(),
    config_hash: str = "",
) -> TrainResult:
    """Train from scratch. Writes ``metrics.jsonl`` and checkpoints under ``out_dir``.

    Separate random streams drive network init, episode sampling, exploration,
    minibatch sampling and evaluation, so the run is a pure function of
    ``seed`` and the configuration.
    """
    out = Path(out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    init_ss, env_ss, act_ss, upd_ss, eval_ss = np.random.SeedSequence(seed).spawn(5)
    rng_env, rng_act = np.random.default_rng(env_ss), np.random.default_rng(act_ss)
    rng_upd, rng_eval = np.random.default_rng(upd_ss), np.random.default_rng(eval_ss)

    agent = SacAgent.create(config, np.random.default_rng(init_ss))
    buffer = ReplayBuffer(config.replay_capacity)
    env = env_factory()
    eval_table = replace(table, reference_probability=0.0)
    header = provenance_header(config_hash, seed)
    meta = {"config_hash": config_hash or "-", "seed": str(seed)}

    metrics_path = out / "metrics.jsonl"
    records: list[dict] = []
    lines: list[str] = []
    checkpoints: list[Path] = []
    best_key = (-1.0, -math.inf)
    best_path = ckpt_dir / "best.ckpt"

    def save(step: int, summary: EvalSummary | None) -> None:
        nonlocal best_key
        m = dict(meta, env_steps=str(step))
        path = ckpt_dir / f"step_{step:07d}.ckpt"
        if settings.keep_checkpoints or step == 0:
            checkpoint.save_agent(path, agent, m)
            checkpoints.append(path)
        checkpoint.save_agent(ckpt_dir / "final.ckpt", agent, m)
        key = (-1.0, -math.inf) if summary is None else (summary.success_rate, summary.mean_max_pitch)
        if key > best_key or not best_path.exists():
            best_key = max(key, best_key)
            checkpoint.save_agent(best_path, agent, m)

    def evaluate() -> EvalSummary | None:
        if settings.eval_episodes == 0:
            return None
        actor = agent.actor
        return evaluate_policy(lambda o: policy_mean(actor, o), settings.eval_episodes, rng_eval,
                               eval_table, env.config)

    def record(step: int, losses, summary) -> None:
        rec = metrics_record(step, losses, agent.effective_alpha(config), summary)
        records.append(rec)
        lines.append(json.dumps(rec))
        atomic_write_text(metrics_path, header + "".join(line + "\n" for line in lines))

    save(0, None)
    atomic_write_text(metrics_path, header)
    if config.total_env_steps == 0:
        return TrainResult(agent, metrics_path, checkpoints, best_path, records)

    obs = _new_episode(env, table, rng_env)
    losses: list[tuple[float, float, float]] = []
    t0 = time.perf_counter()
    for step in range(1, config.total_env_steps + 1):
        if step <= config.warmup_steps:
            action = rng_act.uniform(-ACTION_BOUND, ACTION_BOUND)
        else:
            action, _ = policy_sample(agent.actor, obs, rng_act)
        res = env.step(action)
        nxt = res.observation.as_array()
        buffer.store(Transition(obs, action, res.reward, nxt, res.termination_reason.absorbing))
        obs = _new_episode(env, table, rng_env) if res.terminated else nxt

        if step > config.warmup_steps:
            for _ in range(config.updates_per_env_step):
                info = sac_update(agent, buffer.sample(rng_upd, config.batch_size), config, rng_upd)
                losses.append((info.critic1_loss, info.critic2_loss, info.actor_loss))

        if step % settings.eval_every == 0 or step == config.total_env_steps:
            summary = evaluate()
            record(step, losses, summary)
            save(step, summary)
            log.info("step %d  %.0fs  alpha=%.4g  success=%s  pitch=%s", step, time.perf_counter() - t0,
                     agent.effective_alpha(config), records[-1]["eval_success_rate"],
                     records[-1]["eval_mean_max_pitch"])
            losses = []
    return TrainResult(agent, metrics_path, checkpoints, best_path, records)
