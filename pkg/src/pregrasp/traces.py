"""Episode trace dumps and bitwise replay.

A trace file is a provenance comment line, one ``{"scenario": ...}`` record
describing the start state, then one record per step as produced by
:func:`pregrasp.env.trace_record`. Floats are written with ``repr`` precision
so a replay can compare them exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .env import EnvConfig, PregraspEnv, RewardConfig, ScenarioParams
from .evaluation import EpisodeResult, Policy, run_episode
from .persist import atomic_write_text, provenance_header
from .physics2d import BoxGeometry


def scenario_to_dict(sc: ScenarioParams) -> dict:
    d = asdict(sc)
    d["eff_init"] = list(sc.eff_init)
    return d


def scenario_from_dict(d: dict) -> ScenarioParams:
    d = dict(d)
    d["eff_init"] = tuple(d["eff_init"])
    d["box_geometry"] = BoxGeometry(**d["box_geometry"])
    return ScenarioParams(**d)


def dump_episode(
    policy: Policy,
    scenario: ScenarioParams,
    path: str | Path,
    env_config: EnvConfig = EnvConfig(),
    config_hash: str = "-",
    seed: int = 0,
) -> EpisodeResult:
    lines: list[str] = []
    result = run_episode(policy, scenario, env_config, trace=lines)
    head = {
        "scenario": scenario_to_dict(replace(scenario, used_reference_init=False)),
        "reward": [env_config.reward.lambda1, env_config.reward.lambda2],
        "horizon": env_config.horizon,
    }
    text = provenance_header(config_hash, seed) + json.dumps(head) + "\n" + "".join(x + "\n" for x in lines)
    atomic_write_text(path, text)
    return result


@dataclass(frozen=True)
class ReplayReport:
    ok: bool
    steps: int
    message: str


def replay_trace(path: str | Path, env_config: EnvConfig = EnvConfig()) -> ReplayReport:
    """Re-simulate the recorded actions and compare every step exactly."""
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not rows:
        return ReplayReport(False, 0, "empty trace")
    head = json.loads(rows[0])
    if "scenario" not in head:
        return ReplayReport(False, 0, "trace is missing its scenario record")
    cfg = replace(env_config, reward=RewardConfig(*head["reward"]), horizon=int(head["horizon"]))
    env = PregraspEnv(cfg)
    env.reset(scenario_from_dict(head["scenario"]))
    steps = [json.loads(r) for r in rows[1:]]
    for i, rec in enumerate(steps):
        res = env.step(np.array(rec["action"], dtype=float))
        got = {
            "t": env.step_index,
            "observation": [float(x) for x in res.observation.as_array()],
            "reward": float(res.reward),
            "termination_reason": res.termination_reason.value,
        }
        for key, value in got.items():
            if rec[key] != value:
                return ReplayReport(False, i, f"step {rec['t']}: {key} differs ({rec[key]!r} vs {value!r})")
        if res.terminated and i != len(steps) - 1:
            return ReplayReport(False, i, f"episode ended at step {rec['t']} but the trace continues")
    if steps and not env.done:
        return ReplayReport(False, len(steps), "trace ends before the episode terminated")
    return ReplayReport(True, len(steps), f"{len(steps)} steps reproduced bit for bit")
