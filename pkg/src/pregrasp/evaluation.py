"""Evaluation metrics, episode runners, parameter sweeps and a statics oracle."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import physics2d as phys
from .env import (
    ACTION_BOUND,
    PITCH_LIMIT,
    TICKS_PER_ACTION,
    EnvConfig,
    InfeasibleScenario,
    PregraspEnv,
    RandomizationTable,
    ScenarioParams,
    TerminationReason,
    check_feasible,
    integrate_command,
    observe,
    trace_record,
)
from .physics2d import GRAVITY, BoxGeometry, MaterialParams

Policy = Callable[[np.ndarray], np.ndarray]

SWEEP_SUCCESS_ANGLE = 0.32
FALLEN_PITCH = 0.05
HOLD_SECONDS = 2.0
# the real test object: mass and length of the box that withstood two dropped cups
REAL_BOX_MASS = 0.082
REAL_BOX_LENGTH = 0.17
REAL_WITHSTOOD_MOMENTUM = 0.028


class NonPositiveLength(ValueError):
    pass


class Infeasible(ValueError):
    pass


class NoLiftAchieved(RuntimeError):
    pass


@dataclass(frozen=True)
class CompletionCriterion:
    grasp_fraction: float = 0.9  # lambda: where along the box the gripper aims
    clearance: float = 0.05  # w: gap needed under that point

    def __post_init__(self):
        if not 0.0 <= self.grasp_fraction <= 1.0:
            raise ValueError("grasp_fraction must lie in [0, 1]")
        if self.clearance <= 0.0:
            raise ValueError("clearance must be positive")


def lift_threshold_angle(length: float, criterion: CompletionCriterion = CompletionCriterion()) -> float:
    if length <= 0.0:
        raise NonPositiveLength(f"box length must be positive, got {length}")
    return math.atan(criterion.clearance / (criterion.grasp_fraction * length))


def task_success(length: float, max_pitch: float, criterion: CompletionCriterion = CompletionCriterion()) -> bool:
    if length <= 0.0:
        raise NonPositiveLength(f"box length must be positive, got {length}")
    if max_pitch >= math.pi / 2:
        return True
    return criterion.grasp_fraction * length * math.tan(max_pitch) > criterion.clearance


@dataclass(frozen=True)
class DisturbanceSpec:
    drop_mass: float
    moment_arm: float = 0.16
    drop_height: float = 0.5
    gravity: float = GRAVITY

    def __post_init__(self):
        if self.drop_mass < 0 or self.moment_arm <= 0 or self.drop_height < 0 or self.gravity <= 0:
            raise ValueError("disturbance parameters must be non-negative (arm, gravity positive)")


def disturbance_momentum(spec: DisturbanceSpec) -> float:
    """Angular momentum a dropped mass delivers at the moment arm: m r sqrt(2 g h)."""
    return spec.drop_mass * spec.moment_arm * math.sqrt(2.0 * spec.gravity * spec.drop_height)


def momentum_budget(geometry: BoxGeometry, gravity: float = GRAVITY) -> float:
    """Real-world withstood momentum rescaled by the gravity torque scale m g L."""
    return REAL_WITHSTOOD_MOMENTUM * (geometry.mass * gravity * geometry.length) / (
        REAL_BOX_MASS * gravity * REAL_BOX_LENGTH)


def quasi_static_tilt_oracle(
    box: BoxGeometry,
    friction: MaterialParams,
    tilt: float,
    push_height: float,
    support_inclination: float = math.pi / 2,
    support_at_pivot: bool = True,
    gravity: float = GRAVITY,
) -> float:
    """Horizontal push force that holds the box at ``tilt`` about its support-side
    bottom corner. The pusher is frictionless; derivation in docs/tilt_oracle.md.
    """
    if not 0.0 <= tilt < math.pi / 2:
        raise ValueError("tilt must lie in [0, pi/2)")
    if push_height <= 0.0:
        raise ValueError("push height must be positive")
    c, s = math.cos(tilt), math.sin(tilt)
    arm = box.length / 2 * c - box.height / 2 * s  # horizontal COM offset from the pivot
    weight = box.mass * gravity
    force = max(0.0, weight * arm / push_height)
    if not _in_pivot_cone(-force, weight, friction, support_inclination, support_at_pivot):
        raise Infeasible(f"pivot friction cannot react a push of {force:.4g} N at tilt {tilt:.4g}")
    return force


def _in_pivot_cone(ry: float, rz: float, friction: MaterialParams, inclination: float,
                   support_at_pivot: bool) -> bool:
    mu_t = friction.friction_box_table
    edges = [(mu_t, 1.0), (-mu_t, 1.0)]
    if support_at_pivot:
        n = (-math.sin(inclination), math.cos(inclination))
        t = (math.cos(inclination), math.sin(inclination))
        mu_s = friction.friction_box_support
        edges += [(n[0] + mu_s * t[0], n[1] + mu_s * t[1]), (n[0] - mu_s * t[0], n[1] - mu_s * t[1])]
    # angles measured from the table normal, positive towards -y
    angles = [math.atan2(-ey, ez) for ey, ez in edges]
    ang = math.atan2(-ry, rz)
    return min(angles) - 1e-12 <= ang <= max(angles) + 1e-12


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeResult:
    max_pitch: float
    success: bool
    termination_reason: TerminationReason
    steps_used: int
    final_d: float


def run_episode(
    policy: Policy,
    scenario: ScenarioParams,
    env_config: EnvConfig = EnvConfig(),
    criterion: CompletionCriterion = CompletionCriterion(),
    success_angle: float | None = None,
    trace: list[str] | None = None,
) -> EpisodeResult:
    """Roll out ``policy`` from a freshly built scenario.

    ``success_angle`` replaces the length-derived threshold when given. Physics
    failures end the episode and count as unsuccessful.
    """
    env = PregraspEnv(env_config)
    obs = env.reset(replace(scenario, used_reference_init=False))
    reason = TerminationReason.NONE
    while True:
        action = np.asarray(policy(obs.as_array()), dtype=float)
        res = env.step(action)
        if trace is not None:
            trace.append(trace_record(env.step_index, res.observation, action, res.reward,
                                      res.termination_reason))
        obs, reason = res.observation, res.termination_reason
        if res.terminated:
            break
    max_pitch = min(env.max_pitch, PITCH_LIMIT)
    if success_angle is None:
        ok = task_success(scenario.box_geometry.length, max_pitch, criterion)
    else:
        ok = max_pitch > success_angle
    if reason is TerminationReason.SOLVER_FAILURE:
        ok = False
    return EpisodeResult(max_pitch, ok, reason, env.step_index, obs.d)


def draw_scenario(table: RandomizationTable, rng: np.random.Generator,
                  env_config: EnvConfig = EnvConfig()) -> ScenarioParams:
    """Sample a feasible evaluation scenario (no reference initialization)."""
    table = replace(table, reference_probability=0.0)
    for _ in range(1000):
        sc = env_config.draw(table, rng)
        try:
            check_feasible(sc, env_config.scene)
        except InfeasibleScenario:
            continue
        return sc
    raise InfeasibleScenario("could not draw a feasible scenario in 1000 attempts")


@dataclass(frozen=True)
class EvalSummary:
    episodes: int
    success_rate: float
    mean_max_pitch: float
    std_max_pitch: float
    results: tuple[EpisodeResult, ...]


def summarize(results: Sequence[EpisodeResult]) -> EvalSummary:
    pitches = np.array([r.max_pitch for r in results])
    n = len(results)
    if n == 0:
        return EvalSummary(0, 0.0, 0.0, 0.0, ())
    return EvalSummary(n, float(np.mean([r.success for r in results])),
                       float(pitches.mean()), float(pitches.std()), tuple(results))


def evaluate_policy(
    policy: Policy,
    episodes: int,
    rng: np.random.Generator,
    table: RandomizationTable = RandomizationTable(),
    env_config: EnvConfig = EnvConfig(),
    criterion: CompletionCriterion = CompletionCriterion(),
) -> EvalSummary:
    results = []
    for _ in range(episodes):
        sc = draw_scenario(table, rng, env_config)
        results.append(run_episode(policy, sc, env_config, criterion))
    return summarize(results)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


class SweepAxis(str, enum.Enum):
    WIDTH = "width"
    HEIGHT = "height"
    MASS = "mass"
    FRICTION = "friction"
    INITIAL_Y = "initial_y"
    SUPPORT_INCLINATION = "support_inclination"


_AXIS_LIMITS = {
    SweepAxis.WIDTH: (0.05, 0.40),
    SweepAxis.HEIGHT: (0.02, 0.15),
    SweepAxis.MASS: (0.005, 1.0),
    SweepAxis.FRICTION: (0.0, 2.0),
    SweepAxis.INITIAL_Y: (0.0, 0.30),
    SweepAxis.SUPPORT_INCLINATION: (math.pi / 3, math.pi / 2),
}


@dataclass(frozen=True)
class SweepSpec:
    axis: SweepAxis
    grid: tuple[float, ...]
    episodes_per_point: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "axis", SweepAxis(self.axis))
        if not self.grid:
            raise ValueError("sweep grid must be non-empty")
        if self.episodes_per_point < 1:
            raise ValueError("episodes_per_point must be >= 1")
        lo, hi = _AXIS_LIMITS[self.axis]
        for v in self.grid:
            if not lo <= v <= hi:
                raise ValueError(f"{self.axis.value}={v} outside the valid range [{lo}, {hi}]")


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    episodes: int
    success_rate: float
    mean_max_pitch: float
    std_max_pitch: float


SWEEP_HEADER = ("axis", "value", "episodes", "success_rate", "mean_max_pitch", "std_max_pitch")


def override_scenario(base: ScenarioParams, axis: SweepAxis, value: float) -> ScenarioParams:
    g = base.box_geometry
    if axis is SweepAxis.WIDTH:
        return replace(base, box_geometry=replace(g, length=value))
    if axis is SweepAxis.HEIGHT:
        return replace(base, box_geometry=replace(g, height=value))
    if axis is SweepAxis.MASS:
        return replace(base, box_mass=value, box_geometry=replace(g, mass=value))
    if axis is SweepAxis.FRICTION:
        return replace(base, friction=value)
    if axis is SweepAxis.INITIAL_Y:
        return replace(base, box_position_y=value)
    return replace(base, support_inclination=value)


def sweep_scenarios(spec: SweepSpec, value: float, env_config: EnvConfig = EnvConfig()) -> list[ScenarioParams]:
    """Default scenario with the effector start randomized per its table rows
    and the swept parameter overridden; everything else at its default."""
    index = spec.grid.index(value)
    rng = np.random.default_rng([spec.seed, index])
    table = RandomizationTable()
    table = RandomizationTable({k: (r if k.startswith("eff_") else replace(r, probability=0.0))
                                for k, r in table.rows.items()}, 0.0)
    out = []
    while len(out) < spec.episodes_per_point:
        sc = override_scenario(env_config.draw(table, rng), spec.axis, value)
        try:
            check_feasible(sc, env_config.scene)
        except InfeasibleScenario:
            continue
        out.append(sc)
    return out


def run_sweep(
    policy: Policy,
    spec: SweepSpec,
    env_config: EnvConfig = EnvConfig(),
    success_angle: float = SWEEP_SUCCESS_ANGLE,
) -> list[SweepRow]:
    rows = []
    for value in spec.grid:
        results = []
        for sc in sweep_scenarios(spec, value, env_config):
            try:
                results.append(run_episode(policy, sc, env_config, success_angle=success_angle))
            except (phys.NonFiniteState, phys.InvalidState, InfeasibleScenario):
                results.append(EpisodeResult(0.0, False, TerminationReason.SOLVER_FAILURE, 0, math.nan))
        s = summarize(results)
        rows.append(SweepRow(spec.axis.value, float(value), s.episodes, s.success_rate,
                             s.mean_max_pitch, s.std_max_pitch))
    return rows


# ---------------------------------------------------------------------------
# disturbance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DisturbanceOutcome:
    momentum: float
    withstood: bool
    pitch_at_impulse: float
    min_pitch_after: float


def _lift(policy: Policy, scenario: ScenarioParams, env_config: EnvConfig, angle: float):
    env = PregraspEnv(env_config)
    obs = env.reset(replace(scenario, used_reference_init=False))
    while obs.target_pitch < angle:
        res = env.step(np.asarray(policy(obs.as_array()), dtype=float))
        obs = res.observation
        if res.terminated and obs.target_pitch < angle:
            return None
    return env.world


def disturbance_trial(
    policy: Policy,
    scenario: ScenarioParams,
    momentum: float,
    env_config: EnvConfig = EnvConfig(),
    lift_angle: float | None = None,
    hold_seconds: float = HOLD_SECONDS,
) -> DisturbanceOutcome:
    """Lift with the policy, knock the box down by ``momentum`` and keep the
    policy running for ``hold_seconds``; withstood iff pitch never drops to
    the fallen threshold."""
    angle = lift_angle if lift_angle is not None else lift_threshold_angle(scenario.box_geometry.length)
    world = _lift(policy, scenario, env_config, angle)
    if world is None:
        raise NoLiftAchieved("policy did not lift the box")
    pitch0 = world.box.pitch
    world = phys.apply_angular_impulse(world, momentum)
    steps = int(round(hold_seconds * 1.0 / (TICKS_PER_ACTION * phys.PHYSICS_DT)))
    lowest = world.box.pitch
    handed_off = False
    for _ in range(steps):
        # the policy's task ends at the pitch limit; from then on the effector
        # holds its last command, as it would while a grasp closes
        handed_off = handed_off or world.box.pitch >= PITCH_LIMIT
        if handed_off:
            cmd = world.effector.commanded_pose
        else:
            obs = observe(world)
            action = np.clip(np.asarray(policy(obs.as_array()), dtype=float), -ACTION_BOUND, ACTION_BOUND)
            cmd = integrate_command(world.effector.commanded_pose, action, env_config.workspace)
        try:
            world = phys.step_physics(world.with_command(cmd), ticks=TICKS_PER_ACTION)
        except phys.NonFiniteState:
            return DisturbanceOutcome(momentum, False, pitch0, -math.inf)
        lowest = min(lowest, world.box.pitch)
        if lowest <= FALLEN_PITCH:
            break
    return DisturbanceOutcome(momentum, lowest > FALLEN_PITCH, pitch0, lowest)


def robustness_disturbance_test(
    policy: Policy,
    scenario: ScenarioParams,
    momentum_grid: Sequence[float],
    env_config: EnvConfig = EnvConfig(),
) -> tuple[float | None, list[DisturbanceOutcome]]:
    """Largest grid momentum withstood, or None if none was."""
    outcomes = [disturbance_trial(policy, scenario, m, env_config) for m in sorted(momentum_grid)]
    best = max((o.momentum for o in outcomes if o.withstood), default=None)
    return best, outcomes
