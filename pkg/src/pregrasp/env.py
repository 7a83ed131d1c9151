"""Pregrasp push-and-pivot task as an episodic MDP on top of :mod:`physics2d`."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import physics2d as phys
from .physics2d import (
    BoxGeometry,
    EffectorState,
    MaterialParams,
    RigidBodyState2D,
    SceneParams,
    WorldState,
)

ACTION_BOUND = np.array([0.025, 0.025, 0.01])
PITCH_LIMIT = 0.785
TICKS_PER_ACTION = 40  # 1 kHz physics / 25 Hz actions
SETTLE_SPEED = 1e-4
SETTLE_MAX_TICKS = 2000
WORKSPACE_SLACK = 0.01  # actual pose may be pushed this far past the command box


class TerminationReason(str, enum.Enum):
    NONE = "None"
    PITCH_LIMIT = "PitchLimit"
    WORKSPACE_VIOLATION = "WorkspaceViolation"
    SUPPORT_COLLISION = "SupportCollision"
    SOLVER_FAILURE = "SolverFailure"
    HORIZON_REACHED = "HorizonReached"

    @property
    def absorbing(self) -> bool:
        """Whether the critic should treat the next state as having zero value."""
        return self in (
            TerminationReason.SUPPORT_COLLISION,
            TerminationReason.WORKSPACE_VIOLATION,
            TerminationReason.SOLVER_FAILURE,
        )


class InvalidTable(ValueError):
    pass


class InfeasibleScenario(ValueError):
    pass


class EpisodeFinished(RuntimeError):
    pass


@dataclass(frozen=True)
class Workspace:
    y: tuple[float, float] = (-0.35, 0.34)
    z: tuple[float, float] = (0.02, 0.45)
    pitch: tuple[float, float] = (-3.0, -2.0)

    def clamp(self, pose: Sequence[float]) -> tuple[float, float, float]:
        return (
            min(max(pose[0], self.y[0]), self.y[1]),
            min(max(pose[1], self.z[0]), self.z[1]),
            min(max(pose[2], self.pitch[0]), self.pitch[1]),
        )

    def contains(self, pose: Sequence[float], slack: float = 0.0) -> bool:
        return all(
            lo - slack <= v <= hi + slack
            for v, (lo, hi) in zip(pose, (self.y, self.z, self.pitch))
        )


@dataclass(frozen=True)
class Observation:
    d: float
    eff_y: float
    eff_z: float
    eff_pitch: float
    target_y: float
    target_z: float
    target_pitch: float

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("clearance must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.d, self.eff_y, self.eff_z, self.eff_pitch,
                         self.target_y, self.target_z, self.target_pitch])


@dataclass(frozen=True)
class RewardConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("reward weights must be positive")


@dataclass(frozen=True)
class RandomizationRow:
    default: float
    low: float
    high: float
    probability: float

    def validate(self, name: str) -> None:
        if self.low > self.high:
            raise InvalidTable(f"{name}: min {self.low} > max {self.high}")
        if not 0.0 <= self.probability <= 1.0:
            raise InvalidTable(f"{name}: probability {self.probability} outside [0, 1]")


def _default_rows() -> dict[str, RandomizationRow]:
    # bounds of the end-effector pitch row are listed as (-2.40, -2.80) in the
    # source table; stored here in ascending order
    return {
        "mass": RandomizationRow(0.08, 0.02, 0.10, 0.30),
        "friction": RandomizationRow(0.40, 0.20, 0.80, 0.25),
        "object_position": RandomizationRow(0.21, 0.16, 0.23, 0.20),
        "support_position": RandomizationRow(0.35, 0.32, 0.38, 0.05),
        "eff_y": RandomizationRow(0.00, -0.30, 0.10, 0.40),
        "eff_z": RandomizationRow(0.18, 0.17, 0.25, 0.40),
        "eff_pitch": RandomizationRow(-2.75, -2.80, -2.40, 0.40),
    }


ROW_NAMES = tuple(_default_rows())


@dataclass(frozen=True)
class RandomizationTable:
    rows: dict[str, RandomizationRow] = field(default_factory=_default_rows)
    reference_probability: float = 0.05

    def validate(self) -> None:
        if set(self.rows) != set(ROW_NAMES):
            raise InvalidTable(f"table rows must be exactly {ROW_NAMES}")
        for name, row in self.rows.items():
            row.validate(name)
        if not 0.0 <= self.reference_probability <= 1.0:
            raise InvalidTable("reference probability outside [0, 1]")

    def with_probabilities(self, p: float, reference: float | None = None) -> "RandomizationTable":
        rows = {k: replace(r, probability=p) for k, r in self.rows.items()}
        ref = self.reference_probability if reference is None else reference
        return RandomizationTable(rows, ref)


@dataclass(frozen=True)
class ScenarioParams:
    box_mass: float = 0.08
    friction: float = 0.40
    box_position_y: float = 0.21
    support_position_y: float = 0.35
    eff_init: tuple[float, float, float] = (0.00, 0.18, -2.75)
    box_geometry: BoxGeometry = BoxGeometry(0.17, 0.06, 0.08)
    support_inclination: float = math.pi / 2
    used_reference_init: bool = False
    effector_friction: float = 1.0

    def scene(self, base: SceneParams | None = None) -> SceneParams:
        base = base or SceneParams()
        return replace(
            base,
            box=replace(self.box_geometry, mass=self.box_mass),
            material=MaterialParams(self.friction, self.friction, self.effector_friction),
            support_y=self.support_position_y,
            support_inclination=self.support_inclination,
        )


def sample_scenario(
    table: RandomizationTable,
    rng: np.random.Generator,
    geometry: BoxGeometry = BoxGeometry(),
    support_inclination: float = math.pi / 2,
) -> ScenarioParams:
    """Draw one randomized scenario; each row is resampled with its own probability."""
    table.validate()
    vals = {}
    for name in ROW_NAMES:
        row = table.rows[name]
        if rng.random() < row.probability:
            vals[name] = float(rng.uniform(row.low, row.high))
        else:
            vals[name] = row.default
    use_ref = bool(rng.random() < table.reference_probability)
    return ScenarioParams(
        box_mass=vals["mass"],
        friction=vals["friction"],
        box_position_y=vals["object_position"],
        support_position_y=vals["support_position"],
        eff_init=(vals["eff_y"], vals["eff_z"], vals["eff_pitch"]),
        box_geometry=replace(geometry, mass=vals["mass"]),
        support_inclination=support_inclination,
        used_reference_init=use_ref,
    )


def integrate_command(
    current: Sequence[float], action: Sequence[float], workspace: Workspace = Workspace()
) -> tuple[float, float, float]:
    """Add an incremental action to the commanded pose and clamp to the workspace."""
    a = np.asarray(action, dtype=float)
    if np.any(np.abs(a) > ACTION_BOUND + 1e-12):
        raise ValueError(f"action {a} outside bounds {ACTION_BOUND}")
    return workspace.clamp((current[0] + a[0], current[1] + a[1], current[2] + a[2]))


def compute_reward(obs: Observation, config: RewardConfig) -> float:
    return config.lambda1 * obs.target_pitch - config.lambda2 * obs.d


def observe(world: WorldState) -> Observation:
    box = world.box
    eff = world.effector
    d = phys.signed_clearance(eff, box, world.scene.box)
    return Observation(d, eff.center[0], eff.center[1], eff.pitch,
                       box.position[0], box.position[1], box.pitch)


def check_termination(
    world: WorldState,
    step_index: int,
    horizon: int,
    workspace: Workspace = Workspace(),
) -> TerminationReason:
    eff = world.effector
    touching_support = world.diagnostics.min_effector_support_gap <= phys.CONTACT_TOUCH_TOLERANCE
    touching_support = touching_support or any(
        c.pair_id == phys.EFFECTOR_SUPPORT for c in phys.detect_contacts(world)
    )
    if touching_support:
        return TerminationReason.SUPPORT_COLLISION
    if not workspace.contains((*eff.center, eff.pitch), slack=WORKSPACE_SLACK):
        return TerminationReason.WORKSPACE_VIOLATION
    if world.box.pitch > PITCH_LIMIT:
        return TerminationReason.PITCH_LIMIT
    if step_index >= horizon:
        return TerminationReason.HORIZON_REACHED
    return TerminationReason.NONE


def _overlaps(scene: SceneParams, box: RigidBodyState2D, eff: EffectorState) -> str | None:
    ny, nz = scene.support_normal
    for cy, cz in phys.box_corners(box, scene.box):
        if ny * (cy - scene.support_y) + nz * cz < 0:
            return "box overlaps the support"
    probe = phys.make_world(scene, box, eff)
    if any(c.pair_id == phys.BOX_EFFECTOR for c in phys.detect_contacts(probe)):
        return "box overlaps the effector"
    if ny * (eff.center[0] - scene.support_y) + nz * eff.center[1] < eff.radius:
        return "effector overlaps the support"
    return None


def _initial_bodies(scenario: ScenarioParams, scene: SceneParams):
    box = RigidBodyState2D((scenario.box_position_y, scene.box.height / 2), 0.0)
    ey, ez, ep = scenario.eff_init
    eff = EffectorState((ey, ez), ep, radius=scene.effector_radius)
    problem = _overlaps(scene, box, eff)
    if problem:
        raise InfeasibleScenario(problem)
    return box, eff


def check_feasible(scenario: ScenarioParams, base: SceneParams | None = None) -> None:
    """Raise InfeasibleScenario if the initial bodies would overlap."""
    _initial_bodies(scenario, scenario.scene(base))


def build_world(scenario: ScenarioParams, base: SceneParams | None = None) -> WorldState:
    """Place the box flat on the table and the effector at its initial pose, then settle."""
    scene = scenario.scene(base)
    box, eff = _initial_bodies(scenario, scene)
    world = phys.make_world(scene, box, eff)
    for _ in range(SETTLE_MAX_TICKS // 20):
        world = phys.step_physics(world, ticks=20)
        b = world.box
        if max(abs(b.linear_velocity[0]), abs(b.linear_velocity[1]), abs(b.angular_velocity)) < SETTLE_SPEED:
            break
    return world


@dataclass
class StepResult:
    observation: Observation
    reward: float
    terminated: bool
    termination_reason: TerminationReason
    info: dict = field(default_factory=dict)


class ReferenceLibrary:
    """Saved world states used to start some training episodes mid-task."""

    def __init__(self, states: Sequence[WorldState] = (), capacity: int = 100, pinned: int | None = None):
        self.states: list[WorldState] = list(states)
        self.capacity = capacity
        self.pinned = len(self.states) if pinned is None else pinned
        self._next = self.pinned

    def __len__(self) -> int:
        return len(self.states)

    def add(self, world: WorldState) -> None:
        if len(self.states) < self.capacity:
            self.states.append(world)
            return
        # FIFO over the non-pinned part
        span = self.capacity - self.pinned
        if span <= 0:
            return
        self.states[self._next] = world
        self._next = self.pinned + (self._next - self.pinned + 1) % span

    def choose(self, rng: np.random.Generator) -> WorldState:
        if not self.states:
            raise InfeasibleScenario("reference initialization drawn but the library is empty")
        return self.states[int(rng.integers(len(self.states)))]


def leaning_box_world(
    pitch: float,
    scenario: ScenarioParams = ScenarioParams(),
    press_depth: float = 0.008,
    base: SceneParams | None = None,
) -> WorldState:
    """Box lifted by ``pitch`` with its back-top edge on the support and the
    effector pressing the middle of the front face."""
    scene = scenario.scene(base)
    g = scene.box
    c, s = math.cos(pitch), math.sin(pitch)
    ys = scene.support_y
    # back-bottom corner on the table, back-top corner on the (vertical) support
    back_bottom = (ys - g.height * s, 0.0)
    # centre = back-bottom + R(-pitch) (-L/2, +h/2)
    cy = back_bottom[0] + (-g.length / 2) * c + (g.height / 2) * s
    cz = back_bottom[1] - (-g.length / 2) * s + (g.height / 2) * c
    box = RigidBodyState2D((cy, cz), pitch)
    fb, _, _, ft = phys.box_corners(box, g)
    mid = ((fb[0] + ft[0]) / 2, (fb[1] + ft[1]) / 2)
    normal = (-c, s)  # outward normal of the front face
    r = scene.effector_radius
    centre = (mid[0] + normal[0] * r, mid[1] + normal[1] * r)
    command = (centre[0] - normal[0] * press_depth, centre[1] - normal[1] * press_depth,
               scenario.eff_init[2])
    eff = EffectorState(centre, scenario.eff_init[2], radius=r, commanded_pose=command)
    return phys.make_world(scene, box, eff)


def face_contact_world(scenario: ScenarioParams = ScenarioParams(), base: SceneParams | None = None) -> WorldState:
    """Flat box with the effector just touching the middle of its front face."""
    scene = scenario.scene(base)
    g = scene.box
    h = g.height
    box = RigidBodyState2D((scenario.box_position_y, h / 2), 0.0)
    r = scene.effector_radius
    centre = (scenario.box_position_y - g.length / 2 - r, max(h / 2, r))
    eff = EffectorState(centre, scenario.eff_init[2], radius=r)
    return phys.make_world(scene, box, eff)


def default_reference_library(base: SceneParams | None = None) -> ReferenceLibrary:
    states = [face_contact_world(base=base)]
    states += [leaning_box_world(p, base=base) for p in (0.1, 0.2, 0.4)]
    return ReferenceLibrary(states)


@dataclass(frozen=True)
class EnvConfig:
    reward: RewardConfig = RewardConfig()
    horizon: int = 100
    workspace: Workspace = Workspace()
    scene: SceneParams = SceneParams()

    def draw(self, table: RandomizationTable, rng: np.random.Generator) -> ScenarioParams:
        """Randomized scenario using this config's box geometry and support."""
        return sample_scenario(table, rng, self.scene.box, self.scene.support_inclination)


class PregraspEnv:
    """Single-threaded episodic environment. Not safe to share across threads."""

    def __init__(self, config: EnvConfig = EnvConfig(), library: ReferenceLibrary | None = None):
        self.config = config
        self.library = library if library is not None else default_reference_library(config.scene)
        self.world: WorldState | None = None
        self.scenario: ScenarioParams | None = None
        self.step_index = 0
        self.max_pitch = 0.0
        self.done = True
        self.trace: list[WorldState] = []

    def reset(self, scenario: ScenarioParams, rng: np.random.Generator | None = None) -> Observation:
        if scenario.used_reference_init:
            if rng is None:
                raise ValueError("reference initialization needs an rng")
            self.world = self.library.choose(rng)
        else:
            self.world = build_world(scenario, self.config.scene)
        self.scenario = scenario
        self.step_index = 0
        obs = observe(self.world)
        self.max_pitch = obs.target_pitch
        self.done = False
        self.trace = [self.world]
        return obs

    def step(self, action: Sequence[float]) -> StepResult:
        if self.done or self.world is None:
            raise EpisodeFinished("reset() before stepping a finished episode")
        cmd = integrate_command(self.world.effector.commanded_pose, action, self.config.workspace)
        self.step_index += 1
        try:
            world = phys.step_physics(self.world.with_command(cmd), ticks=TICKS_PER_ACTION)
        except phys.NonFiniteState:
            self.done = True
            obs = observe(self.world)
            return StepResult(obs, compute_reward(obs, self.config.reward), True,
                              TerminationReason.SOLVER_FAILURE, {"max_pitch_so_far": self.max_pitch})
        self.world = world
        self.trace.append(world)
        obs = observe(world)
        self.max_pitch = max(self.max_pitch, obs.target_pitch)
        reason = check_termination(world, self.step_index, self.config.horizon, self.config.workspace)
        self.done = reason is not TerminationReason.NONE
        if reason is TerminationReason.PITCH_LIMIT:
            self.library.add(self.trace[len(self.trace) // 2])
        return StepResult(obs, compute_reward(obs, self.config.reward), self.done, reason,
                          {"max_pitch_so_far": self.max_pitch})


def trace_record(t: int, obs: Observation, action: Sequence[float], reward: float,
                 reason: TerminationReason) -> str:
    """One line of an episode trace dump."""
    return json.dumps({
        "t": t,
        "observation": [float(x) for x in obs.as_array()],
        "action": [float(x) for x in action],
        "reward": float(reward),
        "termination_reason": reason.value,
    })
