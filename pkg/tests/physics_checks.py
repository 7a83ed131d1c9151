"""Physics property checks shared by the unit suite and the acceptance run."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pregrasp import physics2d as phys
from pregrasp.env import ACTION_BOUND, PregraspEnv, RandomizationTable, check_feasible
from pregrasp.env import InfeasibleScenario
from pregrasp.evaluation import quasi_static_tilt_oracle
from pregrasp.physics2d import BoxGeometry, EffectorState, MaterialParams, RigidBodyState2D, SceneParams


def resting_drift(seconds: float = 5.0, geometry: BoxGeometry = BoxGeometry()) -> tuple[float, float]:
    """Max position and angle drift of a box left resting on the table."""
    scene = SceneParams(box=geometry)
    start = RigidBodyState2D((0.21, geometry.height / 2), 0.0)
    world = phys.make_world(scene, start, EffectorState((-0.2, 0.3), -2.75))
    dpos = dang = 0.0
    for _ in range(int(round(seconds / phys.PHYSICS_DT)) // 100):
        world = phys.step_physics(world, ticks=100)
        b = world.box
        dpos = max(dpos, math.hypot(b.position[0] - start.position[0], b.position[1] - start.position[1]))
        dang = max(dang, abs(b.pitch))
    return dpos, dang


@dataclass
class PushStats:
    steps: int
    contact_steps: int
    max_friction_excess: float
    max_penetration: float


def random_pushing(steps: int, seed: int) -> PushStats:
    """Fully randomized scenarios driven by random actions biased into the box."""
    rng = np.random.default_rng(seed)
    table = RandomizationTable().with_probabilities(1.0, 0.0)
    env = PregraspEnv()
    excess = pen = 0.0
    done = touching = 0

    def new_episode():
        while True:
            sc = env.config.draw(table, rng)
            try:
                check_feasible(sc)
                return env.reset(sc)
            except InfeasibleScenario:
                continue

    obs = new_episode()
    while done < steps:
        toward = np.array([np.sign(obs.target_y - obs.eff_y), np.sign(0.03 - obs.eff_z), 0.0])
        action = np.clip(rng.uniform(-1, 1, 3) * ACTION_BOUND + 0.6 * toward * ACTION_BOUND,
                         -ACTION_BOUND, ACTION_BOUND)
        res = env.step(action)
        done += 1
        d = env.world.diagnostics
        excess = max(excess, d.max_friction_excess)
        pen = max(pen, d.max_penetration)
        touching += any(c.pair_id == phys.BOX_EFFECTOR for c in env.world.contacts)
        obs = new_episode() if res.terminated else res.observation
    return PushStats(done, touching, excess, pen)


def onset_force(
    geometry: BoxGeometry,
    friction: float,
    push_height: float,
    inclination: float = math.radians(75),
    speed: float = 1e-3,
) -> tuple[float, float]:
    """Slow-push a box into an inclined support with a frictionless effector.

    Returns (simulated push force when the box starts to tilt, oracle force).
    """
    scene = SceneParams(box=geometry, material=MaterialParams(friction, friction, 0.0),
                        support_inclination=inclination)
    r = scene.effector_radius
    y = scene.support_y - geometry.length / 2
    world = phys.make_world(scene, RigidBodyState2D((y, geometry.height / 2), 0.0),
                            EffectorState((y - geometry.length / 2 - r - 1e-3, push_height), -2.75))
    world = phys.step_physics(world, ticks=200)
    cmd = list(world.effector.commanded_pose)
    force = 0.0
    for _ in range(20_000):
        cmd[0] += speed * phys.PHYSICS_DT
        world = phys.step_physics(world.with_command(tuple(cmd)))
        force = sum(c.normal_impulse * c.normal[0] for c in world.contacts
                    if c.pair_id == phys.BOX_EFFECTOR) / phys.PHYSICS_DT
        if world.box.pitch > 1e-3:
            break
    else:
        raise AssertionError("box never tilted")
    oracle = quasi_static_tilt_oracle(geometry, MaterialParams(friction, friction, 0.0), 0.0,
                                      push_height, inclination)
    return force, oracle


def random_onset_configs(n: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        length = float(rng.uniform(0.12, 0.22))
        height = float(rng.uniform(0.045, 0.08))
        mass = float(rng.uniform(0.02, 0.10))
        mu = float(rng.uniform(0.2, 0.8))
        z = float(rng.uniform(0.022, height - 0.008))
        out.append((BoxGeometry(length, height, mass), mu, z))
    return out
