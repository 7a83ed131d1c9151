"""Planar rigid-body simulation of one box, a table, a support surface and a
spherical end-effector.

Coordinates are (y, z): y points from the end-effector towards the support,
z points up, the table occupies z <= 0. The box pitch is positive when the
face nearest the effector (the *front* face) is raised off the table.

The hot loop lives in numba-compiled kernels operating on flat float64
arrays; :class:`WorldState` is the value-level view used everywhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

GRAVITY = 9.81
PHYSICS_DT = 1e-3
TRACKER_DECIMATION = 2  # tracker runs at 500 Hz on a 1 kHz physics clock
PENETRATION_TOLERANCE = 1e-4
CONTACT_TOUCH_TOLERANCE = 1e-5
RESTITUTION = 0.0

# pair ids
BOX_TABLE = 0
BOX_SUPPORT = 1
BOX_EFFECTOR = 2
EFFECTOR_TABLE = 3
EFFECTOR_SUPPORT = 4
PAIR_NAMES = ("box-table", "box-support", "box-effector", "effector-table", "effector-support")

# state vector layout
_BY, _BZ, _BPHI, _BVY, _BVZ, _BW = 0, 1, 2, 3, 4, 5
_EY, _EZ, _EP, _EVY, _EVZ, _EPR = 6, 7, 8, 9, 10, 11
_CY, _CZ, _CP = 12, 13, 14
_FY, _FZ, _FP = 15, 16, 17
_TICK = 18
_WARM = 19  # 5 pairs x 4 features x (normal, tangent)
STATE_SIZE = _WARM + 40

# parameter vector layout
(_L, _H, _M, _I, _R, _ME, _MU_BT, _MU_BS, _MU_BE, _MU_ET, _MU_ES, _SY, _SINC,
 _G, _BETA, _SLOP, _ITERS, _FCAP, _WN, _MARGIN) = range(20)
PARAM_SIZE = 20

MAX_CONTACTS = 7
# contact record: pair, feature, py, pz, ny, nz, separation, jn, jt, mu
_CREC = 10


class NonFiniteState(RuntimeError):
    """Raised when the solver produces NaN or Inf values."""


class InvalidState(ValueError):
    """Raised when an operation is undefined for the current world."""


@dataclass(frozen=True)
class BoxGeometry:
    length: float = 0.17
    height: float = 0.06
    mass: float = 0.08

    def __post_init__(self):
        if not (self.length > 0 and self.height > 0 and self.mass > 0):
            raise ValueError(f"box dimensions and mass must be positive: {self}")

    @property
    def moment_of_inertia(self) -> float:
        return self.mass * (self.length**2 + self.height**2) / 12.0


@dataclass(frozen=True)
class MaterialParams:
    friction_box_table: float = 0.4
    friction_box_support: float = 0.4
    friction_box_effector: float = 1.0
    restitution: float = RESTITUTION

    def __post_init__(self):
        for name in ("friction_box_table", "friction_box_support", "friction_box_effector"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.restitution != 0.0:
            raise ValueError("restitution is fixed at 0")


@dataclass(frozen=True)
class SolverParams:
    beta: float = 0.2
    slop: float = 1e-4
    iterations: int = 10
    speculative_margin: float = 2e-3


@dataclass(frozen=True)
class RigidBodyState2D:
    position: tuple[float, float]
    pitch: float
    linear_velocity: tuple[float, float] = (0.0, 0.0)
    angular_velocity: float = 0.0


@dataclass(frozen=True)
class EffectorState:
    center: tuple[float, float]
    pitch: float
    radius: float = 0.02
    commanded_pose: tuple[float, float, float] | None = None
    velocity: tuple[float, float] = (0.0, 0.0)
    pitch_rate: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("effector radius must be positive")


@dataclass(frozen=True)
class ContactPoint:
    point: tuple[float, float]
    normal: tuple[float, float]
    penetration_depth: float
    normal_impulse: float
    tangent_impulse: float
    pair_id: int
    friction: float = 0.0

    @property
    def pair(self) -> str:
        return PAIR_NAMES[self.pair_id]


@dataclass(frozen=True)
class SceneParams:
    """Everything static about a world: geometry, materials, solver knobs."""

    box: BoxGeometry = BoxGeometry()
    material: MaterialParams = MaterialParams()
    support_y: float = 0.35
    support_inclination: float = math.pi / 2
    effector_radius: float = 0.02
    effector_mass: float = 1.0
    tracker_force_cap: float = 50.0
    tracker_omega: float = 95.0
    gravity: float = GRAVITY
    solver: SolverParams = SolverParams()

    def to_array(self) -> np.ndarray:
        p = np.zeros(PARAM_SIZE)
        p[_L], p[_H], p[_M] = self.box.length, self.box.height, self.box.mass
        p[_I] = self.box.moment_of_inertia
        p[_R], p[_ME] = self.effector_radius, self.effector_mass
        p[_MU_BT] = self.material.friction_box_table
        p[_MU_BS] = self.material.friction_box_support
        p[_MU_BE] = self.material.friction_box_effector
        p[_MU_ET] = self.material.friction_box_effector
        p[_MU_ES] = self.material.friction_box_effector
        p[_SY], p[_SINC] = self.support_y, self.support_inclination
        p[_G] = self.gravity
        p[_BETA], p[_SLOP] = self.solver.beta, self.solver.slop
        p[_ITERS] = self.solver.iterations
        p[_FCAP], p[_WN] = self.tracker_force_cap, self.tracker_omega
        p[_MARGIN] = self.solver.speculative_margin
        return p

    @property
    def support_normal(self) -> tuple[float, float]:
        return (-math.sin(self.support_inclination), math.cos(self.support_inclination))


def wrap_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class StepDiagnostics:
    max_penetration: float = 0.0
    min_effector_support_gap: float = math.inf
    max_friction_excess: float = -math.inf


@dataclass(frozen=True)
class WorldState:
    """Immutable snapshot of a simulated scene.

    ``vector`` carries the full dynamic state (including the tracker hold and
    the solver's warm-start cache) so that restoring a snapshot reproduces the
    future bit for bit.
    """

    scene: SceneParams
    vector: np.ndarray = field(repr=False, compare=False)
    contacts: tuple[ContactPoint, ...] = ()
    diagnostics: StepDiagnostics = StepDiagnostics()

    def __post_init__(self):
        self.vector.setflags(write=False)

    @property
    def box(self) -> RigidBodyState2D:
        v = self.vector
        return RigidBodyState2D(
            position=(float(v[_BY]), float(v[_BZ])),
            pitch=wrap_angle(-float(v[_BPHI])),
            linear_velocity=(float(v[_BVY]), float(v[_BVZ])),
            angular_velocity=-float(v[_BW]),
        )

    @property
    def effector(self) -> EffectorState:
        v = self.vector
        return EffectorState(
            center=(float(v[_EY]), float(v[_EZ])),
            pitch=float(v[_EP]),
            radius=self.scene.effector_radius,
            commanded_pose=(float(v[_CY]), float(v[_CZ]), float(v[_CP])),
            velocity=(float(v[_EVY]), float(v[_EVZ])),
            pitch_rate=float(v[_EPR]),
        )

    @property
    def tick(self) -> int:
        return int(self.vector[_TICK])

    @property
    def time(self) -> float:
        return self.tick * PHYSICS_DT

    def with_command(self, command: tuple[float, float, float]) -> "WorldState":
        v = self.vector.copy()
        v[_CY], v[_CZ], v[_CP] = command
        return WorldState(self.scene, v, self.contacts)

    def state_equal(self, other: "WorldState") -> bool:
        """Bitwise equality of the dynamic state and the scene."""
        return self.scene == other.scene and np.array_equal(
            self.vector.view(np.uint64), other.vector.view(np.uint64)
        )


def make_world(
    scene: SceneParams,
    box: RigidBodyState2D,
    effector: EffectorState,
) -> WorldState:
    v = np.zeros(STATE_SIZE)
    v[_BY], v[_BZ] = box.position
    v[_BPHI] = -box.pitch
    v[_BVY], v[_BVZ] = box.linear_velocity
    v[_BW] = -box.angular_velocity
    v[_EY], v[_EZ] = effector.center
    v[_EP] = effector.pitch
    v[_EVY], v[_EVZ] = effector.velocity
    v[_EPR] = effector.pitch_rate
    cmd = effector.commanded_pose or (effector.center[0], effector.center[1], effector.pitch)
    v[_CY], v[_CZ], v[_CP] = cmd
    if effector.radius != scene.effector_radius:
        scene = replace(scene, effector_radius=effector.radius)
    if not np.all(np.isfinite(v)):
        raise NonFiniteState("initial state is not finite")
    return WorldState(scene, v)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _box_corner(s, p, k):
    # corners in body frame: 0 front-bottom, 1 back-bottom, 2 back-top, 3 front-top
    hl = 0.5 * p[_L]
    hh = 0.5 * p[_H]
    if k == 0:
        lx, lz = -hl, -hh
    elif k == 1:
        lx, lz = hl, -hh
    elif k == 2:
        lx, lz = hl, hh
    else:
        lx, lz = -hl, hh
    c = math.cos(s[_BPHI])
    sn = math.sin(s[_BPHI])
    return s[_BY] + c * lx - sn * lz, s[_BZ] + sn * lx + c * lz


@njit(cache=True)
def _add_contact(C, n, pair, feat, py, pz, ny, nz, sep, mu):
    C[n, 0] = pair
    C[n, 1] = feat
    C[n, 2] = py
    C[n, 3] = pz
    C[n, 4] = ny
    C[n, 5] = nz
    C[n, 6] = sep
    C[n, 7] = 0.0
    C[n, 8] = 0.0
    C[n, 9] = mu
    return n + 1


@njit(cache=True)
def _box_vs_plane(s, p, C, n, pair, ny, nz, oy, oz, margin, mu):
    # keep the two deepest corners within the margin
    best0 = -1
    best1 = -1
    d0 = 1e300
    d1 = 1e300
    for k in range(4):
        cy, cz = _box_corner(s, p, k)
        d = ny * (cy - oy) + nz * (cz - oz)
        if d < margin:
            if d < d0:
                best1, d1 = best0, d0
                best0, d0 = k, d
            elif d < d1:
                best1, d1 = k, d
    for k, d in ((best0, d0), (best1, d1)):
        if k >= 0:
            cy, cz = _box_corner(s, p, k)
            n = _add_contact(C, n, pair, k, cy, cz, ny, nz, d, mu)
    return n


@njit(cache=True)
def _detect(s, p, C, margin):
    n = 0
    sny = -math.sin(p[_SINC])
    snz = math.cos(p[_SINC])
    n = _box_vs_plane(s, p, C, n, BOX_TABLE, 0.0, 1.0, 0.0, 0.0, margin, p[_MU_BT])
    n = _box_vs_plane(s, p, C, n, BOX_SUPPORT, sny, snz, p[_SY], 0.0, margin, p[_MU_BS])

    # effector sphere against the box (normal points from effector into box)
    r = p[_R]
    c = math.cos(s[_BPHI])
    sn = math.sin(s[_BPHI])
    dy = s[_EY] - s[_BY]
    dz = s[_EZ] - s[_BZ]
    qx = c * dy + sn * dz
    qz = -sn * dy + c * dz
    hl = 0.5 * p[_L]
    hh = 0.5 * p[_H]
    cx = min(max(qx, -hl), hl)
    cz = min(max(qz, -hh), hh)
    ex = qx - cx
    ez = qz - cz
    dist = math.sqrt(ex * ex + ez * ez)
    if dist > 1e-12:
        sep = dist - r
        lnx = ex / dist
        lnz = ez / dist
    else:
        # centre inside the box: leave through the nearest face
        gaps = (hl - qx, qx + hl, hh - qz, qz + hh)
        j = 0
        for i in range(1, 4):
            if gaps[i] < gaps[j]:
                j = i
        sep = -gaps[j] - r
        lnx = 1.0 if j == 0 else (-1.0 if j == 1 else 0.0)
        lnz = 1.0 if j == 2 else (-1.0 if j == 3 else 0.0)
        if j == 0:
            cx = hl
        elif j == 1:
            cx = -hl
        elif j == 2:
            cz = hh
        else:
            cz = -hh
    if sep < margin:
        wny = c * lnx - sn * lnz
        wnz = sn * lnx + c * lnz
        py = s[_BY] + c * cx - sn * cz
        pz = s[_BZ] + sn * cx + c * cz
        # normal from effector (body B) into box (body A)
        n = _add_contact(C, n, BOX_EFFECTOR, 0, py, pz, -wny, -wnz, sep, p[_MU_BE])

    # effector against table and support
    sep = s[_EZ] - r
    if sep < margin:
        n = _add_contact(C, n, EFFECTOR_TABLE, 0, s[_EY], s[_EZ] - r, 0.0, 1.0, sep, p[_MU_ET])
    sep = sny * (s[_EY] - p[_SY]) + snz * s[_EZ] - r
    if sep < margin:
        n = _add_contact(C, n, EFFECTOR_SUPPORT, 0, s[_EY] - r * sny, s[_EZ] - r * snz,
                         sny, snz, sep, p[_MU_ES])
    return n


@njit(cache=True)
def _bodies(s, p, pair, py, pz):
    """Return (has_box, box_sign, has_eff, eff_sign, ray, raz)."""
    if pair == BOX_TABLE or pair == BOX_SUPPORT:
        return True, 1.0, False, 0.0, py - s[_BY], pz - s[_BZ]
    if pair == BOX_EFFECTOR:
        return True, 1.0, True, -1.0, py - s[_BY], pz - s[_BZ]
    return False, 0.0, True, 1.0, 0.0, 0.0


@njit(cache=True)
def _rel_vel(s, has_box, bsign, has_eff, esign, ray, raz):
    vy = 0.0
    vz = 0.0
    if has_box:
        vy += bsign * (s[_BVY] - s[_BW] * raz)
        vz += bsign * (s[_BVZ] + s[_BW] * ray)
    if has_eff:
        vy += esign * s[_EVY]
        vz += esign * s[_EVZ]
    return vy, vz


@njit(cache=True)
def _apply(s, p, has_box, bsign, has_eff, esign, ray, raz, jy, jz):
    if has_box:
        s[_BVY] += bsign * jy / p[_M]
        s[_BVZ] += bsign * jz / p[_M]
        s[_BW] += bsign * (ray * jz - raz * jy) / p[_I]
    if has_eff:
        s[_EVY] += esign * jy / p[_ME]
        s[_EVZ] += esign * jz / p[_ME]


@njit(cache=True)
def _eff_mass(p, has_box, has_eff, ray, raz, dy, dz):
    k = 0.0
    if has_box:
        rn = ray * dz - raz * dy
        k += 1.0 / p[_M] + rn * rn / p[_I]
    if has_eff:
        k += 1.0 / p[_ME]
    return k


@njit(cache=True)
def _tick(s, p, C, dt):
    """Advance one physics tick in place. Returns the number of contacts."""
    g = p[_G]
    tick = int(s[_TICK])

    if tick % 2 == 0:
        wn = p[_WN]
        fy = p[_ME] * (wn * wn * (s[_CY] - s[_EY]) - 2.0 * wn * s[_EVY])
        fz = p[_ME] * (wn * wn * (s[_CZ] - s[_EZ]) - 2.0 * wn * s[_EVZ])
        fn = math.sqrt(fy * fy + fz * fz)
        if fn > p[_FCAP]:
            fy *= p[_FCAP] / fn
            fz *= p[_FCAP] / fn
        s[_FY] = fy
        s[_FZ] = fz
        s[_FP] = wn * wn * (s[_CP] - s[_EP]) - 2.0 * wn * s[_EPR]

    # external forces
    s[_BVZ] -= g * dt
    s[_EVY] += s[_FY] / p[_ME] * dt
    s[_EVZ] += s[_FZ] / p[_ME] * dt
    s[_EPR] += s[_FP] * dt

    n = _detect(s, p, C, p[_MARGIN])
    beta = p[_BETA]
    slop = p[_SLOP]

    # warm start
    for i in range(n):
        pair = int(C[i, 0])
        feat = int(C[i, 1])
        w = _WARM + 2 * (4 * pair + feat)
        jn = s[w]
        jt = s[w + 1]
        C[i, 7] = jn
        C[i, 8] = jt
        if jn != 0.0 or jt != 0.0:
            ny, nz = C[i, 4], C[i, 5]
            ty, tz = nz, -ny
            hb, bs, he, es, ray, raz = _bodies(s, p, pair, C[i, 2], C[i, 3])
            _apply(s, p, hb, bs, he, es, ray, raz, jn * ny + jt * ty, jn * nz + jt * tz)

    for _ in range(int(p[_ITERS])):
        for i in range(n):
            pair = int(C[i, 0])
            ny, nz = C[i, 4], C[i, 5]
            ty, tz = nz, -ny
            hb, bs, he, es, ray, raz = _bodies(s, p, pair, C[i, 2], C[i, 3])

            # normal first so the friction clamp below sees the final normal impulse
            vy, vz = _rel_vel(s, hb, bs, he, es, ray, raz)
            vn = vy * ny + vz * nz
            sep = C[i, 6]
            if sep > 0.0:
                target = -sep / dt
            elif -sep > slop:
                target = beta * (-sep - slop) / dt
            else:
                target = 0.0
            kn = _eff_mass(p, hb, he, ray, raz, ny, nz)
            old = C[i, 7]
            new = max(old + (target - vn) / kn, 0.0)
            C[i, 7] = new
            d = new - old
            _apply(s, p, hb, bs, he, es, ray, raz, d * ny, d * nz)

            vy, vz = _rel_vel(s, hb, bs, he, es, ray, raz)
            vt = vy * ty + vz * tz
            kt = _eff_mass(p, hb, he, ray, raz, ty, tz)
            lim = C[i, 9] * C[i, 7]
            old = C[i, 8]
            new = min(max(old - vt / kt, -lim), lim)
            C[i, 8] = new
            d = new - old
            _apply(s, p, hb, bs, he, es, ray, raz, d * ty, d * tz)

    for w in range(_WARM, _WARM + 40):
        s[w] = 0.0
    for i in range(n):
        w = _WARM + 2 * (4 * int(C[i, 0]) + int(C[i, 1]))
        s[w] = C[i, 7]
        s[w + 1] = C[i, 8]

    # integrate positions
    s[_BY] += s[_BVY] * dt
    s[_BZ] += s[_BVZ] * dt
    s[_BPHI] += s[_BW] * dt
    s[_EY] += s[_EVY] * dt
    s[_EZ] += s[_EVZ] * dt
    s[_EP] += s[_EPR] * dt
    _project(s, p)
    s[_TICK] = tick + 1
    return n


@njit(cache=True)
def _project(s, p):
    """Position-only correction pushing box corners out of the table and the
    support until no corner is deeper than half the slop. Velocities are not
    touched, so the Baumgarte bias stays the only velocity-level correction."""
    target = 0.5 * p[_SLOP]
    sny = -math.sin(p[_SINC])
    snz = math.cos(p[_SINC])
    m = p[_M]
    inertia = p[_I]
    for _ in range(8):
        moved = False
        for plane in range(2):
            if plane == 0:
                ny, nz, oy = 0.0, 1.0, 0.0
            else:
                ny, nz, oy = sny, snz, p[_SY]
            for k in range(4):
                cy, cz = _box_corner(s, p, k)
                depth = -(ny * (cy - oy) + nz * cz)
                if depth <= target:
                    continue
                ry = cy - s[_BY]
                rz = cz - s[_BZ]
                rn = ry * nz - rz * ny
                lam = (depth - target) / (1.0 / m + rn * rn / inertia)
                s[_BY] += lam * ny / m
                s[_BZ] += lam * nz / m
                s[_BPHI] += lam * rn / inertia
                moved = True
        if not moved:
            break


@njit(cache=True)
def _max_penetration(s, p):
    """Deepest overlap of the box against table and support after a step."""
    sny = -math.sin(p[_SINC])
    snz = math.cos(p[_SINC])
    worst = 0.0
    for k in range(4):
        cy, cz = _box_corner(s, p, k)
        worst = max(worst, -cz)
        worst = max(worst, -(sny * (cy - p[_SY]) + snz * cz))
    return worst


@njit(cache=True)
def _run(s, p, C, dt, nticks, ev):
    """Run ``nticks`` ticks; ``ev`` accumulates per-tick diagnostics:
    [max box penetration, min effector-support separation, max friction-cone excess].
    """
    n = 0
    sny = -math.sin(p[_SINC])
    snz = math.cos(p[_SINC])
    for _ in range(nticks):
        n = _tick(s, p, C, dt)
        for i in range(n):
            excess = abs(C[i, 8]) - C[i, 9] * C[i, 7]
            if excess > ev[2]:
                ev[2] = excess
        pen = _max_penetration(s, p)
        if pen > ev[0]:
            ev[0] = pen
        sep = sny * (s[_EY] - p[_SY]) + snz * s[_EZ] - p[_R]
        if sep < ev[1]:
            ev[1] = sep
    return n


def _check_finite(v: np.ndarray) -> None:
    if not np.all(np.isfinite(v)):
        raise NonFiniteState("simulation produced non-finite values")


def _contacts_from_records(C: np.ndarray, n: int, touching_only: bool) -> tuple[ContactPoint, ...]:
    out = []
    for i in range(n):
        sep = C[i, 6]
        if touching_only and sep > CONTACT_TOUCH_TOLERANCE:
            continue
        out.append(ContactPoint(
            point=(float(C[i, 2]), float(C[i, 3])),
            normal=(float(C[i, 4]), float(C[i, 5])),
            penetration_depth=max(0.0, float(-sep)),
            normal_impulse=float(C[i, 7]),
            tangent_impulse=float(C[i, 8]),
            pair_id=int(C[i, 0]),
            friction=float(C[i, 9]),
        ))
    return tuple(out)


def step_physics(world: WorldState, dt: float = PHYSICS_DT, ticks: int = 1) -> WorldState:
    """Advance ``ticks`` fixed steps of ``dt`` seconds.

    The returned world carries the solved contact manifold of the final tick
    (impulses included) in ``contacts``.
    """
    if dt != PHYSICS_DT:
        raise ValueError(f"the simulator runs at a fixed dt of {PHYSICS_DT} s")
    s = world.vector.copy()
    p = world.scene.to_array()
    C = np.zeros((MAX_CONTACTS, _CREC))
    ev = np.array([0.0, np.inf, -np.inf])
    n = _run(s, p, C, dt, ticks, ev)
    _check_finite(s)
    diag = StepDiagnostics(float(ev[0]), float(ev[1]), float(ev[2]))
    return WorldState(world.scene, s, _contacts_from_records(C, n, touching_only=False), diag)


def detect_contacts(world: WorldState) -> list[ContactPoint]:
    """Touching or overlapping feature pairs at the current pose (no impulses)."""
    C = np.zeros((MAX_CONTACTS, _CREC))
    n = _detect(world.vector, world.scene.to_array(), C, CONTACT_TOUCH_TOLERANCE)
    return list(_contacts_from_records(C, n, touching_only=True))


def max_penetration(world: WorldState) -> float:
    return float(_max_penetration(world.vector, world.scene.to_array()))


def box_corners(box: RigidBodyState2D, geom: BoxGeometry) -> list[tuple[float, float]]:
    """World corners ordered front-bottom, back-bottom, back-top, front-top."""
    c, s = math.cos(box.pitch), math.sin(box.pitch)
    hl, hh = geom.length / 2, geom.height / 2
    y0, z0 = box.position
    out = []
    for lx, lz in ((-hl, -hh), (hl, -hh), (hl, hh), (-hl, hh)):
        # positive pitch is a clockwise rotation in the (y, z) plane
        out.append((y0 + c * lx + s * lz, z0 - s * lx + c * lz))
    return out


def signed_clearance(effector: EffectorState, box: RigidBodyState2D, geom: BoxGeometry) -> float:
    """Distance from the effector sphere surface to the box's front face, >= 0."""
    fb, _, _, ft = box_corners(box, geom)
    py, pz = effector.center
    ay, az = fb
    ey, ez = ft[0] - ay, ft[1] - az
    t = ((py - ay) * ey + (pz - az) * ez) / (ey * ey + ez * ez)
    t = min(max(t, 0.0), 1.0)
    dist = math.hypot(py - (ay + t * ey), pz - (az + t * ez))
    return max(0.0, dist - effector.radius)


def box_in_support_contact(world: WorldState, tolerance: float = 2e-3) -> bool:
    """True when a box corner lies within ``tolerance`` of the support plane."""
    C = np.zeros((MAX_CONTACTS, _CREC))
    n = _detect(world.vector, world.scene.to_array(), C, tolerance)
    return any(int(C[i, 0]) == BOX_SUPPORT for i in range(n))


def apply_angular_impulse(world: WorldState, momentum: float) -> WorldState:
    """Knock the box back towards the table with an angular impulse.

    Subtracts ``momentum / I`` from the pitch rate. Only defined while the box
    leans on the support.
    """
    if momentum == 0.0:
        return world
    if not box_in_support_contact(world):
        raise InvalidState("disturbance needs the box resting against the support")
    v = world.vector.copy()
    v[_BW] += momentum / world.scene.box.moment_of_inertia  # internal angle is -pitch
    return WorldState(world.scene, v, world.contacts)


def box_energy(world: WorldState) -> float:
    """Kinetic plus gravitational potential energy of the box."""
    v = world.vector
    g = world.scene.box
    ke = 0.5 * g.mass * (v[_BVY] ** 2 + v[_BVZ] ** 2) + 0.5 * g.moment_of_inertia * v[_BW] ** 2
    return float(ke + g.mass * world.scene.gravity * v[_BZ])
