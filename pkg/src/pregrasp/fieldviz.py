"""Mean-action vector fields over the effector's (y, z) plane."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import physics2d as phys
from .env import Observation, Workspace
from .evaluation import Policy
from .persist import atomic_write_text, provenance_header
from .physics2d import BoxGeometry, EffectorState, RigidBodyState2D


class SpecOutsideWorkspace(ValueError):
    pass


@dataclass(frozen=True)
class VectorFieldSpec:
    y_range: tuple[float, float] = (-0.30, 0.10)
    z_range: tuple[float, float] = (0.02, 0.26)
    counts: tuple[int, int] = (21, 13)
    fixed_pitch: float = -2.75
    box_pose: tuple[float, float, float] = (0.21, 0.03, 0.0)  # y, z, pitch
    box_geometry: BoxGeometry = BoxGeometry()
    support_y: float = 0.35
    effector_radius: float = 0.02

    def validate(self, workspace: Workspace = Workspace()) -> None:
        if min(self.counts) < 2:
            raise ValueError("grid counts must be at least 2")
        for (lo, hi), (wlo, whi), name in ((self.y_range, workspace.y, "y"), (self.z_range, workspace.z, "z")):
            if not (wlo <= lo < hi <= whi):
                raise SpecOutsideWorkspace(f"{name} range {lo, hi} not inside workspace {wlo, whi}")
        if not workspace.pitch[0] <= self.fixed_pitch <= workspace.pitch[1]:
            raise SpecOutsideWorkspace(f"pitch {self.fixed_pitch} outside workspace")

    def grid(self) -> list[tuple[float, float]]:
        ys = np.linspace(*self.y_range, self.counts[0])
        zs = np.linspace(*self.z_range, self.counts[1])
        return [(float(y), float(z)) for z in zs for y in ys]

    def box(self) -> RigidBodyState2D:
        y, z, pitch = self.box_pose
        return RigidBodyState2D((y, z), pitch)


@dataclass(frozen=True)
class FieldRecord:
    y: float
    z: float
    dy: float
    dz: float


def vector_field(policy: Policy, spec: VectorFieldSpec) -> list[FieldRecord]:
    spec.validate()
    box = spec.box()
    out = []
    for y, z in spec.grid():
        eff = EffectorState((y, z), spec.fixed_pitch, radius=spec.effector_radius)
        d = phys.signed_clearance(eff, box, spec.box_geometry)
        obs = Observation(d, y, z, spec.fixed_pitch, box.position[0], box.position[1], box.pitch)
        a = np.asarray(policy(obs.as_array()), dtype=float)
        out.append(FieldRecord(y, z, float(a[0]), float(a[1])))
    return out


def front_face_points(records: list[FieldRecord], spec: VectorFieldSpec) -> list[FieldRecord]:
    """Grid points left of the front face whose height lies within the box's."""
    g = spec.box_geometry
    front = spec.box_pose[0] - g.length / 2
    top = spec.box_pose[1] + g.height / 2
    return [r for r in records if r.y + spec.effector_radius < front and r.z <= top + 1e-12]


def field_csv(records: list[FieldRecord], header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("y", "z", "dy", "dz"))
    for r in records:
        w.writerow((repr(r.y), repr(r.z), repr(r.dy), repr(r.dz)))
    return buf.getvalue()


def field_svg(records: list[FieldRecord], spec: VectorFieldSpec, header: str = "") -> str:
    """Arrows plus the box and support drawn as rectangles; 1 px = 1 mm."""
    px = 1000.0
    y0, y1 = spec.y_range[0] - 0.03, spec.support_y + 0.05
    z1 = spec.z_range[1] + 0.03
    width, height = (y1 - y0) * px, (z1 + 0.02) * px

    def to_xy(y, z):
        return (y - y0) * px, (z1 - z) * px

    amax = max((math.hypot(r.dy, r.dz) for r in records), default=0.0) or 1.0
    step = min((spec.y_range[1] - spec.y_range[0]) / (spec.counts[0] - 1),
               (spec.z_range[1] - spec.z_range[0]) / (spec.counts[1] - 1))
    scale = 0.9 * step / amax
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}">']
    if header:
        parts.append(f"<!-- {header.strip().lstrip('#').strip()} -->")
    parts.append('<rect width="100%" height="100%" fill="white"/>')
    tx, ty = to_xy(y0, 0.0)
    parts.append(f'<line x1="{tx:.1f}" y1="{ty:.1f}" x2="{width:.1f}" y2="{ty:.1f}" stroke="black"/>')
    sx, sy = to_xy(spec.support_y, z1)
    parts.append(f'<rect x="{sx:.1f}" y="{sy:.1f}" width="{0.03 * px:.1f}" height="{z1 * px:.1f}" fill="#999"/>')
    corners = phys.box_corners(spec.box(), spec.box_geometry)
    pts = " ".join("{:.1f},{:.1f}".format(*to_xy(*c)) for c in corners)
    parts.append(f'<polygon points="{pts}" fill="#c8a165" stroke="black"/>')
    for r in records:
        x0_, y0_ = to_xy(r.y, r.z)
        x1_, y1_ = to_xy(r.y + scale * r.dy, r.z + scale * r.dz)
        parts.append(f'<line x1="{x0_:.1f}" y1="{y0_:.1f}" x2="{x1_:.1f}" y2="{y1_:.1f}" '
                     f'stroke="#1f4e9c" stroke-width="1.2"/>')
        parts.append(f'<circle cx="{x1_:.1f}" cy="{y1_:.1f}" r="1.5" fill="#1f4e9c"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_vector_field(
    policy: Policy,
    spec: VectorFieldSpec,
    csv_path: str | Path,
    svg_path: str | Path | None = None,
    config_hash: str = "-",
    seed: int = 0,
) -> list[FieldRecord]:
    records = vector_field(policy, spec)
    atomic_write_text(csv_path, field_csv(records, provenance_header(config_hash, seed)))
    if svg_path is not None:
        atomic_write_text(svg_path, field_svg(records, spec, provenance_header(config_hash, seed)))
    return records
