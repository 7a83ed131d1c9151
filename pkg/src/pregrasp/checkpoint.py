"""Versioned flat checkpoint files.

Layout::

    PREGRASP-CHECKPOINT
    version 1
    meta <key> <value>              (any number)
    section <name> <count> <shape>  (in data order)
    END
    <little-endian float64 values, sections concatenated>

Shapes are comma-separated dimensions. Adam step counters are stored as meta
entries so that every section is pure float64 data.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import AdamState, MlpParams
from .persist import atomic_write_bytes
from .sac import SacAgent

MAGIC = "PREGRASP-CHECKPOINT"
VERSION = 1
_LE_F64 = np.dtype("<f8")


class CheckpointVersionMismatch(ValueError):
    pass


class CorruptCheckpoint(ValueError):
    pass


@dataclass
class Checkpoint:
    sections: dict[str, np.ndarray]
    meta: dict[str, str] = field(default_factory=dict)


def encode(ckpt: Checkpoint) -> bytes:
    lines = [MAGIC, f"version {VERSION}"]
    for k, v in ckpt.meta.items():
        if any(ch.isspace() for ch in k) or "\n" in str(v):
            raise ValueError(f"meta entry {k!r} must be a single token / single line")
        lines.append(f"meta {k} {v}")
    blobs = []
    for name, arr in ckpt.sections.items():
        arr = np.asarray(arr, dtype=np.float64)
        shape = ",".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"section {name} {arr.size} {shape}")
        blobs.append(arr.astype(_LE_F64).tobytes())
    lines.append("END")
    return ("\n".join(lines) + "\n").encode("ascii") + b"".join(blobs)


def decode(data: bytes) -> Checkpoint:
    end = data.find(b"\nEND\n")
    if end < 0:
        raise CorruptCheckpoint("missing END marker")
    header = data[:end].decode("ascii").split("\n")
    body = data[end + 5:]
    if not header or header[0] != MAGIC:
        raise CorruptCheckpoint("bad magic string")
    if len(header) < 2 or not header[1].startswith("version "):
        raise CorruptCheckpoint("missing version line")
    version = int(header[1].split()[1])
    if version != VERSION:
        raise CheckpointVersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    meta: dict[str, str] = {}
    specs = []
    for line in header[2:]:
        kind, _, rest = line.partition(" ")
        if kind == "meta":
            k, _, v = rest.partition(" ")
            meta[k] = v
        elif kind == "section":
            name, count, shape = rest.split(" ")
            dims = () if shape == "scalar" else tuple(int(d) for d in shape.split(","))
            specs.append((name, int(count), dims))
        else:
            raise CorruptCheckpoint(f"unexpected header line {line!r}")
    total = sum(c for _, c, _ in specs)
    if len(body) != 8 * total:
        raise CorruptCheckpoint(f"expected {8 * total} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype=_LE_F64).astype(np.float64)
    sections, off = {}, 0
    for name, count, dims in specs:
        sections[name] = values[off:off + count].reshape(dims).copy()
        off += count
    return Checkpoint(sections, meta)


def save(path: str | os.PathLike, ckpt: Checkpoint) -> Path:
    return atomic_write_bytes(path, encode(ckpt))


def load(path: str | os.PathLike) -> Checkpoint:
    return decode(Path(path).read_bytes())


_NETS = ("actor", "critic1", "critic2", "target1", "target2")
_OPTS = ("actor_opt", "critic1_opt", "critic2_opt", "alpha_opt")


def agent_to_checkpoint(agent: SacAgent, meta: dict[str, str] | None = None) -> Checkpoint:
    sections: dict[str, np.ndarray] = {}
    m = dict(meta or {})
    for name in _NETS:
        net: MlpParams = getattr(agent, name)
        sections[name] = net.flat
        m[f"{name}.sizes"] = ",".join(str(s) for s in net.sizes)
    sections["log_alpha"] = np.array([agent.log_alpha])
    for name in _OPTS:
        opt: AdamState = getattr(agent, name)
        sections[f"{name}.m"] = opt.m
        sections[f"{name}.v"] = opt.v
        m[f"{name}.step"] = str(opt.step)
    m["updates"] = str(agent.updates)
    return Checkpoint(sections, m)


def agent_from_checkpoint(ckpt: Checkpoint) -> SacAgent:
    try:
        nets = {}
        for name in _NETS:
            sizes = tuple(int(s) for s in ckpt.meta[f"{name}.sizes"].split(","))
            nets[name] = MlpParams(sizes, ckpt.sections[name].copy())
        opts = {}
        for name in _OPTS:
            opts[name] = AdamState(ckpt.sections[f"{name}.m"].copy(), ckpt.sections[f"{name}.v"].copy(),
                                   int(ckpt.meta[f"{name}.step"]))
        log_alpha = float(ckpt.sections["log_alpha"][0])
        updates = int(ckpt.meta.get("updates", 0))
    except KeyError as exc:
        raise CorruptCheckpoint(f"missing checkpoint entry {exc}") from None
    return SacAgent(log_alpha=log_alpha, updates=updates, **nets, **opts)


def save_agent(path: str | os.PathLike, agent: SacAgent, meta: dict[str, str] | None = None) -> Path:
    return save(path, agent_to_checkpoint(agent, meta))


def load_agent(path: str | os.PathLike) -> tuple[SacAgent, dict[str, str]]:
    ckpt = load(path)
    return agent_from_checkpoint(ckpt), ckpt.meta
