"""Run configuration: INI-style sections, strict keys, logged defaults.

Example::

    [run]
    seed = 7

    [sac]
    total_env_steps = 250000

    [randomization.mass]
    probability = 0.5
"""

from __future__ import annotations

import configparser
import hashlib
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .env import (
    ROW_NAMES,
    EnvConfig,
    InvalidTable,
    RandomizationRow,
    RandomizationTable,
    RewardConfig,
)
from .physics2d import BoxGeometry, SceneParams
from .sac import SacConfig
from .training import TrainSettings

log = logging.getLogger(__name__)


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class GeometryConfig:
    length: float = 0.17
    height: float = 0.06
    support_inclination: float = math.pi / 2


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out_dir: str = "runs/default"
    eval_every: int = 5_000
    eval_episodes: int = 20
    horizon: int = 100


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = RunSection()
    sac: SacConfig = SacConfig()
    reward: RewardConfig = RewardConfig()
    table: RandomizationTable = field(default_factory=RandomizationTable)
    geometry: GeometryConfig = GeometryConfig()
    applied_defaults: tuple[str, ...] = field(default=(), compare=False)

    @property
    def seed(self) -> int:
        return self.run.seed

    def env_config(self) -> EnvConfig:
        box = BoxGeometry(self.geometry.length, self.geometry.height, self.table.rows["mass"].default)
        scene = SceneParams(box=box, support_inclination=self.geometry.support_inclination)
        return EnvConfig(reward=self.reward, horizon=self.run.horizon, scene=scene)

    def train_settings(self) -> TrainSettings:
        return TrainSettings(self.run.eval_every, self.run.eval_episodes)


# section name -> (dataclass type, fields exposed in the file)
_SIMPLE = {
    "run": (RunSection, [f.name for f in fields(RunSection)]),
    "sac": (SacConfig, [f.name for f in fields(SacConfig) if f.name not in ("hidden", "fixed_alpha")]),
    "reward": (RewardConfig, ["lambda1", "lambda2"]),
    "geometry": (GeometryConfig, [f.name for f in fields(GeometryConfig)]),
}
_ROW_KEYS = ("default", "low", "high", "probability")
_ATTR = {"run": "run", "sac": "sac", "reward": "reward", "geometry": "geometry"}


def _convert(kind, raw: str):
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is str:
        return raw
    raise TypeError(kind)


def _field_types(cls) -> dict[str, type]:
    defaults = cls()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(cls)}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None:
            name = stripped.split("=", 1)[0].split(":", 1)[0].strip()
            if name == key:
                return i
    return None


def parse_config_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keep keys case-sensitive
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ParseError("duplicate key", exc.lineno, exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", line) from None

    defaults: list[str] = []
    values: dict[str, object] = {}
    for section in parser.sections():
        if section not in _SIMPLE and not (
            section.startswith("randomization.") and section.split(".", 1)[1] in ROW_NAMES
        ) and section != "randomization":
            raise ParseError(f"unknown section [{section}]", _line_of(text, section))

    for section, (cls, names) in _SIMPLE.items():
        types = _field_types(cls)
        given = dict(parser[section]) if parser.has_section(section) else {}
        kwargs = {}
        for key, raw in given.items():
            if key not in names:
                raise ParseError(f"unknown key in [{section}]", _line_of(text, section, key), key)
            try:
                kwargs[key] = _convert(types[key], raw.strip())
            except ValueError:
                raise ParseError(f"cannot read {raw!r} as {types[key].__name__}",
                                 _line_of(text, section, key), key) from None
        for key in names:
            if key not in kwargs:
                defaults.append(f"{section}.{key}")
        try:
            values[section] = cls(**kwargs)
        except ValueError as exc:
            raise ValidationError(f"[{section}] {exc}") from None

    base = RandomizationTable()
    rows = {}
    for name in ROW_NAMES:
        section = f"randomization.{name}"
        given = dict(parser[section]) if parser.has_section(section) else {}
        kwargs = {}
        for key, raw in given.items():
            if key not in _ROW_KEYS:
                raise ParseError(f"unknown key in [{section}]", _line_of(text, section, key), key)
            try:
                kwargs[key] = float(raw)
            except ValueError:
                raise ParseError(f"cannot read {raw!r} as float", _line_of(text, section, key), key) from None
        for key in _ROW_KEYS:
            if key not in kwargs:
                defaults.append(f"{section}.{key}")
        rows[name] = replace(base.rows[name], **kwargs)
    ref = base.reference_probability
    if parser.has_section("randomization"):
        for key, raw in parser["randomization"].items():
            if key != "reference_probability":
                raise ParseError("unknown key in [randomization]", _line_of(text, "randomization", key), key)
            try:
                ref = float(raw)
            except ValueError:
                raise ParseError(f"cannot read {raw!r} as float",
                                 _line_of(text, "randomization", key), key) from None
    else:
        defaults.append("randomization.reference_probability")
    table = RandomizationTable(rows, ref)
    try:
        table.validate()
    except InvalidTable as exc:
        raise ValidationError(str(exc)) from None

    cfg = RunConfig(values["run"], values["sac"], values["reward"], table, values["geometry"],
                    tuple(defaults))
    validate(cfg)
    for name in defaults:
        log.info("config default applied: %s", name)
    return cfg


def validate(cfg: RunConfig) -> None:
    r = cfg.run
    if r.eval_every < 1 or r.eval_episodes < 0 or r.horizon < 1:
        raise ValidationError("run: eval_every >= 1, eval_episodes >= 0 and horizon >= 1 required")
    g = cfg.geometry
    if not (g.length > 0 and g.height > 0):
        raise ValidationError("geometry: length and height must be positive")
    if not math.pi / 3 <= g.support_inclination <= math.pi / 2:
        raise ValidationError("geometry: support_inclination must lie in [pi/3, pi/2]")
    mass = cfg.table.rows["mass"]
    if mass.low <= 0:
        raise ValidationError("randomization.mass: masses must be positive")
    fr = cfg.table.rows["friction"]
    if fr.low < 0:
        raise ValidationError("randomization.friction: friction must be non-negative")


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"config file {path} does not exist")
    return parse_config_text(path.read_text())


def emit_config(cfg: RunConfig) -> str:
    """Effective configuration as text; parsing it back yields an equal RunConfig."""
    out = []
    for section, (_, names) in _SIMPLE.items():
        obj = getattr(cfg, _ATTR[section])
        out.append(f"[{section}]")
        out += [f"{k} = {getattr(obj, k)!r}" if isinstance(getattr(obj, k), float)
                else f"{k} = {getattr(obj, k)}" for k in names]
        out.append("")
    out += ["[randomization]", f"reference_probability = {cfg.table.reference_probability!r}", ""]
    for name in ROW_NAMES:
        row: RandomizationRow = cfg.table.rows[name]
        out.append(f"[randomization.{name}]")
        out += [f"{k} = {getattr(row, k)!r}" for k in _ROW_KEYS]
        out.append("")
    return "\n".join(out)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(emit_config(cfg).encode("utf-8")).hexdigest()[:16]
