"""Experiment configuration: INI text with a fixed schema.

Values are typed on load, unknown sections or keys are rejected with their
line number, and :func:`ExperimentConfig.to_text` emits a canonical form
that re-parses to an equal config. The config hash covers everything except
the thread count and the output location, which cannot change results.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def _float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    if t == "pi":
        return math.pi
    m = re.fullmatch(r"pi\s*/\s*([0-9.eE+-]+)", t)
    if m:
        return math.pi / float(m.group(1))
    return float(t)


def _int(text: str) -> int:
    f = float(text)
    if f != int(f):
        raise ValueError(f"{text!r} is not an integer")
    return int(f)


def _str(text: str) -> str:
    return text.strip()


def _floats(text: str) -> tuple[float, ...]:
    return tuple(_float(t) for t in text.split(",") if t.strip())


def _points(text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_floats(p) for p in text.split(";") if p.strip())


def _words(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


_Parser = Callable[[str], Any]

SCHEMA: dict[str, dict[str, _Parser]] = {
    "run": {"command": _str, "seed": _int, "threads": _int},
    "domain": {
        "kind": _str, "dim": _int, "aperture": _float, "delta": _float,
        "nu": _float, "thickness": _float, "radius": _float,
    },
    "data": {
        "g": _str, "g.value": _float, "g.axis": _int, "g.scale": _float,
        "g.threshold": _float, "g.radius": _float,
        "f": _str, "f.value": _float,
    },
    "sequence": {"tau": _float, "count": _int, "radii": _floats},
    "solver": {
        "method": _str, "epsilon": _float, "paths": _int, "points": _int,
        "max_steps": _int, "s": _float, "x0": _floats,
    },
    "points": {"x": _points},
    "constants": {
        "nu": _float, "tau1": _float, "tau2": _float, "n": _int, "p": _float, "s": _float,
        "alpha_data": _float, "c_aux": _float, "m": _float, "condition": _str, "cap_angle": _float,
    },
    "geometry": {
        "nu": _float, "samples": _int, "angular_grid": _int, "cap_samples": _int, "conditions": _words,
    },
    "certify": {"slack_sigmas": _float, "checks": _words},
    "perron": {
        "source": _str, "family": _str, "input": _str, "c0": _float, "a0": _float,
        "k": _int, "exponent": _float, "ratio": _float, "samples": _int,
    },
    "output": {"path": _str},
}

COMMANDS = ("check-geometry", "constants", "solve", "profile", "certify", "perron")

# excluded from the hash: they never change what is computed
_UNHASHED = {("run", "threads"), ("output", "path")}


def _format(value: Any) -> str:
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(_format(v) for v in value)
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return "inf" if value == math.inf else repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, Any]] = field(default_factory=dict)
    source: str = "<config>"

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self.values.get(section, {}).get(key, default)

    def require(self, section: str, key: str) -> Any:
        try:
            return self.values[section][key]
        except KeyError:
            raise ConfigError(f"missing required key [{section}] {key}", source=self.source) from None

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.values.get(name, {}))

    def has(self, section: str) -> bool:
        return bool(self.values.get(section))

    def set(self, dotted: str, text: str) -> None:
        """Override ``section.key`` with a raw text value (as from ``--set``)."""
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must be section.key", source="--set")
        section, key = dotted.split(".", 1)
        self.values.setdefault(section, {})[key] = _convert(section, key, text, None, "--set")

    @property
    def command(self) -> str | None:
        return self.get("run", "command")

    @property
    def seed(self) -> int:
        return self.get("run", "seed", 0)

    def to_text(self, *, hashed_only: bool = False) -> str:
        lines = []
        for section in sorted(self.values):
            keys = sorted(k for k in self.values[section] if not (hashed_only and (section, k) in _UNHASHED))
            if not keys:
                continue
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {_format(self.values[section][k])}" for k in keys)
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        return hashlib.sha256(self.to_text(hashed_only=True).encode()).hexdigest()

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentConfig) and self.values == other.values


def _convert(section: str, key: str, text: str, line: int | None, source: str) -> Any:
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]", line, source)
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]", line, source)
    try:
        return SCHEMA[section][key](text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {exc}", line, source) from None


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Map (section, key) and (section, None) to 1-based line numbers."""
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), i)
        elif section is not None and ("=" in line or ":" in line):
            key = re.split(r"[=:]", line, 1)[0].strip().lower()
            index.setdefault((section, key), i)
    return index


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        msg = getattr(exc, "message", str(exc)).splitlines()[0]
        raise ConfigError(msg, line, source) from None
    index = _line_index(text)
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", index.get((section, None)), source)
        out = values.setdefault(section, {})
        for key, raw in parser.items(section):
            out[key] = _convert(section, key, raw, index.get((section, key)), source)
    cfg = ExperimentConfig(values, source)
    cmd = cfg.command
    if cmd is not None and cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; choose from {', '.join(COMMANDS)}", index.get(("run", "command")), source)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def preset_names() -> list[str]:
    root = resources.files("holderlab") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_preset(name: str) -> ExperimentConfig:
    res = resources.files("holderlab") / "presets" / f"{name}.ini"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}", source="--preset")
    return parse_config(res.read_text(), f"preset:{name}")
