"""Flat ``section.key = value`` configuration files.

One option per line, addressed as ``section.key`` (e.g.
``tracker.search_radius = 20``).  Sections map onto the dataclasses that own
the knobs; unknown sections or keys are rejected with a diagnostic naming
the offending key.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .corners import DetectParams
from .evalproto import SynthSpec
from .kltbase import KltConfig
from .tracker import TrackerConfig


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class EvalParams:
    tolerance: float = 15.0            # px, closed comparison
    band: float = 5.0                  # boundary-stratum half-width, px


@dataclass(frozen=True)
class Config:
    tracker: TrackerConfig
    detect: DetectParams
    klt: KltConfig
    synth: SynthSpec
    eval: EvalParams


_SECTIONS = {
    "tracker": TrackerConfig,
    "detect": DetectParams,
    "klt": KltConfig,
    "synth": SynthSpec,
    "eval": EvalParams,
}


def parse_flat(text: str) -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {ln}: empty key")
        if key in out:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(value: str, typ, key: str):
    # Dataclass annotations arrive as strings (PEP 563 style modules).
    name = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    try:
        if name == "int":
            return int(value)
        if name == "float":
            return float(value)
        if name == "bool":
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if name == "str":
            return value
        if name.startswith("tuple"):
            return tuple(int(v.strip()) for v in value.split(","))
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {name}") from None
    raise ConfigError(f"{key}: unsupported option type {name}")


def build_config(options: dict[str, str]) -> Config:
    """Defaults for every section, overridden by the flat options."""
    per_section: dict[str, dict] = {s: {} for s in _SECTIONS}
    for key, value in options.items():
        if "." not in key:
            raise ConfigError(f"unknown key {key!r}: expected section.key")
        section, field_name = key.split(".", 1)
        cls = _SECTIONS.get(section)
        if cls is None:
            raise ConfigError(f"unknown section in key {key!r}")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        f = fields.get(field_name)
        if f is None:
            raise ConfigError(f"unknown key {key!r}")
        per_section[section][field_name] = _coerce(value, f.type, key)
    kwargs = {}
    for section, cls in _SECTIONS.items():
        try:
            kwargs[section] = cls(**per_section[section])
        except ValueError as e:
            raise ConfigError(f"section {section!r}: {e}") from None
    return Config(**kwargs)


def load_config(path: str | None) -> Config:
    """Config from a flat file; all defaults when ``path`` is None."""
    if path is None:
        return build_config({})
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return build_config(parse_flat(text))


def snapshot(cfg: Config) -> dict[str, str]:
    """Flat key=value view of every knob; re-parsing it reproduces ``cfg``."""
    out: dict[str, str] = {}
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                out[f"{section}.{f.name}"] = ",".join(str(x) for x in v)
            else:
                out[f"{section}.{f.name}"] = str(v)
    return out
