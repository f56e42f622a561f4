"""Scenario configuration.

Each scenario family is a YAML file under ``signal_evo/config/scenarios``
named after the family. A file may name a ``base:`` family whose
mapping it extends (nested sections are merged). Overrides are dotted
``key=value`` strings, e.g. ``demand.base_rate=0.2`` or
``events.0.interval=60``; values are parsed as YAML scalars.
"""
from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import yaml

from ..errors import ConfigError

FAMILIES = ("T1", "T2", "T3", "V1", "V2", "V3", "E1", "E2", "B1", "B2", "I1", "M1")
DESK_PRESETS = ("desk_T", "desk_E", "desk_B", "desk_I")
DEMAND_PATTERNS = ("balanced", "ns_heavy", "ew_peaked", "segments")
EVENT_KINDS = ("emergency", "bus", "incident")


def _scenario_dir() -> str:
    from ..config import settings

    return settings.SCENARIO_DIR


@dataclass(frozen=True)
class NetworkSpec:
    rows: int = 4
    cols: int = 4
    link_length: float = 300.0


@dataclass(frozen=True)
class TrafficParams:
    jam_spacing: float = 7.5
    saturation_flow: float = 0.5
    free_flow_speed: float = 13.9
    emergency_speed: float = 20.0
    yellow: float = 3.0
    min_green: float = 5.0
    waiting_speed: float = 0.1


@dataclass(frozen=True)
class DemandSegment:
    start: float
    end: float
    multiplier: float
    axis: str = "all"  # "all", "ns" or "ew"


@dataclass(frozen=True)
class DemandSpec:
    pattern: str = "balanced"
    base_rate: float = 0.1  # vehicles per second per entry link
    turn_ratios: Tuple[float, float, float] = (0.2, 0.6, 0.2)
    segments: Tuple[DemandSegment, ...] = ()


@dataclass(frozen=True)
class EventInjection:
    kind: str
    start: float = 0.0
    interval: Optional[float] = None
    lines: int = 1
    duration: float = 0.0

    def times(self, horizon: float) -> List[float]:
        if self.interval is None:
            return [self.start] if self.start < horizon else []
        out, k = [], 0
        while self.start + k * self.interval < horizon:
            out.append(self.start + k * self.interval)
            k += 1
        return out


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    network: NetworkSpec = field(default_factory=NetworkSpec)
    duration: float = 3600.0
    step: float = 1.0
    demand: DemandSpec = field(default_factory=DemandSpec)
    perturbation: float = 0.0
    events: Tuple[EventInjection, ...] = ()
    seed: int = 0
    traffic: TrafficParams = field(default_factory=TrafficParams)
    fitness_constant: Optional[float] = None

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.step))

    def injections(self, kind: str) -> List[EventInjection]:
        return [e for e in self.events if e.kind == kind]

    def event_count(self) -> int:
        """Number of injected event vehicles (buses count per line)."""
        total = 0
        for inj in self.events:
            times = inj.times(self.duration)
            total += len(times) * (inj.lines if inj.kind == "bus" else 1)
        return total

    @property
    def event_kinds(self) -> Tuple[str, ...]:
        kinds = []
        for inj in self.events:
            kind = "transit" if inj.kind == "bus" else inj.kind
            if kind not in kinds:
                kinds.append(kind)
        return tuple(kinds)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], name: Optional[str] = None) -> "ScenarioConfig":
        errors: List[str] = []
        data = dict(data or {})
        name = str(data.get("name") or name or "custom")

        def number(section: Mapping, key: str, default, positive=False, lo=None):
            raw = section.get(key, default)
            try:
                val = float(raw)
            except (TypeError, ValueError):
                errors.append(f"{key} must be a number, got {raw!r}")
                return default
            if positive and not val > 0:
                errors.append(f"{key} must be positive, got {raw!r}")
            if lo is not None and val < lo:
                errors.append(f"{key} must be >= {lo}, got {raw!r}")
            return val

        net = dict(data.get("network") or {})
        rows, cols = net.get("rows", 4), net.get("cols", 4)
        for key, val in (("rows", rows), ("cols", cols)):
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                errors.append(f"network.{key} must be an integer >= 1, got {val!r}")
        network = NetworkSpec(rows, cols, number(net, "link_length", 300.0, positive=True))

        duration = number(data, "duration", 3600.0, positive=True)
        step = number(data, "step", 1.0, positive=True)

        tp = dict(data.get("traffic") or {})
        unknown = sorted(set(tp) - set(TrafficParams.__dataclass_fields__))
        if unknown:
            errors.append(f"unknown traffic parameters: {', '.join(unknown)}")
        traffic = TrafficParams(
            **{k: number(tp, k, getattr(TrafficParams, k), positive=True) for k in TrafficParams.__dataclass_fields__}
        )

        dm = dict(data.get("demand") or {})
        pattern = dm.get("pattern", "balanced")
        if pattern not in DEMAND_PATTERNS:
            errors.append(f"demand.pattern must be one of {', '.join(DEMAND_PATTERNS)}, got {pattern!r}")
        ratios = dm.get("turn_ratios", (0.2, 0.6, 0.2))
        if isinstance(ratios, Mapping):
            ratios = (ratios.get("left", 0.0), ratios.get("through", 0.0), ratios.get("right", 0.0))
        try:
            ratios = tuple(float(r) for r in ratios)
            if len(ratios) != 3 or min(ratios) < 0 or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
                raise ValueError
        except (TypeError, ValueError):
            errors.append(f"demand.turn_ratios must be three nonnegative numbers summing to 1, got {ratios!r}")
            ratios = (0.2, 0.6, 0.2)
        segments = []
        for i, seg in enumerate(dm.get("segments") or []):
            try:
                s = DemandSegment(float(seg["start"]), float(seg["end"]), float(seg.get("multiplier", 1.0)), str(seg.get("axis", "all")))
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"demand.segments[{i}] is malformed: {exc}")
                continue
            if s.axis not in ("all", "ns", "ew"):
                errors.append(f"demand.segments[{i}].axis must be all, ns or ew")
            if not 0 <= s.start < s.end <= duration:
                errors.append(f"demand.segments[{i}] must satisfy 0 <= start < end <= duration")
            segments.append(s)
        if pattern == "segments" and not segments:
            errors.append("demand.pattern 'segments' needs at least one segment")
        demand = DemandSpec(pattern, number(dm, "base_rate", 0.1, lo=0.0), ratios, tuple(segments))

        perturbation = number(data, "perturbation", 0.0, lo=0.0)
        if perturbation >= 1:
            errors.append(f"perturbation must be below 1, got {perturbation!r}")

        events = []
        for i, ev in enumerate(data.get("events") or []):
            if not isinstance(ev, Mapping):
                errors.append(f"events[{i}] must be a mapping")
                continue
            kind = ev.get("kind")
            if kind not in EVENT_KINDS:
                errors.append(f"events[{i}].kind must be one of {', '.join(EVENT_KINDS)}, got {kind!r}")
                continue
            interval = ev.get("interval")
            inj = EventInjection(
                kind,
                number(ev, "start", 0.0, lo=0.0),
                None if interval is None else number(ev, "interval", None, positive=True),
                int(ev.get("lines", 1)),
                number(ev, "duration", 0.0, lo=0.0),
            )
            if inj.start >= duration:
                errors.append(f"events[{i}] starts at {inj.start} beyond duration {duration}")
            if kind == "incident" and (inj.duration <= 0 or inj.start + inj.duration > duration):
                errors.append(f"events[{i}] incident window must be positive and end within duration")
            if kind == "bus" and inj.lines < 1:
                errors.append(f"events[{i}].lines must be >= 1")
            events.append(inj)

        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            errors.append(f"seed must be an integer, got {seed!r}")
            seed = 0
        constant = data.get("fitness_constant")
        if constant is not None:
            constant = number(data, "fitness_constant", None)

        if errors:
            raise ConfigError(f"Scenario {name} errors:\n" + "\n".join(errors))
        return cls(name, network, duration, step, demand, perturbation, tuple(events), seed, traffic, constant)


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(dict(base))
    for key, val in (override or {}).items():
        if isinstance(val, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def apply_overrides(data: Mapping[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply dotted ``key=value`` overrides to a raw scenario mapping."""
    out = copy.deepcopy(dict(data))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r} has an unparsable value") from exc
        parts = key.strip().split(".")
        node: Any = out
        for i, part in enumerate(parts):
            last = i == len(parts) - 1
            if isinstance(node, list):
                try:
                    idx = int(part)
                    node[idx]
                except (ValueError, IndexError) as exc:
                    raise ConfigError(f"override {item!r}: {part!r} is not a valid list index") from exc
                if last:
                    node[idx] = value
                else:
                    node = node[idx]
                continue
            if last:
                node[part] = value
            else:
                if not isinstance(node.get(part), (dict, list)):
                    node[part] = {}
                node = node[part]
    return out


def _read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"scenario file {path} must hold a mapping")
    return data


def _resolve(data: Dict[str, Any], seen: Sequence[str] = ()) -> Dict[str, Any]:
    base = data.pop("base", None)
    if base is None:
        return data
    if base in seen:
        raise ConfigError(f"scenario base chain loops through {base!r}")
    parent = _resolve(_family_mapping(base), tuple(seen) + (base,))
    return deep_merge(parent, data)


def _family_mapping(family: str) -> Dict[str, Any]:
    path = os.path.join(_scenario_dir(), f"{family}.yml")
    if not os.path.exists(path):
        raise ConfigError(f"unknown scenario family {family!r}; known: {', '.join(available_families())}")
    data = _read_yaml(path)
    data.setdefault("name", family)
    return data


def available_families() -> List[str]:
    try:
        names = [p[:-4] for p in os.listdir(_scenario_dir()) if p.endswith(".yml")]
    except OSError:
        return []
    return sorted(names)


def raw_scenario(family: Union[str, Path, Mapping[str, Any]]) -> Dict[str, Any]:
    """The merged mapping for a family name, a YAML path or a custom mapping."""
    if isinstance(family, Mapping):
        return _resolve(copy.deepcopy(dict(family)))
    text = str(family)
    if text.endswith((".yml", ".yaml")) or os.sep in text:
        data = _read_yaml(text)
        data.setdefault("name", Path(text).stem)
        return _resolve(data)
    return _resolve(_family_mapping(text), (text,))


def make_scenario(
    family: Union[str, Path, Mapping[str, Any]],
    overrides: Optional[Iterable[str]] = None,
) -> ScenarioConfig:
    """Return the configuration of ``family`` with ``overrides`` applied.

    ``family`` is a family name (``T1`` ... ``M1``, or a desk preset), a
    path to a scenario YAML file, or a mapping for a custom scenario.
    Raises `ConfigError` for unknown families and invalid values.
    """
    data = apply_overrides(raw_scenario(family), overrides or ())
    return ScenarioConfig.from_mapping(data)


__all__ = [
    "FAMILIES",
    "DESK_PRESETS",
    "DEMAND_PATTERNS",
    "EVENT_KINDS",
    "NetworkSpec",
    "TrafficParams",
    "DemandSegment",
    "DemandSpec",
    "EventInjection",
    "ScenarioConfig",
    "deep_merge",
    "apply_overrides",
    "available_families",
    "raw_scenario",
    "make_scenario",
]
