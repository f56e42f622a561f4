"""Fitness functions, person delay, significance tests and cost accounting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import betainc

from .errors import MissingMetric

ROUTINE_WEIGHTS = (0.4, 0.4, 0.2)  # delay, queue, throughput

# (event delay, delay of the other vehicles, queue)
EVENT_WEIGHTS: Dict[str, Tuple[float, float, float]] = {
    "emergency": (0.6, 0.25, 0.15),
    "transit": (0.5, 0.35, 0.15),
    "incident": (0.6, 0.25, 0.15),
}
FITNESS_MODES = ("routine",) + tuple(EVENT_WEIGHTS)

# vehicle class whose delay is the event delay
_EVENT_CLASS = {"emergency": "emergency", "transit": "bus"}


@dataclass(frozen=True)
class FitnessConfig:
    mode: str = "routine"
    constant: float = 0.0

    def __post_init__(self):
        if self.mode not in FITNESS_MODES:
            raise ValueError(f"fitness mode must be one of {', '.join(FITNESS_MODES)}, got {self.mode!r}")

    @property
    def weights(self) -> Tuple[float, float, float]:
        return ROUTINE_WEIGHTS if self.mode == "routine" else EVENT_WEIGHTS[self.mode]


@dataclass(frozen=True)
class StatResult:
    t: float
    p: float
    d: float
    dof: float
    degenerate: bool = False
    separated: bool = False


@dataclass(frozen=True)
class CostLedger:
    llm_calls: int = 0
    sim_runs: int = 0
    seed_runs: int = 0
    wall_clock: float = 0.0
    retries: int = 0


def routine_fitness(m, cfg: FitnessConfig) -> float:
    w_d, w_q, w_t = ROUTINE_WEIGHTS
    return cfg.constant - (w_d * m.avg_delay + w_q * m.avg_queue) + w_t * m.throughput


def event_delays(m, kind: str) -> Tuple[float, float]:
    """``(event delay, delay of the other vehicles)`` for ``kind``."""
    if kind == "emergency":
        d_e = m.emergency_delay
    elif kind == "transit":
        d_e = m.bus_person_delay
    elif kind == "incident":
        d_e = m.incident_delay
    else:
        raise ValueError(f"unknown event kind {kind!r}")
    if d_e is None:
        raise MissingMetric(f"episode has no {kind} delay; the scenario injected no {kind} events")
    if kind in _EVENT_CLASS:
        return d_e, m.mean_delay_excluding(_EVENT_CLASS[kind])
    return d_e, m.avg_delay


def event_fitness(m, kind: str, cfg: FitnessConfig) -> float:
    w_e, w_n, w_q = EVENT_WEIGHTS[kind]
    d_e, d_n = event_delays(m, kind)
    return cfg.constant - (w_e * d_e + w_n * d_n + w_q * m.avg_queue)


def fitness(m, cfg: FitnessConfig) -> float:
    if cfg.mode == "routine":
        return routine_fitness(m, cfg)
    return event_fitness(m, cfg.mode, cfg)


def calibrate_constant(raw: float) -> float:
    """Smallest convenient C that makes a fitness of ``raw`` (at C = 0) positive."""
    if raw > 0:
        return 0.0
    return float(math.ceil(2 * abs(raw)) + 1)


def person_delay(vehicle_log: Iterable[Mapping[str, Any]]) -> float:
    """Occupancy-weighted mean delay over every vehicle in the log."""
    total = weight = 0.0
    for rec in vehicle_log:
        total += rec["occupancy"] * rec["delay"]
        weight += rec["occupancy"]
    if weight == 0:
        raise ValueError("person_delay needs a nonempty vehicle log")
    return total / weight


def percentile(values: Sequence[float], q: float) -> float:
    """Percentile with linear interpolation between order statistics."""
    return float(np.percentile(np.asarray(values, dtype=float), q, method="linear"))


def summarize(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def welch_and_cohen(a: Sequence[float], b: Sequence[float]) -> StatResult:
    """Welch's two-sample t-test (two-tailed) with Cohen's d.

    d uses the pooled standard deviation. Two zero-variance samples with
    equal means give ``t = 0, p = 1, d = 0`` flagged ``degenerate``; with
    different means ``t = d = ±inf, p = 0`` flagged ``separated``.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    na, nb = x.size, y.size
    if na < 2 or nb < 2:
        raise ValueError("welch_and_cohen needs at least two observations per sample")
    ma, mb = float(x.mean()), float(y.mean())
    va, vb = float(x.var(ddof=1)), float(y.var(ddof=1))
    sa, sb = va / na, vb / nb
    se2 = sa + sb
    if se2 == 0.0:
        if ma == mb:
            return StatResult(0.0, 1.0, 0.0, float(na + nb - 2), degenerate=True)
        sign = 1.0 if ma > mb else -1.0
        return StatResult(sign * math.inf, 0.0, sign * math.inf, float(na + nb - 2), separated=True)

    t = (ma - mb) / math.sqrt(se2)
    dof = se2 * se2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    p = float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    p = min(1.0, max(0.0, p))
    pooled = math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))
    return StatResult(t, p, (ma - mb) / pooled, dof)


def cost_ledger(events: Iterable[Mapping[str, Any]], sessions: Iterable[Mapping[str, Any]] = ()) -> CostLedger:
    """Count generator calls, episodes and wall-clock time of a run.

    ``events`` are audit records (``kind`` + ``payload``); every
    ``generated`` record is one generator call. Episodes of the seed
    evaluation are reported apart from candidate episodes.
    """
    calls = retries = sim_runs = seed_runs = 0
    for rec in events:
        kind = rec.get("kind")
        payload = rec.get("payload") or {}
        if kind == "generated":
            calls += 1
            if payload.get("attempt", 0) > 0:
                retries += 1
        elif kind == "evaluated":
            episodes = int(payload.get("episodes", 0))
            if payload.get("seed_skill"):
                seed_runs += episodes
            else:
                sim_runs += episodes
    wall = 0.0
    for rec in sessions:
        elapsed = (rec.get("payload") or {}).get("elapsed")
        if elapsed is not None:
            wall += float(elapsed)
    return CostLedger(calls, sim_runs, seed_runs, wall, retries)


__all__ = [
    "ROUTINE_WEIGHTS",
    "EVENT_WEIGHTS",
    "FITNESS_MODES",
    "FitnessConfig",
    "StatResult",
    "CostLedger",
    "routine_fitness",
    "event_delays",
    "event_fitness",
    "fitness",
    "calibrate_constant",
    "person_delay",
    "percentile",
    "summarize",
    "welch_and_cohen",
    "cost_ledger",
]
