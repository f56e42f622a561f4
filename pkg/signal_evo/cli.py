"""Command-line entry point: ``signal-evo <command> ...``.

Commands: evolve, evaluate, baseline, compare, inspect, replay, export.
Exit status is 0 on success, 2 for configuration and usage errors
(including unknown runs and ids) and 1 for runtime failures such as an
unavailable generator, a storage error or a rejected skill file.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .controller import ControllerSpec, drive
from .errors import ConfigError, SignalEvoError, StorageError, UnknownId, UnknownRun
from .event_system import SkillBank
from .evolution import DIRECTION_MODES, EVOLUTION_MODES, EvolutionConfig, replay_run, run_evolution
from .generator import GENERATOR_KINDS, REPRESENTATIONS, make_backend
from .logs import configure_logging, get_logger
from .metrics import summarize, welch_and_cohen
from .skilldsl import Skill, VariableWhitelist, complexity, parse, read_skill, sandbox_check
from .store import AssetStore
from .traffic_sim import ScenarioConfig, make_scenario

logger = get_logger(__name__)

BASELINE_METHODS = ("fixed_time", "max_pressure", "handcrafted_preemption", "bank")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
METRIC_COLUMNS = ("avg_delay", "avg_queue", "throughput", "emergency_delay", "bus_person_delay", "incident_delay")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class SkillRejected(SignalEvoError):
    """A skill file failed validation."""


# -- shared helpers ---------------------------------------------------------


def _scenarios(args: argparse.Namespace) -> List[ScenarioConfig]:
    overrides = args.set or []
    out = [make_scenario(f, overrides) for f in args.scenario or []]
    out += [make_scenario(p, overrides) for p in args.scenario_file or []]
    return out or [make_scenario("desk_T", overrides)]


def _load_skill_file(path: str) -> Tuple[Skill, bool]:
    """The skill at ``path`` and whether it reads event variables."""
    skill, report = read_skill(path, VariableWhitelist.event())
    if skill is None or not report.ok:
        raise SkillRejected(f"skill {path} rejected at {report.stage} stage: {report.message}")
    return skill, not sandbox_check(skill, VariableWhitelist.lane()).ok


def _capsule_skill(run: str, skill_id: str) -> Skill:
    store = AssetStore.open_existing(run)
    for payload in store.capsules():
        if payload["skill"]["id"] == skill_id:
            return Skill.from_dict(payload["skill"])
    raise UnknownId(f"run {store.run_id} has no capsule for skill {skill_id!r}")


def _method_spec(method: str, bank: Optional[SkillBank] = None) -> ControllerSpec:
    if method.startswith("skill:"):
        skill, events = _load_skill_file(method[len("skill:") :])
        return ControllerSpec("skill", skill=skill, with_events=events, on_error="hold")
    if method == "bank":
        return ControllerSpec("dispatcher", bank=bank or SkillBank.load_default(), on_error="hold")
    if method in BASELINE_METHODS:
        return ControllerSpec(method)
    raise ConfigError(f"unknown method {method!r}; use one of {', '.join(BASELINE_METHODS)} or skill:PATH")


def _episode(task: Tuple[str, ControllerSpec, ScenarioConfig, int]) -> Dict[str, Any]:
    label, spec, scenario, seed = task
    m = drive(spec, scenario, seed=seed)
    row = {"method": label, "scenario": scenario.name, "seed": seed}
    row.update({k: v for k, v in m.summary().items() if k in METRIC_COLUMNS})
    return row


def _run_episodes(methods: Mapping[str, ControllerSpec], scenarios, seeds, jobs: int) -> pd.DataFrame:
    tasks = [(label, spec, sc, seed) for label, spec in methods.items() for sc in scenarios for seed in seeds]
    logger.info("running %d episodes (%d methods, %d scenarios, %d seeds)", len(tasks), len(methods), len(scenarios), len(seeds))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_episode, tasks))
    else:
        rows = [_episode(t) for t in tasks]
    return pd.DataFrame(rows, columns=["method", "scenario", "seed", *METRIC_COLUMNS])


def _summary(table: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for (method, scenario), group in table.groupby(["method", "scenario"], sort=False):
        for metric in METRIC_COLUMNS:
            values = group[metric].dropna().tolist()
            if not values:
                continue
            mean, std = summarize(values)
            rows.append({"method": method, "scenario": scenario, "metric": metric, "mean": mean, "std": std, "n": len(values)})
    return pd.DataFrame(rows, columns=["method", "scenario", "metric", "mean", "std", "n"])


def _manifest(args: argparse.Namespace, out: Path, deterministic: bool = True, **extra: Any) -> Path:
    arguments = {k: v for k, v in vars(args).items() if k != "handler"}
    if getattr(args, "seeds", None):
        seeds = list(args.seeds)
    else:
        seeds = [args.seed] if hasattr(args, "seed") else []
    data = {
        "command": args.command,
        "arguments": arguments,
        "seeds": seeds,
        "deterministic": deterministic,
        "versions": {
            "signal_evo": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
    }
    data.update(extra)
    path = out / "manifest.json"
    try:
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return path


def _out_dir(path: Optional[str]) -> Optional[Path]:
    if path is None:
        return None
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    try:
        frame.to_csv(path, index=False)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return path


def _show(frame: pd.DataFrame) -> None:
    print(frame.to_string(index=False) if not frame.empty else "(no rows)")


# -- commands ---------------------------------------------------------------


def cmd_evolve(args: argparse.Namespace) -> int:
    from .config import settings

    scenarios = _scenarios(args)
    run_id = args.run_id or f"run-{args.seed}"
    cfg = EvolutionConfig(
        tuple(scenarios),
        population=args.pop,
        generations=args.gens,
        tau=args.tau,
        mode=args.mode,
        seed=args.seed,
        direction_mode=args.direction_mode,
        representation=args.representation,
        jobs=args.jobs,
        max_retries=args.max_retries,
        run_id=run_id,
    )
    backend = make_backend(args.generator, args.seed)
    out = Path(args.out) if args.out else Path(settings.RUN_DIR) / run_id
    if args.resume:
        store = AssetStore.open_existing(out)
    else:
        store = AssetStore(out, run_id=run_id)
    result = run_evolution(cfg, backend, store, resume=args.resume)
    summary = pd.DataFrame(
        [
            {
                "scenarios": "+".join(sc.name for sc in scenarios),
                "mode": args.mode,
                "initial_fitness": result.seed_fitness,
                "best_fitness": result.best_fitness,
                "best_generation": result.best_generation,
                "improvement_pct": result.improvement,
                "best_skill": result.best.id,
            }
        ]
    )
    _write_csv(summary, out / "summary.csv")
    _manifest(args, out, deterministic=getattr(backend, "deterministic", False), run_id=store.run_id)
    _show(summary)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.skill:
        skill, events = _load_skill_file(args.skill)
    elif args.capsule and args.run:
        skill = _capsule_skill(args.run, args.capsule)
        events = not sandbox_check(skill, VariableWhitelist.lane()).ok
    else:
        raise ConfigError("evaluate needs --skill PATH or --capsule ID with --run DIR")
    spec = ControllerSpec("skill", skill=skill, with_events=events, on_error=args.on_error)
    table = _run_episodes({skill.id: spec}, _scenarios(args), args.seeds, args.jobs)
    summary = _summary(table)
    out = _out_dir(args.out)
    if out is not None:
        _write_csv(table, out / "metrics.csv")
        _write_csv(summary, out / "summary.csv")
        _manifest(args, out, skill=skill.id)
    _show(table)
    _show(summary)
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    table = _run_episodes({args.method: _method_spec(args.method)}, _scenarios(args), args.seeds, args.jobs)
    summary = _summary(table)
    out = _out_dir(args.out)
    if out is not None:
        _write_csv(table, out / "metrics.csv")
        _write_csv(summary, out / "summary.csv")
        _manifest(args, out)
    _show(table)
    _show(summary)
    return EXIT_OK


def significance_table(table: pd.DataFrame, methods: Sequence[str]) -> pd.DataFrame:
    """Welch's t-test and Cohen's d for every method pair, scenario and metric."""
    rows = []
    for scenario in table["scenario"].unique():
        sub = table[table["scenario"] == scenario]
        for metric in METRIC_COLUMNS:
            samples = {m: sub.loc[sub["method"] == m, metric].tolist() for m in methods}
            if any(not v or any(pd.isna(x) for x in v) for v in samples.values()):
                continue
            for a, b in combinations(methods, 2):
                stat = welch_and_cohen(samples[a], samples[b])
                (ma, sa), (mb, sb) = summarize(samples[a]), summarize(samples[b])
                rows.append(
                    {
                        "scenario": scenario,
                        "metric": metric,
                        "method_a": a,
                        "method_b": b,
                        "mean_a": ma,
                        "std_a": sa,
                        "mean_b": mb,
                        "std_b": sb,
                        "t": stat.t,
                        "dof": stat.dof,
                        "p": stat.p,
                        "d": stat.d,
                    }
                )
    columns = ["scenario", "metric", "method_a", "method_b", "mean_a", "std_a", "mean_b", "std_b", "t", "dof", "p", "d"]
    return pd.DataFrame(rows, columns=columns)


def cmd_compare(args: argparse.Namespace) -> int:
    methods = list(args.method or [])
    if len(methods) < 2:
        raise ConfigError("compare needs at least two --method values")
    if len(args.seeds) < 2:
        raise ConfigError("compare needs at least two seeds")
    bank = SkillBank.load_default() if "bank" in methods else None
    labels = [f"{m}#{i}" if methods.count(m) > 1 else m for i, m in enumerate(methods)]
    specs = {label: _method_spec(m, bank) for label, m in zip(labels, methods)}
    table = _run_episodes(specs, _scenarios(args), args.seeds, args.jobs)
    sig = significance_table(table, labels)
    out = _out_dir(args.out)
    if out is not None:
        _write_csv(table, out / "metrics.csv")
        _write_csv(sig, out / "significance.csv")
        _manifest(args, out)
    _show(sig)
    return EXIT_OK


def _skill_view(skill: Skill) -> Dict[str, Any]:
    view = skill.to_dict()
    view["complexity"] = {label: complexity(parse(getattr(skill, f"{label}_code")))._asdict() for label in ("inlane", "outlane")}
    return view


def cmd_inspect(args: argparse.Namespace) -> int:
    if args.skill:
        skill, report = read_skill(args.skill, VariableWhitelist.event())
        if skill is None or not report.ok:
            raise SkillRejected(f"skill {args.skill} rejected at {report.stage} stage: {report.message}")
        print(json.dumps(_skill_view(skill), indent=2, sort_keys=True))
        return EXIT_OK
    if not args.run:
        raise ConfigError("inspect needs --skill PATH or --run DIR")
    store = AssetStore.open_existing(args.run)
    if args.id:
        chain = store.lineage(args.id)
        _show(
            pd.DataFrame(
                [{"id": s.id, "generation": s.generation, "fitness": s.fitness, "description": s.description} for s in chain]
            )
        )
        print(json.dumps(_skill_view(chain[0]), indent=2, sort_keys=True))
        return EXIT_OK
    capsules = store.capsules()
    _show(
        pd.DataFrame(
            [{"generation": c["generation"], "skill": c["skill"]["id"], "fitness": c["fitness"]} for c in capsules],
            columns=["generation", "skill", "fitness"],
        )
    )
    ckpt = store.read_checkpoint() or {}
    print(f"run {store.run_id}: {ckpt.get('completed', 0)} generations completed, best {ckpt.get('best_id')}")
    return EXIT_OK


def _curve(records) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "generation": r.index + 1,
                "best_fitness": r.best_fitness,
                "mean_fitness": r.mean_fitness,
                "signals": "|".join(r.signals),
            }
            for r in records
        ],
        columns=["generation", "best_fitness", "mean_fitness", "signals"],
    )


def cmd_replay(args: argparse.Namespace) -> int:
    store = AssetStore.open_existing(args.run)
    result = replay_run(store)
    table = pd.DataFrame(
        [
            {
                "generation": r.index + 1,
                "drafts": len(r.candidate_ids),
                "best_id": r.best_id,
                "best_fitness": r.best_fitness,
                "mean_fitness": r.mean_fitness,
                "improved": r.improved,
                "direction": r.direction,
            }
            for r in result.records
        ]
    )
    _show(table)
    print(json.dumps(_skill_view(result.best), indent=2, sort_keys=True))
    out = _out_dir(args.out)
    if out is not None:
        _write_csv(table, out / "generations.csv")
        _manifest(args, out, run_id=store.run_id)
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    store = AssetStore.open_existing(args.run)
    result = replay_run(store)
    out = _out_dir(args.out)
    rows = []
    for rec in store.records("evaluated"):
        p = rec["payload"]
        row = {"generation": p.get("generation"), "skill": p.get("skill"), "fitness": p.get("fitness")}
        row.update({k: (p.get("metrics") or {}).get(k) for k in METRIC_COLUMNS})
        rows.append(row)
    metrics = pd.DataFrame(rows, columns=["generation", "skill", "fitness", *METRIC_COLUMNS])
    capsules = pd.DataFrame(
        [{"generation": c.generation, "skill": c.skill.id, "fitness": c.fitness, **dict(c.metrics)} for c in result.capsules]
    )
    _write_csv(_curve(result.records), out / "curve.csv")
    _write_csv(metrics, out / "metrics.csv")
    _write_csv(capsules, out / "capsules.csv")
    _manifest(args, out, run_id=store.run_id)
    logger.info("exported run %s (%d generations) to %s", store.run_id, len(result.records), out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", action="append", help="scenario family (repeatable); default desk_T")
    p.add_argument("--scenario-file", action="append", help="custom scenario YAML (repeatable)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted scenario override (repeatable)")


def _episode_flags(p: argparse.ArgumentParser) -> None:
    _scenario_flags(p)
    p.add_argument("--seeds", type=int, nargs="+", default=list(DEFAULT_SEEDS), help="simulator seeds")
    p.add_argument("--jobs", type=int, default=1, help="parallel episodes")
    p.add_argument("--out", help="directory for CSV tables and manifest.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signal-evo", description="Evolve and evaluate traffic-signal skills.")
    parser.add_argument("--log-level", default=None, help="override SIGNAL_EVO_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run (or resume) an evolution")
    _scenario_flags(p)
    p.add_argument("--mode", choices=EVOLUTION_MODES, default="routine")
    p.add_argument("--generator", choices=GENERATOR_KINDS, default="scripted")
    p.add_argument("--pop", type=int, default=8, help="drafts per generation")
    p.add_argument("--gens", type=int, default=30)
    p.add_argument("--tau", type=int, default=3, help="stagnation threshold")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="run directory (default $SIGNAL_EVO_RUN_DIR/<run id>)")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--direction-mode", choices=DIRECTION_MODES, default="signals")
    p.add_argument("--representation", choices=REPRESENTATIONS, default="skill")
    p.add_argument("--run-id")
    p.add_argument("--max-retries", type=int, default=3, help="generator retries per draft")
    p.set_defaults(handler=cmd_evolve)

    p = sub.add_parser("evaluate", help="evaluate one skill over seeds")
    p.add_argument("--skill", help="skill JSON file")
    p.add_argument("--capsule", help="capsule skill id (with --run)")
    p.add_argument("--run", help="run directory holding the capsule")
    p.add_argument("--on-error", choices=("raise", "hold"), default="hold", help="hold the phase on a skill fault, or fail the episode")
    _episode_flags(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("baseline", help="evaluate a baseline controller")
    p.add_argument("--method", choices=BASELINE_METHODS, required=True)
    _episode_flags(p)
    p.set_defaults(handler=cmd_baseline)

    p = sub.add_parser("compare", help="Welch's t-test between methods")
    p.add_argument("--method", action="append", help="baseline name or skill:PATH (at least two)")
    _episode_flags(p)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("inspect", help="show a skill or a run's capsules and lineage")
    p.add_argument("--skill")
    p.add_argument("--run")
    p.add_argument("--id")
    p.set_defaults(handler=cmd_inspect)

    p = sub.add_parser("replay", help="rebuild a run's generations from its store")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_replay)

    p = sub.add_parser("export", help="write curve and metric CSVs for a run")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_export)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except (ConfigError, UnknownRun, UnknownId) as exc:
        print(f"signal-evo {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SignalEvoError as exc:
        print(f"signal-evo {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
