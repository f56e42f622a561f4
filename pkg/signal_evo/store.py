"""Append-only asset store of one evolution run.

Layout of a run directory::

    skills.jsonl      every drafted skill (kind "skill")
    capsules.jsonl    solidified improvements (kind "capsule")
    events.jsonl      audit trail (generated, validated, rejected, ...)
    sessions.jsonl    started / resumed / finished, with wall-clock times
    checkpoint.yml    resume state, replaced atomically

Each JSONL line is ``{"kind", "payload", "run_id", "seq"}`` with sorted
keys. Sequence numbers are shared by skills, capsules and events and
strictly increase over the run; session lines carry no sequence so that
interrupting and resuming a run leaves the other files unchanged.
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Union

import numpy as np
import yaml

from .errors import StorageError, UnknownId, UnknownRun
from .logs import get_logger
from .skilldsl import Skill

logger = get_logger(__name__)

AUDIT_KINDS = ("generated", "validated", "rejected", "evaluated", "solidified", "checkpointed")
SESSION_KINDS = ("started", "resumed", "finished")

SKILLS_FILE = "skills.jsonl"
CAPSULES_FILE = "capsules.jsonl"
EVENTS_FILE = "events.jsonl"
SESSIONS_FILE = "sessions.jsonl"
CHECKPOINT_FILE = "checkpoint.yml"

_SEQUENCED = (SKILLS_FILE, CAPSULES_FILE, EVENTS_FILE)


def _file_for(kind: str) -> str:
    if kind == "skill":
        return SKILLS_FILE
    if kind == "capsule":
        return CAPSULES_FILE
    if kind in AUDIT_KINDS:
        return EVENTS_FILE
    if kind in SESSION_KINDS:
        return SESSIONS_FILE
    raise ValueError(f"unknown record kind {kind!r}")


def json_safe(obj: Any) -> Any:
    """Plain-Python copy with numpy scalars unwrapped and non-finite floats as None."""
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, Mapping):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def encode_record(record: Mapping[str, Any]) -> str:
    return json.dumps(json_safe(record), sort_keys=True, ensure_ascii=False, allow_nan=False)


def _read_jsonl(path: Path) -> List[Dict[str, Any]]:
    if not path.exists():
        return []
    out = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise StorageError(f"{path}:{lineno}: corrupt record: {exc}") from exc
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    return out


class AssetStore:
    """Single-writer store for one run; readers may open it concurrently."""

    def __init__(self, root: Union[str, Path], run_id: Optional[str] = None):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create run directory {self.root}: {exc}") from exc
        self.run_id = run_id or self._stored_run_id() or self.root.name
        self.seq = self._max_seq()

    @classmethod
    def open_existing(cls, root: Union[str, Path]) -> "AssetStore":
        """Open a run directory that already holds store files."""
        root = Path(root)
        names = _SEQUENCED + (SESSIONS_FILE, CHECKPOINT_FILE)
        if not root.is_dir() or not any((root / n).exists() for n in names):
            raise UnknownRun(f"{root} holds no run")
        return cls(root)

    # -- internals -------------------------------------------------------
    def _stored_run_id(self) -> Optional[str]:
        for name in _SEQUENCED + (SESSIONS_FILE,):
            for rec in _read_jsonl(self.root / name):
                if rec.get("run_id"):
                    return rec["run_id"]
        ckpt = self.read_checkpoint()
        return ckpt.get("run_id") if ckpt else None

    def _max_seq(self) -> int:
        return max((rec.get("seq") or 0 for name in _SEQUENCED for rec in _read_jsonl(self.root / name)), default=0)

    def _write_line(self, path: Path, line: str) -> None:
        try:
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageError(f"cannot append to {path}: {exc}") from exc

    # -- writing ---------------------------------------------------------
    def append(self, kind: str, payload: Mapping[str, Any]) -> int:
        """Durably append one record and return its sequence number."""
        name = _file_for(kind)
        if name == SESSIONS_FILE:
            raise ValueError(f"{kind!r} is a session record; use log_session")
        seq = self.seq + 1
        self._write_line(self.root / name, encode_record({"kind": kind, "payload": payload, "run_id": self.run_id, "seq": seq}))
        self.seq = seq
        return seq

    def append_skill(self, skill: Skill) -> int:
        return self.append("skill", skill.to_dict())

    def log_session(self, kind: str, payload: Mapping[str, Any]) -> None:
        if kind not in SESSION_KINDS:
            raise ValueError(f"unknown session kind {kind!r}")
        self._write_line(self.root / SESSIONS_FILE, encode_record({"kind": kind, "payload": payload, "run_id": self.run_id}))

    def truncate_after(self, seq: int) -> int:
        """Drop sequenced records above ``seq``; returns how many were dropped."""
        dropped = 0
        for name in _SEQUENCED:
            path = self.root / name
            records = _read_jsonl(path)
            keep = [r for r in records if (r.get("seq") or 0) <= seq]
            if len(keep) == len(records):
                continue
            dropped += len(records) - len(keep)
            tmp = path.with_name(path.name + ".tmp")
            try:
                with open(tmp, "w", encoding="utf-8") as fh:
                    for rec in keep:
                        fh.write(encode_record(rec) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, path)
            except OSError as exc:
                raise StorageError(f"cannot rewrite {path}: {exc}") from exc
        self.seq = min(self.seq, seq)
        if dropped:
            logger.info("run %s: discarded %d records written after seq %d", self.run_id, dropped, seq)
        return dropped

    def write_checkpoint(self, data: Mapping[str, Any]) -> Path:
        """Write ``checkpoint.yml`` through a temporary file and an atomic rename."""
        path = self.root / CHECKPOINT_FILE
        tmp = path.with_name(path.name + ".tmp")
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                # through JSON so numpy scalars and non-finite floats become plain YAML
                yaml.safe_dump(json.loads(encode_record(dict(data, run_id=self.run_id))), fh, sort_keys=True)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except (OSError, yaml.YAMLError) as exc:
            raise StorageError(f"cannot write checkpoint {path}: {exc}") from exc
        return path

    # -- reading ---------------------------------------------------------
    def read_checkpoint(self) -> Optional[Dict[str, Any]]:
        path = self.root / CHECKPOINT_FILE
        if not path.exists():
            return None
        try:
            with open(path, encoding="utf-8") as fh:
                return yaml.safe_load(fh) or None
        except (OSError, yaml.YAMLError) as exc:
            raise StorageError(f"cannot read checkpoint {path}: {exc}") from exc

    def records(self, kind: Optional[str] = None, file: Optional[str] = None) -> List[Dict[str, Any]]:
        """Records of one file, optionally filtered by kind."""
        name = file or (_file_for(kind) if kind else EVENTS_FILE)
        recs = _read_jsonl(self.root / name)
        return [r for r in recs if kind is None or r.get("kind") == kind]

    def events(self) -> List[Dict[str, Any]]:
        return self.records(file=EVENTS_FILE)

    def sessions(self) -> List[Dict[str, Any]]:
        return self.records(file=SESSIONS_FILE)

    def skills(self) -> Iterator[Skill]:
        for rec in self.records("skill"):
            yield Skill.from_dict(rec["payload"])

    def capsules(self) -> List[Dict[str, Any]]:
        return [rec["payload"] for rec in self.records("capsule")]

    def skill(self, skill_id: str) -> Skill:
        found = None
        for rec in self.records("skill"):
            if rec["payload"].get("id") == skill_id:
                found = rec["payload"]
        if found is None:
            raise UnknownId(f"no skill {skill_id!r} in run {self.run_id}")
        return Skill.from_dict(found)

    def lineage(self, skill_id: str) -> List[Skill]:
        """The chain from ``skill_id`` back to the run's seed."""
        by_id = {}
        for rec in self.records("skill"):
            by_id[rec["payload"]["id"]] = rec["payload"]
        if skill_id not in by_id:
            raise UnknownId(f"no skill {skill_id!r} in run {self.run_id}")
        chain, seen = [], set()
        current: Optional[str] = skill_id
        while current is not None:
            if current in seen:
                raise StorageError(f"lineage cycle at {current!r} in run {self.run_id}")
            if current not in by_id:
                raise UnknownId(f"parent {current!r} of {chain[-1].id!r} is missing from run {self.run_id}")
            seen.add(current)
            chain.append(Skill.from_dict(by_id[current]))
            current = by_id[current].get("parent_id")
        return chain


__all__ = [
    "AUDIT_KINDS",
    "SESSION_KINDS",
    "SKILLS_FILE",
    "CAPSULES_FILE",
    "EVENTS_FILE",
    "SESSIONS_FILE",
    "CHECKPOINT_FILE",
    "json_safe",
    "encode_record",
    "AssetStore",
]
