"""File formats and event-log ingestion.

Event logs are CSV files with columns ``patient_id, activity, day`` where
``day`` is relative to diagnosis. Ingestion turns them into START/END-free
activity sequences ready for :func:`~pathconcord.network.sequence_to_flow`.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataIOError, UnmappedActivity, ValidationError
from .network import ClinicalNetwork

COHORT_COLUMNS = ["patient_id", "activity_sequence", "event_time", "event_observed"]
SCORE_COLUMNS = ["patient_id", "omega", "epsilon", "walk_length", "shortest_cost", "longest_cost"]


@dataclass
class EventLog:
    rows: list[tuple[str, str, float]]

    @classmethod
    def read(cls, path: str | Path) -> "EventLog":
        rows = []
        for rec in read_csv(path, ["patient_id", "activity", "day"]):
            try:
                day = float(rec["day"])
            except ValueError:
                raise DataIOError(f"{path}: non-numeric day {rec['day']!r}") from None
            if day != day or day in (float("inf"), float("-inf")):
                raise DataIOError(f"{path}: timestamps must be finite")
            rows.append((rec["patient_id"], rec["activity"], day))
        return cls(rows)

    def write(self, path: str | Path) -> None:
        write_csv(path, ["patient_id", "activity", "day"], ({"patient_id": p, "activity": a, "day": _num(d)} for p, a, d in self.rows))


@dataclass
class RefinementConfig:
    window: tuple[float, float] = (-30.0, 365.0)
    truncate_after_last_chemo: bool = True
    merge_map: dict[str, str] = field(default_factory=dict)
    drop: list[str] = field(default_factory=list)
    chemo_threshold: int = 6
    chemo_codes: list[str] = field(default_factory=lambda: ["CHEMO"])
    mo_consult_codes: list[str] = field(default_factory=lambda: ["MO_CONSULT"])
    resection_activity: str = "RESECTION"
    exit_nodes: dict[str, str] = field(
        default_factory=lambda: {
            "complete": "CHEMO_COMPLETE",
            "partial": "CHEMO_PARTIAL",
            "mo_consult": "MO_CONSULT_END",
            "none": "RESECTION_END",
        }
    )
    priority: dict[str, int] = field(default_factory=dict)  # same-day ordering, lower first

    def __post_init__(self):
        self.window = tuple(float(v) for v in self.window)
        if not self.window[0] < self.window[1]:
            raise ValidationError("refinement window lower bound must be below the upper bound")
        if self.chemo_threshold < 1:
            raise ValidationError("chemo_threshold must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "RefinementConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown refinement keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "RefinementConfig":
        return cls.from_dict(read_json(path))


@dataclass
class IngestResult:
    sequences: dict[str, list[str]]
    excluded: dict[str, str]


def ingest(log: EventLog, cfg: RefinementConfig, network: ClinicalNetwork) -> IngestResult:
    """Per-patient activity sequences with the outcome-layer exit appended.

    Steps per patient: stable sort by day (then ``priority``), keep events in
    the window, cut everything after the last chemotherapy event, map and
    drop codes, then append the exit node by the number of chemotherapy
    events (``>= chemo_threshold``, fewer but some, none with a medical
    oncology consult, none). Chemotherapy and consult events themselves are
    not network activities. Sequences already ending in an outcome-layer
    activity keep that exit, so ingesting serialized output is a no-op.
    """
    by_patient: dict[str, list[tuple[int, str, float]]] = {}
    for pos, (pid, code, day) in enumerate(log.rows):
        by_patient.setdefault(pid, []).append((pos, code, day))
    chemo = set(cfg.chemo_codes)
    consult = set(cfg.mo_consult_codes)
    lo, hi = cfg.window
    sequences: dict[str, list[str]] = {}
    excluded: dict[str, str] = {}
    unmapped: set[str] = set()
    for pid, events in by_patient.items():
        events = sorted(events, key=lambda ev: (ev[2], cfg.priority.get(ev[1], 0), ev[0]))
        events = [ev for ev in events if lo <= ev[2] <= hi]
        chemo_days = [ev[2] for ev in events if ev[1] in chemo]
        if cfg.truncate_after_last_chemo and chemo_days:
            last = max(chemo_days)
            events = [ev for ev in events if ev[2] <= last]
        n_chemo = sum(ev[1] in chemo for ev in events)
        has_consult = any(ev[1] in consult for ev in events)
        seq = []
        for _, code, _ in events:
            if code in chemo or code in consult or code in cfg.drop:
                continue
            mapped = cfg.merge_map.get(code, code)
            if mapped in cfg.drop:
                continue
            try:
                seq.append(network.resolve_activity(mapped))
            except KeyError:
                unmapped.add(code)
        if seq and network.activities[seq[-1]].outcome_layer:
            pass
        else:
            if n_chemo >= cfg.chemo_threshold:
                exit_key = "complete"
            elif n_chemo > 0:
                exit_key = "partial"
            elif has_consult:
                exit_key = "mo_consult"
            else:
                exit_key = "none"
            seq.append(network.resolve_activity(cfg.exit_nodes[exit_key]))
        if cfg.resection_activity not in seq:
            excluded[pid] = f"no {cfg.resection_activity} event in the refinement window"
            continue
        sequences[pid] = seq
    if unmapped:
        raise UnmappedActivity(sorted(unmapped))
    return IngestResult(sequences, excluded)


def serialize(sequences: dict[str, Sequence[str]]) -> EventLog:
    """Event log whose ingestion reproduces ``sequences`` (one event per day)."""
    return EventLog([(pid, a, float(i)) for pid, seq in sequences.items() for i, a in enumerate(seq)])


# ---------------------------------------------------------------------------
# generic readers / writers


def _num(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_json(path: str | Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataIOError(f"{path} is not valid JSON: {exc}") from exc


def write_json(path: str | Path, data) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def read_csv(path: str | Path, required: Iterable[str]) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = set(required) - set(reader.fieldnames or [])
            if missing:
                raise DataIOError(f"{path}: missing columns {sorted(missing)}")
            return list(reader)
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_num(row[c]) for c in columns])
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise DataIOError(f"cannot read {text!r} as a boolean")


@dataclass
class CohortRow:
    patient_id: str
    sequence: tuple[str, ...]
    event_time: float
    event_observed: bool


def read_cohort(path: str | Path) -> list[CohortRow]:
    rows = []
    for rec in read_csv(path, ["patient_id", "activity_sequence"]):
        seq = tuple(a for a in rec["activity_sequence"].split(";") if a)
        try:
            t = float(rec["event_time"]) if rec.get("event_time") not in (None, "") else float("nan")
        except ValueError:
            raise DataIOError(f"{path}: bad event_time {rec['event_time']!r}") from None
        e = _bool(rec["event_observed"]) if rec.get("event_observed") not in (None, "") else False
        rows.append(CohortRow(rec["patient_id"], seq, t, e))
    ids = Counter(r.patient_id for r in rows)
    dup = [p for p, k in ids.items() if k > 1]
    if dup:
        raise DataIOError(f"{path}: duplicate patient ids {dup[:5]}")
    return rows


def write_cohort(path: str | Path, records) -> None:
    write_csv(
        path,
        COHORT_COLUMNS,
        (
            {
                "patient_id": r.patient_id,
                "activity_sequence": ";".join(r.sequence),
                "event_time": float(r.event_time),
                "event_observed": bool(r.event_observed),
            }
            for r in records
        ),
    )
