"""Evaluation data partitioned by fidelity stage, plus the JSON-lines run log."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from .config_space import ConfigSpace, Configuration, encode_many


class StoreError(ValueError):
    pass


def resource_ladder(max_resource: float, eta: float) -> list[float]:
    """Resource levels R * eta**(i - K) for i = 1..K, with K = floor(log_eta R) + 1."""
    if max_resource < 1:
        raise ValueError("max_resource must be >= 1")
    if eta <= 1:
        raise ValueError("eta must be > 1")
    s_max = stage_count(max_resource, eta) - 1
    return [max_resource / eta ** (s_max - i) for i in range(s_max + 1)]


def stage_count(max_resource: float, eta: float) -> int:
    s = int(math.floor(math.log(max_resource) / math.log(eta) + 1e-9))
    return s + 1


@dataclass(frozen=True)
class EvaluationRecord:
    config: Configuration
    resource: float
    loss: float
    stage_index: int
    bracket_id: int
    created_seq: int
    failed: bool = False


@dataclass
class StageDataset:
    stage_index: int
    resource_level: float
    records: list[EvaluationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def configs(self) -> list[Configuration]:
        return [r.config for r in self.records]

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records], dtype=float)

    def features(self, space: ConfigSpace) -> np.ndarray:
        return encode_many(space, self.configs)


class EvaluationStore:
    """Single-writer container for D_1..D_K.

    Stage indices are 1-based; stage K runs at the maximum resource.
    Failed evaluations are kept apart from the stage datasets so that no
    surrogate ever trains on them.
    """

    def __init__(self, space: ConfigSpace, max_resource: float, eta: float):
        self.space = space
        self.max_resource = float(max_resource)
        self.eta = float(eta)
        self.stages = [
            StageDataset(i + 1, r) for i, r in enumerate(resource_ladder(max_resource, eta))
        ]
        self.failures: list[EvaluationRecord] = []
        self._seq = 0

    @property
    def K(self) -> int:
        return len(self.stages)

    @property
    def complete(self) -> StageDataset:
        return self.stages[-1]

    def stage(self, index: int) -> StageDataset:
        if not 1 <= index <= self.K:
            raise StoreError(f"stage index {index} outside [1, {self.K}]")
        return self.stages[index - 1]

    def stage_for_resource(self, resource: float) -> int:
        for s in self.stages:
            if math.isclose(s.resource_level, resource, rel_tol=1e-12):
                return s.stage_index
        raise StoreError(f"resource {resource} is not on the ladder")

    def _check(self, stage_index: int, resource: float) -> StageDataset:
        st = self.stage(stage_index)
        if not math.isclose(st.resource_level, resource, rel_tol=1e-12):
            raise StoreError(
                f"resource {resource} does not match stage {stage_index} "
                f"level {st.resource_level}"
            )
        return st

    def record(
        self,
        config: Configuration,
        stage_index: int,
        resource: float,
        loss: float,
        bracket_id: int = 0,
    ) -> EvaluationRecord:
        st = self._check(stage_index, resource)
        if not math.isfinite(loss):
            raise StoreError(f"non-finite loss {loss!r} for configuration {dict(config.values)}")
        rec = EvaluationRecord(config, st.resource_level, float(loss), stage_index, bracket_id, self._seq)
        self._seq += 1
        st.records.append(rec)
        return rec

    def record_failure(
        self, config: Configuration, stage_index: int, resource: float, bracket_id: int = 0
    ) -> EvaluationRecord:
        st = self._check(stage_index, resource)
        rec = EvaluationRecord(
            config, st.resource_level, math.inf, stage_index, bracket_id, self._seq, failed=True
        )
        self._seq += 1
        self.failures.append(rec)
        return rec

    def incumbent(self) -> EvaluationRecord | None:
        best = None
        for rec in self.complete.records:
            if best is None or rec.loss < best.loss or (
                rec.loss == best.loss and rec.created_seq < best.created_seq
            ):
                best = rec
        return best

    def __len__(self) -> int:
        return sum(len(s) for s in self.stages)

    def all_records(self) -> list[EvaluationRecord]:
        """Every record including failures, in creation order."""
        recs = [r for s in self.stages for r in s.records] + self.failures
        return sorted(recs, key=lambda r: r.created_seq)

    def sizes(self) -> list[int]:
        return [len(s) for s in self.stages]


def record_to_json(rec: EvaluationRecord) -> dict[str, Any]:
    return {
        "seq": rec.created_seq,
        "bracket": rec.bracket_id,
        "stage": rec.stage_index,
        "resource": rec.resource,
        "loss": None if rec.failed else rec.loss,
        "config": dict(rec.config.values),
        "failed": rec.failed,
    }


class HistoryWriter:
    """Append-only JSON-lines log; every line is flushed as it is written."""

    def __init__(self, stream: TextIO):
        self.stream = stream

    @classmethod
    def open(cls, path: str | Path, mode: str = "a") -> HistoryWriter:
        return cls(open(path, mode, encoding="utf-8"))

    def write(self, event: dict[str, Any]) -> None:
        self.stream.write(json.dumps(event, allow_nan=False) + "\n")
        self.stream.flush()

    def record(self, rec: EvaluationRecord) -> None:
        self.write(record_to_json(rec))

    def close(self) -> None:
        self.stream.close()


def read_history(path: str | Path) -> list[dict[str, Any]]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                ev = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreError(f"{path}:{n}: corrupt history line ({exc})") from exc
            if not isinstance(ev, dict):
                raise StoreError(f"{path}:{n}: history line is not an object")
            events.append(ev)
    return events


def evaluation_events(events: Iterable[dict[str, Any]]) -> Iterator[dict[str, Any]]:
    for ev in events:
        if "event" not in ev:
            yield ev


def replay(
    events: Iterable[dict[str, Any]],
    space: ConfigSpace,
    max_resource: float,
    eta: float,
    ids: Iterator[int] | None = None,
) -> EvaluationStore:
    """Rebuild a store from logged evaluation lines; non-record events are skipped."""
    store = EvaluationStore(space, max_resource, eta)
    for ev in evaluation_events(events):
        try:
            config = space.make(ev["config"], ids)
            seq = int(ev["seq"])
            stage, resource, bracket = int(ev["stage"]), float(ev["resource"]), int(ev["bracket"])
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreError(f"malformed history record {ev!r}: {exc}") from exc
        if seq != store._seq:
            raise StoreError(f"history out of order: expected seq {store._seq}, got {seq}")
        if ev.get("failed"):
            store.record_failure(config, stage, resource, bracket)
        else:
            if ev.get("loss") is None:
                raise StoreError(f"record {seq} has no loss")
            store.record(config, stage, resource, float(ev["loss"]), bracket)
    return store
