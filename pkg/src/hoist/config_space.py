"""Search-space definitions, uniform sampling and [0, 1] feature encoding."""

from __future__ import annotations

import itertools
import json
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

KINDS = ("continuous", "continuous-log", "integer", "categorical")

_default_ids = itertools.count()


class SpaceError(ValueError):
    """Raised for malformed parameter definitions or space files."""


class EncodingError(ValueError):
    """Raised when a configuration value cannot be encoded."""

    def __init__(self, parameter: str, message: str):
        super().__init__(f"parameter {parameter!r}: {message}")
        self.parameter = parameter


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    choices: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SpaceError(f"parameter {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if len(set(self.choices)) < 2 or len(set(self.choices)) != len(self.choices):
                raise SpaceError(
                    f"parameter {self.name!r}: categorical needs >= 2 distinct choices"
                )
            return
        if self.lower is None or self.upper is None:
            raise SpaceError(f"parameter {self.name!r}: lower and upper are required")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise SpaceError(f"parameter {self.name!r}: bounds must be finite")
        if not self.lower < self.upper:
            raise SpaceError(f"parameter {self.name!r}: lower must be < upper")
        if self.kind == "continuous-log" and self.lower <= 0:
            raise SpaceError(f"parameter {self.name!r}: log bounds must be > 0")
        if self.kind == "integer" and (
            self.lower != int(self.lower) or self.upper != int(self.upper)
        ):
            raise SpaceError(f"parameter {self.name!r}: integer bounds must be integral")

    def contains(self, value: Any) -> bool:
        if self.kind == "categorical":
            return isinstance(value, str) and value in self.choices
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            return False
        if self.kind == "integer" and int(value) != value:
            return False
        return self.lower <= value <= self.upper

    def encode(self, value: Any) -> float:
        if not self.contains(value):
            raise EncodingError(self.name, f"value {value!r} outside domain")
        if self.kind == "categorical":
            return self.choices.index(value) / (len(self.choices) - 1)
        if self.kind == "continuous-log":
            lo, hi = math.log10(self.lower), math.log10(self.upper)
            return (math.log10(value) - lo) / (hi - lo)
        return (float(value) - self.lower) / (self.upper - self.lower)

    def decode(self, coord: float) -> Any:
        coord = min(max(float(coord), 0.0), 1.0)
        if self.kind == "categorical":
            return self.choices[int(round(coord * (len(self.choices) - 1)))]
        if self.kind == "continuous-log":
            lo, hi = math.log10(self.lower), math.log10(self.upper)
            return min(max(10.0 ** (lo + coord * (hi - lo)), self.lower), self.upper)
        value = self.lower + coord * (self.upper - self.lower)
        if self.kind == "integer":
            return int(round(value))
        return value

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "categorical":
            return {"name": self.name, "kind": self.kind, "choices": list(self.choices)}
        return {"name": self.name, "kind": self.kind, "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class Configuration:
    """A concrete assignment of values; ``id`` is unique within a run."""

    values: Mapping[str, Any]
    id: int = field(default_factory=lambda: next(_default_ids), compare=False)

    def __getitem__(self, name: str) -> Any:
        return self.values[name]

    def key(self) -> tuple:
        return tuple(sorted(self.values.items()))


@dataclass(frozen=True)
class ConfigSpace:
    parameters: tuple[ParameterSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parameters", tuple(self.parameters))
        names = [p.name for p in self.parameters]
        if not names:
            raise SpaceError("space has no parameters")
        if len(set(names)) != len(names):
            raise SpaceError("parameter names must be unique")

    def __len__(self) -> int:
        return len(self.parameters)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.parameters]

    def make(self, values: Mapping[str, Any], ids: Iterator[int] | None = None) -> Configuration:
        """Validate ``values`` against the space and wrap them in a Configuration."""
        if set(values) != set(self.names):
            missing = set(self.names) - set(values)
            extra = set(values) - set(self.names)
            raise EncodingError(
                sorted(missing | extra)[0], "configuration does not match the space"
            )
        clean = {}
        for p in self.parameters:
            v = values[p.name]
            if not p.contains(v):
                raise EncodingError(p.name, f"value {v!r} outside domain")
            if p.kind == "integer":
                v = int(v)
            elif p.kind != "categorical":
                v = float(v)
            clean[p.name] = v
        ident = next(ids) if ids is not None else next(_default_ids)
        return Configuration(clean, ident)

    def to_dict(self) -> dict[str, Any]:
        return {"parameters": [p.to_dict() for p in self.parameters]}

    @classmethod
    def from_dict(cls, doc: Any) -> ConfigSpace:
        if not isinstance(doc, dict):
            raise SpaceError("space document must be a JSON object")
        unknown = set(doc) - {"parameters"}
        if unknown:
            raise SpaceError(f"unknown key {sorted(unknown)[0]!r} in space document")
        entries = doc.get("parameters")
        if not isinstance(entries, list):
            raise SpaceError("'parameters' must be an array")
        params = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict):
                raise SpaceError(f"parameters[{i}] must be an object")
            name = entry.get("name")
            if not isinstance(name, str) or not name:
                raise SpaceError(f"parameters[{i}].name must be a non-empty string")
            kind = entry.get("kind")
            if kind not in KINDS:
                raise SpaceError(f"parameters[{i}].kind: unknown kind {kind!r}")
            allowed = {"name", "kind"} | ({"choices"} if kind == "categorical" else {"lower", "upper"})
            bad = set(entry) - allowed
            if bad:
                raise SpaceError(f"parameters[{i}]: unknown key {sorted(bad)[0]!r}")
            if kind == "categorical":
                choices = entry.get("choices")
                if not isinstance(choices, list) or not all(isinstance(c, str) for c in choices):
                    raise SpaceError(f"parameters[{i}].choices must be an array of strings")
                params.append(ParameterSpec(name, kind, choices=tuple(choices)))
            else:
                for key in ("lower", "upper"):
                    v = entry.get(key)
                    if isinstance(v, bool) or not isinstance(v, (int, float)):
                        raise SpaceError(f"parameters[{i}].{key} must be a number")
                params.append(ParameterSpec(name, kind, float(entry["lower"]), float(entry["upper"])))
        return cls(tuple(params))

    @classmethod
    def load(cls, path: str | Path) -> ConfigSpace:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SpaceError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)


def sample_uniform(
    space: ConfigSpace,
    count: int,
    rng: np.random.Generator,
    ids: Iterator[int] | None = None,
) -> list[Configuration]:
    """Draw ``count`` independent configurations, parameter by parameter."""
    if count < 1:
        raise ValueError("count must be >= 1")
    columns = {}
    for p in space.parameters:
        if p.kind == "continuous":
            columns[p.name] = [float(v) for v in rng.uniform(p.lower, p.upper, count)]
        elif p.kind == "continuous-log":
            lo, hi = math.log10(p.lower), math.log10(p.upper)
            exps = rng.uniform(lo, hi, count)
            # clip guards against 10**hi rounding just past the bound
            columns[p.name] = [min(max(10.0 ** e, p.lower), p.upper) for e in exps]
        elif p.kind == "integer":
            draws = rng.integers(int(p.lower), int(p.upper), count, endpoint=True)
            columns[p.name] = [int(v) for v in draws]
        else:
            idx = rng.integers(0, len(p.choices), count)
            columns[p.name] = [p.choices[i] for i in idx]
    out = []
    for j in range(count):
        ident = next(ids) if ids is not None else next(_default_ids)
        out.append(Configuration({name: col[j] for name, col in columns.items()}, ident))
    return out


def encode(space: ConfigSpace, config: Configuration) -> np.ndarray:
    return np.array([p.encode(config.values.get(p.name)) for p in space.parameters], dtype=float)


def encode_many(space: ConfigSpace, configs: list[Configuration]) -> np.ndarray:
    if not configs:
        return np.empty((0, len(space)))
    return np.vstack([encode(space, c) for c in configs])


def decode(space: ConfigSpace, coords: np.ndarray, ids: Iterator[int] | None = None) -> Configuration:
    values = {p.name: p.decode(c) for p, c in zip(space.parameters, coords)}
    ident = next(ids) if ids is not None else next(_default_ids)
    return Configuration(values, ident)
