"""Multi-fidelity test objectives and the subprocess evaluation protocol."""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from collections.abc import Callable, Sequence
from dataclasses import dataclass

from .config_space import ConfigSpace, Configuration, ParameterSpec


class EvaluationFailure(RuntimeError):
    """An objective could not produce a finite loss."""


class EvaluationTimeout(EvaluationFailure):
    pass


@dataclass(frozen=True)
class MultiFidelityObjective:
    name: str
    space: ConfigSpace
    fn: Callable[[Configuration, float, float], float]

    def evaluate(self, config: Configuration, r: float, R: float) -> float:
        return self.fn(config, r, R)


CURVE_SPACE = ConfigSpace(
    (
        ParameterSpec("x1", "continuous", 0.0, 1.0),
        ParameterSpec("x2", "continuous", 0.0, 1.0),
        ParameterSpec("a", "continuous", 0.1, 1.0),
        ParameterSpec("b", "continuous", 0.3, 1.0),
    )
)

BRANIN_SPACE = ConfigSpace(
    (
        ParameterSpec("x1", "continuous", -5.0, 10.0),
        ParameterSpec("x2", "continuous", 0.0, 15.0),
    )
)


def asymptotic_loss(x1: float, x2: float) -> float:
    return (x1 - 0.3) ** 2 + (x2 - 0.7) ** 2


def eval_curve_bench(config: Configuration, r: float, R: float) -> float:
    """Power-law learning curve decaying onto a quadratic bowl at (0.3, 0.7)."""
    if r < 1:
        raise ValueError(f"resource must be >= 1, got {r}")
    return asymptotic_loss(config["x1"], config["x2"]) + config["a"] * r ** (-config["b"])


def eval_deceptive_bench(
    config: Configuration, r: float, R: float, threshold: float = 0.5
) -> float:
    """Rank-inverted below ``threshold`` of the maximum resource, truthful above."""
    if r < 1:
        raise ValueError(f"resource must be >= 1, got {r}")
    f = asymptotic_loss(config["x1"], config["x2"])
    return 1.0 - f if r / R < threshold else f


def branin(x1: float, x2: float) -> float:
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10


def eval_distorted_branin(config: Configuration, r: float, R: float) -> float:
    x1, x2 = config["x1"], config["x2"]
    distortion = (1 - r / R) * 10 * abs(math.sin(3 * math.pi * (x1 + 5) / 15))
    return branin(x1, x2) + distortion


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def eval_external(
    command: str | Sequence[str],
    config: Configuration,
    r: float,
    R: float,
    timeout: float = 60.0,
) -> float:
    """Evaluate through a child process speaking one-line JSON on stdin/stdout.

    Request: ``{"config": {...}, "resource": r, "max_resource": R}``.
    Response: ``{"loss": v}`` with v a finite number.
    """
    if timeout <= 0:
        raise ValueError("timeout must be > 0")
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    request = json.dumps(
        {"config": {k: _jsonable(v) for k, v in config.values.items()},
         "resource": r, "max_resource": R}
    )
    try:
        proc = subprocess.run(
            argv,
            input=(request + "\n").encode("utf-8"),
            capture_output=True,
            timeout=timeout,
            check=False,
        )
    except subprocess.TimeoutExpired as exc:
        raise EvaluationTimeout(f"evaluation timed out after {timeout}s: {argv[0]}") from exc
    except OSError as exc:
        raise EvaluationFailure(f"cannot start {argv[0]}: {exc}") from exc
    if proc.returncode != 0:
        err = proc.stderr.decode("utf-8", "replace").strip()[-200:]
        raise EvaluationFailure(f"{argv[0]} exited with status {proc.returncode}: {err}")
    lines = [ln for ln in proc.stdout.decode("utf-8", "replace").splitlines() if ln.strip()]
    if not lines:
        raise EvaluationFailure("empty response")
    try:
        reply = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise EvaluationFailure(f"malformed response {lines[0]!r}") from exc
    loss = reply.get("loss") if isinstance(reply, dict) else None
    if isinstance(loss, bool) or not isinstance(loss, (int, float)):
        raise EvaluationFailure(f"response has no numeric loss: {lines[0]!r}")
    if not math.isfinite(loss):
        raise EvaluationFailure(f"non-finite loss in response: {lines[0]!r}")
    return float(loss)


def external_objective(
    command: str | Sequence[str], space: ConfigSpace, timeout: float = 60.0
) -> MultiFidelityObjective:
    def fn(config: Configuration, r: float, R: float) -> float:
        return eval_external(command, config, r, R, timeout)

    return MultiFidelityObjective("external", space, fn)


BUILTINS: dict[str, MultiFidelityObjective] = {
    "curve-bench": MultiFidelityObjective("curve-bench", CURVE_SPACE, eval_curve_bench),
    "deceptive-bench": MultiFidelityObjective("deceptive-bench", CURVE_SPACE, eval_deceptive_bench),
    "distorted-branin": MultiFidelityObjective("distorted-branin", BRANIN_SPACE, eval_distorted_branin),
}


def builtin(name: str) -> MultiFidelityObjective:
    try:
        return BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown objective {name!r}; choose from {sorted(BUILTINS)}") from None
