"""Hyperband bracket planning and successive-halving execution."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .config_space import Configuration
from .store import EvaluationRecord, EvaluationStore, resource_ladder

log = logging.getLogger(__name__)

Evaluator = Callable[[Configuration, float], float]


@dataclass(frozen=True)
class StagePlan:
    n: int
    resource: float
    stage_index: int  # global index on the resource ladder, 1-based


@dataclass(frozen=True)
class BracketPlan:
    s: int
    stages: tuple[StagePlan, ...]
    eta: float
    max_resource: float

    @property
    def n0(self) -> int:
        return self.stages[0].n

    @property
    def total_resource(self) -> float:
        return sum(st.n * st.resource for st in self.stages)

    def pairs(self) -> list[tuple[int, float]]:
        return [(st.n, st.resource) for st in self.stages]


def plan_brackets(max_resource: float, eta: float = 3) -> list[BracketPlan]:
    """Standard Hyperband sweep, brackets ordered s = s_max down to 0."""
    if max_resource < 1:
        raise ValueError("max_resource must be >= 1")
    ladder = resource_ladder(max_resource, eta)
    s_max = len(ladder) - 1
    plans = []
    for s in range(s_max, -1, -1):
        n = int(math.ceil((s_max + 1) / (s + 1) * eta**s - 1e-9))
        stages = []
        for i in range(s + 1):
            level = s_max - s + i
            stages.append(StagePlan(max(1, n), ladder[level], level + 1))
            n = int(math.floor(n / eta + 1e-9))
        plans.append(BracketPlan(s, tuple(stages), float(eta), float(max_resource)))
    return plans


def sweep_resource(plans: Sequence[BracketPlan]) -> float:
    return sum(p.total_resource for p in plans)


def promote(ranked: Sequence[tuple[Configuration, float]], keep: int) -> list[Configuration]:
    """The ``keep`` lowest-loss configurations; equal losses keep submission order."""
    if not 0 <= keep <= len(ranked):
        raise ValueError(f"cannot keep {keep} of {len(ranked)}")
    order = sorted(range(len(ranked)), key=lambda i: (ranked[i][1], i))
    return [ranked[i][0] for i in order[:keep]]


def evaluate_safely(evaluate: Evaluator, config: Configuration, resource: float) -> float | None:
    """Run one evaluation; None signals failure (exception or non-finite loss)."""
    try:
        loss = float(evaluate(config, resource))
    except Exception as exc:  # noqa: BLE001 - any objective failure is a failed evaluation
        log.warning("evaluation failed for %s at r=%s: %s", dict(config.values), resource, exc)
        return None
    if not math.isfinite(loss):
        log.warning("non-finite loss %r for %s at r=%s", loss, dict(config.values), resource)
        return None
    return loss


def evaluate_batch(
    evaluate: Evaluator, configs: Sequence[Configuration], resource: float, workers: int = 1
) -> list[float | None]:
    """Evaluate in parallel; results come back in input order."""
    if workers <= 1 or len(configs) <= 1:
        return [evaluate_safely(evaluate, c, resource) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: evaluate_safely(evaluate, c, resource), configs))


@dataclass
class BracketOutcome:
    records: list[EvaluationRecord]
    failures: int
    evaluations: int


def run_bracket(
    plan: BracketPlan,
    configs: Sequence[Configuration],
    evaluate: Evaluator,
    store: EvaluationStore,
    bracket_id: int = 0,
    workers: int = 1,
    on_record: Callable[[EvaluationRecord], None] | None = None,
) -> BracketOutcome:
    """Successive halving over ``plan`` starting from ``configs``.

    Results are merged into ``store`` in survivor-list order.  Failed
    evaluations are logged as failures and never promoted.
    """
    if len(configs) != plan.n0:
        raise ValueError(f"bracket needs {plan.n0} configurations, got {len(configs)}")
    survivors = list(configs)
    records, failures, evaluations = [], 0, 0
    for i, st in enumerate(plan.stages):
        losses = evaluate_batch(evaluate, survivors, st.resource, workers)
        ranked = []
        for config, loss in zip(survivors, losses):
            evaluations += 1
            if loss is None:
                rec = store.record_failure(config, st.stage_index, st.resource, bracket_id)
                failures += 1
            else:
                rec = store.record(config, st.stage_index, st.resource, loss, bracket_id)
                ranked.append((config, loss))
            records.append(rec)
            if on_record is not None:
                on_record(rec)
        if i + 1 < len(plan.stages):
            keep = min(plan.stages[i + 1].n, len(ranked))
            survivors = promote(ranked, keep)
            if not survivors:
                break
    return BracketOutcome(records, failures, evaluations)
