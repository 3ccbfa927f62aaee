"""The optimization loop: HOIST plus the random / Hyperband / complete-data BO baselines."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from collections import defaultdict, deque
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .acquisition import AcquisitionContext, select_candidates
from .config_space import ConfigSpace, Configuration, encode_many, sample_uniform
from .ensemble import EnsembleSurrogate, WeightUpdate, WeightVector, learn_weights_detailed
from .objectives import MultiFidelityObjective
from .scheduler import BracketPlan, StagePlan, plan_brackets, run_bracket, sweep_resource
from .store import (
    EvaluationRecord,
    EvaluationStore,
    HistoryWriter,
    evaluation_events,
    record_to_json,
)
from .surrogate import ForestModel, ForestParams, fit_forest

log = logging.getLogger(__name__)

MODES = ("hoist", "random", "hyperband_random", "complete_only_bo")
REFERENCES = ("predicted", "observed")


class RunAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class RunOptions:
    max_resource: float = 27.0
    eta: float = 3.0
    total_bracket_loops: int = 4
    rho: float = 0.5
    forest: ForestParams = field(default_factory=ForestParams)
    pool_size: int = 500
    random_fraction: float = 0.0
    incumbent_reference: str = "predicted"
    mode: str = "hoist"
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.incumbent_reference not in REFERENCES:
            raise ValueError(f"incumbent_reference must be one of {REFERENCES}")
        if self.total_bracket_loops < 1:
            raise ValueError("total_bracket_loops must be >= 1")
        if self.max_resource < 1:
            raise ValueError("max_resource must be >= 1")
        if self.eta <= 1:
            raise ValueError("eta must be > 1")
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must lie in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> RunOptions:
        doc = dict(doc)
        doc["forest"] = ForestParams(**doc.get("forest", {}))
        return cls(**doc)


@dataclass
class RunResult:
    incumbent: EvaluationRecord | None
    store: EvaluationStore
    weights: list[WeightUpdate]
    trace: list[tuple[float, float]]
    options: RunOptions

    @property
    def total_resource(self) -> float:
        return self.trace[-1][0] if self.trace else 0.0

    @property
    def best_loss(self) -> float:
        return self.incumbent.loss if self.incumbent is not None else math.inf

    def to_dict(self) -> dict[str, Any]:
        return {
            "options": self.options.to_dict(),
            "incumbent": None if self.incumbent is None else record_to_json(self.incumbent),
            "records": [record_to_json(r) for r in self.store.all_records()],
            "weights": [
                {"iteration": w.weights.iteration, "c": list(w.weights.weights),
                 "delta_raw": list(w.delta_raw)}
                for w in self.weights
            ],
            "trace": [list(t) for t in self.trace],
        }


def update_surrogates(
    store: EvaluationStore,
    space: ConfigSpace,
    params: ForestParams,
    stages: Iterable[int] | None = None,
) -> list[ForestModel | None]:
    """Fit one forest per stage holding >= 2 records; other stages stay None.

    Each stage's forest seed is derived from ``params.seed`` and the stage index.
    """
    wanted = set(range(1, store.K + 1) if stages is None else stages)
    members: list[ForestModel | None] = []
    for st in store.stages:
        if st.stage_index in wanted and len(st) >= 2:
            seed = int(np.random.SeedSequence([params.seed, st.stage_index]).generate_state(1)[0])
            members.append(fit_forest(st, space, replace(params, seed=seed)))
        else:
            members.append(None)
    return members


def reference_value(
    ens: EnsembleSurrogate, store: EvaluationStore, mode: str = "predicted"
) -> float:
    """y* on the normalized loss scale."""
    if mode == "observed":
        return 0.0
    configs = store.complete.configs
    if not configs:
        configs = [r.config for st in store.stages for r in st.records]
    mean, _ = ens.predict_batch(encode_many(store.space, configs))
    return float(mean.min())


def full_resource_plan(plan: BracketPlan, K: int) -> BracketPlan:
    """Spend a bracket's resource on complete evaluations only."""
    n = max(1, int(math.floor(plan.total_resource / plan.max_resource + 1e-9)))
    return BracketPlan(plan.s, (StagePlan(n, plan.max_resource, K),), plan.eta, plan.max_resource)


class _ReplayCache:
    """Serves logged outcomes back to a resumed run instead of re-evaluating."""

    def __init__(self, events: Iterable[dict[str, Any]]):
        self._queues: dict[tuple, deque] = defaultdict(deque)
        for ev in evaluation_events(events):
            key = (tuple(sorted(ev["config"].items())), float(ev["resource"]))
            self._queues[key].append(None if ev.get("failed") else ev["loss"])
        self.remaining = sum(len(q) for q in self._queues.values())

    def take(self, config: Configuration, resource: float):
        q = self._queues.get((config.key(), float(resource)))
        if not q:
            return False, None
        self.remaining -= 1
        return True, q.popleft()


class _Replayed(Exception):
    pass


def run(
    space: ConfigSpace,
    objective: MultiFidelityObjective | Callable[[Configuration, float, float], float],
    options: RunOptions,
    history: HistoryWriter | None = None,
    resume_events: Sequence[dict[str, Any]] | None = None,
) -> RunResult:
    R = options.max_resource
    fn = objective.evaluate if isinstance(objective, MultiFidelityObjective) else objective
    cache = _ReplayCache(resume_events) if resume_events else None

    def evaluate(config: Configuration, r: float) -> float:
        if cache is not None:
            hit, loss = cache.take(config, r)
            if hit:
                if loss is None:
                    raise _Replayed("failed in the replayed history")
                return loss
        return fn(config, r, R)

    rng = np.random.default_rng(options.seed)
    ids = itertools.count()
    store = EvaluationStore(space, R, options.eta)
    K = store.K
    plans = plan_brackets(R, options.eta)
    trace: list[tuple[float, float]] = []
    weights_log: list[WeightUpdate] = []
    spent = [0.0]

    def on_record(rec: EvaluationRecord) -> None:
        spent[0] += rec.resource
        inc = store.incumbent()
        trace.append((spent[0], inc.loss if inc is not None else math.inf))
        if history is not None:
            history.record(rec)

    def check_failures(failures: int, evaluations: int, where: str) -> None:
        if evaluations and failures > 0.5 * evaluations:
            raise RunAborted(
                f"{failures} of {evaluations} evaluations failed in {where}; aborting run"
            )

    if options.mode == "random":
        budget = options.total_bracket_loops * sweep_resource(plans)
        m = int(math.floor(budget / R + 1e-9))
        configs = sample_uniform(space, m, rng, ids)
        plan = BracketPlan(0, (StagePlan(m, R, K),), options.eta, R)
        out = run_bracket(plan, configs, evaluate, store, 0, options.workers, on_record)
        check_failures(out.failures, out.evaluations, "random search")
        return RunResult(store.incumbent(), store, weights_log, trace, options)

    model_based = options.mode in ("hoist", "complete_only_bo")
    fit_stages = range(1, K + 1) if options.mode == "hoist" else [K]
    members: list[ForestModel | None] = [None] * K
    c = WeightVector.uniform(K) if options.mode == "hoist" else WeightVector(
        tuple([0.0] * (K - 1) + [1.0])
    )
    bracket_id = 0
    for loop in range(options.total_bracket_loops):
        for plan in plans:
            if options.mode == "complete_only_bo":
                plan = full_resource_plan(plan, K)
            ens = EnsembleSurrogate(members, c)
            if model_based and ens.usable:
                ctx = AcquisitionContext(
                    reference_value(ens, store, options.incumbent_reference),
                    max(options.pool_size, plan.n0),
                    options.random_fraction,
                )
                configs = select_candidates(ens, space, plan.n0, ctx, rng, ids)
            else:
                configs = sample_uniform(space, plan.n0, rng, ids)
            out = run_bracket(plan, configs, evaluate, store, bracket_id, options.workers, on_record)
            check_failures(out.failures, out.evaluations, f"bracket {bracket_id}")
            bracket_id += 1
            if not model_based:
                continue
            forest_seed = int(rng.integers(2**31))
            members = update_surrogates(
                store, space, replace(options.forest, seed=forest_seed), fit_stages
            )
            if options.mode == "hoist" and len(store.complete) >= 2:
                upd = learn_weights_detailed(store, members, c, options.rho)
                c = upd.weights
                weights_log.append(upd)
                if history is not None:
                    history.write(
                        {"event": "weights", "iteration": c.iteration,
                         "c": list(c.weights), "delta_raw": list(upd.delta_raw)}
                    )
        inc = store.incumbent()
        log.info("loop %d done: incumbent loss %s", loop + 1, inc.loss if inc else None)
    if cache is not None and cache.remaining:
        log.warning("%d logged evaluations were not consumed on resume", cache.remaining)
    return RunResult(store.incumbent(), store, weights_log, trace, options)


def write_convergence_csv(trace: Sequence[tuple[float, float]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cum_resource", "best_loss"])
        for cum, best in trace:
            w.writerow([repr(float(cum)), repr(float(best))])
