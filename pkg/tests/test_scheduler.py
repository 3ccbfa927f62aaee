import threading
import time

import numpy as np
import pytest

from hoist.config_space import sample_uniform
from hoist.scheduler import plan_brackets, promote, run_bracket, sweep_resource
from hoist.store import EvaluationStore


def by_index(n):
    return lambda space: [space.make({"x": i / 100}) for i in range(n)]


class TestPlan:
    def test_nine_unit_bracket(self):
        plan = plan_brackets(9, 3)[0]
        assert plan.s == 2
        assert plan.pairs() == [(9, 1.0), (3, 3.0), (1, 9.0)]
        assert plan.total_resource == 27

    def test_other_brackets(self):
        plans = plan_brackets(9, 3)
        assert [p.s for p in plans] == [2, 1, 0]
        assert plans[1].pairs() == [(5, 3.0), (1, 9.0)]
        assert plans[2].pairs() == [(3, 9.0)]

    def test_global_stage_tags(self):
        plans = plan_brackets(27, 3)
        assert [st.stage_index for st in plans[1].stages] == [2, 3, 4]
        assert sweep_resource(plans) == 423

    def test_recurrence_and_clamp(self):
        for R, eta in [(27, 3), (81, 3), (100, 3), (16, 2), (50, 4)]:
            for plan in plan_brackets(R, eta):
                assert len(plan.stages) == plan.s + 1
                assert plan.stages[-1].resource == pytest.approx(R)
                for a, b in zip(plan.stages, plan.stages[1:]):
                    assert b.n == max(1, a.n // eta) or b.n == max(1, int(a.n / eta))
                    assert b.resource == pytest.approx(a.resource * eta)
                assert all(st.n >= 1 for st in plan.stages)

    def test_bad_R(self):
        with pytest.raises(ValueError):
            plan_brackets(0.5, 3)


class TestPromote:
    def test_examples(self, unit_space):
        a, b, c = (unit_space.make({"x": v}) for v in (0.1, 0.2, 0.3))
        assert promote([(a, 0.9), (b, 0.1), (c, 0.5)], 1) == [b]
        assert promote([(a, 0.2), (b, 0.2), (c, 0.3)], 2) == [a, b]
        assert promote([(a, 0.9), (b, 0.1), (c, 0.5)], 3) == [b, c, a]


class TestRunBracket:
    def test_monotone_objective_trace(self, unit_space):
        store = EvaluationStore(unit_space, 9, 3)
        configs = by_index(9)(unit_space)
        run_bracket(plan_brackets(9, 3)[0], configs, lambda c, r: c["x"], store)
        idx = lambda recs: [round(r.config["x"] * 100) for r in recs]
        assert idx(store.stage(1).records) == list(range(9))
        assert idx(store.stage(2).records) == [0, 1, 2]
        assert idx(store.stage(3).records) == [0]
        assert store.stage(3).records[0].resource == 9

    def test_ties_keep_submission_order(self, unit_space):
        store = EvaluationStore(unit_space, 9, 3)
        configs = by_index(9)(unit_space)
        run_bracket(plan_brackets(9, 3)[0], configs, lambda c, r: 1.0, store)
        assert [r.config for r in store.stage(2).records] == configs[:3]

    def test_single_stage(self, unit_space):
        store = EvaluationStore(unit_space, 9, 3)
        run_bracket(plan_brackets(9, 3)[2], by_index(3)(unit_space), lambda c, r: c["x"], store)
        assert store.sizes() == [0, 0, 3]

    def test_resource_accounting_and_promotion(self, unit_space):
        rng = np.random.default_rng(0)
        for plan in plan_brackets(27, 3):
            store = EvaluationStore(unit_space, 27, 3)
            out = run_bracket(plan, sample_uniform(unit_space, plan.n0, rng),
                              lambda c, r: (c["x"] - 0.5) ** 2 / r, store)
            assert sum(r.resource for r in out.records) == plan.total_resource
            assert len(store.complete) >= 1
            for lo, hi in zip(plan.stages, plan.stages[1:]):
                earlier = store.stage(lo.stage_index).records
                later = {id(r.config) for r in store.stage(hi.stage_index).records}
                ranked = sorted(earlier, key=lambda r: (r.loss, r.created_seq))
                assert later == {id(r.config) for r in ranked[: hi.n]}

    def test_failures_not_promoted(self, unit_space):
        store = EvaluationStore(unit_space, 9, 3)
        configs = by_index(9)(unit_space)

        def flaky(c, r):
            if c["x"] == 0.0:
                raise RuntimeError("boom")
            return c["x"]

        out = run_bracket(plan_brackets(9, 3)[0], configs, flaky, store)
        assert out.failures == 1
        assert len(store.failures) == 1 and store.failures[0].failed
        assert configs[0] not in [r.config for r in store.stage(2).records]
        assert store.sizes() == [8, 3, 1]

    def test_parallel_merge_order(self, unit_space):
        configs = by_index(9)(unit_space)
        seen = []
        lock = threading.Lock()

        def slow(c, r):
            # later submissions finish first
            time.sleep(0.002 * (9 - round(c["x"] * 100)))
            with lock:
                seen.append(c["x"])
            return c["x"]

        serial = EvaluationStore(unit_space, 9, 3)
        run_bracket(plan_brackets(9, 3)[0], configs, slow, serial, workers=1)
        parallel = EvaluationStore(unit_space, 9, 3)
        run_bracket(plan_brackets(9, 3)[0], configs, slow, parallel, workers=4)
        key = lambda s: [(r.created_seq, r.config["x"], r.loss) for r in s.all_records()]
        assert key(serial) == key(parallel)
