import numpy as np
import pytest

from eccbo.acquisition import AcquisitionConfig, Box
from eccbo.gp import Dataset, gp_condition, gp_predict
from eccbo.orchestrator import (
    BoxViolationError,
    DecisionVector,
    Eccbo,
    EccboConfig,
    RtoMetrics,
    initial_design,
)

WO_BOX = Box(np.array([0.07, 0.07]), np.array([0.08, 0.12]))
CTX_BOX = Box(np.array([0.8]), np.array([2.0]))


def make_orchestrator(**kw):
    cfg = EccboConfig(
        box=WO_BOX,
        context_box=CTX_BOX,
        n_setpoints=2,
        acquisition=AcquisitionConfig(beta=4.0, multistart_count=8, seed=0),
        init_count=3,
        seed=0,
        **kw,
    )
    return Eccbo(cfg)


def synthetic_cost(x, d):
    g_opt = 0.0795
    a_opt = 0.095 + 0.02 * (d[0] - 1.0)
    return 5.0 + 4000.0 * (x[0] - g_opt) ** 2 + 300.0 * (x[1] - a_opt) ** 2 - 2.0 * d[0]


def run_bo(orch, contexts):
    t = 0.0
    for d in contexts:
        dv = np.array([d])
        x = orch.step(dv)
        t += 1.0
        orch.record_observation(x, dv, synthetic_cost(x.as_array(), dv), t)


class TestDecisionVector:
    def test_checked_accepts_boundary(self):
        dv = DecisionVector.checked(np.array([0.07, 0.12]), WO_BOX, 2)
        assert dv.setpoints == (0.07, 0.12)
        assert dv.free_dofs == ()

    def test_checked_rejects_outside(self):
        with pytest.raises(BoxViolationError):
            DecisionVector.checked(np.array([0.07, 0.1200001]), WO_BOX, 2)

    def test_splits_free_dofs(self):
        box = Box(np.array([0.0, 0.0, -1.0]), np.array([1.0, 1.0, 1.0]))
        dv = DecisionVector.checked(np.array([0.5, 0.5, 0.2]), box, 2)
        assert dv.free_dofs == (0.2,)


class TestInitialDesign:
    def test_first_point_is_center(self):
        pts = initial_design(WO_BOX, 3)
        np.testing.assert_allclose(pts[0], [0.075, 0.095])

    def test_points_distinct_and_inside(self):
        pts = initial_design(WO_BOX, 3)
        assert len({tuple(p) for p in pts}) == 3
        for p in pts:
            assert WO_BOX.contains(p)

    def test_deterministic(self):
        np.testing.assert_array_equal(initial_design(WO_BOX, 3), initial_design(WO_BOX, 3))


class TestStep:
    def test_empty_history_returns_center(self):
        orch = make_orchestrator()
        x = orch.step(np.array([1.0]))
        np.testing.assert_allclose(x.as_array(), [0.075, 0.095])

    def test_every_decision_inside_box_exactly(self):
        orch = make_orchestrator()
        rng = np.random.default_rng(1)
        t = 0.0
        for _ in range(12):
            d = np.array([rng.uniform(0.8, 2.0)])
            x = orch.step(d)
            assert WO_BOX.contains(x.as_array())
            t += 1.0
            orch.record_observation(x, d, float(rng.normal()), t)

    def test_context_recall_returns_near_best_seen(self):
        orch = make_orchestrator()
        run_bo(orch, [1.0] * 15 + [1.9] * 6)
        x = orch.step(np.array([1.0])).as_array()
        seen = [(xx, y) for xx, d, y, _ in orch.observations if d[0] == 1.0]
        best_x, _ = min(seen, key=lambda p: p[1])
        assert np.linalg.norm(x - best_x) <= 0.005


class TestRecord:
    def test_interpolates_recorded_cost(self):
        orch = make_orchestrator()
        run_bo(orch, [1.0] * 6)
        x, d, y, _ = orch.observations[-1]
        mean, var = gp_predict(orch.posterior, np.concatenate((x, d)))
        noise_std = np.sqrt(orch._params.noise_variance) * orch.posterior.data.target_scale
        assert abs(mean - y) <= 3 * max(noise_std, 1e-6) + 1e-3

    def test_duplicate_observation_shrinks_variance(self):
        orch = make_orchestrator()
        run_bo(orch, [1.0] * 5)
        x, d, y, t_last = orch.observations[-1]
        joint = np.concatenate((x, d))
        var_before = gp_predict(orch.posterior, joint)[1]
        dv = DecisionVector.checked(x, WO_BOX, 2)
        orch.record_observation(dv, d, y, t_last + 1.0)
        var_after = gp_predict(orch.posterior, joint)[1]
        assert var_after < var_before

    def test_replay_equals_batch_conditioning(self):
        orch = make_orchestrator()
        run_bo(orch, [1.0] * 7 + [1.9] * 3)
        inputs = np.array([np.concatenate((x, d)) for x, d, _, _ in orch.observations])
        targets = np.array([y for _, _, y, _ in orch.observations])
        joint_box = WO_BOX.concat(CTX_BOX)
        batch = gp_condition(
            Dataset.from_box(inputs, targets, joint_box.lower, joint_box.upper),
            orch._params,
        )
        query = np.array([0.074, 0.1, 1.2])
        np.testing.assert_allclose(
            gp_predict(orch.posterior, query), gp_predict(batch, query), rtol=1e-12
        )

    def test_timestamps_must_increase(self):
        orch = make_orchestrator()
        dv = orch.step(np.array([1.0]))
        orch.record_observation(dv, np.array([1.0]), 0.5, 10.0)
        with pytest.raises(ValueError):
            orch.record_observation(dv, np.array([1.0]), 0.6, 10.0)


class TestMetrics:
    def test_feasible_samples_leave_violation_untouched(self):
        m = RtoMetrics()
        m.violation_update([0.1, 0.0])
        assert m.violations[-1] == (0.0, 0.0)
        assert m.cumulative_violation == 0.0

    def test_negative_slack_accumulates(self):
        m = RtoMetrics()
        m.violation_update([-0.2, 0.3])
        assert m.violations[-1] == (0.2, 0.0)
        assert m.cumulative_violation == pytest.approx(0.2)

    def test_regret_zero_at_optimum(self):
        m = RtoMetrics()
        m.regret_update(5.0, 5.0)
        assert m.regrets[-1] == 0.0
        assert m.cumulative_regret == 0.0

    def test_regret_accumulates(self):
        m = RtoMetrics()
        m.regret_update(6.0, 5.0)
        m.regret_update(5.5, 5.0)
        assert m.cumulative_regret == pytest.approx(1.5)
