import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tactile_svae import control as C
from tactile_svae.errors import ConfigError, InfeasibleReferenceError, RangeError
from tactile_svae.plant import Wrench


class TestProjection:
    def test_identity_picks_fy(self):
        assert C.project_grip_force([1, 2, 3, 40, 50, 60]) == 2.0

    def test_quarter_turn(self):
        assert C.project_grip_force([3, 2, 0, 0, 0, 0], C.FrameTransform.about_z(math.pi / 2)) == pytest.approx(3.0)

    def test_torques_ignored(self):
        assert C.project_grip_force([0, 1, 0, 500, -500, 500]) == 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-math.pi, math.pi), st.lists(st.floats(-10, 10), min_size=6, max_size=6),
           st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.floats(-3, 3))
    def test_linear(self, angle, a, b, s):
        T = C.FrameTransform.about_z(angle)
        lhs = C.project_grip_force(np.add(a, np.multiply(s, b)), T)
        rhs = C.project_grip_force(a, T) + s * C.project_grip_force(b, T)
        assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_rejects_non_rotation(self):
        with pytest.raises(ConfigError):
            C.FrameTransform(np.diag([1.0, 1.0, -1.0]))
        with pytest.raises(ConfigError):
            C.FrameTransform(np.eye(3) * 2)

    def test_wrong_frame(self):
        w = Wrench(0, 1, 0, 0, 0, 0, frame="world")
        with pytest.raises(ConfigError):
            C.project_grip_force(w)


class TestPlant:
    def test_interpolation(self):
        assert C.plant_force(14.0, C.DEFAULT_PLANT) == pytest.approx(1.75)

    def test_zero_before_contact(self):
        assert C.plant_force(0.0, C.DEFAULT_PLANT) == 0.0
        assert C.plant_force(10.0, C.DEFAULT_PLANT) == 0.0

    def test_continuous_and_monotone(self):
        ps = np.linspace(0, 30, 30001)
        f = np.array([C.plant_force(p, C.DEFAULT_PLANT) for p in ps])
        assert np.all(np.diff(f) >= 0)
        assert np.max(np.abs(np.diff(f))) <= C.DEFAULT_PLANT.lambda_max * (ps[1] - ps[0]) + 1e-12

    def test_out_of_range(self):
        with pytest.raises(RangeError):
            C.plant_force(30.5, C.DEFAULT_PLANT)
        with pytest.raises(RangeError):
            C.plant_force(-0.1, C.DEFAULT_PLANT)

    def test_slopes(self):
        np.testing.assert_allclose(C.DEFAULT_PLANT.slopes, [0.25, 0.625, 0.75])
        assert C.DEFAULT_PLANT.lambda_max == 0.75

    def test_inverse(self):
        for f in (0.1, 0.5, 1.75, 5.9, 7.0):
            assert C.plant_force(C.DEFAULT_PLANT.psi_inverse(f), C.DEFAULT_PLANT) == pytest.approx(f)

    def test_shift_moves_onset(self):
        shifted = C.DEFAULT_PLANT.with_shifts(((1.0, 3.0),))
        assert C.plant_force(14.0, shifted, 0.5) == pytest.approx(1.75)
        assert C.plant_force(17.0, shifted, 1.0) == pytest.approx(1.75)

    @pytest.mark.parametrize("kw", [dict(p_c=30, p_max=30), dict(p_c=-1, p_max=30)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            C.GraspPlant.from_offsets(offsets=((0, 0), (1, 1)), **kw)

    def test_decreasing_law_rejected(self):
        with pytest.raises(ConfigError):
            C.GraspPlant.from_offsets(5, 20, ((0, 0), (2, 1.0), (4, 0.5)))


class TestMotionStep:
    cfg = C.ControllerConfig(k=0.5, delta=0.05)

    def test_moves_by_error_over_gain(self):
        assert C.motion_step(C.ControllerState(10.0, 1.0, 2.0), self.cfg) == pytest.approx(12.0)
        assert C.motion_step(C.ControllerState(10.0, 2.0, 1.0), self.cfg) == pytest.approx(8.0)

    def test_dead_band_holds(self):
        assert C.motion_step(C.ControllerState(10.0, 1.96, 2.0), self.cfg) == 10.0
        assert C.motion_step(C.ControllerState(10.0, 2.05, 2.0), self.cfg) == 10.0

    def test_clamped(self):
        assert C.motion_step(C.ControllerState(29.0, 0.0, 5.0), self.cfg, 30.0) == 30.0
        assert C.motion_step(C.ControllerState(1.0, 5.0, 0.0), self.cfg, 30.0) == 0.0

    def test_matched_gain_lands_in_one_step(self):
        plant = C.GraspPlant.linear(0.6)
        trace = C.run_force_tracking([(3.0, 5)], plant, C.ControllerConfig(k=0.6))
        assert trace.f_est[1] == pytest.approx(3.0)

    def test_bad_config(self):
        for kw in (dict(k=0), dict(delta=-1), dict(loop_rate=math.inf)):
            with pytest.raises(ConfigError):
                C.ControllerConfig(**kw)


@pytest.fixture(scope="module")
def trace():
    return C.run_force_tracking([(1.0, 120), (3.0, 120), (2.0, 120)])


class TestTracking:
    def test_settles_quickly_and_holds(self, trace):
        for s in trace.settling("step", 0.05):
            assert s["ticks"] is not None and s["ticks"] <= 30 and s["held"]

    def test_timing(self, trace):
        assert len(trace) == 360
        np.testing.assert_allclose(np.diff(trace.times), 1 / 120, rtol=0, atol=1e-12)

    def test_csv(self, trace, tmp_path):
        trace.write_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "t,P_m,F_est,F_ref,event" and len(lines) == 361
        assert lines[1].endswith(",step")

    def test_infeasible_reference(self):
        with pytest.raises(InfeasibleReferenceError):
            C.run_force_tracking([(1.0, 10), (50.0, 10)])
        with pytest.raises(InfeasibleReferenceError):
            C.run_force_tracking([(-1.0, 10)])

    def test_empty_plan(self):
        with pytest.raises(ConfigError):
            C.run_force_tracking([])


class TestDisturbance:
    def test_no_shift_is_steady(self):
        trace = C.run_disturbance(C.DEFAULT_PLANT, 0.4, total_ticks=200)
        settle = trace.settling("start", 0.05)[0]
        assert settle["held"]

    def test_contact_breaking_shift_recovers(self):
        plant = C.DEFAULT_PLANT.with_shifts(((1.0, 5.0),))
        trace = C.run_disturbance(plant, 0.4)
        k = trace.segments("shift")[0][0]
        assert trace.f_true[k] == 0.0
        s = trace.settling("shift", 0.05)[0]
        assert s["ticks"] is not None and s["ticks"] <= 30 and s["held"]

    def test_rotation_schedule(self):
        sched = C.rotation_schedule([45, 60, -90], 120, 120.0)
        assert [t for t, _ in sched] == [1.0, 2.0, 3.0]
        assert sched[2][1] == pytest.approx(-5.0)
        assert all(d < 0 for _, d in sched)
        trace = C.run_disturbance(C.DEFAULT_PLANT.with_shifts(sched), 0.4)
        assert all(s["held"] and s["ticks"] <= 30 for s in trace.settling("shift", 0.05))

    def test_oval_width(self):
        assert C.oval_width(0) == 20.0
        assert C.oval_width(math.pi / 2) == pytest.approx(30.0)


class TestContraction:
    def test_random_plants_converge(self):
        rep = C.verify_contraction(trials=60, seed=1)
        assert rep["eligible"] > 0 and rep["pass_rate"] == 1.0

    def test_low_gains_flagged(self):
        plant = C.GraspPlant.linear(1.0)
        at_half = C.contraction_run(plant, 0.5, 3.0, max_steps=200)
        below = C.contraction_run(plant, 0.4, 3.0, max_steps=200)
        assert not at_half["gain_condition"] and not at_half["converged"]
        assert not below["gain_condition"] and not below["converged"]

    def test_bound(self):
        plant = C.GraspPlant.linear(1.0)
        assert C.contraction_bound(plant, 0.6) == pytest.approx(2 / 3)
        r = C.contraction_run(plant, 0.6, 3.0)
        assert r["converged"] and r["strictly_decreasing"] and r["bound_holds"]

    def test_random_plant_shape(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = C.random_plant(rng, 2.0)
            assert p.lambda_max == pytest.approx(2.0) and p.lambda_min > 0


class _FixedOffset:
    def __init__(self, v):
        self.v = v

    def normal(self, *_):
        return self.v


class TestGrasp:
    def test_perfect_placement_always_succeeds(self):
        table = C.grasp_experiment(trials=3, sigma_mm=0.0)
        assert all(v["average"] == 1.0 for v in table.values())
        assert set(table) == {"open/land", "closed/land", "open/water", "closed/water"}

    def test_open_loop_misses_displaced_object(self):
        obj = C.DEFAULT_OBJECTS[1]
        sc_open = C.GraspScenario(obj, "open", sigma_mm=5.0)
        sc_closed = C.GraspScenario(obj, "closed", sigma_mm=5.0)
        assert not C.grasp_trial(sc_open, None, _FixedOffset(6.0))[0]
        assert not C.grasp_trial(sc_open, None, _FixedOffset(-6.0))[0]
        ok, trace = C.grasp_trial(sc_closed, None, _FixedOffset(6.0))
        assert ok and trace.events[-1] == "confirm"

    def test_closed_loop_beats_open_loop(self):
        table = C.grasp_experiment(trials=10, sigma_mm=5.0, seed=0)
        assert table["closed/land"]["average"] == 1.0
        assert table["open/land"]["average"] < 0.6

    def test_rows(self):
        rows = C.grasp_rows(C.grasp_experiment(trials=1, sigma_mm=0.0))
        assert len(rows) == 4 * (len(C.DEFAULT_OBJECTS) + 1)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            C.GraspScenario(C.DEFAULT_OBJECTS[0], "fast")
        with pytest.raises(ConfigError):
            C.GraspScenario(C.DEFAULT_OBJECTS[0], sigma_mm=-1)
        with pytest.raises(ConfigError):
            C.GraspObject("x", 50, ((0, 0), (1, 1)), 2.0, 1.0)
