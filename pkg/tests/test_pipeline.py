import numpy as np
import pytest

from floorvitals.behavior import SensorLayout, SensorPosition
from floorvitals.pipeline import PipelineConfig, compute_metrics, run_pipeline
from floorvitals.preprocess import EventTemplate
from floorvitals.synth import (
    ScenarioConfig,
    VitalGroundTruth,
    scenario_event_template,
    synth_scenario,
)
from floorvitals.trace import BehaviorTimeline, Label, TimeInterval, VibrationTrace
from floorvitals.vitals import VitalSeries

FS = 500.0


def _truth(hr, rr):
    hr = np.asarray(hr, float)
    tl = BehaviorTimeline.all_lying(60.0 * hr.size)
    return VitalGroundTruth(np.empty(0), np.empty(0), [], tl, hr, np.asarray(rr, float))


class TestMetrics:
    def test_exact(self):
        est = VitalSeries("fused", [0, 1], [100, 50], [20, 10], [0, 0])
        m = compute_metrics(est, _truth([100, 50], [20, 10]))
        assert (m.hr_mape, m.rr_mape, m.hr_mae, m.rr_mae) == (0, 0, 0, 0)

    def test_three_point_four_percent(self):
        est = VitalSeries("fused", [0, 1, 2], [96.6] * 3, [20] * 3, [0] * 3)
        m = compute_metrics(est, _truth([100] * 3, [20] * 3))
        assert m.hr_mape == pytest.approx(0.034)

    def test_two_minute_arithmetic(self):
        est = VitalSeries("fused", [0, 1], [110, 45], [20, 10], [0, 0])
        m = compute_metrics(est, _truth([100, 50], [20, 10]))
        assert m.hr_mape == pytest.approx(0.10) and m.hr_mae == pytest.approx(7.5)
        assert len(m.per_minute_errors) == 2

    def test_no_overlap_rejected(self):
        est = VitalSeries("fused", [5], [1.0], [1.0], [0])
        with pytest.raises(ValueError):
            compute_metrics(est, _truth([100], [20]))


@pytest.fixture(scope="module")
def clean_scene():
    return synth_scenario(ScenarioConfig(duration_s=180, sensor_distances_m=[0], seed=3))


class TestRunPipeline:
    def test_clean_within_two(self, clean_scene):
        traces, truth, layout = clean_scene
        res = run_pipeline(traces, truth.posture_timeline, PipelineConfig(layout=layout))
        assert np.max(np.abs(res.fused.hr_bpm - truth.per_minute_hr)) <= 2
        assert len(res.fused) == 3

    def test_deterministic(self, clean_scene):
        traces, truth, layout = clean_scene
        a = run_pipeline(traces, truth.posture_timeline, PipelineConfig(layout=layout))
        b = run_pipeline(traces, truth.posture_timeline, PipelineConfig(layout=layout))
        assert np.array_equal(a.fused.hr_bpm, b.fused.hr_bpm, equal_nan=True)
        assert np.array_equal(a.fused.rr_bpm, b.fused.rr_bpm, equal_nan=True)

    def test_flatline_gives_no_estimate(self):
        traces = [VibrationTrace(f"pen1_sensor{k}", FS, np.zeros(int(120 * FS))) for k in (1, 2)]
        res = run_pipeline(traces, None, PipelineConfig())
        assert res.no_estimate
        assert all(not s for s in res.liveness)
        assert np.all(np.isnan(res.fused.hr_bpm))

    def test_rate_mismatch_rejected(self, clean_scene):
        traces, truth, layout = clean_scene
        bad = VibrationTrace(traces[0].sensor_id, 250.0, traces[0].samples[::2])
        with pytest.raises(ValueError):
            run_pipeline([bad], None, PipelineConfig(layout=layout))

    def test_diagnostics_record_removals(self):
        cfg = ScenarioConfig(duration_s=180, movement_intervals=[(70.0, 75.0)], seed=2,
                             postures=[(0, 120, "lying_lateral"), (120, 150, "standing"),
                                       (150, 180, "lying_sternal")])
        traces, truth, layout = synth_scenario(cfg)
        res = run_pipeline(traces, truth.posture_timeline, PipelineConfig(layout=layout))
        diag = res.sensors[traces[0].sensor_id]
        moves = diag.removed["movement"]
        assert any(iv.start_s <= 71 and iv.end_s >= 74 for iv in moves)
        assert any(iv.start_s == 120 and iv.end_s == 150 for iv in diag.removed["posture"])
        assert 2 in diag.interpolated_minutes
        assert res.fused.interpolated_fraction[2] == 1.0

    def test_environment_locality(self):
        cfg = ScenarioConfig(duration_s=300, environment_times_s=[130.0], seed=8)
        traces, truth, layout = synth_scenario(cfg)
        tpl = [EventTemplate("flush", scenario_event_template(cfg))]
        on = run_pipeline(traces, truth.posture_timeline, PipelineConfig(layout=layout, templates=tpl))
        off = run_pipeline(traces, truth.posture_timeline,
                           PipelineConfig(layout=layout, templates=tpl, remove_environment=False))
        ev = on.sensors[traces[0].sensor_id].removed["environmental_event"]
        assert ev
        touched = {m for iv in ev for m in range(int(iv.start_s // 60), int(np.ceil(iv.end_s / 60)))}
        for m in range(5):
            if m not in touched:
                assert on.per_sensor[0].hr_bpm[m] == off.per_sensor[0].hr_bpm[m]
                assert on.per_sensor[0].rr_bpm[m] == off.per_sensor[0].rr_bpm[m]

    def test_weights_follow_distance(self):
        cfg = ScenarioConfig(duration_s=120, sensor_distances_m=[0, 1, 2], seed=1)
        traces, truth, layout = synth_scenario(cfg)
        res = run_pipeline(traces, truth.posture_timeline, PipelineConfig(layout=layout))
        w = [res.weights[0].of(tr.sensor_id) for tr in traces]
        assert w[0] > w[1] > w[2] and sum(w) == pytest.approx(1.0)

    def test_missing_layout_assumes_zero_distance(self, clean_scene):
        traces, truth, _ = clean_scene
        res = run_pipeline(traces, None, PipelineConfig())
        assert np.max(np.abs(res.fused.hr_bpm - truth.per_minute_hr)) <= 2

    def test_unlisted_sensor_sits_at_zero(self, clean_scene):
        traces, truth, _ = clean_scene
        lay = SensorLayout((SensorPosition("other", 3.0),))
        res = run_pipeline(traces, None, PipelineConfig(layout=lay))
        assert res.weights[0].distance_m.tolist() == [0.0]
        assert any("not in layout" in f for f in res.flags)

    def test_posture_only_no_lying(self, clean_scene):
        traces, truth, layout = clean_scene
        tl = BehaviorTimeline((TimeInterval(0, 180, Label.STANDING),), 180.0)
        res = run_pipeline(traces, tl, PipelineConfig(layout=layout))
        diag = res.sensors[traces[0].sensor_id]
        assert any("movement detection skipped" in f for f in diag.flags)
        assert np.all(res.fused.interpolated_fraction == 1.0)


@pytest.mark.slow
def test_compensation_ablation():
    errs = {True: [], False: []}
    for seed in range(3):
        cfg = ScenarioConfig(duration_s=600, movement_fraction=0.1, seed=seed)
        traces, truth, layout = synth_scenario(cfg)
        for comp in (True, False):
            res = run_pipeline(traces, truth.posture_timeline, PipelineConfig(layout=layout, compensation=comp))
            errs[comp].append(compute_metrics(res.fused, truth).hr_mae)
    assert np.mean(errs[False]) >= 1.5 * np.mean(errs[True])
