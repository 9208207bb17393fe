import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floorvitals.behavior import (
    DEFAULT_MAX_GAIN,
    MovementReference,
    SensorLayout,
    SensorPosition,
    auto_reference_interval,
    build_movement_reference,
    correct_attenuation,
    detect_movements,
    dispersion_window_samples,
    estimate_attenuation_coefficient,
    gate_posture,
    mitigate_dispersion,
    posture_removed_spans,
)
from floorvitals.synth import ScenarioConfig, synth_scenario
from floorvitals.trace import BehaviorTimeline, Label, TimeInterval, VibrationTrace, total_length

from conftest import rel_l2

FS = 500.0


def attenuate(x, fs, alpha, d):
    """Forward exp(-alpha f d) spectral attenuation written out directly."""
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(x.size, 1.0 / fs)
    return np.fft.irfft(spec * np.exp(-alpha * f * d), x.size)


class TestPosture:
    def test_all_lateral(self):
        tl = BehaviorTimeline.all_lying(600.0)
        assert sum(iv.duration_s for iv in gate_posture(tl)) == 600.0

    def test_fraction(self):
        ivs = (
            TimeInterval(0, 300, Label.LYING_LATERAL),
            TimeInterval(300, 360, Label.STANDING),
            TimeInterval(360, 492, Label.LYING_STERNAL),
            TimeInterval(492, 600, Label.SITTING),
        )
        tl = BehaviorTimeline(ivs, 600.0)
        kept = sum(iv.duration_s for iv in gate_posture(tl))
        assert kept / 600.0 == pytest.approx(0.72)
        assert kept + total_length(posture_removed_spans(tl)) == pytest.approx(600.0)

    def test_eighty_two_percent(self):
        ivs = (TimeInterval(0, 492, Label.LYING_LATERAL), TimeInterval(492, 600, Label.STANDING))
        tl = BehaviorTimeline(ivs, 600.0)
        assert sum(iv.duration_s for iv in gate_posture(tl)) / 600.0 == pytest.approx(0.82)

    def test_no_lying(self):
        ivs = (TimeInterval(0, 50, Label.SITTING), TimeInterval(50, 100, Label.STANDING))
        tl = BehaviorTimeline(ivs, 100.0)
        assert gate_posture(tl) == []
        assert posture_removed_spans(tl) == [(0.0, 100.0)]

    def test_movement_labels_ignored(self):
        ivs = (TimeInterval(0, 100, Label.LYING_LATERAL), TimeInterval(10, 20, Label.MOVEMENT))
        kept = gate_posture(BehaviorTimeline(ivs, 100.0))
        assert [(iv.start_s, iv.end_s) for iv in kept] == [(0, 100)]


class TestMovementReference:
    def test_zero(self):
        tr = VibrationTrace("s", FS, np.zeros(int(20 * FS)))
        ref = build_movement_reference(tr, TimeInterval(0, 10, Label.LYING_LATERAL))
        assert ref.stat_mean == 0 and ref.stat_std == 0

    def test_constant_magnitude(self):
        x = 0.7 * np.where(np.arange(int(20 * FS)) % 2, 1.0, -1.0)
        ref = build_movement_reference(VibrationTrace("s", FS, x), TimeInterval(0, 10, Label.LYING_LATERAL))
        assert ref.stat_mean == pytest.approx(0.7) and ref.stat_std == pytest.approx(0.0, abs=1e-15)

    def test_brute_force(self, rng):
        x = rng.standard_normal(int(30 * FS)) * np.linspace(1, 2, int(30 * FS))
        ref = build_movement_reference(VibrationTrace("s", FS, x), TimeInterval(5, 17, Label.LYING_LATERAL))
        stats = [np.mean(np.abs(x[int((5 + k) * FS): int((6 + k) * FS)])) for k in range(12)]
        assert ref.stat_mean == pytest.approx(np.mean(stats), rel=1e-12)
        assert ref.stat_std == pytest.approx(np.std(stats, ddof=1), rel=1e-12)

    def test_short_interval_rejected(self):
        tr = VibrationTrace("s", FS, np.zeros(int(20 * FS)))
        with pytest.raises(ValueError):
            build_movement_reference(tr, TimeInterval(0, 9.5, Label.LYING_LATERAL))


class TestDetectMovements:
    def test_zero_std_any_excess_flagged(self):
        x = np.zeros(int(10 * FS))
        x[int(4.2 * FS)] = 1e-6
        ivs = detect_movements(VibrationTrace("s", FS, x), MovementReference(0.0, 0.0))
        assert [(iv.start_s, iv.end_s) for iv in ivs] == [(4.0, 5.0)]

    def test_adjacent_windows_merge(self):
        x = np.zeros(int(10 * FS))
        x[int(2 * FS): int(5 * FS)] = 1.0
        ivs = detect_movements(VibrationTrace("s", FS, x), MovementReference(0.0, 0.0))
        assert [(iv.start_s, iv.end_s, iv.label) for iv in ivs] == [(2.0, 5.0, Label.MOVEMENT)]

    def test_long_reference_false_flag_rate(self):
        flagged = total = 0
        for seed in range(20):
            x = np.random.default_rng(seed).standard_normal(int(1200 * FS))
            tr = VibrationTrace("s", FS, x)
            ref = build_movement_reference(tr, TimeInterval(0, 600, Label.LYING_LATERAL))
            test = VibrationTrace("s", FS, x[int(600 * FS):])
            flagged += sum(int(round(iv.duration_s)) for iv in detect_movements(test, ref))
            total += 600
        assert flagged / total <= 0.003

    @settings(max_examples=20, deadline=None)
    @given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 50))
    def test_scale_invariant(self, scale, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal(int(60 * FS))
        x[int(30 * FS): int(33 * FS)] *= 4
        iv = TimeInterval(0, 10, Label.LYING_LATERAL)
        a = VibrationTrace("s", FS, x)
        b = VibrationTrace("s", FS, scale * x)
        assert detect_movements(a, build_movement_reference(a, iv)) == detect_movements(
            b, build_movement_reference(b, iv))

    def test_bursts_found_in_scene(self):
        cfg = ScenarioConfig(duration_s=120, seed=4, movement_fraction=0.1, movement_factor_range=(5, 5))
        traces, truth, _ = synth_scenario(cfg)
        ref = build_movement_reference(traces[0], TimeInterval(0, 10, Label.LYING_LATERAL))
        found = detect_movements(traces[0], ref)
        for mv in truth.movement_intervals:
            assert any(f.overlap(mv.start_s, mv.end_s) >= 0.9 * mv.duration_s - 1.0 for f in found)

    def test_auto_reference_avoids_bursts(self):
        cfg = ScenarioConfig(duration_s=300, seed=1, movement_fraction=0.1)
        traces, truth, _ = synth_scenario(cfg)
        iv = auto_reference_interval(traces[0], [(0.0, 300.0)])
        assert iv.duration_s == 10.0
        assert all(iv.overlap(mv.start_s, mv.end_s) == 0 for mv in truth.movement_intervals)


class TestAttenuation:
    def test_bin_gain_at_fifty_hz(self):
        n = 1000
        x = np.sin(2 * np.pi * 50 * np.arange(n) / FS)
        out, capped = correct_attenuation(VibrationTrace("s", FS, x), 2.0, 0.001)
        assert not capped
        assert np.allclose(out.samples, math.exp(0.1) * x, atol=1e-12)

    def test_zero_distance_identity(self, rng):
        x = VibrationTrace("s", FS, rng.standard_normal(777))
        out, capped = correct_attenuation(x, 0.0, 0.01)
        assert np.array_equal(out.samples, x.samples) and not capped

    @pytest.mark.parametrize("alpha", [0.001, 0.005, 0.01])
    @pytest.mark.parametrize("d", [0.5, 1.0, 2.0])
    def test_round_trip(self, alpha, d, rng):
        x = rng.standard_normal(5000)
        y = attenuate(x, FS, alpha, d)
        back, capped = correct_attenuation(VibrationTrace("s", FS, y), d, alpha)
        assert alpha * (FS / 2) * d <= math.log(DEFAULT_MAX_GAIN) + 1e-12
        assert rel_l2(back.samples, x) <= 0.01

    def test_cap_flagged(self, rng):
        x = VibrationTrace("s", FS, rng.standard_normal(1000))
        out, capped = correct_attenuation(x, 10.0, 0.01)
        assert capped
        spec_gain = np.abs(np.fft.rfft(out.samples)) / np.abs(np.fft.rfft(x.samples))
        assert np.max(spec_gain) <= DEFAULT_MAX_GAIN * (1 + 1e-9)

    def test_negative_rejected(self, rng):
        x = VibrationTrace("s", FS, rng.standard_normal(10))
        with pytest.raises(ValueError):
            correct_attenuation(x, -1.0, 0.001)


class TestEstimateAlpha:
    def test_identical_traces(self, rng):
        x = VibrationTrace("s", FS, rng.standard_normal(20000))
        assert estimate_attenuation_coefficient(x, 0.0, x, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_ratio_e_at_hundred_hz_over_ten_metres(self):
        t = np.arange(int(20 * FS)) / FS
        near = VibrationTrace("n", FS, np.sin(2 * np.pi * 100 * t))
        far = VibrationTrace("f", FS, np.sin(2 * np.pi * 100 * t) / math.e)
        assert estimate_attenuation_coefficient(near, 0.0, far, 10.0) == pytest.approx(0.001, rel=1e-4)

    def test_broadband_round_trip(self, rng):
        x = rng.standard_normal(60000)
        near = VibrationTrace("n", FS, x)
        far = VibrationTrace("f", FS, attenuate(x, FS, 0.001, 2.0))
        assert estimate_attenuation_coefficient(near, 0.0, far, 2.0) == pytest.approx(0.001, rel=0.05)

    @pytest.mark.parametrize("seed", range(3))
    def test_synth_pair(self, seed):
        cfg = ScenarioConfig(duration_s=120, sensor_distances_m=[0, 2], alpha=0.001, snr_db=20, seed=seed)
        traces, _, _ = synth_scenario(cfg)
        est = estimate_attenuation_coefficient(traces[0], 0.0, traces[1], 2.0)
        assert est == pytest.approx(0.001, rel=0.05)

    def test_equal_distances_rejected(self, rng):
        x = VibrationTrace("s", FS, rng.standard_normal(1000))
        with pytest.raises(ValueError):
            estimate_attenuation_coefficient(x, 1.0, x, 1.0)

    def test_empty_spectrum_rejected(self):
        z = VibrationTrace("s", FS, np.zeros(5000))
        with pytest.raises(ValueError):
            estimate_attenuation_coefficient(z, 0.0, z, 1.0)


class TestDispersion:
    def test_window_at_five_metres(self):
        assert dispersion_window_samples(5.0, 100.0, 500.0) == 25

    def test_window_is_odd(self):
        assert dispersion_window_samples(2.0, 100.0, 500.0) == 11

    def test_zero_distance_identity(self, rng):
        x = rng.random(100)
        assert np.array_equal(mitigate_dispersion(x, 0.0, 100.0, FS), x)

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(30, 3000), d=st.floats(0, 8), seed=st.integers(0, 1000))
    def test_mean_preserved(self, n, d, seed):
        x = np.random.default_rng(seed).random(n)
        y = mitigate_dispersion(x, d, 100.0, FS)
        assert y.size == n
        assert abs(y.mean() - x.mean()) <= 1e-9 * abs(x.mean())

    def test_split_beat_becomes_one_peak(self):
        t = np.arange(int(10 * FS)) / FS
        x = np.zeros_like(t)
        for beat in np.arange(0.5, 9.5, 0.7):
            for sub in (0.0, 0.025):
                x += np.exp(-0.5 * ((t - beat - sub) / 0.004) ** 2)
        from scipy.signal import find_peaks

        before = find_peaks(x, prominence=0.2)[0].size
        after = find_peaks(mitigate_dispersion(x, 5.0, 100.0, FS), prominence=0.2)[0].size
        assert before == 26 and after == 13


class TestLayout:
    def test_unique_ids(self):
        with pytest.raises(ValueError):
            SensorLayout((SensorPosition("a", 0), SensorPosition("a", 1)))

    def test_needs_a_sensor(self):
        with pytest.raises(ValueError):
            SensorLayout(())

    def test_distance_lookup(self):
        lay = SensorLayout((SensorPosition("a", 0), SensorPosition("b", 1.5)))
        assert lay.distance("b") == 1.5
