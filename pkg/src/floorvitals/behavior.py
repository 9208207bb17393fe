"""Behavior extraction and propagation-distortion correction.

Posture annotations gate which stretches carry vital information, movement
windows are found by an anomaly test against a still-lying reference, and
each sensor's signal is corrected for distance-dependent attenuation before
the peak-smearing from dispersion is smoothed out of its detection function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.ndimage import uniform_filter1d

from .trace import (
    LYING,
    BehaviorTimeline,
    Label,
    TimeInterval,
    VibrationTrace,
    complement,
    merge_intervals,
    time_to_index,
)

DEFAULT_MAX_GAIN = math.exp(5.0)


@dataclass(frozen=True)
class SensorPosition:
    sensor_id: str
    distance_m: float

    def __post_init__(self):
        if self.distance_m < 0:
            raise ValueError(f"distance for {self.sensor_id} must be non-negative")


@dataclass(frozen=True)
class SensorLayout:
    """Sensors under one pen with their distances to the animal."""

    sensors: tuple[SensorPosition, ...]
    alpha: float = 0.001
    v_min_mps: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if not self.sensors:
            raise ValueError("layout needs at least one sensor")
        ids = [s.sensor_id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError("sensor ids must be unique")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.v_min_mps <= 0:
            raise ValueError("v_min_mps must be positive")

    def distance(self, sensor_id: str) -> float:
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s.distance_m
        raise KeyError(sensor_id)


@dataclass(frozen=True)
class MovementReference:
    stat_mean: float
    stat_std: float
    window_s: float = 1.0
    source_duration_s: float = 10.0


def gate_posture(timeline: BehaviorTimeline) -> list[TimeInterval]:
    """Lying intervals (lateral or sternal) of the timeline."""
    return timeline.with_label(LYING)


def posture_removed_spans(timeline: BehaviorTimeline) -> list[tuple[float, float]]:
    """Everything the lying gate cuts out, as half-open spans."""
    kept = [(iv.start_s, iv.end_s) for iv in gate_posture(timeline)]
    return complement(kept, 0.0, timeline.total_duration_s)


def window_statistic(samples, sample_rate_hz: float, window_s: float = 1.0) -> np.ndarray:
    """Mean absolute amplitude of consecutive non-overlapping windows.

    A trailing partial window is dropped.
    """
    n_win = time_to_index(window_s, sample_rate_hz)
    x = np.abs(np.asarray(samples, dtype=np.float64))
    m = x.size // n_win
    return x[: m * n_win].reshape(m, n_win).mean(axis=1)


def build_movement_reference(trace: VibrationTrace, ref_interval: TimeInterval,
                             window_s: float = 1.0) -> MovementReference:
    if ref_interval.duration_s < 10.0 - 1e-9:
        raise ValueError("movement reference needs at least 10 s of still lying")
    fs = trace.sample_rate_hz
    i0 = time_to_index(ref_interval.start_s, fs)
    i1 = min(time_to_index(ref_interval.end_s, fs), len(trace))
    stats = window_statistic(trace.samples[i0:i1], fs, window_s)
    if stats.size < 2:
        raise ValueError("reference interval lies outside the trace")
    return MovementReference(float(stats.mean()), float(stats.std(ddof=1)), window_s,
                             ref_interval.duration_s)


def detect_movements(trace: VibrationTrace, ref: MovementReference) -> list[TimeInterval]:
    """Windows whose mean |x| exceeds the reference mean by over 3 std.

    Windows are `ref.window_s` long with no overlap; flagged neighbours are
    merged into one movement interval.
    """
    stats = window_statistic(trace.samples, trace.sample_rate_hz, ref.window_s)
    threshold = ref.stat_mean + 3.0 * ref.stat_std
    flagged = np.flatnonzero(stats > threshold)
    spans = [(k * ref.window_s, (k + 1) * ref.window_s) for k in flagged]
    return [TimeInterval(a, b, Label.MOVEMENT) for a, b in merge_intervals(spans)]


def auto_reference_interval(trace: VibrationTrace, usable: list[tuple[float, float]],
                            length_s: float = 10.0) -> TimeInterval:
    """Pick a 10 s still-lying stretch when none is configured.

    Candidates are whole 10 s blocks inside `usable`; the one with median
    energy is chosen, which stays clear of both bursts and dropouts as long
    as movement covers less than half the usable time.
    """
    fs = trace.sample_rate_hz
    candidates = []
    for a, b in usable:
        t = a
        while t + length_s <= b + 1e-9:
            i0, i1 = time_to_index(t, fs), time_to_index(t + length_s, fs)
            candidates.append((float(np.mean(np.abs(trace.samples[i0:i1]))), t))
            t += length_s
    if not candidates:
        raise ValueError("no 10 s lying stretch available for the movement reference")
    candidates.sort()
    t = candidates[(len(candidates) - 1) // 2][1]
    return TimeInterval(t, t + length_s, Label.LYING_LATERAL)


def _spectrum_bins(n: int, fs: float):
    return np.fft.rfftfreq(n, 1.0 / fs)


def estimate_attenuation_coefficient(
    trace_near: VibrationTrace,
    d_near: float,
    trace_far: VibrationTrace,
    d_far: float,
    band_hz: tuple[float, float] = (10.0, 200.0),
    segment_s: float = 4.0,
    min_coherence: float = 0.9,
) -> float:
    """Fit a single attenuation coefficient from two simultaneous recordings.

    Welch power spectra of both traces are compared bin by bin. Only bins in
    `band_hz` whose magnitude-squared coherence between the two traces is at
    least `min_coherence` are used, so that sensor noise (independent per
    sensor) does not flatten the ratio. Each such bin contributes

        0.5 * ln(P_near / P_far) = alpha * f * (d_far - d_near)

    and alpha is the least-squares slope through the origin.

    Raises
    ------
    ValueError
        If the distances are not ordered, the sample rates differ, or no
        bin carries coherent energy.
    """
    if not d_far > d_near:
        raise ValueError("d_far must exceed d_near")
    if trace_near.sample_rate_hz != trace_far.sample_rate_hz:
        raise ValueError("traces must share a sample rate")
    fs = trace_near.sample_rate_hz
    n = min(len(trace_near), len(trace_far))
    nper = max(min(n, int(round(segment_s * fs))), 8)
    x = np.nan_to_num(trace_near.samples[:n])
    y = np.nan_to_num(trace_far.samples[:n])
    f, p_near = signal.welch(x, fs, nperseg=nper)
    _, p_far = signal.welch(y, fs, nperseg=nper)
    with np.errstate(divide="ignore", invalid="ignore"):
        _, coh = signal.coherence(x, y, fs, nperseg=nper)
    tiny = 1e-12 * max(p_near.max(), p_far.max(), 1e-300)
    ok = ((f >= band_hz[0]) & (f <= band_hz[1]) & (p_near > tiny) & (p_far > tiny)
          & (np.nan_to_num(coh) >= min_coherence))
    if not ok.any():
        raise ValueError("no frequency bin with coherent energy in both traces")
    u = f[ok] * (d_far - d_near)
    v = 0.5 * np.log(p_near[ok] / p_far[ok])
    return float(np.dot(u, v) / np.dot(u, u))


def correct_attenuation(trace: VibrationTrace, distance_m: float, alpha: float,
                        max_gain: float = DEFAULT_MAX_GAIN) -> tuple[VibrationTrace, bool]:
    """Undo ``exp(-alpha * f * d)`` attenuation with a capped spectral gain.

    Returns the corrected trace and whether any bin hit `max_gain`.
    """
    if distance_m < 0 or alpha < 0:
        raise ValueError("distance_m and alpha must be non-negative")
    if distance_m == 0 or alpha == 0:
        return trace.with_samples(trace.samples), False
    n = len(trace)
    spec = np.fft.rfft(trace.samples)
    f = _spectrum_bins(n, trace.sample_rate_hz)
    log_gain = alpha * f * distance_m
    capped = bool(np.any(log_gain > math.log(max_gain)))
    spec *= np.exp(np.minimum(log_gain, math.log(max_gain)))
    return trace.with_samples(np.fft.irfft(spec, n)), capped


def dispersion_window_samples(distance_m: float, v_min_mps: float, sample_rate_hz: float) -> int:
    """Odd moving-average length covering the worst-case arrival lag."""
    n = max(time_to_index(distance_m / v_min_mps, sample_rate_hz), 1)
    return n if n % 2 else n + 1


def mitigate_dispersion(detection_fn, distance_m: float, v_min_mps: float,
                        sample_rate_hz: float) -> np.ndarray:
    """Centered moving average over ``distance_m / v_min_mps`` seconds.

    Edges use half-sample reflection, which keeps the sequence sum exact.
    """
    if distance_m < 0:
        raise ValueError("distance_m must be non-negative")
    x = np.asarray(detection_fn, dtype=np.float64)
    size = dispersion_window_samples(distance_m, v_min_mps, sample_rate_hz)
    if size <= 1:
        return x.copy()
    size = min(size, x.size if x.size % 2 else x.size - 1)
    return uniform_filter1d(x, size=size, mode="reflect")
