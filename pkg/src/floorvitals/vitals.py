"""Heartbeat and breath detection and per-minute rates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import _kernels
from .trace import merge_intervals


@dataclass
class VitalSeries:
    """Per-minute heart and respiratory rates from one sensor (or fused).

    Missing values are NaN. `interpolated_fraction` is the share of each
    minute whose value did not come from that minute's own signal.
    """

    sensor_id: str
    minute_index: np.ndarray
    hr_bpm: np.ndarray
    rr_bpm: np.ndarray
    interpolated_fraction: np.ndarray
    weight: np.ndarray | None = None
    quality_flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.minute_index = np.asarray(self.minute_index, dtype=np.int64)
        self.hr_bpm = np.asarray(self.hr_bpm, dtype=np.float64)
        self.rr_bpm = np.asarray(self.rr_bpm, dtype=np.float64)
        self.interpolated_fraction = np.asarray(self.interpolated_fraction, dtype=np.float64)
        n = self.minute_index.size
        if not (self.hr_bpm.size == self.rr_bpm.size == self.interpolated_fraction.size == n):
            raise ValueError("all per-minute arrays must have the same length")
        if self.weight is not None:
            self.weight = np.asarray(self.weight, dtype=np.float64)

    def __len__(self) -> int:
        return self.minute_index.size

    @classmethod
    def empty(cls, sensor_id: str, n_minutes: int) -> "VitalSeries":
        nan = np.full(n_minutes, np.nan)
        return cls(sensor_id, np.arange(n_minutes), nan, nan.copy(), np.ones(n_minutes))


@dataclass
class RateSeries:
    minute_index: np.ndarray
    rate: np.ndarray
    covered_s: np.ndarray
    valid: np.ndarray
    low_confidence: np.ndarray

    @property
    def invalid_minutes(self) -> set[int]:
        return {int(m) for m in self.minute_index[~self.valid]}


def _samples(seconds: float, fs: float) -> int:
    return max(int(math.ceil(seconds * fs - 1e-9)), 1)


def pick_peaks(x, distance: int, prominence_frac: float, reference: str = "height") -> np.ndarray:
    """Separated, salient local maxima of `x` (sample indices, ascending).

    Local maxima are greedily thinned to be at least `distance` samples apart
    (larger first). Survivors whose prominence is below `prominence_frac`
    times the median survivor height (or median survivor prominence with
    ``reference="prominence"``) are dropped.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    peaks = _kernels.local_maxima(x)
    if peaks.size == 0:
        return peaks
    peaks = peaks[_kernels.select_by_distance(peaks, x[peaks], distance)]
    prom = _kernels.peak_prominences(x, peaks)
    if reference == "height":
        ref = np.median(x[peaks])
    elif reference == "prominence":
        ref = np.median(prom)
    else:
        raise ValueError(f"unknown reference {reference!r}")
    return peaks[(prom > 0) & (prom >= prominence_frac * ref)]


def detect_heartbeats(detection_fn, sample_rate_hz: float, min_separation_s: float = 0.5,
                      prominence_frac: float = 0.25) -> np.ndarray:
    """Heartbeat times (s) from a band-summed wavelet detection function.

    Consecutive beats are at least `min_separation_s` apart, which also
    rejects the diastolic echo that follows each primary beat.
    """
    x = np.asarray(detection_fn, dtype=np.float64)
    if x.size == 0 or not np.any(x > 0):
        return np.empty(0)
    peaks = pick_peaks(x, _samples(min_separation_s, sample_rate_hz), prominence_frac, "height")
    return peaks / sample_rate_hz


def moving_sum(x, window_samples: int) -> np.ndarray:
    """Centered moving sum with half-sample reflection at the edges."""
    x = np.asarray(x, dtype=np.float64)
    if window_samples <= 1:
        return x.copy()
    return uniform_filter1d(x, size=window_samples, mode="reflect") * window_samples


def detect_respiration(detection_fn, sample_rate_hz: float, moving_sum_s: float = 1.0,
                       min_separation_s: float = 1.0, prominence_frac: float = 0.25,
                       passes: int = 2) -> np.ndarray:
    """Breath times (s) from the energy trend of the heartbeat impulses.

    The detection function is summed over a moving `moving_sum_s` window
    (`passes` times) and peaks at least `min_separation_s` apart are kept; a
    peak must have at least `prominence_frac` of the median peak prominence.
    A window equal to the beat interval cancels the per-beat ripple, which is
    what the pipeline passes in.
    """
    x = np.asarray(detection_fn, dtype=np.float64)
    if x.size == 0:
        return np.empty(0)
    trend = x
    for _ in range(max(passes, 1)):
        trend = moving_sum(trend, _samples(moving_sum_s, sample_rate_hz))
    if np.ptp(trend) <= 1e-12 * max(np.max(np.abs(trend)), 1e-300):
        return np.empty(0)
    peaks = pick_peaks(trend, _samples(min_separation_s, sample_rate_hz), prominence_frac, "prominence")
    return peaks / sample_rate_hz


def rate_series(event_times_s, total_duration_s: float, window_s: float = 60.0,
                removed_spans=(), include_partial: bool = False,
                max_removed_frac: float = 0.5) -> RateSeries:
    """Events per minute, scaled to the part of each minute that was kept.

    Events inside `removed_spans` are ignored. A minute with more than
    `max_removed_frac` removed, or with no events at all, is invalid. With
    `include_partial` a trailing partial minute is reported (scaled by its
    coverage) and marked low-confidence.
    """
    times = np.asarray(event_times_s, dtype=np.float64)
    removed = merge_intervals(removed_spans)
    for a, b in removed:
        times = times[(times < a) | (times >= b)]
    n_full = int(math.floor(total_duration_s / window_s + 1e-9))
    n = n_full + (1 if include_partial and total_duration_s - n_full * window_s > 1e-9 else 0)
    rate = np.zeros(n)
    covered = np.zeros(n)
    valid = np.zeros(n, dtype=bool)
    low = np.zeros(n, dtype=bool)
    for k in range(n):
        lo = k * window_s
        hi = min(lo + window_s, total_duration_s)
        span = hi - lo
        cut = sum(max(0.0, min(b, hi) - max(a, lo)) for a, b in removed)
        covered[k] = span - cut
        count = np.count_nonzero((times >= lo) & (times < hi))
        rate[k] = count * window_s / covered[k] if covered[k] > 0 else 0.0
        valid[k] = cut <= max_removed_frac * span and count > 0
        low[k] = span < window_s - 1e-9
    return RateSeries(np.arange(n), rate, covered, valid, low)
