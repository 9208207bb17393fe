"""Time-series containers, windowing and interval bookkeeping.

Times are seconds (floats) everywhere. The one place a time becomes a sample
index is :func:`time_to_index`, which rounds half up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np


class Label(str, Enum):
    LYING_LATERAL = "lying_lateral"
    LYING_STERNAL = "lying_sternal"
    SITTING = "sitting"
    STANDING = "standing"
    MOVEMENT = "movement"
    ENVIRONMENTAL_EVENT = "environmental_event"


POSTURES = frozenset({Label.LYING_LATERAL, Label.LYING_STERNAL, Label.SITTING, Label.STANDING})
LYING = frozenset({Label.LYING_LATERAL, Label.LYING_STERNAL})


def time_to_index(t_s: float, sample_rate_hz: float) -> int:
    """Sample index of time `t_s`, rounding half up."""
    return int(math.floor(t_s * sample_rate_hz + 0.5))


@dataclass(frozen=True)
class VibrationTrace:
    """Uniformly sampled vertical floor velocity from one sensor.

    Missing samples may be stored as NaN; they count against sensor liveness.
    """

    sensor_id: str
    sample_rate_hz: float
    samples: np.ndarray
    start_time_s: float = 0.0

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    @property
    def times(self) -> np.ndarray:
        return self.start_time_s + np.arange(len(self)) / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray) -> "VibrationTrace":
        return VibrationTrace(self.sensor_id, self.sample_rate_hz, samples, self.start_time_s)


@dataclass(frozen=True)
class TimeInterval:
    start_s: float
    end_s: float
    label: Label

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        if not self.start_s < self.end_s:
            raise ValueError(f"interval start {self.start_s} must precede end {self.end_s}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def overlap(self, start_s: float, end_s: float) -> float:
        return max(0.0, min(self.end_s, end_s) - max(self.start_s, start_s))


@dataclass(frozen=True)
class BehaviorTimeline:
    intervals: tuple[TimeInterval, ...]
    total_duration_s: float

    def __post_init__(self):
        ivs = tuple(sorted(self.intervals, key=lambda iv: (iv.start_s, iv.end_s)))
        for iv in ivs:
            if iv.start_s < 0 or iv.end_s > self.total_duration_s + 1e-9:
                raise ValueError(f"{iv} lies outside [0, {self.total_duration_s}]")
        for cls in (POSTURES, {Label.MOVEMENT}, {Label.ENVIRONMENTAL_EVENT}):
            same = [iv for iv in ivs if iv.label in cls]
            for a, b in zip(same, same[1:]):
                if b.start_s < a.end_s - 1e-9:
                    raise ValueError(f"overlapping intervals {a} and {b}")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def all_lying(cls, total_duration_s: float, label: Label = Label.LYING_LATERAL) -> "BehaviorTimeline":
        return cls((TimeInterval(0.0, total_duration_s, label),), total_duration_s)

    def with_label(self, labels: Iterable[Label]) -> list[TimeInterval]:
        labels = set(labels)
        return [iv for iv in self.intervals if iv.label in labels]


def sliding_windows(trace: VibrationTrace, window_s: float, overlap_frac: float):
    """Fixed-length windows over `trace`.

    Returns a list of ``(start_s, end_s, samples)``; start/end are relative
    to the trace start. Windows advance by ``window_s * (1 - overlap_frac)``
    and a trailing partial window is dropped.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    if not 0 <= overlap_frac < 1:
        raise ValueError("overlap_frac must be in [0, 1)")
    fs = trace.sample_rate_hz
    n_win = time_to_index(window_s, fs)
    step_s = window_s * (1.0 - overlap_frac)
    out = []
    k = 0
    while True:
        start_s = k * step_s
        i0 = time_to_index(start_s, fs)
        if i0 + n_win > len(trace):
            break
        out.append((start_s, start_s + window_s, trace.samples[i0 : i0 + n_win]))
        k += 1
    return out


def merge_intervals(spans: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of half-open spans, sorted, with touching spans joined."""
    merged: list[list[float]] = []
    for a, b in sorted((float(a), float(b)) for a, b in spans if b > a):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def complement(spans: Iterable[tuple[float, float]], start_s: float, end_s: float) -> list[tuple[float, float]]:
    """Parts of ``[start_s, end_s)`` not covered by `spans`."""
    kept = []
    cursor = start_s
    for a, b in merge_intervals(spans):
        a, b = max(a, start_s), min(b, end_s)
        if b <= a:
            continue
        if a > cursor:
            kept.append((cursor, a))
        cursor = max(cursor, b)
    if cursor < end_s:
        kept.append((cursor, end_s))
    return kept


def remove_intervals(trace: VibrationTrace, intervals: Iterable[TimeInterval]) -> list[tuple[float, float]]:
    """Segments of the trace left after cutting out `intervals`."""
    return complement(((iv.start_s, iv.end_s) for iv in intervals), 0.0, trace.duration_s)


def spans_to_mask(spans: Iterable[tuple[float, float]], n_samples: int, sample_rate_hz: float) -> np.ndarray:
    """Boolean sample mask that is True inside any of the spans."""
    mask = np.zeros(n_samples, dtype=bool)
    for a, b in spans:
        i0 = max(time_to_index(a, sample_rate_hz), 0)
        i1 = min(time_to_index(b, sample_rate_hz), n_samples)
        if i1 > i0:
            mask[i0:i1] = True
    return mask


def total_length(spans: Iterable[tuple[float, float]]) -> float:
    return float(sum(b - a for a, b in merge_intervals(spans)))

