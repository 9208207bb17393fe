"""Gap interpolation and weighted multi-sensor fusion of per-minute rates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .trace import VibrationTrace, time_to_index
from .vitals import VitalSeries

HR_CLAMP = (40.0, 200.0)
RR_CLAMP = (5.0, 80.0)


@dataclass(frozen=True)
class FusionWeights:
    """Per-sensor fusion weights for one detection round of `T_s` seconds.

    `raw` is ``(T - t_int) / T * exp(-d)``; `normalized` rescales the raw
    weights of active sensors to sum to one (inactive sensors get 0). When
    every active raw weight is zero the active sensors share equally and
    `fallback` is set.
    """

    sensor_ids: tuple[str, ...]
    t_int_s: np.ndarray
    distance_m: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray
    T_s: float = 60.0
    fallback: bool = False

    def of(self, sensor_id: str) -> float:
        return float(self.normalized[self.sensor_ids.index(sensor_id)])


def raw_weight(t_int_s, distance_m, T_s: float = 60.0):
    t = np.asarray(t_int_s, dtype=np.float64)
    d = np.asarray(distance_m, dtype=np.float64)
    return (T_s - t) / T_s * np.exp(-d)


def compute_weights(t_int_s, distance_m, T_s: float = 60.0, sensor_ids=None,
                    active=None) -> FusionWeights:
    t = np.atleast_1d(np.asarray(t_int_s, dtype=np.float64))
    d = np.atleast_1d(np.asarray(distance_m, dtype=np.float64))
    if t.shape != d.shape:
        raise ValueError("t_int_s and distance_m must have one entry per sensor")
    if np.any(t < 0) or np.any(t > T_s):
        raise ValueError(f"interpolation durations must lie in [0, {T_s}]")
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    ids = tuple(sensor_ids) if sensor_ids is not None else tuple(str(k) for k in range(t.size))
    act = np.ones(t.size, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    raw = raw_weight(t, d, T_s)
    w = np.where(act, raw, 0.0)
    total = w.sum()
    fallback = False
    if total > 0:
        norm = w / total
    elif act.any():
        norm = act / act.sum()
        fallback = True
    else:
        norm = np.zeros(t.size)
    return FusionWeights(ids, t, d, raw, norm, T_s, fallback)


def check_liveness(traces: list[VibrationTrace], expected_rate_hz: float, window_s: float = 60.0,
                   n_windows: int | None = None, min_fraction: float = 0.95,
                   flat_eps: float = 1e-12) -> list[set[str]]:
    """Active sensor ids for each minute.

    A sensor is active in a minute when at least `min_fraction` of the
    expected samples are present (finite) and their variance exceeds
    `flat_eps`.
    """
    expected = expected_rate_hz * window_s
    if n_windows is None:
        longest = max((len(tr) / tr.sample_rate_hz for tr in traces), default=0.0)
        n_windows = int(math.floor(longest / window_s + 1e-9))
    active = [set() for _ in range(n_windows)]
    for tr in traces:
        per = time_to_index(window_s, tr.sample_rate_hz)
        for k in range(n_windows):
            seg = tr.samples[k * per : (k + 1) * per]
            seg = seg[np.isfinite(seg)]
            if seg.size >= min_fraction * expected and seg.size > 1 and np.var(seg) > flat_eps:
                active[k].add(tr.sensor_id)
    return active


def _fill(values: np.ndarray, minutes: np.ndarray, invalid: set[int], clamp, flags: list[str], what: str):
    out = values.copy()
    bad = np.array([int(m) in invalid for m in minutes], dtype=bool) | ~np.isfinite(values)
    good = ~bad
    if not bad.any():
        return out, bad
    if good.sum() >= 2:
        x, y = minutes[good].astype(np.float64), values[good]
        spline = CubicSpline(x, y, bc_type="natural", extrapolate=False)
        filled = spline(minutes[bad].astype(np.float64))
        # outside the knot range hold the nearest knot value
        outside = ~np.isfinite(filled)
        if outside.any():
            near = np.abs(minutes[bad][outside, None] - x[None, :]).argmin(axis=1)
            filled[outside] = y[near]
        out[bad] = np.clip(filled, *clamp)
    elif good.sum() == 1:
        out[bad] = np.clip(values[good][0], *clamp)
        flags.append(f"{what}: single valid minute, nearest-value fill")
    else:
        out[bad] = np.nan
        flags.append(f"{what}: no valid minutes")
    return out, bad


def interpolate_gaps(series: VitalSeries, invalid_minutes, rr_invalid_minutes=None) -> VitalSeries:
    """Fill invalid minutes with a natural cubic spline through the valid ones.

    Valid minutes are returned untouched. Filled values are clamped to
    plausible ranges and their `interpolated_fraction` becomes 1. With fewer
    than two valid minutes the nearest valid value is used and the series is
    flagged. `rr_invalid_minutes` defaults to `invalid_minutes`.
    """
    invalid = {int(m) for m in invalid_minutes}
    rr_invalid = invalid if rr_invalid_minutes is None else {int(m) for m in rr_invalid_minutes}
    flags = list(series.quality_flags)
    hr, hr_bad = _fill(series.hr_bpm, series.minute_index, invalid, HR_CLAMP, flags, "hr")
    rr, rr_bad = _fill(series.rr_bpm, series.minute_index, rr_invalid, RR_CLAMP, flags, "rr")
    frac = series.interpolated_fraction.copy()
    frac[hr_bad | rr_bad] = 1.0
    return VitalSeries(series.sensor_id, series.minute_index, hr, rr, frac, series.weight, flags)


def fuse_series(per_sensor: list[VitalSeries], weights, active=None) -> VitalSeries:
    """Weighted average of aligned per-sensor series.

    `weights` is one :class:`FusionWeights` used for every minute, or a list
    with one per minute. Weights are renormalized each minute over the
    sensors that are active and have a value; a minute with none is NaN.
    `active`, if given, is a per-minute collection of active sensor ids.
    """
    if not per_sensor:
        raise ValueError("nothing to fuse")
    minutes = per_sensor[0].minute_index
    for s in per_sensor[1:]:
        if not np.array_equal(s.minute_index, minutes):
            raise ValueError("per-sensor series must share a minute grid")
    n = minutes.size
    per_minute = weights if isinstance(weights, (list, tuple)) else [weights] * n
    if len(per_minute) != n:
        raise ValueError("need one FusionWeights per minute")
    hr = np.full(n, np.nan)
    rr = np.full(n, np.nan)
    frac = np.ones(n)
    flags = []
    for k in range(n):
        fw = per_minute[k]
        ids = [s.sensor_id for s in per_sensor]
        w = np.array([fw.of(sid) if sid in fw.sensor_ids else 0.0 for sid in ids])
        raw = np.array([fw.raw[fw.sensor_ids.index(sid)] if sid in fw.sensor_ids else 0.0 for sid in ids])
        live = np.array([active is None or sid in active[k] for sid in ids])
        for arr, out in ((np.array([s.hr_bpm[k] for s in per_sensor]), hr),
                         (np.array([s.rr_bpm[k] for s in per_sensor]), rr)):
            ok = live & np.isfinite(arr)
            if not ok.any():
                continue
            wk = np.where(ok, w, 0.0)
            if wk.sum() <= 0:
                wk = np.where(ok, raw, 0.0)
            if wk.sum() <= 0:
                wk = ok.astype(float)
                flags.append(f"minute {int(minutes[k])}: all weights zero, unweighted mean")
            out[k] = float(np.dot(wk, np.where(ok, arr, 0.0)) / wk.sum())
        fr = np.array([s.interpolated_fraction[k] for s in per_sensor])
        if live.any() and w[live].sum() > 0:
            frac[k] = float(np.dot(w[live], fr[live]) / w[live].sum())
    return VitalSeries("fused", minutes, hr, rr, frac, None, flags)
