"""End-to-end estimation for one pen: preprocess, compensate, detect, fuse."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import behavior, fusion, preprocess, vitals
from .behavior import SensorLayout, SensorPosition
from .preprocess import EventTemplate
from .synth import VitalGroundTruth
from .trace import (
    BehaviorTimeline,
    Label,
    TimeInterval,
    VibrationTrace,
    complement,
    merge_intervals,
)
from .vitals import VitalSeries


@dataclass
class PipelineConfig:
    """Every tunable of the estimation chain.

    ``compensation=False`` gives the uncompensated baseline: no posture
    gating, movement removal, attenuation or dispersion correction, and no
    gap interpolation.
    """

    layout: SensorLayout | None = None
    sample_rate_hz: float = 500.0
    lowpass_cutoff_hz: float = 200.0
    wiener_window: int = 51
    wiener_noise_estimator: str = "median"
    morse_gamma: float = 3.0
    morse_beta: float = 20.0
    voices_per_octave: int = 10
    hr_band_hz: tuple[float, float] = (10.0, 100.0)
    hr_min_separation_s: float = 0.5
    rr_min_separation_s: float = 1.0
    prominence_frac: float = 0.25
    rr_prominence_frac: float = 0.25
    rr_moving_sum_s: float | None = None
    templates: list[EventTemplate] = field(default_factory=list)
    remove_environment: bool = True
    compensation: bool = True
    movement_reference: tuple[float, float] | None = None
    removal_guard_s: float = 0.25
    max_gain: float = behavior.DEFAULT_MAX_GAIN
    T_s: float = 60.0
    liveness_min_fraction: float = 0.95

    def __post_init__(self):
        if self.wiener_window < 3 or self.wiener_window % 2 == 0:
            raise ValueError("wiener_window must be an odd integer >= 3")
        if not 0 < self.lowpass_cutoff_hz < self.sample_rate_hz / 2:
            raise ValueError("lowpass_cutoff_hz must be below Nyquist")
        lo, hi = self.hr_band_hz
        if not 0 < lo < hi <= self.sample_rate_hz / 2:
            raise ValueError("hr_band_hz must be an increasing band below Nyquist")
        if self.voices_per_octave < 1:
            raise ValueError("voices_per_octave must be positive")
        if self.T_s <= 0:
            raise ValueError("T_s must be positive")


@dataclass
class SensorDiagnostics:
    sensor_id: str
    removed: dict[str, list[TimeInterval]] = field(default_factory=dict)
    interpolated_minutes: list[int] = field(default_factory=list)
    attenuation_capped: bool = False
    movement_reference: tuple[float, float] | None = None
    flags: list[str] = field(default_factory=list)


@dataclass
class PipelineResult:
    per_sensor: list[VitalSeries]
    fused: VitalSeries
    sensors: dict[str, SensorDiagnostics]
    liveness: list[set[str]]
    weights: list[fusion.FusionWeights]
    no_estimate: bool = False
    flags: list[str] = field(default_factory=list)


def _spans(ivs):
    return [(iv.start_s, iv.end_s) for iv in ivs]


def _missing_spans(trace: VibrationTrace) -> list[tuple[float, float]]:
    bad = ~np.isfinite(trace.samples)
    if not bad.any():
        return []
    edges = np.flatnonzero(np.diff(np.concatenate([[0], bad.astype(np.int8), [0]])))
    fs = trace.sample_rate_hz
    return [(a / fs, b / fs) for a, b in zip(edges[::2], edges[1::2])]


def _analyse_sensor(trace: VibrationTrace, distance_m: float, timeline: BehaviorTimeline,
                    cfg: PipelineConfig, n_minutes: int):
    fs = trace.sample_rate_hz
    duration = trace.duration_s
    diag = SensorDiagnostics(trace.sensor_id)
    missing = _missing_spans(trace)
    if missing:
        diag.removed["missing"] = [TimeInterval(a, b, Label.ENVIRONMENTAL_EVENT) for a, b in missing]
    x = trace.with_samples(np.nan_to_num(trace.samples))

    x = preprocess.wiener_denoise(x, cfg.wiener_window, noise_estimator=cfg.wiener_noise_estimator)
    x = preprocess.lowpass_filter(x, cfg.lowpass_cutoff_hz)

    removed: list[tuple[float, float]] = list(missing)
    if cfg.remove_environment and cfg.templates:
        env = preprocess.detect_environmental_events(x, cfg.templates)
        diag.removed["environmental_event"] = env
        removed += _spans(env)

    if cfg.compensation:
        posture_cut = behavior.posture_removed_spans(timeline)
        if posture_cut:
            diag.removed["posture"] = [TimeInterval(a, b, Label.SITTING) for a, b in posture_cut]
        removed += posture_cut
        usable = complement(removed, 0.0, duration)
        ref_iv = None
        if cfg.movement_reference is not None:
            ref_iv = TimeInterval(*cfg.movement_reference, Label.LYING_LATERAL)
        else:
            try:
                ref_iv = behavior.auto_reference_interval(x, usable)
            except ValueError:
                diag.flags.append("no 10 s still stretch; movement detection skipped")
        if ref_iv is not None:
            diag.movement_reference = (ref_iv.start_s, ref_iv.end_s)
            ref = behavior.build_movement_reference(x, ref_iv)
            moves = behavior.detect_movements(x, ref)
            diag.removed["movement"] = moves
            removed += _spans(moves)
        x, capped = behavior.correct_attenuation(x, distance_m, cfg.layout.alpha if cfg.layout else 0.0,
                                                 cfg.max_gain)
        diag.attenuation_capped = capped
        if capped:
            diag.flags.append("attenuation gain capped")

    spec = preprocess.cwt_morse(x, cfg.hr_band_hz[0], cfg.hr_band_hz[1], cfg.voices_per_octave,
                                cfg.morse_gamma, cfg.morse_beta)
    det = preprocess.band_magnitude_sum(spec, *cfg.hr_band_hz)
    if cfg.compensation:
        v_min = cfg.layout.v_min_mps if cfg.layout else 100.0
        det = behavior.mitigate_dispersion(det, distance_m, v_min, fs)

    beats = vitals.detect_heartbeats(det, fs, cfg.hr_min_separation_s, cfg.prominence_frac)
    window = cfg.rr_moving_sum_s
    if window is None:
        kept = complement(removed, 0.0, duration)
        ibis = [np.diff(beats[(beats >= a) & (beats < b)]) for a, b in kept]
        ibis = np.concatenate(ibis) if ibis else np.empty(0)
        window = float(np.median(ibis)) if ibis.size else 1.0
    breaths = vitals.detect_respiration(det, fs, window, cfg.rr_min_separation_s, cfg.rr_prominence_frac)

    g = cfg.removal_guard_s
    guarded = merge_intervals((max(a - g, 0.0), min(b + g, duration)) for a, b in removed)
    hr_rates = vitals.rate_series(beats, duration, cfg.T_s, guarded)
    rr_rates = vitals.rate_series(breaths, duration, cfg.T_s, guarded)
    hr_rates = _trim(hr_rates, n_minutes)
    rr_rates = _trim(rr_rates, n_minutes)
    frac = np.clip(1.0 - hr_rates.covered_s / cfg.T_s, 0.0, 1.0)
    series = VitalSeries(trace.sensor_id, hr_rates.minute_index, hr_rates.rate, rr_rates.rate, frac)
    if cfg.compensation:
        hr_bad = hr_rates.invalid_minutes
        rr_bad = rr_rates.invalid_minutes
        series = fusion.interpolate_gaps(series, hr_bad, rr_bad)
        diag.interpolated_minutes = sorted(hr_bad | rr_bad)
        diag.flags.extend(series.quality_flags)
    return series, diag


def _trim(rates: vitals.RateSeries, n: int) -> vitals.RateSeries:
    if rates.minute_index.size == n:
        return rates
    pad = n - rates.minute_index.size
    if pad < 0:
        return vitals.RateSeries(*(getattr(rates, f.name)[:n] for f in dataclasses.fields(rates)))
    return vitals.RateSeries(
        np.arange(n),
        np.concatenate([rates.rate, np.zeros(pad)]),
        np.concatenate([rates.covered_s, np.zeros(pad)]),
        np.concatenate([rates.valid, np.zeros(pad, dtype=bool)]),
        np.concatenate([rates.low_confidence, np.ones(pad, dtype=bool)]),
    )


def run_pipeline(traces: list[VibrationTrace], timeline: BehaviorTimeline | None,
                 config: PipelineConfig) -> PipelineResult:
    """Estimate per-sensor and fused per-minute HR/RR for one pen.

    Traces must share a sample rate and start together. Sensors missing from
    the layout are treated as sitting right under the animal. A run in which
    no sensor is ever active returns ``no_estimate=True`` with all-NaN
    series instead of raising.
    """
    if not traces:
        raise ValueError("no traces given")
    rates = {tr.sample_rate_hz for tr in traces}
    if len(rates) != 1:
        raise ValueError(f"traces disagree on sample rate: {sorted(rates)}")
    fs = rates.pop()
    duration = max(tr.duration_s for tr in traces)
    if timeline is None:
        timeline = BehaviorTimeline.all_lying(duration)
    n_minutes = int(math.floor(duration / config.T_s + 1e-9))
    layout = config.layout or SensorLayout(tuple(SensorPosition(tr.sensor_id, 0.0) for tr in traces))
    dist = {}
    unplaced = []
    for tr in traces:
        try:
            dist[tr.sensor_id] = layout.distance(tr.sensor_id)
        except KeyError:
            # not in the layout: assume it sits under the animal
            dist[tr.sensor_id] = 0.0
            unplaced.append(tr.sensor_id)

    liveness = fusion.check_liveness(traces, fs, config.T_s, n_minutes, config.liveness_min_fraction)
    ever_active = set().union(*liveness) if liveness else set()

    per_sensor: list[VitalSeries] = []
    diags: dict[str, SensorDiagnostics] = {}
    for tr in traces:
        if tr.sensor_id not in ever_active:
            series = VitalSeries.empty(tr.sensor_id, n_minutes)
            diag = SensorDiagnostics(tr.sensor_id, flags=["inactive for the whole run"])
        else:
            series, diag = _analyse_sensor(tr, dist[tr.sensor_id], timeline, config, n_minutes)
        per_sensor.append(series)
        diags[tr.sensor_id] = diag

    ids = [s.sensor_id for s in per_sensor]
    weights = []
    for k in range(n_minutes):
        t_int = [float(s.interpolated_fraction[k]) * config.T_s for s in per_sensor]
        act = [sid in liveness[k] and np.isfinite(s.hr_bpm[k]) for sid, s in zip(ids, per_sensor)]
        weights.append(fusion.compute_weights(t_int, [dist[sid] for sid in ids], config.T_s, ids, act))
    for j, s in enumerate(per_sensor):
        s.weight = np.array([w.normalized[j] for w in weights])

    if n_minutes == 0:
        fused = VitalSeries.empty("fused", 0)
    else:
        fused = fusion.fuse_series(per_sensor, weights, liveness)
    no_estimate = not ever_active or not np.any(np.isfinite(fused.hr_bpm))
    flags = ["no active sensors: no estimate"] if no_estimate else []
    flags += [f"{sid} not in layout; distance taken as 0 m" for sid in unplaced]
    return PipelineResult(per_sensor, fused, diags, liveness, weights, no_estimate, flags)


@dataclass
class Metrics:
    hr_mape: float
    rr_mape: float
    hr_mae: float
    rr_mae: float
    per_minute_errors: list[dict]


def compute_metrics(estimated: VitalSeries, truth: VitalGroundTruth) -> Metrics:
    """MAPE (as a fraction) and MAE (per minute) of an estimate vs truth.

    Rows are matched on minute index. Minutes without an estimate or beyond
    the truth grid are skipped; MAPE only uses minutes whose true rate is
    positive.
    """
    minutes = estimated.minute_index
    sel = np.flatnonzero((minutes >= 0) & (minutes < truth.per_minute_hr.size))
    if sel.size == 0:
        raise ValueError("estimate and truth share no minutes")
    m = minutes[sel]
    rows = []
    out = {}
    for key, est, true in (("hr", estimated.hr_bpm[sel], truth.per_minute_hr[m]),
                           ("rr", estimated.rr_bpm[sel], truth.per_minute_rr[m])):
        ok = np.isfinite(est)
        err = np.abs(est - true)
        out[f"{key}_mae"] = float(err[ok].mean()) if ok.any() else math.nan
        pos = ok & (true > 0)
        out[f"{key}_mape"] = float((err[pos] / true[pos]).mean()) if pos.any() else math.nan
    for k, mk in zip(sel, m):
        rows.append({
            "minute_index": int(mk),
            "hr_true": float(truth.per_minute_hr[mk]),
            "hr_est": float(estimated.hr_bpm[k]),
            "rr_true": float(truth.per_minute_rr[mk]),
            "rr_est": float(estimated.rr_bpm[k]),
        })
    return Metrics(out["hr_mape"], out["rr_mape"], out["hr_mae"], out["rr_mae"], rows)
