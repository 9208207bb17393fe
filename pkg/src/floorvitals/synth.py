"""Synthetic floor-vibration scenes with exact ground truth.

Every generator is deterministic for a given seed. Amplitudes are relative:
a lying-lateral heartbeat at full respiration envelope has unit pulse gain,
and the noise floor is set through an SNR referenced to the source signal.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import _kernels
from .behavior import SensorLayout, SensorPosition
from .trace import (
    BehaviorTimeline,
    Label,
    TimeInterval,
    VibrationTrace,
    merge_intervals,
    time_to_index,
)

DEFAULT_FS = 500.0

# relative vital-force gain per posture; lying lateral couples best to the floor
POSTURE_GAIN = {
    Label.LYING_LATERAL: 1.0,
    Label.LYING_STERNAL: 0.7,
    Label.SITTING: 0.15,
    Label.STANDING: 0.05,
}


@dataclass(frozen=True)
class BeatMorphology:
    """Shape of one heartbeat impulse: a primary pulse and a weaker echo."""

    primary_width_s: float = 0.02
    secondary_delay_s: float = 0.3
    secondary_amplitude_ratio: float = 0.4
    carrier_hz: float = 30.0

    def __post_init__(self):
        if not 0 < self.secondary_amplitude_ratio < 1:
            raise ValueError("secondary_amplitude_ratio must be in (0, 1)")
        if not 0 <= self.secondary_delay_s < 0.5:
            raise ValueError("secondary_delay_s must be below 0.5 s")
        if not 20 <= self.carrier_hz <= 60:
            raise ValueError("carrier_hz must be within 20-60 Hz")
        if self.primary_width_s <= 0:
            raise ValueError("primary_width_s must be positive")


@dataclass(frozen=True)
class PropagationModel:
    """Floor transfer from the animal to a sensor.

    Spectral amplitude decays as ``exp(-alpha * f * d)``. Each frequency is
    delayed by ``d / v(f)``, with ``v`` ramping linearly from `v_min_mps` at
    the low band edge to `v_max_mps` at the high edge (clamped outside).
    """

    alpha: float = 0.001
    v_min_mps: float = 100.0
    v_max_mps: float = 200.0
    freq_band_hz: tuple[float, float] = (0.0, 200.0)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not 0 < self.v_min_mps <= self.v_max_mps:
            raise ValueError("need 0 < v_min_mps <= v_max_mps")
        lo, hi = self.freq_band_hz
        if not hi > lo:
            raise ValueError("freq_band_hz must be increasing")

    def velocity(self, f_hz):
        lo, hi = self.freq_band_hz
        frac = np.clip((np.asarray(f_hz, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)
        return self.v_min_mps + frac * (self.v_max_mps - self.v_min_mps)

    def delay_s(self, f_hz, distance_m: float):
        return distance_m / self.velocity(f_hz)

    def gain(self, f_hz, distance_m: float):
        return np.exp(-self.alpha * np.abs(np.asarray(f_hz, dtype=np.float64)) * distance_m)


@dataclass
class VitalGroundTruth:
    heartbeat_times_s: np.ndarray
    respiration_times_s: np.ndarray
    movement_intervals: list[TimeInterval]
    posture_timeline: BehaviorTimeline
    per_minute_hr: np.ndarray
    per_minute_rr: np.ndarray
    environment_intervals: list[TimeInterval] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def duration_s(self) -> float:
        return self.posture_timeline.total_duration_s


def minute_counts(times_s, duration_s: float, window_s: float = 60.0) -> np.ndarray:
    """Events per full window; a trailing partial window is not reported."""
    n = int(math.floor(duration_s / window_s + 1e-9))
    edges = np.arange(n + 1) * window_s
    counts, _ = np.histogram(np.asarray(times_s, dtype=np.float64), bins=edges)
    return counts.astype(np.float64)


def _periodic_events(rate_per_min, duration_s, rng, jitter_frac):
    if rate_per_min <= 0:
        return np.empty(0)
    period = 60.0 / rate_per_min
    phase = rng.uniform(0.1, 0.9) * period
    n = int(math.ceil((duration_s - phase) / period)) + 1
    times = phase + np.arange(n) * period
    if jitter_frac > 0:
        times = times + rng.uniform(-jitter_frac, jitter_frac, size=n) * period
    return times[(times >= 0) & (times < duration_s)]


def beat_pulse(morphology: BeatMorphology, sample_rate_hz: float) -> tuple[np.ndarray, int]:
    """Sampled two-peak heartbeat kernel and the index of its primary center."""
    w = morphology.primary_width_s
    half = int(math.ceil(4 * w * sample_rate_hz))
    t = np.arange(-half, half + 1) / sample_rate_hz
    pulse = np.exp(-0.5 * (t / w) ** 2) * np.sin(2 * np.pi * morphology.carrier_hz * t)
    lag = time_to_index(morphology.secondary_delay_s, sample_rate_hz)
    kernel = np.zeros(pulse.size + lag)
    kernel[: pulse.size] += pulse
    kernel[lag:] += morphology.secondary_amplitude_ratio * pulse
    return kernel, half


def respiration_envelope(t_s, rr_bpm: float, breath_times_s, depth: float):
    """Raised-cosine beat-amplitude envelope peaking at each breath time."""
    t_s = np.asarray(t_s, dtype=np.float64)
    if rr_bpm <= 0 or len(breath_times_s) == 0:
        return np.ones_like(t_s)
    phase = 2 * np.pi * (t_s - breath_times_s[0]) * rr_bpm / 60.0
    return 1.0 - depth * 0.5 * (1.0 - np.cos(phase))


def _posture_gain(times_s, timeline: BehaviorTimeline | None):
    gain = np.ones(len(times_s))
    if timeline is None:
        return gain
    for iv in timeline.intervals:
        if iv.label in POSTURE_GAIN:
            sel = (times_s >= iv.start_s) & (times_s < iv.end_s)
            gain[sel] = POSTURE_GAIN[iv.label]
    return gain


def synth_vital_force(
    hr_bpm: float,
    rr_bpm: float,
    duration_s: float,
    morphology: BeatMorphology | None = None,
    seed: int = 0,
    sample_rate_hz: float = DEFAULT_FS,
    respiration_depth: float = 0.5,
    jitter_frac: float = 0.02,
    timeline: BehaviorTimeline | None = None,
) -> tuple[VibrationTrace, VitalGroundTruth]:
    """Heartbeat-driven floor force at the animal, before propagation.

    Beats are spaced at the heart rate with uniform timing jitter of
    ``jitter_frac`` of a period; each beat's amplitude follows the
    respiration envelope and the posture gain from `timeline`. With no
    beats there is nothing to modulate, so no breaths are recorded either.
    """
    if hr_bpm < 0 or rr_bpm < 0:
        raise ValueError("rates must be non-negative")
    if hr_bpm > 240 or rr_bpm > 120:
        raise ValueError("rates outside the supported range")
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    morphology = morphology or BeatMorphology()
    rng = np.random.default_rng(seed)
    n = time_to_index(duration_s, sample_rate_hz)
    if timeline is None:
        timeline = BehaviorTimeline.all_lying(duration_s)

    beats = _periodic_events(hr_bpm, duration_s, rng, jitter_frac)
    breaths = _periodic_events(rr_bpm, duration_s, rng, 0.0)
    if beats.size == 0:
        # breathing is only observable through beat amplitudes
        breaths = breaths[:0]
    x = np.zeros(n)
    if beats.size:
        amps = respiration_envelope(beats, rr_bpm, breaths, respiration_depth)
        amps = amps * _posture_gain(beats, timeline)
        kernel, center = beat_pulse(morphology, sample_rate_hz)
        impulses = np.zeros(n + kernel.size)
        idx = np.array([time_to_index(t, sample_rate_hz) for t in beats])
        np.add.at(impulses, idx, amps)
        x = signal.fftconvolve(impulses, kernel)[center : center + n]
        # fftconvolve leaves round-off where the true result is zero
        x[np.abs(x) < 1e-12] = 0.0

    truth = VitalGroundTruth(
        heartbeat_times_s=beats,
        respiration_times_s=breaths,
        movement_intervals=[],
        posture_timeline=timeline,
        per_minute_hr=minute_counts(beats, duration_s),
        per_minute_rr=minute_counts(breaths, duration_s),
    )
    return VibrationTrace("source", sample_rate_hz, x), truth


def heartbeat_peak_amplitude(trace: VibrationTrace, beat_times_s) -> float:
    """Median over beats of the largest |x| within 50 ms of each beat time."""
    fs = trace.sample_rate_hz
    half = time_to_index(0.05, fs)
    peaks = []
    for t in beat_times_s:
        i = time_to_index(t, fs)
        seg = trace.samples[max(i - half, 0) : i + half + 1]
        if seg.size:
            peaks.append(np.max(np.abs(seg)))
    return float(np.median(peaks)) if peaks else 0.0


def _estimate_peak_amplitude(trace: VibrationTrace) -> float:
    x = np.abs(np.nan_to_num(trace.samples))
    peaks = _kernels.local_maxima(x)
    if peaks.size == 0:
        return 0.0
    keep = _kernels.select_by_distance(peaks, x[peaks], time_to_index(0.4, trace.sample_rate_hz))
    return float(np.median(x[peaks[keep]]))


def inject_movements(
    trace: VibrationTrace,
    intervals: list[TimeInterval],
    magnitude_factor_range: tuple[float, float] = (5.0, 10.0),
    seed: int = 0,
    reference_amplitude: float | None = None,
    band_hz: tuple[float, float] = (5.0, 80.0),
) -> tuple[VibrationTrace, list[TimeInterval]]:
    """Add movement bursts inside `intervals`.

    Each burst is band-limited Gaussian noise with tapered ends whose peak
    magnitude is a random factor from `magnitude_factor_range` times the
    reference heartbeat amplitude (estimated from the trace when not given).
    Overlapping intervals are merged first. Samples outside the intervals are
    left untouched.
    """
    lo, hi = magnitude_factor_range
    if not 1 <= lo <= hi <= 100:
        raise ValueError("magnitude_factor_range must lie within [1, 100]")
    spans = merge_intervals((iv.start_s, iv.end_s) for iv in intervals)
    merged = [TimeInterval(a, b, Label.MOVEMENT) for a, b in spans]
    if not merged:
        return trace, []
    if reference_amplitude is None:
        reference_amplitude = _estimate_peak_amplitude(trace)
    fs = trace.sample_rate_hz
    rng = np.random.default_rng(seed)
    sos = signal.butter(4, band_hz, btype="bandpass", fs=fs, output="sos")
    x = np.array(trace.samples)
    for iv in merged:
        if iv.start_s < 0 or iv.end_s > trace.duration_s + 1e-9:
            raise ValueError(f"{iv} lies outside the trace")
        i0 = time_to_index(iv.start_s, fs)
        i1 = min(time_to_index(iv.end_s, fs), len(x))
        m = i1 - i0
        if m < 2:
            continue
        burst = signal.sosfiltfilt(sos, rng.standard_normal(m + 2 * 64))[64:-64]
        burst *= signal.windows.tukey(m, alpha=0.2)
        peak = np.max(np.abs(burst))
        if peak > 0:
            burst *= rng.uniform(lo, hi) * reference_amplitude / peak
        x[i0:i1] += burst
    return trace.with_samples(x), merged


def inject_environment(
    trace: VibrationTrace,
    template,
    at_times_s,
) -> tuple[VibrationTrace, list[TimeInterval]]:
    """Superpose `template` at each start time in `at_times_s`.

    An insertion that would run past the end of the trace is truncated and a
    ``RuntimeWarning`` is issued; its interval is clipped to the trace.
    """
    template = np.asarray(template, dtype=np.float64)
    fs = trace.sample_rate_hz
    if template.size == 0 or template.size >= time_to_index(10.0, fs):
        raise ValueError("template must be non-empty and shorter than 10 s")
    x = np.array(trace.samples)
    out = []
    for t in at_times_s:
        i0 = time_to_index(t, fs)
        if i0 < 0 or i0 >= len(x):
            raise ValueError(f"insertion time {t} outside the trace")
        i1 = i0 + template.size
        if i1 > len(x):
            warnings.warn(f"environment template at {t:.3f} s truncated at trace end", RuntimeWarning)
            i1 = len(x)
        x[i0:i1] += template[: i1 - i0]
        out.append(TimeInterval(i0 / fs, i1 / fs, Label.ENVIRONMENTAL_EVENT))
    return trace.with_samples(x), out


def propagate(trace: VibrationTrace, distance_m: float, model: PropagationModel) -> VibrationTrace:
    """Apply floor attenuation and dispersion over `distance_m`.

    Works in the frequency domain on a zero-padded copy, so delayed energy
    never wraps to the start; the output is cut back to the input length.
    """
    if distance_m < 0:
        raise ValueError("distance_m must be non-negative")
    if distance_m == 0:
        return trace.with_samples(trace.samples)
    fs = trace.sample_rate_hz
    n = len(trace)
    max_delay = distance_m / model.v_min_mps
    nfft = int(2 ** math.ceil(math.log2(n + int(math.ceil(max_delay * fs)) + 16)))
    spec = np.fft.rfft(trace.samples, nfft)
    f = np.fft.rfftfreq(nfft, 1.0 / fs)
    spec *= model.gain(f, distance_m) * np.exp(-2j * np.pi * f * model.delay_s(f, distance_m))
    return trace.with_samples(np.fft.irfft(spec, nfft)[:n])


def make_event_template(kind: str = "flush", sample_rate_hz: float = DEFAULT_FS, seed: int = 0,
                        amplitude: float = 8.0) -> np.ndarray:
    """Synthetic environmental-event waveform.

    ``flush`` is 3 s of swelling low-frequency rumble; ``footsteps`` is a
    4 s train of heavy impacts; ``tractor`` is 4 s of engine harmonics.
    The peak magnitude equals `amplitude`.
    """
    rng = np.random.default_rng(seed)
    fs = sample_rate_hz
    if kind == "flush":
        n = time_to_index(3.0, fs)
        sos = signal.butter(4, (8.0, 40.0), btype="bandpass", fs=fs, output="sos")
        x = signal.sosfiltfilt(sos, rng.standard_normal(n)) * signal.windows.hann(n)
    elif kind == "footsteps":
        n = time_to_index(4.0, fs)
        x = np.zeros(n)
        t = np.arange(time_to_index(0.15, fs)) / fs
        step = np.exp(-t / 0.03) * np.sin(2 * np.pi * 25.0 * t)
        for k, t0 in enumerate(np.arange(0.2, 3.8, 0.55)):
            i0 = time_to_index(t0, fs)
            seg = step[: n - i0] * (1.0 + 0.2 * rng.standard_normal())
            x[i0 : i0 + seg.size] += seg
    elif kind == "tractor":
        n = time_to_index(4.0, fs)
        t = np.arange(n) / fs
        x = sum(np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi)) / (k + 1)
                for k, f0 in enumerate((17.0, 34.0, 51.0)))
        x = x * signal.windows.tukey(n, 0.3)
    else:
        raise ValueError(f"unknown template kind {kind!r}")
    return amplitude * x / np.max(np.abs(x))


@dataclass
class ScenarioConfig:
    """Everything needed to generate one pen recording."""

    duration_s: float = 600.0
    sample_rate_hz: float = DEFAULT_FS
    hr_bpm: float = 98.0
    rr_bpm: float = 35.0
    sensor_distances_m: list[float] = field(default_factory=lambda: [0.0])
    pen: int = 1
    alpha: float = 0.001
    v_min_mps: float = 100.0
    v_max_mps: float = 200.0
    snr_db: float | None = 10.0
    respiration_depth: float = 0.5
    morphology: BeatMorphology = field(default_factory=BeatMorphology)
    movement_fraction: float = 0.0
    movement_intervals: list[tuple[float, float]] | None = None
    movement_factor_range: tuple[float, float] = (5.0, 10.0)
    movement_duration_range_s: tuple[float, float] = (2.0, 6.0)
    still_lead_s: float = 10.0
    postures: list[tuple[float, float, str]] | None = None
    environment_times_s: list[float] = field(default_factory=list)
    environment_kind: str = "flush"
    environment_amplitude: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if not self.sensor_distances_m:
            raise ValueError("at least one sensor distance is required")
        if any(d < 0 for d in self.sensor_distances_m):
            raise ValueError("sensor distances must be non-negative")
        if not 0 <= self.movement_fraction < 1:
            raise ValueError("movement_fraction must be in [0, 1)")


def _random_movements(cfg: ScenarioConfig, rng) -> list[tuple[float, float]]:
    target = cfg.movement_fraction * cfg.duration_s
    lo, hi = cfg.movement_duration_range_s
    spans: list[tuple[float, float]] = []
    total = 0.0
    attempts = 0
    while total < target - 1e-9 and attempts < 10_000:
        attempts += 1
        dur = min(rng.uniform(lo, hi), target - total)
        if dur < 0.5:
            dur = min(0.5, cfg.duration_s)
        start = rng.uniform(cfg.still_lead_s, cfg.duration_s - dur)
        # keep at least 2 s of quiet floor between bursts
        if any(start < b + 2.0 and start + dur > a - 2.0 for a, b in spans):
            continue
        spans.append((start, start + dur))
        total += dur
    return sorted(spans)


def scenario_event_template(cfg: ScenarioConfig) -> np.ndarray:
    """The environmental-event waveform that `synth_scenario` injects for `cfg`."""
    s_env = np.random.SeedSequence(cfg.seed).spawn(4)[3]
    return make_event_template(cfg.environment_kind, cfg.sample_rate_hz, int(s_env.generate_state(1)[0]),
                               cfg.environment_amplitude)


def synth_scenario(cfg: ScenarioConfig):
    """Generate a multi-sensor pen recording.

    Per sensor the chain is: vital force, movement bursts, propagation over
    that sensor's distance, environmental events, then white noise whose
    power is set by `snr_db` relative to the source vital force. Returns
    ``(traces, truth, layout)``.
    """
    root = np.random.SeedSequence(cfg.seed)
    s_force, s_move, s_place, _, *s_noise = root.spawn(4 + len(cfg.sensor_distances_m))
    fs = cfg.sample_rate_hz

    if cfg.postures:
        timeline = BehaviorTimeline(
            tuple(TimeInterval(a, b, Label(lab)) for a, b, lab in cfg.postures), cfg.duration_s
        )
    else:
        timeline = BehaviorTimeline.all_lying(cfg.duration_s)

    force, truth = synth_vital_force(
        cfg.hr_bpm, cfg.rr_bpm, cfg.duration_s, cfg.morphology,
        seed=int(s_force.generate_state(1)[0]), sample_rate_hz=fs,
        respiration_depth=cfg.respiration_depth, timeline=timeline,
    )
    signal_power = float(np.mean(force.samples ** 2))

    if cfg.movement_intervals is not None:
        spans = [tuple(s) for s in cfg.movement_intervals]
    elif cfg.movement_fraction > 0:
        spans = _random_movements(cfg, np.random.default_rng(s_place))
    else:
        spans = []
    ref_amp = heartbeat_peak_amplitude(force, truth.heartbeat_times_s) if cfg.hr_bpm > 0 else 1.0
    moved, movements = inject_movements(
        force, [TimeInterval(a, b, Label.MOVEMENT) for a, b in spans],
        cfg.movement_factor_range, seed=int(s_move.generate_state(1)[0]),
        reference_amplitude=ref_amp,
    )
    truth.movement_intervals = movements

    model = PropagationModel(cfg.alpha, cfg.v_min_mps, cfg.v_max_mps)
    template = None
    if cfg.environment_times_s:
        template = scenario_event_template(cfg)
    noise_sd = 0.0 if cfg.snr_db is None else math.sqrt(signal_power / 10 ** (cfg.snr_db / 10))

    traces = []
    sensors = []
    for k, (d, ss) in enumerate(zip(cfg.sensor_distances_m, s_noise), start=1):
        sid = f"pen{cfg.pen}_sensor{k}"
        tr = propagate(moved, d, model)
        if template is not None:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                tr, env = inject_environment(tr, template, cfg.environment_times_s)
            if k == 1:
                truth.environment_intervals = env
                truth.notes.extend(str(w.message) for w in caught)
        x = np.array(tr.samples)
        if noise_sd > 0:
            x += noise_sd * np.random.default_rng(ss).standard_normal(x.size)
        traces.append(VibrationTrace(sid, fs, x))
        sensors.append(SensorPosition(sid, float(d)))

    layout = SensorLayout(tuple(sensors), alpha=cfg.alpha, v_min_mps=cfg.v_min_mps)
    return traces, truth, layout
