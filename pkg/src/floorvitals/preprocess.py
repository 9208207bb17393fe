"""Denoising, band selection, event-template removal and the Morse CWT."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import signal
from scipy.ndimage import uniform_filter1d

from .trace import (
    Label,
    TimeInterval,
    VibrationTrace,
    merge_intervals,
    sliding_windows,
)

EVENT_WINDOW_S = 10.0
EVENT_OVERLAP = 0.5


@dataclass(frozen=True)
class WaveletSpectrum:
    """CWT magnitudes, one row per frequency in `freqs_hz` (descending)."""

    freqs_hz: np.ndarray
    magnitudes: np.ndarray
    sample_rate_hz: float

    @property
    def n_times(self) -> int:
        return self.magnitudes.shape[1]


@dataclass(frozen=True)
class EventTemplate:
    name: str
    samples: np.ndarray
    similarity_threshold: float = 0.7

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"template {self.name!r} must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"template {self.name!r} has non-finite samples")
        if not 0 < self.similarity_threshold <= 1:
            raise ValueError("similarity_threshold must be in (0, 1]")
        object.__setattr__(self, "samples", arr)


def wiener_denoise(trace: VibrationTrace, window_len_samples: int = 51,
                   noise_var: float | None = None, noise_estimator: str = "median") -> VibrationTrace:
    """Locally adaptive Wiener filter.

    Each sample becomes ``m + max(v - noise, 0) / v * (x - m)`` where `m` and
    `v` are the mean and variance over a centered window. When `noise_var`
    is not given it is estimated from the local variances: their median by
    default (robust to sparse impulses and bursts), or their mean with
    ``noise_estimator="mean"``.
    """
    if window_len_samples < 3 or window_len_samples % 2 == 0:
        raise ValueError("window_len_samples must be an odd integer >= 3")
    x = np.asarray(trace.samples, dtype=np.float64)
    local_mean = uniform_filter1d(x, window_len_samples, mode="reflect")
    local_var = uniform_filter1d(x * x, window_len_samples, mode="reflect") - local_mean ** 2
    local_var = np.maximum(local_var, 0.0)
    if noise_var is None:
        if noise_estimator == "median":
            noise_var = float(np.median(local_var))
        elif noise_estimator == "mean":
            noise_var = float(np.mean(local_var))
        else:
            raise ValueError(f"unknown noise_estimator {noise_estimator!r}")
    if not np.any(local_var > 0):
        return trace.with_samples(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(local_var > 0, np.maximum(local_var - noise_var, 0.0) / local_var, 1.0)
    return trace.with_samples(local_mean + gain * (x - local_mean))


def lowpass_filter(trace: VibrationTrace, cutoff_hz: float = 200.0, order: int = 4) -> VibrationTrace:
    """Zero-phase Butterworth low-pass after removing the mean."""
    nyq = trace.sample_rate_hz / 2
    if not 0 < cutoff_hz < nyq:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyq}) Hz")
    x = np.asarray(trace.samples, dtype=np.float64)
    x = x - x.mean()
    sos = signal.butter(order, cutoff_hz, btype="low", fs=trace.sample_rate_hz, output="sos")
    if x.size <= 3 * (2 * sos.shape[0] + 1):
        return trace.with_samples(x)
    return trace.with_samples(signal.sosfiltfilt(sos, x))


def aligned_similarity(segment, template, min_overlap: float = 0.5) -> float:
    """Cosine similarity between `template` and `segment` at the best lag.

    Lags where at least `min_overlap` of the template overlaps the segment
    are considered; at each lag both vectors are restricted to the overlap,
    so the score is the normalized cross-correlation there.
    """
    x = np.asarray(segment, dtype=np.float64)
    t = np.asarray(template, dtype=np.float64)
    n, m = x.size, t.size
    if n == 0 or m == 0:
        return 0.0
    # full cross-correlation: lag k places template[0] at segment index k
    nfft = sfft.next_fast_len(n + m - 1, real=True)
    xc = sfft.irfft(sfft.rfft(x, nfft) * np.conj(sfft.rfft(t, nfft)), nfft)
    lags = np.arange(-(m - 1), n)
    num = np.concatenate([xc[nfft - (m - 1):], xc[:n]]) if m > 1 else xc[:n]

    cx = np.concatenate([[0.0], np.cumsum(x * x)])
    ct = np.concatenate([[0.0], np.cumsum(t * t)])
    seg_lo = np.clip(lags, 0, n)
    seg_hi = np.clip(lags + m, 0, n)
    tpl_lo = seg_lo - lags
    tpl_hi = seg_hi - lags
    overlap = seg_hi - seg_lo
    ex = cx[seg_hi] - cx[seg_lo]
    et = ct[tpl_hi] - ct[tpl_lo]
    ok = (overlap >= max(1, int(math.ceil(min_overlap * m)))) & (ex > 0) & (et > 0)
    if not ok.any():
        return 0.0
    score = num[ok] / np.sqrt(ex[ok] * et[ok])
    return float(min(score.max(), 1.0))


def detect_environmental_events(trace: VibrationTrace, templates: list[EventTemplate],
                                window_s: float = EVENT_WINDOW_S,
                                overlap_frac: float = EVENT_OVERLAP) -> list[TimeInterval]:
    """Flag windows that match any known environmental-event template.

    The trace is cut into `window_s` windows with `overlap_frac` overlap;
    a window is flagged when its aligned cosine similarity with a template
    exceeds that template's threshold. Flagged windows are merged.
    """
    if not templates:
        return []
    spans = []
    for start, end, seg in sliding_windows(trace, window_s, overlap_frac):
        seg = np.nan_to_num(seg)
        for tpl in templates:
            if aligned_similarity(seg, tpl.samples) > tpl.similarity_threshold:
                spans.append((start, end))
                break
    return [TimeInterval(a, b, Label.ENVIRONMENTAL_EVENT) for a, b in merge_intervals(spans)]


def morse_peak_frequency(gamma: float, beta: float) -> float:
    """Radian peak frequency of the generalized Morse wavelet."""
    return (beta / gamma) ** (1.0 / gamma)


def morse_wavelet_freq(omega, gamma: float, beta: float):
    """Frequency response of a unit-scale Morse wavelet, peak value 2.

    ``2 * (e*gamma/beta)**(beta/gamma) * w**beta * exp(-w**gamma)`` for
    ``w > 0`` and zero otherwise.
    """
    w = np.asarray(omega, dtype=np.float64)
    out = np.zeros_like(w)
    pos = w > 0
    wp = w[pos]
    log_norm = (beta / gamma) * (1.0 + math.log(gamma) - math.log(beta))
    out[pos] = 2.0 * np.exp(log_norm + beta * np.log(wp) - wp ** gamma)
    return out


def frequency_grid(f_lo_hz: float, f_hi_hz: float, voices_per_octave: int) -> np.ndarray:
    """Log-spaced analysis frequencies from `f_hi_hz` down toward `f_lo_hz`.

    The grid starts exactly at `f_hi_hz` and steps down one voice at a time;
    it stops at the last step not below `f_lo_hz`.
    """
    n = int(math.floor(voices_per_octave * math.log2(f_hi_hz / f_lo_hz) + 1e-9)) + 1
    return f_hi_hz * 2.0 ** (-np.arange(n) / voices_per_octave)


def cwt_morse(trace: VibrationTrace, f_lo_hz: float = 10.0, f_hi_hz: float = 100.0,
              voices_per_octave: int = 10, gamma: float = 3.0, beta: float = 20.0) -> WaveletSpectrum:
    """Continuous wavelet transform with generalized Morse wavelets.

    Computed by frequency-domain multiplication at each scale on a
    zero-padded copy of the signal. Wavelets are peak-normalized so a
    sinusoid of amplitude A has magnitude A on its ridge.
    """
    x = np.asarray(trace.samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot transform an empty trace")
    fs = trace.sample_rate_hz
    if not 0 < f_lo_hz < f_hi_hz <= fs / 2:
        raise ValueError("need 0 < f_lo < f_hi <= Nyquist")
    freqs = frequency_grid(f_lo_hz, f_hi_hz, voices_per_octave)
    # the lowest-frequency wavelet is the longest; pad past its decay
    pad = int(math.ceil(8 * math.sqrt(beta * gamma) / (2 * math.pi * freqs[-1]) * fs))
    nfft = sfft.next_fast_len(x.size + 2 * pad)
    spec = sfft.fft(np.concatenate([x, np.zeros(nfft - x.size)]))
    omega = 2 * np.pi * sfft.fftfreq(nfft)  # radians per sample
    w_peak = morse_peak_frequency(gamma, beta)
    mags = np.empty((freqs.size, x.size))
    for k, f in enumerate(freqs):
        scale = w_peak / (2 * np.pi * f / fs)
        coef = sfft.ifft(spec * morse_wavelet_freq(scale * omega, gamma, beta))
        mags[k] = np.abs(coef[: x.size])
    return WaveletSpectrum(freqs, mags, fs)


def band_magnitude_sum(spectrum: WaveletSpectrum, f_lo_hz: float = 10.0,
                       f_hi_hz: float = 100.0) -> np.ndarray:
    """Per-sample sum of CWT magnitudes over rows with f in [f_lo, f_hi]."""
    rows = (spectrum.freqs_hz >= f_lo_hz - 1e-9) & (spectrum.freqs_hz <= f_hi_hz + 1e-9)
    if not rows.any():
        raise ValueError(f"no spectrum rows within [{f_lo_hz}, {f_hi_hz}] Hz")
    return spectrum.magnitudes[rows].sum(axis=0)
