"""JSON configuration documents for scenarios, pipeline runs and benches.

Field names carry their units (``_hz``, ``_s``, ``_m``, ...). Unknown keys
are rejected so that typos do not silently fall back to defaults.
"""
from __future__ import annotations

import json
from pathlib import Path

from .behavior import SensorLayout
from .io import layout_from_json, read_wav
from .pipeline import PipelineConfig
from .preprocess import EventTemplate
from .synth import BeatMorphology, ScenarioConfig


class ConfigError(Exception):
    """Invalid configuration; the message names the file and field."""


def load_json(path: Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return obj


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")


SCENARIO_KEYS = {
    "duration_s": "duration_s",
    "sample_rate_hz": "sample_rate_hz",
    "hr_bpm": "hr_bpm",
    "rr_bpm": "rr_bpm",
    "sensor_distances_m": "sensor_distances_m",
    "pen": "pen",
    "alpha_s_per_m": "alpha",
    "v_min_mps": "v_min_mps",
    "v_max_mps": "v_max_mps",
    "snr_db": "snr_db",
    "respiration_depth": "respiration_depth",
    "movement_fraction": "movement_fraction",
    "movement_intervals_s": "movement_intervals",
    "movement_factor_range": "movement_factor_range",
    "movement_duration_range_s": "movement_duration_range_s",
    "still_lead_s": "still_lead_s",
    "postures": "postures",
    "environment_times_s": "environment_times_s",
    "environment_kind": "environment_kind",
    "environment_amplitude": "environment_amplitude",
    "seed": "seed",
}
MORPHOLOGY_KEYS = {"primary_width_s", "secondary_delay_s", "secondary_amplitude_ratio", "carrier_hz"}


def scenario_from_dict(obj: dict, where: str = "scenario", seed: int | None = None) -> ScenarioConfig:
    _check_keys(obj, set(SCENARIO_KEYS) | {"morphology"}, where)
    kwargs = {SCENARIO_KEYS[k]: v for k, v in obj.items() if k in SCENARIO_KEYS}
    for key in ("movement_factor_range", "movement_duration_range_s"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    if "morphology" in obj:
        _check_keys(obj["morphology"], MORPHOLOGY_KEYS, f"{where}.morphology")
        try:
            kwargs["morphology"] = BeatMorphology(**obj["morphology"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.morphology: {exc}") from exc
    if seed is not None:
        kwargs["seed"] = seed
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


PIPELINE_KEYS = {
    "sample_rate_hz": "sample_rate_hz",
    "lowpass_cutoff_hz": "lowpass_cutoff_hz",
    "wiener_window_samples": "wiener_window",
    "wiener_noise_estimator": "wiener_noise_estimator",
    "hr_band_hz": "hr_band_hz",
    "hr_min_separation_s": "hr_min_separation_s",
    "rr_min_separation_s": "rr_min_separation_s",
    "prominence_frac": "prominence_frac",
    "rr_prominence_frac": "rr_prominence_frac",
    "rr_moving_sum_s": "rr_moving_sum_s",
    "remove_environment": "remove_environment",
    "compensation": "compensation",
    "movement_reference_s": "movement_reference",
    "removal_guard_s": "removal_guard_s",
    "max_gain": "max_gain",
    "T_s": "T_s",
    "liveness_min_fraction": "liveness_min_fraction",
}
MORSE_KEYS = {"gamma": "morse_gamma", "beta": "morse_beta", "voices_per_octave": "voices_per_octave"}


def _templates(items, base: Path, where: str) -> list[EventTemplate]:
    out = []
    for k, item in enumerate(items):
        loc = f"{where}.templates[{k}]"
        _check_keys(item, {"name", "path", "similarity_threshold"}, loc)
        if "path" not in item:
            raise ConfigError(f"{loc}: missing field path")
        path = Path(item["path"])
        if not path.is_absolute():
            path = base / path
        try:
            samples = read_wav(path).samples
            out.append(EventTemplate(item.get("name", path.stem), samples,
                                     float(item.get("similarity_threshold", 0.7))))
        except Exception as exc:
            raise ConfigError(f"{loc}: {exc}") from exc
    return out


def pipeline_from_dict(obj: dict, where: str = "pipeline", base: Path = Path("."),
                       layout: SensorLayout | None = None) -> PipelineConfig:
    _check_keys(obj, set(PIPELINE_KEYS) | {"morse", "templates", "layout"}, where)
    kwargs = {PIPELINE_KEYS[k]: v for k, v in obj.items() if k in PIPELINE_KEYS}
    for key in ("hr_band_hz", "movement_reference"):
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    morse = obj.get("morse", {})
    _check_keys(morse, set(MORSE_KEYS), f"{where}.morse")
    kwargs.update({MORSE_KEYS[k]: v for k, v in morse.items()})
    if "templates" in obj:
        kwargs["templates"] = _templates(obj["templates"], base, where)
    if "layout" in obj:
        try:
            layout = layout_from_json(obj["layout"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.layout: {exc}") from exc
    kwargs["layout"] = layout
    try:
        return PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
