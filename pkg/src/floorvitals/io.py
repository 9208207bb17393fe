"""On-disk formats: float WAV waveforms, annotation CSV, JSON documents."""
from __future__ import annotations

import csv
import io as _io
import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .behavior import SensorLayout, SensorPosition
from .synth import VitalGroundTruth, minute_counts
from .trace import BehaviorTimeline, Label, TimeInterval, VibrationTrace
from .vitals import VitalSeries

WAV_PATTERN = re.compile(r"^pen(\d+)_sensor(\d+)\.wav$")
CSV_COLUMNS = ("minute_index", "sensor_id", "hr_bpm", "rr_bpm", "interpolated_fraction", "weight")


class DataError(Exception):
    """Input data is unreadable or inconsistent."""


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_wav(path: Path, trace: VibrationTrace) -> None:
    fs = trace.sample_rate_hz
    if fs != int(fs):
        raise ValueError("WAV needs an integer sample rate")
    buf = _io.BytesIO()
    wavfile.write(buf, int(fs), np.asarray(trace.samples, dtype="<f4"))
    atomic_write_bytes(path, buf.getvalue())


def read_wav(path: Path, sensor_id: str | None = None) -> VibrationTrace:
    path = Path(path)
    try:
        fs, data = wavfile.read(path)
    except (ValueError, OSError, EOFError) as exc:
        raise DataError(f"{path}: unreadable waveform ({exc})") from exc
    if data.ndim != 1:
        raise DataError(f"{path}: expected a single channel, found {data.shape[1]}")
    if data.dtype.kind == "i":
        data = data / float(np.iinfo(data.dtype).max)
    if sensor_id is None:
        sensor_id = path.stem
    return VibrationTrace(sensor_id, float(fs), data.astype(np.float64))


def find_waveforms(data_dir: Path) -> list[Path]:
    files = [p for p in Path(data_dir).iterdir() if WAV_PATTERN.match(p.name)]
    return sorted(files, key=lambda p: tuple(int(g) for g in WAV_PATTERN.match(p.name).groups()))


def read_annotations(path: Path, total_duration_s: float) -> BehaviorTimeline:
    """Read ``start_s,end_s,label`` rows into a timeline."""
    intervals = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"start_s", "end_s", "label"} - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                intervals.append(TimeInterval(float(row["start_s"]), float(row["end_s"]), Label(row["label"])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    try:
        return BehaviorTimeline(tuple(intervals), total_duration_s)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def annotations_csv(timeline: BehaviorTimeline) -> str:
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["start_s", "end_s", "label"])
    for iv in timeline.intervals:
        w.writerow([repr(float(iv.start_s)), repr(float(iv.end_s)), iv.label.value])
    return out.getvalue()


def _interval_dicts(ivs):
    return [{"start_s": iv.start_s, "end_s": iv.end_s, "label": iv.label.value} for iv in ivs]


def truth_to_json(truth: VitalGroundTruth) -> dict:
    return {
        "duration_s": truth.duration_s,
        "heartbeat_times_s": [float(t) for t in truth.heartbeat_times_s],
        "respiration_times_s": [float(t) for t in truth.respiration_times_s],
        "movement_intervals": _interval_dicts(truth.movement_intervals),
        "environment_intervals": _interval_dicts(truth.environment_intervals),
        "posture_intervals": _interval_dicts(truth.posture_timeline.intervals),
        "per_minute_hr": [float(v) for v in truth.per_minute_hr],
        "per_minute_rr": [float(v) for v in truth.per_minute_rr],
        "notes": list(truth.notes),
    }


def truth_from_json(obj: dict) -> VitalGroundTruth:
    duration = float(obj["duration_s"])

    def ivs(key):
        return [TimeInterval(d["start_s"], d["end_s"], Label(d["label"])) for d in obj.get(key, [])]

    beats = np.asarray(obj["heartbeat_times_s"], dtype=np.float64)
    breaths = np.asarray(obj["respiration_times_s"], dtype=np.float64)
    return VitalGroundTruth(
        beats, breaths, ivs("movement_intervals"),
        BehaviorTimeline(tuple(ivs("posture_intervals")), duration),
        minute_counts(beats, duration), minute_counts(breaths, duration),
        ivs("environment_intervals"), list(obj.get("notes", [])),
    )


def layout_to_json(layout: SensorLayout) -> dict:
    return {
        "alpha_s_per_m": layout.alpha,
        "v_min_mps": layout.v_min_mps,
        "sensors": [{"sensor_id": s.sensor_id, "distance_m": s.distance_m} for s in layout.sensors],
    }


def layout_from_json(obj: dict) -> SensorLayout:
    sensors = tuple(SensorPosition(str(s["sensor_id"]), float(s["distance_m"])) for s in obj["sensors"])
    return SensorLayout(sensors, float(obj.get("alpha_s_per_m", 0.001)), float(obj.get("v_min_mps", 100.0)))


def _fmt(v) -> str:
    v = float(v)
    return "" if not np.isfinite(v) else f"{v:.6f}"


def vitals_csv(series: list[VitalSeries]) -> str:
    """Tidy per-minute table; fused rows carry sensor_id ``fused``."""
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in series:
        for k in range(len(s)):
            weight = s.weight[k] if s.weight is not None else (1.0 if s.sensor_id == "fused" else np.nan)
            w.writerow([int(s.minute_index[k]), s.sensor_id, _fmt(s.hr_bpm[k]), _fmt(s.rr_bpm[k]),
                        _fmt(s.interpolated_fraction[k]), _fmt(weight)])
    return out.getvalue()
