"""Command-line front end.

    floorvitals synth --config scenario.json --out DIR [--seed N]
    floorvitals run DATA_DIR --config pipeline.json --out DIR [--annotations CSV]
    floorvitals bench --config bench.json --seeds 0 1 2 --out DIR
    floorvitals estimate-alpha --near A.wav --near-distance-m 0 --far B.wav --far-distance-m 2

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .behavior import estimate_attenuation_coefficient
from .config import ConfigError, load_json, pipeline_from_dict, scenario_from_dict
from .io import (
    DataError,
    annotations_csv,
    atomic_write_text,
    find_waveforms,
    layout_from_json,
    layout_to_json,
    read_annotations,
    read_wav,
    truth_to_json,
    vitals_csv,
    write_json,
    write_wav,
)
from .pipeline import compute_metrics, run_pipeline
from .synth import scenario_event_template, synth_scenario
from .trace import BehaviorTimeline, VibrationTrace

log = logging.getLogger("floorvitals")

EXIT_CONFIG = 2
EXIT_DATA = 3


def _manifest(args, out_dir: Path, inputs=(), config=None, seed=None) -> dict:
    return {
        "command": ["floorvitals", *args.argv],
        "toolkit_version": __version__,
        "inputs": [str(p) for p in inputs],
        "config_path": str(args.config) if getattr(args, "config", None) else None,
        "config": config,
        "output_dir": str(out_dir),
        "seed": seed,
    }


def cmd_synth(args) -> int:
    cfg_obj = load_json(args.config)
    scenario = scenario_from_dict(cfg_obj, str(args.config), seed=args.seed)
    out = Path(args.out)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traces, truth, layout = synth_scenario(scenario)
    for tr in traces:
        write_wav(out / f"{tr.sensor_id}.wav", tr)
    write_json(out / "ground_truth.json", truth_to_json(truth))
    write_json(out / "layout.json", layout_to_json(layout))
    atomic_write_text(out / "annotations.csv", annotations_csv(truth.posture_timeline))
    if scenario.environment_times_s:
        tpl = scenario_event_template(scenario)
        write_wav(out / "templates" / f"{scenario.environment_kind}.wav",
                  VibrationTrace(scenario.environment_kind, scenario.sample_rate_hz, tpl))
    write_json(out / "manifest.json", _manifest(args, out, [args.config], cfg_obj, scenario.seed))
    log.info("wrote %d waveform(s) to %s", len(traces), out)
    return 0


def _load_traces(data_dir: Path, expected_fs: float):
    paths = find_waveforms(data_dir)
    if not paths:
        raise DataError(f"{data_dir}: no pen<P>_sensor<S>.wav files found")
    traces = []
    for p in paths:
        tr = read_wav(p)
        if tr.sample_rate_hz != expected_fs:
            raise DataError(f"{p}: sample rate {tr.sample_rate_hz:g} Hz, config declares {expected_fs:g} Hz")
        traces.append(tr)
    return paths, traces


def cmd_run(args) -> int:
    cfg_obj = load_json(args.config)
    data_dir = Path(args.data_dir)
    layout = None
    if "layout" not in cfg_obj and (data_dir / "layout.json").exists():
        try:
            layout = layout_from_json(load_json(data_dir / "layout.json"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{data_dir / 'layout.json'}: {exc}") from exc
    if args.no_compensation:
        cfg_obj = {**cfg_obj, "compensation": False}
    cfg = pipeline_from_dict(cfg_obj, str(args.config), Path(args.config).parent, layout)
    if cfg.layout is None:
        log.warning("no sensor layout given; all sensors assumed under the animal")

    paths, traces = _load_traces(data_dir, cfg.sample_rate_hz)
    duration = max(tr.duration_s for tr in traces)
    ann = Path(args.annotations) if args.annotations else data_dir / "annotations.csv"
    if ann.exists():
        timeline = read_annotations(ann, duration)
    elif args.strict_annotations:
        raise DataError(f"{ann}: annotations file not found")
    else:
        log.warning("%s not found; treating the whole recording as lying", ann)
        timeline = BehaviorTimeline.all_lying(duration)

    result = run_pipeline(traces, timeline, cfg)
    out = Path(args.out)
    atomic_write_text(out / "vitals.csv", vitals_csv([*result.per_sensor, result.fused]))
    diag = {
        "no_estimate": result.no_estimate,
        "flags": result.flags,
        "liveness": [sorted(s) for s in result.liveness],
        "sensors": {
            sid: {
                "removed": {k: [[iv.start_s, iv.end_s] for iv in v] for k, v in d.removed.items()},
                "interpolated_minutes": d.interpolated_minutes,
                "attenuation_capped": d.attenuation_capped,
                "movement_reference_s": d.movement_reference,
                "flags": d.flags,
            }
            for sid, d in result.sensors.items()
        },
    }
    write_json(out / "diagnostics.json", diag)
    write_json(out / "manifest.json", _manifest(args, out, [*paths, ann], cfg_obj))
    if result.no_estimate:
        log.warning("no active sensors: no estimate")
    return 0


def _tidy(rows: list[dict]) -> str:
    buf = _io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def bench(scenario_obj: dict, pipeline_obj: dict, seeds, base: Path = Path("."),
          headline: str = "on") -> dict:
    """Synthesize, estimate and score one scene per seed, with and without compensation.

    Headline MAPE/MAE come from the compensated run unless `headline` is ``"off"``.
    """
    per_seed = []
    by_distance: dict[float, list[tuple[float, float]]] = {}
    for seed in seeds:
        scenario = scenario_from_dict(scenario_obj, "scenario", seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            traces, truth, layout = synth_scenario(scenario)
        row = {"seed": seed}
        for tag, comp in (("on", True), ("off", False)):
            cfg = pipeline_from_dict({**pipeline_obj, "compensation": comp}, "pipeline", base, layout)
            res = run_pipeline(traces, truth.posture_timeline, cfg)
            m = compute_metrics(res.fused, truth)
            row.update({f"hr_mape_{tag}": m.hr_mape, f"rr_mape_{tag}": m.rr_mape,
                        f"hr_mae_{tag}": m.hr_mae, f"rr_mae_{tag}": m.rr_mae})
            if comp:
                for s in res.per_sensor:
                    sm = compute_metrics(s, truth)
                    by_distance.setdefault(layout.distance(s.sensor_id), []).append((sm.hr_mae, sm.rr_mae))
        per_seed.append(row)

    def mean(key):
        vals = [r[key] for r in per_seed if not math.isnan(r[key])]
        return float(np.mean(vals)) if vals else math.nan

    def ratio(off, on):
        return off / on if on > 0 else (math.inf if off > 0 else 1.0)

    per_distance = [
        {"distance_m": d, "hr_mae": float(np.mean([e[0] for e in v])), "rr_mae": float(np.mean([e[1] for e in v])),
         "n": len(v)}
        for d, v in sorted(by_distance.items())
    ]
    ablation = {
        "hr_mae_compensated": mean("hr_mae_on"), "hr_mae_baseline": mean("hr_mae_off"),
        "rr_mae_compensated": mean("rr_mae_on"), "rr_mae_baseline": mean("rr_mae_off"),
    }
    ablation["hr_ratio"] = ratio(ablation["hr_mae_baseline"], ablation["hr_mae_compensated"])
    ablation["rr_ratio"] = ratio(ablation["rr_mae_baseline"], ablation["rr_mae_compensated"])
    return {
        "seeds": list(seeds),
        "compensation": headline == "on",
        "hr_mape": mean(f"hr_mape_{headline}"), "rr_mape": mean(f"rr_mape_{headline}"),
        "hr_mae": mean(f"hr_mae_{headline}"), "rr_mae": mean(f"rr_mae_{headline}"),
        "per_distance": per_distance,
        "ablation": ablation,
        "per_seed": per_seed,
    }


def cmd_bench(args) -> int:
    cfg_obj = load_json(args.config)
    _unknown = set(cfg_obj) - {"scenario", "pipeline"}
    if _unknown:
        raise ConfigError(f"{args.config}: unknown field(s) {', '.join(sorted(_unknown))}")
    if not args.seeds:
        raise ConfigError("--seeds needs at least one seed")
    scenario_from_dict(cfg_obj.get("scenario", {}), f"{args.config}: scenario")
    report = bench(cfg_obj.get("scenario", {}), cfg_obj.get("pipeline", {}), args.seeds, Path(args.config).parent,
                   "off" if args.no_compensation else "on")
    out = Path(args.out)
    write_json(out / "report.json", report)
    atomic_write_text(out / "per_distance.csv", _tidy(report["per_distance"]))
    atomic_write_text(out / "per_seed.csv", _tidy(report["per_seed"]))
    atomic_write_text(out / "ablation.csv", _tidy([report["ablation"]]))
    write_json(out / "manifest.json", _manifest(args, out, [args.config], cfg_obj))
    print(json.dumps({k: report[k] for k in ("hr_mape", "rr_mape", "hr_mae", "rr_mae")}, sort_keys=True))
    return 0


def cmd_estimate_alpha(args) -> int:
    obj = load_json(args.config) if args.config else {}
    near = args.near or obj.get("near_path")
    far = args.far or obj.get("far_path")
    d_near = args.near_distance_m if args.near_distance_m is not None else obj.get("near_distance_m")
    d_far = args.far_distance_m if args.far_distance_m is not None else obj.get("far_distance_m")
    if None in (near, far, d_near, d_far):
        raise ConfigError("need near/far waveforms and their distances")
    try:
        alpha = estimate_attenuation_coefficient(read_wav(near), float(d_near), read_wav(far), float(d_far))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    result = {"alpha_s_per_m": alpha, "near_path": str(near), "far_path": str(far),
              "near_distance_m": float(d_near), "far_distance_m": float(d_far)}
    if args.out:
        out = Path(args.out)
        write_json(out / "alpha.json", result)
        write_json(out / "manifest.json", _manifest(args, out, [near, far], obj or None))
    print(json.dumps(result, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floorvitals", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=f"floorvitals {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic pen recording")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("run", help="estimate HR/RR from a directory of waveforms")
    r.add_argument("data_dir", type=Path)
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--annotations", type=Path)
    r.add_argument("--strict-annotations", action="store_true")
    r.add_argument("--no-compensation", action="store_true")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="score the pipeline on synthetic scenes")
    b.add_argument("--config", required=True, type=Path)
    b.add_argument("--seeds", type=int, nargs="+", required=True)
    b.add_argument("--out", required=True, type=Path)
    b.add_argument("--no-compensation", action="store_true", help="report the uncompensated run as headline")
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("estimate-alpha", help="fit the floor attenuation coefficient")
    a.add_argument("--config", type=Path)
    a.add_argument("--near", type=Path)
    a.add_argument("--near-distance-m", type=float)
    a.add_argument("--far", type=Path)
    a.add_argument("--far-distance-m", type=float)
    a.add_argument("--out", type=Path)
    a.set_defaults(func=cmd_estimate_alpha)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
