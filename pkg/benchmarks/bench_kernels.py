"""Time the Cython and pure-Python peak-picking kernels on the same input.

Usage: python3 benchmarks/bench_kernels.py [--minutes N] [--repeat R]

The input is a detection function computed from a synthetic recording, so
the peak density matches what the pipeline sees.
"""
import argparse
import json
import time

import numpy as np

from floorvitals._kernels import _pykernels
from floorvitals.preprocess import band_magnitude_sum, cwt_morse, lowpass_filter, wiener_denoise
from floorvitals.synth import ScenarioConfig, synth_scenario

try:
    from floorvitals._kernels import _ckernels
except ImportError:
    _ckernels = None


def _pick(k, x, distance):
    p = k.local_maxima(x)
    p = p[k.select_by_distance(p, x[p], distance)]
    return p, k.peak_prominences(x, p)


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--minutes", type=float, default=10.0)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    traces, _, _ = synth_scenario(ScenarioConfig(duration_s=60 * args.minutes, sensor_distances_m=[0], seed=0))
    x = lowpass_filter(wiener_denoise(traces[0]))
    det = band_magnitude_sum(cwt_morse(x, 10, 100, 10), 10, 100)
    distance = int(0.5 * traces[0].sample_rate_hz)

    report = {"samples": int(det.size), "distance": distance}
    report["python_s"] = _best_of(lambda: _pick(_pykernels, det, distance), args.repeat)
    if _ckernels is not None:
        report["cython_s"] = _best_of(lambda: _pick(_ckernels, det, distance), args.repeat)
        report["speedup"] = report["python_s"] / report["cython_s"]
        a, b = _pick(_pykernels, det, distance), _pick(_ckernels, det, distance)
        report["identical"] = bool(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]))
    else:
        report["cython_s"] = None
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
