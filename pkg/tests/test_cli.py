import csv
import json
import logging
import shutil
import subprocess
import sys

import pytest

from floorvitals.cli import main
from floorvitals.io import read_wav

SCENE = {"duration_s": 150, "sensor_distances_m": [0, 1, 2], "hr_bpm": 80, "rr_bpm": 20}


def _write(path, obj):
    path.write_text(json.dumps(obj, indent=1))
    return path


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = _write(root / "scene.json", SCENE)
    out = root / "nested" / "data"          # does not exist yet
    assert main(["synth", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    return root, cfg, out


@pytest.fixture
def pipe_cfg(tmp_path):
    return _write(tmp_path / "pipe.json", {"sample_rate_hz": 500})


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSynth:
    def test_outputs(self, synth_dir):
        _, _, out = synth_dir
        wavs = sorted(p.name for p in out.glob("*.wav"))
        assert wavs == ["pen1_sensor1.wav", "pen1_sensor2.wav", "pen1_sensor3.wav"]
        assert all(read_wav(out / w).sample_rate_hz == 500 for w in wavs)
        for name in ("ground_truth.json", "layout.json", "manifest.json", "annotations.csv"):
            assert (out / name).exists()

    def test_same_seed_byte_identical(self, synth_dir, tmp_path):
        _, cfg, out = synth_dir
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path), "--seed", "4"]) == 0
        for w in out.glob("*.wav"):
            assert (tmp_path / w.name).read_bytes() == w.read_bytes()

    def test_manifest(self, synth_dir):
        _, cfg, out = synth_dir
        m = json.loads((out / "manifest.json").read_text())
        assert m["seed"] == 4 and m["config"] == SCENE
        assert m["command"][:2] == ["floorvitals", "synth"]
        assert m["config_path"] == str(cfg) and m["output_dir"] == str(out)
        assert m["toolkit_version"]

    def test_bad_json_reports_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{\n  "duration_s": 60,\n  "hr_bpm": ,\n}')
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "bad.json:3:" in capsys.readouterr().err

    def test_unknown_field_named(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.json", {"duraton_s": 60})
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "duraton_s" in capsys.readouterr().err

    def test_invalid_value(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {"duration_s": -5})
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


class TestRun:
    def test_minutes_and_fused_rows(self, synth_dir, pipe_cfg, tmp_path):
        _, _, data = synth_dir
        assert main(["run", str(data), "--config", str(pipe_cfg), "--out", str(tmp_path)]) == 0
        rows = _rows(tmp_path / "vitals.csv")
        assert list(rows[0]) == ["minute_index", "sensor_id", "hr_bpm", "rr_bpm", "interpolated_fraction", "weight"]
        fused = [r for r in rows if r["sensor_id"] == "fused"]
        assert len(fused) == 150 // 60
        assert {r["sensor_id"] for r in rows} == {"fused", "pen1_sensor1", "pen1_sensor2", "pen1_sensor3"}
        assert all(abs(float(r["hr_bpm"]) - 80) <= 2 for r in fused)
        diag = json.loads((tmp_path / "diagnostics.json").read_text())
        assert not diag["no_estimate"] and set(diag["sensors"]) == {"pen1_sensor1", "pen1_sensor2", "pen1_sensor3"}
        assert (tmp_path / "manifest.json").exists()

    def test_missing_annotations_warns(self, synth_dir, pipe_cfg, tmp_path, caplog):
        _, _, data = synth_dir
        copy = tmp_path / "data"
        shutil.copytree(data, copy)
        (copy / "annotations.csv").unlink()
        with caplog.at_level(logging.WARNING, logger="floorvitals"):
            assert main(["run", str(copy), "--config", str(pipe_cfg), "--out", str(tmp_path / "o")]) == 0
        assert any("lying" in r.message for r in caplog.records)
        assert main(["run", str(copy), "--config", str(pipe_cfg), "--out", str(tmp_path / "s"),
                     "--strict-annotations"]) == 3
        assert not (tmp_path / "s" / "vitals.csv").exists()

    def test_rate_mismatch_names_file(self, synth_dir, tmp_path, capsys):
        _, _, data = synth_dir
        cfg = _write(tmp_path / "p.json", {"sample_rate_hz": 1000})
        assert main(["run", str(data), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
        assert "pen1_sensor1.wav" in capsys.readouterr().err

    def test_corrupt_header_leaves_no_csv(self, synth_dir, pipe_cfg, tmp_path):
        _, _, data = synth_dir
        copy = tmp_path / "data"
        shutil.copytree(data, copy)
        (copy / "pen1_sensor2.wav").write_bytes(b"RIFX\x00\x00garbage")
        out = tmp_path / "o"
        assert main(["run", str(copy), "--config", str(pipe_cfg), "--out", str(out)]) == 3
        assert not (out / "vitals.csv").exists()

    def test_empty_dir(self, pipe_cfg, tmp_path):
        assert main(["run", str(tmp_path), "--config", str(pipe_cfg), "--out", str(tmp_path / "o")]) == 3

    def test_no_compensation_flag_recorded(self, synth_dir, pipe_cfg, tmp_path):
        _, _, data = synth_dir
        assert main(["run", str(data), "--config", str(pipe_cfg), "--out", str(tmp_path),
                     "--no-compensation"]) == 0
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert m["config"]["compensation"] is False and "--no-compensation" in m["command"]


class TestBench:
    def test_report_schema(self, tmp_path, capsys):
        cfg = _write(tmp_path / "b.json", {"scenario": {"duration_s": 120, "sensor_distances_m": [0, 1, 2]}, "pipeline": {}})
        out = tmp_path / "o"
        assert main(["bench", "--config", str(cfg), "--seeds", "0", "1", "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        for key in ("hr_mape", "rr_mape", "hr_mae", "rr_mae", "per_distance", "ablation", "per_seed"):
            assert key in rep
        assert rep["seeds"] == [0, 1] and "hr_ratio" in rep["ablation"]
        assert [r["distance_m"] for r in rep["per_distance"]] == [0.0, 1.0, 2.0]
        assert len(_rows(out / "per_seed.csv")) == 2
        assert len(_rows(out / "per_distance.csv")) == 3
        assert len(_rows(out / "ablation.csv")) == 1
        head = json.loads(capsys.readouterr().out)
        assert head["hr_mape"] == rep["hr_mape"]

    def test_unknown_section(self, tmp_path):
        cfg = _write(tmp_path / "b.json", {"scenrio": {}})
        assert main(["bench", "--config", str(cfg), "--seeds", "0", "--out", str(tmp_path)]) == 2

    def test_seeds_required(self, tmp_path):
        cfg = _write(tmp_path / "b.json", {})
        with pytest.raises(SystemExit) as exc:
            main(["bench", "--config", str(cfg), "--out", str(tmp_path)])
        assert exc.value.code == 2


class TestEstimateAlpha:
    def test_round_trip(self, tmp_path, capsys):
        cfg = _write(tmp_path / "s.json", {"duration_s": 60, "sensor_distances_m": [0, 2], "snr_db": 20})
        data = tmp_path / "d"
        assert main(["synth", "--config", str(cfg), "--out", str(data), "--seed", "1"]) == 0
        capsys.readouterr()
        out = tmp_path / "o"
        assert main(["estimate-alpha", "--near", str(data / "pen1_sensor1.wav"), "--near-distance-m", "0",
                     "--far", str(data / "pen1_sensor2.wav"), "--far-distance-m", "2", "--out", str(out)]) == 0
        alpha = json.loads(capsys.readouterr().out)["alpha_s_per_m"]
        assert alpha == pytest.approx(1e-3, rel=0.1)
        assert json.loads((out / "alpha.json").read_text())["alpha_s_per_m"] == alpha
        assert (out / "manifest.json").exists()

    def test_bad_distances_are_data_errors(self, synth_dir):
        _, _, data = synth_dir
        wav = str(data / "pen1_sensor1.wav")
        assert main(["estimate-alpha", "--near", wav, "--near-distance-m", "2",
                     "--far", wav, "--far-distance-m", "1"]) == 3

    def test_missing_inputs(self):
        assert main(["estimate-alpha", "--near-distance-m", "0"]) == 2


def test_console_entry_point(tmp_path):
    exe = shutil.which("floorvitals")
    cmd = [exe] if exe else [sys.executable, "-m", "floorvitals.cli"]
    out = subprocess.run([*cmd, "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "floorvitals" in out.stdout
