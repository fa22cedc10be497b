import json

import numpy as np
import pytest

from tlsrelax import io
from tlsrelax.cli import main
from tlsrelax.model import Environment, QubitParams, TlsParams
from tlsrelax.pipeline import build_dataset, point_from_record
from tlsrelax.analysis import fit_spectrum
from tlsrelax.sequences import ProtocolConfig, run_two_timescale

F0 = 2.6e8
ENV = Environment(QubitParams(600.0, -0.3), (TlsParams(F0, 40e3, 1.5e6, 50.0, -0.3),), F0)

SMALL = {
    "format_version": 1,
    "environment": {"gamma_q_per_s": 555.6, "temperature_k": 0.027,
                    "tls": [{"freq_hz": 265.4e6, "g_hz": 20e3, "gamma2_hz": 2.0e6, "gamma_t_per_s": 50.0}]},
    "sweep": {"start_hz": 255e6, "stop_hz": 276e6, "step_hz": 1e6},
    "fd4": {"cycles": 2500}, "cd8": None, "seed": 3, "refine": False,
}


def _write_config(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return p


# --------------------------------------------------------------------------
# serialization


def test_protocol_config_round_trip():
    for cfg in (ProtocolConfig.fd4(cycles=7, readout_noise_sigma=0.3), ProtocolConfig.cd8(cycles=16)):
        d = io.config_to_dict(cfg)
        assert "pump_duration_s" in d
        assert io.config_from_dict(json.loads(json.dumps(d))) == cfg


def test_protocol_config_rejects_unknown_keys():
    with pytest.raises(io.ConfigError):
        io.config_from_dict({"variant": "FD4", "bogus": 1})


def test_environment_round_trip():
    back = io.env_from_dict(json.loads(json.dumps(io.env_to_dict(ENV))))
    assert back == ENV


def test_environment_from_reference_and_path(tmp_path):
    ref = io.env_from_dict("reference")
    assert len(ref.tls) == 10
    p = tmp_path / "env.json"
    p.write_text(json.dumps(io.env_to_dict(ENV)))
    assert io.env_from_dict({"path": "env.json"}, tmp_path) == ENV
    with pytest.raises(io.ConfigError):
        io.env_from_dict({"tls": []})


def test_record_round_trip_json_and_csv(tmp_path):
    rec = run_two_timescale(ProtocolConfig.fd4(cycles=2, readout_noise_sigma=0.5), ENV, seed=1)
    io.record_to_json(rec, tmp_path / "r.json")
    io.record_to_csv(rec, tmp_path / "r.csv")
    for back in (io.read_record(tmp_path / "r.json"), io.read_record(tmp_path / "r.csv")):
        assert np.array_equal(back.samples, rec.samples)
        assert back.config == rec.config
        assert back.diagnostics["zbar_h"] == rec.diagnostics["zbar_h"]
    assert (tmp_path / "r.csv").read_text().startswith("# format_version=1")


def test_record_version_is_checked(tmp_path):
    rec = run_two_timescale(ProtocolConfig.fd4(), ENV)
    io.record_to_json(rec, tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    d["format_version"] = 99
    (tmp_path / "r.json").write_text(json.dumps(d))
    with pytest.raises(io.ConfigError):
        io.read_record(tmp_path / "r.json")


def _small_fit():
    freqs = np.arange(255e6, 266e6, 1e6)
    cfg = ProtocolConfig.fd4(cycles=2500, readout_noise_sigma=0.5)
    env = Environment(QubitParams(600.0, -0.3), (TlsParams(260e6, 15e3, 1.5e6, 50.0, -0.3),), 260e6)
    points = [point_from_record(run_two_timescale(cfg, env.tuned(f), seed=i)) for i, f in enumerate(freqs)]
    data = build_dataset(points)
    return data, fit_spectrum(data)


def test_dataset_and_fit_round_trip(tmp_path):
    data, fit = _small_fit()
    io.dataset_to_csv(data, tmp_path / "d.csv")
    io.dataset_to_json(data, tmp_path / "d.json")
    for back in (io.dataset_from_csv(tmp_path / "d.csv"), io.dataset_from_json(tmp_path / "d.json")):
        for name in data.FIELDS:
            assert np.array_equal(getattr(back, name), getattr(data, name), equal_nan=True), name
        assert np.array_equal(back.static, data.static)
    io.fit_to_json(fit, tmp_path / "f.json")
    back = io.fit_from_json(tmp_path / "f.json")
    assert back.gamma_q == fit.gamma_q
    assert [t.freq_hz for t in back.tls] == [t.freq_hz for t in fit.tls]
    assert [tuple(t.gamma_t_interval) for t in back.tls] == [tuple(t.gamma_t_interval) for t in fit.tls]


def test_manifest_hashes(tmp_path):
    a = io.write_json(tmp_path / "a.json", {"x": 1.0, "y": float("nan")})
    io.write_manifest(tmp_path, [a])
    m = io.read_manifest(tmp_path)
    assert m["files"] == [{"path": "a.json", "sha256": io.sha256(a)}]
    assert json.loads(a.read_text())["y"] == "nan"


def test_sweep_arithmetic():
    assert len(io.SweepSpec(200e6, 400e6, 1e6).frequencies()) == 201
    assert len(io.SweepSpec(1.0, 1.0, 1.0).frequencies()) == 1
    with pytest.raises(io.ConfigError):
        io.SweepSpec(2.0, 1.0, 1.0)
    with pytest.raises(io.ConfigError):
        io.SweepSpec(1.0, 2.0, 0.0)


def test_run_config_validation(tmp_path):
    with pytest.raises(io.ConfigError):
        io.RunConfig.from_dict({"bogus": 1})
    with pytest.raises(io.ConfigError):
        io.RunConfig(command="fly")
    with pytest.raises(io.ConfigError):
        io.RunConfig(command="analyze")
    with pytest.raises(io.ConfigError):
        io.RunConfig(workers=0)
    with pytest.raises(io.ConfigError):
        io.RunConfig(seed=-1)
    with pytest.raises(io.ConfigError):
        io.RunConfig.from_dict({"format_version": 2})


# --------------------------------------------------------------------------
# command line


def test_exit_code_invalid_sweep(tmp_path):
    p = _write_config(tmp_path, {**SMALL, "sweep": {"start_hz": 3e8, "stop_hz": 2e8, "step_hz": 1e6}})
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_exit_code_missing_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 3


def test_exit_code_missing_input_dir(tmp_path):
    assert main(["analyze", "--input", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 1


def test_simulate_then_analyze(tmp_path):
    cfg = _write_config(tmp_path, SMALL)
    sim = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--out", str(sim), "--format", "csv"]) == 0
    n = len(io.SweepSpec(**SMALL["sweep"]).frequencies())
    assert len(list(sim.glob("point_*hz.csv"))) == n
    manifest = io.read_manifest(sim)
    assert all(io.sha256(sim / e["path"]) == e["sha256"] for e in manifest["files"])

    again = tmp_path / "sim2"
    assert main(["simulate", "--config", str(cfg), "--out", str(again), "--format", "csv"]) == 0
    assert io.read_manifest(again)["files"] == manifest["files"]

    ana = tmp_path / "ana"
    assert main(["analyze", "--config", str(cfg), "--input", str(sim), "--out", str(ana)]) == 0
    fit = io.fit_from_json(ana / "spectrum_fit.json")
    assert len(fit.tls) == 1 and abs(fit.tls[0].freq_hz - 265.4e6) < 0.5e6
    assert len(io.dataset_from_json(ana / "spectrum_dataset.json")) == n


def test_pitfalls_command(tmp_path):
    cfg = _write_config(tmp_path, {"seed": 2})
    out = tmp_path / "pit"
    assert main(["pitfalls", "--config", str(cfg), "--out", str(out)]) == 0
    rows = io.read_json(out / "pitfalls.json")
    assert len(rows["schemes"]) == 4
    assert len(list(out.glob("curve_*.csv"))) == 4


def test_calibrate_demo_command(tmp_path):
    out = tmp_path / "cal"
    assert main(["calibrate-demo", "--out", str(out)]) == 0
    cal = io.read_json(out / "calibration.json")
    assert cal["contrast_rad"] == pytest.approx(cal["true_contrast_rad"], abs=1e-6)
    assert (out / "contrast_table.csv").exists()


def test_sweep_count_for_default_grid():
    # 200-400 MHz at 1 MHz gives one record per frequency, both ends included
    cfg = io.RunConfig(command="simulate")
    assert len(cfg.sweep.frequencies()) == 201
