import csv
import json
import math

import pytest
import yaml
from pydantic import ValidationError

from qubit_thermometry import cli
from qubit_thermometry.config import ExperimentConfig, load_config
from qubit_thermometry.qubit_model import ladder_from_transitions, predicted_pexp
from qubit_thermometry.runner import (
    SWEEP_COLUMNS,
    floored_populations,
    run_calibration,
    run_qp_analysis,
    run_temperature_sweep,
    run_trace,
    schedule_for,
    write_calibration,
    write_sweep,
)

LADDER = ladder_from_transitions([4.97, 4.70, 4.46])


def _cfg(**kw):
    return load_config(None, **{"seed": 3, **kw})


def _read_rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class TestConfig:
    def test_seed_required(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({})

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError):
            _cfg(readout={"a0": 1.0})

    @pytest.mark.parametrize("temps", [[0.5], [15, 1500], []])
    def test_temperature_range(self, temps):
        with pytest.raises(ValidationError):
            _cfg(sweep={"temperatures_mk": temps})

    def test_k_range(self):
        with pytest.raises(ValidationError):
            _cfg(calibration={"k_values": [0.01, 1.5]})

    def test_noise_spec_exclusive(self):
        with pytest.raises(ValidationError):
            _cfg(readout={"sigma_t_v": 1.0, "sigma_c_target": 0.02})

    def test_yaml_round_trip(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text(yaml.safe_dump({"seed": 42, "device": {"t1_us": 60}, "sweep": {"temperatures_mk": [20, 40]}}))
        cfg = load_config(path, seed=7)
        assert cfg.seed == 7 and cfg.device.t1_us == 60 and cfg.sweep.temperatures_mk == [20.0, 40.0]

    def test_ladder_from_device(self):
        cfg = _cfg(ladder={"transitions_ghz": None, "n_levels": 3})
        assert len(cfg.ladder.build(cfg.device)) == 3

    def test_schedule(self):
        assert schedule_for(15) == (5000, 3000)
        assert schedule_for(40) == (5000, 1500)
        assert schedule_for(60) == (5000, 750)


class TestFloor:
    def test_floor_raises_pe(self):
        pop = floored_populations(LADDER, 15, 0.001)
        assert pop.pe == 0.001 and abs(sum(pop.probs) - 1) < 1e-12

    def test_floor_inactive_when_hot(self):
        pop = floored_populations(LADDER, 60, 0.001)
        assert pop.pe > 0.018


class TestSweep:
    def test_noiseless_identity(self):
        cfg = _cfg(sweep={"temperatures_mk": [15, 40, 100], "cycles": 5})
        rows = run_temperature_sweep(cfg).rows
        for r in rows:
            assert r["pe"] == pytest.approx(predicted_pexp(LADDER, r["bath_mk"]), abs=1e-6)
            assert r["sigma_c"] == pytest.approx(0.0, abs=1e-12)

    def test_row_identities(self):
        cfg = _cfg(readout={"sigma_c_target": 0.021}, sweep={"temperatures_mk": [15, 40, 60], "residual_pe": 0.001})
        for r in run_temperature_sweep(cfg).rows:
            assert r["dpe"] == pytest.approx(r["sigma_c"] / math.sqrt(r["C"]), rel=1e-12)
            assert r["N"] == r["C"] * r["A"]
            assert r["n_invalid"] == 0

    def test_60mk_row(self):
        cfg = _cfg(readout={"sigma_c_target": 0.021}, sweep={"temperatures_mk": [60]})
        (r,) = run_temperature_sweep(cfg).rows
        assert r["pe"] == pytest.approx(0.018, abs=3 * r["dpe"])
        assert r["t_eff_lo_mk"] < r["t_eff_mk"] < r["t_eff_hi_mk"]

    def test_tracks_theory_35_to_150(self):
        temps = [35, 40, 50, 60, 80, 100, 120, 150]
        cfg = _cfg(seed=21, readout={"sigma_c_target": 0.021}, sweep={"temperatures_mk": temps})
        for r in run_temperature_sweep(cfg).rows:
            assert abs(r["pe"] - r["pexp_theory"]) < 3 * r["dpe"], r["bath_mk"]

    def test_output_independent_of_jobs(self, tmp_path):
        cfg = _cfg(
            readout={"sigma_c_target": 0.021, "drift": {"kind": "ou", "amplitude_v": 0.01}},
            sweep={"temperatures_mk": [60, 15, 30], "cycles": 200},
        )
        for jobs in (1, 3):
            write_sweep(run_temperature_sweep(cfg, jobs=jobs), tmp_path / f"j{jobs}")
        for name in ("sweep.csv", "summary.txt", "samples_15mK.csv", "samples_60mK.csv"):
            assert (tmp_path / "j1" / name).read_bytes() == (tmp_path / "j3" / name).read_bytes()

    def test_csv_layout(self, tmp_path):
        cfg = _cfg(readout={"sigma_c_target": 0.02}, sweep={"temperatures_mk": [25, 20], "cycles": 100})
        paths = write_sweep(run_temperature_sweep(cfg), tmp_path)
        text = (tmp_path / "sweep.csv").read_text().splitlines()
        assert text[0].startswith("# units: mK,mK,count")
        assert text[1].split(",") == list(SWEEP_COLUMNS)
        rows = _read_rows(tmp_path / "sweep.csv")
        assert [float(r["bath_mk"]) for r in rows] == [20.0, 25.0]
        samples = _read_rows(tmp_path / "samples_20mK.csv")
        assert len(samples) == 100
        assert "Gaussian fit" in (tmp_path / "summary.txt").read_text()
        assert len(paths) == 4


class TestCalibration:
    def test_two_point_noiseless(self):
        cfg = _cfg(calibration={"k_values": [0.01, 0.04], "cycles": 2})
        res = run_calibration(cfg)
        pe = res.bath.pe
        assert res.fit.intercept == pytest.approx(pe, rel=1e-9)
        assert res.fit.slope == pytest.approx(1 - 2 * pe, rel=1e-9)

    def test_residual_contamination(self, tmp_path):
        cfg = _cfg(calibration={"k_values": [0.002, 0.02, 0.05], "cycles": 2})
        res = run_calibration(cfg)
        worst = res.rows[-1]["residual_contamination"]
        assert worst == pytest.approx(1e-4, rel=0.05)
        assert worst < 0.00067
        path = write_calibration(res, tmp_path)
        assert path.read_text().rstrip().splitlines()[-1].startswith("# fit: slope=")


class TestQp:
    def test_paper_value(self):
        rep = run_qp_analysis(_cfg(device={"c_ff": 80, "rn_kohm": 9.5}))
        assert 100 <= rep["t1_qp_us"] <= 115
        assert rep["t1_qp_over_measured"] == pytest.approx(1.35, abs=0.05)
        assert rep["density_ratio_rounded"] == pytest.approx(2.1e-7)

    def test_zero_population(self):
        rep = run_qp_analysis(_cfg(), pe=0.0)
        assert rep["t1_qp_unbounded"] and math.isinf(rep["t1_qp_us"])

    def test_linearity(self):
        a = run_qp_analysis(_cfg(), pe=0.001)["t1_qp_us"]
        b = run_qp_analysis(_cfg(), pe=0.002)["t1_qp_us"]
        assert b == pytest.approx(a / 2, rel=1e-12)


def test_trace_run():
    res = run_trace(_cfg(trace={"temperature_mk": 150, "averages": 100}))
    assert res["pexp"] == pytest.approx(res["pexp_true"], rel=1e-6)


class TestCli:
    def test_sweep(self, tmp_path, capsys):
        cfg_path = tmp_path / "c.yaml"
        cfg_path.write_text(yaml.safe_dump({"seed": 5, "sweep": {"temperatures_mk": [20, 50], "cycles": 50}}))
        assert cli.main(["sweep", "--config", str(cfg_path), "--out", str(tmp_path / "o"), "--jobs", "2"]) == 0
        assert (tmp_path / "o" / "sweep.csv").exists()
        assert (tmp_path / "o" / "samples_50mK.csv").exists()
        assert "Bath" in capsys.readouterr().out

    def test_calibrate_qp_trace(self, tmp_path, capsys):
        out = str(tmp_path)
        assert cli.main(["calibrate", "--seed", "1", "--out", out]) == 0
        assert cli.main(["qp", "--seed", "1", "--out", out, "--pe", "0.001"]) == 0
        assert cli.main(["trace", "--seed", "1", "--out", out]) == 0
        for name in ("calibration.csv", "qp_report.json", "trace.csv"):
            assert (tmp_path / name).exists()
        report = json.loads((tmp_path / "qp_report.json").read_text())
        assert report["pe"] == 0.001
        assert "intercept" in capsys.readouterr().out

    def test_seed_needed(self):
        with pytest.raises(SystemExit):
            cli.main(["qp"])

    def test_schema(self, capsys):
        assert cli.main(["schema"]) == 0
        schema = json.loads(capsys.readouterr().out)
        assert "seed" in schema["required"]
