import csv
import json
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from l1verify import vehicle_bench as vb
from l1verify.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="module")
def schema():
    return json.loads(resources.files("l1verify").joinpath("report.schema.json").read_text())


def oracle_config(tmp_path, T, extra=""):
    path = tmp_path / f"T{T}.ini"
    path.write_text(f"[problem]\nname = vehicle\n[parameters]\nalpha = 1\nX = 1\n"
                    f"[schedule]\nT = {T!r}\nsource = oracle\n{extra}")
    return path


def test_verify_certified(tmp_path, schema, capsys):
    code = main(["verify", str(CONFIGS / "vehicle.ini"), "--output-dir", str(tmp_path)])
    assert code == 0
    assert "certified" in capsys.readouterr().out
    report = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(report, schema)
    assert report["certified"] and report["failing"] == []
    assert report["verdict"] == "strict strong-local minimizer certified"


def test_verify_t_lim_not_certified(tmp_path, schema):
    cfg = oracle_config(tmp_path, vb.t_lim(1.0, 1.0))
    assert main(["verify", str(cfg), "--output-dir", str(tmp_path)]) == 1
    report = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(report, schema)
    assert "RS" in report["failing"] and not report["certified"]


def test_verify_crossing_report_valid(tmp_path, schema):
    assert main(["verify", str(CONFIGS / "crossing.ini"), "--output-dir", str(tmp_path),
                 "--timings"]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(report, schema)
    assert report["zero_structure"]["n1"] == 1 and report["zero_structure"]["n3"] == 1


def test_missing_lambda0_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[problem]\nname = vehicle\n[schedule]\nT = 2.3\nu1 = 1\nu3 = -1\n"
                   "x0 = 0 0\nxf = 1 0\ntau1 = 1.3\ntau2 = 1.9\n")
    assert main(["verify", str(cfg), "--output-dir", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_wrong_schedule_not_certified(tmp_path):
    cfg = tmp_path / "wrong.ini"
    cfg.write_text("[problem]\nname = vehicle\n[schedule]\nT = 2.3\nu1 = 1\nu3 = 1\n"
                   "x0 = 0 0\nxf = 1 0\ntau1 = 1.3\ntau2 = 1.9\nlambda0 = 0 0\n")
    assert main(["verify", str(cfg), "--output-dir", str(tmp_path)]) == 1
    report = json.loads((tmp_path / "report.json").read_text())
    assert "PMP-boundary" in report["failing"]


def test_computation_error_names_stage(tmp_path, capsys):
    cfg = tmp_path / "shoot.ini"
    cfg.write_text("[problem]\nname = crossing\n[schedule]\nT = 2.3\nu1 = 1\nu3 = -1\n"
                   "x0 = 0 0\nxf = 1 0\n[shoot]\nlambda0 = -5 3\ntau1 = 2.2\ntau2 = 2.25\n")
    assert main(["verify", str(cfg), "--output-dir", str(tmp_path)]) == 2
    assert capsys.readouterr().err.startswith("error: schedule: ")


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("L1VERIFY_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["verify", str(CONFIGS / "vehicle.ini")]) == 0
    assert (tmp_path / "env" / "report.json").exists()


def _read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_trace_outputs(tmp_path):
    assert main(["trace", str(CONFIGS / "vehicle.ini"), "--output-dir", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "extremal.csv")
    assert rows[0] == ["t", "x1", "x2", "p1", "p2", "tag"]
    sw = _read_csv(tmp_path / "switching.csv")
    header, body = sw[0], sw[1:]
    tau1, tau2 = 1.3234426637128618, 1.976557336287138
    col = {name: header.index(name) for name in header}

    def value(t, arc, name):
        for r in body:
            if int(r[col["arc"]]) == arc and abs(float(r[col["t"]]) - t) < 1e-10:
                return float(r[col[name]])
        raise AssertionError(f"no sample at t={t} on arc {arc}")

    # the first switching slack vanishes at tau1 and changes sign there; the third at tau2
    assert abs(value(tau1, 1, "u1F1_minus_abs_psi")) < 1e-8
    assert abs(value(tau1, 2, "u1F1_minus_abs_psi")) < 1e-8
    assert abs(value(tau2, 2, "u3F1_minus_abs_psi")) < 1e-8
    before = [float(r[col["u1F1_minus_abs_psi"]]) for r in body
              if int(r[col["arc"]]) == 1 and float(r[col["t"]]) < tau1 - 1e-3]
    after = [float(r[col["u1F1_minus_abs_psi"]]) for r in body
             if int(r[col["arc"]]) == 2 and float(r[col["t"]]) > tau1 + 1e-3]
    assert min(before) > 0 > max(after)
    clarke = _read_csv(tmp_path / "clarke.csv")
    assert clarke[0] == ["a", "sigma_min_switch1", "sigma_min_switch2"]
    assert float(clarke[1][1]) == 1.0


def test_trace_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["trace", str(CONFIGS / "vehicle.ini"), "--output-dir",
                     str(tmp_path / d)]) == 0
    for name in ("extremal.csv", "switching.csv", "clarke.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_empty_range_header_only(tmp_path):
    cfg = oracle_config(tmp_path, 2.3)
    assert main(["sweep", str(cfg), "--param", "T", "--from", "2.2", "--to", "2.4", "--count",
                 "0", "--output-dir", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 1 and rows[0][0] == "T" and "RS_margin" in rows[0]


def test_sweep_past_t_lim(tmp_path):
    cfg = oracle_config(tmp_path, 2.3)
    code = main(["sweep", str(cfg), "--param", "T", "--from", "2.3", "--to", "2.7", "--count",
                 "3", "--output-dir", str(tmp_path), "--jobs", "2"])
    assert code == 1
    rows = _read_csv(tmp_path / "sweep.csv")
    header = rows[0]
    status = [r[header.index("status")] for r in rows[1:]]
    assert status == ["ok", "branch-inapplicable", "branch-inapplicable"]
    assert rows[1][header.index("verdict")] == "certified"


def test_sweep_unknown_parameter(tmp_path):
    cfg = oracle_config(tmp_path, 2.3)
    assert main(["sweep", str(cfg), "--param", "beta", "--from", "0", "--to", "1", "--count",
                 "2", "--output-dir", str(tmp_path)]) == 2


def test_bench(tmp_path, capsys):
    assert main(["bench", "--T", "2.3", "--probe-count", "5", "--output-dir",
                 str(tmp_path)]) == 0
    out = json.loads((tmp_path / "bench.json").read_text())
    assert out["shooting"]["tau_error"] < 1e-8
    assert out["probe"]["passed"]
    assert len(_read_csv(tmp_path / "probe.csv")) == 26


def test_bench_outside_branch(tmp_path, capsys):
    assert main(["bench", "--T", "2.5", "--output-dir", str(tmp_path)]) == 2
    assert "BranchInapplicable" in capsys.readouterr().err
