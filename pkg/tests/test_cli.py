import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from smallcell import __version__
from smallcell.cli import main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    return [{k.split(" [")[0]: v for k, v in row.items()} for row in reader]


def meta_lines(text):
    return [ln for ln in text.splitlines() if ln.startswith("#")]


def test_analyze_default_lists_outage_against_antennas(capsys):
    code, out, _ = run(["analyze"], capsys)
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 40  # two densities x M = 1..20
    for lb in ("0.0001", "0.0005"):
        sel = [r for r in rows if r["lambda_b"] == lb]
        p_out = np.array([float(r["p_out"]) for r in sel])
        assert [int(r["M"]) for r in sel] == list(range(1, 21))
        assert np.all(np.diff(p_out) < 0)
        # Large-M decay per antenna follows the predicted r_u slope.
        Ms = np.arange(8, 17)
        slope = np.polyfit(Ms, np.log10(p_out[7:16]), 1)[0]
        assert slope == pytest.approx(float(sel[0]["ru_slope"]), rel=0.05)


def test_metadata_header(capsys):
    _, out, _ = run(["simulate", "--lambda-b", "1e-3", "--antennas", "1", "--trials", "50",
                     "--seed", "17", "--window", "600"], capsys)
    meta = "\n".join(meta_lines(out))
    assert f"# version: {__version__}" in meta
    assert "# seed: 17" in meta
    conf = json.loads(meta_lines(out)[-1].split("config: ", 1)[1])
    assert conf["trials"] == "50" and conf["window"] == "600"


def test_csv_and_json_carry_identical_values(tmp_path, capsys):
    args = ["analyze", "--lambda-b", "1e-4,1e-3", "--antennas", "1,4"]
    csv_path, json_path = tmp_path / "a.csv", tmp_path / "a.json"
    assert main(args + ["--out", str(csv_path)]) == 0
    assert main(args + ["--out", str(json_path)]) == 0
    rows_csv = read_csv(csv_path.read_text())
    doc = json.loads(json_path.read_text())
    assert set(doc) == {"meta", "rows"}
    assert doc["meta"]["version"] == __version__
    assert len(rows_csv) == len(doc["rows"]) == 4
    for rc, rj in zip(rows_csv, doc["rows"]):
        for key, val in rj.items():
            if isinstance(val, float):
                assert float(rc[key]) == val
                assert len(rc[key].replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 12


def test_output_is_rewritten_not_appended(tmp_path):
    path = tmp_path / "out.csv"
    path.write_text("stale content\n" * 100)
    assert main(["analyze", "--antennas", "1", "--out", str(path)]) == 0
    first = path.read_text()
    assert "stale" not in first
    assert main(["analyze", "--antennas", "1", "--out", str(path)]) == 0
    assert path.read_text() == first


def test_analytic_sweep_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["sweep", "--rho", "1e-3:1e2:30:log", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_rho_sweep_throughput_nondecreasing(capsys):
    code, out, _ = run(["sweep", "--rho", "1e-3:1e2:40:log"], capsys)
    assert code == 0
    Ra = np.array([float(r["R_a"]) for r in read_csv(out)])
    assert np.all(np.diff(Ra) >= 0)


def test_antenna_sweep_steeper_at_higher_density(capsys):
    slopes = []
    for lb in ("1e-4", "5e-4"):
        code, out, _ = run(["sweep", "--antennas", "1:20:20", "--lambda-b", lb], capsys)
        assert code == 0
        p_out = np.array([float(r["p_out"]) for r in read_csv(out)])
        slopes.append(np.polyfit(np.arange(10, 21), np.log10(p_out[9:]), 1)[0])
    assert slopes[1] < slopes[0] < 0


def test_gamma_sweep_in_db(capsys):
    code, out, _ = run(["sweep", "--gamma-db=-5,0,5"], capsys)
    rows = read_csv(out)
    assert code == 0 and [r["gamma_db"] for r in rows] == ["-5", "0", "5"]
    assert float(rows[1]["R_0"]) == pytest.approx(1.0)


def test_optimize_micro_bs(capsys):
    code, out, _ = run(["optimize", "--antennas", "1,2,4", "--format", "json"], capsys)
    assert code == 0
    rows = json.loads(out)["rows"]
    dens = {r["M"]: r for r in rows if r["section"] == "density"}
    assert 0.30 <= dens[1]["lambda_b_star"] / 1e-3 <= 0.34
    assert dens[1]["density_regime"] == "interior-optimum"
    assert "printed closed-form" in dens[1]["note"]
    assert dens[4]["density_regime"] == "monotone-decreasing"
    assert dens[4]["lambda_b_star"] == "nan"
    ant = [r for r in rows if r["section"] == "antennas"]
    assert ant[0]["M_star"] == 1 and ant[0]["single_antenna_optimal"] is True
    assert ant[0]["gamma_pc"] == pytest.approx(30.196, abs=1e-3)


def test_optimize_densification_never_helps_when_idle_power_dominates(capsys):
    code, out, _ = run(["optimize", "--p0", "500", "--format", "json"], capsys)
    row = json.loads(out)["rows"][0]
    assert code == 0 and row["densification_never_helps"] is True
    assert row["density_regime"] == "monotone-decreasing"


def test_optimize_cheap_circuits_give_more_antennas(capsys):
    code, out, _ = run(["optimize", "--pc", "1", "--lambda-b", "1e-3", "--format", "json"], capsys)
    ant = [r for r in json.loads(out)["rows"] if r["section"] == "antennas"]
    assert code == 0 and ant[0]["M_star"] > 1 and ant[0]["single_antenna_optimal"] is False


def test_simulate_rows_carry_comparison_columns(capsys):
    code, out, _ = run(["simulate", "--lambda-b", "5e-4", "--antennas", "1,3", "--trials", "300",
                        "--window", "800", "--format", "json"], capsys)
    assert code == 0
    rows = json.loads(out)["rows"]
    assert len(rows) == 2
    for r in rows:
        assert r["ci99_low"] <= r["p_s_hat"] <= r["ci99_high"]
        assert r["gap"] == pytest.approx(abs(r["p_s_hat"] - r["p_s_analytic"]), abs=1e-11)
        assert r["within_ci"] == (r["ci99_low"] <= r["p_s_analytic"] <= r["ci99_high"])
        assert r["trials"] == 300


def test_simulate_hexagonal_layout(capsys):
    code, out, _ = run(["simulate", "--layout", "hexagonal", "--lambda-b", "1e-3", "--antennas",
                        "1", "--trials", "400", "--window", "800"], capsys)
    row = read_csv(out)[0]
    assert code == 0 and row["layout"] == "hexagonal"
    assert float(row["p_s_hat"]) >= float(row["p_s_analytic"])


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"lambda-b": "2e-4", "antennas": 3, "alpha": 3.5, "eta": 0.4}))
    code, out, _ = run(["analyze", "--config", str(cfg), "--alpha", "4"], capsys)
    rows = read_csv(out)
    assert code == 0 and len(rows) == 1
    assert rows[0]["lambda_b"] == "0.0002" and rows[0]["M"] == "3" and rows[0]["alpha"] == "4"
    conf = json.loads(meta_lines(out)[-1].split("config: ", 1)[1])
    assert conf["eta"] == "0.4"


def test_flag_density_replaces_file_density(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"rho": 0.5}))
    code, out, _ = run(["analyze", "--config", str(cfg), "--lambda-b", "1e-4", "--antennas", "1"],
                       capsys)
    assert code == 0 and read_csv(out)[0]["rho"] == "0.1"


@pytest.mark.parametrize("argv", [
    ["analyze", "--lambda-b", ""],
    ["analyze", "--antennas", "3,2"],
    ["analyze", "--antennas", "1.5"],
    ["sweep"],
    ["sweep", "--lambda-b", "1e-4,2e-4", "--antennas", "1,2"],
    ["analyze", "--lambda-b", "1e-4", "--rho", "0.1"],
    ["simulate", "--trials", "0"],
    ["analyze", "--alpha", "2"],
    ["analyze", "--lambda-b", "a:b:c"],
    ["analyze", "--bogus"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse-level errors
        code = exc.code
    assert code == 2


def test_bad_config_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"colour": "blue"}))
    assert main(["analyze", "--config", str(cfg)]) == 2
    cfg.write_text("{not json")
    assert main(["analyze", "--config", str(cfg)]) == 2


def test_io_errors_exit_4(tmp_path, capsys):
    assert main(["analyze", "--config", str(tmp_path / "missing.json")]) == 4
    assert main(["analyze", "--out", str(tmp_path / "no" / "such" / "dir.csv")]) == 4


def test_numerical_failure_exits_3(monkeypatch, capsys):
    from smallcell import cli
    from smallcell.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("quadrature did not converge", error_estimate=1.0, index=4)
    monkeypatch.setattr(cli, "metric_report", boom)
    assert main(["analyze", "--antennas", "1"]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_module_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "smallcell", "analyze", "--antennas", "1",
                          "--format", "json"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    rows = json.loads(res.stdout)["rows"]
    assert math.isclose(rows[0]["p_s"], 0.562293919139, rel_tol=1e-11)
