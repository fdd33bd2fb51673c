import subprocess
import sys

import pytest

from nestedmzi.cli import main
from nestedmzi.circuitfile import parse
from nestedmzi.scenarios import build_scenario


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines())


def test_run_nominal(capsys):
    code, out, _ = run(capsys, "run", "--scenario", "nominal", "--set", "EPS=0.1", "--select", "D")
    assert code == 0
    report = kv(out)
    assert float(report["p_select"]) == pytest.approx(0.25, abs=1e-12)
    code0, out0, _ = run(capsys, "run", "--scenario", "nominal", "--select", "D")
    assert kv(out0)["cond.DP1"] == report["cond.DP1"]
    assert kv(out0)["cond.DP2"] == report["cond.DP2"]


def test_run_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "run", "--circuit", str(tmp_path / "missing.mzc"))
    assert code == 2
    assert err


def test_run_unknown_detector(capsys):
    code, _, _ = run(capsys, "run", "--scenario", "nominal", "--select", "DBAR_UNKNOWN")
    assert code == 1


def test_run_unknown_parameter(capsys):
    assert run(capsys, "run", "--scenario", "nominal", "--set", "XYZ=1")[0] == 1


def test_run_bad_file_reports_positions(capsys, tmp_path):
    path = tmp_path / "bad.mzc"
    path.write_text("rails system A B\nrails probe P\ninit system A\ninit probe P\nstage bs system A A t=0.5\n")
    code, _, err = run(capsys, "run", "--circuit", str(path))
    assert code == 2
    assert err.splitlines() == ["5:17: beam splitter rails must differ"]


def test_run_physics_error(capsys, tmp_path):
    path = tmp_path / "dark.mzc"
    path.write_text("rails system A B\nrails probe P\ninit system A\ninit probe P\ndetector D system B\n")
    assert run(capsys, "run", "--circuit", str(path))[0] == 3


def test_run_circuit_file(capsys, tmp_path):
    code, text, _ = run(capsys, "scenario", "blocked_b")
    assert code == 0
    path = tmp_path / "b.mzc"
    path.write_text(text)
    assert parse(text) == build_scenario("blocked_b")
    code, out, _ = run(capsys, "run", "--circuit", str(path), "--set", "EPS=0.2")
    assert code == 0
    assert kv(out)["kind"] == "circuit"


def test_sweep_blocked(capsys):
    code, out, _ = run(capsys, "sweep", "--scenario", "blocked_b", "--param", "EPS",
                       "--from", "0", "--to", "0.4", "--steps", "5", "--select", "D")
    assert code == 0
    header, *rows = out.splitlines()
    assert header == "param,p_select,dark_mag,p_DP1,p_DP2,s_imbalance"
    assert len(rows) == 5
    assert len({r.split(",")[3] for r in rows}) == 5
    assert rows[-1].split(",")[0] == "0.40000000000000002"


def test_sweep_single_step(capsys):
    code, out, _ = run(capsys, "sweep", "--scenario", "nominal", "--param", "EPS",
                       "--from", "0.3", "--to", "0.9", "--steps", "1")
    assert code == 0
    rows = out.splitlines()[1:]
    assert len(rows) == 1 and rows[0].startswith("0.29999999999999999,")


@pytest.mark.parametrize("extra", [
    ["--from", "0.2", "--to", "0.1", "--steps", "3"],
    ["--from", "0", "--to", "1", "--steps", "0"],
])
def test_sweep_bad_grid(capsys, extra):
    assert run(capsys, "sweep", "--scenario", "nominal", "--param", "EPS", *extra)[0] == 1


def test_sweep_unknown_param(capsys):
    code = run(capsys, "sweep", "--scenario", "nominal", "--param", "NOPE",
               "--from", "0", "--to", "1", "--steps", "2")[0]
    assert code == 1


def test_detuned_delta(capsys):
    code, out, _ = run(capsys, "run", "--scenario", "detuned", "--set", "DELTA=0.1", "--set", "EPS=0.1")
    assert code == 0
    assert float(kv(out)["dark_mag"]) > 0


def test_weak_values(capsys):
    code, out, _ = run(capsys, "weak-values", "--scenario", "nominal", "--cut", "inner", "--select", "D")
    assert code == 0
    rows = {r.split(",")[2]: r.split(",") for r in out.splitlines()[1:]}
    assert float(rows["A"][3]) == pytest.approx(1, abs=1e-12)
    assert float(rows["B"][3]) == pytest.approx(-0.5, abs=1e-12)
    assert float(rows["C"][3]) == pytest.approx(0.5, abs=1e-12)
    assert float(rows["sum"][3]) == pytest.approx(1, abs=1e-12)
    for r in rows.values():
        assert float(r[4]) == pytest.approx(0, abs=1e-12)


def test_weak_values_strength_independent(capsys):
    a = run(capsys, "weak-values", "--scenario", "nominal", "--cut", "inner", "--select", "D")[1]
    b = run(capsys, "weak-values", "--scenario", "nominal", "--cut", "inner", "--select", "D",
            "--set", "EPS=0.3")[1]
    assert a == b


def test_weak_values_unknown_cut(capsys):
    assert run(capsys, "weak-values", "--scenario", "nominal", "--cut", "nosuch")[0] == 1


def test_weak_values_zero_overlap(capsys, tmp_path):
    path = tmp_path / "z.mzc"
    path.write_text("rails system A B\nrails probe P\ninit system A\ninit probe P\n"
                    "stage cut inner\ndetector D system B\n")
    assert run(capsys, "weak-values", "--circuit", str(path), "--select", "D")[0] == 3


def test_validate(capsys, tmp_path):
    good = tmp_path / "g.mzc"
    good.write_text(run(capsys, "scenario", "nominal")[1])
    assert run(capsys, "validate", str(good))[0] == 0
    bad = tmp_path / "b.mzc"
    bad.write_text("rails system A\n")
    assert run(capsys, "validate", str(bad))[0] == 2


def test_usage_errors(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "run")[0] == 1
    assert run(capsys, "run", "--scenario", "three_box")[0] == 1
    assert run(capsys, "run", "--scenario", "nominal", "--set", "EPS")[0] == 1


def test_out_file(capsys, tmp_path):
    target = tmp_path / "wv.csv"
    code, out, _ = run(capsys, "weak-values", "--scenario", "nominal", "--out", str(target))
    assert code == 0 and out == ""
    assert target.read_text().startswith("cut,detector,rail")
    assert list(tmp_path.iterdir()) == [target]


def test_module_entry_point_is_byte_deterministic():
    cmd = [sys.executable, "-m", "nestedmzi", "run", "--scenario", "single_arm_b", "--set", "EPS=0.05"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a
