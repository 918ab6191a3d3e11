import json
import subprocess
import sys

from dnlab.cli import CSV_HEADER, main

SMALL = {"grid": {"n": 32}, "time": {"t_end": 5.0}, "assumptions": {"sample_count": 200}}


def cfg_file(tmp_path, data, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def load_summary(path):
    d = json.loads(path.read_text(encoding="utf-8"))
    d.pop("wall_time")
    return d


def test_linear_run_exit_zero(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", cfg_file(tmp_path, SMALL), "--out", str(out)]) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 5002
    s = load_summary(out / "summary.json")
    for key in ("config", "config_hash", "energy", "decay_fit", "assumptions", "lyapunov",
                "solver", "verdicts"):
        assert key in s
    assert s["lyapunov"]["mu"] > 0 and s["solver"]["total_newton_iters"] > 0


def test_csv_precision(tmp_path):
    out = tmp_path / "o"
    data = dict(SMALL, time={"t_end": 0.1})
    main(["run", "--config", cfg_file(tmp_path, data), "--out", str(out)])
    row = (out / "trajectory.csv").read_text().splitlines()[5].split(",")
    assert float(row[1]) == float(f"{float(row[1]):.17g}")
    assert len(row) == len(CSV_HEADER)


def test_determinism(tmp_path):
    path = cfg_file(tmp_path, dict(SMALL, grid={"n": 16}, time={"t_end": 2.0}))
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", path, "--out", str(a), "--seed", "4"])
    main(["run", "--config", path, "--out", str(b), "--seed", "4"])
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    assert load_summary(a / "summary.json") == load_summary(b / "summary.json")
    assert load_summary(a / "summary.json")["config"]["seed"] == 4


def test_adversarial_delta_exit_two(tmp_path):
    data = dict(SMALL, weights={"delta": {"c": 1.0, "theta": 1.0}, "lambda": {"c": 2.0, "theta": 0}})
    out = tmp_path / "o"
    assert main(["run", "--config", cfg_file(tmp_path, data), "--out", str(out)]) == 2
    b2 = load_summary(out / "summary.json")["assumptions"]["checks"]["B2"]
    assert b2["status"] == "FAIL" and "t" in b2["witness"]


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", cfg_file(tmp_path, SMALL), "--out", str(blocker / "x")]) == 1


def test_bad_config_exit_one(tmp_path, capsys):
    assert main(["run", "--config", cfg_file(tmp_path, {"foo": 1}), "--out", str(tmp_path)]) == 1
    assert "/foo" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1


def test_solver_error_exit_one(tmp_path):
    data = {"grid": {"n": 32}, "exponents": {"ell": 3, "m": 4, "q": 1.5},
            "initial": {"amplitude": 5.0}, "newton": {"max_iter": 1}, "time": {"t_end": 0.1}}
    assert main(["run", "--config", cfg_file(tmp_path, data), "--out", str(tmp_path)]) == 1


def test_sweep_table(tmp_path):
    data = {"grid": {"n": 16}, "time": {"t_end": 0.5}, "assumptions": {"sample_count": 100}}
    out = tmp_path / "sw"
    code = main(["sweep", "--config", cfg_file(tmp_path, data), "--out", str(out),
                 "--ell", "2", "--m", "3,4,6", "--q", "2", "--workers", "2"])
    assert code in (0, 2)
    rows = (out / "rates.csv").read_text().splitlines()
    assert rows[0] == "ell,m,q,b0,predicted_exponent,fitted_slope,verdict"
    assert [float(r.split(",")[4]) for r in rows[1:]] == [-2.0, -1.0, -0.5]
    assert all((out / f"combo_{i:04d}" / "summary.json").exists() for i in range(3))


def test_sweep_records_invalid_combo(tmp_path):
    data = {"grid": {"n": 16}, "time": {"t_end": 0.2}, "assumptions": {"sample_count": 100}}
    out = tmp_path / "sw"
    code = main(["sweep", "--config", cfg_file(tmp_path, data), "--out", str(out),
                 "--ell", "2", "--m", "1.5,2"])
    assert code == 2
    rows = (out / "rates.csv").read_text().splitlines()
    assert rows[1].endswith("ERROR") and len(rows) == 3


def test_sweep_empty_and_cap(tmp_path):
    path = cfg_file(tmp_path, {})
    assert main(["sweep", "--config", path, "--out", str(tmp_path / "e"), "--m", ""]) == 0
    assert not (tmp_path / "e").exists()
    big = ",".join(str(3 + i / 1000) for i in range(2000))
    assert main(["sweep", "--config", path, "--out", str(tmp_path / "b"), "--m", big]) == 1


def test_verify_reference(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--config", cfg_file(tmp_path, SMALL), "--out", str(out)]) == 0
    s = load_summary(out / "summary.json")
    assert s["verdicts"]["oracle"] == "PASS" and s["verdicts"]["jacobian"] == "PASS"
    assert s["verdicts"]["B4"] == "SKIPPED"
    assert all(v in ("PASS", "SKIPPED") for v in s["verdicts"].values())


def test_verify_b1_failure(tmp_path):
    data = dict(SMALL, weights={"lambda": {"c": 0.5, "theta": 0.0}})
    out = tmp_path / "v"
    assert main(["verify", "--config", cfg_file(tmp_path, data), "--out", str(out)]) == 2
    assert load_summary(out / "summary.json")["checks"]["B1"]["status"] == "FAIL"


def test_verify_unregularized_warning(tmp_path):
    data = dict(SMALL, eps_reg=0.0, exponents={"ell": 1.5, "m": 1.5, "q": 1.5})
    out = tmp_path / "v"
    code = main(["verify", "--config", cfg_file(tmp_path, data), "--out", str(out)])
    s = load_summary(out / "summary.json")
    assert s["warnings"] and "Newton" in s["warnings"][0]
    assert code in (0, 2)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "dnlab", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "verify" in res.stdout
