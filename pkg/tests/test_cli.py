import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from relaxlab.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, ConfigError, load_config_file, run, \
    write_report


def report(out):
    return json.loads((out / "report.json").read_text())


def test_analyze_p_system(tmp_path, capsys):
    out = tmp_path / "o"
    assert run(["analyze", "--builtin", "p_system", "--params", "2,1", "--out", str(out)]) == 0
    sec = report(out)["analyze"]
    s = 1 / np.sqrt(3)
    np.testing.assert_allclose(sec["cd_form"]["M"], [[1, 0], [-s, s]], atol=1e-10)
    assert sec["cd_form"]["MtM_minus_A0inv"] <= 1e-10
    assert sec["sk"]["holds"] is True
    c11 = sec["expansion"]["zero"]["families"][0]["c"][0]
    assert c11[0] < 0
    assert sec["pass"] is True
    assert "SK holds" in (out / "analysis.txt").read_text()
    assert "H1 holds" in capsys.readouterr().out


def test_analyze_is_deterministic(tmp_path):
    args = ["analyze", "--builtin", "jin_xin", "--params", "2", "--seed", "7",
            "--out", str(tmp_path / "a")]
    run(args)
    first = (tmp_path / "a/report.json").read_bytes()
    run(args)
    assert (tmp_path / "a/report.json").read_bytes() == first


def test_missing_file_exits_2(tmp_path, capsys):
    code = run(["analyze", "--file", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)])
    assert code == EXIT_USAGE
    assert "no such file" in capsys.readouterr().err


def test_bad_key_gives_line_anchored_message(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("system:\n  builtin: p_system\n  params: [2, 1]\ngrid:\n  nn: 64\n")
    assert run(["analyze", "--file", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert f"{cfg}:5:3: unknown key grid.nn" in capsys.readouterr().err
    with pytest.raises(ConfigError, match=r":3:11: .*params"):
        cfg.write_text("system:\n  builtin: p_system\n  params: 2\n")
        load_config_file(str(cfg))


def test_yaml_syntax_error_is_anchored(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("system:\n  builtin: [p_system\n")
    with pytest.raises(ConfigError, match=r"run.yaml:\d+:\d+"):
        load_config_file(str(cfg))


def test_matrix_system_file(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "system:\n  m: 1\n  n1: 1\n  n2: 1\n"
        "  A: [[[0, 1], [4, 0]]]\n  B: [[0, 0], [1, -1]]\n  A0: [[1, 1], [1, 4]]\n"
        "seed: 3\n")
    out = tmp_path / "o"
    assert run(["analyze", "--file", str(cfg), "--out", str(out)]) == EXIT_OK
    sec = report(out)["analyze"]
    s = 1 / np.sqrt(3)
    np.testing.assert_allclose(sec["cd_form"]["M"], [[1, 0], [-s, s]], atol=1e-10)
    assert sec["randomized_checks"]["seed"] == 3


def test_matrix_system_missing_entries(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("system:\n  m: 1\n  n1: 1\n")
    assert run(["analyze", "--file", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert "lacks" in capsys.readouterr().err


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("system:\n  builtin: p_system\n  params: [2, 1]\nseed: 1\n")
    out = tmp_path / "o"
    run(["analyze", "--file", str(cfg), "--seed", "5", "--out", str(out)])
    assert report(out)["analyze"]["randomized_checks"]["seed"] == 5


def test_usage_errors():
    assert run([]) == EXIT_USAGE
    assert run(["frobnicate"]) == EXIT_USAGE
    assert run(["analyze", "--builtin", "nope"]) == EXIT_USAGE


def test_bad_params_exit_2(tmp_path, capsys):
    assert run(["analyze", "--builtin", "p_system", "--params", "1,2",
                "--out", str(tmp_path)]) == EXIT_USAGE
    assert "subcharacteristic" in capsys.readouterr().err
    assert run(["analyze", "--builtin", "p_system", "--params", "a,b",
                "--out", str(tmp_path)]) == EXIT_USAGE


def test_kernel_rejects_two_dimensions(tmp_path, capsys):
    assert run(["kernel", "--builtin", "euler_damping", "--params", "2",
                "--out", str(tmp_path)]) == EXIT_USAGE
    assert "one-dimensional" in capsys.readouterr().err


def test_kernel_writes_series(tmp_path):
    out = tmp_path / "k"
    code = run(["kernel", "--builtin", "p_system", "--params", "1,0", "--out", str(out)])
    assert code in (EXIT_OK, EXIT_FAIL)
    rem = (out / "remainder.csv").read_text().splitlines()
    assert rem[0] == "block,t,sup" and len(rem) == 1 + 4 * 12
    head = (out / "kernel.csv").read_text().splitlines()[0].split(",")
    assert head[:2] == ["x", "G_00"] and len(head) == 13
    blocks = report(out)["kernel"]["remainder"]["blocks"]
    assert set(blocks) == {"00", "0-", "-0", "--"}
    assert {"fitted", "target", "tolerance", "pass"} <= set(blocks["00"])
    assert (code == EXIT_OK) == all(b["pass"] for b in blocks.values())


def test_simulate_compare_report_pipeline(tmp_path):
    out = str(tmp_path / "s")
    assert run(["simulate", "--builtin", "p_system", "--params", "1,0", "--grid-n", "1024",
                "--T", "50", "--dt", "0.125", "--out", out]) == EXIT_OK
    assert (tmp_path / "s/trajectory.json").exists()
    assert (tmp_path / "s/fields/w_0000.bin").exists()
    csv = (tmp_path / "s/decay.csv").read_text().splitlines()
    assert csv[0] == "variable,beta,p,t,value"
    assert run(["compare", "--chapman-enskog", "--mu", "0.3", "--out", out]) == EXIT_OK
    rows = report(tmp_path / "s")["compare_chapman_enskog"]["decay"]["rows"]
    assert all(r["pass"] is not False for r in rows)
    assert any(r["name"] == "u_c-u_p|beta=0|p=inf" and r["pass"] for r in rows)
    # the linear comparison is only stated in two or more dimensions
    assert run(["compare", "--out", out]) == EXIT_USAGE
    assert run(["report", "--out", out]) == EXIT_OK
    summary = report(tmp_path / "s")["summary"]
    assert summary["criteria"] == {"simulate": True, "compare_chapman_enskog": True}
    man = json.loads((tmp_path / "s/manifest.json").read_text())["artifacts"]
    for rel, digest in man.items():
        assert hashlib.sha256((tmp_path / "s" / rel).read_bytes()).hexdigest() == digest
    assert {"report.json", "decay.csv", "compare_chapman_enskog.csv", "summary.txt",
            "trajectory.json"} <= set(man)


def test_compare_without_simulation(tmp_path, capsys):
    assert run(["compare", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "run simulate first" in capsys.readouterr().err
    assert run(["report", "--out", str(tmp_path / "none")]) == EXIT_USAGE


def test_write_report_empty_and_union(tmp_path):
    man = write_report({}, tmp_path / "e")
    assert json.loads(man.read_text()) == {"artifacts": {}}
    d = tmp_path / "u"
    write_report({"a": {"x": 1, "_files": {"a.csv": "1\n"}}}, d)
    first = set(json.loads((d / "manifest.json").read_text())["artifacts"])
    write_report({"b": {"y": np.float64(2.0), "_files": {"b.csv": "2\n"}}}, d)
    second = json.loads((d / "manifest.json").read_text())["artifacts"]
    assert first - {"report.json"} <= set(second)
    assert set(second) == {"a.csv", "b.csv", "report.json"}
    assert json.loads((d / "report.json").read_text()) == {"a": {"x": 1}, "b": {"y": 2.0}}


@pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0,
                    reason="root ignores directory permissions")
def test_write_report_unwritable(tmp_path):
    d = tmp_path / "ro"
    d.mkdir()
    d.chmod(0o500)
    try:
        with pytest.raises(OSError, match="cannot write"):
            write_report({"a": {}}, d)
    finally:
        d.chmod(0o700)


def test_write_report_blocked_by_file(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(OSError, match="cannot write"):
        write_report({"a": {}}, blocker / "sub")
    assert run(["analyze", "--builtin", "p_system", "--params", "2,1",
                "--out", str(blocker / "sub")]) == EXIT_USAGE


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "relaxlab.cli", "analyze", "--builtin",
                          "p_system", "--params", "1,0", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "SK holds" in res.stdout
