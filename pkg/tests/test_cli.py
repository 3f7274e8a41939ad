import json
import os
from pathlib import Path

import pytest

from bootloc import cli

SNAPSHOTS = Path(__file__).parent / "snapshots"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def kv(out):
    return dict(line.split("=", 1) for line in out.splitlines() if "=" in line)


def test_sufficient_m_example(capsys):
    code, out, _ = run(capsys, "sufficient-m", "--n", "1e6", "--c-radius", "2", "--c-prime", "1",
                       "--rho", "paper_r")
    assert code == 0
    v = kv(out)
    assert v["m"] == "2269"
    assert float(v["q"]) > float(v["threshold"])
    assert float(v["threshold"]) == pytest.approx(0.17873, abs=1e-5)


def test_bootstrap_fixture_example(capsys, tmp_path):
    fixture = tmp_path / "diag2.txt"
    fixture.write_text("10\n01\n")
    code, out, _ = run(capsys, "bootstrap", "--L", 2, "--rule", "vn4", "--theta", 2,
                       "--fixture", fixture)
    assert code == 0
    v = kv(out)
    assert v["fully_active"] == "true" and v["steps"] == "1"


def test_bootstrap_fixture_size_mismatch(capsys, tmp_path):
    fixture = tmp_path / "diag2.txt"
    fixture.write_text("10\n01\n")
    code, _, err = run(capsys, "bootstrap", "--L", 3, "--fixture", fixture)
    assert code == 1 and "does not match" in err


def test_scaling_example(capsys, tmp_path):
    out_csv = tmp_path / "scaling.csv"
    code, out, _ = run(capsys, "scaling", "--n", "1e4,1e5,1e6,1e7,1e8", "--c-radius", "4,8,16",
                       "--c-prime", "1", "--out", out_csv)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "n,c_radius,r,threshold,m_sufficient,feasible"
    assert len(lines[1:16]) == 15
    slopes = {k: float(v) for k, v in kv(out).items() if k.startswith("slope")}
    assert len(slopes) == 3 and all(abs(s - 2.5 / 3) < 0.1 for s in slopes.values())
    assert out_csv.read_text().splitlines() == lines[:16]
    meta = json.loads(out_csv.with_suffix(".slopes.json").read_text())
    assert meta["rho_mode"] == "paper_r" and len(meta["slopes"]) == 3
    png = out_csv.with_suffix(".png")
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_scaling_no_figure(capsys, tmp_path):
    out_csv = tmp_path / "s.csv"
    run(capsys, "scaling", "--n", "1e4,1e5", "--c-radius", "4", "--out", out_csv, "--no-figure")
    assert not out_csv.with_suffix(".png").exists()


def test_scaling_single_n_slope_absent(capsys):
    code, out, _ = run(capsys, "scaling", "--n", "1e4", "--c-radius", "4")
    assert code == 0 and kv(out)["slope_c_radius_4"] == "absent"


def test_occupancy(capsys):
    code, out, _ = run(capsys, "occupancy", "--n", 100, "--r", 0.2, "--tau", 0.06)
    v = kv(out)
    assert code == 0 and v["grid_cells"] == "49"
    assert float(v["probability"]) == pytest.approx(3.45497695e-9, rel=1e-8)


def test_gen_and_localize_from_nodes(capsys, tmp_path):
    nodes = tmp_path / "nodes.json"
    code, out, _ = run(capsys, "gen", "--n", 400, "--seed", 3, "--out", nodes)
    assert code == 0 and kv(out)["density"] == "400"
    trace = tmp_path / "trace.csv"
    res = tmp_path / "res.json"
    code, out, _ = run(capsys, "localize", "--nodes", nodes, "--r", 0.15, "--m", 20,
                       "--seed", 1, "--trace", trace, "--out", res)
    assert code == 0
    v = kv(out)
    assert json.loads(res.read_text())["localized_count"] == int(v["localized_count"])
    assert trace.read_text().startswith("round,newly_localized_count")
    code, out2, _ = run(capsys, "localize", "--nodes", nodes, "--r", 0.15, "--m", 20,
                        "--seed", 1, "--collinearity", "epsilon", "--eps", "0.5")
    assert code == 0 and int(kv(out2)["localized_count"]) <= int(v["localized_count"])


def test_gen_to_stdout(capsys):
    code, out, _ = run(capsys, "gen", "--n", 5, "--seed", 2)
    obj = json.loads(out)
    assert code == 0 and set(obj) == {"density", "seed", "points"}


def test_localize_monte_carlo_echoes_config(capsys, tmp_path):
    out_csv = tmp_path / "loc.csv"
    code, out, _ = run(capsys, "localize", "--n", 300, "--r", 0.15, "--m", 12, "--trials", 5,
                       "--seed", 4, "--workers", 1, "--out", out_csv, "--format", "csv")
    v = kv(out)
    assert code == 0
    assert v["kind"] == "localization" and v["seed"] == "4" and v["metric"] == "torus"
    assert v["trials"] == "5"
    assert len(out_csv.read_text().splitlines()) == 7


def test_critical_writes_curve_and_figure(capsys, tmp_path):
    out_csv = tmp_path / "crit.csv"
    code, out, _ = run(capsys, "critical", "--L", 16, "--trials", 30, "--seed", 2,
                       "--workers", 1, "--out", out_csv, "--format", "csv")
    v = kv(out)
    assert code == 0 and 0 < float(v["p_hat"]) < 1
    assert out_csv.read_text().startswith("p,trials,successes,wilson_low,wilson_high")
    assert out_csv.with_suffix(".png").stat().st_size > 1000


def test_coupling_and_min_anchors(capsys):
    code, out, _ = run(capsys, "coupling", "--n", 2000, "--r", 0.15, "--m", 100, "--trials", 5,
                       "--workers", 1)
    assert code == 0 and kv(out)["violations"] == "0"
    code, out, _ = run(capsys, "min-anchors", "--n", 200, "--r", 0.2, "--trials", 20,
                       "--workers", 1)
    v = kv(out)
    assert code == 0 and "m_hat" in v


def test_min_anchors_not_achievable(capsys):
    code, out, _ = run(capsys, "min-anchors", "--n", 30, "--r", 1e-4, "--trials", 10,
                       "--workers", 1)
    assert code == 0 and kv(out)["m_hat"] == "not achievable at this (n, r)"


def test_coupling_violation_exit_code(capsys, monkeypatch):
    from bootloc import harness

    real = harness._trial_coupling

    def broken(p, index, seed):
        rec = real(p, index, seed)
        rec["violation"] = index == 1
        return rec

    monkeypatch.setitem(harness._TRIALS, "coupling", broken)
    code, out, err = run(capsys, "coupling", "--n", 500, "--r", 0.2, "--m", 50, "--trials", 3,
                         "--workers", 1, "--seed", 9)
    from bootloc.seeding import split_seed
    assert code == 2 and f"seed={split_seed(9, 1)}" in err


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["localize", "--r", "0.1", "--n", "100"],
    ["localize", "--r", "abc", "--n", "100", "--m", "3"],
    ["localize", "--r", "0.1", "--n", "100", "--m", "2.5"],
    ["bootstrap", "--L", "4", "--p", "1.5"],
    ["bootstrap", "--L", "4", "--p", "0.5", "--rule", "hex"],
    ["sufficient-m", "--n", "1e4", "--r", "1.0"],
    ["sufficient-m", "--n", "1e4"],
    ["coupling", "--n", "100", "--r", "0.2", "--m", "3", "--tau", "0.5"],
    ["gen", "--n", "100", "--seed", "-1"],
    ["gen", "--n", "100", "--bogus", "1"],
    [],
])
def test_invalid_input_exit_1(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1 and err


def test_unwritable_out_exit_1(capsys, tmp_path):
    code, _, err = run(capsys, "bootstrap", "--L", 4, "--p", 0.5,
                       "--out", tmp_path / "no" / "dir.json", "--workers", 1)
    assert code == 1 and "no" in err


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep settings\nn = 1e6\nc_radius=2\nrho=paper_r\n")
    code, out, _ = run(capsys, "sufficient-m", "--config", cfg)
    assert code == 0 and kv(out)["m"] == "2269"
    code, out, _ = run(capsys, "sufficient-m", "--config", cfg, "--c-prime", "0")
    assert kv(out)["m"] == "1"
    cfg.write_text("n=1e6\nwidth=3\n")
    code, _, err = run(capsys, "sufficient-m", "--config", cfg)
    assert code == 1 and "width" in err
    cfg.write_text("n 1e6\n")
    assert run(capsys, "sufficient-m", "--config", cfg)[0] == 1
    assert run(capsys, "sufficient-m", "--config", tmp_path / "none.cfg")[0] == 1


def test_seeded_output_repeatable(capsys):
    argv = ["bootstrap", "--L", 32, "--p", 0.06, "--trials", 6, "--seed", 11, "--workers", 1]
    first = run(capsys, *argv)[1]
    assert first == run(capsys, *argv)[1]


def test_help_mentions_units_and_defaults(capsys):
    for name in cli.COMMANDS:
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args([name, "--help"])
        text = capsys.readouterr().out
        assert "--config" in text
        if "--trials" in text:
            assert "default" in text
        if "--r " in text or "--r R" in text:
            assert "unit-square lengths" in text


def _help_text(name):
    os.environ["COLUMNS"] = "100"
    parser = cli.build_parser()
    args = [name, "--help"] if name != "bootloc" else ["--help"]
    import contextlib
    import io
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf), pytest.raises(SystemExit):
        parser.parse_args(args)
    return buf.getvalue()


@pytest.mark.parametrize("name", ["bootloc", *cli.COMMANDS])
def test_help_snapshot(name, monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    text = _help_text(name)
    snap = SNAPSHOTS / f"help_{name}.txt"
    if os.environ.get("BOOTLOC_UPDATE_SNAPSHOTS"):
        snap.parent.mkdir(exist_ok=True)
        snap.write_text(text)
    assert text == snap.read_text()


def test_module_entry_point():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-m", "bootloc", "occupancy", "--n", "1e4", "--r",
                          "0.2", "--tau", "0.06"], capture_output=True, text=True, check=True)
    assert "probability=1" in out.stdout
