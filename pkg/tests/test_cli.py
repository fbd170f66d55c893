import json
import subprocess
import sys

import pytest

from toricext import cli


def _write_config(tmp_path, payload, name="job.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _run(tmp_path, command, payload, extra=(), name="job.json", outdir="out"):
    cfg = _write_config(tmp_path, payload, name=name)
    out = tmp_path / outdir
    rc = cli.main([command, "--config", cfg, "--out", str(out), *extra])
    report = None
    if (out / "report.json").exists():
        report = json.loads((out / "report.json").read_text())
    return rc, out, report


def test_extremal_command(tmp_path):
    rc, out, report = _run(
        tmp_path, "extremal", {"polytope": {"blowup": {"s": 5, "eps": 1, "a": 1, "b": 2}}}
    )
    assert rc == 0
    assert report["command"] == "extremal"
    assert report["results"]["A"]["grad"][0] == pytest.approx(0.0, abs=1e-12)
    assert report["results"]["A"]["grad"][1] == pytest.approx(-0.0873722531, rel=1e-8)
    assert (out / "polytope.png").exists()
    # keys are emitted in sorted order
    text = (out / "report.json").read_text()
    assert text.index('"command"') < text.index('"results"')


def test_futaki_command_asymmetric_vs_symmetric(tmp_path):
    rc, _, rep = _run(
        tmp_path,
        "futaki",
        {"polytope": {"blowup": {"s": 5, "eps": 1, "a": 1, "b": 2}}},
        outdir="a",
    )
    assert rc == 0
    assert rep["results"]["futaki_nonzero"] is True
    rc2, _, rep2 = _run(
        tmp_path,
        "futaki",
        {"polytope": {"blowup": {"s": 5, "eps": 1, "a": 1, "b": 1}}},
        name="job2.json",
        outdir="b",
    )
    assert rc2 == 0
    assert rep2["results"]["futaki_nonzero"] is False


def test_stability_command(tmp_path):
    rc, out, rep = _run(
        tmp_path,
        "stability",
        {"polytope": "unit-square", "radius": 2, "offsets": 6},
    )
    assert rc == 0
    assert rep["results"]["scan"]["verdict"] == "stable-at-tested-grid"
    assert (out / "stability_rows.csv").exists()


def test_energy_command(tmp_path):
    payload = {
        "polytope": "unit-square",
        "group": "full",
        "potentials": [
            None,
            {"perturbation": [{"exponent": [1, 1], "coeff": 0.1}]},
            {"perturbation": [{"exponent": [2, 0], "coeff": 0.05}]},
        ],
    }
    rc, out, rep = _run(tmp_path, "energy", payload)
    assert rc == 0
    rows = rep["results"]["rows"]
    assert len(rows) == 3
    assert rows[0]["calabi"] == pytest.approx(0.0, abs=1e-10)
    assert (out / "energy_rows.csv").exists()
    for margin in rep["results"]["chen_margins"]:
        assert margin > -1e-9


def test_quantize_command_small(tmp_path):
    payload = {
        "polytope": "unit-square",
        "group": "trivial",
        "ks": [2, 4],
    }
    rc, out, rep = _run(tmp_path, "quantize", payload)
    assert rc == 0
    names = set(rep["results"]["trends"])
    assert "dk_scaling" in names and "z_energy_difference" in names
    assert (out / "trends.png").exists()
    assert (out / "trend_dk_scaling.csv").exists()
    assert (out / "trend_dk_scaling.tsv").exists()


def test_balanced_command(tmp_path):
    payload = {"polytope": "interval", "k": 3, "steps": 5}
    rc, out, rep = _run(tmp_path, "balanced", payload)
    assert rc == 0
    assert rep["results"]["final_residual"] < 1e-10
    assert (out / "residuals.csv").exists()
    assert (out / "residuals.png").exists()


def test_checks_command(tmp_path):
    payload = {"suite": "chen", "pairs": 2}
    rc, out, rep = _run(tmp_path, "checks", payload)
    assert rc == 0
    assert rep["results"]["min_margin"] > -1e-6
    assert (out / "chen_margins.csv").exists()


def test_example_blowup_command(tmp_path):
    rc, out, rep = _run(tmp_path, "example-blowup", {})
    assert rc == 0
    res = rep["results"]
    assert res["futaki_nonzero"] is True
    assert res["scan"]["verdict"] == "stable-at-tested-grid"
    assert res["A"]["grad"][1] < 0


def test_invalid_polytope_exits_2(tmp_path, capsys):
    payload = {"polytope": {"blowup": {"s": 3, "eps": 1, "a": 1, "b": 2}}}
    rc, _, _ = _run(tmp_path, "extremal", payload)
    err = capsys.readouterr().err
    assert rc == 2
    line = json.loads(err.strip().splitlines()[-1])
    assert line["error"] == "InvalidTruncation"
    assert line["exit_code"] == 2


def test_unknown_polytope_name_exits_2(tmp_path, capsys):
    rc, _, _ = _run(tmp_path, "extremal", {"polytope": "dodecahedron"})
    assert rc == 2
    line = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert line["exit_code"] == 2


def test_missing_config_exits_2(tmp_path, capsys):
    rc = cli.main(
        ["extremal", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]
    )
    assert rc == 2
    capsys.readouterr()


def test_config_must_be_object(tmp_path, capsys):
    cfg = tmp_path / "job.json"
    cfg.write_text("[1, 2, 3]")
    rc = cli.main(["extremal", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    capsys.readouterr()


def test_budget_exit_code(tmp_path, capsys):
    payload = {"polytope": "unit-square", "ks": [200]}
    rc, _, _ = _run(tmp_path, "quantize", payload)
    assert rc == 4
    line = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert line["error"] == "BudgetExceeded"
    assert line["exit_code"] == 4


def test_seed_recorded(tmp_path):
    rc, _, rep = _run(
        tmp_path, "checks", {"suite": "chen", "pairs": 1}, extra=["--seed", "7"]
    )
    assert rc == 0
    assert rep["seed"] == 7


def test_rerun_is_deterministic(tmp_path):
    payload = {"polytope": {"blowup": {"s": 5, "eps": 1, "a": 1, "b": 2}}}
    rc1, out1, rep1 = _run(tmp_path, "extremal", payload, outdir="r1")
    rc2, out2, rep2 = _run(tmp_path, "extremal", payload, name="job2.json", outdir="r2")
    assert rc1 == rc2 == 0
    rep1.pop("wall_time_s")
    rep2.pop("wall_time_s")
    assert rep1 == rep2
    assert (out1 / "polytope.png").read_bytes() == (out2 / "polytope.png").read_bytes()


def test_console_entry_point(tmp_path):
    cfg = tmp_path / "job.json"
    cfg.write_text(json.dumps({"polytope": "simplex"}))
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "toricext.cli", "extremal", "--config", str(cfg), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert (out / "report.json").exists()
