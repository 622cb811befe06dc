import json

import numpy as np
import pytest

from calibnet.cli import build_parser, run
from calibnet.competitors import PerturbationSpec, perturb
from calibnet.fixtures import symmetric_junction


def _read(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["fixtures", "junction", "-o", str(d / "j.json")]) == 0
    assert run(["calibration", "build", str(d / "j.json"), "-o", str(d / "f.json")]) == 0
    return d


def test_every_subcommand_has_help(capsys):
    ap = build_parser()
    sub = ap._subparsers._group_actions[0].choices
    for name, parser in sub.items():
        inner = [a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction"]
        leaves = inner[0].choices.values() if inner else [parser]
        for leaf in leaves:
            assert leaf.format_help().startswith("usage:")
    assert run(["probe", "--help"]) == 0


def test_unknown_flag_is_an_error(workdir):
    assert run(["partition", "validate", str(workdir / "j.json"), "--nope"]) == 2
    assert run(["bogus"]) == 2


def test_missing_and_malformed_input(tmp_path, capsys):
    assert run(["partition", "validate", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["partition", "validate", str(bad)]) == 2
    bad.write_text(json.dumps({"domain": {"center": [0, 0], "radius": 1}}))
    assert run(["partition", "validate", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_tensions_check(tmp_path):
    good = tmp_path / "t.json"
    good.write_text(json.dumps({"P": 3, "sigma": [[0, 1, 1], [1, 0, 1], [1, 1, 0]]}))
    assert run(["tensions", "check", str(good), "-o", str(tmp_path / "o.json")]) == 0
    out = _read(tmp_path / "o.json")
    assert out["admissible"] and len(out["points"]) == 3
    bad = tmp_path / "d.json"
    bad.write_text(json.dumps({"P": 3, "sigma": [[0, 1, 1], [1, 0, 2], [1, 2, 0]]}))
    assert run(["tensions", "check", str(bad), "-o", str(tmp_path / "o.json")]) == 1
    assert not _read(tmp_path / "o.json")["admissible"]


def test_hexagon_fixture_validates(tmp_path):
    assert run(["fixtures", "hexagon", "--rho", "0.6", "-o", str(tmp_path / "h.json")]) == 0
    assert run(["partition", "validate", str(tmp_path / "h.json"), "-o", str(tmp_path / "v.json")]) == 0
    assert _read(tmp_path / "v.json")["valid"]
    assert run(["fixtures", "hexagon", "--rho", "3"]) == 2


def test_invalid_partition_exit_one(tmp_path):
    assert run(["fixtures", "junction", "--angles", "0,90,225", "-o", str(tmp_path / "s.json")]) == 0
    assert run(["partition", "validate", str(tmp_path / "s.json"), "-o", str(tmp_path / "v.json")]) == 1
    assert run(["calibration", "build", str(tmp_path / "s.json")]) == 2


def test_scales_and_plots(workdir):
    assert run(["partition", "scales", str(workdir / "j.json"), "--audit", "200", "-o", str(workdir / "s.json")]) == 0
    assert _read(workdir / "s.json")["scales"]["r_bar"] == pytest.approx(0.225)
    assert run(["partition", "plot", str(workdir / "j.json"), "-o", str(workdir / "j.svg")]) == 0
    assert run(["calibration", "plot", str(workdir / "f.json"), "--grid", "15", "-o", str(workdir / "f.svg")]) == 0
    for name in ("j.svg", "f.svg"):
        text = (workdir / name).read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")


def test_verify_passes_and_fault_fails(workdir):
    assert run(["calibration", "verify", str(workdir / "f.json"), "--kappa", "0.1,0.05",
                "-o", str(workdir / "v.json")]) == 0
    assert _read(workdir / "v.json")["status"] == "PASSED"
    assert run(["calibration", "build", str(workdir / "j.json"), "--fault-phase", "2", "--fault-vector", "0.4,0.1",
                "-o", str(workdir / "ff.json")]) == 0
    assert run(["calibration", "verify", str(workdir / "ff.json"), "--n-outside", "2000",
                "-o", str(workdir / "fv.json")]) == 1
    rep = _read(workdir / "fv.json")
    assert rep["status"] == "FAILED" and len(rep["failures"][0]["point"]) == 2


def test_energy_commands(workdir):
    q = perturb(symmetric_junction(), PerturbationSpec(0.02, "interface-bump", 1, 3, 0))
    (workdir / "q.json").write_text(json.dumps(q.to_json()))
    args = [str(workdir / "q.json"), "--reference", str(workdir / "j.json"), "--field", str(workdir / "f.json")]
    assert run(["energy", "eval", *args, "-o", str(workdir / "e.json")]) == 0
    e = _read(workdir / "e.json")
    assert e["E_competitor_physical"] > e["E_reference_physical"]
    assert run(["energy", "identity", *args, "--tol", "1e-3", "-o", str(workdir / "i.json")]) == 0
    i = _read(workdir / "i.json")
    assert i["status"] == "PASSED" and abs(i["breakdown"]["lhs"] - i["breakdown"]["rhs"]) <= 1e-3
    assert run(["energy", "identity", *args, "--tol", "1e-30", "-o", str(workdir / "i.json")]) in (0, 1)
    # a competitor with a different boundary trace is an input error
    p = symmetric_junction()
    V = np.array(p.vertices)
    V[1] = [np.cos(1.7), np.sin(1.7)]
    moved = dict(p.to_json(), vertices=V.tolist())
    (workdir / "m.json").write_text(json.dumps(moved))
    assert run(["energy", "eval", str(workdir / "m.json"), "--reference", str(workdir / "j.json")]) == 2


def test_stationarity_commands(tmp_path):
    assert run(["fixtures", "cross", "-o", str(tmp_path / "c.json")]) == 0
    assert run(["stationarity", "classify", str(tmp_path / "c.json"), "--r", "0.1", "-o", str(tmp_path / "k.json")]) == 1
    pts = _read(tmp_path / "k.json")["points"]
    assert pts[0]["label"] == "NON_STATIONARY"
    assert run(["stationarity", "el-residual", str(tmp_path / "c.json"), "-o", str(tmp_path / "el.json")]) == 0
    assert run(["fixtures", "junction", "-o", str(tmp_path / "j.json")]) == 0
    assert run(["stationarity", "classify", str(tmp_path / "j.json"), "-o", str(tmp_path / "k.json")]) == 0
    assert run(["stationarity", "el-residual", str(tmp_path / "j.json"), "--eta", "builtin:bump-x"]) == 0
    assert run(["stationarity", "el-residual", str(tmp_path / "j.json"), "--eta", "builtin:nope"]) == 2
    assert run(["stationarity", "monotonicity", str(tmp_path / "j.json"), "--center", "0,0",
                "--radii", "0.1..0.9:9", "-o", str(tmp_path / "m.json")]) == 0
    assert len(_read(tmp_path / "m.json")["profile"]) == 9
    assert run(["fixtures", "junction", "--angles", "0,90,225", "-o", str(tmp_path / "s.json")]) == 0
    assert run(["stationarity", "el-residual", str(tmp_path / "s.json")]) == 1


def test_star_fixture(tmp_path):
    assert run(["fixtures", "star", "--angles", "0,120,240", "--phases", "1,2,3", "-o", str(tmp_path / "s.json")]) == 0
    assert run(["partition", "validate", str(tmp_path / "s.json")]) == 0
    assert run(["fixtures", "star", "--angles", "0,120", "--phases", "1,2,3"]) == 2


def test_probe_and_threads_env(workdir, monkeypatch):
    out1, out2 = workdir / "p1.json", workdir / "p2.json"
    assert run(["probe", str(workdir / "j.json"), "--field", str(workdir / "f.json"), "--trials", "8",
                "--seed", "3", "-o", str(out1)]) == 0
    monkeypatch.setenv("CALIBNET_THREADS", "3")
    assert run(["probe", str(workdir / "j.json"), "--field", str(workdir / "f.json"), "--trials", "8",
                "--seed", "3", "-o", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    monkeypatch.setenv("CALIBNET_THREADS", "many")
    assert run(["probe", str(workdir / "j.json"), "--trials", "1"]) == 2


def test_probe_violation_exit_one(tmp_path, workdir):
    assert run(["fixtures", "junction", "--angles", "0,90,225", "-o", str(tmp_path / "s.json")]) == 0
    # no field can be built on an unbalanced junction
    assert run(["probe", str(tmp_path / "s.json"), "--trials", "4"]) == 2
    # borrowing the balanced junction's field only sets the amplitude scale; slides now lower the length
    assert run(["probe", str(tmp_path / "s.json"), "--field", str(workdir / "f.json"), "--trials", "20",
                "--modes", "junction-slide", "--amplitude-factor", "0.2", "-o", str(tmp_path / "p.json")]) == 1
    assert _read(tmp_path / "p.json")["status"] == "VIOLATION"
