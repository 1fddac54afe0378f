import json
import math
import xml.etree.ElementTree as ET

import pytest

from currentkit.cli import main
from currentkit.currents import DiscreteCurrent, grid_complex, square_boundary


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def dump(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


def two_diracs(r):
    return DiscreteCurrent.diracs([[0.0, 0.0], [r, 0.0]], [1.0, -1.0]).to_json()


def test_algebra_mass_and_comass(tmp_path, capsys):
    v = {"d": 4, "k": 2, "coeffs": {"1,2": 1.0, "3,4": 1.0}}
    f = dump(tmp_path, "v.json", v)
    code, out, _ = run(capsys, "algebra", f, "--op", "mass")
    res = json.loads(out)
    assert code == 0
    assert res["value"] == pytest.approx(2.0, abs=1e-10)
    assert res["euclidean"] == pytest.approx(math.sqrt(2.0), abs=1e-10)
    code, out, _ = run(capsys, "algebra", f, "--op", "comass")
    assert json.loads(out)["value"] == pytest.approx(1.0, abs=1e-10)


def test_algebra_wedge_and_inner(tmp_path, capsys):
    e1 = {"d": 3, "k": 1, "coeffs": {"1": 1.0}}
    e2 = {"d": 3, "k": 1, "coeffs": {"2": 1.0}}
    code, out, _ = run(capsys, "algebra", dump(tmp_path, "p.json", [e1, e2]), "--op", "wedge")
    assert code == 0
    assert json.loads(out)["value"]["coeffs"] == {"1,2": 1.0}
    code, out, _ = run(capsys, "algebra", dump(tmp_path, "q.json", {"a": e1, "b": e1}), "--op", "inner")
    assert json.loads(out)["value"] == pytest.approx(1.0)


def test_flatnorm_exact_with_svg(tmp_path, capsys):
    svg = tmp_path / "dec.svg"
    code, out, _ = run(capsys, "flatnorm", dump(tmp_path, "t.json", two_diracs(0.5)),
                       "--lambda", 1.0, "--emit-svg", svg)
    res = json.loads(out)
    assert code == 0
    assert res["value"] == pytest.approx(0.5, abs=1e-12)
    assert res["lambda"] == 1.0
    assert res["primal_witness"]["B"]
    root = ET.parse(svg).getroot()
    assert root.tag.endswith("svg")


def test_flatnorm_pair_input_and_out_file(tmp_path, capsys):
    S = DiscreteCurrent.diracs([[0.0, 0.0]], [1.0]).to_json()
    T = DiscreteCurrent.diracs([[3.0, 0.0]], [1.0]).to_json()
    out_file = tmp_path / "r.json"
    code, out, _ = run(capsys, "flatnorm", dump(tmp_path, "st.json", {"S": S, "T": T}),
                       "--lambda", 0.5, "--out", out_file)
    assert code == 0 and out == ""
    assert json.loads(out_file.read_text())["value"] == pytest.approx(1.0, abs=1e-12)


def test_flatnorm_simplicial(tmp_path, capsys):
    cx = grid_complex(6, 6)
    t = square_boundary(cx, 1, 5)
    f = dump(tmp_path, "c.json", {"complex": cx.to_json(), "chain": t.to_json()})
    svg = tmp_path / "s.svg"
    code, out, _ = run(capsys, "flatnorm", f, "--mode", "simplicial", "--lambda", 1.0, "--emit-svg", svg)
    res = json.loads(out)
    assert code == 0
    assert res["value"] == pytest.approx(13 + 2 * math.sqrt(2), abs=1e-8)
    ET.parse(svg)


def test_flatnorm_dual_short(tmp_path, capsys):
    code, out, _ = run(capsys, "flatnorm", dump(tmp_path, "t.json", two_diracs(0.5)),
                       "--mode", "dual", "--steps", 50)
    res = json.loads(out)
    assert code == 0
    assert res["solver_stats"]["certified"]
    assert 0.0 <= res["value"] <= 0.5 + 1e-12


def test_stokes_check(tmp_path, capsys):
    form = {"d": 2, "k": 1, "terms": [
        {"index": "1", "monomials": [{"exps": [0, 2], "coef": 1.0}]},
        {"index": "2", "monomials": [{"exps": [3, 0], "coef": -2.0}]},
    ]}
    cx = grid_complex(3, 3, h=1 / 3)
    chain = {"complex": cx.to_json(), "chain": {"grade": 2, "coeffs": "all"}}
    code, out, _ = run(capsys, "stokes-check", dump(tmp_path, "f.json", form), dump(tmp_path, "c.json", chain))
    res = json.loads(out)
    assert code == 0
    assert res["diff"] < 1e-10


def test_stokes_grade_mismatch(tmp_path, capsys):
    form = {"d": 2, "k": 1, "terms": []}
    cx = grid_complex(1, 1)
    chain = {"complex": cx.to_json(), "chain": {"grade": 1, "coeffs": {}}}
    code, _, err = run(capsys, "stokes-check", dump(tmp_path, "f.json", form), dump(tmp_path, "c.json", chain))
    assert code == 2 and "grade" in err


def test_train2d_one_epoch_reproducible(tmp_path, capsys):
    cfg = dump(tmp_path, "cfg.json", {"snapshot_every": 1, "checkpoint_every": 1})
    outs = []
    for name in ("a", "b"):
        code, out, _ = run(capsys, "train2d", cfg, "--k", 1, "--epochs", 1, "--seed", 3,
                           "--out", tmp_path / name, "--emit-svg")
        assert code == 0
        assert "tangent_alignment=" in out
        outs.append((tmp_path / name / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]
    run_dir = tmp_path / "a"
    for rel in ("config.json", "samples/epoch_1.csv", "walk/epoch_1.csv",
                "checkpoints/epoch_1.bin", "checkpoints/epoch_1.bin.json"):
        assert (run_dir / rel).exists(), rel
    assert json.loads((run_dir / "config.json").read_text())["seed"] == 3
    ET.parse(run_dir / "svg" / "epoch_1.svg")


def test_bad_json_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    code, _, err = run(capsys, "flatnorm", p)
    assert code == 2 and "cannot read" in err


def test_missing_file_exits_2(tmp_path, capsys):
    code, _, _ = run(capsys, "algebra", tmp_path / "nope.json", "--op", "mass")
    assert code == 2


def test_invalid_current_exits_2(tmp_path, capsys):
    bad = {"d": 2, "k": 0, "atoms": [{"x": [0.0], "w": 1.0, "frame": []}]}
    code, _, err = run(capsys, "flatnorm", dump(tmp_path, "b.json", bad))
    assert code == 2 and "invalid" in err


def test_exact_mode_on_1_current_exits_2(tmp_path, capsys):
    T = DiscreteCurrent([[0.0, 0.0]], [1.0], [[[1.0], [0.0]]]).to_json()
    code, _, err = run(capsys, "flatnorm", dump(tmp_path, "t.json", T))
    assert code == 2 and "0-current" in err


def test_comass_estimate_mode_matches_exact(tmp_path, capsys):
    w = {"d": 4, "k": 2, "coeffs": {"1,2": 0.3, "1,3": -1.1, "2,4": 0.7, "3,4": 0.2}}
    f = dump(tmp_path, "w.json", w)
    _, out, _ = run(capsys, "algebra", f, "--op", "comass")
    exact = json.loads(out)["value"]
    code, out, _ = run(capsys, "algebra", f, "--op", "comass", "--mode", "estimate", "--restarts", 64)
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(exact, abs=1e-6)


def test_unsupported_exact_mode_exits_3(tmp_path, capsys):
    v = {"d": 6, "k": 3, "coeffs": {"1,2,3": 1.0, "4,5,6": 1.0, "1,4,5": 0.5}}
    code, _, _ = run(capsys, "algebra", dump(tmp_path, "v.json", v), "--op", "mass", "--mode", "exact")
    assert code == 3


def test_unknown_config_key_exits_2(tmp_path, capsys):
    code, _, err = run(capsys, "train2d", dump(tmp_path, "c.json", {"bogus": 1}), "--out", tmp_path / "r")
    assert code == 2


def test_threads_env_validated(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CURRENTKIT_THREADS", "many")
    code, _, err = run(capsys, "flatnorm", dump(tmp_path, "t.json", two_diracs(0.5)))
    assert code == 2 and "CURRENTKIT_THREADS" in err
