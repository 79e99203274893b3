import json
import subprocess
import sys
import warnings

import numpy as np
import pytest

from _families import scaling_bumps
from soblab.cli import main
from soblab.grids import build_sphere_model, write_function


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def report(text):
    body = json.loads(text)
    return body["report"]


def test_constants(capsys):
    code, out, _ = run(capsys, "constants", "--N", "3")
    assert code == 0
    rep = report(out)
    assert rep["eucl"] == pytest.approx(rep["eucl_2"], rel=1e-12)


def test_model_and_spectral_gap(capsys):
    code, out, _ = run(capsys, "spectral-gap", "--N", "3", "--nodes", "1024")
    assert code == 0
    assert report(out)["lambda"] == pytest.approx(3, rel=1e-3)
    code, out, _ = run(capsys, "model", "--N", "3", "--nodes", "64")
    assert code == 0


def test_input_errors_exit_2(capsys):
    assert run(capsys, "constants", "--N", "-1")[0] == 2
    assert run(capsys, "aopt", "--N", "4", "--q", "5", "--nodes", "128")[0] == 2
    assert run(capsys, "sweep", "--quantity", "eucl")[0] == 2
    assert run(capsys, "sweep", "--quantity", "eucl", "--range", "N=3:2:0.5")[0] == 2
    assert run(capsys, "no-such-command")[0] == 2
    assert run(capsys, "quotient", "--input", "missing.csv", "--q", "3")[0] == 2


def test_aopt_and_sweep_csv(capsys):
    code, out, _ = run(capsys, "aopt", "--N", "4", "--nodes", "256", "--q", "3", "--restarts", "1", "--max-iter", "500")
    assert code == 0
    assert 0.2 < report(out)["value"] <= 0.2503
    code, out, _ = run(capsys, "sweep", "--quantity", "eucl", "--range", "N=3:5:1", "--csv")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("# ")
    assert len(lines) == 4


def test_tight_check_writes_witness(capsys, tmp_path):
    w = tmp_path / "w.csv"
    code, out, _ = run(capsys, "tight-check", "--N", "4", "--nodes", "256", "--q", "4", "--A", "0.45", "--trials", "20", "--witness", str(w))
    assert code == 1
    assert w.exists() and w.read_text().startswith("node,value")
    code, _, _ = run(capsys, "tight-check", "--N", "4", "--nodes", "256", "--q", "4", "--A", "0.6", "--trials", "20", "--witness", str(w))
    assert code == 0


def test_quotient_and_rearrange_from_file(capsys, tmp_path):
    g = build_sphere_model(3, 256)
    path = tmp_path / "u.csv"
    write_function(g.evaluate(lambda t: 1 + np.cos(t) ** 2), path)
    code, out, _ = run(capsys, "quotient", "--N", "3", "--nodes", "256", "--input", str(path), "--q", "3")
    assert code == 0 and report(out)["value"] > 0
    code, out, _ = run(capsys, "rearrange", "--N", "3", "--nodes", "256", "--input", str(path))
    assert code == 0


def test_bliss_alpha_and_linearize(capsys):
    code, out, _ = run(capsys, "bliss", "--nodes", "20000")
    assert code == 0
    code, out, _ = run(capsys, "alpha-p", "--min-theta", "inf", "--N", "3")
    assert code == 0 and report(out)["alpha_p"] == 0.0
    code, out, _ = run(capsys, "linearize", "--N", "4", "--nodes", "1024")
    assert code == 0


def test_geometry_commands(capsys):
    code, out, _ = run(capsys, "density", "--N", "3", "--nodes", "2048")
    assert code == 0
    code, out, _ = run(capsys, "avr", "--N", "3", "--nodes", "2000", "--R-max", "50")
    assert code == 0 and report(out)["avr"] == pytest.approx(1.0, rel=1e-8)
    code, out, _ = run(capsys, "isop", "--model", "cone", "--N", "3", "--nodes", "500", "--R-max", "5")
    assert code == 0
    code, out, _ = run(capsys, "brunn-minkowski", "--N", "3", "--nodes", "512", "--K", "2", "--pairs", "20")
    assert code == 0
    code, out, _ = run(capsys, "local-sobolev", "--N", "3", "--nodes", "2000", "--R-max", "4", "--trials", "20")
    assert code == 0


def test_density_on_mms(capsys, tmp_path):
    path = tmp_path / "mms.json"
    path.write_text(json.dumps({"n": 4, "edges": [[0, 1, 1], [1, 2, 1], [2, 3, 1]], "mass": [1, 1, 1, 1]}))
    code, out, _ = run(capsys, "density", "--mms", str(path), "--N", "2", "--x", "0", "--r-min", "0.5", "--r-max", "3.5")
    assert code == 0


def test_concentration_scan(capsys, tmp_path):
    g = build_sphere_model(4, 512)
    names = []
    for k, u in enumerate(scaling_bumps(g, 4)):
        name = f"u{k}.csv"
        write_function(u, tmp_path / name)
        names.append(name)
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"grid": {"model": "sphere", "N": 4, "nodes": 512}, "functions": names, "q": 4}))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        code, out, _ = run(capsys, "concentration-scan", "--manifest", str(manifest))
    assert code == 0 and report(out)["classification"] == "Concentration"


def test_yamabe_commands(capsys, tmp_path):
    code, out, _ = run(capsys, "yamabe", "--N", "4", "--nodes", "512", "--s0", "1", "--restarts", "2", "--min-theta", str(1 / (8 * np.pi**2 / 3)))
    assert code == 0 and report(out)["lambda_estimate"] == pytest.approx(1.0, abs=1e-8)
    manifest = tmp_path / "fam.json"
    manifest.write_text(json.dumps({"N": 4, "members": [{"model": "sphere", "nodes": n, "s0": 1.0} for n in (128, 256)]}))
    code, out, _ = run(capsys, "yamabe", "--family", str(manifest), "--restarts", "1")
    assert code == 0 and report(out)["max_jump"] < 1e-8


def test_output_file(capsys, tmp_path):
    path = tmp_path / "r.json"
    code, out, _ = run(capsys, "constants", "--N", "4", "-o", str(path))
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["command"] == "constants"


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "soblab.cli", "constants", "--N", "3"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["command"] == "constants"
