import csv
import json

import numpy as np
import pytest

from spinboson.cli import davies_main, lab_main, parse_density, vanhove_main

MODEL = """\
[system]
eigenvalues = [0.0, 1.0]
[coupling]
matrix = [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]
[density]
kind = "analytic"
gamma = 1.0
[dynamics]
lambda = 0.2
"""


def test_davies_build_and_spectrum(tmp_path, capsys):
    (tmp_path / "m.toml").write_text(MODEL)
    out = tmp_path / "gen.json"
    assert davies_main(["build", "--model", str(tmp_path / "m.toml"), "--out", str(out)]) == 0
    assert out.exists()
    capsys.readouterr()
    assert davies_main(["spectrum", str(out)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["simple_zero"] and rep["gap"] > 0
    assert abs(complex(*rep["leading"])) < 1e-12


def test_parse_density_forms(tmp_path):
    d = parse_density("gamma=2,omega_c=0.5")
    assert d.gamma == 2 and d.omega_c == 0.5
    w = np.linspace(0, 5, 11)
    np.savetxt(tmp_path / "j.csv", np.c_[w, w * np.exp(-w)], delimiter=",")
    tab = parse_density(str(tmp_path / "j.csv"))
    assert tab(1.0) == pytest.approx(np.exp(-1.0))
    (tmp_path / "m.toml").write_text(MODEL)
    assert parse_density(str(tmp_path / "m.toml")).gamma == 1.0


def test_vanhove_scan(tmp_path):
    out = tmp_path / "scan.csv"
    assert vanhove_main(["scan", "--density", "gamma=1", "--kappa", "0.1", "--tmax", "10",
                         "--n", "6", "--weyl-amplitude", "0.3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6
    t = float(rows[-1]["t"])
    assert float(rows[-1]["mean_N"]) == pytest.approx(np.log1p(t ** 2), rel=1e-8)


def test_lab_run_exit_code(tmp_path, capsys):
    (tmp_path / "m.toml").write_text(MODEL.replace("gamma = 1.0", "gamma = 2.0"))
    (tmp_path / "exp.toml").write_text(
        'experiment = "photon_bound"\nmodel = "m.toml"\ntimes = [1.0]\nkappas = [0.0]\n'
        '[fock]\nK = 6\nN_max = 4\n')
    assert lab_main(["run", "--config", str(tmp_path / "exp.toml"),
                     "--out", str(tmp_path / "res")]) == 0
    assert (tmp_path / "res" / "photon_bound.csv").exists()
    # an under-resolved Fock space trips the cutoff diagnostic
    (tmp_path / "bad.toml").write_text(
        'experiment = "photon_bound"\nmodel = "m.toml"\nlambdas = [1.0]\ntimes = [5.0]\n'
        '[fock]\nK = 6\nN_max = 1\n')
    assert lab_main(["run", "--config", str(tmp_path / "bad.toml"),
                     "--out", str(tmp_path / "res")]) == 1
    assert "flagged" in capsys.readouterr().out
