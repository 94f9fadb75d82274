"""CLI contract: schemas, exit codes, reproducibility, config round trip."""

import json

import numpy as np
import pytest

from metrodiff.cli import main
from metrodiff.config import load_config, parse_config


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


BASE = {
    "model": "arcsine",
    "scheme": "mh",
    "x0": 0.5,
    "T": 1.0,
    "h": [0.25, 0.125, 0.0625, 0.03125],
    "M": 4000,
    "f": ["x", "x**2"],
    "reference": {"type": "exact"},
    "base_seed": 321,
    "min_error_snr": 0.0,
}


def read_csv(path):
    rows = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    header = rows[0].split(",")
    return header, [r.split(",") for r in rows[1:]]


def test_models_list(capsys):
    assert main(["models", "--list"]) == 0
    out = capsys.readouterr().out
    for label in ("arcsine", "sine-diffusion", "gbm", "piecewise"):
        assert label in out


def test_convergence_run_and_schema(tmp_path):
    cfg = write_config(tmp_path, BASE)
    assert main(["convergence", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 0
    header, rows = read_csv(tmp_path / "out" / "convergence.csv")
    assert header == ["scheme", "f", "h", "mean", "stderr", "reference",
                      "error"]
    assert len(rows) == 8  # 2 f's x 4 h's
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert "mh" in report["fits"] and "x" in report["fits"]["mh"]
    assert report["seed"] == 321
    # h column is sorted descending within each f block
    hs = [float(r[2]) for r in rows[:4]]
    assert hs == sorted(hs, reverse=True)


def test_byte_identical_reruns(tmp_path):
    cfg = write_config(tmp_path, BASE)
    main(["convergence", "--config", cfg, "--out", str(tmp_path / "a"),
          "--threads", "1"])
    main(["convergence", "--config", cfg, "--out", str(tmp_path / "b"),
          "--threads", "3"])
    assert (tmp_path / "a" / "convergence.csv").read_bytes() == \
        (tmp_path / "b" / "convergence.csv").read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path, BASE)
    main(["convergence", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["convergence", "--config", cfg, "--out", str(tmp_path / "c"),
          "--seed", "999"])
    assert (tmp_path / "a" / "convergence.csv").read_bytes() != \
        (tmp_path / "c" / "convergence.csv").read_bytes()
    report = json.loads((tmp_path / "c" / "report.json").read_text())
    assert report["seed"] == 999 and report["config"]["base_seed"] == 999


def test_config_round_trip(tmp_path):
    cfg = write_config(tmp_path, BASE)
    main(["convergence", "--config", cfg, "--out", str(tmp_path / "out")])
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    again = parse_config(report["config"])
    original = load_config(cfg)
    assert again.model.label == original.model.label
    assert again.h_list == original.h_list
    assert again.base_seed == original.base_seed
    assert again.f_labels == original.f_labels


def test_non_dividing_h_is_config_error(tmp_path):
    bad = dict(BASE, h=[0.3])
    cfg = write_config(tmp_path, bad)
    assert main(["convergence", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 2


def test_unknown_model_is_config_error(tmp_path):
    cfg = write_config(tmp_path, dict(BASE, model="warp-drive"))
    assert main(["convergence", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 2


def test_malformed_json_is_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["convergence", "--config", str(path), "--out",
                 str(tmp_path / "out")]) == 2


def test_runtime_failure_exits_3(tmp_path):
    # EM from near the arcsine boundary at a huge step exits the domain
    bad = dict(BASE, scheme="em", x0=0.999, h=[0.5, 0.25, 0.125],
               reference={"type": "self"})
    cfg = write_config(tmp_path, bad)
    assert main(["convergence", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 3


def test_self_reference_run(tmp_path):
    cfg = write_config(tmp_path, dict(
        BASE, model="sine-diffusion", x0=0.0, scheme="both",
        reference={"type": "self"}, M=2000))
    assert main(["convergence", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 0
    header, rows = read_csv(tmp_path / "out" / "convergence.csv")
    assert {r[0] for r in rows} == {"mh", "em"}


def test_simulate_run(tmp_path):
    cfg = write_config(tmp_path, BASE)
    assert main(["simulate", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 0
    header, rows = read_csv(tmp_path / "out" / "means.csv")
    assert header == ["scheme", "f", "h", "mean", "stderr"]
    assert len(rows) == 8


def test_equilibrium_run_and_schema(tmp_path):
    cfg = write_config(tmp_path, dict(
        BASE, equilibrium={"T": 20.0, "h": [0.01], "bins": 20,
                           "range": [-1, 1]}))
    assert main(["equilibrium", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 0
    files = list((tmp_path / "out").glob("equilibrium_*.csv"))
    assert len(files) == 1
    header, rows = read_csv(files[0])
    assert header == ["x_left", "x_right", "density", "density_se", "Deff",
                      "Deff_se"]
    assert len(rows) == 20
    dens = np.array([float(r[2]) for r in rows])
    widths = np.array([float(r[1]) - float(r[0]) for r in rows])
    assert np.sum(dens * widths) == pytest.approx(1.0, abs=1e-9)


def test_fpe_run_and_schema(tmp_path):
    cfg = write_config(tmp_path, dict(
        BASE, model="piecewise", x0=0.0, reference={"type": "self"},
        fpe={"n_cells": 128, "dt": 1e-3, "T": 1.0}))
    assert main(["fpe", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    header, rows = read_csv(tmp_path / "out" / "fpe.csv")
    assert header == ["x_center", "rho"]
    assert len(rows) == 128
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["mass"] == pytest.approx(1.0, rel=1e-9)
    assert "x" in report["expectations"]


def test_fpe_uniform_ic_unchanged(tmp_path):
    cfg = write_config(tmp_path, dict(
        BASE, model="piecewise", x0=0.0, reference={"type": "self"},
        fpe={"n_cells": 64, "dt": 1e-3, "T": 0.5,
             "ic": {"type": "uniform"}}))
    assert main(["fpe", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    _, rows = read_csv(tmp_path / "out" / "fpe.csv")
    assert all(float(r[1]) == pytest.approx(0.5, abs=1e-12) for r in rows)


def test_inline_model_config(tmp_path):
    cfg = write_config(tmp_path, dict(
        BASE,
        model={"label": "bump", "D": "1 + x**2 / 2",
               "ln_rho_eq": "-x**2 / 2", "support": [None, None]},
        x0=0.0, reference={"type": "self"}, M=2000, h=[0.25, 0.125, 0.0625]))
    assert main(["convergence", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 0


def test_missing_equilibrium_section(tmp_path):
    cfg = write_config(tmp_path, BASE)
    assert main(["equilibrium", "--config", cfg, "--out",
                 str(tmp_path / "out")]) == 2
