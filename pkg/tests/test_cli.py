"""Command-line interface: subcommands, exit codes, artifacts."""

import json
import os

import numpy as np
import pytest

from cellopt import cli
from cellopt.kernel import PeriodicKernel


def write_config(tmp_path, **overrides):
    body = {
        "geometry": {"kind": "sphere", "params": {"radius": 0.3}},
        "target": [[0.9, 0, 0], [0, 0.9, 0], [0, 0, 0.9]],
        "bem": {"level": 2, "degree": 2, "geometry_degree": [3, 3],
                "far_orders": [], "near_order": 4, "singular_order": 4,
                "smooth_order": 4},
        "kernel": {"N": 4, "cache": "kern.json"},
        "output": {"vtk": True, "csv": "convergence.csv"},
    }
    body.update(overrides)
    path = tmp_path / "conf.json"
    path.write_text(json.dumps(body))
    return str(path)


@pytest.fixture(scope="module")
def cached_kernel_dir(tmp_path_factory, kernel4):
    d = tmp_path_factory.mktemp("kern")
    kernel4.save(os.path.join(d, "kern.json"))
    return d


def test_kernel_fit_command(tmp_path, capsys):
    rc = cli.main(["kernel-fit", "--degree", "4", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "residual" in out
    path = tmp_path / "kernel_deg4.json"
    assert path.exists()
    kern = PeriodicKernel.load(str(path))
    assert kern.degree == 4


def test_tensor_command(tmp_path, cached_kernel_dir, capsys):
    conf = write_config(tmp_path)
    rc = cli.main(["tensor", "--config", conf,
                   "--out", str(cached_kernel_dir)])
    assert rc == 0
    tensor = np.array(json.loads(capsys.readouterr().out))
    assert tensor.shape == (3, 3)
    assert np.abs(np.diag(tensor) - 0.838).max() < 0.01


def test_missing_kernel_cache_exit_code(tmp_path, capsys):
    conf = write_config(tmp_path)
    rc = cli.main(["tensor", "--config", conf, "--out", str(tmp_path)])
    assert rc == 3
    assert "kernel cache" in capsys.readouterr().err


def test_fit_kernel_if_missing(tmp_path, capsys):
    conf = write_config(tmp_path)
    rc = cli.main(["tensor", "--config", conf, "--out", str(tmp_path),
                   "--fit-kernel-if-missing"])
    assert rc == 0
    assert (tmp_path / "kern.json").exists()


def test_invalid_config_exit_code(tmp_path, capsys):
    path = tmp_path / "conf.json"
    path.write_text('{"geometry": {}, "target": "wrong"}')
    rc = cli.main(["tensor", "--config", path.as_posix(),
                   "--out", str(tmp_path)])
    assert rc == 1


def test_bad_geometry_exit_code(tmp_path, cached_kernel_dir):
    conf = write_config(
        tmp_path, geometry={"kind": "sphere", "params": {"radius": 0.7}})
    rc = cli.main(["tensor", "--config", conf,
                   "--out", str(cached_kernel_dir)])
    assert rc == 1


def test_geometry_gen_command(tmp_path):
    conf = write_config(tmp_path)
    rc = cli.main(["geometry-gen", "--config", conf, "--out", str(tmp_path)])
    assert rc == 0
    body = json.loads((tmp_path / "geometry.json").read_text())
    assert body["format"] == "multipatch-surface"
    assert len(body["patches"]) == 6


def test_geometry_file_config_round_trip(tmp_path, cached_kernel_dir,
                                         capsys):
    conf = write_config(tmp_path)
    assert cli.main(["geometry-gen", "--config", conf,
                     "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    conf2 = write_config(tmp_path, geometry={"file": "geometry.json"})
    rc = cli.main(["tensor", "--config", conf2,
                   "--out", str(cached_kernel_dir)])
    assert rc == 0
    tensor = np.array(json.loads(capsys.readouterr().out))
    assert np.abs(np.diag(tensor) - 0.838).max() < 0.01


def test_optimize_command_artifacts(tmp_path, capsys):
    conf = write_config(tmp_path, basis={"p": 12, "ell": 1.0, "tol": 1e-6})
    out = tmp_path / "run"
    rc = cli.main(["optimize", "--config", conf, "--out", str(out),
                   "--fit-kernel-if-missing"])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True
    assert summary["functional"] < 1e-5
    csv_rows = (out / "convergence.csv").read_text().splitlines()
    assert len(csv_rows) == summary["iterations"] + 2  # header + initial
    vtks = sorted(out.glob("surface_*.vtk"))
    assert len(vtks) == summary["iterations"] + 1
    assert "converged" in capsys.readouterr().out


def test_optimize_failure_exit_code(tmp_path, capsys):
    # an unreachable target within one iteration: not converged -> 2
    conf = write_config(tmp_path,
                        basis={"p": 12, "ell": 1.0, "tol": 1e-6},
                        optimizer={"j_tol": 1e-5, "max_iter": 1},
                        target=[[0.2, 0, 0], [0, 0.2, 0], [0, 0, 0.2]],
                        output={"vtk": False, "csv": "convergence.csv"})
    out = tmp_path / "run"
    rc = cli.main(["optimize", "--config", conf, "--out", str(out),
                   "--fit-kernel-if-missing"])
    assert rc == 2
