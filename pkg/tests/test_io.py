"""Config parsing, geometry files, VTK export, convergence log."""

import json

import numpy as np
import pytest

from cellopt import io as cio
from cellopt.errors import ParameterError
from cellopt.geometry import (PolynomialSurface, generate_primitive,
                              refine_to_level)


def write_config(tmp_path, body):
    path = tmp_path / "conf.json"
    path.write_text(json.dumps(body))
    return str(path)


BASE = {
    "geometry": {"kind": "sphere", "params": {"radius": 0.3}},
    "target": [[0.9, 0, 0], [0, 0.9, 0], [0, 0, 0.9]],
}


def test_fmt_has_twelve_significant_digits():
    s = cio.fmt(np.pi)
    assert s == "3.14159265359e+00"
    assert cio.fmt(-1.0 / 3.0e7) == "-3.33333333333e-08"


def test_config_defaults_filled(tmp_path):
    conf = cio.load_config(write_config(tmp_path, BASE))
    assert conf["basis"]["p"] == 16
    assert conf["bem"]["level"] == 3
    assert conf["optimizer"]["j_tol"] == 1e-5
    assert conf["kernel"]["N"] == 12
    assert conf["output"]["vtk"] is True
    assert conf["target"].shape == (3, 3)


def test_config_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ParameterError):
        cio.load_config(str(path))


def test_config_rejects_unknown_keys(tmp_path):
    body = dict(BASE)
    body["surprise"] = 1
    with pytest.raises(ParameterError):
        cio.load_config(write_config(tmp_path, body))


def test_config_rejects_asymmetric_target(tmp_path):
    body = dict(BASE)
    body["target"] = [[0.9, 0.1, 0], [0, 0.9, 0], [0, 0, 0.9]]
    with pytest.raises(ParameterError):
        cio.load_config(write_config(tmp_path, body))


def test_config_requires_exactly_one_geometry_source(tmp_path):
    body = dict(BASE)
    body["geometry"] = {"kind": "sphere", "file": "geo.json"}
    with pytest.raises(ParameterError):
        cio.load_config(write_config(tmp_path, body))
    body["geometry"] = {}
    with pytest.raises(ParameterError):
        cio.load_config(write_config(tmp_path, body))


def test_geometry_file_round_trip(tmp_path):
    patches = generate_primitive("sphere", radius=0.22)
    path = tmp_path / "geo.json"
    cio.save_geometry(patches, str(path), degree=(8, 8))
    loaded = cio.load_geometry(str(path))
    assert len(loaded) == 6
    # the degree-8 interpolant reproduces the sphere to high accuracy
    for orig, back in zip(patches, loaded):
        for u in (0.1, 0.55):
            for v in (0.3, 0.9):
                assert np.abs(orig.position(u, v) -
                              back.position(u, v)).max() < 1e-6


def test_vtk_export_structure(tmp_path):
    grid = refine_to_level(generate_primitive("sphere", radius=0.3), 1)
    surface = PolynomialSurface(grid, (2, 2))
    path = tmp_path / "shape.vtk"
    cio.export_vtk(surface, str(path))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile Version 3.0")
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET POLYDATA"
    n_elem = 6 * 4
    # 5 x 5 sample points per element
    n_pts = n_elem * 25
    assert f"POINTS {n_pts} float" in lines[4]
    poly_line = next(ln for ln in lines if ln.startswith("POLYGONS"))
    n_quads = n_elem * 16
    assert poly_line == f"POLYGONS {n_quads} {5 * n_quads}"
    # every polygon row is a quad
    start = lines.index(poly_line) + 1
    for ln in lines[start:start + n_quads]:
        assert ln.startswith("4 ")


def test_vtk_point_data_blocks(tmp_path):
    grid = refine_to_level(generate_primitive("sphere", radius=0.3), 1)
    surface = PolynomialSurface(grid, (2, 2))
    n_pts = 6 * 4 * 25
    scal = np.linspace(0.0, 1.0, n_pts)
    vec = np.zeros((n_pts, 3))
    path = tmp_path / "shape.vtk"
    cio.export_vtk(surface, str(path), scalars={"speed": scal},
                   vectors={"disp": vec})
    text = path.read_text()
    assert f"POINT_DATA {n_pts}" in text
    assert "SCALARS speed float 1" in text
    assert "LOOKUP_TABLE default" in text
    assert "VECTORS disp float" in text


def test_convergence_log_format(tmp_path):
    from cellopt.optimize import IterationRecord
    path = tmp_path / "conv.csv"
    rec = IterationRecord(0, 1.5e-3, np.eye(3) * 0.9, 2.0e-2, 0.1, 1234.5,
                          np.zeros(4), 1)
    with cio.ConvergenceLog(str(path)) as log:
        log.write(rec)
    rows = path.read_text().splitlines()
    assert rows[0].split(",") == cio.CSV_HEADER
    fields = rows[1].split(",")
    assert fields[0] == "0"
    assert float(fields[1]) == pytest.approx(1.5e-3)
    assert len(fields) == len(cio.CSV_HEADER)


def test_summary_and_tensor_json(tmp_path):
    path = tmp_path / "summary.json"
    cio.write_summary(str(path), np.zeros(3), 0.9 * np.eye(3), 1e-6, 7, True)
    body = json.loads(path.read_text())
    assert body["converged"] is True
    assert body["iterations"] == 7
    s = cio.tensor_json(0.9 * np.eye(3))
    parsed = json.loads(s)
    assert np.abs(np.array(parsed) - 0.9 * np.eye(3)).max() < 1e-12
