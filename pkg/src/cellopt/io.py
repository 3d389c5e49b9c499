"""File formats: run configs, geometry files, VTK export, CSV logs.

All artifacts are plain text (JSON, legacy ASCII VTK, CSV) and byte
deterministic; numbers are printed with 12 significant digits.
"""

import csv
import json

import numpy as np
from jsonschema import Draft7Validator

from .errors import ParameterError
from .geometry import PolynomialPatch, generate_primitive

GEOMETRY_FORMAT = "multipatch-surface"
GEOMETRY_VERSION = 1


def fmt(x):
    """Fixed 12-significant-digit formatting for reproducible diffs."""
    return f"{float(x):.11e}"


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["geometry", "target"],
    "additionalProperties": False,
    "properties": {
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"type": "string"},
                "params": {"type": "object"},
                "file": {"type": "string"},
            },
        },
        "target": {
            "type": "array",
            "minItems": 3, "maxItems": 3,
            "items": {"type": "array", "minItems": 3, "maxItems": 3,
                      "items": {"type": "number"}},
        },
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p": {"type": "integer", "minimum": 1},
                "ell": {"type": "number", "exclusiveMinimum": 0},
                "tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "bem": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "degree": {"type": "integer", "minimum": 0},
                "level": {"type": "integer", "minimum": 0},
                "geometry_degree": {
                    "type": "array", "minItems": 2, "maxItems": 2,
                    "items": {"type": "integer", "minimum": 1}},
                "far_orders": {"type": "array"},
                "near_order": {"type": "integer", "minimum": 1},
                "singular_order": {"type": "integer", "minimum": 1},
                "smooth_order": {"type": "integer", "minimum": 1},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "j_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 2},
                "cache": {"type": "string"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "vtk": {"type": "boolean"},
                "csv": {"type": "string"},
            },
        },
    },
}

_DEFAULTS = {
    "basis": {"p": 16, "ell": 1.0, "tol": 1e-6},
    "bem": {"degree": 2, "level": 3, "geometry_degree": [4, 4]},
    "optimizer": {"j_tol": 1e-5, "max_iter": 25},
    "kernel": {"N": 12, "cache": "kernel_cache.json"},
    "output": {"directory": ".", "vtk": True, "csv": "convergence.csv"},
}


def load_config(path):
    """Read and validate a run configuration, filling in defaults.

    Raises ParameterError on schema violations, an asymmetric target
    tensor or an underdetermined geometry section.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from exc
    errors = sorted(Draft7Validator(CONFIG_SCHEMA).iter_errors(data),
                    key=lambda e: list(e.path))
    if errors:
        msgs = "; ".join(f"{'/'.join(map(str, e.path))}: {e.message}"
                         for e in errors)
        raise ParameterError(f"config schema violation: {msgs}")
    target = np.array(data["target"], dtype=float)
    if np.abs(target - target.T).max() > 1e-12:
        raise ParameterError("target tensor must be symmetric")
    geom = data["geometry"]
    if ("file" in geom) == ("kind" in geom):
        raise ParameterError(
            "geometry must give exactly one of 'kind' or 'file'")
    merged = {}
    for section, defaults in _DEFAULTS.items():
        merged[section] = dict(defaults)
        merged[section].update(data.get(section, {}))
    merged["geometry"] = geom
    merged["target"] = target
    return merged


def config_patches(config, base_dir="."):
    """Patch maps described by the geometry section of a config."""
    geom = config["geometry"]
    if "file" in geom:
        import os
        path = geom["file"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_geometry(path)
    return generate_primitive(geom["kind"], **geom.get("params", {}))


# ---------------------------------------------------------------------------
# geometry files
# ---------------------------------------------------------------------------

def sample_patch_grid(patch, degree=(8, 8)):
    """Uniform (p1+1) x (p2+1) node grid of one patch map."""
    p1, p2 = degree
    uu, vv = np.meshgrid(np.linspace(0.0, 1.0, p1 + 1),
                         np.linspace(0.0, 1.0, p2 + 1), indexing="ij")
    return patch.position(uu, vv)


def save_geometry(patches, path, degree=(8, 8)):
    """Write patch maps as a JSON geometry file (uniform node grids)."""
    body = {
        "format": GEOMETRY_FORMAT,
        "version": GEOMETRY_VERSION,
        "patches": [
            {"degree": [int(degree[0]), int(degree[1])],
             "points": sample_patch_grid(p, degree).tolist()}
            for p in patches
        ],
    }
    with open(path, "w") as fh:
        json.dump(body, fh, indent=1)


def load_geometry(path):
    """Read a JSON geometry file into polynomial patch maps."""
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != GEOMETRY_FORMAT:
        raise ParameterError(f"not a geometry file: {path}")
    if data.get("version") != GEOMETRY_VERSION:
        raise ParameterError(f"unsupported geometry version in {path}")
    patches = []
    for i, entry in enumerate(data["patches"]):
        pts = np.asarray(entry["points"], dtype=float)
        p1, p2 = entry["degree"]
        if pts.shape != (p1 + 1, p2 + 1, 3):
            raise ParameterError(
                f"patch {i}: point grid shape {pts.shape} does not match "
                f"degree {entry['degree']}")
        patches.append(PolynomialPatch(i, pts))
    return patches


# ---------------------------------------------------------------------------
# VTK export
# ---------------------------------------------------------------------------

def export_vtk(surface, path, scalars=None, vectors=None, samples=5,
               title="cavity surface"):
    """Legacy ASCII VTK PolyData export of a dense surface sampling.

    Every element contributes a `samples` x `samples` point grid and the
    corresponding quad cells.  `scalars` maps names to (E, samples,
    samples) arrays, `vectors` to (E, samples, samples, 3) arrays.
    """
    g = np.linspace(0.0, 1.0, samples)
    pos = surface.eval_grid(g, g)[0]
    n_el = surface.n_elements
    n_pts = n_el * samples * samples
    pts = pos.reshape(n_pts, 3)

    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET POLYDATA", f"POINTS {n_pts} float"]
    lines.extend(" ".join(fmt(c) for c in p) for p in pts)
    quads = []
    for e in range(n_el):
        base = e * samples * samples
        for a in range(samples - 1):
            for b in range(samples - 1):
                i0 = base + a * samples + b
                quads.append((i0, i0 + samples, i0 + samples + 1, i0 + 1))
    lines.append(f"POLYGONS {len(quads)} {5 * len(quads)}")
    lines.extend("4 " + " ".join(str(i) for i in q) for q in quads)

    if scalars or vectors:
        lines.append(f"POINT_DATA {n_pts}")
    for name, values in (scalars or {}).items():
        lines.append(f"SCALARS {name} float 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(fmt(v) for v in np.asarray(values).reshape(n_pts))
    for name, values in (vectors or {}).items():
        lines.append(f"VECTORS {name} float")
        lines.extend(" ".join(fmt(c) for c in row)
                     for row in np.asarray(values).reshape(n_pts, 3))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# convergence log and run summary
# ---------------------------------------------------------------------------

CSV_HEADER = ["iter", "J", "a11", "a12", "a13", "a21", "a22", "a23",
              "a31", "a32", "a33", "grad_norm", "step", "wall_ms"]


class ConvergenceLog:
    """CSV writer for accepted optimization iterations."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(CSV_HEADER)

    def write(self, record):
        row = [record.index, fmt(record.functional)]
        row.extend(fmt(v) for v in np.asarray(record.tensor).ravel())
        row.extend([fmt(record.grad_norm), fmt(record.step),
                    fmt(record.wall_ms)])
        self._writer.writerow(row)
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_summary(path, y, tensor, functional, iterations, converged):
    """Final JSON summary of an optimization run."""
    body = {
        "converged": bool(converged),
        "iterations": int(iterations),
        "functional": float(functional),
        "tensor": np.asarray(tensor).tolist(),
        "y": np.asarray(y).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(body, fh, indent=1)


def tensor_json(tensor):
    """Tensor as a JSON string with 12 significant digits."""
    rows = [", ".join(fmt(v) for v in row) for row in np.asarray(tensor)]
    return "[\n [" + "],\n [".join(rows) + "]\n]"
