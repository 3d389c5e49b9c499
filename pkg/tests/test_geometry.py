"""Multipatch surfaces: primitives, element grids, interpolation."""

import numpy as np
import pytest

from cellopt.errors import GeometryError, ParameterError, StepRejectedError
from cellopt.geometry import (PolynomialSurface, apply_displacement,
                              generate_primitive, refine_to_level,
                              reinterpolate, rotation_t)


def test_unknown_primitive_raises():
    with pytest.raises(ParameterError):
        generate_primitive("torus")


def test_drilled_cube_is_declared_unsupported():
    with pytest.raises(NotImplementedError):
        generate_primitive("drilled_cube_stub")


def test_sphere_points_lie_on_sphere():
    maps = generate_primitive("sphere", radius=0.3)
    grid = refine_to_level(maps, 2)
    r = np.linalg.norm(grid.unique_points, axis=1)
    assert np.abs(r - 0.3).max() < 1e-13


def test_grid_point_counts_and_dedup():
    # closed quad surface of genus 0 at level j: F = 6*4^j, V = F + 2
    for j in (1, 2, 3):
        grid = refine_to_level(generate_primitive("cube", half_width=0.2), j)
        n_elem = 6 * 4 ** j
        assert grid.elem_corners.shape == (n_elem, 4)
        assert len(grid.unique_points) == n_elem + 2


def test_corner_loop_is_outward():
    grid = refine_to_level(generate_primitive("sphere", radius=0.25), 1)
    pts = grid.unique_points[grid.elem_corners]
    v1 = pts[:, 1] - pts[:, 0]
    v2 = pts[:, 3] - pts[:, 0]
    normals = np.cross(v1, v2)
    centers = pts.mean(axis=1)
    assert (np.einsum("ij,ij->i", normals, centers) > 0).all()


def test_patch_edge_ids_are_shared_between_patches():
    grid = refine_to_level(generate_primitive("sphere", radius=0.25), 2)
    seen = set()
    duplicates = 0
    for p in range(6):
        for e in range(4):
            gids = tuple(sorted(map(int, grid.patch_edge_ids(p, e))))
            duplicates += gids in seen
            seen.add(gids)
    # every topological cube edge is shared by exactly two patch edges
    assert duplicates == 12


def test_interpolated_sphere_radius_accuracy():
    grid = refine_to_level(generate_primitive("sphere", radius=0.3), 3)
    surface = PolynomialSurface(grid, (4, 4))
    pos, _, _, _ = surface.quad_geometry(6)
    r = np.linalg.norm(pos.reshape(-1, 3), axis=1)
    assert np.abs(r - 0.3).max() < 5e-5


def test_sphere_area_and_volume():
    grid = refine_to_level(generate_primitive("sphere", radius=0.3), 3)
    surface = PolynomialSurface(grid, (4, 4))
    assert abs(surface.area() - 4 * np.pi * 0.3 ** 2) < 1e-4
    assert abs(surface.cavity_volume() - 4 * np.pi * 0.3 ** 3 / 3) < 1e-5


def test_cube_volume_exact():
    grid = refine_to_level(generate_primitive("cube", half_width=0.2), 2)
    surface = PolynomialSurface(grid, (2, 2))
    assert abs(surface.cavity_volume() - 0.4 ** 3) < 1e-13


def test_normals_point_out_of_cavity():
    grid = refine_to_level(generate_primitive("sphere", radius=0.3), 2)
    surface = PolynomialSurface(grid, (3, 3))
    pos, nrm, w, _ = surface.quad_geometry(3)
    dots = np.einsum("eqi,eqi->eq", pos, nrm)
    assert (dots > 0).all()
    assert abs(w.sum() - 4 * np.pi * 0.3 ** 2) < 1e-3


def test_rotation_matrix_is_orthogonal():
    t = rotation_t()
    assert np.abs(t @ t.T - np.eye(3)).max() < 1e-12
    assert abs(np.linalg.det(t) - 1.0) < 1e-12


def test_rotated_cube_is_a_rotation_of_the_cube():
    plain = refine_to_level(generate_primitive("cube", half_width=0.2), 1)
    rot = refine_to_level(generate_primitive("rotated_cube", half_width=0.2),
                          1)
    r_plain = np.sort(np.linalg.norm(plain.unique_points, axis=1))
    r_rot = np.sort(np.linalg.norm(rot.unique_points, axis=1))
    assert np.abs(r_plain - r_rot).max() < 1e-12


def test_two_body_has_two_components():
    grid = refine_to_level(generate_primitive("two_body"), 1)
    x = grid.unique_points[:, 0]
    assert (x < 0).any() and (x > 0).any()
    assert grid.elem_corners.shape[0] == 12 * 4


def test_geometry_outside_cell_rejected():
    with pytest.raises(GeometryError):
        generate_primitive("sphere", radius=0.4995)


def test_displacement_admissibility():
    grid = refine_to_level(generate_primitive("sphere", radius=0.3), 2)
    surface = PolynomialSurface(grid, (3, 3))
    fields = grid.unique_points[None, :, :].copy()  # radial inflation
    moved = apply_displacement(surface, fields, np.array([0.1]))
    assert abs(moved.cavity_volume() -
               4 * np.pi * (1.1 * 0.3) ** 3 / 3) < 2e-3
    with pytest.raises(StepRejectedError):
        apply_displacement(surface, fields, np.array([0.7]))


def test_reinterpolate_matches_on_smooth_data():
    grid = refine_to_level(generate_primitive("sphere", radius=0.3), 2)
    surface = PolynomialSurface(grid, (4, 4))
    resampled = reinterpolate(grid, (4, 4))
    p1, _, _, _ = surface.quad_geometry(4)
    p2, _, _, _ = resampled.quad_geometry(4)
    assert np.abs(p1 - p2).max() < 1e-12


def test_eval_grid_matches_pointwise_eval():
    grid = refine_to_level(generate_primitive("sphere", radius=0.2), 2)
    surface = PolynomialSurface(grid, (3, 3))
    g = np.array([0.1, 0.5, 0.9])
    pos, _, _ = surface.eval_grid(g, g)
    for e in (0, 7, 13):
        for a, u in enumerate(g):
            for b, v in enumerate(g):
                direct, _, _ = surface.eval_at(
                    np.array([e]), np.array([u]), np.array([v]))
                assert np.abs(pos[e, a, b] - direct[0]).max() < 1e-12
