"""Command-line entry points.

Subcommands: ``kernel-fit`` (fit and cache the periodic kernel),
``tensor`` (effective tensor of one geometry), ``optimize`` (full
tensor-tracking run with VTK/CSV artifacts) and ``geometry-gen``
(emit the geometry of a config as a standalone geometry file).

Exit codes: 0 success, 1 configuration/geometry error, 2 optimization
failure, 3 missing kernel cache.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import io as cio
from .bem import QuadratureScheme, assemble_operators
from .cell import solve_cell_problems
from .errors import (CelloptError, LineSearchError, MissingKernelCacheError,
                     ParameterError, SolverError, StepRejectedError)
from .geometry import PolynomialSurface, refine_to_level
from .kernel import PeriodicKernel
from .homogenization import effective_tensor
from .optimize import OptimizationConfig, ShapeOptimizer
from .spaces import TraceSpace

THREAD_ENV = "CELLOPT_NUM_THREADS"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_OPTIMIZATION = 2
EXIT_NO_KERNEL = 3


def _apply_thread_env():
    n = os.environ.get(THREAD_ENV)
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _load_kernel(config, out_dir, fit_if_missing):
    cache = config["kernel"]["cache"]
    if not os.path.isabs(cache):
        cache = os.path.join(out_dir, cache)
    if os.path.exists(cache):
        kern = PeriodicKernel.load(cache)
        if kern.degree != config["kernel"]["N"]:
            raise MissingKernelCacheError(
                f"cache {cache} holds degree {kern.degree}, config wants "
                f"{config['kernel']['N']}")
        return kern
    if not fit_if_missing:
        raise MissingKernelCacheError(
            f"kernel cache {cache} not found; rerun with "
            f"--fit-kernel-if-missing or run kernel-fit first")
    kern = PeriodicKernel.fit(degree=config["kernel"]["N"])
    kern.save(cache)
    return kern


def _scheme_from(bem):
    kwargs = {}
    for key in ("near_order", "singular_order", "smooth_order"):
        if key in bem:
            kwargs[key] = bem[key]
    if "far_orders" in bem:
        kwargs["far_orders"] = tuple(
            (float(t), int(o)) for t, o in bem["far_orders"])
    return QuadratureScheme(**kwargs)


def _pipeline_pieces(config, base_dir):
    patches = cio.config_patches(config, base_dir)
    bem = config["bem"]
    grid = refine_to_level(patches, bem["level"])
    surface = PolynomialSurface(grid, tuple(bem["geometry_degree"]))
    space_d = TraceSpace(grid, bem["degree"], continuous=True)
    space_n = TraceSpace(grid, bem["degree"], continuous=False)
    return grid, surface, space_d, space_n


def cmd_kernel_fit(args):
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"kernel_deg{args.degree}.json")
    kern = PeriodicKernel.fit(degree=args.degree, n_grid=args.samples)
    kern.save(path)
    print(f"kernel degree {kern.degree}: value residual "
          f"{cio.fmt(kern.residual)}, gradient residual "
          f"{cio.fmt(kern.grad_residual)} -> {path}")
    return EXIT_OK


def cmd_tensor(args):
    config = cio.load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    os.makedirs(args.out, exist_ok=True)
    kern = _load_kernel(config, args.out, args.fit_kernel_if_missing)
    _, surface, space_d, space_n = _pipeline_pieces(config, base_dir)
    ops = assemble_operators(surface, space_d, space_n, kern,
                             _scheme_from(config["bem"]))
    solution = solve_cell_problems(ops, space_d)
    tensor = effective_tensor(surface, ops, solution)
    print(cio.tensor_json(tensor))
    return EXIT_OK


def cmd_optimize(args):
    config = cio.load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    kern = _load_kernel(config, out_dir, args.fit_kernel_if_missing)
    grid, _, _, _ = _pipeline_pieces(config, base_dir)
    basis = config["basis"]
    opt_cfg = OptimizationConfig(
        target=config["target"], n_fields=basis["p"], ell=basis["ell"],
        chol_tol=basis["tol"], spline_degree=config["bem"]["degree"],
        geometry_degree=tuple(config["bem"]["geometry_degree"]),
        max_iterations=config["optimizer"]["max_iter"],
        j_tol=config["optimizer"]["j_tol"])
    optimizer = ShapeOptimizer(grid, kern, opt_cfg,
                               _scheme_from(config["bem"]))
    want_vtk = config["output"]["vtk"]
    csv_path = os.path.join(out_dir, config["output"]["csv"])

    with cio.ConvergenceLog(csv_path) as log:
        def callback(record, evaluation):
            log.write(record)
            if want_vtk:
                cio.export_vtk(
                    evaluation.surface,
                    os.path.join(out_dir, f"surface_{record.index:04d}.vtk"))

        final, records, converged = optimizer.run(callback=callback)
    cio.write_summary(os.path.join(out_dir, "summary.json"), final.y,
                      final.tensor, final.functional, len(records) - 1,
                      converged)
    print(f"J = {cio.fmt(final.functional)} after {len(records) - 1} "
          f"iterations ({'converged' if converged else 'not converged'})")
    return EXIT_OK if converged else EXIT_OPTIMIZATION


def cmd_geometry_gen(args):
    config = cio.load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    patches = cio.config_patches(config, base_dir)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "geometry.json")
    cio.save_geometry(patches, path, degree=(args.degree, args.degree))
    print(f"wrote {len(patches)} patches -> {path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cellopt",
        description="Cavity shape optimization for effective diffusion "
                    "tensors on the periodic unit cell")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("kernel-fit", help="fit and cache the kernel")
    p_fit.add_argument("--degree", type=int, default=12)
    p_fit.add_argument("--samples", type=int, default=20,
                       help="fit grid points per face direction")
    p_fit.add_argument("--out", default=".", help="output directory")
    p_fit.set_defaults(func=cmd_kernel_fit)

    for name, func in (("tensor", cmd_tensor), ("optimize", cmd_optimize),
                       ("geometry-gen", cmd_geometry_gen)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", default=".", help="output directory")
        if func is not cmd_geometry_gen:
            p.add_argument("--fit-kernel-if-missing", action="store_true")
        else:
            p.add_argument("--degree", type=int, default=8,
                           help="patch polynomial degree in the file")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    _apply_thread_env()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MissingKernelCacheError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_KERNEL
    except (LineSearchError, SolverError, StepRejectedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZATION
    except (CelloptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
