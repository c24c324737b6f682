"""Command-line front end.

Subcommands: build-op (mesh to operator files), coarsen (one coarsening
run), eval (preservation metrics between two operators), hierarchy
(recursive multilevel coarsening). Every run writes a manifest.json
echoing the fully resolved configuration, and identical configurations
with the same seed produce byte-identical outputs on one platform.

Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .combinatorial import read_roots_csv
from .errors import (ClusteringError, DimensionMismatch, FormatError, MeshError,
                     NumericalError, UnitsError)
from .eigen import smallest_k
from .evaluate import build_report, render_heatmap
from .hierarchy import build as build_hierarchy
from .mesh_io import load_obj, validate as validate_mesh
from .operators import anisotropic_laplacian, barycentric_mass, cotan_laplacian
from .optimize import OptimizerConfig
from .pipeline import run_coarsen, stage_seed
from .sparse_core import (read_matrix_market, read_matrix_market_pattern,
                          write_matrix_market, write_matrix_market_general)

_USAGE_ERRORS = (FormatError, MeshError, DimensionMismatch, UnitsError,
                 ClusteringError, OSError, ValueError)


def _write_manifest(directory_or_path, command: str, settings: dict):
    path = Path(directory_or_path)
    if path.suffix != ".json":
        path = path / "manifest.json"
    payload = {"command": command, "package_version": __version__, "config": settings}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_energy_csv(path, trace: np.ndarray):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "energy", "best_energy"])
        for it, e, best in trace:
            writer.writerow([int(it), repr(float(e)), repr(float(best))])


def _load_operator(path):
    mat = read_matrix_market(path, kind="operator")
    return mat


def _load_mass(path):
    return read_matrix_market(path, kind="mass").require_strictly_positive()


def _optimizer_config(args, k: int) -> OptimizerConfig:
    return OptimizerConfig(gamma=args.gamma, max_iters=args.max_iters,
                           stall_window=args.stall, k=k)


def cmd_build_op(args) -> int:
    mesh = load_obj(args.mesh)
    report = validate_mesh(mesh)
    if not report.is_clean:
        print(f"warning: mesh issues: {len(report.zero_area_faces)} zero-area faces, "
              f"{len(report.unreferenced_vertices)} unreferenced vertices, "
              f"{len(report.nonmanifold_edges)} non-manifold edges", file=sys.stderr)
    if args.type == "cotan":
        L = cotan_laplacian(mesh)
    else:
        L = anisotropic_laplacian(mesh, args.alpha)
    M = barycentric_mass(mesh)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_matrix_market(L, f"{prefix}.L.mtx")
    write_matrix_market(M, f"{prefix}.M.mtx")
    _write_manifest(f"{prefix}.manifest.json", "build-op", {
        "mesh": args.mesh, "type": args.type, "alpha": args.alpha,
        "out_prefix": args.out_prefix,
    })
    print(f"wrote {prefix}.L.mtx and {prefix}.M.mtx "
          f"(n={L.dim}, nnz={L.nnz})")
    return 0


def cmd_coarsen(args) -> int:
    L = _load_operator(args.L)
    M = _load_mass(args.M)
    config = _optimizer_config(args, args.k)
    result = run_coarsen(L, M, args.m, args.k, seed=args.seed, config=config,
                         dist_exponent=args.dist_exponent)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    coarse = result.coarse
    write_matrix_market(coarse.L_coarse, out / "Ltilde.mtx")
    write_matrix_market(coarse.M_coarse, out / "Mtilde.mtx")
    write_matrix_market_general(coarse.interp.to_csr(), out / "G.mtx")
    result.assignment.write_assignment_csv(out / "assignment.csv")
    result.assignment.write_roots_csv(out / "roots.csv")
    _write_energy_csv(out / "energy.csv", coarse.energy_trace)
    _write_manifest(out, "coarsen", {
        "L": args.L, "M": args.M, "m": args.m, "k": args.k, "seed": args.seed,
        "gamma": args.gamma, "max_iters": args.max_iters, "stall": args.stall,
        "dist_exponent": args.dist_exponent, "out": args.out,
    })
    if result.graph.clamped_edges:
        print(f"note: {result.graph.clamped_edges} repulsive couplings clamped "
              "to zero-length edges", file=sys.stderr)
    print(f"coarsened {L.dim} -> {args.m}: energy {coarse.initial_energy:.6g} -> "
          f"{coarse.final_energy:.6g} in {coarse.iterations} iterations"
          f"{' (stalled)' if coarse.stalled else ''}")
    return 0


def _roots_from_file(path, fine_dim: int, coarse_dim: int) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        roots = read_roots_csv(path)
    else:
        pattern = read_matrix_market_pattern(path)
        if pattern.shape != (coarse_dim, fine_dim):
            raise DimensionMismatch(
                f"restriction pattern {pattern.shape} vs coarse {coarse_dim} "
                f"x fine {fine_dim}")
        prow, pcol = pattern.positions()
        if prow.size != coarse_dim or np.unique(prow).size != coarse_dim:
            raise FormatError(f"{path}: restriction needs exactly one entry per row")
        roots = np.empty(coarse_dim, dtype=np.int64)
        roots[prow] = pcol
    if roots.size != coarse_dim:
        raise DimensionMismatch(f"{roots.size} roots for coarse dimension {coarse_dim}")
    if roots.min() < 0 or roots.max() >= fine_dim:
        raise DimensionMismatch("root index outside the fine operator")
    return roots


def cmd_eval(args) -> int:
    fine_L = _load_operator(args.fine_L)
    fine_M = _load_mass(args.fine_M)
    coarse_L = _load_operator(args.coarse_L)
    coarse_M = _load_mass(args.coarse_M)
    if fine_L.dim != fine_M.dim or coarse_L.dim != coarse_M.dim:
        raise DimensionMismatch(
            f"operator/mass dims disagree: fine {fine_L.dim}/{fine_M.dim}, "
            f"coarse {coarse_L.dim}/{coarse_M.dim}")
    roots = _roots_from_file(args.P, fine_L.dim, coarse_L.dim)

    fine = smallest_k(fine_L, fine_M, args.k, seed=stage_seed(args.seed, "eigen_fine"))
    coarse = smallest_k(coarse_L, coarse_M, args.k,
                        seed=stage_seed(args.seed, "eigen_coarse"))
    fmap, report = build_report(fine, coarse, roots, coarse_M, args.k)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fmap.write_csv(out / "C.csv")
    render_heatmap(fmap, out / "C.png")
    (out / "metrics.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")
    report.eigenvalues.write_csv(out / "eigenvalues.csv")
    _write_manifest(out, "eval", {
        "fine_L": args.fine_L, "fine_M": args.fine_M, "coarse_L": args.coarse_L,
        "coarse_M": args.coarse_M, "P": args.P, "k": args.k, "seed": args.seed,
        "out": args.out,
    })
    print(f"offdiag_ratio {report.offdiag:.6g}; eigenvalue errors "
          f"median {report.eigenvalues.summary()['median']:.6g}")
    return 0


def cmd_hierarchy(args) -> int:
    L = _load_operator(args.L)
    M = _load_mass(args.M)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    config = OptimizerConfig(gamma=args.gamma, max_iters=args.max_iters,
                             stall_window=args.stall)
    hierarchy = build_hierarchy(L, M, sizes, args.k, config=config, seed=args.seed,
                                dist_exponent=args.dist_exponent,
                                allow_small_m=args.allow_small_m)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    level0 = out / "level0"
    level0.mkdir(exist_ok=True)
    write_matrix_market(L, level0 / "L.mtx")
    write_matrix_market(M, level0 / "M.mtx")

    fine = smallest_k(L, M, args.k, seed=stage_seed(args.seed, "eigen_fine", 0))
    summary = [{"level": 0, "size": L.dim}]
    for idx, level in enumerate(hierarchy.levels[1:], start=1):
        result = level.result
        directory = out / f"level{idx}"
        directory.mkdir(exist_ok=True)
        write_matrix_market(result.coarse.L_coarse, directory / "Ltilde.mtx")
        write_matrix_market(result.coarse.M_coarse, directory / "Mtilde.mtx")
        write_matrix_market_general(result.coarse.interp.to_csr(), directory / "G.mtx")
        result.assignment.write_assignment_csv(directory / "assignment.csv")
        result.assignment.write_roots_csv(directory / "roots.csv")
        _write_energy_csv(directory / "energy.csv", result.coarse.energy_trace)

        coarse_basis = hierarchy.level_basis(idx, args.k, seed=args.seed)
        fmap, report = build_report(fine, coarse_basis, level.roots_to_level0,
                                    level.M, args.k)
        fmap.write_csv(directory / "C.csv")
        render_heatmap(fmap, directory / "C.png")
        (directory / "metrics.json").write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")
        summary.append({
            "level": idx, "size": level.dim,
            "offdiag_ratio_vs_level0": report.offdiag,
            "energy": result.coarse.final_energy,
            "iterations": result.coarse.iterations,
        })
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "hierarchy", {
        "L": args.L, "M": args.M, "sizes": sizes, "k": args.k, "seed": args.seed,
        "gamma": args.gamma, "max_iters": args.max_iters, "stall": args.stall,
        "dist_exponent": args.dist_exponent, "allow_small_m": args.allow_small_m,
        "out": args.out,
    })
    print(" -> ".join(str(s) for s in hierarchy.sizes))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specoarse",
        description="Coarsen sparse geometric operators while preserving their "
                    "low-frequency spectrum.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("build-op", help="assemble an operator and mass from a mesh")
    p.add_argument("--mesh", required=True, help="OBJ triangle mesh")
    p.add_argument("--type", choices=["cotan", "aniso"], default="cotan")
    p.add_argument("--alpha", type=float, default=0.0,
                   help="anisotropy strength for --type aniso")
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_build_op)

    def common_run_flags(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--gamma", type=float, default=0.02, help="optimizer step size")
        p.add_argument("--max-iters", type=int, default=1000, dest="max_iters")
        p.add_argument("--stall", type=int, default=10,
                       help="stop after this many iterations without improvement")
        p.add_argument("--dist-exponent", type=float, default=None, dest="dist_exponent",
                       help="override the unit-derived edge-distance exponent")

    p = sub.add_parser("coarsen", help="coarsen an operator to m rows")
    p.add_argument("--L", required=True, help="operator .mtx")
    p.add_argument("--M", required=True, help="diagonal mass .mtx")
    p.add_argument("--m", required=True, type=int, help="coarse size")
    p.add_argument("--k", required=True, type=int, help="eigenvectors to preserve")
    common_run_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_coarsen)

    p = sub.add_parser("eval", help="measure spectral preservation between two operators")
    p.add_argument("--fine-L", required=True, dest="fine_L")
    p.add_argument("--fine-M", required=True, dest="fine_M")
    p.add_argument("--coarse-L", required=True, dest="coarse_L")
    p.add_argument("--coarse-M", required=True, dest="coarse_M")
    p.add_argument("--P", required=True,
                   help="roots .csv or restriction pattern .mtx")
    p.add_argument("--k", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("hierarchy", help="recursive multilevel coarsening")
    p.add_argument("--L", required=True)
    p.add_argument("--M", required=True)
    p.add_argument("--sizes", required=True, help="comma-separated descending sizes")
    p.add_argument("--k", required=True, type=int)
    common_run_flags(p)
    p.add_argument("--allow-small-m", action="store_true", dest="allow_small_m",
                   help="permit level sizes at or below 2*k")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hierarchy)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
