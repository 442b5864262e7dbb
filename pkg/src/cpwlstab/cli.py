"""Command-line entry point.

Exit codes: 0 certified, 1 not certified, 2 input error, 3 not applicable.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import cpwl_approx as cp
from .certificates import CertificateParams, make_params, systematic_test
from .errors import (
    ContractError,
    DimensionError,
    DomainError,
    NotApplicableError,
    PartitionError,
    SystemSyntaxError,
)
from .matrix_core import solve_lyapunov
from .ode_sim import attraction_oracle
from .region import (
    POINTWISE,
    boundary_csv,
    largest_certified_square,
    read_region_csv,
    region_csv,
    region_svg,
    scan_region,
    tune_parameters,
)
from .system_def import load_system

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NA = 0, 1, 2, 3
MODE_NAMES = {"origin": "jacobian_origin", "pointwise": "jacobian_pointwise", "fixed": "fixed_F"}


class InputError(Exception):
    pass


# -- argument helpers ----------------------------------------------------------

def parse_box(text: str | None, n: int) -> np.ndarray:
    if text is None:
        return np.tile([-1.0, 1.0], (n, 1))
    try:
        pairs = [tuple(float(v) for v in part.split(":")) for part in text.split(",")]
    except ValueError:
        raise InputError(f"bad --box {text!r}; expected lo:hi,lo:hi") from None
    if any(len(p) != 2 for p in pairs):
        raise InputError(f"bad --box {text!r}; expected lo:hi,lo:hi")
    if len(pairs) == 1:
        pairs *= n
    if len(pairs) != n:
        raise InputError(f"--box has {len(pairs)} axes, system has {n}")
    box = np.array(pairs)
    if np.any(box[:, 0] >= box[:, 1]) or not np.all(np.isfinite(box)):
        raise InputError("--box needs finite lo < hi on every axis")
    return box


def parse_res(text: str, n: int, minimum: int = 2) -> tuple[int, ...]:
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"bad resolution {text!r}") from None
    if len(vals) == 1:
        vals *= n
    if len(vals) != n or min(vals) < minimum:
        raise InputError(f"resolution needs {n} values, each >= {minimum}")
    return tuple(vals)


def read_matrix_csv(path: str) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    rows = []
    for line in p.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            try:
                rows.append([float(v) for v in line.replace(";", ",").split(",")])
            except ValueError:
                raise InputError(f"non-numeric entry in {path}: {line!r}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise InputError(f"{path} is not a rectangular matrix")
    return np.array(rows)


def fmt_matrix(m: np.ndarray) -> str:
    def f(v):
        return "inf" if math.isinf(v) else f"{v + 0.0:.12g}"
    return "; ".join(",".join(f(v) for v in row) for row in np.atleast_2d(m))


def build_params(args, vf, box) -> CertificateParams:
    mode = MODE_NAMES[args.mode]
    if args.mode == "fixed":
        if not args.F:
            raise InputError("--mode fixed needs --F PATH")
        F = read_matrix_csv(args.F)
        if F.shape != (vf.n, vf.n):
            raise InputError(f"--F must be {vf.n}x{vf.n}")
    else:
        F = vf.origin_jacobian
    if args.lambdas == "auto":
        p = tune_parameters(vf, F, box)
        return CertificateParams(p.F, p.lambda_bar, p.lambda_tilde, p.P, mode, p.lambda_R)
    lam = read_matrix_csv(args.lambdas)
    if lam.shape != (2 * vf.n, vf.n):
        raise InputError(f"--lambdas file must have {2 * vf.n} rows of {vf.n} values "
                         "(lambda_bar rows, then lambda_tilde rows)")
    return make_params(F, lam[: vf.n], lam[vf.n:], mode=mode)


def write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def emit(lines: list[tuple[str, object]]) -> str:
    text = "\n".join(f"{k}={v}" for k, v in lines) + "\n"
    sys.stdout.write(text)
    return text


# -- commands ------------------------------------------------------------------

def cmd_certify(args) -> int:
    vf = load_system(args.system)
    box = parse_box(args.box, vf.n)
    report: list[tuple[str, object]] = [("system", vf.name), ("mode", args.mode), ("n", vf.n)]
    j0 = vf.origin_jacobian
    report.append(("J0", fmt_matrix(j0)))
    try:
        if args.mode == "pointwise":
            v = systematic_test(vf, np.zeros(vf.n))
            if not v.hurwitz_ok:
                raise NotApplicableError("Jacobian at the origin is not Hurwitz")
            report += [("F", fmt_matrix(j0)), ("P", fmt_matrix(solve_lyapunov(j0))),
                       ("lambda_R_origin", f"{v.lambda_R:.12g}")]
            code = EXIT_OK if v.in_omega else EXIT_FAIL
        else:
            p = build_params(args, vf, box)
            report += [("F", fmt_matrix(p.F)), ("P", fmt_matrix(p.P)),
                       ("lambda_bar", fmt_matrix(p.lambda_bar)),
                       ("lambda_tilde", fmt_matrix(p.lambda_tilde)),
                       ("lambda_R", f"{p.lambda_R:.12g}")]
            code = EXIT_OK if p.globally_ok else EXIT_FAIL
    except NotApplicableError as e:
        report += [("verdict", "not-applicable"), ("reason", f"non-Hurwitz Jacobian: {e}")]
        write(Path(args.out), "certificate.txt", emit(report))
        return EXIT_NA
    report.append(("verdict", "certified" if code == EXIT_OK else "not-certified"))
    write(Path(args.out), "certificate.txt", emit(report))
    return code


def cmd_region(args) -> int:
    vf = load_system(args.system)
    box = parse_box(args.box, vf.n)
    res = parse_res(args.res, vf.n)
    try:
        cert = POINTWISE if args.mode == "pointwise" else build_params(args, vf, box)
    except NotApplicableError as e:
        emit([("system", vf.name), ("verdict", "not-applicable"), ("reason", str(e))])
        return EXIT_NA
    est = scan_region(vf, cert, box, res)
    out = Path(args.out)
    write(out, "region.csv", region_csv(est))
    report = [("system", vf.name), ("mode", args.mode), ("resolution", ",".join(map(str, res))),
              ("certified_fraction", f"{est.certified_fraction:.6f}"),
              ("certified_points", int(est.verdicts.in_omega.sum()))]
    if isinstance(cert, CertificateParams):
        report.append(("lambda_R", f"{cert.lambda_R:.12g}"))
    if vf.n == 2:
        write(out, "boundary.csv", boundary_csv(est.boundary))
        write(out, "region.svg", region_svg(est))
        # the square is centered at the origin, so it needs the origin inside the box
        hmax = float(np.min(np.abs(box)))
        inside = bool(np.all(box[:, 0] < 0) and np.all(box[:, 1] > 0))
        half = f"{largest_certified_square(vf, cert, hmax):.6f}" if inside else "n/a"
        report.append(("square_half_width", half))
        report.append(("boundary_polylines", len(est.boundary)))
    write(out, "region_report.txt", emit(report))
    return EXIT_OK if est.verdicts.in_omega.any() else EXIT_FAIL


def cmd_validate(args) -> int:
    vf = load_system(args.system)
    path = Path(args.region or Path(args.out) / "region.csv")
    if not path.is_file():
        raise InputError(f"no region file at {path}")
    try:
        pts, flags = read_region_csv(path.read_text())
    except (ValueError, IndexError) as e:
        raise InputError(f"unreadable region file {path}: {e}") from None
    if pts.shape[1] != vf.n:
        raise InputError(f"region file has {pts.shape[1]} coordinates, system has {vf.n}")
    cert = pts[flags]
    report: list[tuple[str, object]] = [("system", vf.name), ("region", path.name),
                                        ("certified_in_file", len(cert))]
    if len(cert) == 0:
        report += [("sampled", 0), ("failures", 0), ("verdict", "pass"),
                   ("warning", "no certified points; vacuous pass")]
        write(Path(args.out), "validation.txt", emit(report))
        return EXIT_OK
    rng = np.random.default_rng(args.seed)
    take = np.sort(rng.choice(len(cert), size=min(args.samples, len(cert)), replace=False))
    sample = cert[take]
    box = parse_box(args.box, vf.n) if args.box else np.stack([pts.min(0), pts.max(0)], 1)
    box[:, 1] = np.maximum(box[:, 1], box[:, 0] + 1e-9)
    rep = attraction_oracle(vf, sample, args.horizon, box=box)
    report += [("sampled", len(sample)), ("failures", int((~rep.converged).sum())),
               ("oracle", rep.summary())]
    for x in rep.counterexamples:
        report.append(("counterexample", ",".join(f"{v:.12g}" for v in x)))
    report.append(("verdict", "pass" if rep.converged.all() else "fail"))
    write(Path(args.out), "validation.txt", emit(report))
    return EXIT_OK if rep.converged.all() else EXIT_FAIL


def cmd_cpwl_check(args) -> int:
    vf = load_system(args.system)
    box = parse_box(args.box, vf.n)
    div = parse_res(args.divisions, vf.n, minimum=1)
    part = cp.build_partition(box, div)
    pieces = cp.fit_pieces(vf, part)
    verdict = cp.check_theorem1(pieces)
    dense = max(cp.sandwich_violation(vf, p, 200, seed=args.seed + p.simplex_id) for p in pieces)
    rng = np.random.default_rng(args.seed)
    inner = box.mean(1)[:, None] + 0.9 * (box - box.mean(1)[:, None])
    starts = rng.uniform(inner[:, 0], inner[:, 1], size=(args.trajectories, vf.n))
    violations, worst, gap, truncated = 0, 0.0, 0.0, 0
    pairs: set = set()
    for x0 in starts:
        run = cp.integrate_error_bounds(vf, part, pieces, x0, args.horizon)
        err = run.x - run.x_cpwl
        lo, hi = np.minimum(run.e1, run.e2), np.maximum(run.e1, run.e2)
        violations += int(np.sum(np.any((err < lo - args.tol) | (err > hi + args.tol), axis=1)))
        worst = max(worst, run.max_violation)
        truncated += run.truncated
        pairs |= run.visited_pairs
    for i, k in sorted(pairs):
        gap = max(gap, cp.block_spectrum_gap(pieces[i].A, pieces[k].A))
    out = Path(args.out)
    write(out, "pieces.csv", cp.pieces_csv(pieces))
    ok = verdict.certified and violations == 0 and gap <= 1e-8
    report = [
        ("system", vf.name), ("divisions", ",".join(map(str, div))), ("simplices", part.n_simplices),
        ("max_lambda", f"{max(float(p.lam.max()) for p in pieces):.6e}"),
        ("theorem1", "certified" if verdict.certified else "not-certified"),
        ("theorem1_reason", verdict.reason),
        ("failing_simplex", "" if verdict.failing_simplex is None else verdict.failing_simplex),
        ("plane_sandwich_max_violation", f"{dense:.3e}"),
        ("trajectories", len(starts)), ("truncated", truncated),
        ("bound_sandwich_violations", violations), ("bound_sandwich_max_margin", f"{worst:.3e}"),
        ("visited_pairs", len(pairs)), ("block_spectrum_max_gap", f"{gap:.3e}"),
        ("verdict", "pass" if ok else "fail"),
    ]
    write(out, "cpwl_report.txt", emit(report))
    return EXIT_OK if ok else EXIT_FAIL


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpwlstab", description="Stability certificates and attraction regions for autonomous ODEs.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, res_default="101"):
        p.add_argument("--system", required=True, help="system file or bundled name")
        p.add_argument("--box", help='analysis box "lo1:hi1,lo2:hi2" (default -1:1 per axis)')
        p.add_argument("--res", default=res_default, help="grid resolution N or N1,N2,...")
        p.add_argument("--mode", choices=sorted(MODE_NAMES), default="origin")
        p.add_argument("--F", help="CSV matrix for --mode fixed")
        p.add_argument("--lambdas", default="auto",
                       help="'auto' or CSV with lambda_bar rows then lambda_tilde rows (inf allowed)")
        p.add_argument("--horizon", type=float, default=100.0)
        p.add_argument("--out", default=".")
        p.add_argument("--seed", type=int, default=0)
        return p

    common(sub.add_parser("certify", help="decide the certificate at the origin"))
    common(sub.add_parser("region", help="scan a box and write region files"))
    v = common(sub.add_parser("validate", help="simulate certified points of a region file"))
    v.add_argument("--region", help="region CSV (default OUT/region.csv)")
    v.add_argument("--samples", type=int, default=200)
    c = common(sub.add_parser("cpwl-check", help="CPWL approximation and error-bound checks"))
    c.add_argument("--divisions", default="8")
    c.add_argument("--trajectories", type=int, default=20)
    c.add_argument("--tol", type=float, default=1e-7)
    c.set_defaults(horizon=10.0)
    return ap


COMMANDS = {"certify": cmd_certify, "region": cmd_region, "validate": cmd_validate,
            "cpwl-check": cmd_cpwl_check}


def _glue_box(argv: list[str]) -> list[str]:
    # "--box -1:1" would be read as an option; glue the value to the flag
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--box" and i + 1 < len(argv):
            out.append(f"--box={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_glue_box(argv))
    try:
        return COMMANDS[args.command](args)
    except (SystemSyntaxError, FileNotFoundError, InputError, PartitionError, ContractError,
            DimensionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NotApplicableError as e:
        print(f"not-applicable: {e}", file=sys.stderr)
        return EXIT_NA
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
