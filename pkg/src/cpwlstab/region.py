"""Grid scans of certified regions, boundary extraction and bound tuning."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from skimage import measure

from .certificates import (
    BatchVerdicts,
    CertificateParams,
    make_params,
    omega_batch,
    systematic_batch,
)
from .errors import DimensionError, NotApplicableError
from .system_def import VectorField

POINTWISE = "pointwise"
TUNE_SCALES = tuple(2.0 ** k for k in range(-6, 4))
TUNE_RES = 21


def cell_centers(box, resolution) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-axis center coordinates and all centers in C order (last axis fastest)."""
    box = np.asarray(box, dtype=float)
    res = tuple(int(r) for r in np.broadcast_to(resolution, box.shape[0]))
    if min(res) < 2:
        raise ValueError("resolution must be >= 2 per axis")
    if np.any(box[:, 0] >= box[:, 1]):
        raise ValueError("box needs lo < hi on every axis")
    axes = [lo + (np.arange(r) + 0.5) * (hi - lo) / r for (lo, hi), r in zip(box, res)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.shape[0])
    return axes, grid


@dataclass
class RegionEstimate:
    box: np.ndarray
    resolution: tuple
    axes: list
    verdicts: BatchVerdicts
    boundary: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.box.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return self.verdicts.in_omega.reshape(self.resolution)

    @property
    def certified_fraction(self) -> float:
        return float(self.verdicts.in_omega.mean())

    @property
    def certified_points(self) -> np.ndarray:
        return self.verdicts.points[self.verdicts.in_omega]


def evaluate(vf: VectorField, certificate, points) -> BatchVerdicts:
    if isinstance(certificate, CertificateParams):
        return omega_batch(vf, certificate, points)
    if certificate == POINTWISE:
        return systematic_batch(vf, points)
    raise TypeError("certificate must be CertificateParams or 'pointwise'")


def scan_region(vf: VectorField, certificate, box, resolution) -> RegionEstimate:
    """Membership at every cell center; the result is a pointwise under-approximation."""
    box = np.asarray(box, dtype=float)
    if box.shape != (vf.n, 2):
        raise DimensionError(f"box must have {vf.n} (lo, hi) pairs")
    axes, grid = cell_centers(box, resolution)
    res = tuple(len(a) for a in axes)
    est = RegionEstimate(box, res, axes, evaluate(vf, certificate, grid))
    if vf.n == 2:
        est.boundary = extract_boundary_2d(est)
    return est


def extract_boundary_2d(est: RegionEstimate) -> list[np.ndarray]:
    """Marching squares at level 1/2 over the membership grid of cell centers.

    Polylines are closed around regions away from the box edge and open where
    a region meets it. Vertices sit at edge midpoints between centers.
    """
    if est.n != 2:
        raise DimensionError("boundary extraction needs a 2-D region")
    lines = []
    d = (est.box[:, 1] - est.box[:, 0]) / np.array(est.resolution)
    for c in measure.find_contours(est.mask.astype(float), 0.5):
        lines.append(est.box[:, 0] + (c + 0.5) * d)
    lines.sort(key=lambda p: (-len(p), tuple(p[0])))
    return lines


def point_in_polygon(pt, poly: np.ndarray) -> bool:
    x, y = pt
    inside = False
    for (x1, y1), (x2, y2) in zip(poly, np.roll(poly, -1, axis=0)):
        if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
            inside = not inside
    return inside


def tuning_pattern(n: int) -> np.ndarray:
    t = np.full((n, n), math.inf)
    np.fill_diagonal(t, 1.0)
    return t


def tune_parameters(vf: VectorField, F, box, resolution: int = TUNE_RES,
                    scales=TUNE_SCALES) -> CertificateParams:
    """Scan ``lambda_bar = s T``, ``lambda_tilde = s T / 2`` over ``scales``.

    ``T`` has unit diagonal and unbounded off-diagonal entries. Keeps
    ``lambda_R < 1`` and maximizes the certified fraction of ``box`` at
    ``resolution``; ties go to the larger ``s``.
    """
    t = tuning_pattern(vf.n)
    mode = "jacobian_origin" if np.array_equal(np.asarray(F, float), vf.origin_jacobian) else "fixed_F"
    best, best_key = None, None
    for s in scales:
        params = make_params(F, s * t, 0.5 * s * t, mode=mode)
        if not params.globally_ok:
            continue
        frac = scan_region(vf, params, box, resolution).certified_fraction
        key = (frac, s)
        if best_key is None or key > best_key:
            best, best_key = params, key
    if best is None:
        raise NotApplicableError("no scale keeps lambda_R below 1")
    return best


def largest_certified_square(vf: VectorField, certificate, h_max: float, samples: int = 41,
                             tol: float = 1e-4) -> float:
    """Largest ``h`` (to ``tol``) with every sample of ``[-h, h]^n`` certified; bisection."""
    def ok(h: float) -> bool:
        g = np.linspace(-h, h, samples)
        pts = np.stack(np.meshgrid(*([g] * vf.n), indexing="ij"), axis=-1).reshape(-1, vf.n)
        return bool(evaluate(vf, certificate, pts).in_omega.all())

    if ok(h_max):
        return h_max
    lo, hi = 0.0, h_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


# -- output --------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else repr(float(v))


def region_csv(est: RegionEstimate) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(est.n)] + ["in_omega", "lambda_R", "hurwitz_ok", "reason"])
    v = est.verdicts
    for i in range(len(v)):
        w.writerow([repr(float(c)) for c in v.points[i]]
                   + [int(v.in_omega[i]), _fmt(v.lambda_R[i]), int(v.hurwitz_ok[i]), v.reason[i]])
    return buf.getvalue()


def read_region_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Points and ``in_omega`` flags from a region CSV."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("region file is empty")
    header = rows[0]
    if "in_omega" not in header:
        raise ValueError("region file lacks an in_omega column")
    k = header.index("in_omega")
    xcols = [i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    if not xcols:
        raise ValueError("region file has no coordinate columns")
    pts = np.array([[float(r[i]) for i in xcols] for r in rows[1:] if r], dtype=float).reshape(-1, len(xcols))
    flags = np.array([r[k].strip().lower() in ("1", "true") for r in rows[1:] if r], dtype=bool)
    return pts, flags


def boundary_csv(lines: list[np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["polyline", "x1", "x2"])
    for k, line in enumerate(lines):
        for x1, x2 in line:
            w.writerow([k, repr(float(x1)), repr(float(x2))])
    return buf.getvalue()


def region_svg(est: RegionEstimate) -> str:
    """Certified cells as filled rectangles and the boundary as paths, in box units."""
    if est.n != 2:
        raise DimensionError("SVG output needs a 2-D region")
    (x0, x1), (y0, y1) = est.box
    dx, dy = (x1 - x0) / est.resolution[0], (y1 - y0) / est.resolution[1]
    w, h = x1 - x0, y1 - y0
    stroke = 0.003 * max(w, h)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.6g} {-y1:.6g} {w:.6g} {h:.6g}" '
        f'width="600" height="{600 * h / w:.0f}">',
        f'<rect x="{x0:.6g}" y="{-y1:.6g}" width="{w:.6g}" height="{h:.6g}" fill="white" stroke="black" '
        f'stroke-width="{stroke:.3g}"/>',
        '<g fill="#7fb07f" stroke="none">',
    ]
    mask = est.mask
    for i, cx in enumerate(est.axes[0]):
        for j, cy in enumerate(est.axes[1]):
            if mask[i, j]:
                out.append(f'<rect x="{cx - dx / 2:.6g}" y="{-(cy + dy / 2):.6g}" '
                           f'width="{dx:.6g}" height="{dy:.6g}"/>')
    out.append("</g>")
    for line in est.boundary:
        d = " ".join(f"{'M' if k == 0 else 'L'}{p[0]:.6g},{-p[1]:.6g}" for k, p in enumerate(line))
        out.append(f'<path d="{d}" fill="none" stroke="#1f3f8f" stroke-width="{stroke:.3g}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
