"""
Stability certificates built from a Hurwitz matrix ``F`` and bound matrices.

Bound matrices may contain ``inf`` for unbounded entries. Such entries are
skipped by row minima, contribute nothing to the Rayleigh matrix ``R``, and
make the matching ``lambda_bar - lambda_tilde`` entry unbounded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, DomainError, NotApplicableError
from .matrix_core import (
    HURWITZ_EPS,
    abs_entrywise,
    as_matrix,
    eig_general,
    eig_symmetric_max,
    lyapunov_residual,
    solve_lyapunov,
)
from .system_def import VectorField

RAYLEIGH_MARGIN = 1e-9
MODES = ("fixed_F", "jacobian_origin", "jacobian_pointwise")
REASONS = ("none", "jac_x_bound", "jac_F_bound", "rayleigh", "hurwitz", "domain_error")


def _bounds(m, n: int, name: str) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.shape != (n, n):
        raise DimensionError(f"{name} must be {n}x{n}, got {a.shape}")
    if np.any(np.isnan(a)) or np.any(a < 0):
        raise ContractError(f"{name} entries must be nonnegative (inf allowed)")
    return a


def row_min(lt: np.ndarray) -> np.ndarray:
    """Per-row minimum over bounded entries; ``inf`` if a row is fully unbounded."""
    return np.min(lt, axis=1)


def bound_gap(lb: np.ndarray, lt: np.ndarray) -> np.ndarray:
    """``lambda_bar - lambda_tilde`` with unbounded ``lambda_bar`` giving ``inf``."""
    with np.errstate(invalid="ignore"):
        gap = lb - lt
    gap[np.isinf(lb)] = math.inf
    return gap


def rayleigh_matrix(p: np.ndarray, lb: np.ndarray, lt: np.ndarray) -> np.ndarray:
    s = lb + lt
    s[~np.isfinite(s)] = 0.0
    ap = abs_entrywise(p)
    r = ap @ s + s.T @ ap
    return 0.5 * (r + r.T)


def rayleigh(p: np.ndarray, lb: np.ndarray, lt: np.ndarray) -> float:
    return eig_symmetric_max(rayleigh_matrix(p, lb, lt))


def below_one(lam_r: float) -> bool:
    return lam_r <= 1.0 - RAYLEIGH_MARGIN


@dataclass(frozen=True)
class CertificateParams:
    F: np.ndarray
    lambda_bar: np.ndarray
    lambda_tilde: np.ndarray
    P: np.ndarray
    mode: str = "fixed_F"
    lambda_R: float = field(default=math.nan)

    @property
    def globally_ok(self) -> bool:
        return below_one(self.lambda_R)

    @property
    def gap(self) -> np.ndarray:
        return bound_gap(self.lambda_bar, self.lambda_tilde)

    @property
    def row_min_tilde(self) -> np.ndarray:
        return row_min(self.lambda_tilde)


def make_params(F, lambda_bar, lambda_tilde, mode: str = "fixed_F") -> CertificateParams:
    """Validate the triple, solve ``F'P + PF = -I`` and evaluate the Rayleigh bound.

    Raises :class:`NotApplicableError` when ``F`` is not Hurwitz.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    f = as_matrix(F, square=True)
    n = f.shape[0]
    lb = _bounds(lambda_bar, n, "lambda_bar")
    lt = _bounds(lambda_tilde, n, "lambda_tilde")
    if np.any(lb < lt):
        raise ContractError("lambda_bar must dominate lambda_tilde entrywise")
    p = solve_lyapunov(f)
    return CertificateParams(f, lb, lt, p, mode, rayleigh(p, lb, lt))


def params_from_origin(vf: VectorField, lambda_bar, lambda_tilde) -> CertificateParams:
    return make_params(vf.origin_jacobian, lambda_bar, lambda_tilde, mode="jacobian_origin")


# -- linear-system test --------------------------------------------------------

@dataclass(frozen=True)
class LemmaVerdict:
    certified: bool
    reason: str
    lambda_R: float
    P: np.ndarray


def lemma1_test(F, A, B, lambda_bar, lambda_tilde) -> LemmaVerdict:
    """Bounds on ``A`` and ``B`` relative to ``F`` that force ``A`` negative definite.

    Checks ``|-F + A + B 1'| <= lambda_bar``, ``|B_j| <= min_k lambda_tilde_jk``
    and ``lambda_max(R) < 1``; the reason names the first failure.
    """
    f = as_matrix(F, square=True)
    n = f.shape[0]
    a = as_matrix(A, square=True)
    b = np.asarray(B, dtype=float).reshape(-1)
    if a.shape != f.shape or b.shape != (n,):
        raise DimensionError("F, A and B shapes disagree")
    lb = _bounds(lambda_bar, n, "lambda_bar")
    lt = _bounds(lambda_tilde, n, "lambda_tilde")
    p = solve_lyapunov(f)
    lam_r = rayleigh(p, lb, lt)
    if np.any(np.abs(-f + a + b[:, None]) > lb):
        return LemmaVerdict(False, "slope_bound", lam_r, p)
    if np.any(np.abs(b) > row_min(lt)):
        return LemmaVerdict(False, "offset_bound", lam_r, p)
    if not below_one(lam_r):
        return LemmaVerdict(False, "rayleigh", lam_r, p)
    return LemmaVerdict(True, "none", lam_r, p)


def corollary1_lyapunov(F, A, B, lambda_bar, lambda_tilde) -> np.ndarray:
    """``P`` such that ``x'Px`` is a Lyapunov function for ``x' = A x``."""
    v = lemma1_test(F, A, B, lambda_bar, lambda_tilde)
    if not v.certified:
        raise NotApplicableError(f"bounds not satisfied ({v.reason})")
    return v.P


def lyapunov_decrease(p: np.ndarray, a: np.ndarray) -> float:
    """Largest eigenvalue of ``PA + A'P``; negative means ``x'Px`` decreases."""
    q = p @ a + a.T @ p
    return eig_symmetric_max(0.5 * (q + q.T))


# -- pointwise verdicts --------------------------------------------------------

@dataclass(frozen=True)
class PointVerdict:
    x: tuple
    in_omega: bool
    lambda_R: float
    hurwitz_ok: bool
    failed_condition: str = "none"


def _omega_reason(j: np.ndarray, x: np.ndarray, params: CertificateParams) -> str:
    if np.any(np.abs(j @ x) > params.row_min_tilde):
        return "jac_x_bound"
    if np.any(np.abs(j - params.F) > params.gap):
        return "jac_F_bound"
    if not params.globally_ok:
        return "rayleigh"
    return "none"


def omega_membership(vf: VectorField, params: CertificateParams, x) -> PointVerdict:
    x = np.asarray(x, dtype=float)
    try:
        j = vf.jacobian(x)
    except DomainError:
        return PointVerdict(tuple(x), False, params.lambda_R, True, "domain_error")
    reason = _omega_reason(j, x, params)
    return PointVerdict(tuple(x), reason == "none", params.lambda_R, True, reason)


@dataclass
class BatchVerdicts:
    """Column-oriented verdicts for many points."""

    points: np.ndarray
    in_omega: np.ndarray
    lambda_R: np.ndarray
    hurwitz_ok: np.ndarray
    reason: np.ndarray

    def __len__(self) -> int:
        return len(self.in_omega)

    def __getitem__(self, i: int) -> PointVerdict:
        return PointVerdict(tuple(self.points[i]), bool(self.in_omega[i]), float(self.lambda_R[i]),
                            bool(self.hurwitz_ok[i]), str(self.reason[i]))


def omega_conditions_batch(vf: VectorField, params: CertificateParams, xs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise conditions only: ``(jac_x_ok, jac_F_ok, finite)`` masks."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    js, finite = vf.jacobian_batch(xs)
    with np.errstate(invalid="ignore"):
        jx = np.abs(np.einsum("mij,mj->mi", js, xs))
        c1 = np.all(jx <= params.row_min_tilde, axis=1) & finite
        c2 = np.all(np.abs(js - params.F) <= params.gap, axis=(1, 2)) & finite
    return c1, c2, finite


def omega_batch(vf: VectorField, params: CertificateParams, xs) -> BatchVerdicts:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    c1, c2, finite = omega_conditions_batch(vf, params, xs)
    glob = params.globally_ok
    reason = np.full(len(xs), "none", dtype=object)
    if not glob:
        reason[:] = "rayleigh"
    reason[~c2] = "jac_F_bound"
    reason[~c1] = "jac_x_bound"
    reason[~finite] = "domain_error"
    inside = c1 & c2 & glob
    return BatchVerdicts(xs, inside, np.full(len(xs), params.lambda_R), np.ones(len(xs), bool), reason)


def rank2_closed_form(w) -> float:
    """Largest eigenvalue of ``2(w1' + 1w')`` for ``w >= 0``."""
    w = np.asarray(w, dtype=float)
    return 2.0 * (w.sum() + math.sqrt(w.size) * float(np.linalg.norm(w)))


def systematic_from_jacobian(j: np.ndarray, x: np.ndarray) -> tuple[bool, float]:
    """``(hurwitz_ok, lambda_R)`` for the pointwise Jacobian test; ``lambda_R`` is inf if not Hurwitz."""
    if eig_general(j).max_real_part >= -HURWITZ_EPS:
        return False, math.inf
    p = solve_lyapunov(j)
    w = abs_entrywise(p) @ np.abs(j @ x)
    h = np.outer(w, np.ones_like(w))
    return True, eig_symmetric_max(2.0 * (h + h.T))


def systematic_test(vf: VectorField, x) -> PointVerdict:
    """Pointwise test with ``F = J(x)``: ``J(x)`` Hurwitz and ``lambda_R(x) < 1``."""
    x = np.asarray(x, dtype=float)
    try:
        j = vf.jacobian(x)
    except DomainError:
        return PointVerdict(tuple(x), False, math.inf, False, "domain_error")
    ok, lam_r = systematic_from_jacobian(j, x)
    if not ok:
        return PointVerdict(tuple(x), False, lam_r, False, "hurwitz")
    inside = below_one(lam_r)
    return PointVerdict(tuple(x), inside, lam_r, True, "none" if inside else "rayleigh")


def systematic_batch(vf: VectorField, xs) -> BatchVerdicts:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    js, finite = vf.jacobian_batch(xs)
    m = len(xs)
    inside = np.zeros(m, bool)
    lam = np.full(m, math.inf)
    hur = np.zeros(m, bool)
    reason = np.full(m, "domain_error", dtype=object)
    for i in np.flatnonzero(finite):
        ok, lam_r = systematic_from_jacobian(js[i], xs[i])
        hur[i], lam[i] = ok, lam_r
        if not ok:
            reason[i] = "hurwitz"
        elif below_one(lam_r):
            inside[i], reason[i] = True, "none"
        else:
            reason[i] = "rayleigh"
    return BatchVerdicts(xs, inside, lam, hur, reason)


@dataclass(frozen=True)
class StabilitySet:
    mask: np.ndarray
    P: np.ndarray


def asymptotic_stability_set(vf: VectorField, params: CertificateParams, xs) -> StabilitySet:
    """Points satisfying the ``|J(x) x|`` row bound, with the Lyapunov form ``x'Px``.

    Requires globally certified params.
    """
    if not params.globally_ok:
        raise NotApplicableError(f"lambda_R = {params.lambda_R:.6g} is not below 1")
    c1, _, _ = omega_conditions_batch(vf, params, xs)
    return StabilitySet(c1, params.P.copy())


def check_params(params: CertificateParams) -> float:
    """Residual of the stored Lyapunov solution."""
    return lyapunov_residual(params.F, params.P)
