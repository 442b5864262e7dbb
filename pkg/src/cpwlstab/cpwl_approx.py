"""Kuhn-triangulated CPWL approximations and error-bound co-simulation."""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PartitionError
from .matrix_core import eig_general, is_negative_definite, solve_linear
from .system_def import VectorField

SAFETY_FACTOR = 1.25
LATTICE_DENOM = 4  # vertices + two dyadic midpoint levels
FRONTIER_TOL = 1e-9


def _lattice(n: int, d: int) -> np.ndarray:
    """Barycentric lattice points with denominator ``d``, plus the barycenter."""
    pts = [c for c in itertools.product(range(d + 1), repeat=n + 1) if sum(c) == d]
    out = np.array(pts, dtype=float) / d
    return np.vstack([out, np.full((1, n + 1), 1.0 / (n + 1))])


@dataclass(frozen=True)
class SimplicialPartition:
    """Uniform grid on a box, each cell split into n! Kuhn simplices.

    Simplex ``(cell, perm)`` collects the cell-local points ``u`` with
    ``u[perm[0]] >= u[perm[1]] >= ...``; its vertices are
    ``v0 = corner`` and ``v[m+1] = v[m] + delta[perm[m]] * e[perm[m]]``.
    Ids are ``ravel(cell) * n! + index(perm)``, cells in C order and
    permutations in lexicographic order.
    """

    lo: np.ndarray
    hi: np.ndarray
    divisions: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        div = tuple(int(d) for d in np.broadcast_to(self.divisions, lo.shape))
        if lo.shape != hi.shape or lo.size == 0:
            raise PartitionError("box bounds must be non-empty and of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(lo >= hi):
            raise PartitionError("degenerate box: need finite lo < hi on every axis")
        if min(div) < 1:
            raise PartitionError("divisions must be >= 1 per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "divisions", div)

    @property
    def n(self) -> int:
        return self.lo.size

    @property
    def delta(self) -> np.ndarray:
        return (self.hi - self.lo) / np.array(self.divisions)

    @property
    def perms(self) -> list[tuple[int, ...]]:
        return list(itertools.permutations(range(self.n)))

    @property
    def n_simplices(self) -> int:
        return math.factorial(self.n) * int(np.prod(self.divisions))

    def split_id(self, sid: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        nf = math.factorial(self.n)
        if not 0 <= sid < self.n_simplices:
            raise IndexError(f"simplex id {sid} out of range")
        cell = np.unravel_index(sid // nf, self.divisions)
        return tuple(int(c) for c in cell), self.perms[sid % nf]

    def vertices(self, sid: int) -> np.ndarray:
        cell, perm = self.split_id(sid)
        d = self.delta
        v = np.empty((self.n + 1, self.n))
        v[0] = self.lo + np.array(cell) * d
        for m, axis in enumerate(perm):
            v[m + 1] = v[m]
            v[m + 1, axis] += d[axis]
        return v

    def all_vertices(self) -> np.ndarray:
        """Vertices of every simplex, shape ``(S, n+1, n)``, in id order."""
        n, d = self.n, self.delta
        cells = np.array(list(np.ndindex(*self.divisions)), dtype=float)
        perms = np.array(self.perms)
        corners = self.lo + cells * d
        out = np.repeat(corners[:, None, None, :], len(perms), axis=1)
        out = np.repeat(out, n + 1, axis=2)  # (C, P, n+1, n)
        steps = np.zeros((len(perms), n + 1, n))
        for p, perm in enumerate(perms):
            for m, axis in enumerate(perm):
                steps[p, m + 1:, axis] += d[axis]
        return (out + steps[None]).reshape(-1, n + 1, n)

    def locate(self, x) -> int:
        return int(self.locate_batch(np.asarray(x, dtype=float)[None, :])[0])

    def locate_batch(self, xs: np.ndarray) -> np.ndarray:
        """Simplex ids for rows of ``xs`` (points outside are clamped to the border cells).

        Points on shared faces resolve to the smallest id: the lower cell
        along each axis and the lexicographically first permutation.
        """
        xs = np.atleast_2d(xs)
        t = (xs - self.lo) / self.delta
        div = np.array(self.divisions)
        cell = np.clip(np.ceil(t) - 1, 0, div - 1).astype(int)
        u = t - cell
        order = np.argsort(-u, axis=1, kind="stable")
        perm_index = {p: i for i, p in enumerate(self.perms)}
        pidx = np.array([perm_index[tuple(r)] for r in order])
        flat = np.ravel_multi_index(cell.T, self.divisions)
        return flat * math.factorial(self.n) + pidx

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def barycentric(self, sid: int, x) -> np.ndarray:
        return barycentric(self.vertices(sid), x)


def barycentric(verts: np.ndarray, x) -> np.ndarray:
    n = verts.shape[1]
    m = np.vstack([verts.T, np.ones(n + 1)])
    return solve_linear(m, np.append(np.asarray(x, dtype=float), 1.0))


def build_partition(box, divisions) -> SimplicialPartition:
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise PartitionError("box must be a sequence of (lo, hi) pairs")
    return SimplicialPartition(box[:, 0], box[:, 1], tuple(np.broadcast_to(divisions, box.shape[0])))


@dataclass(frozen=True)
class AffinePiece:
    simplex_id: int
    vertices: np.ndarray
    A: np.ndarray
    B: np.ndarray
    lam: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.B

    @property
    def equilibrium(self) -> np.ndarray | None:
        try:
            return -solve_linear(self.A, self.B)
        except (ValueError, ZeroDivisionError, ArithmeticError):
            return None


def fit_pieces(vf: VectorField, part: SimplicialPartition,
               safety_factor: float = SAFETY_FACTOR) -> list[AffinePiece]:
    """Interpolate ``vf`` on every simplex and bound the componentwise error.

    Slopes come from consecutive vertex differences, which are axis aligned
    in a Kuhn simplex. ``lam`` is ``safety_factor`` times the largest
    deviation over the barycentric lattice of denominator 4 plus the barycenter.
    """
    n, d = part.n, part.delta
    verts = part.all_vertices()
    s = verts.shape[0]
    fv, ok = vf.field_batch(verts.reshape(-1, n))
    if not ok.all():
        raise DomainError("field is not finite at some partition vertex")
    fv = fv.reshape(s, n + 1, n)
    perms = np.array(part.perms)
    pidx = np.arange(s) % len(perms)
    A = np.empty((s, n, n))
    for m in range(n):
        axis = perms[pidx, m]
        A[np.arange(s), :, axis] = (fv[:, m + 1] - fv[:, m]) / d[axis][:, None]
    B = fv[:, 0] - np.einsum("sij,sj->si", A, verts[:, 0])

    lat = _lattice(n, LATTICE_DENOM)
    pts = np.einsum("lk,skj->slj", lat, verts)
    fp, ok = vf.field_batch(pts.reshape(-1, n))
    if not ok.all():
        raise DomainError("field is not finite at some sample point")
    fp = fp.reshape(s, len(lat), n)
    aff = np.einsum("sij,slj->sli", A, pts) + B[:, None, :]
    lam = safety_factor * np.max(np.abs(fp - aff), axis=1)
    lam[lam < 1e-13] = 0.0  # rounding noise on affine fields
    return [AffinePiece(i, verts[i], A[i], B[i], lam[i]) for i in range(s)]


def fit_piece_by_solve(vf: VectorField, verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Generic ``(n+1) x (n+1)`` interpolation solve; reference for :func:`fit_pieces`."""
    n = verts.shape[1]
    m = np.hstack([verts, np.ones((n + 1, 1))])
    fv = np.array([vf.field(v) for v in verts])
    coef = solve_linear(m, fv)  # rows: A' then B
    return coef[:n].T, coef[n]


@dataclass(frozen=True)
class WorstCasePlanes:
    A: np.ndarray
    B_plus: np.ndarray
    B_minus: np.ndarray

    def upper(self, x) -> np.ndarray:
        return self.A @ x + self.B_plus

    def lower(self, x) -> np.ndarray:
        return self.A @ x + self.B_minus


def worst_case_planes(piece: AffinePiece, lam=None) -> WorstCasePlanes:
    """Planes ``A x + B ± lam`` enclosing ``f`` on the simplex (slopes coincide)."""
    lam = piece.lam if lam is None else np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    return WorstCasePlanes(piece.A.copy(), piece.B + lam, piece.B - lam)


def sandwich_violation(vf: VectorField, piece: AffinePiece, n_samples: int = 1000,
                       seed: int = 0) -> float:
    """Largest amount by which ``f`` leaves the worst-case planes at random interior points."""
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(piece.vertices.shape[0]), size=n_samples)
    pts = w @ piece.vertices
    fx, ok = vf.field_batch(pts)
    planes = worst_case_planes(piece)
    lo = pts @ planes.A.T + planes.B_minus
    hi = pts @ planes.A.T + planes.B_plus
    viol = np.maximum(lo - fx, fx - hi)[ok]
    return float(max(0.0, viol.max(initial=0.0)))


@dataclass(frozen=True)
class Theorem1Verdict:
    certified: bool
    failing_simplex: int | None = None
    reason: str = "none"


def check_theorem1(pieces: list[AffinePiece], tol: float = FRONTIER_TOL) -> Theorem1Verdict:
    """Every ``A`` negative definite and no piece equilibrium on its own simplex boundary."""
    for p in pieces:
        if not is_negative_definite(p.A):
            return Theorem1Verdict(False, p.simplex_id, "not_negative_definite")
    for p in pieces:
        eq = p.equilibrium
        if eq is None:
            return Theorem1Verdict(False, p.simplex_id, "singular")
        bc = barycentric(p.vertices, eq)
        if bc.min() >= -tol and np.any(np.abs(bc) <= tol):
            return Theorem1Verdict(False, p.simplex_id, "equilibrium_on_frontier")
    return Theorem1Verdict(True)


def block_matrix(a_i: np.ndarray, a_k: np.ndarray) -> np.ndarray:
    """``[[A_i, A_k - A_i], [0, A_k]]``, the block form of the error-bound dynamics."""
    n = a_i.shape[0]
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = a_i
    out[:n, n:] = a_k - a_i
    out[n:, n:] = a_k
    return out


def _match_multisets(a: list[complex], b: list[complex]) -> float:
    """Greedy nearest matching; returns the worst matched distance."""
    if len(a) != len(b):
        return math.inf
    rest = list(b)
    worst = 0.0
    for z in a:
        j = min(range(len(rest)), key=lambda t: abs(rest[t] - z))
        worst = max(worst, abs(rest.pop(j) - z))
    return worst


def block_spectrum_gap(a_i: np.ndarray, a_k: np.ndarray) -> float:
    full = list(eig_general(block_matrix(a_i, a_k)).eigenvalues)
    parts = list(eig_general(a_i).eigenvalues) + list(eig_general(a_k).eigenvalues)
    return _match_multisets(full, parts)


@dataclass
class ErrorBoundRun:
    times: np.ndarray
    x: np.ndarray
    x_cpwl: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    simplex_true: np.ndarray
    simplex_cpwl: np.ndarray
    truncated: bool
    max_violation: float = 0.0

    @property
    def visited_pairs(self) -> set[tuple[int, int]]:
        return set(zip(self.simplex_true.tolist(), self.simplex_cpwl.tolist()))


def integrate_error_bounds(vf: VectorField, part: SimplicialPartition, pieces: list[AffinePiece],
                           x0, horizon: float, h: float | None = None) -> ErrorBoundRun:
    """Co-integrate ``x``, ``x_cpwl`` and the bounds ``E1``, ``E2`` with fixed-step RK4.

    ``i`` is the simplex of ``x`` and ``k`` that of ``x_cpwl``, both frozen
    over a step. With ``xi = (A_k - A_i) x_cpwl + (B_k - B_i)``,
    ``E1' = A_i E1 - xi - lam_i`` and ``E2' = A_i E2 - xi + lam_i``.
    Stops early (``truncated``) once either trajectory leaves the box.
    """
    n = part.n
    x0 = np.asarray(x0, dtype=float)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if not part.contains(x0):
        raise ValueError("x0 must lie in the partition box")
    if h is None:
        corners = np.array(list(itertools.product(*zip(part.lo, part.hi))))
        fmax = max(float(np.max(np.linalg.norm([p.A @ v + p.B for v in p.vertices], axis=1)))
                   for p in pieces)
        fmax = max(fmax, float(np.max(np.linalg.norm(vf.field_batch(corners)[0], axis=1))))
        h = min(part.delta.min() / (4 * fmax) if fmax > 0 else 0.01, 0.01)
    steps = int(math.ceil(horizon / h))
    h = horizon / steps

    def rhs(state, i, k):
        x, xc, e1, e2 = state.reshape(4, n)
        pi, pk = pieces[i], pieces[k]
        xi = (pk.A - pi.A) @ xc + (pk.B - pi.B)
        return np.concatenate([
            vf.field(x),
            pk.A @ xc + pk.B,
            pi.A @ e1 - xi - pi.lam,
            pi.A @ e2 - xi + pi.lam,
        ])

    state = np.concatenate([x0, x0, np.zeros(n), np.zeros(n)])
    times, states, si, sk = [0.0], [state], [], []
    truncated = False
    for step in range(steps):
        x, xc = state[:n], state[n:2 * n]
        i, k = part.locate(x), part.locate(xc)
        si.append(i)
        sk.append(k)
        k1 = rhs(state, i, k)
        k2 = rhs(state + 0.5 * h * k1, i, k)
        k3 = rhs(state + 0.5 * h * k2, i, k)
        k4 = rhs(state + h * k3, i, k)
        state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        times.append((step + 1) * h)
        states.append(state)
        if not (part.contains(state[:n]) and part.contains(state[n:2 * n])):
            truncated = True
            break
    last = states[-1]
    si.append(part.locate(np.clip(last[:n], part.lo, part.hi)))
    sk.append(part.locate(np.clip(last[n:2 * n], part.lo, part.hi)))
    arr = np.array(states)
    run = ErrorBoundRun(np.array(times), arr[:, :n], arr[:, n:2 * n], arr[:, 2 * n:3 * n],
                        arr[:, 3 * n:], np.array(si), np.array(sk), truncated)
    run.max_violation = sandwich_margin(run)
    return run


def sandwich_margin(run: ErrorBoundRun) -> float:
    """Largest amount by which ``x - x_cpwl`` leaves ``[min(E1,E2), max(E1,E2)]``."""
    err = run.x - run.x_cpwl
    lo = np.minimum(run.e1, run.e2)
    hi = np.maximum(run.e1, run.e2)
    return float(max(0.0, np.max(lo - err), np.max(err - hi)))


def pieces_csv(pieces: list[AffinePiece]) -> str:
    """CSV with simplex id, vertex coordinates, row-major A, B and lambda."""
    if not pieces:
        return ""
    n = pieces[0].A.shape[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["simplex"]
    header += [f"v{m}_x{j + 1}" for m in range(n + 1) for j in range(n)]
    header += [f"A{r + 1}{c + 1}" for r in range(n) for c in range(n)]
    header += [f"B{j + 1}" for j in range(n)] + [f"lambda{j + 1}" for j in range(n)]
    w.writerow(header)
    for p in pieces:
        w.writerow([p.simplex_id] + [repr(float(v)) for v in
                   np.concatenate([p.vertices.ravel(), p.A.ravel(), p.B, p.lam])])
    return buf.getvalue()
