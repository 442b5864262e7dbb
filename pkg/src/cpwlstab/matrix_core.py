"""
Dense linear algebra for the small matrices that appear in the certificates.

Everything here is written for n <= ~10 and favours robustness over speed.
Matrices are plain ``numpy`` float arrays; the inner loops run on Python
lists because that is faster than numpy indexing at these sizes.

Routines
--------
eig_general
    Householder reduction to upper Hessenberg form followed by the
    Francis double-shift QR iteration (real arithmetic, conjugate pairs
    come out exactly conjugate).
eig_symmetric_max
    Cyclic Jacobi rotations; returns the largest eigenvalue.
solve_lyapunov
    ``F'P + PF = -I`` by Kronecker vectorisation and Gaussian elimination
    with partial pivoting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ConvergenceError, DimensionError, NotApplicableError

#: strictness used for every Hurwitz / definiteness decision
HURWITZ_EPS = 1e-9
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: tuple[complex, ...]

    @property
    def max_real_part(self) -> float:
        return max(ev.real for ev in self.eigenvalues)

    def as_array(self) -> np.ndarray:
        return np.array(self.eigenvalues, dtype=complex)

    def __len__(self) -> int:
        return len(self.eigenvalues)


def as_matrix(m, *, square: bool = False) -> np.ndarray:
    """Validate and copy ``m`` into a 2-D float array with finite entries."""
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix entries must be finite")
    return a


def abs_entrywise(m) -> np.ndarray:
    return np.abs(as_matrix(m))


# ---------------------------------------------------------------------------
# General eigenvalues
# ---------------------------------------------------------------------------

def hessenberg(m) -> np.ndarray:
    """Upper Hessenberg matrix orthogonally similar to ``m`` (Householder)."""
    h = as_matrix(m, square=True)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _hqr(a: list[list[float]]) -> list[complex]:
    # Francis double-shift QR on an upper Hessenberg matrix, in place.
    n = len(a)
    max_iter = 100 * n * n
    wr = [0.0] * n
    wi = [0.0] * n
    anorm = 0.0
    for i in range(n):
        for j in range(max(i - 1, 0), n):
            anorm += abs(a[i][j])
    nn = n - 1
    t = 0.0
    total = 0
    while nn >= 0:
        its = 0
        while True:
            # look for a single small subdiagonal element
            l = nn
            while l >= 1:
                s = abs(a[l - 1][l - 1]) + abs(a[l][l])
                if s == 0.0:
                    s = anorm
                if abs(a[l][l - 1]) + s == s:
                    a[l][l - 1] = 0.0
                    break
                l -= 1
            x = a[nn][nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1][nn - 1]
            w = a[nn][nn - 1] * a[nn - 1][nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if total >= max_iter:
                raise ConvergenceError(f"QR iteration did not converge after {max_iter} sweeps")
            if its in (10, 20) or (its > 20 and its % 10 == 0):
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i][i] -= x
                s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            total += 1
            m = nn - 2
            while m >= l:
                z = a[m][m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1]
                q = a[m + 1][m + 1] - z - r - s
                r = a[m + 2][m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m][m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1][m - 1]) + abs(z) + abs(a[m + 1][m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i][i - 2] = 0.0
                if i != m + 2:
                    a[i][i - 3] = 0.0
            k = m
            while k <= nn - 1:
                if k != m:
                    p = a[k][k - 1]
                    q = a[k + 1][k - 1]
                    r = a[k + 2][k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s != 0.0:
                    if k == m:
                        if l != m:
                            a[k][k - 1] = -a[k][k - 1]
                    else:
                        a[k][k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k][j] + q * a[k + 1][j]
                        if k != nn - 1:
                            p += r * a[k + 2][j]
                            a[k + 2][j] -= p * z
                        a[k + 1][j] -= p * y
                        a[k][j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i][k] + y * a[i][k + 1]
                        if k != nn - 1:
                            p += z * a[i][k + 2]
                            a[i][k + 2] -= p * r
                        a[i][k + 1] -= p * q
                        a[i][k] -= p
                k += 1
    return [complex(wr[i], wi[i]) for i in range(n)]


def eig_general(m) -> EigenResult:
    """All eigenvalues of a real square matrix.

    Raises
    ------
    DimensionError
        If ``m`` is not square.
    ConvergenceError
        If the QR iteration exceeds ``100 n**2`` sweeps.
    """
    a = as_matrix(m, square=True)
    n = a.shape[0]
    if n == 1:
        return EigenResult((complex(a[0, 0], 0.0),))
    h = hessenberg(a) if n > 2 else a
    evs = _hqr(h.tolist())
    # conjugate pairs first by real part then imaginary part, for determinism
    evs.sort(key=lambda z: (-z.real, z.imag))
    return EigenResult(tuple(evs))


def is_hurwitz(m, eps: float = HURWITZ_EPS) -> bool:
    return eig_general(m).max_real_part < -eps


# ---------------------------------------------------------------------------
# Symmetric eigenvalues
# ---------------------------------------------------------------------------

def _symmetrize(m) -> np.ndarray:
    a = as_matrix(m, square=True)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ContractError("matrix is not symmetric within tolerance")
    return 0.5 * (a + a.T)


def jacobi_eigenvalues(m, max_sweeps: int = 60) -> list[float]:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = _symmetrize(m).tolist()
    n = len(a)
    for _ in range(max_sweeps):
        off = sum(a[i][j] * a[i][j] for i in range(n) for j in range(n) if i != j)
        diag = sum(a[i][i] * a[i][i] for i in range(n))
        if off <= 1e-32 * max(diag, 1e-300) or off == 0.0:
            return [a[i][i] for i in range(n)]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p][q]
                if apq == 0.0:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k][p]
                    akq = a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p][k]
                    aqk = a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
                a[p][q] = a[q][p] = 0.0
    raise ConvergenceError("Jacobi rotations did not converge")


def eig_symmetric_max(m) -> float:
    """Largest eigenvalue of a symmetric matrix (Rayleigh-quotient maximum)."""
    return max(jacobi_eigenvalues(m))


def is_negative_definite(a, eps: float = HURWITZ_EPS) -> bool:
    """``x'Ax < 0`` for every ``x != 0``, i.e. the symmetric part is negative definite."""
    a = as_matrix(a, square=True)
    return max(jacobi_eigenvalues(0.5 * (a + a.T))) < -eps


# ---------------------------------------------------------------------------
# Linear systems and the Lyapunov equation
# ---------------------------------------------------------------------------

def solve_linear(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting."""
    a = as_matrix(a, square=True)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    vec = b.ndim == 1
    rhs = b.reshape(n, -1)
    if rhs.shape[0] != n:
        raise DimensionError("right-hand side does not match the matrix")
    m = np.hstack([a, rhs]).tolist()
    ncol = len(m[0])
    for k in range(n):
        piv = max(range(k, n), key=lambda i: abs(m[i][k]))
        if m[piv][k] == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        if piv != k:
            m[k], m[piv] = m[piv], m[k]
        rowk = m[k]
        inv = 1.0 / rowk[k]
        for i in range(k + 1, n):
            rowi = m[i]
            f = rowi[k] * inv
            if f != 0.0:
                for j in range(k, ncol):
                    rowi[j] -= f * rowk[j]
    x = [[0.0] * (ncol - n) for _ in range(n)]
    for c in range(ncol - n):
        for i in range(n - 1, -1, -1):
            s = m[i][n + c]
            row = m[i]
            for j in range(i + 1, n):
                s -= row[j] * x[j][c]
            x[i][c] = s / row[i]
    out = np.array(x)
    return out[:, 0] if vec else out


def lyapunov_residual(f, p) -> float:
    f = np.asarray(f, dtype=float)
    p = np.asarray(p, dtype=float)
    return float(np.max(np.abs(f.T @ p + p @ f + np.eye(f.shape[0]))))


def solve_lyapunov(f) -> np.ndarray:
    """Symmetric positive definite ``P`` with ``F'P + PF = -I``.

    The equation is vectorised as ``(I kron F' + F' kron I) vec(P) = -vec(I)``
    (column-major ``vec``) and solved directly.

    Raises
    ------
    NotApplicableError
        If ``f`` is not Hurwitz (no positive definite solution exists).
    """
    f = as_matrix(f, square=True)
    n = f.shape[0]
    eig = eig_general(f)
    if eig.max_real_part >= -HURWITZ_EPS:
        raise NotApplicableError(
            f"F is not Hurwitz (max real part of spectrum {eig.max_real_part:.3g})"
        )
    eye = np.eye(n)
    k = np.kron(eye, f.T) + np.kron(f.T, eye)
    rhs = -eye.reshape(-1, order="F")
    vec_p = solve_linear(k, rhs)
    p = vec_p.reshape(n, n, order="F")
    # one step of iterative refinement keeps the residual at round-off level
    r = f.T @ p + p @ f + eye
    if np.max(np.abs(r)) > 1e-12:
        p -= solve_linear(k, r.reshape(-1, order="F")).reshape(n, n, order="F")
    return 0.5 * (p + p.T)
