import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpwlstab.errors import ContractError, ConvergenceError, DimensionError, NotApplicableError
from cpwlstab.matrix_core import (
    abs_entrywise,
    eig_general,
    eig_symmetric_max,
    hessenberg,
    is_hurwitz,
    is_negative_definite,
    lyapunov_residual,
    solve_linear,
    solve_lyapunov,
)

from conftest import random_hurwitz


def sorted_spectrum(ev):
    return sorted(np.asarray(ev, dtype=complex), key=lambda z: (round(z.real, 6), round(z.imag, 6)))


def assert_same_spectrum(a, b, tol):
    a, b = list(a), list(b)
    assert len(a) == len(b)
    for z in a:
        j = min(range(len(b)), key=lambda k: abs(b[k] - z))
        assert abs(b.pop(j) - z) <= tol


class TestEigGeneral:
    def test_diagonal(self):
        ev = eig_general([[-1.0, 0.0], [0.0, -1.0]])
        assert ev.as_array().tolist() == [-1, -1]
        assert ev.max_real_part == -1.0
        assert len(ev) == 2

    def test_rotation_block(self):
        # alpha = -1 gives alpha +- i
        ev = eig_general([[-1.0, -1.0], [1.0, -1.0]]).as_array()
        assert_same_spectrum(ev, [-1 + 1j, -1 - 1j], 1e-12)

    def test_companion_of_known_roots(self):
        # (s+1)(s+2)(s+3)(s+4) = s^4 + 10 s^3 + 35 s^2 + 50 s + 24
        c = np.array([[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [-24, -50, -35, -10]], float)
        assert_same_spectrum(eig_general(c).as_array(), [-1, -2, -3, -4], 1e-8)

    def test_symmetric_has_real_spectrum(self, rng):
        for _ in range(50):
            m = rng.normal(size=(5, 5))
            ev = eig_general(m + m.T).as_array()
            assert np.max(np.abs(ev.imag)) <= 1e-10

    def test_matches_numpy(self, rng):
        for n in range(1, 9):
            for _ in range(20):
                m = rng.normal(size=(n, n))
                assert_same_spectrum(eig_general(m).as_array(), np.linalg.eigvals(m), 1e-8)

    def test_max_real_part_is_exact_max(self, rng):
        m = rng.normal(size=(6, 6))
        ev = eig_general(m)
        assert ev.max_real_part == max(z.real for z in ev.eigenvalues)

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            eig_general(np.ones((2, 3)))

    def test_non_finite_rejected(self):
        with pytest.raises(ContractError):
            eig_general([[np.nan, 0], [0, 1]])

    def test_hessenberg_preserves_spectrum(self, rng):
        m = rng.normal(size=(6, 6))
        h = hessenberg(m)
        assert np.allclose(np.tril(h, -2), 0.0)
        assert_same_spectrum(np.linalg.eigvals(h), np.linalg.eigvals(m), 1e-9)

    @given(st.integers(2, 6), st.integers(0, 2**31 - 1))
    def test_similarity_invariance(self, n, seed):
        r = np.random.default_rng(seed)
        a = r.normal(size=(n, n))
        t = r.normal(size=(n, n)) + n * np.eye(n)  # well conditioned
        b = np.linalg.solve(t, a @ t)
        assert_same_spectrum(eig_general(a).as_array(), eig_general(b).as_array(), 1e-6)

    def test_convergence_error_type(self):
        assert issubclass(ConvergenceError, RuntimeError)


class TestSymmetric:
    def test_identity(self):
        assert eig_symmetric_max(np.eye(3)) == pytest.approx(1.0, abs=1e-14)

    def test_zero(self):
        assert eig_symmetric_max(np.zeros((4, 4))) == 0.0

    def test_rank_two_example(self):
        w = np.array([1.0, 2.0])
        r = np.outer(w, np.ones(2)) + np.outer(np.ones(2), w)
        # characteristic polynomial of [[2, 3], [3, 4]]: s^2 - 6 s - 1
        assert eig_symmetric_max(r) == pytest.approx(3 + math.sqrt(10), abs=1e-12)
        assert 3 + math.sqrt(2) * math.sqrt(5) == pytest.approx(3 + math.sqrt(10))

    @given(st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_rank_two_closed_form(self, n, seed):
        w = np.random.default_rng(seed).uniform(0, 2, size=n)
        r = np.outer(w, np.ones(n)) + np.outer(np.ones(n), w)
        expected = w.sum() + math.sqrt(n) * np.linalg.norm(w)
        assert abs(eig_symmetric_max(r) - expected) <= 1e-9

    def test_matches_numpy(self, rng):
        for n in range(1, 8):
            m = rng.normal(size=(n, n))
            s = m + m.T
            assert eig_symmetric_max(s) == pytest.approx(np.linalg.eigvalsh(s).max(), abs=1e-10)

    def test_asymmetry_rejected(self):
        with pytest.raises(ContractError):
            eig_symmetric_max([[1.0, 2.0], [0.0, 1.0]])

    def test_rounding_asymmetry_tolerated(self):
        m = np.array([[1.0, 2.0], [2.0 + 1e-14, 1.0]])
        assert eig_symmetric_max(m) == pytest.approx(3.0)

    def test_deterministic(self, rng):
        m = rng.normal(size=(5, 5))
        s = m + m.T
        assert eig_symmetric_max(s) == eig_symmetric_max(s.copy())


class TestLyapunov:
    def test_minus_identity(self):
        assert np.allclose(solve_lyapunov(-np.eye(2)), 0.5 * np.eye(2), atol=1e-14)

    def test_rotation_block(self):
        # F'P + PF = -I with P = c I gives c (F + F') = -I, so c = 1/2 at alpha = -1
        p = solve_lyapunov([[-1.0, -1.0], [1.0, -1.0]])
        assert np.allclose(p, 0.5 * np.eye(2), atol=1e-14)

    def test_companion_two_by_two(self):
        # hand solution of F'P + PF = -I for F = [[-1, -1], [1, 0]]
        p = solve_lyapunov([[-1.0, -1.0], [1.0, 0.0]])
        assert np.allclose(p, [[1.0, 0.5], [0.5, 1.5]], atol=1e-12)

    def test_not_hurwitz(self):
        with pytest.raises(NotApplicableError):
            solve_lyapunov([[0.0, 1.0], [-1.0, 0.0]])
        with pytest.raises(NotApplicableError):
            solve_lyapunov([[1.0]])

    @pytest.mark.parametrize("normal", [True, False])
    def test_random_family(self, rng, normal):
        for _ in range(40):
            n = int(rng.integers(1, 7))
            f = random_hurwitz(rng, n, normal=normal)
            p = solve_lyapunov(f)
            assert np.array_equal(p, p.T)
            assert np.linalg.eigvalsh(p).min() > 0
            assert lyapunov_residual(f, p) <= 1e-9
            # independent check of the residual
            assert np.max(np.abs(f.T @ p + p @ f + np.eye(n))) <= 1e-9


class TestDefiniteness:
    def test_examples(self):
        assert is_negative_definite(-np.eye(3))
        assert not is_negative_definite([[0.0, 1.0], [-1.0, 0.0]])
        # symmetric part [[-1, 5], [5, -1]] has eigenvalue 4
        assert not is_negative_definite([[-1.0, 10.0], [0.0, -1.0]])

    def test_sampling_oracle(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 6))
            a = rng.normal(size=(n, n)) - rng.uniform(0, 3) * np.eye(n)
            x = rng.normal(size=(10_000, n))
            q = np.einsum("ij,jk,ik->i", x, a, x)
            if is_negative_definite(a):
                assert np.all(q < 0)
            if np.any(q >= 0):
                assert not is_negative_definite(a)

    def test_hurwitz(self):
        assert is_hurwitz([[-1.0, 100.0], [0.0, -1.0]])
        assert not is_hurwitz([[0.0, 1.0], [-1.0, 0.0]])


class TestHelpers:
    def test_abs_entrywise(self):
        assert abs_entrywise([[-1, 2], [3, -4]]).tolist() == [[1, 2], [3, 4]]
        assert abs_entrywise(np.zeros((2, 2))).tolist() == [[0, 0], [0, 0]]
        # entrywise |P| at h' = -1 for the displayed form [[1/h', 1/2], [1/2, -(2+h'^2)/(2h')]]
        h = -1.0
        p = np.array([[1 / h, 0.5], [0.5, -(2 + h * h) / (2 * h)]])
        assert np.allclose(abs_entrywise(p), [[1, 0.5], [0.5, 1.5]])

    def test_solve_linear(self, rng):
        a = rng.normal(size=(5, 5)) + 5 * np.eye(5)
        b = rng.normal(size=(5, 2))
        assert np.allclose(solve_linear(a, b), np.linalg.solve(a, b))
        assert np.allclose(solve_linear(a, b[:, 0]), np.linalg.solve(a, b[:, 0]))
