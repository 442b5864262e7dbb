import math

import numpy as np
import pytest

from cpwlstab import region as rg
from cpwlstab.certificates import BatchVerdicts, params_from_origin
from cpwlstab.errors import DimensionError, NotApplicableError
from cpwlstab.ode_sim import attraction_oracle

from conftest import FIXTURES, INF

BOX2 = np.array([[-1.0, 1.0], [-1.0, 1.0]])


def fake_estimate(box, res, predicate):
    axes, grid = rg.cell_centers(box, res)
    inside = predicate(grid)
    m = len(grid)
    v = BatchVerdicts(grid, inside, np.zeros(m), np.ones(m, bool),
                      np.where(inside, "none", "rayleigh").astype(object))
    est = rg.RegionEstimate(np.asarray(box, float), tuple(len(a) for a in axes), axes, v)
    est.boundary = rg.extract_boundary_2d(est)
    return est


def boundary_cells(mask):
    """Cells with a differently-labelled neighbour (8-connectivity)."""
    p = np.pad(mask, 1, mode="edge")
    out = np.zeros_like(mask)
    r, c = mask.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            out |= p[1 + di:1 + di + r, 1 + dj:1 + dj + c] != mask
    return out


class TestScan:
    def test_cell_centers(self):
        axes, grid = rg.cell_centers(BOX2, 2)
        assert [a.tolist() for a in axes] == [[-0.5, 0.5], [-0.5, 0.5]]
        assert grid.tolist() == [[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]]

    def test_two_by_two(self, systems):
        est = rg.scan_region(systems["linear"], rg.POINTWISE, BOX2, 2)
        assert len(est.verdicts) == 4 and est.mask.shape == (2, 2)

    def test_resolution_checked(self, systems):
        with pytest.raises(ValueError):
            rg.scan_region(systems["linear"], rg.POINTWISE, BOX2, 1)
        with pytest.raises(DimensionError):
            rg.scan_region(systems["linear"], rg.POINTWISE, [[-1, 1]], 4)

    def test_verdict_count(self, systems):
        est = rg.scan_region(systems["hopf"], rg.POINTWISE, BOX2, (7, 5))
        assert len(est.verdicts) == 35 and est.mask.shape == (7, 5)

    def test_linear_closed_form(self, systems):
        est = rg.scan_region(systems["linear"], rg.POINTWISE, BOX2, 41)
        x = est.verdicts.points
        w = 0.5 * np.abs(x)
        lam = 2 * (w.sum(axis=1) + math.sqrt(2) * np.linalg.norm(w, axis=1))
        assert np.array_equal(est.verdicts.in_omega, lam <= 1 - 1e-9)
        assert est.mask[20, 20]  # origin cell

    def test_vanderpol_nonempty(self, systems):
        est = rg.scan_region(systems["vanderpol"], rg.POINTWISE, BOX2, 41)
        assert 0 < est.certified_fraction < 1

    def test_domain_errors_recorded(self):
        from cpwlstab.system_def import parse_system
        vf = parse_system("dim = 2\nf1 = -x1 / (1 - x1)\nf2 = -x2")
        est = rg.scan_region(vf, rg.POINTWISE, [[0.5, 1.5], [-1, 1]], 2)
        assert list(est.verdicts.reason).count("domain_error") == 0
        est = rg.scan_region(vf, rg.POINTWISE, [[0.0, 2.0], [-1, 1]], (3, 2))
        assert "domain_error" in set(est.verdicts.reason)

    def test_deterministic(self, systems):
        a = rg.scan_region(systems["example1"], rg.POINTWISE, BOX2, 31)
        b = rg.scan_region(systems["example1"], rg.POINTWISE, BOX2, 31)
        assert np.array_equal(a.mask, b.mask)
        assert np.array_equal(a.verdicts.lambda_R, b.verdicts.lambda_R)
        assert rg.region_csv(a) == rg.region_csv(b)

    @pytest.mark.parametrize("name", ["example1", "hopf", "vanderpol"])
    def test_refinement(self, systems, name):
        vf = systems[name]
        box = [[-2, 2], [-2, 2]]
        coarse = rg.scan_region(vf, rg.POINTWISE, box, 40)
        fine = rg.scan_region(vf, rg.POINTWISE, box, 80)
        edge = boundary_cells(coarse.mask).mean()
        assert abs(fine.certified_fraction - coarse.certified_fraction) < edge
        # a coarse cell whose neighbourhood is uniform keeps its label in all four sub-cells
        stable = ~boundary_cells(coarse.mask)
        sub = fine.mask.reshape(40, 2, 40, 2)
        for k in range(2):
            for m in range(2):
                assert np.array_equal(sub[:, k, :, m][stable], coarse.mask[stable])

    @pytest.mark.parametrize("name", FIXTURES)
    def test_certified_cells_converge(self, systems, rng, name):
        vf = systems[name]
        est = rg.scan_region(vf, rg.POINTWISE, [[-2, 2], [-2, 2]], 61)
        pts = est.certified_points
        pts = pts[rng.choice(len(pts), size=min(200, len(pts)), replace=False)]
        rep = attraction_oracle(vf, pts, horizon=100.0, h=0.02, stop_early=False)
        assert len(rep.counterexamples) == 0


class TestBoundary:
    def test_full_grid(self):
        est = fake_estimate(BOX2, 10, lambda g: np.ones(len(g), bool))
        assert est.boundary == []

    def test_half_plane(self):
        est = fake_estimate(BOX2, 20, lambda g: g[:, 1] < 0)
        assert len(est.boundary) == 1
        line = est.boundary[0]
        assert np.all(np.abs(line[:, 1]) <= 2.0 / 20)
        assert line[:, 0].min() < -0.9 and line[:, 0].max() > 0.9

    def test_disk_closed(self):
        est = fake_estimate(BOX2, 40, lambda g: np.linalg.norm(g, axis=1) < 0.5)
        (line,) = est.boundary
        assert np.allclose(line[0], line[-1])
        r = np.linalg.norm(line, axis=1)
        assert np.all(np.abs(r - 0.5) <= 2 * 2.0 / 40)

    def test_separates_cells(self):
        est = fake_estimate(BOX2, 30, lambda g: g[:, 0] + 0.5 * g[:, 1] > 0.2)
        ref = est.mask
        # each boundary vertex sits between a certified and an uncertified center
        d = 2.0 / 30
        for line in est.boundary:
            for p in line:
                near = np.abs(est.verdicts.points - p).max(axis=1) <= d / 2 + 1e-12
                assert len(set(est.verdicts.in_omega[near])) == 2
        assert ref.any() and not ref.all()

    def test_example1_encloses_origin(self, systems):
        est = rg.scan_region(systems["example1"], rg.POINTWISE, [[-2, 2], [-2, 2]], 81)
        assert est.boundary
        assert rg.point_in_polygon((0.0, 0.0), est.boundary[0])

    def test_requires_two_dimensions(self):
        from cpwlstab.system_def import parse_system
        vf = parse_system("dim = 3\nf1 = -x1\nf2 = -x2\nf3 = -x3")
        est = rg.scan_region(vf, rg.POINTWISE, [[-1, 1]] * 3, 3)
        assert est.boundary == []
        with pytest.raises(DimensionError):
            rg.extract_boundary_2d(est)
        with pytest.raises(DimensionError):
            rg.region_svg(est)


class TestTuning:
    def test_hopf(self, systems):
        vf = systems["hopf"]
        params = rg.tune_parameters(vf, vf.origin_jacobian, [[-0.5, 0.5], [-0.5, 0.5]])
        assert params.globally_ok
        assert rg.largest_certified_square(vf, params, 0.5) >= 0.07

    def test_linear_largest_feasible(self, systems):
        vf = systems["linear"]
        params = rg.tune_parameters(vf, vf.origin_jacobian, BOX2)
        # lambda_R = 3 s / 2 with P = I/2, so s = 1/2 is the largest feasible grid value
        assert params.lambda_bar[0, 0] == 0.5 and params.lambda_tilde[0, 0] == 0.25
        assert params.lambda_R == pytest.approx(0.75)

    def test_krasovskii_not_applicable(self, systems):
        vf = systems["krasovskii"]
        with pytest.raises(NotApplicableError):
            rg.tune_parameters(vf, vf.origin_jacobian, BOX2)

    def test_pattern(self):
        t = rg.tuning_pattern(3)
        assert np.array_equal(np.diag(t), np.ones(3)) and np.isinf(t[0, 1])

    def test_square_bisection(self, systems):
        # linear with row bound 0.45 certifies exactly the square of half-width 0.45
        vf = systems["linear"]
        b = np.array([[0.45, INF], [INF, 0.45]])
        params = params_from_origin(vf, b, b)
        assert rg.largest_certified_square(vf, params, 1.0) == pytest.approx(0.45, abs=2e-4)
        assert rg.largest_certified_square(vf, params, 0.3) == 0.3


class TestOutput:
    def test_csv_round_trip(self, systems):
        est = rg.scan_region(systems["hopf"], rg.POINTWISE, BOX2, 9)
        text = rg.region_csv(est)
        assert text.splitlines()[0] == "x1,x2,in_omega,lambda_R,hurwitz_ok,reason"
        pts, flags = rg.read_region_csv(text)
        assert np.array_equal(pts, est.verdicts.points)
        assert np.array_equal(flags, est.verdicts.in_omega)

    def test_csv_infinity(self, systems):
        est = rg.scan_region(systems["krasovskii"], rg.POINTWISE, BOX2, 3)
        row = rg.region_csv(est).splitlines()[5]  # center cell
        assert row.split(",")[2:] == ["0", "inf", "0", "hurwitz"]

    def test_read_rejects_garbage(self):
        with pytest.raises(ValueError):
            rg.read_region_csv("")
        with pytest.raises(ValueError):
            rg.read_region_csv("a,b\n1,2\n")

    def test_boundary_csv(self):
        est = fake_estimate(BOX2, 4, lambda g: g[:, 1] < 0)
        lines = rg.boundary_csv(est.boundary).splitlines()
        assert lines[0] == "polyline,x1,x2"
        assert len(lines) == 1 + len(est.boundary[0])

    def test_svg(self, systems):
        est = rg.scan_region(systems["vanderpol"], rg.POINTWISE, BOX2, 21)
        svg = rg.region_svg(est)
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert svg.count("<rect") == 1 + int(est.mask.sum())
        assert svg.count("<path") == len(est.boundary)
