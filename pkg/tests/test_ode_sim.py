import math

import numpy as np
import pytest

from cpwlstab.ode_sim import (
    Controls,
    attraction_oracle,
    default_step,
    escape_box,
    integrate,
)
from cpwlstab.system_def import parse_system

from conftest import FIXTURES


def decay(x):
    return -x


class TestIntegrate:
    def test_linear_decay(self):
        tr = integrate(decay, [1.0, 0.0], 20.0, Controls(h=1e-3, stop_on_convergence=False))
        assert np.linalg.norm(tr.final) <= 1e-8
        assert tr.final[0] == pytest.approx(math.exp(-20), rel=1e-9)
        assert tr.terminal_status == "converged"

    def test_stops_after_dwell(self):
        tr = integrate(decay, [1.0], 100.0, Controls(h=1e-2))
        # |x| drops below 1e-4 at t = ln(1e4), then one time unit of dwell
        assert tr.terminal_status == "converged"
        assert tr.times[-1] == pytest.approx(math.log(1e4) + 1.0, abs=0.02)

    def test_rk4_accuracy(self):
        tr = integrate(decay, [1.0], 1.0, Controls(h=1e-3))
        assert abs(tr.final[0] - math.exp(-1)) <= 1e-10

    def test_rk4_order(self):
        errs = [abs(integrate(decay, [1.0], 1.0, Controls(h=h)).final[0] - math.exp(-1))
                for h in (0.1, 0.05, 0.025)]
        assert errs[0] / errs[1] >= 8 and errs[1] / errs[2] >= 8

    def test_rkf45_accuracy(self):
        tr = integrate(decay, [1.0, -2.0], 3.0, Controls(method="rkf45"))
        assert np.allclose(tr.final, np.array([1.0, -2.0]) * math.exp(-3), rtol=1e-7)

    @pytest.mark.parametrize("name", FIXTURES)
    def test_methods_agree(self, systems, name):
        vf = systems[name]
        x0 = [0.3, -0.2]
        a = integrate(vf.field, x0, 10.0, Controls(h=1e-3, stop_on_convergence=False))
        b = integrate(vf.field, x0, 10.0, Controls(method="rkf45", stop_on_convergence=False))
        assert np.max(np.abs(a.final - b.final)) <= 1e-6

    def test_times_increasing_and_finite(self, systems):
        tr = integrate(systems["vanderpol"].field, [0.5, 0.5], 5.0, Controls(h=0.01, record_every=7))
        assert np.all(np.diff(tr.times) > 0)
        assert np.all(np.isfinite(tr.states))
        assert tr.times[-1] == pytest.approx(5.0)

    def test_vanderpol_converges(self, systems):
        tr = integrate(systems["vanderpol"].field, [0.1, 0.1], 100.0, Controls(h=0.01))
        assert tr.terminal_status == "converged"

    def test_hopf_outside_escapes(self, systems):
        box = [[-2.0, 2.0], [-2.0, 2.0]]
        tr = integrate(systems["hopf"].field, [2.0, 0.0], 100.0, Controls(h=1e-3), box=box)
        assert tr.terminal_status == "escaped_box"

    def test_domain_error(self):
        vf = parse_system("dim = 1\nf1 = -x1 / (x1 - 1)")
        tr = integrate(vf.field, [1.0], 1.0, Controls(h=0.1))
        assert tr.terminal_status == "domain_error"

    def test_step_underflow(self):
        # finite-time blow-up: x' = x^2 from 1 reaches infinity at t = 1
        vf = parse_system("dim = 1\nf1 = x1^2")
        tr = integrate(vf.field, [1.0], 2.0, Controls(method="rkf45"), box=[[-1e9, 1e9]])
        assert tr.terminal_status in ("domain_error", "escaped_box")
        assert tr.times[-1] < 1.0 + 1e-6

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            integrate(decay, [1.0], 0.0)
        with pytest.raises(ValueError):
            integrate(decay, [math.nan], 1.0)

    def test_csv(self):
        tr = integrate(decay, [1.0, 2.0], 0.002, Controls(h=1e-3))
        lines = tr.to_csv().splitlines()
        assert lines[0] == "t,x1,x2" and len(lines) == 4
        assert lines[1] == "0.0,1.0,2.0"

    def test_box_helpers(self):
        box = np.array([[-1.0, 1.0], [0.0, 2.0]])
        assert default_step(box) == pytest.approx(1e-3 * math.sqrt(8))
        assert escape_box(box).tolist() == [[-10.0, 10.0], [-9.0, 11.0]]


class TestOracle:
    def test_origin_points(self, systems):
        rep = attraction_oracle(systems["hopf"], np.zeros((5, 2)), horizon=5.0)
        assert rep.converged.all() and rep.counts["converged"] == 5

    def test_example1_basin(self, systems, rng):
        pts = rng.uniform(-2, 2, (200, 2))
        rep = attraction_oracle(systems["example1"], pts, horizon=100.0, h=0.01,
                                box=[[-2, 2], [-2, 2]], stop_early=False)
        inside = pts[:, 0] * pts[:, 1] < 1
        assert np.array_equal(rep.converged, inside)

    def test_divergent_points_flagged(self, systems):
        pts = np.array([[2.0, 1.0], [1.5, 1.5], [-2.0, -1.0]])
        rep = attraction_oracle(systems["example1"], pts, horizon=100.0, h=0.01, box=[[-2, 2], [-2, 2]])
        assert not rep.converged.any()
        assert len(rep.counterexamples) == 3
        assert rep.counts["escaped_box"] + rep.counts["domain_error"] == 3

    def test_matches_single_trajectory(self, systems, rng):
        vf = systems["vanderpol"]
        pts = rng.uniform(-1, 1, (10, 2))
        rep = attraction_oracle(vf, pts, horizon=20.0, h=0.01, box=[[-1, 1], [-1, 1]])
        for p, c in zip(pts, rep.converged):
            tr = integrate(vf.field, p, 20.0, Controls(h=0.01), box=[[-1, 1], [-1, 1]])
            assert c == (tr.terminal_status == "converged")

    def test_summary(self, systems):
        rep = attraction_oracle(systems["linear"], [[0.5, 0.5]], horizon=30.0, h=0.01)
        s = rep.summary()
        assert s.startswith("points=1 converged=1") and "converged_fraction=1.000000" in s

    def test_empty(self, systems):
        rep = attraction_oracle(systems["linear"], np.zeros((0, 2)), horizon=1.0)
        assert rep.converged_fraction == 1.0 and len(rep.counterexamples) == 0
