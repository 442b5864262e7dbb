"""Reference integrators and the attraction oracle used to validate certificates."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError

CONVERGE_RADIUS = 1e-4
DWELL_TIME = 1.0
ESCAPE_FACTOR = 10.0
MIN_STEP = 1e-12

STATUSES = ("converged", "escaped_box", "horizon_reached", "domain_error")

# Fehlberg 4(5) tableau
_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)
_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)


@dataclass(frozen=True)
class Controls:
    method: str = "rk4"  # 'rk4' or 'rkf45'
    h: float | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    stop_on_convergence: bool = True
    record_every: int = 1


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    terminal_status: str

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.states.shape[1]
        w.writerow(["t"] + [f"x{j + 1}" for j in range(n)])
        for t, x in zip(self.times, self.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x])
        return buf.getvalue()


def default_step(box) -> float:
    box = np.asarray(box, dtype=float)
    return 1e-3 * float(np.linalg.norm(box[:, 1] - box[:, 0]))


def escape_box(box) -> np.ndarray:
    """Analysis box scaled by ``ESCAPE_FACTOR`` about its center."""
    box = np.asarray(box, dtype=float)
    c = box.mean(axis=1)
    half = 0.5 * (box[:, 1] - box[:, 0]) * ESCAPE_FACTOR
    return np.stack([c - half, c + half], axis=1)


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _rkf45_step(f, x, h):
    ks = []
    for stage in range(6):
        xi = x + h * sum(a * k for a, k in zip(_A[stage], ks)) if stage else x
        ks.append(f(xi))
    x5 = x + h * sum(b * k for b, k in zip(_B5, ks))
    x4 = x + h * sum(b * k for b, k in zip(_B4, ks))
    return x5, x5 - x4


def integrate(field: Callable[[np.ndarray], np.ndarray], x0, horizon: float,
              controls: Controls = Controls(), box=None) -> Trajectory:
    """Integrate ``x' = field(x)`` from ``x0`` up to ``horizon``.

    ``box`` is the analysis box: it sets the default RK4 step and the escape
    box. Convergence means ``|x| <= CONVERGE_RADIUS`` held for ``DWELL_TIME``.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    if box is None:
        box = np.stack([-np.maximum(np.abs(x), 1.0), np.maximum(np.abs(x), 1.0)], axis=1)
    box = np.asarray(box, dtype=float)
    esc = escape_box(box)
    h = controls.h or default_step(box)
    t = 0.0
    times, states = [0.0], [x.copy()]
    near_since = 0.0 if np.linalg.norm(x) <= CONVERGE_RADIUS else None
    status = "horizon_reached"
    count = 0
    while t < horizon - 1e-15:
        step = min(h, horizon - t)
        try:
            with np.errstate(all="ignore"):
                if controls.method == "rk4":
                    x_new = _rk4_step(field, x, step)
                    accepted = True
                elif controls.method == "rkf45":
                    x_new, err = _rkf45_step(field, x, step)
                    scale = controls.atol + controls.rtol * np.maximum(np.abs(x), np.abs(x_new))
                    ratio = float(np.max(np.abs(err) / scale)) if np.all(np.isfinite(err)) else math.inf
                    accepted = ratio <= 1.0
                    factor = 5.0 if ratio == 0 else min(5.0, max(0.1, 0.9 * ratio ** -0.2))
                    h = step * factor if accepted or math.isfinite(ratio) else step * 0.1
                    if not accepted:
                        if h < MIN_STEP:
                            status = "domain_error"
                            break
                        continue
                else:
                    raise ValueError(f"unknown method {controls.method!r}")
        except DomainError:
            status = "domain_error"
            break
        t += step
        x = x_new
        count += 1
        if not np.all(np.isfinite(x)) or np.any(x < esc[:, 0]) or np.any(x > esc[:, 1]):
            times.append(t)
            states.append(x.copy())
            status = "escaped_box"
            break
        if count % controls.record_every == 0:
            times.append(t)
            states.append(x.copy())
        if np.linalg.norm(x) <= CONVERGE_RADIUS:
            near_since = t if near_since is None else near_since
            if t - near_since >= DWELL_TIME - 1e-12 and controls.stop_on_convergence:
                status = "converged"
                break
        else:
            near_since = None
    if status == "horizon_reached" and near_since is not None and t - near_since >= DWELL_TIME - 1e-12:
        status = "converged"
    if times[-1] != t:
        times.append(t)
        states.append(x.copy())
    return Trajectory(np.array(times), np.array(states), status)


@dataclass
class OracleReport:
    points: np.ndarray
    converged: np.ndarray
    status: np.ndarray
    final_norm: np.ndarray
    counts: dict = field(default_factory=dict)

    @property
    def converged_fraction(self) -> float:
        return float(self.converged.mean()) if len(self.converged) else 1.0

    @property
    def counterexamples(self) -> np.ndarray:
        return self.points[~self.converged]

    def summary(self) -> str:
        parts = [f"{k}={self.counts.get(k, 0)}" for k in STATUSES]
        return f"points={len(self.points)} " + " ".join(parts) + f" converged_fraction={self.converged_fraction:.6f}"


def attraction_oracle(vf, points, horizon: float = 100.0, box=None, h: float | None = None,
                      stop_early: bool = True) -> OracleReport:
    """Vectorized RK4 over all points at once.

    A point converges when ``|x| <= CONVERGE_RADIUS`` held for ``DWELL_TIME``
    before ``horizon``; with ``stop_early=False`` the criterion is
    ``|x(horizon)| <= CONVERGE_RADIUS`` instead. Non-finite states and exits
    from the escape box are divergence.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, n = pts.shape
    if box is None:
        span = np.maximum(np.max(np.abs(pts), axis=0), 1.0) if m else np.ones(n)
        box = np.stack([-span, span], axis=1)
    box = np.asarray(box, dtype=float)
    esc = escape_box(box)
    h = h or default_step(box)
    steps = int(math.ceil(horizon / h))
    h = horizon / steps if steps else h

    x = pts.copy()
    active = np.ones(m, bool)
    status = np.full(m, "horizon_reached", dtype=object)
    near_since = np.where(np.linalg.norm(x, axis=1) <= CONVERGE_RADIUS, 0.0, np.nan)

    def f(xs):
        vals, ok = vf.field_batch(xs)
        vals[~ok] = np.nan
        return vals

    with np.errstate(all="ignore"):
        for s in range(steps):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            xa = _rk4_step(f, x[idx], h)
            x[idx] = xa
            t = (s + 1) * h
            bad = ~np.all(np.isfinite(xa), axis=1)
            out = np.any(xa < esc[:, 0], axis=1) | np.any(xa > esc[:, 1], axis=1)
            status[idx[bad]] = "domain_error"
            status[idx[out & ~bad]] = "escaped_box"
            active[idx[bad | out]] = False
            r = np.linalg.norm(xa, axis=1)
            close = r <= CONVERGE_RADIUS
            ns = near_since[idx]
            ns = np.where(close, np.where(np.isnan(ns), t, ns), np.nan)
            near_since[idx] = ns
            if stop_early:
                done = close & (t - ns >= DWELL_TIME - 1e-12) & ~(bad | out)
                status[idx[done]] = "converged"
                active[idx[done]] = False
    if not stop_early:
        fin = (status == "horizon_reached") & (np.linalg.norm(x, axis=1) <= CONVERGE_RADIUS)
        status[fin] = "converged"
    else:
        dwell = (status == "horizon_reached") & ~np.isnan(near_since) & (horizon - near_since >= DWELL_TIME - 1e-12)
        status[dwell] = "converged"
    conv = status == "converged"
    norms = np.linalg.norm(np.where(np.isfinite(x), x, np.inf), axis=1)
    counts = {k: int(np.sum(status == k)) for k in STATUSES}
    return OracleReport(pts, conv, status, norms, counts)
