"""
System-definition documents and the :class:`VectorField` they describe.

A document looks like::

    dim = 2
    param mu = -1.0
    f1 = x2
    f2 = -x1 + mu * x2 * (1 - x1^2)

``#`` starts a comment. Parameters may be declared anywhere before the
components that use them are parsed (all declarations are collected first).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import (
    DimensionError,
    DimensionMismatchError,
    DomainError,
    EquilibriumError,
    SystemSyntaxError,
)

EQUILIBRIUM_TOL = 1e-12
# Inside this squared radius f is replaced by its linearization J0·x.
ORIGIN_R2 = 1e-30
_PROBE_RADII = (1e-4, 1e-6, 1e-8)

_DIM_RE = re.compile(r"dim\s*=\s*(?P<v>\S.*)$")
_PARAM_RE = re.compile(r"param\s+(?P<name>[A-Za-z_]\w*)\s*=\s*(?P<v>\S.*)$")
_COMP_RE = re.compile(r"f(?P<k>\d+)\s*=\s*")
_RESERVED = set(ex.UNARY_FUNCS) | {"pi"}


@dataclass(frozen=True)
class JacobianCheck:
    max_rel_error: float
    points_checked: int
    tol: float

    @property
    def ok(self) -> bool:
        return self.points_checked > 0 and self.max_rel_error <= self.tol


@dataclass(frozen=True)
class VectorField:
    """Autonomous field ``f: R^n -> R^n`` with symbolic Jacobian.

    Build through :func:`parse_system`; direct construction also works and
    runs the same checks.
    """

    components: tuple
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = "system"
    jacobian_exprs: tuple = field(init=False, repr=False, compare=False)
    _f: object = field(init=False, repr=False, compare=False)
    _j: object = field(init=False, repr=False, compare=False)
    _j0: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.components)
        if n == 0:
            raise DimensionError("a vector field needs at least one component")
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "params", dict(self.params))
        jac = tuple(tuple(ex.derivative(c, k) for k in range(n)) for c in self.components)
        object.__setattr__(self, "jacobian_exprs", jac)
        object.__setattr__(self, "_f", ex.compile_exprs(self.components, self.params))
        object.__setattr__(self, "_j", ex.compile_exprs([e for row in jac for e in row], self.params))
        self._check_origin()
        object.__setattr__(self, "_j0", self._origin_jacobian())

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def origin_jacobian(self) -> np.ndarray:
        return self._j0.copy()

    def with_params(self, **overrides: float) -> "VectorField":
        unknown = set(overrides) - set(self.params)
        if unknown:
            raise KeyError(f"unknown parameters: {sorted(unknown)}")
        return VectorField(self.components, {**self.params, **overrides}, self.name)

    # -- raw evaluation -------------------------------------------------

    def _raw(self, fn, x: np.ndarray, count: int) -> np.ndarray:
        with np.errstate(all="ignore"):
            vals = fn(x)
        shape = np.shape(x[0])
        return np.array([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in vals[:count]]) + 0.0

    def _check_origin(self):
        z = np.zeros(self.n)
        f0 = self._raw(self._f, z, self.n)
        if np.all(np.isfinite(f0)):
            if np.max(np.abs(f0)) > EQUILIBRIUM_TOL:
                raise EquilibriumError(f"f(0) = {f0.tolist()} is not zero; translate the equilibrium to the origin")
            return
        # undefined at 0: accept only a removable singularity with limit 0
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(8, self.n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for r in _PROBE_RADII:
            vals = self._raw(self._f, (r * dirs).T, self.n)
            if not np.all(np.isfinite(vals)):
                raise EquilibriumError("f is undefined near the origin")
        if np.max(np.abs(vals)) > 1e-6:
            raise EquilibriumError("f is undefined at the origin and does not tend to 0 there")

    def _origin_jacobian(self) -> np.ndarray:
        n = self.n
        j = self._raw(self._j, np.zeros(n), n * n).reshape(n, n)
        if np.all(np.isfinite(j)):
            return j
        # symbolic Jacobian singular at 0: central differences
        h = 1e-6
        out = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            fp = self._raw(self._f, e, n)
            fm = self._raw(self._f, -e, n)
            if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
                raise DomainError("Jacobian at the origin is not computable")
            out[:, k] = (fp - fm) / (2 * h)
        return out

    # -- guarded evaluation ---------------------------------------------

    def _point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.n,):
            raise DimensionError(f"expected a point of dimension {self.n}, got {x.shape}")
        return x

    def __call__(self, x) -> np.ndarray:
        return self.field(x)

    def field(self, x) -> np.ndarray:
        x = self._point(x)
        if x @ x < ORIGIN_R2:
            return self._j0 @ x
        v = self._raw(self._f, x, self.n)
        if not np.all(np.isfinite(v)):
            raise DomainError(f"f is not finite at {x.tolist()}")
        return v

    def jacobian(self, x) -> np.ndarray:
        x = self._point(x)
        if x @ x < ORIGIN_R2:
            return self._j0.copy()
        j = self._raw(self._j, x, self.n * self.n).reshape(self.n, self.n)
        if not np.all(np.isfinite(j)):
            raise DomainError(f"Jacobian is not finite at {x.tolist()}")
        return j

    def field_batch(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate at rows of ``xs``; returns ``(values (m, n), finite mask (m,))``."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.n:
            raise DimensionError(f"expected points of dimension {self.n}")
        out = self._raw(self._f, xs.T, self.n).T.copy()
        near = np.einsum("ij,ij->i", xs, xs) < ORIGIN_R2
        if near.any():
            out[near] = xs[near] @ self._j0.T
        return out, np.all(np.isfinite(out), axis=1)

    def jacobian_batch(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """Jacobians at rows of ``xs``; returns ``(values (m, n, n), finite mask (m,))``."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.n:
            raise DimensionError(f"expected points of dimension {self.n}")
        m, n = xs.shape
        out = self._raw(self._j, xs.T, n * n).T.reshape(m, n, n).copy()
        near = np.einsum("ij,ij->i", xs, xs) < ORIGIN_R2
        out[near] = self._j0
        return out, np.all(np.isfinite(out), axis=(1, 2))

    # -- text ------------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"dim = {self.n}"]
        lines += [f"param {k} = {v!r}" for k, v in self.params.items()]
        lines += [f"f{i + 1} = {ex.to_text(c)}" for i, c in enumerate(self.components)]
        return "\n".join(lines) + "\n"


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse_system(text: str, name: str = "system") -> VectorField:
    """Parse a system-definition document into a :class:`VectorField`."""
    dim = None
    dim_line = 0
    params: dict[str, float] = {}
    comps: dict[int, tuple[int, int, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        body = line.strip()
        if not body:
            continue
        lead = len(line) - len(line.lstrip())
        if m := _DIM_RE.fullmatch(body):
            if dim is not None:
                raise SystemSyntaxError("duplicate dim declaration", lineno, lead + 1)
            try:
                dim = int(m.group("v").strip())
            except ValueError:
                raise SystemSyntaxError("dim must be an integer", lineno, lead + m.start("v") + 1) from None
            if dim < 1:
                raise SystemSyntaxError("dim must be positive", lineno, lead + m.start("v") + 1)
            dim_line = lineno
        elif m := _PARAM_RE.fullmatch(body):
            pname = m.group("name")
            col = lead + m.start("name") + 1
            if pname in _RESERVED or re.fullmatch(r"x\d+", pname):
                raise SystemSyntaxError(f"parameter name {pname!r} is reserved", lineno, col)
            if pname in params:
                raise SystemSyntaxError(f"duplicate parameter {pname!r}", lineno, col)
            try:
                params[pname] = float(m.group("v").strip())
            except ValueError:
                raise SystemSyntaxError("parameter value must be a number", lineno,
                                        lead + m.start("v") + 1) from None
        elif m := _COMP_RE.match(body):
            k = int(m.group("k"))
            if k in comps:
                raise SystemSyntaxError(f"duplicate component f{k}", lineno, lead + 1)
            comps[k] = (lineno, lead + m.end(), body[m.end():])
        else:
            raise SystemSyntaxError(f"unrecognized line {body!r}", lineno, lead + 1)

    if dim is None:
        raise SystemSyntaxError("missing 'dim = <int>' declaration", 1, 1)
    extra = sorted(k for k in comps if not 1 <= k <= dim)
    if extra:
        lineno, col, _ = comps[extra[0]]
        raise DimensionMismatchError(f"component f{extra[0]} exceeds dim = {dim}", lineno, 1)
    missing = [k for k in range(1, dim + 1) if k not in comps]
    if missing:
        raise DimensionMismatchError(
            f"dim = {dim} but components {', '.join(f'f{k}' for k in missing)} are missing", dim_line, 1
        )
    exprs = []
    for k in range(1, dim + 1):
        lineno, col, src = comps[k]
        if not src.strip():
            raise SystemSyntaxError(f"empty expression for f{k}", lineno, col + 1)
        exprs.append(ex.parse_expr(src, dim, params, line=lineno, col_offset=col))
    return VectorField(tuple(exprs), params, name)


def bundled_systems() -> list[str]:
    root = resources.files("cpwlstab") / "systems"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".txt"))


def load_system(path_or_name: str | Path) -> VectorField:
    """Load a system file, or a bundled system by name (e.g. ``"vanderpol"``)."""
    p = Path(path_or_name)
    if p.is_file():
        return parse_system(p.read_text(), name=p.stem)
    name = str(path_or_name)
    res = resources.files("cpwlstab") / "systems" / f"{name}.txt"
    if "/" not in name and res.is_file():
        return parse_system(res.read_text(), name=name)
    raise FileNotFoundError(f"no system file or bundled system named {name!r}")


def eval_field(vf: VectorField, x: Sequence[float]) -> np.ndarray:
    return vf.field(x)


def eval_jacobian(vf: VectorField, x: Sequence[float]) -> np.ndarray:
    return vf.jacobian(x)


def finite_difference_jacobian(vf: VectorField, x, rel_step: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = vf.n
    out = np.empty((n, n))
    for k in range(n):
        h = rel_step * (1.0 + abs(x[k]))
        e = np.zeros(n)
        e[k] = h
        out[:, k] = (vf.field(x + e) - vf.field(x - e)) / (2 * h)
    return out


def check_jacobian(vf: VectorField, box, n_points: int = 20, seed: int = 0,
                   tol: float = 1e-5) -> JacobianCheck:
    """Compare the symbolic Jacobian with central differences at random box points.

    The error measure is ``|J_sym - J_fd| / (1 + |J_sym|)`` entrywise.
    Points where either side leaves the domain are skipped.
    """
    box = np.asarray(box, dtype=float)
    rng = np.random.default_rng(seed)
    worst, used = 0.0, 0
    for x in rng.uniform(box[:, 0], box[:, 1], size=(n_points, vf.n)):
        try:
            js = vf.jacobian(x)
            jf = finite_difference_jacobian(vf, x)
        except DomainError:
            continue
        worst = max(worst, float(np.max(np.abs(js - jf) / (1.0 + np.abs(js)))))
        used += 1
    return JacobianCheck(worst, used, tol)
