"""Factor charts, twisted functions, vector fields and product metrics.

A multiply twisted product ``M1 x_f2 M2 x ... x_fn Mn`` carries the metric
``g1 + sum_i f_i^2 g_i`` where each twisted function ``f_i`` is positive and
depends only on the coordinates of ``M1`` and ``Mi``.  Every factor here is a
single coordinate box with a symmetric matrix of metric expressions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import Expr

__all__ = [
    "GeometryError", "FactorChart", "TwistFunction", "VectorFieldSpec",
    "ProductMetric", "GridSpec", "SampleGrid", "Scene",
    "assemble_metric", "sample_grid", "validate_vector_field",
]

NONDEGENERACY_THRESHOLD = 1e-12
GUARD_DELTA = 1e-6


class GeometryError(ValueError):
    """A scene violates a geometric requirement (scope, positivity, ...)."""


def _as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return ex.simplify(ex.parse(value))
    return ex.Const(value)


@dataclass(frozen=True)
class FactorChart:
    """One factor manifold: coordinate names, metric matrix and a box."""

    name: str
    vars: tuple
    metric: tuple
    box: tuple

    def __init__(self, name: str, vars: Sequence[str], metric, box):
        vars = tuple(vars)
        d = len(vars)
        if d == 0:
            raise GeometryError(f"factor {name!r} has no coordinates")
        if len(set(vars)) != d:
            raise GeometryError(f"factor {name!r} repeats a coordinate name")
        rows = tuple(tuple(_as_expr(entry) for entry in row) for row in metric)
        if len(rows) != d or any(len(row) != d for row in rows):
            raise GeometryError(f"factor {name!r}: metric must be {d}x{d}")
        for i in range(d):
            for j in range(i):
                if rows[i][j] != rows[j][i]:
                    raise GeometryError(
                        f"factor {name!r}: metric is not symmetric at ({i}, {j})")
        for row in rows:
            for entry in row:
                foreign = ex.free_vars(entry) - set(vars)
                if foreign:
                    raise GeometryError(
                        f"factor {name!r}: metric uses foreign variable(s) "
                        f"{sorted(foreign)}")
        box = tuple((float(lo), float(hi)) for lo, hi in box)
        if len(box) != d:
            raise GeometryError(f"factor {name!r}: need one interval per coordinate")
        for v, (lo, hi) in zip(vars, box):
            if not lo < hi:
                raise GeometryError(f"factor {name!r}: empty interval for {v!r}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "vars", vars)
        object.__setattr__(self, "metric", rows)
        object.__setattr__(self, "box", box)

    @property
    def dim(self) -> int:
        return len(self.vars)

    @classmethod
    def interval(cls, name: str, var: str, lo: float, hi: float,
                 sign: float = 1.0) -> "FactorChart":
        """A 1-dimensional factor with metric ``sign * d(var)^2``."""
        return cls(name, (var,), [[ex.Const(sign)]], [(lo, hi)])


@dataclass(frozen=True)
class TwistFunction:
    factor: str
    f: Expr

    def __init__(self, factor: str, f):
        object.__setattr__(self, "factor", factor)
        object.__setattr__(self, "f", _as_expr(f))

    @property
    def squared(self) -> Expr:
        return ex.power(self.f, 2.0)


@dataclass(frozen=True)
class VectorFieldSpec:
    """Components of ``V`` grouped by factor, in each factor's coordinate order.

    ``lifted`` declares that each factor's components depend only on that
    factor's coordinates, i.e. ``V = sum_i V_i`` with ``V_i`` tangent to and
    defined on ``M_i``.
    """

    components: Mapping[str, tuple]
    lifted: bool = True

    def __init__(self, components: Mapping[str, Sequence], lifted: bool = True):
        comps = {name: tuple(_as_expr(c) for c in values)
                 for name, values in components.items()}
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "lifted", bool(lifted))

    def __hash__(self):
        return hash((tuple(sorted(self.components.items())), self.lifted))

    def scaled(self, c: float) -> "VectorFieldSpec":
        return VectorFieldSpec(
            {k: [ex.mul(ex.Const(c), e) for e in v] for k, v in self.components.items()},
            self.lifted)

    def flat(self, factors: Sequence[FactorChart]) -> list:
        return [e for f in factors for e in self.components[f.name]]


def validate_vector_field(vf: VectorFieldSpec,
                          factors: Sequence[FactorChart]) -> VectorFieldSpec:
    """Check component counts and the lifted flag against variable usage.

    Factors missing from ``vf`` get zero components.  Returns the completed
    spec.
    """
    names = {f.name for f in factors}
    unknown = set(vf.components) - names
    if unknown:
        raise GeometryError(f"vector field names unknown factor(s) {sorted(unknown)}")
    all_vars = {v for f in factors for v in f.vars}
    comps = {}
    for f in factors:
        values = vf.components.get(f.name, (ex.ZERO,) * f.dim)
        if len(values) != f.dim:
            raise GeometryError(
                f"vector field on {f.name!r} needs {f.dim} component(s), got {len(values)}")
        for e in values:
            used = ex.free_vars(e)
            if used - all_vars:
                raise GeometryError(
                    f"vector field on {f.name!r} uses unknown variable(s) "
                    f"{sorted(used - all_vars)}")
            if vf.lifted and used - set(f.vars):
                raise GeometryError(
                    f"vector field declared lifted but its {f.name!r} component "
                    f"uses foreign variable(s) {sorted(used - set(f.vars))}")
        comps[f.name] = values
    return VectorFieldSpec(comps, vf.lifted)


@dataclass(frozen=True)
class ProductMetric:
    """Block-diagonal metric of a multiply twisted product, as expressions."""

    factors: tuple
    twists: Mapping[str, TwistFunction]
    vars: tuple
    blocks: Mapping[str, slice]
    G: tuple

    @property
    def dim(self) -> int:
        return len(self.vars)

    @property
    def base(self) -> FactorChart:
        return self.factors[0]

    def f_squared(self, factor: str) -> Expr:
        return self.twists[factor].squared

    def block_of(self, index: int) -> str:
        for name, block in self.blocks.items():
            if block.start <= index < block.stop:
                return name
        raise IndexError(index)


def assemble_metric(factors: Sequence[FactorChart],
                    twists: Sequence[TwistFunction]) -> ProductMetric:
    """Build ``g1 + sum_i f_i^2 g_i`` as an N x N matrix of expressions.

    The first factor is the base; every other factor needs exactly one twist,
    and a twist of ``Mi`` may use only the coordinates of ``M1`` and ``Mi``.
    """
    factors = tuple(factors)
    if not factors:
        raise GeometryError("a product needs at least one factor")
    all_vars = [v for f in factors for v in f.vars]
    seen = set()
    for v in all_vars:
        if v in seen:
            raise GeometryError(f"coordinate {v!r} is used by more than one factor")
        seen.add(v)
    if len({f.name for f in factors}) != len(factors):
        raise GeometryError("factor names must be unique")

    base = factors[0]
    by_factor = {}
    for tw in twists:
        if tw.factor == base.name:
            raise GeometryError(f"the base factor {base.name!r} takes no twist")
        if tw.factor in by_factor:
            raise GeometryError(f"factor {tw.factor!r} has more than one twist")
        by_factor[tw.factor] = tw
    for tw in twists:
        if tw.factor not in {f.name for f in factors}:
            raise GeometryError(f"twist names unknown factor {tw.factor!r}")

    N = len(all_vars)
    G = [[ex.ZERO] * N for _ in range(N)]
    blocks = {}
    start = 0
    for k, factor in enumerate(factors):
        block = slice(start, start + factor.dim)
        blocks[factor.name] = block
        if k == 0:
            scale = None
        else:
            if factor.name not in by_factor:
                raise GeometryError(f"factor {factor.name!r} has no twisted function")
            tw = by_factor[factor.name]
            allowed = set(base.vars) | set(factor.vars)
            foreign = ex.free_vars(tw.f) - allowed
            if foreign:
                raise GeometryError(
                    f"twist of {factor.name!r} uses variable(s) {sorted(foreign)} "
                    f"outside {base.name!r} x {factor.name!r}")
            scale = tw.squared
        for i in range(factor.dim):
            for j in range(factor.dim):
                entry = factor.metric[i][j]
                G[start + i][start + j] = entry if scale is None else ex.mul(scale, entry)
        start += factor.dim

    return ProductMetric(factors=factors, twists=dict(by_factor),
                         vars=tuple(all_vars), blocks=blocks,
                         G=tuple(tuple(row) for row in G))


@dataclass(frozen=True)
class GridSpec:
    points_per_dim: int = 9
    inset: float = 0.05
    guards: tuple = ()

    def __post_init__(self):
        if self.points_per_dim < 1:
            raise GeometryError("points_per_dim must be positive")
        if not 0.0 <= self.inset < 0.5:
            raise GeometryError("inset must lie in [0, 0.5)")
        object.__setattr__(self, "guards", tuple(_as_expr(g) for g in self.guards))


class SampleGrid(Sequence):
    """Grid points in lexicographic order; indexing yields ``{var: value}``."""

    def __init__(self, vars: Sequence[str], points: np.ndarray):
        self.vars = tuple(vars)
        self.points = np.asarray(points, dtype=float)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return SampleGrid(self.vars, self.points[i])
        return dict(zip(self.vars, (float(x) for x in self.points[i])))

    def __iter__(self) -> Iterator[dict]:
        for i in range(len(self)):
            yield self[i]

    def columns(self) -> dict:
        return {v: self.points[:, k] for k, v in enumerate(self.vars)}


def axis_points(lo: float, hi: float, n: int, inset: float) -> np.ndarray:
    pad = inset * (hi - lo)
    if n == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo + pad, hi - pad, n)


def sample_grid(factors: Sequence[FactorChart], grid: GridSpec = GridSpec()) -> SampleGrid:
    """Cartesian grid over the inset boxes, with guarded points removed."""
    vars, axes = [], []
    for f in factors:
        for v, (lo, hi) in zip(f.vars, f.box):
            vars.append(v)
            axes.append(axis_points(lo, hi, grid.points_per_dim, grid.inset))
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    keep = np.ones(len(points), dtype=bool)
    columns = {v: points[:, k] for k, v in enumerate(vars)}
    for guard in grid.guards:
        unknown = ex.free_vars(guard) - set(vars)
        if unknown:
            raise GeometryError(f"guard uses unknown variable(s) {sorted(unknown)}")
        values = np.broadcast_to(ex.evaluate(guard, columns), keep.shape)
        keep &= np.abs(values) >= GUARD_DELTA
    if not keep.any():
        raise GeometryError("grid is empty after applying guards")
    return SampleGrid(vars, points[keep])


@dataclass(frozen=True)
class Scene:
    """Everything needed for a check: product, candidate field, grid, tolerance."""

    factors: tuple
    twists: tuple
    vector_field: VectorFieldSpec
    grid: GridSpec = GridSpec()
    tolerance: float = 1e-8
    name: str = "scene"
    metadata: Mapping = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "twists", tuple(self.twists))

    @property
    def metric(self) -> ProductMetric:
        return assemble_metric(self.factors, self.twists)

    @property
    def checked_field(self) -> VectorFieldSpec:
        return validate_vector_field(self.vector_field, self.factors)

    def sample(self) -> SampleGrid:
        return sample_grid(self.factors, self.grid)

    def with_field(self, vf: VectorFieldSpec) -> "Scene":
        return Scene(self.factors, self.twists, vf, self.grid, self.tolerance,
                     self.name, self.metadata)

    def validate(self) -> SampleGrid:
        """Run every structural and sampled check; return the grid.

        Raises :class:`GeometryError` for scope, positivity or nondegeneracy
        violations and :class:`expr.DomainError` if an expression cannot be
        evaluated on the grid.
        """
        metric = self.metric
        self.checked_field
        points = self.sample()
        cols = points.columns()
        for tw in metric.twists.values():
            values = np.broadcast_to(ex.evaluate(tw.f, cols), (len(points),))
            if not np.all(values > 0):
                k = int(np.argmin(values))
                raise GeometryError(
                    f"twisted function of {tw.factor!r} is not positive at "
                    f"{points[k]} (value {values[k]:.6g})")
        for f in self.factors:
            mats = np.empty((len(points), f.dim, f.dim))
            for i in range(f.dim):
                for j in range(f.dim):
                    mats[:, i, j] = ex.evaluate(f.metric[i][j], cols)
            det = np.abs(np.linalg.det(mats))
            if not np.all(det > NONDEGENERACY_THRESHOLD):
                k = int(np.argmin(det))
                raise GeometryError(
                    f"metric of {f.name!r} is degenerate at {points[k]}")
        return points
