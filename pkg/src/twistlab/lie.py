"""First and second Lie derivatives of a twisted product metric.

Three evaluation routes are provided:

``ORACLE``
    The coordinate formula for the Lie derivative of a (0,2) tensor,
    ``(L_V T)_ab = V^c d_c T_ab + T_cb d_a V^c + T_ac d_b V^c``, applied to the
    assembled product metric and then to its own result.  Works for any
    vector field and is the reference answer.
``PAPER``
    The factor-by-factor decomposition for lifted fields
    ``V = V_1 + ... + V_n`` with ``u_i = V_1(f_i^2) + V_i(f_i^2)``::

        L_V g   = L_{V_1} g_1 + sum_i [ f_i^2 L_{V_i} g_i + u_i g_i ]
        L_V L_V g = L_{V_1} L_{V_1} g_1
                  + sum_i [ f_i^2 L_{V_i} L_{V_i} g_i + 2 u_i L_{V_i} g_i
                            + V_1(u_i) g_i ]

``CORRECTED``
    As ``PAPER`` with the remaining derivative ``V_i(u_i) g_i`` added to each
    second-order block, which makes it agree with ``ORACLE``.

All derivatives are formed symbolically once per (metric, field) pair and the
resulting expressions are evaluated on whole grids at once.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import Expr
from .manifold import (GeometryError, ProductMetric, SampleGrid, Scene,
                       VectorFieldSpec, validate_vector_field)

__all__ = [
    "Mode", "Classification", "NotLiftedError", "LieCalculus",
    "ResidualReport", "BaseResidual", "Comparison",
    "lie_tensor", "apply_field",
    "lie1_oracle", "lie2_oracle", "lie1_structural", "lie2_structural",
    "killing_residual", "two_killing_residual", "factor_conditions",
    "base_ode_residual", "classify", "compare",
]

DEFAULT_TOLERANCE = 1e-8


class Mode(str, enum.Enum):
    ORACLE = "oracle"
    PAPER = "paper"
    CORRECTED = "corrected"


class Classification(str, enum.Enum):
    KILLING = "KILLING"
    TWO_KILLING_ONLY = "TWO_KILLING_ONLY"
    NEITHER = "NEITHER"


class NotLiftedError(GeometryError):
    """A structural evaluator was handed a field that is not a sum of lifts."""


Matrix = tuple  # tuple of tuples of Expr


def apply_field(components: Sequence[Expr], vars: Sequence[str], h: Expr) -> Expr:
    """The derivative ``V(h) = sum_c V^c d_c h``."""
    total = ex.ZERO
    for vc, name in zip(components, vars):
        total = ex.add(total, ex.mul(vc, ex.diff(h, name)))
    return total


def lie_tensor(T: Matrix, components: Sequence[Expr], vars: Sequence[str]) -> Matrix:
    """Coordinate Lie derivative of the symmetric (0,2) tensor ``T`` along ``V``."""
    n = len(vars)
    dV = [[ex.diff(components[c], vars[a]) for c in range(n)] for a in range(n)]
    out = [[None] * n for _ in range(n)]
    for a in range(n):
        for b in range(a, n):
            entry = apply_field(components, vars, T[a][b])
            for c in range(n):
                entry = ex.add(entry, ex.mul(T[c][b], dV[a][c]))
                entry = ex.add(entry, ex.mul(T[a][c], dV[b][c]))
            out[a][b] = out[b][a] = entry
    return tuple(tuple(row) for row in out)


def _scale(matrix: Matrix, s: Expr) -> Matrix:
    return tuple(tuple(ex.mul(s, e) for e in row) for row in matrix)


def _plus(*matrices: Matrix) -> Matrix:
    n = len(matrices[0])
    return tuple(
        tuple(_sum(m[a][b] for m in matrices) for b in range(n)) for a in range(n))


def _sum(terms) -> Expr:
    total = ex.ZERO
    for t in terms:
        total = ex.add(total, t)
    return total


def evaluate_matrix(matrix: Matrix, columns: Mapping[str, np.ndarray], size: int,
                    threads: int = 1) -> np.ndarray:
    """Evaluate a symmetric expression matrix on ``size`` points -> (size, n, n)."""
    n = len(matrix)
    out = np.zeros((size, n, n))
    pairs = [(a, b) for a in range(n) for b in range(a, n)
             if not (isinstance(matrix[a][b], ex.Const) and matrix[a][b].value == 0.0)]

    def work(pair):
        a, b = pair
        return pair, np.broadcast_to(ex.evaluate(matrix[a][b], columns), (size,))

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, pairs))
    else:
        results = [work(p) for p in pairs]
    for (a, b), values in results:
        out[:, a, b] = values
        out[:, b, a] = values
    return out


class LieCalculus:
    """Symbolic first/second Lie derivatives of one metric along one field.

    Tensors are built lazily and cached, so a calculus object can be reused
    for every mode, order and grid of a scene.
    """

    def __init__(self, metric: ProductMetric, field: VectorFieldSpec):
        self.metric = metric
        self.field = validate_vector_field(field, metric.factors)
        self.vars = metric.vars
        self.components = tuple(self.field.flat(metric.factors))

    @classmethod
    def for_scene(cls, scene: Scene) -> "LieCalculus":
        return cls(scene.metric, scene.vector_field)

    # -- oracle ------------------------------------------------------------

    @cached_property
    def oracle1(self) -> Matrix:
        return lie_tensor(self.metric.G, self.components, self.vars)

    @cached_property
    def oracle2(self) -> Matrix:
        return lie_tensor(self.oracle1, self.components, self.vars)

    # -- structural --------------------------------------------------------

    def _require_lifted(self):
        if not self.field.lifted:
            raise NotLiftedError(
                "structural evaluation needs a lifted field (V = sum of V_i)")

    @cached_property
    def _factor_pieces(self) -> dict:
        """Per-factor symbolic ingredients of the decomposition."""
        self._require_lifted()
        base = self.metric.base
        V1 = self.field.components[base.name]
        pieces = {}
        for k, factor in enumerate(self.metric.factors):
            Vk = self.field.components[factor.name]
            L1 = lie_tensor(factor.metric, Vk, factor.vars)
            L2 = lie_tensor(L1, Vk, factor.vars)
            entry = {"g": factor.metric, "L1": L1, "L2": L2}
            if k > 0:
                F = self.metric.f_squared(factor.name)
                V1F = apply_field(V1, base.vars, F)
                ViF = apply_field(Vk, factor.vars, F)
                entry.update(
                    F=F,
                    u=ex.add(V1F, ViF),
                    # printed second-order coefficient V_1(u_i)
                    V1u=ex.add(apply_field(V1, base.vars, V1F),
                               apply_field(V1, base.vars, ViF)),
                    # completing term V_i(u_i)
                    Viu=ex.add(apply_field(Vk, factor.vars, V1F),
                               apply_field(Vk, factor.vars, ViF)),
                )
            pieces[factor.name] = entry
        return pieces

    def factor_blocks(self, order: int, mode: Mode = Mode.PAPER) -> dict:
        """Structural blocks ``{factor name: d_i x d_i matrix}``."""
        mode = Mode(mode)
        if mode is Mode.ORACLE:
            raise ValueError("factor blocks are a structural construction")
        blocks = {}
        for k, factor in enumerate(self.metric.factors):
            p = self._factor_pieces[factor.name]
            if k == 0:
                blocks[factor.name] = p["L1"] if order == 1 else p["L2"]
                continue
            if order == 1:
                blocks[factor.name] = _plus(_scale(p["L1"], p["F"]),
                                            _scale(p["g"], p["u"]))
                continue
            coefficient = p["V1u"]
            if mode is Mode.CORRECTED:
                coefficient = ex.add(coefficient, p["Viu"])
            blocks[factor.name] = _plus(
                _scale(p["L2"], p["F"]),
                _scale(p["L1"], ex.mul(ex.Const(2.0), p["u"])),
                _scale(p["g"], coefficient))
        return blocks

    def _assemble(self, blocks: dict) -> Matrix:
        n = len(self.vars)
        out = [[ex.ZERO] * n for _ in range(n)]
        for name, block in blocks.items():
            s = self.metric.blocks[name]
            for i, row in enumerate(block):
                for j, e in enumerate(row):
                    out[s.start + i][s.start + j] = e
        return tuple(tuple(row) for row in out)

    @cached_property
    def structural1(self) -> Matrix:
        return self._assemble(self.factor_blocks(1, Mode.PAPER))

    @cached_property
    def paper2(self) -> Matrix:
        return self._assemble(self.factor_blocks(2, Mode.PAPER))

    @cached_property
    def corrected2(self) -> Matrix:
        return self._assemble(self.factor_blocks(2, Mode.CORRECTED))

    def tensor(self, order: int, mode: Mode = Mode.ORACLE) -> Matrix:
        mode = Mode(mode)
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if mode is Mode.ORACLE:
            return self.oracle1 if order == 1 else self.oracle2
        if order == 1:
            return self.structural1
        return self.paper2 if mode is Mode.PAPER else self.corrected2

    def at(self, point: Mapping[str, float], order: int,
           mode: Mode = Mode.ORACLE) -> np.ndarray:
        """N x N value of the Lie derivative at one point."""
        cols = {k: np.asarray([float(point[k])]) for k in self.vars}
        return evaluate_matrix(self.tensor(order, mode), cols, 1)[0]

    def on_grid(self, points: SampleGrid, order: int, mode: Mode = Mode.ORACLE,
                threads: int = 1) -> np.ndarray:
        return evaluate_matrix(self.tensor(order, mode), points.columns(),
                               len(points), threads)

    def metric_on_grid(self, points: SampleGrid) -> np.ndarray:
        return evaluate_matrix(self.metric.G, points.columns(), len(points))


def lie1_oracle(metric: ProductMetric, field: VectorFieldSpec, point) -> np.ndarray:
    return LieCalculus(metric, field).at(point, 1, Mode.ORACLE)


def lie2_oracle(metric: ProductMetric, field: VectorFieldSpec, point) -> np.ndarray:
    return LieCalculus(metric, field).at(point, 2, Mode.ORACLE)


def lie1_structural(scene: Scene, point, mode: Mode = Mode.PAPER) -> np.ndarray:
    if Mode(mode) is Mode.ORACLE:
        raise ValueError("use lie1_oracle for the coordinate route")
    return LieCalculus.for_scene(scene).at(point, 1, mode)


def lie2_structural(scene: Scene, point, mode: Mode = Mode.PAPER) -> np.ndarray:
    if Mode(mode) is Mode.ORACLE:
        raise ValueError("use lie2_oracle for the coordinate route")
    return LieCalculus.for_scene(scene).at(point, 2, mode)


# ---------------------------------------------------------------------------
# Residuals


@dataclass
class ResidualReport:
    """Residual of ``L_V g = 0`` (order 1) or ``L_V L_V g = 0`` (order 2).

    ``values`` holds the raw tensor components per grid point.  Component
    ``(a, b)`` is normalized by ``1 + max_grid |G_ab|`` before taking sup
    norms, so the tolerance is insensitive to the size of the twist.
    Verdicts are certified on the sample grid only.
    """

    mode: Mode
    order: int
    points: SampleGrid
    values: np.ndarray
    scale: np.ndarray
    tolerance: float = DEFAULT_TOLERANCE

    @cached_property
    def normalized(self) -> np.ndarray:
        return self.values / self.scale

    @cached_property
    def per_point(self) -> np.ndarray:
        if self.values.size == 0:
            return np.zeros(len(self.points))
        return np.abs(self.normalized).max(axis=(1, 2))

    @property
    def sup(self) -> float:
        return float(self.per_point.max())

    @property
    def argmax_index(self) -> int:
        return int(np.argmax(self.per_point))

    @property
    def argmax(self) -> dict:
        return self.points[self.argmax_index]

    @property
    def argmax_component(self) -> tuple:
        k = self.argmax_index
        a, b = np.unravel_index(np.argmax(np.abs(self.normalized[k])),
                                self.values.shape[1:])
        a, b = sorted((int(a), int(b)))
        return (self.points.vars[a], self.points.vars[b])

    def holds(self, tolerance: float | None = None) -> bool:
        tol = self.tolerance if tolerance is None else tolerance
        return self.sup <= tol

    @property
    def is_killing(self) -> bool | None:
        """Killing verdict; ``None`` when an order-2 report cannot decide it."""
        if self.order == 1:
            return self.holds()
        return False if not self.holds() else None

    @property
    def is_2killing(self) -> bool | None:
        if self.order == 2:
            return self.holds()
        return True if self.holds() else None

    def component(self, a: str, b: str) -> np.ndarray:
        i, j = self.points.vars.index(a), self.points.vars.index(b)
        return self.values[:, i, j]


def _normalization(calc: LieCalculus, points: SampleGrid) -> np.ndarray:
    G = calc.metric_on_grid(points)
    return 1.0 + np.abs(G).max(axis=0)


def _residual(scene: Scene, order: int, mode: Mode, points: SampleGrid | None,
              calc: LieCalculus | None, threads: int) -> ResidualReport:
    calc = calc or LieCalculus.for_scene(scene)
    mode = Mode(mode)
    if points is None:
        points = scene.sample()
    values = calc.on_grid(points, order, mode, threads)
    return ResidualReport(mode, order, points, values,
                          _normalization(calc, points), scene.tolerance)


def killing_residual(scene: Scene, mode: Mode = Mode.ORACLE,
                     points: SampleGrid | None = None, *,
                     calc: LieCalculus | None = None,
                     threads: int = 1) -> ResidualReport:
    """Residual of the Killing equation ``L_V g = 0`` over the scene grid."""
    return _residual(scene, 1, mode, points, calc, threads)


def two_killing_residual(scene: Scene, mode: Mode = Mode.ORACLE,
                         points: SampleGrid | None = None, *,
                         calc: LieCalculus | None = None,
                         threads: int = 1) -> ResidualReport:
    """Residual of the 2-Killing equation ``L_V L_V g = 0`` over the scene grid."""
    return _residual(scene, 2, mode, points, calc, threads)


def factor_conditions(scene: Scene, order: int, mode: Mode = Mode.PAPER,
                      points: SampleGrid | None = None) -> dict:
    """Per-factor residuals of the (2-)Killing system, one array per factor.

    The base block is ``L_{V_1} g_1`` (or its second derivative).  For the
    other factors the block is divided by ``f_i^2``, e.g. at order 1
    ``L_{V_i} g_i + (u_i / f_i^2) g_i``.  Each array has shape
    ``(points, d_i, d_i)``.
    """
    calc = LieCalculus.for_scene(scene)
    points = scene.sample() if points is None else points
    cols = points.columns()
    out = {}
    for k, (name, block) in enumerate(calc.factor_blocks(order, mode).items()):
        if k > 0:
            block = _scale(block, ex.div(ex.ONE, calc.metric.f_squared(name)))
        out[name] = evaluate_matrix(block, cols, len(points))
    return out


@dataclass
class BaseResidual:
    """Flow ``v d/dt`` on an interval with metric ``+-dt^2``.

    ``first_order`` is ``2 v'`` and ``values`` is ``v v'' + 2 (v')^2``.  The
    Lie derivatives of ``g_1`` are ``first_order * g_1`` and ``2 * values * g_1``.
    """

    points: np.ndarray
    values: np.ndarray
    first_order: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def is_2killing(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.sup <= tolerance

    def is_killing(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return float(np.abs(self.first_order).max()) <= tolerance


def base_ode_residual(v: Expr, points, var: str = "t") -> BaseResidual:
    """Evaluate ``v v'' + 2 (v')^2`` for a flow ``v(t)``; zero means 2-Killing."""
    if isinstance(v, str):
        v = ex.simplify(ex.parse(v))
    extra = ex.free_vars(v) - {var}
    if extra:
        raise GeometryError(f"base flow depends on {sorted(extra)} besides {var!r}")
    if isinstance(points, SampleGrid):
        t = points.columns()[var]
    else:
        t = np.asarray(points, dtype=float)
    dv = ex.diff(v, var)
    d2v = ex.diff(dv, var)
    r = ex.add(ex.mul(v, d2v), ex.mul(ex.Const(2.0), ex.power(dv, 2.0)))
    env = {var: t}
    values = np.broadcast_to(ex.evaluate(r, env), t.shape).astype(float)
    first = np.broadcast_to(ex.evaluate(ex.mul(ex.Const(2.0), dv), env), t.shape).astype(float)
    return BaseResidual(t, values, first)


# ---------------------------------------------------------------------------
# Classification


def classify(first: ResidualReport, second: ResidualReport,
             tolerance: float | None = None) -> Classification:
    """Combine order-1 and order-2 reports of the same scene and mode."""
    if first.order != 1 or second.order != 2:
        raise ValueError("classify needs an order-1 and an order-2 report")
    if (first.mode != second.mode or first.points.vars != second.points.vars
            or first.points.points.shape != second.points.points.shape
            or not np.array_equal(first.points.points, second.points.points)):
        raise ValueError("reports come from different scenes, grids or modes")
    if first.holds(tolerance):
        return Classification.KILLING
    if second.holds(tolerance):
        return Classification.TWO_KILLING_ONLY
    return Classification.NEITHER


@dataclass
class Comparison:
    reports: dict  # mode -> (order-1 report, order-2 report)
    classifications: dict
    disagreements: list = field(default_factory=list)

    @property
    def agree(self) -> bool:
        return not self.disagreements


def compare(scene: Scene, modes: Sequence[Mode] | None = None,
            points: SampleGrid | None = None, threads: int = 1) -> Comparison:
    """Run every mode at both orders and flag verdicts that differ from ORACLE.

    Structural modes are skipped for fields that are not lifted.
    """
    calc = LieCalculus.for_scene(scene)
    if modes is None:
        modes = list(Mode) if calc.field.lifted else [Mode.ORACLE]
    points = scene.sample() if points is None else points
    reports, kinds = {}, {}
    for mode in map(Mode, modes):
        r1 = killing_residual(scene, mode, points, calc=calc, threads=threads)
        r2 = two_killing_residual(scene, mode, points, calc=calc, threads=threads)
        reports[mode] = (r1, r2)
        kinds[mode] = classify(r1, r2)
    disagreements = []
    if Mode.ORACLE in reports:
        for mode in reports:
            if mode is Mode.ORACLE:
                continue
            for order in (1, 2):
                ref = reports[Mode.ORACLE][order - 1]
                other = reports[mode][order - 1]
                if ref.holds() != other.holds():
                    disagreements.append({
                        "order": order,
                        "mode": mode.value,
                        "mode_sup": other.sup,
                        "oracle_sup": ref.sup,
                        "argmax": ref.argmax if ref.sup >= other.sup else other.argmax,
                    })
    return Comparison(reports, kinds, disagreements)
