"""Closed-form flows, twisted functions and ready-made scenes.

Spacetimes here are ``I x_{f_2} I_2 x ... x_{f_n} I_n`` with metric
``-dt^2 + sum_i f_i^2 dx_i^2``.  The twisted functions all have the shape
``f^2 = exp(a x + b) * h(t)`` with ``h`` one of the integrated profiles:

* cube-root flow ``V = cbrt(c1 t + c2) d/dt + k d/dx``::

      h = |sign/(a k) * exp(c0 - 3 a k cbrt(c1 t + c2)^2 / (2 c1)) + c0p|   (k != 0)
      h = |sign * 3 exp(c0) / (2 c1) * cbrt(c1 t + c2)^2 + c0p|             (k == 0)

* constant flow ``V = c d/dt + k d/dx``::

      h = |sign * c/(a k) * exp(c0 - a k t / c) + c0p|                      (k != 0)
      h = |sign * exp(c0) t + c0p|                                         (k == 0)

* Killing profile ``f = ci * exp(a (c x - k t) / c)`` for ``V = c d/dt + k d/dx``.

The argument of ``|.|`` must not vanish on ``I``; this is checked by sampling.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .expr import Expr
from .manifold import (FactorChart, GeometryError, GridSpec, Scene,
                       TwistFunction, VectorFieldSpec)

__all__ = [
    "Family", "FamilyParams", "FamilyError",
    "base_flow", "cbrt_flow_twist", "constant_flow_twist", "killing_twist",
    "family_scene", "example_scene", "EXAMPLE_IDS",
]

SIGN_SAMPLES = 64
EXAMPLE_IDS = (43, 44, 47, 48)

T = ex.Var("t")


class FamilyError(GeometryError):
    """Parameters outside the validity domain of a closed-form family."""


class Family(str, enum.Enum):
    BASE_FLOW = "base-flow"
    CBRT_FLOW = "cbrt-flow"
    CONSTANT_FLOW = "constant-flow"
    KILLING = "killing"


@dataclass(frozen=True)
class FamilyParams:
    """Parameters shared by the families; unused ones are ignored.

    ``interval`` is the time interval ``I`` used for validity checks and as
    the scene box; ``x_interval`` is the box of every spatial coordinate.
    """

    family: Family = Family.CBRT_FLOW
    c1: float = 1.0
    c2: float = 0.0
    c: float = 1.0
    k: float = 0.0
    a: float = 1.0
    b: float = 0.0
    c0: float = 0.0
    c0p: float = 0.0
    ci: float = 1.0
    sign: int = 1
    interval: tuple = (1.0, 2.0)
    x_interval: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "interval", tuple(map(float, self.interval)))
        object.__setattr__(self, "x_interval", tuple(map(float, self.x_interval)))
        if self.sign not in (1, -1):
            raise FamilyError("sign must be +1 or -1")
        lo, hi = self.interval
        if not lo < hi:
            raise FamilyError("empty time interval")

    def as_dict(self) -> dict:
        out = {"family": self.family.value}
        for name in ("c1", "c2", "c", "k", "a", "b", "c0", "c0p", "ci", "sign"):
            out[name] = getattr(self, name)
        out["interval"] = list(self.interval)
        out["x_interval"] = list(self.x_interval)
        return out


def _check_cbrt_flow(c1: float, c2: float, interval) -> None:
    if c1 == 0:
        raise FamilyError("c1 must be nonzero")
    lo, hi = interval
    root = -c2 / c1
    if lo <= root <= hi:
        raise FamilyError(f"-c2/c1 = {root:g} lies in the interval [{lo:g}, {hi:g}]")


def _check_sign_constant(inside: Expr, interval, var: str = "t") -> None:
    t = np.linspace(interval[0], interval[1], SIGN_SAMPLES)
    values = np.broadcast_to(ex.evaluate(inside, {var: t}), t.shape)
    if not (np.all(values > 0) or np.all(values < 0)):
        raise FamilyError("the argument of |.| changes sign or vanishes on the interval")


def base_flow(c1: float, c2: float, var: str = "t") -> Expr:
    """The 2-Killing flow ``cbrt(c1 t + c2)`` on an interval (constant if c1 = 0)."""
    t = ex.Var(var)
    return ex.cbrt(ex.add(ex.mul(ex.Const(c1), t), ex.Const(c2)))


def _spatial_factor(a: float, b: float, x: str) -> Expr:
    # exp((a x + b) / 2)
    return ex.exp(ex.div(ex.add(ex.mul(ex.Const(a), ex.Var(x)), ex.Const(b)), ex.Const(2.0)))


def _assemble(p: FamilyParams, inside: Expr, x: str) -> Expr:
    _check_sign_constant(inside, p.interval)
    return ex.mul(_spatial_factor(p.a, p.b, x), ex.sqrt(ex.absolute(inside)))


def cbrt_flow_twist(p: FamilyParams, x: str = "x") -> Expr:
    """Twisted function making ``cbrt(c1 t + c2) d/dt + k d/dx`` 2-Killing."""
    if p.a == 0:
        raise FamilyError("a must be nonzero")
    _check_cbrt_flow(p.c1, p.c2, p.interval)
    u2 = ex.power(base_flow(p.c1, p.c2), 2.0)
    if p.k != 0:
        ak = p.a * p.k
        exponent = ex.sub(ex.Const(p.c0),
                          ex.div(ex.mul(ex.Const(3.0 * ak), u2), ex.Const(2.0 * p.c1)))
        inside = ex.add(ex.mul(ex.Const(p.sign / ak), ex.exp(exponent)), ex.Const(p.c0p))
    else:
        coefficient = p.sign * 3.0 * math.exp(p.c0) / (2.0 * p.c1)
        inside = ex.add(ex.mul(ex.Const(coefficient), u2), ex.Const(p.c0p))
    return _assemble(p, inside, x)


def constant_flow_twist(p: FamilyParams, x: str = "x") -> Expr:
    """Twisted function making ``c d/dt + k d/dx`` 2-Killing (c != 0)."""
    if p.c == 0:
        raise FamilyError("c must be nonzero")
    if p.a == 0:
        raise FamilyError("a must be nonzero")
    if p.k != 0:
        ak = p.a * p.k
        exponent = ex.sub(ex.Const(p.c0), ex.mul(ex.Const(ak / p.c), T))
        inside = ex.add(ex.mul(ex.Const(p.sign * p.c / ak), ex.exp(exponent)),
                        ex.Const(p.c0p))
    else:
        inside = ex.add(ex.mul(ex.Const(p.sign * math.exp(p.c0)), T), ex.Const(p.c0p))
    return _assemble(p, inside, x)


def killing_twist(c: float, k: float, a: float, ci: float, x: str = "x") -> Expr:
    """``ci * exp(a (c x - k t) / c)``, for which ``c d/dt + k d/dx`` is Killing."""
    if c == 0:
        raise FamilyError("c must be nonzero")
    if a == 0:
        raise FamilyError("a must be nonzero")
    if not ci > 0:
        raise FamilyError("ci must be positive")
    phase = ex.sub(ex.mul(ex.Const(c), ex.Var(x)), ex.mul(ex.Const(k), T))
    return ex.mul(ex.Const(ci), ex.exp(ex.div(ex.mul(ex.Const(a), phase), ex.Const(c))))


def _spacetime(n_spatial: int, interval, x_interval):
    if n_spatial < 0:
        raise FamilyError("n_spatial must be non-negative")
    factors = [FactorChart.interval("I", "t", *interval, sign=-1.0)]
    xs = []
    for i in range(2, n_spatial + 2):
        factors.append(FactorChart.interval(f"I{i}", f"x{i}", *x_interval))
        xs.append(f"x{i}")
    return factors, xs


def family_scene(p: FamilyParams, n_spatial: int = 1, *, grid: GridSpec | None = None,
                 tolerance: float = 1e-8, name: str | None = None) -> Scene:
    """A complete scene for one family: spacetime, twists and the matching field."""
    factors, xs = _spacetime(n_spatial, p.interval, p.x_interval)
    guards = ()
    if p.family is Family.BASE_FLOW:
        flow = base_flow(p.c1, p.c2)
        spatial, twist = ex.ZERO, (lambda x: ex.ONE)
        if p.c1 != 0:
            _check_cbrt_flow(p.c1, p.c2, p.interval)
            guards = (ex.add(ex.mul(ex.Const(p.c1), T), ex.Const(p.c2)),)
    elif p.family is Family.CBRT_FLOW:
        flow = base_flow(p.c1, p.c2)
        spatial = ex.Const(p.k)
        twist = lambda x: cbrt_flow_twist(p, x)  # noqa: E731
        guards = (ex.add(ex.mul(ex.Const(p.c1), T), ex.Const(p.c2)),)
    elif p.family is Family.CONSTANT_FLOW:
        flow, spatial = ex.Const(p.c), ex.Const(p.k)
        twist = lambda x: constant_flow_twist(p, x)  # noqa: E731
    else:
        flow, spatial = ex.Const(p.c), ex.Const(p.k)
        twist = lambda x: killing_twist(p.c, p.k, p.a, p.ci, x)  # noqa: E731
    components = {"I": [flow]}
    components.update({f"I{i}": [spatial] for i in range(2, n_spatial + 2)})
    grid = grid or GridSpec(guards=guards)
    return Scene(factors, [TwistFunction(f"I{i}", twist(x)) for i, x in enumerate(xs, 2)],
                 VectorFieldSpec(components), grid, tolerance,
                 name or p.family.value, {"family": p.as_dict()})


def example_scene(id: int, n_spatial: int = 1, c: float = 1.0) -> Scene:
    """One of the four bundled example spacetimes over ``[1,2] x [0,1]^n``.

    ========  ==========================================  ==============================
    id        twisted function ``f_i``                     field
    ========  ==========================================  ==============================
    43        ``(exp(2 x_i - 3 cbrt(t^2)))^(1/4)``         ``cbrt(t) d/dt + sum d/dx_i``
    44        ``cbrt(t) sqrt(exp(x_i))``                   ``cbrt(t) d/dt``
    47        ``sqrt(exp(t + x_i))``                       ``-d/dt + sum d/dx_i``
    48        ``sqrt(t exp(x_i))``                         ``c d/dt``
    ========  ==========================================  ==============================

    On ``t in [1, 2]`` the ``|t|`` of the last example is just ``t``.
    """
    if id not in EXAMPLE_IDS:
        raise ValueError(f"unknown example {id!r}; choose from {EXAMPLE_IDS}")
    if id == 48 and c == 0:
        raise FamilyError("c must be nonzero")
    factors, xs = _spacetime(n_spatial, (1.0, 2.0), (0.0, 1.0))
    templates = {
        43: ("(exp(2*{x} - 3*cbrt(t^2)))^0.25", "cbrt(t)", "1"),
        44: ("cbrt(t)*sqrt(exp({x}))", "cbrt(t)", "0"),
        47: ("sqrt(exp(t + {x}))", "-1", "1"),
        48: ("sqrt(t*exp({x}))", repr(float(c)), "0"),
    }
    f_template, flow, spatial = templates[id]
    twists = [TwistFunction(f"I{i}", ex.parse(f_template.format(x=x)))
              for i, x in enumerate(xs, 2)]
    components = {"I": [ex.simplify(ex.parse(flow))]}
    components.update({f"I{i}": [ex.parse(spatial)] for i in range(2, n_spatial + 2)})
    guards = () if id == 47 else (T,)
    meta = {"id": id, "n_spatial": n_spatial}
    if id == 48:
        meta["c"] = float(c)
    return Scene(factors, twists, VectorFieldSpec(components), GridSpec(guards=guards),
                 1e-8, f"example_{id}", {"example": meta})
