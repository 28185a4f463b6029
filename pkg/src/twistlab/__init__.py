"""Killing and 2-Killing vector fields on multiply twisted product manifolds."""

from .expr import DomainError, Expr, ParseError, diff, evaluate, parse, to_string
from .families import (Family, FamilyError, FamilyParams, base_flow, cbrt_flow_twist,
                       constant_flow_twist, example_scene, family_scene,
                       killing_twist)
from .lie import (Classification, LieCalculus, Mode, base_ode_residual, classify,
                  compare, killing_residual, two_killing_residual)
from .manifold import (FactorChart, GeometryError, GridSpec, Scene, TwistFunction,
                       VectorFieldSpec, assemble_metric, sample_grid)
from .scenefile import SchemaError, load_scene

__version__ = "0.1.0"
