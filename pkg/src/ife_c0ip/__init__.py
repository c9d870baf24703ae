"""Immersed finite elements with a C0 interior penalty scheme for the
biharmonic interface problem ``div div (beta D^2 u) = f`` on ``[-1, 1]^2``.

Modules: ``geometry`` (level sets, cuts, arcs), ``mesh`` (structured
triangulation, entity classes, DOFs), ``quadrature``, ``ife_space``
(least-squares local bases), ``assembly``, ``solver``, ``analysis`` and
``cli``.
"""
from .geometry import (
    AssumptionViolation,
    GeometryError,
    circle_levelset,
    custom_levelset,
    flower_levelset,
    line_levelset,
    parabola_levelset,
)
from .mesh import Mesh, build_uniform_mesh, classify_entities
from .ife_space import IfeSpace, JWeights, interpolate
from .assembly import PenaltyParams, assemble_system
from .solver import SolverError, estimate_condition, solve_spd
from .analysis import ErrorReport, error_norms
from .problems import make_scenario

__version__ = "0.1.0"
