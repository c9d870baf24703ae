"""Interface scenarios with manufactured solutions ``u = w / beta`` per side.

Because ``beta * u = w`` on both sides and ``w`` vanishes to second order on
the interface, all four homogeneous jump conditions hold and
``f = Laplacian^2 w`` on the whole domain.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from .geometry import (
    circle_levelset,
    flower_levelset,
    line_levelset,
    parabola_levelset,
)

X, Y = sp.symbols("x y", real=True)
# value, dx, dy, dxx, dxy, dyy
_ORDERS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def _lam(expr):
    f = sp.lambdify((X, Y), expr, "numpy")

    def g(x, y):
        return np.broadcast_to(np.asarray(f(x, y), float), np.broadcast(x, y).shape)

    return g


class ManufacturedSolution:
    """Piecewise ``w / beta^s`` with its derivatives up to order two and the
    source ``Laplacian^2 w``."""

    def __init__(self, w, beta_minus, beta_plus):
        self.w = w
        self.beta_minus = float(beta_minus)
        self.beta_plus = float(beta_plus)
        self._d = [_lam(sp.diff(w, X, i, Y, j) if i + j else w) for i, j in _ORDERS]
        lap = sp.diff(w, X, 2) + sp.diff(w, Y, 2)
        self._f = _lam(sp.simplify(sp.diff(lap, X, 2) + sp.diff(lap, Y, 2)))

    def beta(self, side):
        return self.beta_plus if side > 0 else self.beta_minus

    def components(self, pts, side):
        """``(n, 6)``: value, gradient and Hessian entries of the ``side`` branch."""
        pts = np.asarray(pts, float)
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([d(x, y) for d in self._d], axis=-1) / self.beta(side)

    def value(self, pts, side):
        pts = np.asarray(pts, float)
        return self._d[0](pts[..., 0], pts[..., 1]) / self.beta(side)

    def gradient(self, pts, side):
        return self.components(pts, side)[..., 1:3]

    def hessian(self, pts, side):
        return self.components(pts, side)[..., 3:6]

    def source(self, pts):
        pts = np.asarray(pts, float)
        return self._f(pts[..., 0], pts[..., 1])


@dataclass
class Scenario:
    """Everything a run needs besides the discretisation parameters.

    ``exact`` is None for the flower case (reference-solution study).
    """

    name: str
    levelset: object
    beta_minus: float
    beta_plus: float
    exact: ManufacturedSolution | None
    source_value: float | None = None

    def source(self, pts):
        if self.exact is not None:
            return self.exact.source(pts)
        return np.full(np.asarray(pts).shape[:-1], float(self.source_value))

    def dirichlet(self, pts, sides):
        if self.exact is None:
            return np.zeros(np.asarray(pts).shape[:-1])
        out = np.empty(len(pts))
        for s in (1, -1):
            m = sides == s
            if m.any():
                out[m] = self.exact.value(pts[m], s)
        return out

    def neumann(self, pts, normals, side):
        """``d_n u`` of the ``side`` branch (outward normals given)."""
        if self.exact is None:
            return np.zeros(np.asarray(pts).shape[:-1])
        g = self.exact.gradient(pts, side)
        return np.einsum("...i,...i->...", g, normals)


DEFAULT_BETA = {
    # (beta_minus, beta_plus)
    "line": (1.0, 100.0),
    "moving-line": (1.0, 10.0),
    "parabola": (1.0, 10.0),
    "circle": (50.0, 1.0),
    "flower": (50.0, 1.0),
}

CASES = tuple(DEFAULT_BETA)


@lru_cache(maxsize=None)
def _w_expr(case, c):
    if case == "line":
        return (2 * X + Y - c) ** 2 * sp.sin(sp.pi * Y) ** 2
    if case == "moving-line":
        return (X - c) ** 2 * sp.sin(sp.pi * Y) ** 2
    if case == "parabola":
        return (X ** 2 + 2 * X + c - Y) ** 2 * (1 - Y ** 2) ** 2
    if case == "circle":
        return (X ** 2 + Y ** 2 - c ** 2) ** 2 * sp.sin(sp.pi * Y) ** 2
    raise ValueError(case)


@lru_cache(maxsize=None)
def _solution(case, c, beta_minus, beta_plus):
    return ManufacturedSolution(_w_expr(case, c), beta_minus, beta_plus)


def make_scenario(case, beta_minus=None, beta_plus=None, c=None):
    """Scenario by name; ``c`` is the line offset, parabola shift or circle radius."""
    if case not in DEFAULT_BETA:
        raise ValueError(f"unknown case {case!r}; choose from {', '.join(CASES)}")
    bm, bp = DEFAULT_BETA[case]
    bm = bm if beta_minus is None else float(beta_minus)
    bp = bp if beta_plus is None else float(beta_plus)
    if case == "flower":
        return Scenario(case, flower_levelset(), bm, bp, None, source_value=1.0)
    if case == "line":
        c = np.sqrt(0.5) if c is None else c
        ls = line_levelset(2.0, 1.0, c)
        cs = sp.sqrt(sp.Rational(1, 2)) if c == np.sqrt(0.5) else sp.Float(c, 17)
    elif case == "moving-line":
        c = 0.75 if c is None else c
        ls = line_levelset(1.0, 0.0, c)
        cs = sp.Float(c, 17)
    elif case == "parabola":
        c = -np.sqrt(2.0) / 2.0 if c is None else c
        ls = parabola_levelset(c)
        cs = -sp.sqrt(2) / 2 if c == -np.sqrt(2.0) / 2.0 else sp.Float(c, 17)
    else:
        c = np.pi / 6.28 if c is None else c
        ls = circle_levelset(c)
        cs = sp.pi / sp.Float("6.28", 17) if c == np.pi / 6.28 else sp.Float(c, 17)
    return Scenario(case, ls, bm, bp, _solution(case, cs, bm, bp))
