"""Lagrange P2/P3 shape functions with derivatives up to third order.

Polynomials are stored as coefficients over scaled monomials
``s^a t^b`` with ``s = (x - xc)/scale``, ``t = (y - yc)/scale``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

# derivative components (order in x, order in y)
COMPONENTS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
              (3, 0), (2, 1), (1, 2), (0, 3))
VAL, DX, DY, DXX, DXY, DYY, DXXX, DXXY, DXYY, DYYY = range(10)
NCOMP = {0: 1, 1: 3, 2: 6, 3: 10}


def n_local(p):
    return (p + 1) * (p + 2) // 2


@lru_cache(maxsize=None)
def exponents(p):
    return tuple((d - b, b) for d in range(p + 1) for b in range(d + 1))


def _falling(n, k):
    out = 1
    for i in range(k):
        out *= n - i
    return out


@lru_cache(maxsize=None)
def _deriv_tables(p, order):
    """Per component: factor and shifted exponents for every monomial."""
    exps = exponents(p)
    fac = np.zeros((NCOMP[order], len(exps)))
    ea = np.zeros((NCOMP[order], len(exps)), dtype=int)
    eb = np.zeros((NCOMP[order], len(exps)), dtype=int)
    for c, (i, j) in enumerate(COMPONENTS[: NCOMP[order]]):
        for m, (a, b) in enumerate(exps):
            if a >= i and b >= j:
                fac[c, m] = _falling(a, i) * _falling(b, j)
                ea[c, m] = a - i
                eb[c, m] = b - j
    return fac, ea, eb


def monomial_derivatives(local, scale, p, order=2):
    """Derivatives of scaled monomials.

    ``local`` holds scaled coordinates ``(..., 2)``; the result has shape
    ``(..., ncomp, nmono)`` and is already divided by ``scale**|alpha|``.
    """
    local = np.asarray(local, float)
    fac, ea, eb = _deriv_tables(p, order)
    s = local[..., 0]
    t = local[..., 1]
    spow = np.stack([s ** k for k in range(p + 1)], axis=-1)
    tpow = np.stack([t ** k for k in range(p + 1)], axis=-1)
    vals = fac * np.take(spow, ea, axis=-1) * np.take(tpow, eb, axis=-1)
    dorder = np.array([i + j for i, j in COMPONENTS[: NCOMP[order]]])
    return vals / (scale ** dorder)[:, None]


def reference_nodes(verts, p):
    """Lagrange nodes: vertices, edge nodes (edge j from vertex j to j+1),
    then the centroid for P3."""
    v = np.asarray(verts, float)
    nodes = [v[0], v[1], v[2]]
    for j in range(3):
        a, b = v[j], v[(j + 1) % 3]
        for k in range(1, p):
            nodes.append(a + (k / p) * (b - a))
    if p == 3:
        nodes.append(v.mean(axis=0))
    elif p not in (1, 2):
        raise ValueError(f"unsupported degree {p}")
    return np.array(nodes)


class LagrangeElement:
    """Lagrange basis on one triangle.

    ``coef`` has shape ``(nmono, nloc)``: column ``i`` holds the monomial
    coefficients of shape function ``i``.
    """

    def __init__(self, verts, p, scale=None):
        if p not in (2, 3):
            raise ValueError(f"unsupported degree {p}")
        self.verts = np.asarray(verts, float)
        self.p = p
        self.center = self.verts.mean(axis=0)
        if scale is None:
            scale = float(max(np.linalg.norm(self.verts[i] - self.verts[(i + 1) % 3])
                              for i in range(3)))
        self.scale = scale
        self.nodes = reference_nodes(self.verts, p)
        V = monomial_derivatives(self.local(self.nodes), scale, p, 0)[:, 0, :]
        self.coef = np.linalg.inv(V)

    @property
    def nloc(self):
        return n_local(self.p)

    def local(self, pts):
        return (np.asarray(pts, float) - self.center) / self.scale

    def monomials(self, pts, order=2):
        return monomial_derivatives(self.local(pts), self.scale, self.p, order)

    def evaluate(self, pts, order=2, coef=None):
        """Shape-function derivatives at points: ``(npts, ncomp, nloc)``."""
        c = self.coef if coef is None else coef
        return self.monomials(pts, order) @ c


def lagrange_eval(p, i, point, derivative_order=0, verts=((0, 0), (1, 0), (0, 1))):
    """Single shape function ``i`` at ``point``.

    Returns the value (order 0), gradient (order 1), Hessian (order 2) or the
    symmetric third-derivative tensor (order 3).
    """
    if derivative_order not in (0, 1, 2, 3):
        raise ValueError("derivative order must be 0..3")
    el = LagrangeElement(verts, p)
    d = el.evaluate(np.asarray(point, float)[None, :], 3)[0, :, i]
    if derivative_order == 0:
        return d[VAL]
    if derivative_order == 1:
        return np.array([d[DX], d[DY]])
    if derivative_order == 2:
        return np.array([[d[DXX], d[DXY]], [d[DXY], d[DYY]]])
    T = np.empty((2, 2, 2))
    for i_ in range(2):
        for j in range(2):
            for k in range(2):
                ny = i_ + j + k
                T[i_, j, k] = d[(DXXX, DXXY, DXYY, DYYY)[ny]]
    return T


# directional derivatives from component arrays (components on axis -2)


def d_n(D, n):
    return n[..., 0, None] * D[..., DX, :] + n[..., 1, None] * D[..., DY, :]


def d_nn(D, n):
    nx, ny = n[..., 0, None], n[..., 1, None]
    return nx * nx * D[..., DXX, :] + 2 * nx * ny * D[..., DXY, :] + ny * ny * D[..., DYY, :]


def d_third(D, a, b, c):
    """Contraction of the third-derivative tensor with vectors a, b, c."""
    ax, ay = a[..., 0, None], a[..., 1, None]
    bx, by = b[..., 0, None], b[..., 1, None]
    cx, cy = c[..., 0, None], c[..., 1, None]
    return (ax * bx * cx * D[..., DXXX, :]
            + (ay * bx * cx + ax * by * cx + ax * bx * cy) * D[..., DXXY, :]
            + (ax * by * cy + ay * bx * cy + ay * by * cx) * D[..., DXYY, :]
            + ay * by * cy * D[..., DYYY, :])


def d_flux(D, n):
    """``d_n(Laplacian) + d_ntt`` with ``t`` the normal rotated by +90 deg."""
    t = np.stack([-n[..., 1], n[..., 0]], axis=-1)
    nx, ny = n[..., 0, None], n[..., 1, None]
    lap_n = nx * (D[..., DXXX, :] + D[..., DXYY, :]) + ny * (D[..., DXXY, :] + D[..., DYYY, :])
    return lap_n + d_third(D, t, t, n)


def hessian_inner(D1, D2):
    """Pointwise Frobenius product of Hessians."""
    return (D1[..., DXX, :] * D2[..., DXX, :] + 2 * D1[..., DXY, :] * D2[..., DXY, :]
            + D1[..., DYY, :] * D2[..., DYY, :])
