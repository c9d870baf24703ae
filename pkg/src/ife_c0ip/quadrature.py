"""Quadrature on segments, triangles, curved subregions and interface arcs."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .geometry import GeometryResolutionError


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_segment(n):
    """``n``-point Gauss-Legendre rule on [0, 1] (exact to degree 2n-1)."""
    if not 1 <= n <= 64:
        raise ValueError("n must be in [1, 64]")
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadRule(0.5 * (x + 1.0), 0.5 * w, 2 * n - 1)


@lru_cache(maxsize=None)
def _gauss_jacobi01(n, alpha):
    """Gauss-Jacobi rule on [0, 1] for the weight ``(1-x)^alpha``."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def gauss_triangle(d):
    """Collapsed Gauss rule on the reference triangle (0,0),(1,0),(0,1).

    Exact for polynomials of total degree ``<= d``; all weights positive.
    """
    if d < 0:
        raise ValueError("degree must be non-negative")
    n = max(1, (d + 2) // 2)
    u, wu = gauss_segment(n).points, gauss_segment(n).weights
    v, wv = _gauss_jacobi01(n, 1)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([(U * (1.0 - V)).ravel(), V.ravel()])
    w = np.outer(wu, wv).ravel()
    return QuadRule(pts, w, 2 * n - 1)


def map_triangle(rule, verts):
    """Physical points and weights of a reference rule on a triangle."""
    verts = np.asarray(verts, float)
    J = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    pts = verts[0] + rule.points @ J.T
    return pts, rule.weights * abs(np.linalg.det(J))


def map_triangles(rule, verts):
    """Vectorized :func:`map_triangle` for ``verts`` of shape (M, 3, 2)."""
    v0 = verts[:, 0]
    e1 = verts[:, 1] - v0
    e2 = verts[:, 2] - v0
    xi, eta = rule.points[:, 0], rule.points[:, 1]
    pts = v0[:, None, :] + xi[None, :, None] * e1[:, None, :] + eta[None, :, None] * e2[:, None, :]
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, det[:, None] * rule.weights[None, :]


def segment_rule(a, b, n):
    """Gauss points and weights on the straight segment from ``a`` to ``b``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    r = gauss_segment(n)
    pts = a[..., None, :] + r.points[:, None] * (b - a)[..., None, :]
    length = np.linalg.norm(b - a, axis=-1)
    return pts, np.multiply.outer(length, r.weights)


def arc_rule(arc, n):
    """Quadrature on an interpolated interface arc.

    Returns ``(points, weights)``; weights include the curve speed.
    """
    r = gauss_segment(n)
    pts = arc(r.points)
    speed = np.linalg.norm(arc.derivative(r.points), axis=-1)
    return pts, r.weights * speed


def _arc_cell(apex, arc, nr, nt):
    """Radial map ``apex + r (arc(t) - apex)`` of the unit square."""
    rr, wr = _gauss_jacobi01(nr, 1)
    # integrate in s = 1 - r so the Jacobian factor r becomes the weight (1-s)
    r = 1.0 - rr
    t_rule = gauss_segment(nt)
    t, wt = t_rule.points, t_rule.weights
    g = arc(t)
    dg = arc.derivative(t)
    rel = g - apex
    det = rel[:, 0] * dg[:, 1] - rel[:, 1] * dg[:, 0]
    # sign check on a dense sampling as well as the nodes
    ts = np.linspace(0.0, 1.0, 65)
    rs = arc(ts) - apex
    ds = arc.derivative(ts)
    dets = rs[:, 0] * ds[:, 1] - rs[:, 1] * ds[:, 0]
    alld = np.concatenate([det, dets])
    if not (np.all(alld > 0) or np.all(alld < 0)):
        raise GeometryResolutionError("curved cell map changes orientation")
    pts = apex + r[:, None, None] * rel[None, :, :]
    w = np.outer(wr, wt * np.abs(det))
    return pts.reshape(-1, 2), w.ravel()


def _visibility(apex, arc):
    ts = np.linspace(0.0, 1.0, 33)
    rel = arc(ts) - apex
    d = arc.derivative(ts)
    det = rel[:, 0] * d[:, 1] - rel[:, 1] * d[:, 0]
    scale = np.linalg.norm(rel, axis=1) * np.linalg.norm(d, axis=1)
    sines = det / np.where(scale > 0, scale, 1.0)
    if np.all(sines > 0) or np.all(sines < 0):
        return float(np.min(np.abs(sines)))
    return -1.0


def curved_region_rule(region, d):
    """Physical quadrature on a curved subregion, exact to degree ``d`` on the
    region bounded by the interpolated arc.

    The region is split into one curved cell (apex + arc, radial map) and
    straight triangles.  The apex is the polygon vertex or straight-edge
    midpoint that sees the arc at the widest angle.
    """
    poly = np.asarray(region.polygon, float)
    arc = region.arc
    q = arc.q
    cands = [(k, None) for k in range(1, len(poly) - 1)]
    cands += [(k, 0.5 * (poly[k - 1] + poly[k])) for k in range(1, len(poly))]
    best, best_score = None, -np.inf
    for k, mid in cands:
        apex = poly[k] if mid is None else mid
        score = _visibility(apex, arc)
        if score > best_score + 1e-12:
            best, best_score = (k, mid), score
    if best_score <= 0:
        raise GeometryResolutionError("no apex sees the whole interface arc")
    k, mid = best
    if mid is None:
        full, a = list(poly), k
    else:
        full, a = list(poly[:k]) + [mid] + list(poly[k:]), k
    apex = full[a]
    # integrand in (r, t): degree d in r (weight r), degree d*q + 2q - 1 in t
    nr = max(1, (d + 2) // 2)
    nt = max(1, (d * q + 2 * q + 1) // 2)
    pts, w = _arc_cell(apex, arc, nr, nt)
    parts_p, parts_w = [pts], [w]
    tri_rule = gauss_triangle(d)
    for fan in (full[: a + 1], full[a:]):
        for j in range(1, len(fan) - 1):
            tri = np.array([fan[0], fan[j], fan[j + 1]])
            tp, tw = map_triangle(tri_rule, tri)
            if tw.sum() > 0:
                parts_p.append(tp)
                parts_w.append(tw)
    return np.vstack(parts_p), np.concatenate(parts_w)
