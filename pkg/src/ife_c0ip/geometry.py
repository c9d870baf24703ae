"""Implicit interfaces, element cuts, curved subregions and interface arcs.

A level set ``phi`` splits the plane into ``Omega+`` (``phi > 0``) and
``Omega-`` (``phi < 0``).  Values with ``|phi| < 1e-12 * h`` are snapped to
zero; snapped nodes count as minus-side nodes everywhere in the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

SNAP_FACTOR = 1e-12
EDGE_SAMPLES = 32


class GeometryError(RuntimeError):
    """Base class for interface/mesh geometry failures."""


class AssumptionViolation(GeometryError):
    """The interface crosses an element in a way the method does not allow.

    Raised when an edge is cut more than once or an element boundary is
    crossed more than twice.
    """

    def __init__(self, message, element=None):
        if element is not None:
            message = f"element {element}: {message}"
        super().__init__(message)
        self.element = element


class DegenerateCut(GeometryError):
    pass


class GeometryResolutionError(GeometryError):
    """A curved cell map is not invertible at the requested resolution."""


# ---------------------------------------------------------------------------
# level sets


@dataclass(frozen=True)
class LevelSet:
    """Signed implicit description of an interface curve.

    ``func(x, y)`` and ``grad(x, y)`` must accept numpy arrays.
    """

    func: Callable
    grad: Callable
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, x, y):
        return self.func(np.asarray(x, float), np.asarray(y, float))

    def evaluate(self, pts):
        pts = np.asarray(pts, float)
        return self.func(pts[..., 0], pts[..., 1])

    def gradient(self, pts):
        pts = np.asarray(pts, float)
        gx, gy = self.grad(pts[..., 0], pts[..., 1])
        return np.stack(np.broadcast_arrays(gx, gy), axis=-1)

    def normal(self, pts):
        """Unit normal pointing into ``Omega+``."""
        g = self.gradient(pts)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)


def line_levelset(a=2.0, b=1.0, c=np.sqrt(0.5)):
    """``a*x + b*y - c``."""

    def func(x, y):
        return a * x + b * y - c

    def grad(x, y):
        return np.full_like(x, a, dtype=float), np.full_like(y, b, dtype=float)

    return LevelSet(func, grad, "line", {"a": a, "b": b, "c": c})


def parabola_levelset(c=-np.sqrt(2.0) / 2.0):
    """``y - (x^2 + 2x + c)``."""

    def func(x, y):
        return y - (x * x + 2.0 * x + c)

    def grad(x, y):
        return -(2.0 * x + 2.0), np.ones_like(y, dtype=float)

    return LevelSet(func, grad, "parabola", {"c": c})


def circle_levelset(r0=np.pi / 6.28):
    """``x^2 + y^2 - r0^2`` (minus side inside)."""

    def func(x, y):
        return x * x + y * y - r0 * r0

    def grad(x, y):
        return 2.0 * x, 2.0 * y

    return LevelSet(func, grad, "circle", {"r0": r0})


FLOWER_RADIUS4 = (1.5 * np.pi / 6.28) ** 4


def flower_levelset(amplitude=0.6, petals=6, level=FLOWER_RADIUS4):
    """``(x^2+y^2)(1 + a sin(k theta)) - level``.

    ``theta`` comes from ``arctan2``; for six petals ``sin(6 theta)`` is
    pi-periodic so this matches the ``arctan(y/x)`` form without the x=0
    singularity.
    """

    def func(x, y):
        th = np.arctan2(y, x)
        return (x * x + y * y) * (1.0 + amplitude * np.sin(petals * th)) - level

    def grad(x, y):
        th = np.arctan2(y, x)
        s = 1.0 + amplitude * np.sin(petals * th)
        c = amplitude * petals * np.cos(petals * th)
        return 2.0 * x * s - c * y, 2.0 * y * s + c * x

    return LevelSet(func, grad, "flower",
                    {"amplitude": amplitude, "petals": petals, "level": level})


def custom_levelset(func, grad):
    return LevelSet(func, grad, "custom", {})


# ---------------------------------------------------------------------------
# edge scans


def _canonical(a, b):
    """Order segment endpoints lexicographically so shared edges scan alike."""
    if (a[0], a[1]) <= (b[0], b[1]):
        return a, b, False
    return b, a, True


@dataclass
class EdgeScan:
    """Sign samples of ``phi`` along a segment, in canonical direction."""

    a: np.ndarray
    b: np.ndarray
    signs: np.ndarray  # (EDGE_SAMPLES+1,) in {-1, 0, 1}
    crossings: list  # [(t, point)] strictly inside the segment
    tvals: np.ndarray

    def point(self, t):
        return self.a + t * (self.b - self.a)


def scan_edge(levelset, a, b, h):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    a, b, _ = _canonical(a, b)
    eps = SNAP_FACTOR * h
    t = np.linspace(0.0, 1.0, EDGE_SAMPLES + 1)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    vals = levelset.evaluate(pts)
    signs = np.where(np.abs(vals) < eps, 0, np.sign(vals)).astype(int)

    def f(s):
        p = a + s * (b - a)
        return float(levelset(p[0], p[1]))

    crossings = []
    nz = np.flatnonzero(signs)
    for k0, k1 in zip(nz[:-1], nz[1:]):
        if signs[k0] == signs[k1]:
            continue
        if k1 == k0 + 1:
            s = brentq(f, t[k0], t[k1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            # a run of on-interface samples; take its first sample
            s = t[k0 + 1]
        crossings.append((s, a + s * (b - a)))
    if len(crossings) > 2:
        raise AssumptionViolation(f"segment cut {len(crossings)} times")
    return EdgeScan(a, b, signs, crossings, t)


def edge_intersections(levelset, segment, h=None):
    """Crossing points of the interface with a segment, sorted by parameter.

    Endpoints lying on the interface (within the snap tolerance) are not
    reported.
    """
    a, b = (np.asarray(p, float) for p in segment)
    if h is None:
        h = float(np.linalg.norm(b - a))
    a0, b0, flipped = _canonical(a, b)
    scan = scan_edge(levelset, a0, b0, h)
    pts = [p for _, p in scan.crossings]
    if flipped:
        pts = pts[::-1]
    return pts


# ---------------------------------------------------------------------------
# element classification


@dataclass
class Crossing:
    point: np.ndarray
    edge: int | None  # local edge index (edge j joins vertex j and j+1)
    vertex: int | None  # local vertex index when the cut passes a vertex


@dataclass
class CutTopology:
    """How the interface meets one triangle.

    ``side`` is +1/-1 for non-interface elements and 0 for interface ones.
    For interface elements ``entry`` is the crossing where the boundary walk
    (counterclockwise) enters ``Omega+`` and ``exit`` where it leaves.
    ``plus_vertices``/``minus_vertices`` list local vertex indices strictly
    inside each side, in walk order from entry (resp. exit).
    """

    side: int
    entry: Crossing | None = None
    exit: Crossing | None = None
    plus_vertices: tuple = ()
    minus_vertices: tuple = ()
    cut_type: str | None = None
    arc: "Arc | None" = None

    @property
    def is_interface(self):
        return self.side == 0

    @property
    def crossings(self):
        return [] if self.side else [self.entry, self.exit]


def _walk(levelset, verts, h):
    """Boundary sign walk of a triangle.

    Returns list of (sign, kind, payload) entries around the boundary where
    kind is "v" (payload vertex index) or "s" (payload (edge, scan, k)).    """
    entries = []
    scans = []
    for j in range(3):
        a, b = verts[j], verts[(j + 1) % 3]
        a0, b0, flipped = _canonical(a, b)
        sc = scan_edge(levelset, a0, b0, h)
        scans.append((sc, flipped))
        ks = np.arange(EDGE_SAMPLES + 1)
        if flipped:
            ks = ks[::-1]
        # sample 0 in walk direction is vertex j; skip the end vertex
        entries.append((int(sc.signs[ks[0]]), "v", j))
        for k in ks[1:-1]:
            entries.append((int(sc.signs[k]), "s", (j, k)))
    return entries, scans


def classify_element(levelset, triangle, h=None, element=None):
    """Classify one triangle against the interface.

    Returns a :class:`CutTopology`; raises :class:`AssumptionViolation` if the
    boundary is crossed more than twice or both crossings lie on one edge.
    """
    verts = np.asarray(triangle, float)
    if h is None:
        h = float(max(np.linalg.norm(verts[i] - verts[(i + 1) % 3]) for i in range(3)))
    entries, scans = _walk(levelset, verts, h)
    nonzero = [i for i, e in enumerate(entries) if e[0] != 0]
    if not nonzero:
        raise DegenerateCut(f"element {element}: boundary lies on the interface")
    signs = [entries[i][0] for i in nonzero]
    changes = [m for m in range(len(nonzero)) if signs[m] != signs[m - 1]]
    if not changes:
        return CutTopology(side=signs[0])
    if len(changes) != 2:
        raise AssumptionViolation(
            f"boundary crossed {len(changes)} times", element)

    crossings = []
    n = len(entries)
    for m in changes:
        i_prev, i_next = nonzero[m - 1], nonzero[m]
        new_sign = signs[m]
        crossings.append((new_sign, _locate(entries, scans, i_prev, i_next, n)))
    entry = next(c for s, c in crossings if s > 0)
    exit_ = next(c for s, c in crossings if s < 0)
    if entry.edge is not None and exit_.edge is not None and entry.edge == exit_.edge:
        raise AssumptionViolation("both crossings on one edge", element)

    plus_v, minus_v = _side_vertices(entries, nonzero, signs, changes)
    topo = CutTopology(side=0, entry=entry, exit=exit_,
                       plus_vertices=plus_v, minus_vertices=minus_v)
    topo.cut_type = _cut_type(verts, entry, exit_)
    return topo


def _locate(entries, scans, i_prev, i_next, n):
    """Crossing between two consecutive non-zero walk entries."""
    gap = (i_next - i_prev) % n
    if gap > 1:
        # zero run: a vertex on the interface, else a sample inside one edge
        for d in range(1, gap):
            e = entries[(i_prev + d) % n]
            if e[1] == "v":
                j = e[2]
                sc, flipped = scans[j]
                return Crossing((sc.b if flipped else sc.a).copy(), edge=None, vertex=j)
        j = entries[(i_prev + 1) % n][2][0]
    else:
        kind, payload = entries[i_prev][1], entries[i_prev][2]
        j = payload[0] if kind == "s" else payload
    sc, _ = scans[j]
    if len(sc.crossings) != 1:
        raise AssumptionViolation(f"edge {j} cut {len(sc.crossings)} times")
    return Crossing(sc.crossings[0][1].copy(), edge=j, vertex=None)


def _side_vertices(entries, nonzero, signs, changes):
    """Vertices bounding each side, in walk order starting at its entry."""
    n = len(entries)
    out = {}
    for sgn in (1, -1):
        m_in = next(m for m in changes if signs[m] == sgn)
        m_out = next(m for m in changes if signs[m] == -sgn)
        start, stop = nonzero[m_in], nonzero[m_out - 1]
        verts = []
        for d in range((stop - start) % n + 1):
            s, kind, payload = entries[(start + d) % n]
            if kind == "v" and s in (sgn, 0):
                verts.append(payload)
        out[sgn] = tuple(verts)
    return out[1], out[-1]


def right_angle_vertex(verts):
    best, idx = -np.inf, 0
    for j in range(3):
        u = verts[(j + 1) % 3] - verts[j]
        v = verts[(j + 2) % 3] - verts[j]
        c = -abs(np.dot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v))
        if c > best:
            best, idx = c, j
    return idx


def _cut_type(verts, c0, c1):
    """Type I: both crossings on the legs adjacent to the right angle."""
    r = right_angle_vertex(verts)
    hyp = (r + 1) % 3

    def on_leg(c):
        return c.edge != hyp if c.edge is not None else True

    return "I" if on_leg(c0) and on_leg(c1) else "II"


# ---------------------------------------------------------------------------
# fictitious elements and arcs


@dataclass
class FictitiousTriangle:
    vertices: np.ndarray
    lam: float
    parent: int | None = None


def fictitious_element(triangle, lam, parent=None):
    """Dilate a triangle by ``lam`` about its barycenter."""
    if lam < 1.0:
        raise ValueError("lambda must be >= 1")
    v = np.asarray(triangle, float)
    o = v.mean(axis=0)
    return FictitiousTriangle(o + lam * (v - o), float(lam), parent)


def arc_parameters(q):
    """Chebyshev-Lobatto parameters on [0, 1]."""
    k = np.arange(q + 1)
    return 0.5 * (1.0 - np.cos(np.pi * k / q))


@dataclass
class Arc:
    """Polynomial graph over a chord: ``gamma(t) = P0 + t (P1-P0) + d(t) nu``."""

    p0: np.ndarray
    p1: np.ndarray
    nodes: np.ndarray  # (q+1, 2) points on the zero set
    offset_coef: np.ndarray  # polynomial coefficients of d(t), low->high

    @property
    def q(self):
        return len(self.nodes) - 1

    @property
    def chord(self):
        return self.p1 - self.p0

    @property
    def nu(self):
        c = self.chord
        return np.array([-c[1], c[0]]) / np.linalg.norm(c)

    def __call__(self, t):
        t = np.asarray(t, float)
        d = np.polynomial.polynomial.polyval(t, self.offset_coef)
        return self.p0 + t[..., None] * self.chord + d[..., None] * self.nu

    def derivative(self, t):
        t = np.asarray(t, float)
        dd = np.polynomial.polynomial.polyval(
            t, np.polynomial.polynomial.polyder(self.offset_coef))
        return np.broadcast_to(self.chord, t.shape + (2,)) + dd[..., None] * self.nu

    def reversed(self):
        c = self.offset_coef
        # d_rev(t) = -d(1-t) because the chord normal flips
        poly = np.polynomial.Polynomial(c)
        rev = -poly(np.polynomial.Polynomial([1.0, -1.0]))
        coef = np.zeros(len(c))
        coef[: len(rev.coef)] = rev.coef
        return Arc(self.p1, self.p0, self.nodes[::-1].copy(), coef)

    def length(self, n=20):
        from .quadrature import gauss_segment
        rule = gauss_segment(n)
        return float(np.sum(rule.weights * np.linalg.norm(self.derivative(rule.points), axis=-1)))


def _project_along(levelset, base, nu, L):
    """Root of phi(base + s nu) nearest s = 0 for each base point."""
    s = np.zeros(len(base))
    for _ in range(30):
        pts = base + s[:, None] * nu
        f = levelset.evaluate(pts)
        g = levelset.gradient(pts) @ nu
        step = np.where(np.abs(g) > 1e-300, f / np.where(g == 0, 1, g), 0.0)
        s = s - step
        if np.all(np.abs(step) <= 1e-15 * L):
            break
    pts = base + s[:, None] * nu
    ok = (np.abs(levelset.evaluate(pts)) <= 1e-13 * L) & (np.abs(s) <= L)
    for i in np.flatnonzero(~ok):
        s[i] = _bracket_root(levelset, base[i], nu, L)
    return s


def _bracket_root(levelset, base, nu, L):
    grid = np.linspace(-L, L, 401)
    pts = base[None, :] + grid[:, None] * nu[None, :]
    f = levelset.evaluate(pts)
    idx = np.flatnonzero(np.sign(f[:-1]) != np.sign(f[1:]))
    if len(idx) == 0:
        raise DegenerateCut("no interface point found along the chord normal")
    i = idx[np.argmin(np.abs(grid[idx]))]

    def g(s):
        p = base + s * nu
        return float(levelset(p[0], p[1]))

    return brentq(g, grid[i], grid[i + 1], xtol=1e-16 * max(L, 1.0))


def build_arc(levelset, p0, p1, q):
    """Interpolating arc of degree ``q`` through ``q+1`` interface points."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    chord = p1 - p0
    L = float(np.linalg.norm(chord))
    if L == 0.0:
        raise DegenerateCut("zero-length interface chord")
    nu = np.array([-chord[1], chord[0]]) / L
    t = arc_parameters(q)
    base = p0[None, :] + t[:, None] * chord[None, :]
    s = np.zeros(q + 1)
    if q > 1:
        s[1:-1] = _project_along(levelset, base[1:-1], nu, L)
    nodes = base + s[:, None] * nu[None, :]
    coef = np.polynomial.polynomial.polyfit(t, s, q)
    return Arc(p0, p1, nodes, coef)


def extended_arc(levelset, fictitious, q, h=None):
    """Arc of ``Gamma`` inside a (fictitious) triangle, oriented like the cut.

    The orientation is the one produced by :func:`classify_element`: from
    the entry crossing (into ``Omega+``) to the exit crossing.
    """
    verts = fictitious.vertices if isinstance(fictitious, FictitiousTriangle) else np.asarray(fictitious, float)
    topo = classify_element(levelset, verts, h=h)
    if not topo.is_interface:
        raise DegenerateCut("interface does not cross the triangle")
    return build_arc(levelset, topo.entry.point, topo.exit.point, q)


# ---------------------------------------------------------------------------
# subregions


@dataclass
class CurvedRegion:
    """Part of a triangle on one side of the interface.

    The boundary is the straight path ``polygon`` (first point and last point
    are the interface crossings) closed by ``arc`` which runs from
    ``polygon[-1]`` back to ``polygon[0]``.
    """

    side: int
    polygon: np.ndarray
    arc: Arc

    @property
    def vertices(self):
        return self.polygon[1:-1]


def split_subdomains(levelset, triangle, topo, q):
    """Return ``(region_plus, region_minus)`` for an interface element."""
    if not topo.is_interface:
        raise ValueError("element is not cut by the interface")
    verts = np.asarray(triangle, float)
    arc = topo.arc
    if arc is None:
        arc = build_arc(levelset, topo.entry.point, topo.exit.point, q)
        topo.arc = arc
    X, Y = topo.entry.point, topo.exit.point
    plus_poly = np.vstack([X[None], verts[list(topo.plus_vertices)].reshape(-1, 2), Y[None]])
    minus_poly = np.vstack([Y[None], verts[list(topo.minus_vertices)].reshape(-1, 2), X[None]])
    return (CurvedRegion(+1, plus_poly, arc.reversed()),
            CurvedRegion(-1, minus_poly, arc))


def polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
