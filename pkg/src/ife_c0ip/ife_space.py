"""Least-squares immersed P2/P3 spaces.

On an interface element every shape function has a plus and a minus
polynomial piece.  The piece on the side of its own node is the Lagrange
function; the other piece is chosen to minimise the jump functional
``J_lambda`` evaluated on the interface arc inside the dilated element.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    SNAP_FACTOR,
    AssumptionViolation,
    DegenerateCut,
    build_arc,
    classify_element,
    fictitious_element,
    split_subdomains,
)
from .lagrange import LagrangeElement, d_flux, d_n, d_nn, lagrange_eval, monomial_derivatives, n_local
from .mesh import DofMap, classify_entities
from .quadrature import arc_rule, curved_region_rule

__all__ = [
    "JWeights", "IfeLocalBasis", "IfeSpace", "UnisolvenceWarning",
    "lagrange_eval", "jlambda_gram", "solve_ife_coefficients", "build_ife_basis",
    "check_unisolvence", "interpolate", "node_sides",
]


class UnisolvenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class JWeights:
    """Weights of the four jump terms and the dilation factor.

    ``omega0=None`` means ``max(beta)**2``.
    """

    omega0: float | None = None
    omega1: float = 1.0
    omega2: float = 1.0
    omega3: float = 1.0
    lam: float = 2.0

    def resolved(self, beta_minus, beta_plus):
        w0 = max(beta_minus, beta_plus) ** 2 if self.omega0 is None else self.omega0
        if w0 <= 0:
            raise ValueError("omega0 must be positive")
        return np.array([w0, self.omega1, self.omega2, self.omega3], float)


def node_sides(levelset, pts, h):
    """+1 where ``phi > eps``, else -1 (nodes on the interface go minus)."""
    return np.where(levelset.evaluate(pts) > SNAP_FACTOR * h, 1, -1)


# ---------------------------------------------------------------------------
# local construction


def _lambda_arc(levelset, verts, lam, q, h):
    """Arc of the interface inside the dilated element.

    If the dilated element is crossed more than twice (the interface curls
    back within ``lam * h``), the dilation is halved towards 1 until the cut is
    simple again.
    """
    lams = [lam] + [1.0 + (lam - 1.0) / 2 ** k for k in range(1, 6)] + [1.0]
    last = None
    for lm in lams:
        if lm < 1.0:
            continue
        fic = fictitious_element(verts, lm)
        try:
            topo = classify_element(levelset, fic.vertices, h=h)
        except AssumptionViolation as exc:
            last = exc
            continue
        if topo.is_interface:
            return build_arc(levelset, topo.entry.point, topo.exit.point, q), lm
    raise DegenerateCut(f"no simple interface arc in the dilated element ({last})")


def _jump_rows(el, coef, pts, normals, beta_minus, beta_plus, h, weights):
    """Weighted jump rows for a z-vector ``(plus coefs, minus coefs)``.

    Returns ``(4, npts, 2*nloc)`` rows already multiplied by
    ``sqrt(omega_k * w_q) * h**k``.
    """
    D = el.monomials(pts, 3) @ coef  # (npts, 10, nloc)
    n = normals
    comps = [D[:, 0, :], d_n(D, n), d_nn(D, n), d_flux(D, n)]
    bp = [1.0, 1.0, beta_plus, beta_plus]
    bm = [1.0, 1.0, beta_minus, beta_minus]
    rows = []
    for k, c in enumerate(comps):
        s = np.sqrt(weights[k] * h ** (2 * k))
        rows.append(s * np.concatenate([bp[k] * c, -bm[k] * c], axis=1))
    return np.stack(rows)


def jlambda_design(el, coef, arc_pts, arc_w, normals, beta_minus, beta_plus, h, omegas):
    """Design matrix ``W`` with ``W.T @ W`` the Gram matrix of ``J_lambda`` on
    z-vectors ``(plus coefs, minus coefs)``."""
    R = _jump_rows(el, coef, arc_pts, normals, beta_minus, beta_plus, h, omegas)
    R = R * np.sqrt(arc_w)[None, :, None]
    return R.reshape(-1, R.shape[-1])


def _selectors(sides):
    """``P_xi``, ``P_eta`` mapping nodal coefficients into z-vectors."""
    nloc = len(sides)
    Pxi = np.zeros((2 * nloc, nloc))
    Peta = np.zeros((2 * nloc, nloc))
    for i, s in enumerate(sides):
        own, other = (i, nloc + i) if s > 0 else (nloc + i, i)
        Pxi[own, i] = 1.0
        Peta[other, i] = 1.0
    return Pxi, Peta


def jlambda_gram(el, coef, sides, arc_pts, arc_w, normals, beta_minus, beta_plus, h, omegas):
    """``(A, B)`` with ``A_ij = J(eta_j, eta_i)`` and ``B_ij = J(xi_j, eta_i)``."""
    W = jlambda_design(el, coef, arc_pts, arc_w, normals, beta_minus, beta_plus, h, omegas)
    Pxi, Peta = _selectors(sides)
    We, Wx = W @ Peta, W @ Pxi
    return We.T @ We, We.T @ Wx


def solve_ife_coefficients(A, B, v, tol=1e-14):
    """Hidden-side coefficients ``c`` with ``A c = -B v``."""
    A = np.asarray(A, float)
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    if ev[0] <= tol * ev[-1]:
        warnings.warn(f"near-singular J-Gram matrix, min eig {ev[0]:.3e}", UnisolvenceWarning)
    return np.linalg.solve(A, -np.asarray(B, float) @ np.asarray(v, float))


@dataclass
class IfeLocalBasis:
    """Two-piece shape functions on one interface element.

    ``coef_plus``/``coef_minus`` hold scaled-monomial coefficients (columns are
    shape functions); ``nodal_plus``/``nodal_minus`` the same pieces in the
    element's Lagrange basis.
    """

    element: int
    sides: np.ndarray
    nodal_plus: np.ndarray
    nodal_minus: np.ndarray
    coef_plus: np.ndarray
    coef_minus: np.ndarray
    A: np.ndarray
    B: np.ndarray
    margin: float
    lam: float
    arc: object = None
    regions: tuple = field(default=None, repr=False)

    def coef(self, side):
        return self.coef_plus if side > 0 else self.coef_minus


def build_ife_basis(levelset, verts, p, beta_minus, beta_plus, jw=JWeights(), h=None,
                    element=None, n_arc=None, q=None, el=None):
    """Least-squares IFE basis on one interface element."""
    verts = np.asarray(verts, float)
    if h is None:
        h = float(max(np.linalg.norm(verts[i] - verts[(i + 1) % 3]) for i in range(3)))
    if el is None:
        el = LagrangeElement(verts, p, scale=h)
    q = p + 2 if q is None else q
    n_arc = p + 3 if n_arc is None else n_arc
    hT = float(max(np.linalg.norm(verts[i] - verts[(i + 1) % 3]) for i in range(3)))
    omegas = jw.resolved(beta_minus, beta_plus)
    sides = node_sides(levelset, el.nodes, h)
    arc, lam = _lambda_arc(levelset, verts, jw.lam, q, h)
    pts, w = arc_rule(arc, n_arc)
    normals = levelset.normal(pts)
    W = jlambda_design(el, el.coef, pts, w, normals, beta_minus, beta_plus, hT, omegas)
    Pxi, Peta = _selectors(sides)
    We, Wx = W @ Peta, W @ Pxi
    A, B = We.T @ We, We.T @ Wx
    sv = np.linalg.svd(We, compute_uv=False)
    margin = float((sv[-1] / sv[0]) ** 2) if sv[0] > 0 else 0.0
    if margin <= 1e-14:
        warnings.warn(f"element {element}: J-Gram margin {margin:.3e}", UnisolvenceWarning)
    # least squares on the design matrix is the normal equation A c = -B V
    C = np.linalg.lstsq(We, -Wx, rcond=None)[0]
    Z = Pxi + Peta @ C
    nloc = n_local(p)
    zp, zm = Z[:nloc], Z[nloc:]
    return IfeLocalBasis(element, sides, zp, zm, el.coef @ zp, el.coef @ zm, A, B, margin, lam, arc)


def check_unisolvence(basis):
    """``min eig(A) / max eig(A)`` of a local basis."""
    ev = np.linalg.eigvalsh(basis.A)
    return float(ev[0] / ev[-1]) if ev[-1] > 0 else 0.0


def j_seminorm(basis, levelset, verts, p, beta_minus, beta_plus, jw=JWeights(), z=None, n_arc=None):
    """``J_lambda`` Gram on z-vectors for diagnostics (design matrix form)."""
    verts = np.asarray(verts, float)
    h = float(max(np.linalg.norm(verts[i] - verts[(i + 1) % 3]) for i in range(3)))
    el = LagrangeElement(verts, p, scale=h)
    arc, _ = _lambda_arc(levelset, verts, basis.lam, p + 2, h)
    pts, w = arc_rule(arc, p + 3 if n_arc is None else n_arc)
    return jlambda_design(el, el.coef, pts, w, levelset.normal(pts), beta_minus, beta_plus, h,
                          jw.resolved(beta_minus, beta_plus))


# ---------------------------------------------------------------------------
# global space


class IfeSpace:
    """IFE space on a structured mesh.

    Non-interface elements use the Lagrange basis of their orientation class;
    interface elements carry an :class:`IfeLocalBasis`.  All element
    polynomials are expanded in monomials centred at the barycenter and
    scaled by ``h``.
    """

    def __init__(self, mesh, levelset, p, beta_minus, beta_plus, jw=JWeights(),
                 n_arc=None, q=None, vol_degree=None, classes=None):
        self.mesh = mesh
        self.levelset = levelset
        self.p = p
        self.beta_minus = float(beta_minus)
        self.beta_plus = float(beta_plus)
        if self.beta_minus <= 0 or self.beta_plus <= 0:
            raise ValueError("beta must be positive")
        self.jw = jw
        self.q = p + 2 if q is None else q
        self.n_arc = p + 3 if n_arc is None else n_arc
        self.vol_degree = 2 * p + 2 if vol_degree is None else vol_degree
        self.dofs = DofMap(mesh, p)
        self.classes = classify_entities(mesh, levelset) if classes is None else classes
        h = mesh.h
        self.ref = [LagrangeElement(mesh.element_vertices(k), p, scale=h) for k in (0, 1)]
        self.bases = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnisolvenceWarning)
            for T in self.classes.interface_elements:
                T = int(T)
                verts = mesh.element_vertices(T)
                el = LagrangeElement(verts, p, scale=h)
                self.bases[T] = build_ife_basis(levelset, verts, p, beta_minus, beta_plus, jw, h=h,
                                                element=T, n_arc=self.n_arc, q=self.q, el=el)
        weak = [T for T, b in self.bases.items() if b.margin <= 1e-14]
        if weak:
            worst = min(self.bases[T].margin for T in weak)
            warnings.warn(f"{len(weak)} interface elements with J-Gram margin <= 1e-14 "
                          f"(smallest {worst:.3e})", UnisolvenceWarning)

    # -- element-level access ----------------------------------------------

    def beta(self, side):
        return self.beta_plus if side > 0 else self.beta_minus

    def coef(self, T, side):
        b = self.bases.get(int(T))
        if b is None:
            return self.ref[self.mesh.orient[T]].coef
        return b.coef(side)

    def element_side(self, T):
        return int(self.classes.elem_side[T])

    def evaluate(self, T, pts, side=None, order=2):
        """Shape-function derivatives ``(npts, ncomp, nloc)`` of element ``T``
        using the ``side`` piece (default: element side, or per-point side)."""
        pts = np.atleast_2d(np.asarray(pts, float))
        loc = (pts - self.mesh.barycenters[T]) / self.mesh.h
        M = monomial_derivatives(loc, self.mesh.h, self.p, order)
        if int(T) not in self.bases:
            return M @ self.coef(T, 1)
        if side is None:
            side = node_sides(self.levelset, pts, self.mesh.h)
        side = np.broadcast_to(np.asarray(side), (len(pts),))
        b = self.bases[int(T)]
        return np.where((side > 0)[:, None, None], M @ b.coef_plus, M @ b.coef_minus)

    def regions(self, T):
        """Curved subregions ``(plus, minus)`` of interface element ``T``."""
        b = self.bases[int(T)]
        if b.regions is None:
            topo = self.classes.topo[int(T)]
            b.regions = split_subdomains(self.levelset, self.mesh.element_vertices(T), topo, self.q)
        return b.regions

    def region_rule(self, T, side, degree=None):
        plus, minus = self.regions(T)
        return curved_region_rule(plus if side > 0 else minus, self.vol_degree if degree is None else degree)

    def interface_arc(self, T):
        """Arc of the interface inside element ``T`` (entry to exit)."""
        self.regions(T)
        return self.classes.topo[int(T)].arc

    def margins(self):
        return {T: b.margin for T, b in self.bases.items()}

    def dump(self, path):
        """Per-element diagnostics: node sides, lambda used, J-Gram margin."""
        with open(path, "w") as fh:
            for T in sorted(self.bases):
                b = self.bases[T]
                s = "".join("+" if x > 0 else "-" for x in b.sides)
                fh.write(f"{T} {s} lam={b.lam:g} margin={b.margin:.6e}\n")

    def element_values(self, T, pts, U, side=None, order=2):
        """Derivative components ``(npts, ncomp)`` of the global function ``U``."""
        D = self.evaluate(T, pts, side, order)
        return D @ U[self.dofs.elem_dofs[T]]


def interpolate(exact, space):
    """Nodal interpolant: value at each node from the side containing it.

    ``exact(pts, side)`` returns the values of the ``side`` branch.
    """
    nodes = space.dofs.nodes
    sides = node_sides(space.levelset, nodes, space.mesh.h)
    U = np.empty(len(nodes))
    for s in (1, -1):
        m = sides == s
        if m.any():
            U[m] = exact(nodes[m], s)
    return U
