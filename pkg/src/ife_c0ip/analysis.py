"""Error norms, grid norms for reference-solution studies, convergence orders."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .quadrature import gauss_triangle, map_triangles


def _element_errors(diff):
    """Squared L2, H1-semi, H2-semi densities from component differences."""
    e0 = diff[..., 0] ** 2
    e1 = diff[..., 1] ** 2 + diff[..., 2] ** 2
    e2 = diff[..., 3] ** 2 + 2 * diff[..., 4] ** 2 + diff[..., 5] ** 2
    return e0, e1, e2


def error_norms(U, space, exact, degree=None):
    """``(||u_h - u||_0, |u_h - u|_1, |u_h - u|_2)`` with broken integrals.

    ``exact.components(pts, side)`` returns value, gradient and Hessian.
    Interface elements are integrated over their curved pieces with the
    matching polynomial piece of ``u_h``.
    """
    mesh, dofs = space.mesh, space.dofs
    d = 2 * space.p + 6 if degree is None else degree
    rule = gauss_triangle(d)
    tot = np.zeros(3)
    side = space.classes.elem_side
    for o in (0, 1):
        els = np.flatnonzero((mesh.orient == o) & (side != 0))
        if len(els) == 0:
            continue
        pts, w = map_triangles(rule, mesh.vertices[mesh.triangles[els]])
        Dref = _ref_eval(space, o, rule)
        uh = np.einsum("qcl,el->eqc", Dref, U[dofs.elem_dofs[els]])
        for s in (1, -1):
            m = side[els] == s
            if not m.any():
                continue
            ex = space_exact(exact, pts[m], s)
            for k, e in enumerate(_element_errors(uh[m] - ex)):
                tot[k] += np.sum(w[m] * e)
    for T in space.bases:
        for s in (1, -1):
            pts, w = space.region_rule(T, s, d)
            uh = space.evaluate(T, pts, side=s, order=2)[:, :6, :] @ U[dofs.elem_dofs[T]]
            ex = space_exact(exact, pts, s)
            for k, e in enumerate(_element_errors(uh - ex)):
                tot[k] += np.sum(w * e)
    return tuple(np.sqrt(tot))


def space_exact(exact, pts, side):
    return exact.components(pts, side)


def _ref_eval(space, orient, rule):
    """Basis derivatives at reference-rule points of a given orientation class
    (identical for every element of that class)."""
    mesh = space.mesh
    pts, _ = map_triangles(rule, mesh.vertices[mesh.triangles[[orient]]])
    return space.ref[orient].evaluate(pts[0], order=2)[:, :6, :]


def grid_values(U, space):
    """Values of ``u_h`` on the ``(N+1)^2`` vertex grid, shape ``(N+1, N+1)``
    indexed ``[j, i]`` (rows are y)."""
    p, N = space.p, space.mesh.N
    M = p * N + 1
    return np.asarray(U).reshape(M, M)[::p, ::p]


def restrict_grid(G, factor):
    """Sample a fine vertex grid at every ``factor``-th node."""
    return G[::factor, ::factor]


def discrete_norms(uh, uref, h):
    """Grid norms ``h * ||uh - uref||_l2`` and the same for second-order
    finite-difference gradients (one-sided second order at the boundary).

    ``uh`` and ``uref`` are vertex-grid arrays of the same shape.
    """
    uh = np.asarray(uh, float)
    uref = np.asarray(uref, float)
    if uh.shape != uref.shape:
        raise ValueError("grids are not nested or have different sizes")
    e = uh - uref
    e0 = h * np.sqrt(np.sum(e ** 2))
    gy, gx = np.gradient(e, h, edge_order=2)
    e1 = h * np.sqrt(np.sum(gx ** 2 + gy ** 2))
    return e0, e1


def nested_reference(uref_grid, N_ref, N):
    if N_ref % N:
        raise ValueError(f"N={N} does not divide N_ref={N_ref}")
    return restrict_grid(uref_grid, N_ref // N)


def convergence_orders(errors, hs):
    """``log(e_{k-1}/e_k) / log(h_{k-1}/h_k)`` for consecutive levels."""
    e = np.asarray(errors, float)
    h = np.asarray(hs, float)
    if len(e) < 2 or len(e) != len(h):
        raise ValueError("need at least two levels")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


@dataclass
class ErrorReport:
    """Errors per refinement level; ``names`` label the error columns."""

    Ns: list = field(default_factory=list)
    hs: list = field(default_factory=list)
    errors: list = field(default_factory=list)  # one tuple per level
    names: tuple = ("e0", "e1", "e2")
    title: str = ""

    def add(self, N, h, errs):
        self.Ns.append(int(N))
        self.hs.append(float(h))
        self.errors.append(tuple(float(x) for x in errs))

    def orders(self):
        E = np.array(self.errors)
        if len(E) < 2:
            return np.full((len(E), E.shape[1] if E.ndim == 2 else 0), np.nan)
        out = np.full(E.shape, np.nan)
        for k in range(E.shape[1]):
            out[1:, k] = convergence_orders(E[:, k], self.hs)
        return out

    def final_orders(self):
        return self.orders()[-1]

    def to_csv(self):
        cols = ["N", "h"]
        for k, n in enumerate(self.names):
            cols += [n, f"order{k}"]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        O = self.orders()
        for r, (N, h, errs) in enumerate(zip(self.Ns, self.hs, self.errors)):
            vals = [str(N), f"{h:.8e}"]
            for k, e in enumerate(errs):
                vals += [f"{e:.8e}", "" if np.isnan(O[r, k]) else f"{O[r, k]:.6e}"]
            buf.write(",".join(vals) + "\n")
        return buf.getvalue()

    def to_markdown(self, labels=None):
        labels = labels or self.names
        head = "| N | " + " | ".join(f"{l} | order" for l in labels) + " |"
        sep = "|---|" + "---|---|" * len(labels)
        lines = ([f"**{self.title}**", ""] if self.title else []) + [head, sep]
        O = self.orders()
        for r, (N, errs) in enumerate(zip(self.Ns, self.errors)):
            cells = []
            for k, e in enumerate(errs):
                cells += [f"{e:.4e}", "" if np.isnan(O[r, k]) else f"{O[r, k]:.2f}"]
            lines.append(f"| {N} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
