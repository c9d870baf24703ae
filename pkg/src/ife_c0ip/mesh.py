"""Uniform unfitted triangulation of [-1, 1]^2, entity classes and DOF maps."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import (
    AssumptionViolation,
    EDGE_SAMPLES,
    SNAP_FACTOR,
    CutTopology,
    classify_element,
    scan_edge,
)
from .lagrange import n_local, reference_nodes


class Mesh:
    """Structured mesh: ``N x N`` squares split along the negative-slope
    diagonal.

    Element ``2k`` is the lower-left triangle of square ``k`` and ``2k+1``
    the upper-right one; vertices are listed counterclockwise.  For an
    interior edge ``T_e^1`` is the neighbour with the smaller element id and
    the unit normal points from ``T_e^1`` to ``T_e^2`` (outward on the
    boundary).
    """

    def __init__(self, N, lo=-1.0, hi=1.0):
        if N < 2:
            raise ValueError("N must be >= 2")
        self.N = N
        self.lo, self.hi = lo, hi
        self.h = (hi - lo) / N
        i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="xy")
        self.vertex_ij = np.column_stack([i.ravel(), j.ravel()])
        self.vertices = lo + (hi - lo) * self.vertex_ij / N

        vid = lambda a, b: b * (N + 1) + a  # noqa: E731
        si, sj = np.meshgrid(np.arange(N), np.arange(N), indexing="xy")
        si, sj = si.ravel(), sj.ravel()
        lower = np.column_stack([vid(si, sj), vid(si + 1, sj), vid(si, sj + 1)])
        upper = np.column_stack([vid(si + 1, sj), vid(si + 1, sj + 1), vid(si, sj + 1)])
        tri = np.empty((2 * N * N, 3), dtype=int)
        tri[0::2] = lower
        tri[1::2] = upper
        self.triangles = tri
        self.orient = np.tile([0, 1], N * N)
        self._build_edges()

    # -- topology ---------------------------------------------------------

    def _build_edges(self):
        tri = self.triangles
        nt = len(tri)
        loc = np.stack([tri, np.roll(tri, -1, axis=1)], axis=-1)  # (nt, 3, 2)
        keys = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        self.edges = edges
        self.elem_edges = inv.reshape(nt, 3)
        ne = len(edges)
        owner = np.repeat(np.arange(nt), 3)
        order = np.lexsort((owner, inv))
        first = np.full(ne, -1)
        second = np.full(ne, -1)
        counts = np.bincount(inv, minlength=ne)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        first[:] = owner[order][starts]
        two = counts == 2
        second[two] = owner[order][starts[two] + 1]
        self.edge_elems = np.column_stack([first, second])
        self.boundary_edge = ~two

        a = self.vertices[edges[:, 0]]
        b = self.vertices[edges[:, 1]]
        d = b - a
        self.edge_length = np.linalg.norm(d, axis=1)
        n = np.column_stack([d[:, 1], -d[:, 0]]) / self.edge_length[:, None]
        bary1 = self.barycenters[first]
        mid = 0.5 * (a + b)
        flip = np.einsum("ij,ij->i", mid - bary1, n) < 0
        n[flip] *= -1
        self.edge_normal = n
        self.edge_tangent = np.column_stack([-n[:, 1], n[:, 0]])

    @cached_property
    def barycenters(self):
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def hT(self):
        return np.sqrt(2.0) * self.h

    def element_vertices(self, T):
        return self.vertices[self.triangles[T]]

    def edge_geometry(self, e):
        """``(n_e, t_e, |e|)`` for edge ``e``."""
        return self.edge_normal[e], self.edge_tangent[e], float(self.edge_length[e])

    def dump(self, path):
        """Plain-text listing of vertices, elements and edges."""
        with open(path, "w") as fh:
            fh.write(f"# N={self.N} h={self.h!r}\n")
            for k, (x, y) in enumerate(self.vertices):
                fh.write(f"v {k} {x:.17g} {y:.17g}\n")
            for k, t in enumerate(self.triangles):
                fh.write(f"t {k} {t[0]} {t[1]} {t[2]}\n")
            for k, (e, el) in enumerate(zip(self.edges, self.edge_elems)):
                fh.write(f"e {k} {e[0]} {e[1]} {el[0]} {el[1]}\n")


def build_uniform_mesh(N):
    return Mesh(N)


# ---------------------------------------------------------------------------
# entity classification


@dataclass
class EntityClasses:
    """Interface/non-interface split of elements and edges.

    ``elem_side``: +1/-1 for non-interface elements, 0 for interface ones.
    ``edge_side``: side of an uncut edge (0 if it lies on the interface,
    also 0 for cut edges).  Cut edges have ``edge_cross`` set to the crossing
    point and ``edge_parts`` giving ``[(start, end, side), (start, end, side)]``.
    """

    elem_side: np.ndarray
    topo: dict
    edge_side: np.ndarray
    edge_cut: np.ndarray
    edge_cross: dict
    edge_parts: dict
    edge_near_interface: np.ndarray = field(default=None)

    @property
    def interface_elements(self):
        return np.flatnonzero(self.elem_side == 0)

    @property
    def noninterface_elements(self):
        return np.flatnonzero(self.elem_side != 0)

    @property
    def interface_edges(self):
        return np.flatnonzero(self.edge_cut)

    @property
    def noninterface_edges(self):
        return np.flatnonzero(~self.edge_cut)

    @property
    def interface_neighborhood_edges(self):
        return np.flatnonzero(self.edge_near_interface)

    def sub_edge_lengths(self, e):
        return [float(np.linalg.norm(b - a)) for a, b, _ in self.edge_parts[e]]


def classify_entities(mesh, levelset):
    """Tag every element and edge by side; an edge crossed twice is an
    assumption violation reported with a neighbouring element."""
    h = mesh.h
    eps = SNAP_FACTOR * h
    t = np.linspace(0.0, 1.0, EDGE_SAMPLES + 1)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    vals = levelset.evaluate(pts)
    sg = np.where(np.abs(vals) < eps, 0, np.sign(vals)).astype(int)
    has_p = (sg > 0).any(axis=1)
    has_m = (sg < 0).any(axis=1)
    has_z = (sg == 0).any(axis=1)
    active = (has_p & has_m) | has_z

    ne = mesh.n_edges
    edge_side = np.where(has_p & ~active, 1, np.where(has_m & ~active, -1, 0))
    edge_cut = np.zeros(ne, dtype=bool)
    edge_cross, edge_parts = {}, {}
    for e in np.flatnonzero(active):
        ea, eb = mesh.vertices[mesh.edges[e]]
        try:
            sc = scan_edge(levelset, ea, eb, h)
        except AssumptionViolation as exc:
            raise AssumptionViolation(str(exc), int(mesh.edge_elems[e, 0])) from None
        nz = sc.signs[sc.signs != 0]
        if len(sc.crossings) == 0:
            edge_side[e] = nz[0] if len(nz) else 0
        elif len(sc.crossings) == 1:
            P = sc.crossings[0][1]
            edge_cut[e] = True
            edge_cross[e] = P
            edge_side[e] = 0
            edge_parts[e] = [(sc.a, P, int(nz[0])), (P, sc.b, int(nz[-1]))]
        else:
            raise AssumptionViolation(f"edge {e} cut {len(sc.crossings)} times",
                                      int(mesh.edge_elems[e, 0]))

    nt = mesh.n_elements
    cand = active[mesh.elem_edges].any(axis=1)
    elem_side = np.zeros(nt, dtype=int)
    quiet = ~cand
    es = edge_side[mesh.elem_edges[quiet, 0]]
    elem_side[quiet] = es
    topo = {}
    for T in np.flatnonzero(cand):
        tp = classify_element(levelset, mesh.element_vertices(T), h=h, element=int(T))
        if tp.is_interface:
            topo[int(T)] = tp
        elem_side[T] = tp.side

    near = np.zeros(ne, dtype=bool)
    near[mesh.elem_edges[elem_side == 0].ravel()] = True
    return EntityClasses(elem_side, topo, edge_side, edge_cut, edge_cross, edge_parts, near)



# ---------------------------------------------------------------------------
# degrees of freedom


class DofMap:
    """Global numbering of Lagrange nodes on the structured lattice of step
    ``h/p``; the global index of lattice point ``(i, j)`` is
    ``j * (pN+1) + i``."""

    def __init__(self, mesh, p):
        if p not in (2, 3):
            raise ValueError(f"unsupported degree {p}")
        self.p = p
        self.mesh = mesh
        M = p * mesh.N + 1
        self.M = M
        lat = p * mesh.vertex_ij[mesh.triangles]  # (nt, 3, 2) integer lattice
        nodes = np.stack([reference_nodes(v, p) for v in (lat[0], lat[1])])
        # all lower (resp. upper) triangles are translates of element 0 (resp. 1)
        offsets = lat[:, 0, :]
        ref = nodes - lat[:2, 0, None, :]
        node_lat = np.rint(offsets[:, None, :] + ref[mesh.orient]).astype(int)
        self.elem_dofs = node_lat[..., 1] * M + node_lat[..., 0]
        ii, jj = np.meshgrid(np.arange(M), np.arange(M), indexing="xy")
        self.node_ij = np.column_stack([ii.ravel(), jj.ravel()])
        self.nodes = mesh.lo + (mesh.hi - mesh.lo) * self.node_ij / (M - 1)
        self.boundary = ((self.node_ij == 0) | (self.node_ij == M - 1)).any(axis=1)

    @property
    def n_dofs(self):
        return self.M * self.M

    @property
    def nloc(self):
        return n_local(self.p)


def build_dof_map(mesh, p):
    return DofMap(mesh, p)
