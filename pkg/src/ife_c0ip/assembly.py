"""Immersed C0 interior-penalty system.

The bilinear form is split into four matrix groups:

``vol``   broken Hessian energy ``sum_T sum_s beta^s (H u, H v)_{T^s}``
``cons``  edge consistency and symmetry terms ``-{beta u_nn}[v_n] - {beta v_nn}[u_n]``
``pen``   all interior penalties (edges, sub-edges and interface arcs)
``bnd``   boundary-edge terms for the normal-derivative data

Dirichlet data are imposed strongly at boundary nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .lagrange import DXX, DXY, DYY, d_n, d_nn, hessian_inner, monomial_derivatives
from .quadrature import arc_rule, gauss_segment, gauss_triangle, map_triangles

TINY_EDGE = 1e-14
SIGMA_DEFAULT = 10.0
_CHUNK = 20000


@dataclass
class PenaltyParams:
    """Penalty scalars and quadrature orders (``None`` picks the default)."""

    sigma_u: float | None = None
    sigma_F: float = 1.0
    sigma_n: float | None = None
    vol_degree: int | None = None
    rhs_degree: int | None = None
    edge_points: int | None = None
    arc_points: int | None = None

    def resolved(self, p):
        return PenaltyParams(
            SIGMA_DEFAULT if self.sigma_u is None else float(self.sigma_u),
            float(self.sigma_F),
            SIGMA_DEFAULT if self.sigma_n is None else float(self.sigma_n),
            2 * p if self.vol_degree is None else self.vol_degree,
            2 * p + 2 if self.rhs_degree is None else self.rhs_degree,
            p + 3 if self.edge_points is None else self.edge_points,
            p + 3 if self.arc_points is None else self.arc_points,
        )


@dataclass
class SparseSystem:
    """Assembled system before and after Dirichlet elimination."""

    K: sps.csr_matrix
    F: np.ndarray
    groups: dict
    fixed: np.ndarray
    values: np.ndarray
    free: np.ndarray = field(default=None)

    def reduced(self):
        """``(K_ff, F_f - K_fc g)``."""
        free = self.free
        Kc = self.K[free][:, self.fixed]
        return self.K[free][:, free].tocsr(), self.F[free] - Kc @ self.values

    def expand(self, u_free):
        u = np.empty(self.K.shape[0])
        u[self.free] = u_free
        u[self.fixed] = self.values
        return u


# ---------------------------------------------------------------------------
# evaluation helpers


def _eval_pieces(space, T, s, pts):
    """Derivatives (order <= 2) of the ``s`` pieces of elements ``T`` at
    ``pts`` of shape (n, nq, 2) -> (n, nq, 6, nloc)."""
    mesh = space.mesh
    loc = (pts - mesh.barycenters[T][:, None, :]) / mesh.h
    M = monomial_derivatives(loc, mesh.h, space.p, 2)
    C = np.stack([space.coef(t, si) for t, si in zip(T, s)])
    return np.einsum("nqcm,nml->nqcl", M, C)


@dataclass
class Segments:
    """Batch of straight edge pieces with their term weights."""

    edge: np.ndarray
    T1: np.ndarray
    s1: np.ndarray
    T2: np.ndarray  # -1 on the boundary
    s2: np.ndarray
    a: np.ndarray
    b: np.ndarray
    pen_u: np.ndarray
    pen_F: np.ndarray
    pen_n: np.ndarray

    def __len__(self):
        return len(self.edge)

    @staticmethod
    def concat(parts):
        parts = [p for p in parts if p is not None and len(p)]
        if not parts:
            z = np.zeros(0, int)
            return Segments(z, z, z, z, z, np.zeros((0, 2)), np.zeros((0, 2)),
                            np.zeros(0), np.zeros(0), np.zeros(0))
        return Segments(*[np.concatenate([getattr(p, f) for p in parts])
                          for f in Segments.__dataclass_fields__])


def segment_matrices(space, seg, npts):
    """Local matrices on a batch of segments.

    Returns ``(dofs (n, 2L), K_cons (n, 2L, 2L), K_pen (n, 2L, 2L))`` where the
    local numbering is ``T1`` dofs followed by ``T2`` dofs (zero block on the
    boundary).
    """
    mesh = space.mesh
    L = space.dofs.nloc
    n = len(seg)
    rule = gauss_segment(npts)
    pts = seg.a[:, None, :] + rule.points[None, :, None] * (seg.b - seg.a)[:, None, :]
    w = np.linalg.norm(seg.b - seg.a, axis=1)[:, None] * rule.weights[None, :]
    nrm = mesh.edge_normal[seg.edge][:, None, :]
    bnd = seg.T2 < 0
    T2 = np.where(bnd, seg.T1, seg.T2)
    D1 = _eval_pieces(space, seg.T1, seg.s1, pts)
    D2 = _eval_pieces(space, T2, np.where(bnd, seg.s1, seg.s2), pts)
    D2[bnd] = 0.0
    b1 = np.where(seg.s1 > 0, space.beta_plus, space.beta_minus)
    b2 = np.where(seg.s2 > 0, space.beta_plus, space.beta_minus)
    half = np.where(bnd, 1.0, 0.5)
    v = np.concatenate([D1[:, :, 0, :], -D2[:, :, 0, :]], axis=-1)
    jn = np.concatenate([d_n(D1, nrm), -d_n(D2, nrm)], axis=-1)
    jnn = np.concatenate([d_nn(D1, nrm), -d_nn(D2, nrm)], axis=-1)
    avg = np.concatenate([(half * b1)[:, None, None] * d_nn(D1, nrm),
                          (half * b2)[:, None, None] * d_nn(D2, nrm)], axis=-1)
    X = np.einsum("nq,nqi,nqj->nij", w, jn, avg)
    Kc = -(X + X.transpose(0, 2, 1))
    Kp = (seg.pen_u[:, None, None] * np.einsum("nq,nqi,nqj->nij", w, jn, jn)
          + seg.pen_F[:, None, None] * np.einsum("nq,nqi,nqj->nij", w, jnn, jnn)
          + seg.pen_n[:, None, None] * np.einsum("nq,nqi,nqj->nij", w, v, v))
    dofs = np.concatenate([space.dofs.elem_dofs[seg.T1], space.dofs.elem_dofs[T2]], axis=1)
    return dofs, Kc, Kp


# ---------------------------------------------------------------------------
# segment construction


def _piece_side(space, T, e):
    """Side whose polynomial piece of element ``T`` lives on uncut edge ``e``."""
    s = space.classes.elem_side[T]
    if s != 0:
        return int(s)
    es = space.classes.edge_side[e]
    return int(es) if es != 0 else -1


def build_segments(space, params):
    """Split all edges into (sub-)segments with their penalty weights.

    Returns ``(bulk, general, boundary)``: ``bulk`` is a mask of interior edges
    whose neighbours are uncut elements on one common side (their matrices
    are translates of one reference block), ``general`` and ``boundary`` are
    :class:`Segments` batches.
    """
    mesh, cl = space.mesh, space.classes
    pr = params
    h = mesh.h
    E = mesh.edge_elems
    interior = ~mesh.boundary_edge
    side = cl.elem_side
    bulk = (interior & ~cl.edge_near_interface & ~cl.edge_cut
            & (side[E[:, 0]] == side[np.maximum(E[:, 1], 0)]))
    gen, bnd = [], []
    bavg = 0.5 * (space.beta_plus + space.beta_minus)
    for e in np.flatnonzero(~bulk):
        T1, T2 = int(E[e, 0]), int(E[e, 1])
        le = mesh.edge_length[e]
        A, B = mesh.vertices[mesh.edges[e]]
        out = bnd if T2 < 0 else gen
        if cl.edge_cut[e]:
            for pa, pb, s in cl.edge_parts[e]:
                ls = float(np.linalg.norm(pb - pa))
                bs = space.beta(s)
                pu = pr.sigma_u * bs / ls if ls >= TINY_EDGE * h else 0.0
                if T2 < 0:
                    out.append((e, T1, s, -1, s, pa, pb, pu, 0.0, 0.0))
                else:
                    out.append((e, T1, s, T2, s, pa, pb, pu, pr.sigma_F * ls * bs,
                                pr.sigma_n * bavg / le ** 3))
        else:
            s1 = _piece_side(space, T1, e)
            if T2 < 0:
                out.append((e, T1, s1, -1, s1, A, B, pr.sigma_u * space.beta(s1) / le, 0.0, 0.0))
                continue
            s2 = _piece_side(space, T2, e)
            be = 0.5 * (space.beta(s1) + space.beta(s2))
            pF = pr.sigma_F * le * be if cl.edge_near_interface[e] else 0.0
            out.append((e, T1, s1, T2, s2, A, B, pr.sigma_u * be / le, pF, 0.0))
    return bulk, _pack(gen), _pack(bnd)


def _pack(rows):
    if not rows:
        return Segments.concat([])
    cols = list(zip(*rows))
    ints = [np.array(c, int) for c in cols[:5]]
    pts = [np.array(c, float).reshape(-1, 2) for c in cols[5:7]]
    wts = [np.array(c, float) for c in cols[7:]]
    return Segments(*ints, *pts, *wts)


# ---------------------------------------------------------------------------
# ordered sparse merge


def _merge(n, blocks):
    """Sum ``(dofs, K)`` blocks (already in canonical order) into CSR."""
    out = sps.csr_matrix((n, n))
    for dofs, K in blocks:
        for i0 in range(0, len(dofs), _CHUNK):
            d = dofs[i0:i0 + _CHUNK]
            k = K[i0:i0 + _CHUNK]
            r = np.repeat(d, d.shape[1], axis=1).ravel()
            c = np.tile(d, (1, d.shape[1])).ravel()
            out = out + sps.coo_matrix((k.ravel(), (r, c)), shape=(n, n)).tocsr()
    return out


class _EdgeStore:
    """Local matrices keyed by edge id; merged in increasing edge id so the
    result does not depend on processing order."""

    def __init__(self, n_edges):
        self.cls = np.full(n_edges, -1)
        self.scale = np.zeros(n_edges)
        self.ref = []
        self.gen = {}

    def merge(self, space, ref_dofs_fn):
        n = space.dofs.n_dofs
        items = []
        ne = len(self.cls)
        for i0 in range(0, ne, _CHUNK):
            ids = np.arange(i0, min(ne, i0 + _CHUNK))
            m = self.cls[ids] >= 0
            blk_d, blk_k = [], []
            if m.any():
                e = ids[m]
                blk_d.append(ref_dofs_fn(e))
                R = np.stack(self.ref)
                blk_k.append(self.scale[e][:, None, None] * R[self.cls[e]])
            gids = [int(g) for g in ids[~m] if int(g) in self.gen]
            for g in gids:
                for d, k in self.gen[g]:
                    blk_d.append(d[None])
                    blk_k.append(k[None])
            if blk_d:
                items.append(_concat_blocks(blk_d, blk_k))
        return _merge(n, items)


def _concat_blocks(ds, ks):
    w = max(d.shape[1] for d in ds)
    D = np.concatenate([_pad(d, w) for d in ds])
    K = np.concatenate([_padk(k, w) for k in ks])
    return D, K


def _pad(d, w):
    if d.shape[1] == w:
        return d
    return np.concatenate([d, np.repeat(d[:, :1], w - d.shape[1], axis=1)], axis=1)


def _padk(k, w):
    if k.shape[1] == w:
        return k
    out = np.zeros((len(k), w, w))
    out[:, : k.shape[1], : k.shape[1]] = k
    return out


# ---------------------------------------------------------------------------
# volume and interface-arc terms


def _volume_ref(space, degree):
    rule = gauss_triangle(degree)
    out = []
    for o in (0, 1):
        pts, w = map_triangles(rule, space.mesh.vertices[space.mesh.triangles[[o]]])
        D = space.ref[o].evaluate(pts[0], 2)
        out.append(np.einsum("q,qi,qj->ij", w[0], D[:, DXX, :], D[:, DXX, :])
                   + 2 * np.einsum("q,qi,qj->ij", w[0], D[:, DXY, :], D[:, DXY, :])
                   + np.einsum("q,qi,qj->ij", w[0], D[:, DYY, :], D[:, DYY, :]))
    return out


def assemble_volume(space, params=None, order=None):
    """Broken Hessian energy matrix ``A_h``."""
    pr = (params or PenaltyParams()).resolved(space.p)
    mesh = space.mesh
    ref = _volume_ref(space, pr.vol_degree)
    nt = mesh.n_elements
    side = space.classes.elem_side
    els = np.arange(nt) if order is None else np.asarray(order)
    local = {}
    for T in els:
        T = int(T)
        if T in space.bases:
            K = 0.0
            for s in (1, -1):
                pts, w = space.region_rule(T, s, pr.vol_degree)
                D = space.evaluate(T, pts, side=s, order=2)
                K = K + space.beta(s) * np.einsum("q,qi,qj->ij", w, D[:, DXX], D[:, DXX]) \
                    + space.beta(s) * 2 * np.einsum("q,qi,qj->ij", w, D[:, DXY], D[:, DXY]) \
                    + space.beta(s) * np.einsum("q,qi,qj->ij", w, D[:, DYY], D[:, DYY])
            local[T] = K
    beta = np.where(side > 0, space.beta_plus, space.beta_minus)
    blocks = []
    for i0 in range(0, nt, _CHUNK):
        ids = np.arange(i0, min(nt, i0 + _CHUNK))
        R = np.stack(ref)[mesh.orient[ids]] * beta[ids][:, None, None]
        for j, T in enumerate(ids):
            if int(T) in local:
                R[j] = local[int(T)]
        blocks.append((space.dofs.elem_dofs[ids], R))
    return _merge(space.dofs.n_dofs, blocks)


def _arc_terms(space, pr):
    """Interface-arc penalties of every interface element (in element order)."""
    hT = space.mesh.hT
    bavg = 0.5 * (space.beta_plus + space.beta_minus)
    out = []
    for T in sorted(space.bases):
        arc = space.interface_arc(T)
        pts, w = arc_rule(arc, pr.arc_points)
        nrm = space.levelset.normal(pts)
        Dp = space.evaluate(T, pts, side=1, order=1)
        Dm = space.evaluate(T, pts, side=-1, order=1)
        jv = Dp[:, 0, :] - Dm[:, 0, :]
        jn = d_n(Dp, nrm) - d_n(Dm, nrm)
        K = (pr.sigma_u * bavg / hT * np.einsum("q,qi,qj->ij", w, jn, jn)
             + pr.sigma_n * bavg / hT ** 3 * np.einsum("q,qi,qj->ij", w, jv, jv))
        out.append((space.dofs.elem_dofs[T][None], K[None]))
    return out


# ---------------------------------------------------------------------------
# edges


def _edge_key(mesh, e):
    T1 = mesh.edge_elems[e, 0]
    j = np.argmax(mesh.elem_edges[T1] == e[:, None], axis=1)
    return mesh.orient[T1] * 3 + j


def assemble_edges(space, params=None, order=None):
    """Interior edge matrices ``(K_cons, K_pen_edges)`` and the boundary
    matrix plus the segment batches used (for the right-hand side)."""
    pr = (params or PenaltyParams()).resolved(space.p)
    mesh = space.mesh
    bulk, gen, bseg = build_segments(space, pr)
    npts = pr.edge_points
    ne = mesh.n_edges
    cons, pen = _EdgeStore(ne), _EdgeStore(ne)

    # reference blocks for translation classes of bulk edges
    key = np.full(ne, -1)
    be = np.flatnonzero(bulk)
    key[be] = _edge_key(mesh, be)
    side = space.classes.elem_side
    for k in np.unique(key[be]):
        e0 = int(be[np.argmax(key[be] == k)])
        T1, T2 = mesh.edge_elems[e0]
        A, B = mesh.vertices[mesh.edges[e0]]
        seg = Segments(np.array([e0]), np.array([T1]), np.array([side[T1]]), np.array([T2]),
                       np.array([side[T2]]), A[None], B[None],
                       np.array([pr.sigma_u / mesh.edge_length[e0]]), np.zeros(1), np.zeros(1))
        # unit beta: scale afterwards
        sp_b = _UnitBeta(space)
        _, Kc, Kp = segment_matrices(sp_b, seg, npts)
        cons.ref.append(Kc[0])
        pen.ref.append(Kp[0])
        idx = len(cons.ref) - 1
        sel = be[key[be] == k]
        for st in (cons, pen):
            st.cls[sel] = idx
            st.scale[sel] = np.where(side[mesh.edge_elems[sel, 0]] > 0, space.beta_plus, space.beta_minus)

    if len(gen):
        seq = np.arange(len(gen)) if order is None else _reorder(gen.edge, order)
        sub = Segments(*[getattr(gen, f)[seq] for f in Segments.__dataclass_fields__])
        dofs, Kc, Kp = segment_matrices(space, sub, npts)
        for i, e in enumerate(sub.edge):
            cons.gen.setdefault(int(e), []).append((dofs[i], Kc[i]))
            pen.gen.setdefault(int(e), []).append((dofs[i], Kp[i]))
        for st in (cons, pen):
            for e in st.gen:
                st.gen[e].sort(key=lambda dk: tuple(dk[0]))

    def ref_dofs(e):
        E = mesh.edge_elems[e]
        return np.concatenate([space.dofs.elem_dofs[E[:, 0]], space.dofs.elem_dofs[E[:, 1]]], axis=1)

    Kcons = cons.merge(space, ref_dofs)
    Kpen_e = pen.merge(space, ref_dofs)
    n = space.dofs.n_dofs
    if len(bseg):
        dofs, Kc, Kp = segment_matrices(space, bseg, npts)
        Kb = _merge(n, [(dofs, Kc + Kp)])
    else:
        Kb = sps.csr_matrix((n, n))
    return Kcons, Kpen_e, Kb, bseg


def _reorder(edges, order):
    rank = np.empty(int(max(np.max(order), np.max(edges))) + 1, int)
    rank[np.asarray(order)] = np.arange(len(order))
    return np.argsort(rank[edges], kind="stable")


class _UnitBeta:
    """View of a space with both coefficients set to one."""

    def __init__(self, space):
        self._s = space
        self.beta_plus = self.beta_minus = 1.0

    def __getattr__(self, name):
        return getattr(self._s, name)


def assemble_penalties(space, params=None, order=None):
    """All interior stabilisation terms (edges, sub-edges and interface arcs)."""
    pr = (params or PenaltyParams()).resolved(space.p)
    _, Kpen_e, _, _ = assemble_edges(space, params, order)
    return Kpen_e + _merge(space.dofs.n_dofs, _arc_terms(space, pr))


def assemble_edge_consistency(space, params=None, order=None):
    return assemble_edges(space, params, order)[0]


# ---------------------------------------------------------------------------
# right-hand side and boundary data


def assemble_rhs(space, scenario, params=None, bseg=None):
    """Load vector ``(f, v)`` split over subregions, plus the boundary-data
    terms of the normal-derivative condition."""
    pr = (params or PenaltyParams()).resolved(space.p)
    mesh, dofs = space.mesh, space.dofs
    F = np.zeros(dofs.n_dofs)
    rule = gauss_triangle(pr.rhs_degree)
    side = space.classes.elem_side
    for o in (0, 1):
        els = np.flatnonzero((mesh.orient == o) & (side != 0))
        if not len(els):
            continue
        pts, w = map_triangles(rule, mesh.vertices[mesh.triangles[els]])
        ref_pts, _ = map_triangles(rule, mesh.vertices[mesh.triangles[[o]]])
        B = space.ref[o].evaluate(ref_pts[0], 0)[:, 0, :]
        loc = (w * scenario.source(pts)) @ B
        F += np.bincount(dofs.elem_dofs[els].ravel(), loc.ravel(), minlength=dofs.n_dofs)
    for T in sorted(space.bases):
        for s in (1, -1):
            pts, w = space.region_rule(T, s, pr.rhs_degree)
            B = space.evaluate(T, pts, side=s, order=0)[:, 0, :]
            np.add.at(F, dofs.elem_dofs[T], (w * scenario.source(pts)) @ B)
    if bseg is None:
        bseg = build_segments(space, pr)[2]
    if len(bseg):
        F += boundary_rhs(space, scenario, bseg, pr.edge_points)
    return F


def boundary_rhs(space, scenario, seg, npts):
    """``-int beta v_nn g_N + pen_u int g_N v_n`` on boundary (sub-)edges."""
    mesh = space.mesh
    rule = gauss_segment(npts)
    pts = seg.a[:, None, :] + rule.points[None, :, None] * (seg.b - seg.a)[:, None, :]
    w = np.linalg.norm(seg.b - seg.a, axis=1)[:, None] * rule.weights[None, :]
    nrm = mesh.edge_normal[seg.edge][:, None, :]
    D = _eval_pieces(space, seg.T1, seg.s1, pts)
    F = np.zeros(space.dofs.n_dofs)
    for s in (1, -1):
        m = seg.s1 == s
        if not m.any():
            continue
        g = scenario.neumann(pts[m], np.broadcast_to(nrm[m], pts[m].shape), s)
        beta = space.beta(s)
        loc = (np.einsum("nq,nq,nql->nl", w[m], g, -beta * d_nn(D[m], nrm[m]))
               + seg.pen_u[m][:, None] * np.einsum("nq,nq,nql->nl", w[m], g, d_n(D[m], nrm[m])))
        F += np.bincount(space.dofs.elem_dofs[seg.T1[m]].ravel(), loc.ravel(), minlength=len(F))
    return F


def apply_boundary_conditions(K, F, space, scenario, groups=None):
    """Strong Dirichlet values at boundary nodes (symmetric elimination)."""
    from .ife_space import node_sides

    fixed = np.flatnonzero(space.dofs.boundary)
    free = np.flatnonzero(~space.dofs.boundary)
    nodes = space.dofs.nodes[fixed]
    g = scenario.dirichlet(nodes, node_sides(space.levelset, nodes, space.mesh.h))
    return SparseSystem(K.tocsr(), F, groups or {}, fixed, g, free)


def assemble_system(space, scenario, params=None, order=None):
    """Full system ``a_h(u, v) = L(v)`` with boundary data applied."""
    pr = (params or PenaltyParams()).resolved(space.p)
    Kvol = assemble_volume(space, pr, order=None)
    Kcons, Kpen_e, Kb, bseg = assemble_edges(space, pr, order)
    Karc = _merge(space.dofs.n_dofs, _arc_terms(space, pr))
    Kpen = Kpen_e + Karc
    K = (Kvol + Kcons + Kpen + Kb).tocsr()
    F = assemble_rhs(space, scenario, pr, bseg)
    groups = {"vol": Kvol, "cons": Kcons, "pen": Kpen, "bnd": Kb}
    return apply_boundary_conditions(K, F, space, scenario, groups)


def mesh_norm(system, v):
    """``||v||_h`` from the volume and interior penalty groups."""
    A = system.groups["vol"] + system.groups["pen"]
    return float(np.sqrt(max(v @ (A @ v), 0.0)))


def export_coo(K, path):
    """Write ``row col value`` lines (debug aid)."""
    C = sps.coo_matrix(K)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
