import numpy as np
import pytest
import scipy.sparse as sps
import sympy as sp

from ife_c0ip.assembly import (
    PenaltyParams,
    assemble_edge_consistency,
    assemble_penalties,
    assemble_rhs,
    assemble_system,
    assemble_volume,
    export_coo,
    mesh_norm,
)
from ife_c0ip.geometry import circle_levelset, line_levelset
from ife_c0ip.ife_space import IfeSpace, interpolate
from ife_c0ip.mesh import Mesh
from ife_c0ip.problems import CASES, ManufacturedSolution, Scenario, X, Y, make_scenario
from ife_c0ip.solver import is_spd, solve_spd

FAR = line_levelset(1.0, 0.0, 5.0)  # no interface inside the domain
R0 = np.pi / 6.28


def _space(case, N, p, **kw):
    sc = make_scenario(case, **kw)
    return sc, IfeSpace(Mesh(N), sc.levelset, p, sc.beta_minus, sc.beta_plus)


def _p2_hessians(verts):
    """Hessians of the P2 Lagrange basis from barycentric formulas (sympy)."""
    (x0, y0), (x1, y1), (x2, y2) = [[sp.nsimplify(c) for c in v] for v in verts]
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    l1 = ((X - x0) * (y2 - y0) - (x2 - x0) * (Y - y0)) / det
    l2 = ((x1 - x0) * (Y - y0) - (X - x0) * (y1 - y0)) / det
    lam = [1 - l1 - l2, l1, l2]
    funcs = [lam[i] * (2 * lam[i] - 1) for i in range(3)]
    funcs += [4 * lam[j] * lam[(j + 1) % 3] for j in range(3)]
    H = []
    for f in funcs:
        H.append([float(sp.diff(f, X, 2)), float(sp.diff(f, X, Y)), float(sp.diff(f, Y, 2))])
    return np.array(H), abs(float(det)) / 2


def test_volume_matches_symbolic_oracle():
    sp_ = IfeSpace(Mesh(2), FAR, 2, 1.0, 1.0)
    K = assemble_volume(sp_).toarray()
    ref = np.zeros_like(K)
    for T in range(sp_.mesh.n_elements):
        H, area = _p2_hessians(sp_.mesh.element_vertices(T))
        loc = area * (np.outer(H[:, 0], H[:, 0]) + 2 * np.outer(H[:, 1], H[:, 1]) + np.outer(H[:, 2], H[:, 2]))
        d = sp_.dofs.elem_dofs[T]
        ref[np.ix_(d, d)] += loc
    assert np.max(np.abs(K - ref)) <= 1e-12 * np.max(np.abs(ref))


@pytest.mark.parametrize("p", [2, 3])
def test_affine_functions_in_volume_kernel(p):
    sp_ = IfeSpace(Mesh(8), circle_levelset(0.5), p, 2.0, 2.0)
    K = assemble_volume(sp_)
    v = interpolate(lambda P, s: 0.3 + 2 * P[:, 0] - P[:, 1], sp_)
    assert np.max(np.abs(K @ v)) <= 1e-11 * abs(K).max()


@pytest.mark.parametrize("p", [2, 3])
def test_smooth_function_has_no_jump_energy(p):
    sp_ = IfeSpace(Mesh(8), circle_levelset(0.5), p, 2.0, 2.0)
    v = interpolate(lambda P, s: P[:, 0] ** 2 - P[:, 0] * P[:, 1] + P[:, 1] ** p, sp_)
    Kv = assemble_volume(sp_)
    Kp = assemble_penalties(sp_)
    Kc = assemble_edge_consistency(sp_)
    ev = v @ Kv @ v
    assert abs(v @ Kp @ v) <= 1e-10 * ev
    assert abs(v @ Kc @ v) <= 1e-10 * ev
    rng = np.random.default_rng(0)
    r = rng.normal(size=len(v))
    assert r @ Kp @ r > 0


@pytest.mark.parametrize("case", CASES)
@pytest.mark.parametrize("p", [2, 3])
def test_symmetric_and_spd(case, p):
    N = 20 if case == "flower" else 10
    sc, sp_ = _space(case, N, p)
    S = assemble_system(sp_, sc)
    K = S.K
    assert abs(K - K.T).max() <= 1e-10 * abs(K).max()
    Kr, _ = S.reduced()
    assert is_spd(Kr)


@pytest.mark.parametrize("case", ["line", "parabola", "circle"])
@pytest.mark.parametrize("p", [2, 3])
def test_spd_with_degree_scaled_penalties(case, p):
    sc, sp_ = _space(case, 20, p)
    s = 10.0 * p * p
    Kr, _ = assemble_system(sp_, sc, PenaltyParams(sigma_u=s, sigma_n=s)).reduced()
    assert is_spd(Kr)


@pytest.mark.slow
@pytest.mark.parametrize("N", [40, 80])
@pytest.mark.parametrize("p", [2, 3])
def test_spd_on_finer_meshes(N, p):
    for case in ("line", "parabola", "circle"):
        sc, sp_ = _space(case, N, p)
        assert is_spd(assemble_system(sp_, sc).reduced()[0])


def test_edge_order_permutation_is_bit_identical():
    sc, sp_ = _space("circle", 10, 2)
    a = assemble_system(sp_, sc).K.tocsr()
    perm = np.random.default_rng(4).permutation(sp_.mesh.n_edges)
    b = assemble_system(sp_, sc, order=perm).K.tocsr()
    a.sort_indices()
    b.sort_indices()
    assert np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)
    assert np.array_equal(a.data, b.data)


def _patch(ls, w, p, bm, bp, N=10):
    ex = ManufacturedSolution(w, bm, bp)
    sc = Scenario("patch", ls, bm, bp, ex)
    sp_ = IfeSpace(Mesh(N), ls, p, bm, bp)
    S = assemble_system(sp_, sc)
    K, F = S.reduced()
    U = S.expand(solve_spd(K, F))
    return np.max(np.abs(U - interpolate(ex.value, sp_)))


@pytest.mark.parametrize("p", [2, 3])
def test_patch_test_equal_beta(p):
    w = 1 + X - 2 * Y + X * Y ** (p - 1) + X ** p
    assert _patch(circle_levelset(R0), w, p, 1.0, 1.0) <= 1e-8


@pytest.mark.parametrize("ls,w", [
    (line_levelset(1.0, 0.0, 0.33), (X - 0.33) ** 2),
    (line_levelset(2.0, 1.0, 0.3), (2 * X + Y - 0.3) ** 2),
])
def test_patch_test_across_straight_interface(ls, w):
    # u = w / beta on each side satisfies all four jump conditions and is piecewise P2
    assert _patch(ls, w, 2, 1.0, 100.0) <= 1e-8


def test_zero_data_gives_zero_load():
    sc = Scenario("zero", circle_levelset(R0), 1.0, 10.0, None, source_value=0.0)
    sp_ = IfeSpace(Mesh(10), sc.levelset, 2, 1.0, 10.0)
    S = assemble_system(sp_, sc)
    assert not np.any(S.F) and not np.any(S.values)


def test_unit_load_matches_basis_integrals():
    # P2: vertex functions integrate to 0, edge-midpoint functions to |T|/3
    sc = Scenario("one", FAR, 1.0, 1.0, None, source_value=1.0)
    m = Mesh(4)
    sp_ = IfeSpace(m, FAR, 2, 1.0, 1.0)
    F = assemble_rhs(sp_, sc)
    count = np.bincount(sp_.dofs.elem_dofs[:, 3:].ravel(), minlength=sp_.dofs.n_dofs)
    area = 2.0 / m.N ** 2
    assert np.allclose(F, count * area / 3, atol=1e-15)


def test_load_on_interface_elements_sums_to_area():
    sc = Scenario("one", circle_levelset(R0), 1.0, 10.0, None, source_value=1.0)
    sp_ = IfeSpace(Mesh(10), sc.levelset, 3, 1.0, 10.0)
    F = assemble_rhs(sp_, sc)
    # partition of unity: the loads add up to the domain area
    assert abs(F.sum() - 4.0) < 1e-12


def test_line_dirichlet_data_nonzero_on_vertical_sides():
    sc, sp_ = _space("line", 10, 2)
    S = assemble_system(sp_, sc)
    x = sp_.dofs.nodes[S.fixed, 0]
    for xv in (-1.0, 1.0):
        assert np.max(np.abs(S.values[np.isclose(x, xv)])) > 1e-3


def test_mesh_norm_stable_across_moving_line():
    vals = []
    for c in np.linspace(0.71, 0.79, 9):
        sc = make_scenario("moving-line", c=float(c))
        sp_ = IfeSpace(Mesh(20), sc.levelset, 2, sc.beta_minus, sc.beta_plus)
        S = assemble_system(sp_, sc)
        K, F = S.reduced()
        vals.append(mesh_norm(S, S.expand(solve_spd(K, F))))
    vals = np.array(vals)
    assert np.all(np.isfinite(vals))
    assert np.all(np.abs(vals / vals.mean() - 1) <= 0.2)


def test_export_coo_round_trip(tmp_path):
    sc, sp_ = _space("circle", 4, 2)
    K = assemble_system(sp_, sc).K
    export_coo(K, tmp_path / "K.txt")
    r, c, v = np.loadtxt(tmp_path / "K.txt", unpack=True)
    back = sps.coo_matrix((v, (r.astype(int), c.astype(int))), shape=K.shape)
    assert abs(back - K).max() == 0
