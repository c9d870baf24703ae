import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ife_c0ip.geometry import LevelSet, circle_levelset, line_levelset
from ife_c0ip.ife_space import (
    IfeSpace,
    JWeights,
    UnisolvenceWarning,
    build_ife_basis,
    check_unisolvence,
    interpolate,
    node_sides,
    solve_ife_coefficients,
)
from ife_c0ip.lagrange import LagrangeElement, lagrange_eval, n_local, reference_nodes
from ife_c0ip.mesh import Mesh

R0 = np.pi / 6.28
H = 0.1
TRI = np.array([[0.0, 0.0], [H, 0.0], [0.0, H]])


# ---------------------------------------------------------------------------
# Lagrange basis


@pytest.mark.parametrize("p", [2, 3])
def test_lagrange_kronecker_and_pou(p):
    nodes = reference_nodes(((0, 0), (1, 0), (0, 1)), p)
    V = np.array([[lagrange_eval(p, i, a) for i in range(n_local(p))] for a in nodes])
    assert np.max(np.abs(V - np.eye(n_local(p)))) < 1e-12
    rng = np.random.default_rng(p)
    for x in rng.random((20, 2)) * 0.5:
        assert abs(sum(lagrange_eval(p, i, x) for i in range(n_local(p))) - 1) < 1e-12
        g = sum(lagrange_eval(p, i, x, 1) for i in range(n_local(p)))
        assert np.max(np.abs(g)) < 1e-11


def test_p2_third_derivatives_vanish():
    x = np.array([0.2, 0.3])
    for i in range(6):
        assert np.max(np.abs(lagrange_eval(2, i, x, 3))) < 1e-10


@pytest.mark.parametrize("p", [2, 3])
def test_lagrange_derivatives_match_central_differences(p):
    verts = np.array([[0.3, -0.2], [0.5, 0.1], [0.25, 0.2]])
    x = np.array([0.35, 0.0])
    for i in range(n_local(p)):
        for order in (1, 2, 3):
            d = lagrange_eval(p, i, x, order, verts)
            lo = lambda y: lagrange_eval(p, i, y, order - 1, verts)
            for k, e in enumerate(np.eye(2)):
                errs = []
                for step in (1e-3, 5e-4):
                    fd = (lo(x + step * e) - lo(x - step * e)) / (2 * step)
                    errs.append(np.max(np.abs(fd - d[..., k] if order > 1 else fd - d[k])))
                scale = 1 + np.max(np.abs(d))
                # O(step^2): halving the step cuts the error about four times (or it is at round-off)
                assert errs[1] < 1e-6 * scale or errs[1] < 0.3 * errs[0]


def test_lagrange_order_checked():
    with pytest.raises(ValueError):
        lagrange_eval(2, 0, [0.1, 0.1], 4)
    with pytest.raises(ValueError):
        LagrangeElement(TRI, 4)


# ---------------------------------------------------------------------------
# random cuts of one element


def _random_line_cut(rng):
    """Line through two points on two different edges, away from vertices."""
    j = rng.choice(3, 2, replace=False)
    t = rng.uniform(0.05, 0.95, 2)
    P = [TRI[k] + t[m] * (TRI[(k + 1) % 3] - TRI[k]) for m, k in enumerate(j)]
    d = P[1] - P[0]
    a, b = d[1], -d[0]
    if rng.random() < 0.5:
        a, b = -a, -b
    return line_levelset(a, b, a * P[0][0] + b * P[0][1])


def _random_circle_cut(rng):
    """Circle of radius 3h..20h through a random interior point."""
    while True:
        r = rng.uniform(3 * H, 20 * H)
        u, v = rng.uniform(0.15, 0.7, 2)
        if u + v < 0.85:
            break
    x = TRI[0] + u * (TRI[1] - TRI[0]) + v * (TRI[2] - TRI[0])
    ang = rng.uniform(0, 2 * np.pi)
    c = x - r * np.array([np.cos(ang), np.sin(ang)])
    return LevelSet(lambda x, y: (x - c[0]) ** 2 + (y - c[1]) ** 2 - r * r,
                    lambda x, y: (2 * (x - c[0]), 2 * (y - c[1])))


def _bases(kind, p, n, seed, contrast=None, strict=True):
    rng = np.random.default_rng(seed)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("error" if strict else "ignore", UnisolvenceWarning)
        for _ in range(n):
            ls = _random_line_cut(rng) if kind == "line" else _random_circle_cut(rng)
            c = 10 ** rng.uniform(0, 3) if contrast is None else contrast
            bm, bp = (1.0, c) if rng.random() < 0.5 else (c, 1.0)
            out.append((ls, bm, bp, build_ife_basis(ls, TRI, p, bm, bp, h=H)))
    return out


@pytest.fixture(scope="module")
def line_p2():
    return _bases("line", 2, 1000, 1)


@pytest.fixture(scope="module")
def circle_p3():
    return _bases("circle", 3, 1000, 2)


def _hidden(b):
    """Hidden-side coefficient matrix C (rows: hidden slots, cols: shape functions)."""
    return np.where((b.sides > 0)[:, None], b.nodal_minus, b.nodal_plus)


@pytest.mark.parametrize("which", ["line_p2", "circle_p3"])
def test_unisolvence_margin_positive(which, request):
    margins = [check_unisolvence(b) for *_, b in request.getfixturevalue(which)]
    assert min(margins) > 0
    assert min(b.margin for *_, b in request.getfixturevalue(which)) > 0


@pytest.mark.parametrize("kind,p", [("line", 2), ("circle", 3)])
def test_unisolvence_under_extreme_contrast(kind, p):
    # omega0 = 1e12 pushes the margin under the warning threshold, but not to zero
    bases = _bases(kind, p, 100, 7, contrast=1e6, strict=False)
    assert min(b.margin for *_, b in bases) > 0
    for *_, b in bases:
        R = b.A @ _hidden(b) + b.B
        assert np.max(np.abs(R)) <= 1e-9 * np.linalg.norm(b.A, 2) * max(1, np.abs(_hidden(b)).max())


@pytest.mark.parametrize("which", ["line_p2", "circle_p3"])
def test_kronecker_and_own_side_pieces(which, request):
    for _, _, _, b in request.getfixturevalue(which):
        own = np.where((b.sides > 0)[:, None], b.nodal_plus, b.nodal_minus)
        assert np.max(np.abs(own - np.eye(len(b.sides)))) <= 1e-10


@pytest.mark.parametrize("which", ["line_p2", "circle_p3"])
def test_partition_of_unity_on_both_pieces(which, request):
    rng = np.random.default_rng(0)
    bases = request.getfixturevalue(which)
    el = LagrangeElement(TRI, 2 if which == "line_p2" else 3, scale=H)
    for _, _, _, b in bases[:200]:
        uv = rng.random((100, 2))
        uv = np.where(uv.sum(1, keepdims=True) > 1, 1 - uv, uv)
        pts = TRI[0] + uv @ (TRI[1:] - TRI[0])
        M = el.monomials(pts, 0)[:, 0, :]
        for cf in (b.coef_plus, b.coef_minus):
            assert np.max(np.abs((M @ cf).sum(axis=1) - 1)) <= 1e-10


@pytest.mark.parametrize("which", ["line_p2", "circle_p3"])
def test_least_squares_orthogonality(which, request):
    for _, _, _, b in request.getfixturevalue(which):
        R = b.A @ _hidden(b) + b.B
        assert np.max(np.abs(R)) <= 1e-9 * np.linalg.norm(b.A, 2) * max(1, np.abs(_hidden(b)).max())


def test_optimality_against_perturbations():
    rng = np.random.default_rng(9)
    for ls, bm, bp, b in _bases("circle", 2, 20, 4):
        v = rng.normal(size=len(b.sides))
        c = solve_ife_coefficients(b.A, b.B, v)
        J = lambda z: z @ b.A @ z + 2 * z @ b.B @ v
        for _ in range(100):
            d = rng.normal(size=len(c))
            d *= 1e-3 / np.linalg.norm(d)
            assert J(c) <= J(c + d) + 1e-14 * abs(J(c))


def test_pou_coefficients():
    for _, _, _, b in _bases("line", 2, 20, 5):
        c = solve_ife_coefficients(b.A, b.B, np.ones(6))
        assert np.allclose(c, 1.0, atol=1e-9)


@pytest.mark.parametrize("kind,p", [("line", 2), ("circle", 2), ("circle", 3)])
def test_equal_beta_reduces_to_lagrange(kind, p):
    rng = np.random.default_rng(12)
    for _ in range(50):
        ls = _random_line_cut(rng) if kind == "line" else _random_circle_cut(rng)
        b = build_ife_basis(ls, TRI, p, 7.0, 7.0, h=H)
        I = np.eye(n_local(p))
        assert np.max(np.abs(b.nodal_plus - I)) <= 1e-10
        assert np.max(np.abs(b.nodal_minus - I)) <= 1e-10
        # jumps of xi and eta are opposite, so B = -A and c = v
        assert np.max(np.abs(b.A + b.B)) <= 1e-10 * np.abs(b.A).max()
        v = rng.normal(size=n_local(p))
        assert np.allclose(solve_ife_coefficients(b.A, b.B, v), v, atol=1e-9)


def test_refined_arc_quadrature():
    rng = np.random.default_rng(3)
    for p in (2, 3):
        ls = _random_circle_cut(rng)
        a = build_ife_basis(ls, TRI, p, 1.0, 50.0, h=H)
        f = build_ife_basis(ls, TRI, p, 1.0, 50.0, h=H, n_arc=10 * (p + 3))
        assert np.max(np.abs(a.A - f.A)) <= 1e-9 * np.abs(f.A).max()


def test_beta_scaling_with_matching_gradient_weight():
    ls = _random_circle_cut(np.random.default_rng(8))
    b1 = build_ife_basis(ls, TRI, 2, 1.0, 30.0, h=H)
    k = 4.0
    # omega0 follows max(beta)**2; the unscaled gradient term needs omega1 * k**2 too
    b2 = build_ife_basis(ls, TRI, 2, k, 30.0 * k, JWeights(omega1=k * k), h=H)
    assert np.max(np.abs(b1.nodal_plus - b2.nodal_plus)) < 1e-9
    assert np.max(np.abs(b1.nodal_minus - b2.nodal_minus)) < 1e-9
    b3 = build_ife_basis(ls, TRI, 2, k, 30.0 * k, h=H)
    assert np.max(np.abs(b1.nodal_minus - b3.nodal_minus)) > 1e-6


def test_weak_continuity_on_curved_interface():
    ls = _random_circle_cut(np.random.default_rng(10))
    b = build_ife_basis(ls, TRI, 2, 1.0, 10.0, h=H)
    el = LagrangeElement(TRI, 2, scale=H)
    pts = b.arc(np.linspace(0.05, 0.95, 40))
    M = el.monomials(pts, 0)[:, 0, :]
    jump = M @ b.coef_plus - M @ b.coef_minus
    assert np.max(np.abs(jump)) > 1e-10


def test_solve_warns_when_singular():
    A = np.diag([1.0, 1e-20])
    with pytest.warns(UnisolvenceWarning):
        solve_ife_coefficients(A, np.eye(2), np.ones(2))


# ---------------------------------------------------------------------------
# global space


def test_noninterface_elements_use_lagrange():
    sp = IfeSpace(Mesh(10), circle_levelset(R0), 2, 1.0, 50.0)
    T = int(sp.classes.noninterface_elements[0])
    pts = sp.dofs.nodes[sp.dofs.elem_dofs[T]]
    assert np.allclose(sp.evaluate(T, pts, order=0)[:, 0, :], np.eye(6), atol=1e-12)


@pytest.mark.parametrize("p", [2, 3])
def test_equal_beta_interpolation_reproduces_polynomials(p):
    sp = IfeSpace(Mesh(10), circle_levelset(R0), p, 3.0, 3.0)
    poly = lambda P: 1 + P[:, 0] - 2 * P[:, 1] + P[:, 0] * P[:, 1] ** (p - 1) + 0.5 * P[:, 0] ** p
    U = interpolate(lambda P, s: poly(P), sp)
    rng = np.random.default_rng(0)
    for T in list(sp.classes.interface_elements) + [0, 57]:
        V = sp.mesh.element_vertices(T)
        uv = rng.random((10, 2)) / 2
        pts = V[0] + uv @ (V[1:] - V[0])
        assert np.max(np.abs(sp.element_values(T, pts, U, order=0)[:, 0] - poly(pts))) < 1e-12


def test_interpolate_uses_node_side():
    ls = circle_levelset(R0)
    sp = IfeSpace(Mesh(10), ls, 2, 1.0, 50.0)
    U = interpolate(lambda P, s: np.full(len(P), float(s)), sp)
    assert np.array_equal(U, node_sides(ls, sp.dofs.nodes, sp.mesh.h).astype(float))


def test_space_dump(tmp_path):
    sp = IfeSpace(Mesh(10), circle_levelset(R0), 2, 1.0, 50.0)
    sp.dump(tmp_path / "b.txt")
    lines = (tmp_path / "b.txt").read_text().splitlines()
    assert len(lines) == len(sp.classes.interface_elements)
    assert all("margin=" in l for l in lines)


def test_space_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        IfeSpace(Mesh(4), circle_levelset(R0), 2, 0.0, 1.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 2 * np.pi), st.floats(1.0, 1e4))
def test_pou_for_arbitrary_line_direction(theta, c):
    n = np.array([np.cos(theta), np.sin(theta)])
    ls = line_levelset(n[0], n[1], float(n @ TRI.mean(0)))
    b = build_ife_basis(ls, TRI, 2, 1.0, c, h=H)
    assert np.allclose(b.nodal_plus.sum(axis=1), 1, atol=1e-10)
    assert np.allclose(b.nodal_minus.sum(axis=1), 1, atol=1e-10)
