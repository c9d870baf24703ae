import numpy as np
import pytest

from ife_c0ip.problems import CASES, DEFAULT_BETA, make_scenario

# fourth-order accurate central stencils
D2 = np.array([-1, 16, -30, 16, -1]) / 12.0
D4 = np.array([-1, 12, -39, 56, -39, 12, -1]) / 6.0


def _bilaplacian_fd(w, x, y, h):
    k4 = np.arange(-3, 4) * h
    k2 = np.arange(-2, 3) * h
    dxxxx = sum(c * w(x + s, y) for c, s in zip(D4, k4)) / h ** 4
    dyyyy = sum(c * w(x, y + s) for c, s in zip(D4, k4)) / h ** 4
    dxxyy = sum(a * b * w(x + s, y + t) for a, s in zip(D2, k2) for b, t in zip(D2, k2)) / h ** 4
    return dxxxx + 2 * dxxyy + dyyyy


@pytest.mark.parametrize("case", ["line", "moving-line", "parabola", "circle"])
def test_source_matches_finite_difference_bilaplacian(case):
    sc = make_scenario(case)
    ex = sc.exact
    # w = beta * u on either side; evaluate the plus branch scaled back
    w = lambda x, y: ex.beta_plus * ex.value(np.stack(np.broadcast_arrays(x, y), -1), 1)
    rng = np.random.default_rng(1)
    P = rng.uniform(-0.9, 0.9, (100, 2))
    fd = _bilaplacian_fd(w, P[:, 0], P[:, 1], 1e-2)
    f = sc.source(P)
    assert np.max(np.abs(fd - f)) / np.max(np.abs(f)) < 1e-5


@pytest.mark.parametrize("case", ["line", "moving-line", "parabola", "circle"])
def test_homogeneous_jumps_on_interface(case):
    sc = make_scenario(case)
    ls = sc.levelset
    # points on the zero set by bisection along y
    span = {"line": (-0.1, 0.8), "moving-line": None, "parabola": (0.0, 0.6), "circle": (-0.4, 0.4)}
    if case == "moving-line":
        pts = np.column_stack([np.full(25, 0.75), np.linspace(-0.9, 0.9, 25)])
    else:
        x = np.linspace(*span[case], 25)
        lo = np.full(25, -0.99)
        hi = np.zeros(25) if case == "circle" else np.full(25, 0.99)
        flo = ls(x, lo)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            same = np.sign(ls(x, mid)) == np.sign(flo)
            lo, hi = np.where(same, mid, lo), np.where(same, hi, mid)
        pts = np.column_stack([x, lo])
    assert np.max(np.abs(ls.evaluate(pts))) < 1e-12
    ex = sc.exact
    cp, cm = ex.components(pts, 1), ex.components(pts, -1)
    # u, grad u vanish; beta times the Hessian agrees
    assert np.max(np.abs(cp[:, :3])) < 1e-10 and np.max(np.abs(cm[:, :3])) < 1e-10
    assert np.allclose(ex.beta_plus * cp[:, 3:], ex.beta_minus * cm[:, 3:], atol=1e-9)


def test_default_betas_and_cases():
    assert set(CASES) == {"line", "moving-line", "parabola", "circle", "flower"}
    assert DEFAULT_BETA["line"] == (1.0, 100.0)
    sc = make_scenario("circle", 2.0, 3.0)
    assert (sc.beta_minus, sc.beta_plus) == (2.0, 3.0)
    with pytest.raises(ValueError):
        make_scenario("ellipse")


def test_flower_data():
    sc = make_scenario("flower")
    P = np.random.default_rng(0).uniform(-1, 1, (7, 2))
    assert sc.exact is None
    assert np.all(sc.source(P) == 1.0)
    assert np.all(sc.dirichlet(P, np.ones(7)) == 0)
    assert sc.neumann(P[None], np.ones((1, 7, 2)), 1).shape == (1, 7)


def test_line_boundary_data_nonzero():
    sc = make_scenario("line")
    y = np.linspace(-0.9, 0.9, 11)
    for xv in (-1.0, 1.0):
        pts = np.column_stack([np.full_like(y, xv), y])
        side = np.where(sc.levelset.evaluate(pts) > 0, 1, -1)
        assert np.max(np.abs(sc.dirichlet(pts, side))) > 1e-3
