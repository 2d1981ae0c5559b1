import math

import numpy as np
import pytest

from framelab import bundle as bd
from framelab import expr as ex
from framelab import holonomy as hl
from framelab import metric as mt
from framelab import ortho as ot


def sphere_canonical(th):
    """Hand-derived canonical lifting metric of the unit sphere in the
    chart (th, ph, t): dth^2 + sin^2 th dph^2 + 2 (dt - cos th dph)^2."""
    c = math.cos(th)
    return np.array([
        [1.0, 0.0, 0.0],
        [0.0, math.sin(th) ** 2 + 2 * c * c, -2.0 * c],
        [0.0, -2.0 * c, 2.0],
    ])


def const_metric(M, names=("x", "y", "z")):
    n = M.shape[0]
    comps = [[ex.Num(float(M[i, j])) for j in range(n)] for i in range(n)]
    return mt.MetricSpec(n, names[:n], comps)


def test_frame_point_validates_orthogonality():
    with pytest.raises(ot.NotOrthogonalError):
        bd.FramePoint([0.0, 0.0], np.array([[1.0, 0.2], [0.0, 1.0]]))


def test_frame_columns_orthonormal(sphere, rng):
    for _ in range(5):
        p = [rng.uniform(0.3, 2.8), rng.uniform(0, 6.0)]
        A0 = ot.rotation2(rng.uniform(0, 2 * math.pi))
        chart = bd.lifted_metric(sphere, sphere, bd.FramePoint(p, A0))
        E = chart.frame_matrix(chart.chart_point(t=[rng.uniform(-0.5, 0.5)]))
        G = sphere.evaluate(p)
        assert np.abs(E.T @ G @ E - np.eye(2)).max() <= 1e-10


def test_transfer_map_identity(sphere):
    al = bd.transfer_map(sphere, sphere, [1.0, 0.5])
    assert np.allclose(al, np.eye(2), atol=1e-12)


def test_transfer_map_conformal(flat2):
    gp = mt.rescaled(flat2, 3.0)
    al = bd.transfer_map(flat2, gp, [0.1, 0.2])
    assert np.allclose(al, 3.0 * np.eye(2), atol=1e-12)


def test_transfer_map_random_pair(rng):
    A = rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 3))
    G1 = A @ A.T + 3 * np.eye(3)
    G2 = B @ B.T + 3 * np.eye(3)
    mg, mgp = const_metric(G1), const_metric(G2)
    al = bd.transfer_map(mg, mgp, [0, 0, 0])
    for _ in range(5):
        v = rng.normal(size=3)
        w = rng.normal(size=3)
        assert (al @ v) @ G1 @ (al @ w) == pytest.approx(v @ G2 @ w, rel=1e-10, abs=1e-10)


def test_connection_form_fundamental_and_horizontal(sphere, rng):
    p = [1.1, 0.4]
    fp = bd.FramePoint.anchor(p, 2)
    chart = bd.lifted_metric(sphere, sphere, fp)
    y = chart.chart_point()
    e12 = ot.skew_basis_element(2, 0, 1)
    fund = chart.fundamental_vector(y, e12)
    assert np.abs(chart.omega(y, fund) - e12).max() <= 1e-12
    v = rng.normal(size=2)
    lift = chart.horizontal_lift(y, v)
    assert np.abs(chart.omega(y, lift)).max() <= 1e-9
    assert np.abs(lift[:2] - v).max() <= 1e-12


def test_connection_form_flat_fiber_coordinate(flat2):
    # flat connection: the fiber coordinate direction is the fundamental field
    fp = bd.FramePoint.anchor([0.2, 0.4], 2)
    om = bd.connection_form(flat2, fp, np.array([0.0, 0.0, 1.0]))
    assert np.abs(om - ot.skew_basis_element(2, 0, 1)).max() <= 1e-12


def test_horizontal_lift_flat_has_no_fiber_motion(flat2):
    fp = bd.FramePoint.anchor([0.0, 0.0], 2)
    lift = bd.horizontal_lift(flat2, fp, np.array([1.0, 0.0]))
    assert np.abs(lift[2:]).max() <= 1e-14


def test_lift_transport_consistency_on_latitude(sphere):
    """Integrating the horizontal-lift field along a latitude reproduces the
    parallel-transport ODE (cross-oracle between bundle and holonomy)."""
    th0 = 1.0
    fp = bd.FramePoint.anchor([th0, 0.0], 2)
    chart = bd.lifted_metric(sphere, sphere, fp)
    seg = hl.angular_segment([th0, 0.0], 1, 0.0, 2 * math.pi)

    from scipy.integrate import solve_ivp

    def rhs(t, y):
        return chart.horizontal_lift(y, seg.velocity(t))

    y0 = chart.chart_point()
    sol = solve_ivp(rhs, (0.0, 1.0), y0, rtol=1e-10, atol=1e-12)
    y1 = sol.y[:, -1]
    E_end = chart.frame_matrix(np.concatenate([fp.base, y1[2:]]))
    S = hl.section_frame(sphere, np.array([th0, 0.0]))
    P = hl.transport_matrix(sphere, [seg], S)
    assert np.abs(E_end - P).max() <= 1e-7


def test_lifted_metric_flat_product(flat2):
    chart = bd.lifted_metric(flat2, flat2, bd.FramePoint.anchor([0.1, 0.2], 2))
    got = chart.metric_matrix(chart.chart_point(t=[0.3]))
    assert np.allclose(got, np.diag([1.0, 1.0, 2.0]), atol=1e-14)
    # all Christoffels vanish
    num = chart.numeric()
    gam = num.christoffel(chart.chart_point())
    assert np.abs(gam).max() <= 1e-9


def test_lifted_metric_recovers_canonical_sphere(sphere, rng):
    for _ in range(10):
        th = rng.uniform(0.4, math.pi - 0.4)
        ph = rng.uniform(0, 2 * math.pi)
        t = rng.uniform(-0.6, 0.6)
        A0 = ot.rotation2(rng.uniform(0, 2 * math.pi))
        chart = bd.lifted_metric(sphere, sphere, bd.FramePoint([th, ph], A0))
        got = chart.metric_matrix(chart.chart_point(t=[t]))
        assert np.abs(got - sphere_canonical(th)).max() <= 1e-9


def test_vertical_block_is_twice_identity(sphere, cone_pair, rng):
    g, gp = cone_pair
    cases = [(sphere, sphere, [1.0, 0.5]), (g, gp, [0.5, 1.0])]
    for gg, gpp, p in cases:
        chart = bd.lifted_metric(gg, gpp, bd.FramePoint.anchor(p, 2))
        for _ in range(3):
            y = chart.chart_point(t=rng.uniform(-0.5, 0.5, size=1))
            blk = chart.vertical_block_fundamental(y)
            assert np.abs(blk - 2.0 * np.eye(1)).max() <= 1e-9


def test_submersion_and_adapted_frame(sphere, rng):
    chart = bd.lifted_metric(sphere, sphere, bd.FramePoint.anchor([0.9, 0.2], 2))
    y = chart.chart_point(t=[0.2])
    Gt = chart.metric_matrix(y)
    G = sphere.evaluate([0.9, 0.2])
    for _ in range(5):
        u = rng.normal(size=2)
        v = rng.normal(size=2)
        lu = chart.horizontal_lift(y, u)
        lv = chart.horizontal_lift(y, v)
        assert lu @ Gt @ lv == pytest.approx(u @ G @ v, rel=1e-9, abs=1e-12)
    # adapted frame: identity blocks, vanishing mixed block
    P = chart.metric_in_adapted_frame(y)
    assert np.abs(P - np.eye(3)).max() <= 1e-9


def test_dimension_budget_rejected():
    m5 = mt.flat_euclidean(5)
    with pytest.raises(bd.ChartBudgetError):
        bd.lifted_metric(m5, m5, bd.FramePoint.anchor(np.zeros(5), 5))


def test_on_invariance_of_scalars(sphere, rng):
    """Right-translating the anchor changes the chart but not geometric
    scalars: gt-inner products of matched lifts and fundamental fields."""
    p = [1.2, 0.7]
    v = rng.normal(size=2)
    a = 0.37 * ot.skew_basis_element(2, 0, 1)
    vals = []
    for _ in range(3):
        A0 = ot.rotation2(rng.uniform(0, 2 * math.pi))
        chart = bd.lifted_metric(sphere, sphere, bd.FramePoint(p, A0))
        y = chart.chart_point()
        Gt = chart.metric_matrix(y)
        lift = chart.horizontal_lift(y, v)
        fund = chart.fundamental_vector(y, a)
        vals.append((lift @ Gt @ lift, fund @ Gt @ fund, lift @ Gt @ fund))
    for row in vals[1:]:
        assert np.abs(np.array(row) - np.array(vals[0])).max() <= 1e-9


def test_c0_continuity_in_the_connection_metric(sphere):
    """Perturbing g' by delta h moves evaluated components by O(delta)."""
    th = ex.Sym("th")
    h = [[ex.Num(0), ex.Num(0)], [ex.Num(0), ex.cos(th)]]
    base_chart = bd.lifted_metric(sphere, sphere, bd.FramePoint.anchor([1.0, 0.4], 2))
    y = base_chart.chart_point(t=[0.2])
    base_val = base_chart.metric_matrix(y)
    gaps = []
    deltas = (1e-2, 1e-3, 1e-4)
    for d in deltas:
        comps = [[ex.Add(sphere.components[i][j], ex.Mul(ex.Num(d), h[i][j]))
                  for j in range(2)] for i in range(2)]
        gp = sphere.with_components(comps, name=f"perturbed-{d}")
        chart = bd.lifted_metric(sphere, gp, bd.FramePoint.anchor([1.0, 0.4], 2))
        gaps.append(np.abs(chart.metric_matrix(y) - base_val).max())
    slopes = np.diff(np.log(gaps)) / np.diff(np.log(deltas))
    assert np.all(np.abs(slopes - 1.0) < 0.2)


def test_fibers_totally_geodesic(sphere, cone_pair):
    g, gp = cone_pair
    for gg, gpp, p in ((sphere, sphere, [1.0, 0.5]), (g, gp, [0.5, 1.0])):
        chart = bd.lifted_metric(gg, gpp, bd.FramePoint.anchor(p, 2))
        y0 = chart.chart_point()
        v0 = chart.fundamental_vector(y0, 0.8 * ot.skew_basis_element(2, 0, 1))
        num = chart.numeric()
        sol = num.geodesic_ivp(y0, v0, 1.0, rtol=1e-9, atol=1e-9)
        drift = 0.0
        for t in np.linspace(0, 1.0, 40):
            drift = max(drift, np.abs(sol.sol(t)[:2] - y0[:2]).max())
        assert drift <= 1e-7


# ---------------------------------------------------------------------------
# Sasaki-type distance

def test_sasaki_compatibility(sphere):
    spec = bd.SasakiSpec(sphere, sphere, sphere)
    assert spec.compatibility_residual([1.1, 0.4]) <= 1e-9


def test_sasaki_same_point_same_vector(sphere):
    spec = bd.SasakiSpec(sphere, sphere, sphere)
    p = np.array([1.0, 0.3])
    v = np.array([0.5, 0.1])
    best = bd.sasaki_distance(spec, (p, v), (p, v))
    assert best.value == 0.0
    assert best.descriptor == "constant"


def test_sasaki_flat_pythagoras(flat2):
    spec = bd.SasakiSpec(flat2, flat2, flat2)
    p = np.array([0.0, 0.0])
    q = np.array([1.0, 0.5])
    v = np.array([0.2, 0.0])
    u = np.array([0.0, 0.4])
    best = bd.sasaki_distance(spec, (p, v), (q, u))
    want = math.hypot(np.linalg.norm(q - p), np.linalg.norm(v - u))
    assert best.value == pytest.approx(want, rel=1e-9)


def test_sasaki_sphere_loop_beats_fiber_gap(sphere):
    """At the same base point, a latitude loop whose holonomy rotates v
    toward u can beat the trivial bound sqrt(0 + |v-u|^2)."""
    spec = bd.SasakiSpec(sphere, sphere, sphere)
    th0 = math.acos(0.25)   # holonomy angle 2 pi (1 - cos) = 1.5 pi
    p = np.array([th0, 0.0])
    v = np.array([1.0, 0.0])
    hol = hl.holonomy_element(sphere, hl.coordinate_circle_loop(p, 1, 2 * math.pi))
    S = hl.section_frame(sphere, p)
    u = S @ hol @ np.linalg.solve(S, v)     # exactly the transported vector
    loops = [hl.coordinate_circle_loop(p, 1, 2 * math.pi)]
    best = bd.sasaki_distance(spec, (p, v), (p, u), loops=loops)
    L = loops[0].compute_length(sphere)
    # the loop transports v exactly onto u, so sqrt(L^2 + 0) caps the value
    assert best.value <= L + 1e-9
    gap = math.sqrt(float((v - u) @ sphere.evaluate(p) @ (v - u)))
    assert best.value <= gap + 1e-9
