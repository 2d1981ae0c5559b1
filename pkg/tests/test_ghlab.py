import math

import numpy as np
import pytest

from framelab import ghlab as gh
from framelab import holonomy as hl
from framelab import metric as mt


def test_fms_validation():
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    gh.FiniteMetricSpace(["a", "b"], d).validate()
    bad = np.array([[0.0, 1.0], [1.0, 0.1]])
    with pytest.raises(ValueError):
        gh.FiniteMetricSpace(["a", "b"], bad).validate()
    tri = np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]])
    with pytest.raises(ValueError):
        gh.FiniteMetricSpace(list("abc"), tri).validate()


def test_fms_csv_round_trip():
    d = np.array([[0.0, 1.5, 2.0], [1.5, 0.0, 1.1], [2.0, 1.1, 0.0]])
    A = gh.FiniteMetricSpace(list("abc"), d)
    back = gh.FiniteMetricSpace.from_csv(A.to_csv())
    assert back.labels == list("abc")
    assert np.abs(back.d - d).max() == 0.0


def test_fms_binary_round_trip():
    d = np.array([[0.0, 1.5, 2.0], [1.5, 0.0, 1.1], [2.0, 1.1, 0.0]])
    A = gh.FiniteMetricSpace(["x", "y", "z"], d)
    blob = A.to_binary()
    assert blob[:4] == b"FMS1"
    back = gh.FiniteMetricSpace.from_binary(blob)
    assert back.labels == ["x", "y", "z"]
    assert np.abs(back.d - d).max() == 0.0


def test_sample_flat_square_three_percent(rng):
    flat = mt.flat_euclidean(2)
    res = gh.sample_space(flat, [(0, 1), (0, 1)], 100, rng=rng, refine_pairs=True)
    pts = res.layout.points[res.layout.chosen]
    d_true = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    rel = np.abs(res.space.d - d_true) / np.maximum(d_true, 1e-12)
    np.fill_diagonal(rel, 0.0)
    assert rel.max() <= 0.03
    assert res.fill_radius < 0.3
    res.space.validate(tol=1e-8)


def test_rescaled_distances_scale_exactly(rng):
    flat = mt.flat_euclidean(2)
    res = gh.sample_space(flat, [(0, 1), (0, 1)], 40, rng=rng)
    res2 = gh.sample_space(mt.rescaled(flat, 3.0), [(0, 1), (0, 1)], 40,
                           layout=res.layout)
    assert np.abs(res2.space.d - 3.0 * res.space.d).max() <= 1e-12 * res2.space.d.max()


def test_cone_antipodal_distances_match_closed_form():
    a = 0.7
    cone = mt.exact_cone(a, r_min=1e-6, r_max=4.0)
    rng = np.random.default_rng(2)
    res = gh.sample_space(cone, [(0.3, 1.6), (0.0, 2 * math.pi)], 26, rng=rng,
                          refine_pairs=True)
    pts = res.layout.points[res.layout.chosen]
    n = len(pts)
    checked = 0
    for i in range(n):
        for j in range(i + 1, n):
            dphi = abs(pts[i, 1] - pts[j, 1]) % (2 * math.pi)
            dphi = min(dphi, 2 * math.pi - dphi)
            if pts[i, 0] > 1.0 and pts[j, 0] > 1.0 and dphi > 0.8 * math.pi:
                cf = gh.cone_distance(a, pts[i], pts[j])
                assert abs(cf - res.space.d[i, j]) <= 0.03 * cf
                checked += 1
    assert checked >= 5


def test_gh_upper_identity():
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    A = gh.FiniteMetricSpace(["a", "b"], d)
    assert gh.gh_upper(A, A, gh.natural_correspondence(2)) == 0.0


def test_gh_upper_rescaled_bound():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 1, size=(12, 2))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    A = gh.FiniteMetricSpace([str(i) for i in range(12)], d)
    delta = 0.05
    B = A.rescaled(1 + delta)
    val = gh.gh_upper(A, B, gh.natural_correspondence(12))
    assert val <= delta * A.diam() / 2 + 1e-12


def test_gh_upper_requires_cover():
    d = np.zeros((2, 2))
    A = gh.FiniteMetricSpace(["a", "b"], d)
    with pytest.raises(gh.CorrespondenceError):
        gh.gh_upper(A, A, [(0, 0)])


def test_gh_lower_examples():
    point = gh.FiniteMetricSpace(["p"], np.zeros((1, 1)))
    ts = np.linspace(0, 1, 40)
    interval = gh.FiniteMetricSpace([str(i) for i in range(40)],
                                    np.abs(ts[:, None] - ts[None, :]))
    assert gh.gh_lower(point, interval) >= 0.25
    L = 2.0
    two = gh.FiniteMetricSpace(["a", "b"], np.array([[0.0, L], [L, 0.0]]))
    one = gh.FiniteMetricSpace(["a"], np.zeros((1, 1)))
    assert gh.gh_lower(two, one) >= L / 4
    assert gh.gh_lower(interval, interval) == 0.0


def test_gh_lower_below_upper(rng):
    pts_a = rng.uniform(0, 1, size=(15, 2))
    pts_b = rng.uniform(0, 1.3, size=(15, 2))
    da = np.sqrt(((pts_a[:, None] - pts_a[None]) ** 2).sum(-1))
    db = np.sqrt(((pts_b[:, None] - pts_b[None]) ** 2).sum(-1))
    A = gh.FiniteMetricSpace([str(i) for i in range(15)], da)
    B = gh.FiniteMetricSpace([str(i) for i in range(15)], db)
    assert gh.gh_lower(A, B) <= gh.gh_upper(A, B, gh.natural_correspondence(15)) + 1e-12


def test_smoothed_vs_exact_cone_matched_layout(rng):
    a = 0.7
    cone_s = mt.smoothed_cone(a, 0.1)
    cone_e = mt.exact_cone(a)
    res1 = gh.sample_space(cone_s, [(0.25, 2.0), (0.3, 5.9)], 30, rng=rng)
    res2 = gh.sample_space(cone_e, [(0.25, 2.0), (0.3, 5.9)], 30, layout=res1.layout)
    val = gh.gh_upper(res1.space, res2.space, gh.natural_correspondence(30))
    assert val <= 1e-9


def test_cone_rp3_distance_consistency():
    # coincident angles: pure radial gap
    p1 = (1.0, 1.2, 0.7, 0.9)
    p2 = (1.5, 1.2, 0.7, 0.9)
    assert gh.cone_rp3_distance(p1, p2) == pytest.approx(0.5, abs=1e-12)
    # RP3 arc never exceeds pi/2
    rng = np.random.default_rng(0)
    for _ in range(50):
        a1 = rng.uniform(0.2, 2.9, size=3)
        a2 = rng.uniform(0.2, 2.9, size=3)
        arc = gh.rp3_distance((a1[1], a1[0], a1[2]), (a2[1], a2[0], a2[2]))
        assert 0.0 <= arc <= math.pi / 2 + 1e-12


def test_rp3_distance_matches_s3_metric(s3_quarter, rng):
    """The quaternion formula agrees with short geodesic lengths of the
    (1/4)(sigma^2) metric, confirming the Euler-angle conventions."""
    from framelab.curvature import geodesic_between
    for _ in range(5):
        p = np.array([rng.uniform(0.8, 2.2), rng.uniform(1.0, 4.0), rng.uniform(1.0, 4.0)])
        q = p + rng.uniform(-0.25, 0.25, size=3)
        _, L = geodesic_between(s3_quarter, p, q)
        want = gh.rp3_distance((p[1], p[0], p[2]), (q[1], q[0], q[2]))
        assert L == pytest.approx(want, abs=2e-6)


def test_sample_frame_bundle_flat_product(rng):
    torus = mt.flat_torus(2)
    base = np.array([[1.0, 1.0], [2.0, 1.5], [3.0, 2.5]])
    fb = gh.sample_frame_bundle(torus, torus, base, fiber_count=4)
    fb.space.validate(tol=1e-6)
    # same fiber coordinate: distance equals the base distance
    K = len(fb.fiber_angles)
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            assert fb.space.d[i * K, j * K] == pytest.approx(fb.base_distance[i, j],
                                                             abs=1e-6)
    # trivial holonomy: fiber block is the b-distance on SO(2)
    from framelab import ortho as ot
    want = ot.group_distance(ot.rotation2(fb.fiber_angles[0]),
                             ot.rotation2(fb.fiber_angles[1]))
    assert fb.space.d[0, 1] == pytest.approx(want, rel=1e-9)


def test_sample_frame_bundle_cone_fiber_diameter_monotone():
    """Holonomy shortcuts shrink fibers near the cone vertex."""
    a = math.sqrt(2) - 1
    cone = mt.smoothed_cone(a, 0.05)
    base = np.array([[0.15, 0.0], [1.6, 0.0]])

    def loops_at(p):
        if p[0] > 0.5:
            return []
        return [hl.coordinate_circle_loop(p, 1, 2 * math.pi, orientation=-1,
                                          turns=k) for k in (1, 2, 3, 4, 5)]

    fb = gh.sample_frame_bundle(cone, cone, base, fiber_count=6, loops_at=loops_at)
    K = 6
    blocks = []
    for b in range(2):
        sub = fb.space.d[b * K:(b + 1) * K, b * K:(b + 1) * K]
        blocks.append(sub.max())
    assert blocks[0] < blocks[1]
    # submetry shadow: bundle distances dominate base distances
    for I in range(2 * K):
        for J in range(2 * K):
            i, j = I // K, J // K
            assert fb.space.d[I, J] >= fb.base_distance[i, j] - 1e-9


def test_collapse_experiment_irrational():
    rep = gh.fiber_collapse_experiment(math.sqrt(2) - 1, [0.1, 0.05, 0.02, 0.01],
                                       max_power=60)
    Ds = [row["D"] for row in rep.ladder]
    assert all(b < a for a, b in zip(Ds[:-1], Ds[1:]))
    assert Ds[-1] <= 0.5 * Ds[0]
    assert rep.reflection_disconnected
    assert rep.monotone


def test_collapse_experiment_rational_stabilizes():
    rep = gh.fiber_collapse_experiment(1.0 / 3.0, [0.1, 0.05, 0.02, 0.01],
                                       max_power=60)
    target = math.sqrt(2) * math.pi / 3
    assert rep.ladder[-1]["D"] == pytest.approx(target, abs=1e-2)


def test_collapse_experiment_flat_control():
    rep = gh.fiber_collapse_experiment(1.0, [0.1, 0.05], max_power=10,
                                       theta_grid=16)
    Ds = [row["D"] for row in rep.ladder]
    assert Ds[0] == pytest.approx(math.sqrt(2) * math.pi, abs=1e-9)
    assert Ds[1] == pytest.approx(Ds[0], abs=1e-9)


def test_eguchi_hanson_gh_small():
    val, A, B = gh.eguchi_hanson_gh_comparison(lam=8.0, count=8, seed=0)
    assert val <= 0.05
    A.validate(tol=1e-6)
    B.validate(tol=1e-9)
