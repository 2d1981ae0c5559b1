"""Finite-sample Gromov-Hausdorff machinery and the convergence
experiments: cone fiber collapse across a cap ladder, the rescaled
Eguchi-Hanson study, and upper/lower GH estimates between finite metric
spaces.

GH estimation only ever certifies upper bounds through explicit
correspondences (natural chart identifications) plus crude lower bounds
(diameter gap and packing-vs-covering counts); no optimal-matching search.
Limit spaces (exact cones, the asymptotic cone of Eguchi-Hanson) are
closed-form distance evaluators rather than sampled manifolds.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from . import holonomy as hl
from . import ortho
from .curvature import curve_length, geodesic_between
from .metric import MetricSpec

TRIANGLE_TOL = 1e-9


class CorrespondenceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# finite metric spaces

@dataclass
class FiniteMetricSpace:
    labels: list
    d: np.ndarray
    basepoint: int = None

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        n = len(self.labels)
        if self.d.shape != (n, n):
            raise ValueError("distance matrix shape does not match labels")

    def validate(self, tol=TRIANGLE_TOL):
        d = self.d
        scale = max(1.0, float(np.max(d[np.isfinite(d)], initial=0.0)))
        if np.abs(np.diag(d)).max() > tol:
            raise ValueError("nonzero diagonal")
        if (d < -tol).any():
            raise ValueError("negative distance")
        if np.abs(d - d.T).max() > tol * scale:
            raise ValueError("asymmetric distance matrix")
        n = d.shape[0]
        for k in range(n):
            lhs = d
            rhs = d[:, k][:, None] + d[k, :][None, :]
            if (lhs - rhs).max() > tol * scale:
                raise ValueError("triangle inequality violated")
        return self

    @property
    def size(self):
        return len(self.labels)

    def diam(self):
        finite = self.d[np.isfinite(self.d)]
        return float(finite.max()) if finite.size else 0.0

    def rescaled(self, lam):
        return FiniteMetricSpace(list(self.labels), self.d * float(lam), self.basepoint)

    # -- serialization -----------------------------------------------------

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(str(l) for l in self.labels) + "\n")
        for row in self.d:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text):
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        labels = lines[0].split(",")
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
        return FiniteMetricSpace(labels, np.array(rows))

    def to_binary(self):
        """Magic 'FMS1', uint32 count, strict upper triangle little-endian
        float64 row-major, then newline-joined labels (utf-8)."""
        n = self.size
        out = bytearray(b"FMS1")
        out += struct.pack("<I", n)
        for i in range(n):
            for j in range(i + 1, n):
                out += struct.pack("<d", float(self.d[i, j]))
        out += "\n".join(str(l) for l in self.labels).encode("utf-8")
        return bytes(out)

    @staticmethod
    def from_binary(blob):
        if blob[:4] != b"FMS1":
            raise ValueError("bad magic")
        n = struct.unpack("<I", blob[4:8])[0]
        k = n * (n - 1) // 2
        vals = struct.unpack(f"<{k}d", blob[8:8 + 8 * k])
        d = np.zeros((n, n))
        idx = 0
        for i in range(n):
            for j in range(i + 1, n):
                d[i, j] = d[j, i] = vals[idx]
                idx += 1
        rest = blob[8 + 8 * k:]
        labels = rest.decode("utf-8").split("\n") if rest else [str(i) for i in range(n)]
        return FiniteMetricSpace(labels, d)


# ---------------------------------------------------------------------------
# sampling a MetricSpec region through a geodesic graph

@dataclass
class GraphLayout:
    points: np.ndarray          # (M, n) candidate points
    edges: np.ndarray           # (E, 2) indices
    chosen: np.ndarray          # (N,) indices into points
    fill_radius: float = None
    edge_shifts: np.ndarray = None   # (E, n) period shifts of the edge target


@dataclass
class SampleResult:
    space: FiniteMetricSpace
    layout: GraphLayout
    fill_radius: float


def _segment_length(m, a, b, panels=2):
    nodes, weights = np.polynomial.legendre.leggauss(8)
    vel = b - a
    total = 0.0
    for p0 in range(panels):
        lo = p0 / panels
        hi = (p0 + 1) / panels
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        for x, w in zip(nodes, weights):
            t = mid + half * x
            c = a + t * vel
            total += w * half * math.sqrt(max(float(vel @ m.evaluate(c) @ vel), 0.0))
    return total


def _edge_weights(m, points, edges, shifts, refine=False):
    w = np.empty(len(edges))
    for idx, (i, j) in enumerate(edges):
        a = points[i]
        b = points[j] + (shifts[idx] if shifts is not None else 0.0)
        length = _segment_length(m, a, b)
        if refine:
            try:
                _, length_ref = geodesic_between(m, a, b, rtol=1e-9, atol=1e-9)
                length = min(length, length_ref)
            except Exception:
                pass
        w[idx] = length
    return w


def _period_shifts(m):
    """Candidate period translations (excluding zero), up to two periodic axes."""
    axes = [(i, float(m.periods[c])) for i, c in enumerate(m.coords) if c in m.periods]
    shifts = [np.zeros(m.dim)]
    for i, per in axes:
        new = []
        for s in shifts:
            for mult in (-1.0, 0.0, 1.0):
                t = s.copy()
                t[i] += mult * per
                new.append(t)
        shifts = new
    return [s for s in shifts if np.any(s)], shifts


def sample_space(m: MetricSpec, region, count, rng=None, mode="geodesic-graph",
                 knn=12, oversample=10, layout: GraphLayout = None,
                 refine_edges=False, refine_pairs=False) -> SampleResult:
    """Farthest-point sample of `count` points in the coordinate region;
    pairwise distances are shortest paths on a k-NN graph over a denser
    candidate cloud, with edge weights measured under m.  The graph-path
    overestimate is O(fill radius), which is reported.

    Passing a previous `layout` reuses the identical point cloud, edges and
    chosen subset (only edge weights are re-measured), which makes matched
    comparisons between metrics on the same chart exact.

    With refine_pairs=True every chosen pair is additionally attempted by
    two-point geodesic shooting; a shot geodesic that stays in the chart
    and beats the graph value replaces it (still a genuine path length, so
    the result remains a certified upper bound).
    """
    if mode != "geodesic-graph":
        raise ValueError(f"unknown sampling mode {mode!r}")
    rng = rng or np.random.default_rng(0)
    region = [(float(lo), float(hi)) for lo, hi in region]
    n = m.dim
    nonzero_shifts, _ = _period_shifts(m)
    if layout is None:
        M = max(count * oversample, 200)
        pts = np.empty((M, n))
        for a, (lo, hi) in enumerate(region):
            pts[:, a] = rng.uniform(lo, hi, size=M)
        # lift the neighbor search to the periodic covering so the graph can
        # wrap around angular coordinates
        all_shifts = [np.zeros(n)] + nonzero_shifts
        tiled = np.concatenate([pts + s for s in all_shifts], axis=0)
        tree = cKDTree(tiled)
        k_eff = min(knn + 1, len(tiled))
        _, nbrs = tree.query(pts, k=k_eff)
        edge_map = {}
        for i in range(M):
            for jj in nbrs[i, 1:]:
                jj = int(jj)
                j = jj % M
                s = all_shifts[jj // M]
                if j == i and not np.any(s):
                    continue
                if j < i or (j == i and s[np.nonzero(s)[0][0]] < 0):
                    key = (j, i)
                    sh = -s
                else:
                    key = (i, j)
                    sh = s
                full_key = key + tuple(np.round(sh, 9))
                edge_map[full_key] = (key[0], key[1], sh)
        items = [edge_map[k] for k in sorted(edge_map)]
        edges = np.array([(i, j) for i, j, _ in items], dtype=int)
        shifts = np.array([s for _, _, s in items])
        layout = GraphLayout(pts, edges, None, edge_shifts=shifts)
        need_fps = True
    else:
        pts = layout.points
        edges = layout.edges
        shifts = layout.edge_shifts
        need_fps = layout.chosen is None
    M = len(pts)

    weights = _edge_weights(m, pts, edges, shifts, refine=refine_edges)
    graph = csr_matrix((np.concatenate([weights, weights]),
                        (np.concatenate([edges[:, 0], edges[:, 1]]),
                         np.concatenate([edges[:, 1], edges[:, 0]]))),
                       shape=(M, M))

    if need_fps:
        if count > M:
            raise ValueError("region too small for the requested sample count")
        chosen = [0]
        dist_to_set = dijkstra(graph, indices=0)
        if not np.isfinite(dist_to_set).all():
            raise ValueError("sample graph is disconnected; increase knn")
        for _ in range(count - 1):
            nxt = int(np.argmax(dist_to_set))
            chosen.append(nxt)
            dist_to_set = np.minimum(dist_to_set, dijkstra(graph, indices=nxt))
        layout.chosen = np.array(chosen, dtype=int)
        layout.fill_radius = float(dist_to_set.max())
    chosen = layout.chosen

    dmat_rows = dijkstra(graph, indices=chosen)
    d = dmat_rows[:, chosen]
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    if refine_pairs:
        d = _refine_pair_distances(m, pts[chosen], d, rng=rng)
    labels = [f"p{i}" for i in range(len(chosen))]
    space = FiniteMetricSpace(labels, d)
    return SampleResult(space, layout, layout.fill_radius)


def _geodesic_stays_inside(m, p, v, samples=24):
    from .curvature import geodesic_ivp
    try:
        sol = geodesic_ivp(m, p, v, 1.0, rtol=1e-8, atol=1e-8)
    except Exception:
        return False
    for t in np.linspace(0.0, 1.0, samples):
        if not m.in_domain(sol.sol(t)[: m.dim], tol=1e-9, wrap=True):
            return False
    return True


def _chord_admissible(m, a, b, samples=12):
    for t in np.linspace(0.0, 1.0, samples):
        if not m.in_domain(a + t * (b - a), tol=1e-12, wrap=True):
            return False
    return True


def _is_flat_on(m, pts, rng, probes=5):
    from .curvature import christoffel
    idx = rng.choice(len(pts), size=min(probes, len(pts)), replace=False)
    for i in idx:
        try:
            if np.abs(christoffel(m, pts[i]).gamma).max() > 1e-12:
                return False
        except Exception:
            return False
    return True


def _refine_pair_distances(m, pts, d_graph, rng=None, shoot=True, chord_slack=1e-9):
    """Tighten graph distances with genuine path lengths: straight-chord
    quadrature under the nearest period representative (exact on flat
    charts), then fast-tolerance two-point shooting where it can help."""
    rng = rng or np.random.default_rng(0)
    d = d_graph.copy()
    n = len(pts)
    _, all_shifts = _period_shifts(m)
    chord = np.full((n, n), np.inf)
    rep = {}
    for i in range(n):
        for j in range(i + 1, n):
            best_q, best_gap = None, np.inf
            for s in all_shifts:
                q = pts[j] + s
                gap = float(np.linalg.norm(q - pts[i]))
                if gap < best_gap:
                    best_gap, best_q = gap, q
            rep[(i, j)] = best_q
            if _chord_admissible(m, pts[i], best_q):
                chord[i, j] = chord[j, i] = _segment_length(m, pts[i], best_q, panels=4)
    improved = np.minimum(d, chord)
    if shoot and not _is_flat_on(m, pts, rng):
        for i in range(n):
            for j in range(i + 1, n):
                # chord agreeing with the graph value is already a geodesic
                if chord[i, j] <= d[i, j] * (1 + 1e-6) and not (
                        chord[i, j] < d[i, j] * (1 - 5e-3)):
                    continue
                try:
                    v, length = geodesic_between(m, pts[i], rep[(i, j)],
                                                 rtol=1e-7, atol=1e-9, tol=1e-7,
                                                 max_iter=8)
                except Exception:
                    continue
                if length < improved[i, j] - chord_slack and _geodesic_stays_inside(m, pts[i], v):
                    improved[i, j] = improved[j, i] = length
    # re-run the metric closure so shortcuts propagate through triangles
    d = improved
    for k in range(n):
        d = np.minimum(d, d[:, k][:, None] + d[k, :][None, :])
    return d


# ---------------------------------------------------------------------------
# GH bounds

def natural_correspondence(size_a, size_b=None):
    if size_b is None or size_b == size_a:
        return [(i, i) for i in range(size_a)]
    raise CorrespondenceError("natural correspondence needs equal sizes")


def gh_upper(A: FiniteMetricSpace, B: FiniteMetricSpace, corr) -> float:
    """Half the distortion of the correspondence: GH(A, B) <= value."""
    corr = list(corr)
    left = {i for i, _ in corr}
    right = {j for _, j in corr}
    if left != set(range(A.size)) or right != set(range(B.size)):
        raise CorrespondenceError("correspondence must cover both sides")
    worst = 0.0
    for i, j in corr:
        for k, l in corr:
            da = A.d[i, k]
            db = B.d[j, l]
            if math.isinf(da) and math.isinf(db):
                continue
            worst = max(worst, abs(da - db))
    return 0.5 * worst


def _greedy_separated(space, eps):
    """An exhibited eps-separated subset (size is a packing lower bound)."""
    picked = []
    for i in range(space.size):
        if all(space.d[i, j] >= eps for j in picked):
            picked.append(i)
    return picked


def _greedy_covering(space, eps):
    """An exhibited eps-covering (size is a covering upper bound)."""
    uncovered = set(range(space.size))
    centers = []
    while uncovered:
        c = min(uncovered)
        centers.append(c)
        covered = {j for j in uncovered if space.d[c, j] <= eps}
        uncovered -= covered
    return centers


def gh_lower(A: FiniteMetricSpace, B: FiniteMetricSpace, grid=24) -> float:
    """Certified lower bound: max of half the diameter gap and the
    packing-vs-covering obstruction (an eps-separated set larger than an
    exhibited covering of the other side forces distortion)."""
    best = 0.5 * abs(A.diam() - B.diam())
    for X, Y in ((A, B), (B, A)):
        diam = X.diam()
        if diam <= 0:
            continue
        for eps in np.linspace(diam / grid, diam, grid):
            m_sep = len(_greedy_separated(X, eps))
            if m_sep <= 1:
                continue
            # if GH < delta, an eps-separated set of X maps to an
            # (eps - 2 delta)-separated set of Y, and any rho-covering of Y
            # bounds packings at scales above 2 rho.
            for delta in np.linspace(eps / 2.0, 0.0, grid, endpoint=False):
                rho = (eps - 2.0 * delta) / 2.0
                if rho <= 0:
                    continue
                c_cov = len(_greedy_covering(Y, rho * (1 - 1e-12)))
                if m_sep > c_cov:
                    best = max(best, delta)
                    break
    return best


# ---------------------------------------------------------------------------
# closed-form limit spaces

def cone_distance(a, p1, p2):
    """Exact 2d cone C(S^1 of circumference 2 pi a): points (r, phi)."""
    r1, ph1 = p1
    r2, ph2 = p2
    dphi = abs(ph1 - ph2) % (2 * math.pi)
    dphi = min(dphi, 2 * math.pi - dphi)
    arc = a * dphi
    if arc >= math.pi:
        return r1 + r2
    return math.sqrt(max(r1 * r1 + r2 * r2 - 2 * r1 * r2 * math.cos(arc), 0.0))


def zyz_quaternion(ph, th, ps):
    """Unit quaternion of the ZYZ Euler rotation Rz(ph) Ry(th) Rz(ps)."""
    cph, sph = math.cos(ph / 2), math.sin(ph / 2)
    cth, sth = math.cos(th / 2), math.sin(th / 2)
    cps, sps = math.cos(ps / 2), math.sin(ps / 2)
    # qz(ph) * qy(th) * qz(ps)
    w = cph * cth * cps - sph * cth * sps
    x = cph * sth * sps - sph * sth * cps
    y = cph * sth * cps + sph * sth * sps
    z = cph * cth * sps + sph * cth * cps
    return np.array([w, x, y, z])


def rp3_distance(angles1, angles2):
    """Geodesic distance on RP^3 = S^3(1)/± between ZYZ Euler points."""
    q1 = zyz_quaternion(*angles1)
    q2 = zyz_quaternion(*angles2)
    dot = min(1.0, abs(float(q1 @ q2)))
    return math.acos(dot)


def cone_rp3_distance(p1, p2):
    """Asymptotic cone of Eguchi-Hanson: C(RP^3) with chart (r, th, ph, ps)."""
    r1, *a1 = p1
    r2, *a2 = p2
    th1, ph1, ps1 = a1
    th2, ph2, ps2 = a2
    arc = rp3_distance((ph1, th1, ps1), (ph2, th2, ps2))
    return math.sqrt(max(r1 * r1 + r2 * r2 - 2 * r1 * r2 * math.cos(arc), 0.0))


# ---------------------------------------------------------------------------
# frame-bundle sampling

@dataclass
class FrameBundleSample:
    space: FiniteMetricSpace
    base_points: np.ndarray
    fiber_angles: np.ndarray
    base_distance: np.ndarray


def sample_frame_bundle(g: MetricSpec, gp: MetricSpec, base_points,
                        fiber_count=6, loops_at=None, base_paths=None):
    """Product-style sample of the frame bundle of a surface (n = 2):
    base points x an SO(2) fiber grid.  Distances are assembled as upper
    bounds: a base path (straight coordinate segments measured under g)
    transported with the g'-connection, a holonomy loop at the target, and
    simultaneous vertical rotation give sqrt((L_base + L_loop)^2 + d_b^2).

    The submersion lower bound d((p,u),(q,v)) >= d_base(p,q) holds by
    construction and is asserted.
    """
    if g.dim != 2:
        raise ValueError("frame-bundle sampling implemented for surfaces")
    base_points = np.asarray(base_points, dtype=float)
    nb = len(base_points)
    angles = np.linspace(0.0, 2 * math.pi, fiber_count, endpoint=False)

    # base path lengths and transports between consecutive sample points
    base_d = np.zeros((nb, nb))
    transports = {}
    for i in range(nb):
        for j in range(nb):
            if i == j:
                transports[(i, j)] = np.eye(2)
                continue
            if j < i:
                continue
            seg = hl.line_segment(base_points[i], base_points[j])
            L = curve_length(g, seg.point, velocity=seg.velocity)
            base_d[i, j] = base_d[j, i] = L
            S_i = hl.section_frame(gp, base_points[i])
            P = hl.transport_matrix(gp, [seg], S_i)
            S_j = hl.section_frame(gp, base_points[j])
            hol = np.linalg.solve(S_j, P)
            u, _, vt = np.linalg.svd(hol)
            transports[(i, j)] = u @ vt
            transports[(j, i)] = transports[(i, j)].T

    # holonomy samples per base point
    samples_at = {}
    for i in range(nb):
        if loops_at is not None:
            loops = loops_at(base_points[i])
            samples_at[i] = hl.holonomy_samples(gp, loops, g, word_length=1)
        else:
            samples_at[i] = [hl.HolonomySample(np.eye(2), 0.0, "constant")]

    total = nb * fiber_count
    labels = []
    d = np.zeros((total, total))
    frames = [ortho.rotation2(t) for t in angles]
    for i in range(nb):
        for ai, th in enumerate(angles):
            labels.append(f"b{i}:f{ai}")
    for I in range(total):
        i, ai = divmod(I, fiber_count)
        for J in range(I + 1, total):
            j, aj = divmod(J, fiber_count)
            u = frames[ai]
            v = frames[aj]
            Pu = transports[(i, j)] @ u
            Lb = base_d[i, j]
            best = math.inf
            for s in samples_at[j]:
                gap = ortho.group_distance(s.element @ Pu, v)
                if math.isfinite(gap):
                    best = min(best, math.hypot(Lb + s.loop_length, gap))
            d[I, J] = d[J, I] = best
            if best < Lb - 1e-9:
                raise AssertionError("submersion lower bound violated")
    space = FiniteMetricSpace(labels, d)
    return FrameBundleSample(space, base_points, angles, base_d)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class CollapseReport:
    a: float
    ladder: list                   # dicts: eps, D, samples, min_unit_length
    reflection_disconnected: bool
    monotone: bool
    fitted_slope: float

    def to_json_obj(self):
        return {"a": self.a, "ladder": self.ladder,
                "reflection_disconnected": self.reflection_disconnected,
                "monotone": self.monotone, "fitted_slope": self.fitted_slope}

    def dat_rows(self):
        return [(row["eps"], row["D"]) for row in self.ladder]


def fiber_collapse_experiment(a, caps, max_power=60, theta_grid=48,
                              radius_factor=2.5) -> CollapseReport:
    """D(eps) = max over a theta grid of the sampled fiber distance between
    I and rot(theta) at a base point near the vertex of the cap-smoothed
    cone; the reflection component stays at infinite distance."""
    thetas = np.linspace(0.0, 2 * math.pi, theta_grid, endpoint=False)
    reflection = np.array([[1.0, 0.0], [0.0, -1.0]])
    ladder = []
    refl_disconnected = True
    for eps in caps:
        m = mt_smoothed_cone_cached(a, eps)
        rho = radius_factor * eps
        basepoint = np.array([rho, 0.0])
        samples = hl.circle_power_samples(m, basepoint, axis=1, period=2 * math.pi,
                                          max_power=max_power)
        D = 0.0
        for th in thetas:
            D = max(D, hl.fiber_distance(samples, np.eye(2), ortho.rotation2(th)))
        d_refl = hl.fiber_distance(samples, np.eye(2), reflection)
        refl_disconnected &= math.isinf(d_refl)
        unit = min((s.loop_length for s in samples if s.loop_length > 0),
                   default=float("inf"))
        ladder.append({"eps": float(eps), "D": float(D), "samples": len(samples),
                       "min_unit_length": float(unit)})
    Ds = [row["D"] for row in ladder]
    monotone = all(b <= a_ + 1e-3 for a_, b in zip(Ds[:-1], Ds[1:]))
    if len(caps) >= 2 and min(Ds) > 0:
        slope = np.polyfit(np.log([r["eps"] for r in ladder]), np.log(Ds), 1)[0]
    else:
        slope = float("nan")
    return CollapseReport(float(a), ladder, refl_disconnected, monotone, float(slope))


_CONE_CACHE = {}


def mt_smoothed_cone_cached(a, eps):
    from .metric import smoothed_cone
    key = (round(float(a), 12), round(float(eps), 12))
    if key not in _CONE_CACHE:
        _CONE_CACHE[key] = smoothed_cone(a, eps)
    return _CONE_CACHE[key]


@dataclass
class EguchiHansonReport:
    holonomy_ladder: list
    classification: str
    chirality_residual: float
    quotient_diameters: dict
    gh_table: list

    def to_json_obj(self):
        return {"holonomy_ladder": self.holonomy_ladder,
                "classification": self.classification,
                "chirality_residual": self.chirality_residual,
                "quotient_diameters": self.quotient_diameters,
                "gh_table": self.gh_table}


def eguchi_hanson_annulus_points(rng, count, lam, r_lo=1.0, r_hi=2.0,
                                 th_window=(0.7, math.pi - 0.7),
                                 ph_window=(0.5, 2.5), ps_window=(0.5, 2.5)):
    """Points of the rescaled annulus (rescaled radius in [r_lo, r_hi]),
    expressed in the original chart where r is lam times larger."""
    pts = np.empty((count, 4))
    pts[:, 0] = rng.uniform(r_lo * lam, r_hi * lam, size=count)
    pts[:, 1] = rng.uniform(*th_window, size=count)
    pts[:, 2] = rng.uniform(*ph_window, size=count)
    pts[:, 3] = rng.uniform(*ps_window, size=count)
    return pts


def eguchi_hanson_gh_comparison(lam=8.0, count=24, seed=0, a_eh=1.0):
    """Distances on the rescaled Eguchi-Hanson annulus (two-point shooting)
    against the exact C(RP^3) annulus under the natural chart
    correspondence; returns (gh_upper value, FiniteMetricSpace pair)."""
    from .metric import eguchi_hanson, rescaled
    rng = np.random.default_rng(seed)
    base = eguchi_hanson(a_eh, r_max=4.0 * lam)
    m = rescaled(base, 1.0 / lam)
    pts = eguchi_hanson_annulus_points(rng, count, lam)
    n = count
    d_eh = np.zeros((n, n))
    d_cone = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            _, L = geodesic_between(m, pts[i], pts[j], rtol=1e-9, atol=1e-9)
            d_eh[i, j] = d_eh[j, i] = L
            ci = (pts[i, 0] / lam, pts[i, 1], pts[i, 2], pts[i, 3])
            cj = (pts[j, 0] / lam, pts[j, 1], pts[j, 2], pts[j, 3])
            d_cone[i, j] = d_cone[j, i] = cone_rp3_distance(ci, cj)
    labels = [f"p{i}" for i in range(n)]
    A = FiniteMetricSpace(labels, d_eh)
    B = FiniteMetricSpace(labels, d_cone)
    return gh_upper(A, B, natural_correspondence(n)), A, B


def eguchi_hanson_experiment(lams=(4.0, 16.0, 64.0), seed=0, deltas=(0.2, 0.35),
                             basepoint=(2.2, 1.3, 0.8, 1.1), gh_lam=8.0,
                             gh_count=20, quotient_samples=40, a_eh=1.0):
    """The three-part rescaled Eguchi-Hanson study: (i) holonomy sample
    lengths shrink with the scale while the classification stays SU(2);
    (ii) sampled quotient diameters separate O(4)/SU(2) from O(4)/{±I};
    (iii) the base annulus GH-approaches the exact cone annulus."""
    from .metric import eguchi_hanson, rescaled
    base = eguchi_hanson(a_eh)
    bp = np.array(basepoint)
    rng = np.random.default_rng(seed)

    ladder = []
    members = []
    for lam in lams:
        m = rescaled(base, 1.0 / lam)
        loops = hl.plaquette_loops(bp, deltas[0], 4) + hl.plaquette_loops(bp, deltas[1], 4)
        samples = hl.holonomy_samples(m, loops, m, word_length=2)
        max_len = max(s.loop_length for s in samples)
        est = ortho.classify_subgroup([(s.element, s.loop_length) for s in samples])
        ladder.append({"lambda": float(lam), "max_length": float(max_len),
                       "label": est.label,
                       "chirality_residual": float(min(
                           est.residuals.get("chirality_off_plus", 1.0),
                           est.residuals.get("chirality_off_minus", 1.0)))})
        members.append(hl.H0FamilyMember(float(lam), m, m, bp, samples))

    report = hl.estimate_H0(members)
    su2 = report.estimate
    chirality_residual = float(min(
        su2.residuals.get("chirality_off_plus", 1.0),
        su2.residuals.get("chirality_off_minus", 1.0))) if su2.algebra_basis else 1.0

    # quotient diameters by sampling
    minus_I = ortho.SubgroupEstimate("finite-cyclic(2)", 4, 0, [],
                                     [-np.eye(4)], {}, order=2)
    diam_su2 = 0.0
    diam_pm = 0.0
    for _ in range(quotient_samples):
        xi = ortho.unvec_skew(rng.normal(size=6), 4)
        xi = xi / ortho.b_norm(xi) * rng.uniform(0.0, math.pi)
        u = ortho.group_exp(xi)
        if su2.label == "SU(2)-in-SO(4)":
            diam_su2 = max(diam_su2, ortho.quotient_distance(np.eye(4), u, su2,
                                                             rng=rng, coarse=60))
        diam_pm = max(diam_pm, ortho.quotient_distance(np.eye(4), u, minus_I))
    quotient = {"diam_O4_mod_SU2": float(diam_su2),
                "diam_O4_mod_pmI": float(diam_pm),
                "diam_O4_mod_O4": 0.0,
                "gap": float(diam_pm - diam_su2)}

    gh_val, _, _ = eguchi_hanson_gh_comparison(gh_lam, gh_count, seed, a_eh)
    gh_table = [{"lambda": float(gh_lam), "count": gh_count, "gh_upper": float(gh_val)}]

    return EguchiHansonReport(ladder, su2.label, chirality_residual, quotient, gh_table)
