"""The lifting metric on an orthonormal frame bundle, as an explicit
coordinate metric on chart x exp-coordinates of O(n).

Frames are g'-orthonormal (g' plays the smoothed-metric role and induces
the horizontal distribution through its Levi-Civita connection); lengths of
horizontal vectors come from the base metric g.  A chart point is
(x, t^{lam mu}) with frame matrix

    E(x, t) = S(x) exp(T(t)) A0,     T(t) = sum t^{lm} e^{lm},

where S(x) is the reference section (Gram-Schmidt of the coordinate basis
under g') and A0 the anchor frame coordinate.  The connection form on chart
basis vectors is exact:

    omega(d/dx^i) = Ad_{Q^-1} C_i(x),          Q = exp(T) A0,
    omega(d/dt^a) = Ad_{A0^-1}[exp(-T) Dexp_T[B_a]],

with C_i = S^-1 (d_i S + Gamma'[e_i] S) the section's connection
coefficients (Cholesky-differentiated, so the whole first-order
construction is exact) and Dexp the Frechet derivative of the matrix
exponential.  The metric is then

    gt(U, V) = g(pi_* U, pi_* V) + b(omega(U), omega(V)).

Valid for |t|_b < pi/2; curvature evaluations should stay within pi/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, expm_frechet

from . import ortho
from .curvature import NumericMetric, assemble_gamma, geodesic_between, geodesic_ivp
from .holonomy import transport_matrix
from .metric import MetricSpec

CHART_RADIUS = math.pi / 2
DIMENSION_BUDGET = 10


class ChartBudgetError(ValueError):
    pass


@dataclass
class FramePoint:
    base: np.ndarray
    frame: np.ndarray       # A in O(n); the frame is s(base) . A

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.frame = ortho.check_orthogonal(np.asarray(self.frame, dtype=float))

    @staticmethod
    def anchor(base, n):
        return FramePoint(np.asarray(base, dtype=float), np.eye(n))


def section_with_derivative(gp: MetricSpec, x):
    """Reference section S(x) = chol(G')^-T and its exact partials dS[i]."""
    x = np.asarray(x, dtype=float)
    G = gp.check_spd(x)
    dG = gp.derivative_fn(1)(x)
    L = np.linalg.cholesky(G)
    Linv = np.linalg.inv(L)
    S = Linv.T
    n = gp.dim
    dS = np.empty((n, n, n))
    for i in range(n):
        M = Linv @ dG[i] @ Linv.T
        Phi = np.tril(M, -1) + 0.5 * np.diag(np.diag(M))
        dS[i] = -S @ Phi.T
    return S, dS


def section_connection_coeffs(gp: MetricSpec, x):
    """C_i = S^-1 (d_i S + Gamma'[e_i] S), skew matrices, one per direction."""
    x = np.asarray(x, dtype=float)
    S, dS = section_with_derivative(gp, x)
    G = gp.evaluate(x)
    dG = gp.derivative_fn(1)(x)
    gamma = assemble_gamma(G, dG)
    Sinv = np.linalg.inv(S)
    n = gp.dim
    C = np.empty((n, n, n))
    for i in range(n):
        C[i] = Sinv @ (dS[i] + gamma[:, i, :] @ S)
    return S, C


def transfer_map(g: MetricSpec, gp: MetricSpec, p):
    """alpha^{1/2} with alpha = g^-1 g': the g-self-adjoint square root
    satisfying g'(v, w) = g(alpha^{1/2} v, alpha^{1/2} w)."""
    p = np.asarray(p, dtype=float)
    G = g.check_spd(p)
    Gp = gp.check_spd(p)
    L = np.linalg.cholesky(G)
    Linv = np.linalg.inv(L)
    B = Linv @ Gp @ Linv.T
    w, V = np.linalg.eigh(0.5 * (B + B.T))
    if w[0] <= 0:
        raise ValueError("transfer map undefined: non-SPD input")
    Bhalf = V @ np.diag(np.sqrt(w)) @ V.T
    return Linv.T @ Bhalf @ L.T


class LiftedMetricChart:
    """Evaluator of the lifting metric in induced coordinates (x, t)."""

    def __init__(self, g: MetricSpec, gp: MetricSpec, anchor: FramePoint):
        if g.dim != gp.dim:
            raise ValueError("base and connection metrics must share the chart")
        if g.coords != gp.coords:
            raise ValueError("base and connection metrics must share coordinates")
        n = g.dim
        m = n * (n - 1) // 2
        if n + m > DIMENSION_BUDGET:
            raise ChartBudgetError(
                f"total dimension {n + m} exceeds the budget {DIMENSION_BUDGET}")
        self.g = g
        self.gp = gp
        self.anchor = anchor
        self.n = n
        self.m = m
        self.dim = n + m
        self.pairs = ortho.skew_pairs(n)
        self.basis = ortho.skew_basis(n)

    # -- chart bookkeeping ---------------------------------------------------

    def split(self, y):
        y = np.asarray(y, dtype=float)
        return y[: self.n], y[self.n:]

    def chart_point(self, base=None, t=None):
        base = self.anchor.base if base is None else np.asarray(base, dtype=float)
        t = np.zeros(self.m) if t is None else np.asarray(t, dtype=float)
        return np.concatenate([base, t])

    def skew_from_t(self, t):
        T = np.zeros((self.n, self.n))
        for a, (i, j) in enumerate(self.pairs):
            T[i, j] += t[a]
            T[j, i] -= t[a]
        return T

    def frame_matrix(self, y):
        """Columns are the frame vectors in coordinate components."""
        x, t = self.split(y)
        S, _ = section_with_derivative(self.gp, x)
        return S @ expm(self.skew_from_t(t)) @ self.anchor.frame

    def check_chart_radius(self, y):
        _, t = self.split(y)
        norm = ortho.b_norm(self.skew_from_t(t))
        if norm >= CHART_RADIUS:
            raise ValueError(f"fiber coordinate |t|_b = {norm:.4f} outside the chart")

    # -- connection form -----------------------------------------------------

    def omega_basis(self, y):
        """omega on each chart basis vector: arrays (n, n, n) and (m, n, n)."""
        x, t = self.split(y)
        S, C = section_connection_coeffs(self.gp, x)
        A0 = self.anchor.frame
        T = self.skew_from_t(t)
        n, m = self.n, self.m
        if np.abs(T).max() == 0.0:
            E0 = np.eye(n)
            phis = self.basis
        else:
            E0 = expm(T)
            E0inv = E0.T
            phis = []
            for B in self.basis:
                _, Lf = expm_frechet(T, B)
                phis.append(E0inv @ Lf)
        Q = E0 @ A0
        om_x = np.einsum("ab,iac,cd->ibd", Q, C, Q)
        om_t = np.stack([A0.T @ ph @ A0 for ph in phis], axis=0)
        return om_x, om_t

    def omega(self, y, chart_vec):
        om_x, om_t = self.omega_basis(y)
        v = np.asarray(chart_vec, dtype=float)
        return (np.einsum("i,iab->ab", v[: self.n], om_x)
                + np.einsum("a,aqr->qr", v[self.n:], om_t))

    # -- the metric ----------------------------------------------------------

    def metric_matrix(self, y):
        """Coordinate components of the lifting metric at the chart point."""
        x, _ = self.split(y)
        om_x, om_t = self.omega_basis(y)
        n, m = self.n, self.m
        G = self.g.evaluate(x)
        vx = np.stack([ortho.vec_skew(om_x[i]) for i in range(n)], axis=0)
        vt = np.stack([ortho.vec_skew(om_t[a]) for a in range(m)], axis=0)
        out = np.empty((n + m, n + m))
        out[:n, :n] = G + vx @ vx.T
        out[:n, n:] = vx @ vt.T
        out[n:, :n] = out[:n, n:].T
        out[n:, n:] = vt @ vt.T
        return out

    def metric_fun(self):
        return lambda y: self.metric_matrix(y)

    def numeric(self):
        return NumericMetric(self.metric_fun(), self.dim)

    # -- lifts, fundamental fields, adapted frame -----------------------------

    def _omega_t_matrix(self, y):
        _, om_t = self.omega_basis(y)
        return np.stack([ortho.vec_skew(om_t[a]) for a in range(self.m)], axis=1)

    def horizontal_lift(self, y, v):
        """Chart components of the horizontal lift of base vector v at y."""
        om_x, om_t = self.omega_basis(y)
        v = np.asarray(v, dtype=float)
        W = np.stack([ortho.vec_skew(om_t[a]) for a in range(self.m)], axis=1)
        rhs = -ortho.vec_skew(np.einsum("i,iab->ab", v, om_x))
        tau = np.linalg.solve(W, rhs)
        return np.concatenate([v, tau])

    def fundamental_vector(self, y, a):
        """Chart components of the fundamental field of a in o(n) at y."""
        W = self._omega_t_matrix(y)
        tau = np.linalg.solve(W, ortho.vec_skew(a))
        return np.concatenate([np.zeros(self.n), tau])

    def adapted_frame(self, y):
        """Columns: lifts of the g-orthonormalized coordinate basis, then the
        b-orthonormal fundamental fields T_lm / sqrt(2)."""
        x, _ = self.split(y)
        G = self.g.check_spd(x)
        F = np.linalg.inv(np.linalg.cholesky(G)).T    # g-ON base frame
        cols = [self.horizontal_lift(y, F[:, i]) for i in range(self.n)]
        for B in self.basis:
            cols.append(self.fundamental_vector(y, B / math.sqrt(2.0)))
        return np.stack(cols, axis=1)

    def metric_in_adapted_frame(self, y):
        P = self.adapted_frame(y)
        return P.T @ self.metric_matrix(y) @ P

    def vertical_block_fundamental(self, y):
        """Metric on the unnormalized fundamental fields T_lm (contract: 2 I)."""
        cols = [self.fundamental_vector(y, B) for B in self.basis]
        P = np.stack(cols, axis=1)
        return P.T @ self.metric_matrix(y) @ P

    # -- export ---------------------------------------------------------------

    def export_grid(self, path, bounds, counts):
        """Sampled components on a coordinate lattice, .gmet-style text."""
        axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(bounds, counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([mm.ravel() for mm in mesh], axis=-1)
        names = list(self.g.coords) + [f"t{i}{j}" for i, j in self.pairs]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# lifted metric grid; dim {self.dim}\n")
            fh.write("# coords " + " ".join(names) + "\n")
            comp_names = [f"g_{a}_{b}" for a in range(self.dim) for b in range(a, self.dim)]
            fh.write("# columns: " + " ".join(names + comp_names) + "\n")
            for p in points:
                Gt = self.metric_matrix(p)
                vals = [Gt[a, b] for a in range(self.dim) for b in range(a, self.dim)]
                row = list(p) + vals
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def lifted_metric(g: MetricSpec, gp: MetricSpec, anchor: FramePoint) -> LiftedMetricChart:
    return LiftedMetricChart(g, gp, anchor)


def connection_form(gp: MetricSpec, fp: FramePoint, tangent):
    """omega of a chart tangent vector at the frame point (anchor gauge)."""
    chart = LiftedMetricChart(gp, gp, fp)
    return chart.omega(chart.chart_point(), tangent)


def horizontal_lift(gp: MetricSpec, fp: FramePoint, v):
    chart = LiftedMetricChart(gp, gp, fp)
    return chart.horizontal_lift(chart.chart_point(), v)


# ---------------------------------------------------------------------------
# Sasaki-type distance on the tangent bundle

@dataclass
class SasakiSpec:
    g: MetricSpec           # base lengths
    h: MetricSpec           # fiber inner product
    conn: MetricSpec        # metric whose Levi-Civita connection transports

    def compatibility_residual(self, p, directions=None):
        """|nabla^conn h| at p: zero when conn and h share Levi-Civita."""
        from .curvature import christoffel
        p = np.asarray(p, dtype=float)
        H = self.h.evaluate(p)
        dH = self.h.derivative_fn(1)(p)
        gamma = christoffel(self.conn, p).gamma
        # (nabla_k h)_ij = d_k h_ij - Gamma^l_ki h_lj - Gamma^l_kj h_il
        nh = (dH
              - np.einsum("lki,lj->kij", gamma, H)
              - np.einsum("lkj,il->kij", gamma, H))
        return float(np.abs(nh).max())


@dataclass
class SasakiPath:
    value: float
    length: float
    fiber_gap: float
    descriptor: str


def sasaki_distance(spec: SasakiSpec, pv, qu, loops=None, budget=200):
    """Upper bound for the Sasaki-type distance between (p, v) and (q, u):
    minimizes sqrt(l(gamma)^2 + |P_1^gamma(v) - u|_h^2) over candidate paths
    (two-point geodesics, optionally prefixed by holonomy loops at p)."""
    (p, v), (q, u) = pv, qu
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    H_q = spec.h.evaluate(q)

    def fiber_gap(w):
        d = w - u
        return math.sqrt(max(float(d @ H_q @ d), 0.0))

    candidates = []
    same_point = bool(np.abs(p - q).max() < 1e-12)
    if same_point:
        candidates.append(SasakiPath(fiber_gap(v), 0.0, fiber_gap(v), "constant"))
        geo_segments = []
        geo_len = 0.0
        have_geo = True
    else:
        try:
            vel, geo_len = geodesic_between(spec.g, p, q)
            sol = geodesic_ivp(spec.g, p, vel, 1.0)
            n = spec.g.dim
            from .holonomy import Segment
            geo_segments = [Segment(lambda t: sol.sol(t)[:n], lambda t: sol.sol(t)[n:])]
            have_geo = True
        except Exception:
            geo_segments, geo_len, have_geo = [], 0.0, False

    if have_geo and not same_point:
        Pv = transport_matrix(spec.conn, geo_segments, v.reshape(-1, 1))[:, 0]
        gap = fiber_gap(Pv)
        candidates.append(SasakiPath(math.hypot(geo_len, gap), geo_len, gap, "geodesic"))

    for loop in (loops or [])[:budget]:
        if loop.length is None:
            loop.compute_length(spec.g)
        try:
            w = transport_matrix(spec.conn, loop.segments, v.reshape(-1, 1))[:, 0]
            total_len = loop.length
            if have_geo and not same_point:
                w = transport_matrix(spec.conn, geo_segments, w.reshape(-1, 1))[:, 0]
                total_len += geo_len
            elif not same_point:
                continue
            gap = fiber_gap(w)
            candidates.append(SasakiPath(math.hypot(total_len, gap), total_len, gap,
                                         f"loop[{loop.descriptor}]+geodesic"))
        except Exception:
            continue

    if not candidates:
        raise RuntimeError("no candidate path stayed inside the chart")
    return min(candidates, key=lambda c: c.value)
