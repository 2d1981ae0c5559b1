"""Curvature of a MetricSpec: Christoffel symbols, Riemann and Ricci
tensors, covariant derivative of curvature, tensor norms and geodesics.

Index conventions used throughout:

* ``gamma[k, i, j]`` is Christoffel ``Gamma^k_ij`` (symmetric in i, j).
* ``rup[l, i, j, k]`` is ``R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik
  + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik``, i.e. the component of
  the operator R(d_i, d_j) applied to d_k.
* ``rlow[i, j, k, l] = g_km rup[m, i, j, l]``.  With this ordering the
  sectional curvature of a coordinate 2-plane is ``rlow[0,1,0,1] / det g``
  on a 2-manifold (positive for the round sphere), and the symmetries
  R_ijkl = -R_jikl = -R_ijlk = R_klij and the first Bianchi identity
  R_ijkl + R_jkil + R_kijl = 0 all hold.

The same algebra runs on two derivative sources: exact symbolic derivatives
of a MetricSpec, or Richardson-extrapolated central differences of any
pointwise metric evaluator (used for lifted metrics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .metric import MetricSpec


class DomainExitError(RuntimeError):
    """A curve left the chart; `s_exit` is the first offending parameter."""

    def __init__(self, s_exit, point):
        super().__init__(f"curve leaves the chart domain at s={s_exit:.6g}")
        self.s_exit = s_exit
        self.point = np.asarray(point)


class ValenceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# containers

@dataclass(frozen=True)
class ConnectionCoeffs:
    point: np.ndarray
    gamma: np.ndarray           # (n, n, n): gamma[k, i, j]


@dataclass(frozen=True)
class CurvatureTensor:
    point: np.ndarray
    rup: np.ndarray             # (n, n, n, n): rup[l, i, j, k]
    rlow: np.ndarray            # (n, n, n, n): rlow[i, j, k, l]


@dataclass(frozen=True)
class CurvatureGradient:
    point: np.ndarray
    nabla_r: np.ndarray         # (n, n, n, n, n): nabla_r[m, i, j, k, l]


# ---------------------------------------------------------------------------
# assembly from (G, dG, d2G, d3G) arrays; dG[m] is the partial in direction m

def _ginv(G):
    n = G.shape[0]
    return np.linalg.solve(G, np.eye(n))


def assemble_gamma(G, dG):
    # A[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    A = np.einsum("ijl->lij", dG) + np.einsum("jil->lij", dG) - dG
    return 0.5 * np.einsum("kl,lij->kij", _ginv(G), A)


def assemble_dgamma(G, dG, d2G):
    """dgamma[m, k, i, j] = d_m Gamma^k_ij."""
    ginv = _ginv(G)
    A = np.einsum("ijl->lij", dG) + np.einsum("jil->lij", dG) - dG
    # dA[m, l, i, j] = d_m A[l, i, j]
    dA = (np.einsum("mijl->mlij", d2G) + np.einsum("mjil->mlij", d2G)
          - np.einsum("mlij->mlij", d2G))
    dginv = -np.einsum("ka,mab,bl->mkl", ginv, dG, ginv)
    return 0.5 * (np.einsum("mkl,lij->mkij", dginv, A)
                  + np.einsum("kl,mlij->mkij", ginv, dA))


def assemble_d2gamma(G, dG, d2G, d3G):
    """d2gamma[m, n, k, i, j] = d_m d_n Gamma^k_ij."""
    ginv = _ginv(G)
    A = np.einsum("ijl->lij", dG) + np.einsum("jil->lij", dG) - dG
    dA = (np.einsum("mijl->mlij", d2G) + np.einsum("mjil->mlij", d2G) - d2G)
    d2A = (np.einsum("mnijl->mnlij", d3G) + np.einsum("mnjil->mnlij", d3G) - d3G)
    dginv = -np.einsum("ka,mab,bl->mkl", ginv, dG, ginv)
    d2ginv = -(np.einsum("nka,mab,bl->mnkl", dginv, dG, ginv)
               + np.einsum("ka,mnab,bl->mnkl", ginv, d2G, ginv)
               + np.einsum("ka,mab,nbl->mnkl", ginv, dG, dginv))
    return 0.5 * (np.einsum("mnkl,lij->mnkij", d2ginv, A)
                  + np.einsum("mkl,nlij->mnkij", dginv, dA)
                  + np.einsum("nkl,mlij->mnkij", dginv, dA)
                  + np.einsum("kl,mnlij->mnkij", ginv, d2A))


def assemble_rup(gamma, dgamma):
    term = np.einsum("iljk->lijk", dgamma) - np.einsum("jlik->lijk", dgamma)
    quad = np.einsum("lim,mjk->lijk", gamma, gamma)
    return term + quad - np.einsum("lijk->ljik", quad)


def assemble_rlow(G, rup):
    return np.einsum("km,mijl->ijkl", G, rup)


def assemble_drup(gamma, dgamma, d2gamma):
    """drup[m, l, i, j, k] = d_m R^l_ijk."""
    term = (np.einsum("miljk->mlijk", d2gamma)
            - np.einsum("mjlik->mlijk", d2gamma))
    quad = (np.einsum("mlia,ajk->mlijk", dgamma, gamma)
            + np.einsum("lia,majk->mlijk", gamma, dgamma))
    return term + quad - np.einsum("mlijk->mljik", quad)


# ---------------------------------------------------------------------------
# symbolic-derivative entry points

def _derivs(m, p, order):
    p = np.asarray(p, dtype=float)
    out = [m.evaluate(p)]
    for k in range(1, order + 1):
        out.append(m.derivative_fn(k)(p))
    return out


def christoffel(m: MetricSpec, p) -> ConnectionCoeffs:
    p = np.asarray(p, dtype=float)
    if not m.in_domain(p):
        raise DomainExitError(0.0, p)
    G = m.check_spd(p)
    dG = m.derivative_fn(1)(p)
    return ConnectionCoeffs(p, assemble_gamma(G, dG))


def riemann(m: MetricSpec, p) -> CurvatureTensor:
    p = np.asarray(p, dtype=float)
    if not m.in_domain(p):
        raise DomainExitError(0.0, p)
    G = m.check_spd(p)
    G, dG, d2G = _derivs(m, p, 2)
    gamma = assemble_gamma(G, dG)
    dgamma = assemble_dgamma(G, dG, d2G)
    rup = assemble_rup(gamma, dgamma)
    return CurvatureTensor(p, rup, assemble_rlow(G, rup))


def ricci(m: MetricSpec, p) -> np.ndarray:
    """Ricci tensor Ric_ab = rup[m, m, a, b]; equals g on the unit sphere."""
    R = riemann(m, p)
    return np.einsum("mmab->ab", R.rup)


def sectional(m: MetricSpec, p, u, v) -> float:
    G = m.check_spd(np.asarray(p, dtype=float))
    R = riemann(m, p)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    num = pairing(R.rlow, u, v, v, u)
    uu = u @ G @ u
    vv = v @ G @ v
    uv = u @ G @ v
    den = uu * vv - uv * uv
    if den <= 0:
        raise ValueError("u, v do not span a 2-plane")
    return num / den


def pairing(rlow, a, b, c, d):
    """<R(a, b) c, d> from the rlow array."""
    return float(np.einsum("ijkl,i,j,k,l->", rlow, a, b, d, c))


def curvature_gradient(m: MetricSpec, p, connection: MetricSpec = None) -> CurvatureGradient:
    """Covariant derivative of the curvature of m, differentiated with the
    Levi-Civita connection of `connection` (defaults to m itself).

    nabla_r[m, i, j, k, l] = (nabla_m R)_ijkl.
    """
    p = np.asarray(p, dtype=float)
    G, dG, d2G, d3G = _derivs(m, p, 3)
    gamma_m = assemble_gamma(G, dG)
    dgamma = assemble_dgamma(G, dG, d2G)
    d2gamma = assemble_d2gamma(G, dG, d2G, d3G)
    rup = assemble_rup(gamma_m, dgamma)
    rlow = assemble_rlow(G, rup)
    drup = assemble_drup(gamma_m, dgamma, d2gamma)
    # d_m rlow_ijkl = d_m g_ka rup[a,i,j,l] + g_ka d_m rup[a,i,j,l]
    drlow = (np.einsum("mka,aijl->mijkl", dG, rup)
             + np.einsum("ka,maijl->mijkl", G, drup))
    if connection is None:
        gamma_c = gamma_m
    else:
        gamma_c = christoffel(connection, p).gamma
    nabla = (drlow
             - np.einsum("smi,sjkl->mijkl", gamma_c, rlow)
             - np.einsum("smj,iskl->mijkl", gamma_c, rlow)
             - np.einsum("smk,ijsl->mijkl", gamma_c, rlow)
             - np.einsum("sml,ijks->mijkl", gamma_c, rlow))
    return CurvatureGradient(p, nabla)


def connection_difference(m: MetricSpec, m_eps: MetricSpec, p) -> np.ndarray:
    """The (1,2) tensor D^k_ij = Gamma^k_ij - Gamma_eps^k_ij (as d[k,i,j])."""
    return christoffel(m, p).gamma - christoffel(m_eps, p).gamma


def tensor_norm(T, m: MetricSpec, p, signature) -> float:
    """g-norm of a tensor: sqrt of the full contraction of T (x) T with
    g (on 'u' slots) and g^-1 (on 'l' slots).  signature example: "ull".
    """
    T = np.asarray(T, dtype=float)
    if len(signature) != T.ndim or any(s not in "ul" for s in signature):
        raise ValenceError(f"signature {signature!r} does not match tensor of rank {T.ndim}")
    G = m.check_spd(np.asarray(p, dtype=float))
    Ginv = _ginv(G)
    k = T.ndim
    a = "abcdefgh"[:k]
    b = "mnopqrst"[:k]
    mats = ",".join(f"{a[i]}{b[i]}" for i in range(k))
    sub = f"{a},{b},{mats}->"
    slots = [G if s == "u" else Ginv for s in signature]
    val = np.einsum(sub, T, T, *slots)
    return math.sqrt(max(val, 0.0))


def norm_riemann(m: MetricSpec, p) -> float:
    return tensor_norm(riemann(m, p).rlow, m, p, "llll")


def sup_sectional_coordinate_planes(m: MetricSpec, p) -> float:
    """max |sec| over coordinate 2-planes at p."""
    n = m.dim
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            u = np.zeros(n)
            v = np.zeros(n)
            u[i] = 1.0
            v[j] = 1.0
            best = max(best, abs(sectional(m, p, u, v)))
    return best


# ---------------------------------------------------------------------------
# geodesics

#: integrator tolerances (adaptive RK45)
ODE_RTOL = 1e-10
ODE_ATOL = 1e-10
DOMAIN_TOL = 1e-9


class _GammaCache:
    """Fast Christoffel evaluation for ODE right-hand sides."""

    def __init__(self, m):
        self.m = m
        self.gfn = m._compiled()
        self.dfn = m.derivative_fn(1)
        self.n = m.dim

    def gamma(self, x):
        n = self.n
        G = np.array(self.gfn(x), dtype=float).reshape(n, n)
        dG = self.dfn(x)
        return assemble_gamma(G, dG)


def geodesic_ivp(m: MetricSpec, p, v, t_final, dense=True, rtol=ODE_RTOL, atol=ODE_ATOL):
    """Integrate x'' + Gamma(x)(x', x') = 0; returns the scipy solution."""
    cache = _GammaCache(m)
    n = m.dim

    def rhs(t, y):
        x, vel = y[:n], y[n:]
        gamma = cache.gamma(x)
        acc = -np.einsum("kij,i,j->k", gamma, vel, vel)
        return np.concatenate([vel, acc])

    y0 = np.concatenate([np.asarray(p, dtype=float), np.asarray(v, dtype=float)])
    sol = solve_ivp(rhs, (0.0, float(t_final)), y0, method="RK45",
                    rtol=rtol, atol=atol, dense_output=dense)
    if not sol.success:
        raise RuntimeError(f"geodesic integration failed: {sol.message}")
    return sol


def _first_domain_exit(m, sol, t_final, samples=200):
    ts = np.linspace(0.0, t_final, samples)
    n = m.dim
    for t in ts:
        x = sol.sol(t)[:n]
        if not m.in_domain(x, tol=DOMAIN_TOL):
            return t, x
    return None


def exp_map(m: MetricSpec, p, v, t=1.0):
    """Endpoint of the geodesic from p with initial velocity v at parameter t."""
    sol = geodesic_ivp(m, p, v, t)
    exit_info = _first_domain_exit(m, sol, t)
    if exit_info is not None:
        raise DomainExitError(exit_info[0], exit_info[1])
    return sol.y[: m.dim, -1].copy()


def geodesic_energy_drift(m: MetricSpec, sol, t_final, samples=20):
    n = m.dim
    ts = np.linspace(0.0, t_final, samples)
    vals = []
    for t in ts:
        y = sol.sol(t)
        x, vel = y[:n], y[n:]
        vals.append(float(vel @ m.evaluate(x) @ vel))
    vals = np.array(vals)
    scale = max(vals.max(), 1e-30)
    return float((vals.max() - vals.min()) / scale)


def geodesic_between(m: MetricSpec, p, q, v0=None, tol=1e-10, max_iter=12,
                     rtol=1e-10, atol=1e-10):
    """Two-point geodesic by shooting.  Returns (v, length) with exp_p(v) = q.

    v0 seeds the Newton iteration; the default straight-line velocity works
    whenever the chart is close to flat on the segment.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = m.dim
    v = np.array(v0, dtype=float) if v0 is not None else (q - p)

    def endpoint(vel):
        sol = geodesic_ivp(m, p, vel, 1.0, dense=False, rtol=rtol, atol=atol)
        return sol.y[:n, -1]

    for _ in range(max_iter):
        err = endpoint(v) - q
        if np.linalg.norm(err) < tol:
            break
        J = np.empty((n, n))
        h = max(1e-7, 1e-7 * np.linalg.norm(v))
        for a in range(n):
            dv = np.zeros(n)
            dv[a] = h
            J[:, a] = (endpoint(v + dv) - endpoint(v - dv)) / (2 * h)
        try:
            step = np.linalg.solve(J, err)
        except np.linalg.LinAlgError:
            raise RuntimeError("shooting Jacobian singular") from None
        v = v - step
    else:
        raise RuntimeError(f"shooting failed to converge for {p} -> {q}")
    length = math.sqrt(max(float(v @ m.evaluate(p) @ v), 0.0))
    return v, length


def curve_length(m: MetricSpec, curve, t0=0.0, t1=1.0, samples=256, velocity=None):
    """Length of a parametric curve t -> coordinates under m (composite
    Gauss-Legendre quadrature of |c'|_g; velocity falls back to central
    differences when no exact velocity callable is supplied)."""
    nodes, weights = np.polynomial.legendre.leggauss(8)
    total = 0.0
    edges = np.linspace(t0, t1, samples // 8 + 1)
    h = 1e-6 * max(1.0, abs(t1 - t0))

    def vel_at(t):
        if velocity is not None:
            return np.asarray(velocity(t), dtype=float)
        return (np.asarray(curve(t + h)) - np.asarray(curve(t - h))) / (2 * h)

    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        for x, w in zip(nodes, weights):
            t = mid + half * x
            c = np.asarray(curve(t), dtype=float)
            vel = vel_at(t)
            total += w * half * math.sqrt(max(float(vel @ m.evaluate(c) @ vel), 0.0))
    return total


# ---------------------------------------------------------------------------
# finite-difference machinery for pointwise metric evaluators

#: Richardson step pairs (first and second derivatives)
FD_H1 = 1e-4
FD_H2 = 1e-5
FD_H1_SECOND = 2e-3
FD_H2_SECOND = 2e-4


def _central(fun, p, axis, h):
    e = np.zeros(len(p))
    e[axis] = h
    return (fun(p + e) - fun(p - e)) / (2 * h)


def fd_gradient(fun, p, h1=FD_H1, h2=FD_H2):
    """Richardson-extrapolated first partials of an array-valued function.

    Returns shape (n,) + fun(p).shape.
    """
    p = np.asarray(p, dtype=float)
    n = len(p)
    rows = []
    w = h1 * h1 / (h1 * h1 - h2 * h2)
    for a in range(n):
        d1 = _central(fun, p, a, h1)
        d2 = _central(fun, p, a, h2)
        rows.append(w * d2 + (1 - w) * d1)
    return np.stack(rows, axis=0)


def _second_once(fun, p, a, b, h, f0):
    n = len(p)
    ea = np.zeros(n)
    eb = np.zeros(n)
    ea[a] = h
    eb[b] = h
    if a == b:
        return (fun(p + ea) - 2.0 * f0 + fun(p - ea)) / (h * h)
    return (fun(p + ea + eb) - fun(p + ea - eb) - fun(p - ea + eb)
            + fun(p - ea - eb)) / (4 * h * h)


def fd_hessian(fun, p, h1=FD_H1_SECOND, h2=FD_H2_SECOND):
    """Richardson-extrapolated second partials; shape (n, n) + value shape."""
    p = np.asarray(p, dtype=float)
    n = len(p)
    f0 = fun(p)
    w = h1 * h1 / (h1 * h1 - h2 * h2)
    out = None
    for a in range(n):
        for b in range(a, n):
            d1 = _second_once(fun, p, a, b, h1, f0)
            d2 = _second_once(fun, p, a, b, h2, f0)
            val = w * d2 + (1 - w) * d1
            if out is None:
                out = np.zeros((n, n) + val.shape)
            out[a, b] = val
            out[b, a] = val
    return out


class NumericMetric:
    """Curvature of a metric given only as a pointwise matrix evaluator."""

    def __init__(self, fun, dim):
        self.fun = fun
        self.dim = dim

    def evaluate(self, p):
        return self.fun(np.asarray(p, dtype=float))

    def derivs(self, p):
        G = self.fun(p)
        dG = fd_gradient(self.fun, p)
        d2G = fd_hessian(self.fun, p)
        return G, dG, d2G

    def christoffel(self, p):
        G = self.fun(np.asarray(p, dtype=float))
        dG = fd_gradient(self.fun, p)
        return assemble_gamma(G, dG)

    def riemann(self, p):
        G, dG, d2G = self.derivs(np.asarray(p, dtype=float))
        gamma = assemble_gamma(G, dG)
        dgamma = assemble_dgamma(G, dG, d2G)
        rup = assemble_rup(gamma, dgamma)
        return CurvatureTensor(np.asarray(p, dtype=float), rup, assemble_rlow(G, rup))

    def ricci(self, p):
        return np.einsum("mmab->ab", self.riemann(p).rup)

    def geodesic_ivp(self, p, v, t_final, rtol=1e-9, atol=1e-9):
        n = self.dim

        def rhs(t, y):
            x, vel = y[:n], y[n:]
            gamma = self.christoffel(x)
            acc = -np.einsum("kij,i,j->k", gamma, vel, vel)
            return np.concatenate([vel, acc])

        y0 = np.concatenate([np.asarray(p, dtype=float), np.asarray(v, dtype=float)])
        sol = solve_ivp(rhs, (0.0, float(t_final)), y0, method="RK45",
                        rtol=rtol, atol=atol, dense_output=True)
        if not sol.success:
            raise RuntimeError(f"geodesic integration failed: {sol.message}")
        return sol
