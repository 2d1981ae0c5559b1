"""The orthogonal group O(n) with the bi-invariant metric b(a1, a2) =
-trace(a1 a2) on its Lie algebra of skew matrices: exponential and
principal-log charts, geodesic distances, quotient pseudo-distances, and
classification of subgroups estimated from holonomy samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, schur

SKEW_TOL = 1e-10
ORTH_TOL = 1e-10


class NotSkewError(ValueError):
    pass


class NotOrthogonalError(ValueError):
    pass


class PrincipalLogError(ValueError):
    """Requested log of an orthogonal matrix with a rotation angle >= pi."""


def skew_pairs(n):
    """Index pairs (lam, mu) with lam < mu, lexicographic; dim = n(n-1)/2."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def skew_basis_element(n, lam, mu):
    e = np.zeros((n, n))
    e[lam, mu] = 1.0
    e[mu, lam] = -1.0
    return e


def skew_basis(n):
    return [skew_basis_element(n, lam, mu) for lam, mu in skew_pairs(n)]


def check_skew(a, tol=SKEW_TOL):
    a = np.asarray(a, dtype=float)
    r = float(np.abs(a + a.T).max())
    if r > tol * max(1.0, float(np.abs(a).max())):
        raise NotSkewError(f"matrix is not skew-symmetric (residual {r:.3e})")
    return a


def check_orthogonal(A, tol=ORTH_TOL):
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    r = float(np.abs(A.T @ A - np.eye(n)).max())
    if r > tol:
        raise NotOrthogonalError(f"matrix is not orthogonal (residual {r:.3e})")
    return A


def biinvariant_inner(a1, a2):
    """b(a1, a2) = -trace(a1 a2); positive definite on skew matrices."""
    a1 = check_skew(a1)
    a2 = check_skew(a2)
    return -float(np.trace(a1 @ a2))


def b_norm(a):
    return math.sqrt(max(biinvariant_inner(a, a), 0.0))


def vec_skew(a):
    """b-isometric coordinates: Euclidean norm of vec equals the b-norm."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    return np.array([math.sqrt(2.0) * a[i, j] for i, j in skew_pairs(n)])


def unvec_skew(v, n):
    a = np.zeros((n, n))
    for idx, (i, j) in enumerate(skew_pairs(n)):
        a[i, j] = v[idx] / math.sqrt(2.0)
        a[j, i] = -a[i, j]
    return a


def group_exp(a):
    """exp: o(n) -> O(n) (Pade scaling-and-squaring)."""
    a = check_skew(a)
    return expm(a)


def _schur_blocks(A, tol=1e-9):
    """Real Schur form of an orthogonal matrix: rotation angles and the
    number of -1 eigenvalues, plus the transform Q with A = Q T Q^T."""
    T, Q = schur(np.asarray(A, dtype=float), output="real")
    n = A.shape[0]
    blocks = []   # (start index, angle) for 2x2 rotation blocks
    minus = []    # indices of -1 diagonal entries
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > tol:
            theta = math.atan2(T[i + 1, i], T[i, i])
            blocks.append((i, theta))
            i += 2
        else:
            if T[i, i] < 0:
                minus.append(i)
            i += 1
    return T, Q, blocks, minus


def orthogonal_angles(A):
    """Principal rotation angles of A in O(n) (each in (0, pi])."""
    A = check_orthogonal(A)
    _, _, blocks, minus = _schur_blocks(A)
    angles = [abs(theta) for _, theta in blocks]
    # -1 eigenvalues pair into angle-pi rotation planes
    angles.extend(math.pi for _ in range(len(minus) // 2))
    return sorted(angles, reverse=True)


def group_log(A, angle_tol=1e-9):
    """Principal logarithm: the skew a with exp(a) = A, all angles < pi."""
    A = check_orthogonal(A)
    n = A.shape[0]
    T, Q, blocks, minus = _schur_blocks(A)
    if minus:
        raise PrincipalLogError("matrix has an eigenvalue -1 (rotation angle pi)")
    for _, theta in blocks:
        if abs(theta) >= math.pi - angle_tol:
            raise PrincipalLogError(f"rotation angle {abs(theta):.6f} too close to pi")
    L = np.zeros((n, n))
    for i, theta in blocks:
        L[i, i + 1] = -theta
        L[i + 1, i] = theta
    return Q @ L @ Q.T


def group_distance(u, v):
    """Geodesic distance on (O(n), b); +inf across the two components."""
    u = check_orthogonal(u)
    v = check_orthogonal(v)
    if np.linalg.det(u) * np.linalg.det(v) < 0:
        return math.inf
    angles = orthogonal_angles(v @ u.T)
    return math.sqrt(2.0 * sum(t * t for t in angles))


def rotation2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# chirality splitting of o(4)

def su2_bases():
    """b-orthonormal bases of the self-dual and anti-self-dual factors of o(4)."""
    e = {(i, j): skew_basis_element(4, i, j) for i, j in skew_pairs(4)}
    plus = [e[(0, 1)] + e[(2, 3)], e[(0, 2)] - e[(1, 3)], e[(0, 3)] + e[(1, 2)]]
    minus = [e[(0, 1)] - e[(2, 3)], e[(0, 2)] + e[(1, 3)], e[(0, 3)] - e[(1, 2)]]
    plus = [a / b_norm(a) for a in plus]
    minus = [a / b_norm(a) for a in minus]
    return plus, minus


def chirality_residuals(a):
    """Fractions of the b-norm of skew a lying in each chirality factor."""
    plus, minus = su2_bases()
    na = b_norm(a)
    if na == 0:
        return 0.0, 0.0
    p = math.sqrt(sum(biinvariant_inner(a, q) ** 2 for q in plus)) / na
    m = math.sqrt(sum(biinvariant_inner(a, q) ** 2 for q in minus)) / na
    return p, m


# ---------------------------------------------------------------------------
# subgroup estimates

@dataclass
class SubgroupEstimate:
    label: str                    # trivial | finite-cyclic(k) | SO(2)-circle |
                                  # SU(2)-in-SO(4) | full-SO(n) | other
    n: int
    rank: int
    algebra_basis: list = field(default_factory=list)   # b-orthonormal skew matrices
    finite_generators: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    order: int = 0                # cyclic order for finite-cyclic(k)

    def to_json(self):
        return json.dumps({
            "class": self.label,
            "n": self.n,
            "rank": self.rank,
            "order": self.order,
            "generators": [np.asarray(g).ravel().tolist() for g in self.algebra_basis],
            "finite_generators": [np.asarray(g).ravel().tolist() for g in self.finite_generators],
            "residuals": self.residuals,
        }, sort_keys=True)

    @staticmethod
    def trivial(n):
        return SubgroupEstimate("trivial", n, 0)


def _orthonormal_algebra(vectors, rel_tol=1e-6):
    """Rank-revealing orthogonalization of log vectors (b-coordinates)."""
    if not vectors:
        return 0, []
    M = np.stack(vectors, axis=0)
    norms = np.linalg.norm(M, axis=1)
    keep = norms > 1e-14
    if not keep.any():
        return 0, []
    M = M[keep] / norms[keep, None]
    _, s, vt = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > rel_tol * s[0]))
    return rank, [vt[i] for i in range(rank)]


def _bracket_residual(basis_mats):
    """Max relative component of basis brackets outside the spanned algebra."""
    if len(basis_mats) < 2:
        return 0.0
    vecs = [vec_skew(a) for a in basis_mats]
    B = np.stack(vecs, axis=0)
    proj = B.T @ np.linalg.solve(B @ B.T, B)
    worst = 0.0
    for i in range(len(basis_mats)):
        for j in range(i + 1, len(basis_mats)):
            br = basis_mats[i] @ basis_mats[j] - basis_mats[j] @ basis_mats[i]
            v = vec_skew(br)
            nv = np.linalg.norm(v)
            if nv < 1e-12:
                continue
            out = v - proj @ v
            worst = max(worst, float(np.linalg.norm(out)) / nv)
    return worst


def classify_subgroup(samples, near_identity=1.5, svd_tol=1e-6,
                      bracket_tol=1e-5, finite_tol=1e-6) -> SubgroupEstimate:
    """Estimate the subgroup of O(n) generated by holonomy samples.

    samples: iterable of (GroupElement, weight); the weight usually carries
    the loop length and is not used here beyond being recorded.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample set")
    mats = [check_orthogonal(np.asarray(a, dtype=float)) for a, _ in samples]
    n = mats[0].shape[0]
    m_dim = n * (n - 1) // 2
    ident = np.eye(n)

    nontrivial = [A for A in mats if group_distance(A, ident) > 1e-8]
    if not nontrivial:
        return SubgroupEstimate.trivial(n)

    logs = []
    for A in nontrivial:
        d = group_distance(A, ident)
        if d is not math.inf and d <= near_identity:
            try:
                logs.append(vec_skew(group_log(A)))
            except PrincipalLogError:
                continue
    rank, basis_vecs = _orthonormal_algebra(logs, rel_tol=svd_tol)
    basis = [unvec_skew(v, n) for v in basis_vecs]
    residuals = {"svd_rank": rank}

    if rank == 0:
        return _classify_finite(n, nontrivial, finite_tol, residuals)

    br = _bracket_residual(basis)
    residuals["bracket"] = br
    if br > bracket_tol:
        return SubgroupEstimate("other", n, rank, basis, [], residuals)

    if n == 2 and rank == 1:
        return SubgroupEstimate("SO(2)-circle", n, 1, basis, [], residuals)
    if rank == m_dim:
        return SubgroupEstimate(f"full-SO({n})", n, rank, basis, [], residuals)
    if n == 4 and rank == 3:
        plus_res = []
        minus_res = []
        for a in basis:
            p, mfrac = chirality_residuals(a)
            plus_res.append(mfrac)    # residual off the plus factor
            minus_res.append(p)       # residual off the minus factor
        off_plus = max(plus_res)
        off_minus = max(minus_res)
        residuals["chirality_off_plus"] = off_plus
        residuals["chirality_off_minus"] = off_minus
        if min(off_plus, off_minus) <= svd_tol:
            residuals["chirality"] = "self-dual" if off_plus <= off_minus else "anti-self-dual"
            return SubgroupEstimate("SU(2)-in-SO(4)", n, 3, basis, [], residuals)
    return SubgroupEstimate("other", n, rank, basis, [], residuals)


def _classify_finite(n, nontrivial, tol, residuals):
    ident = np.eye(n)
    dists = [(group_distance(A, ident), A) for A in nontrivial]
    finite_d = [(d, A) for d, A in dists if d is not math.inf]
    if not finite_d:
        # all samples in the far component: report as other with generators
        return SubgroupEstimate("other", n, 0, [], [A for _, A in dists[:4]], residuals)
    d0, gen = min(finite_d, key=lambda t: t[0])
    # order of the candidate generator
    order = None
    P = gen.copy()
    for k in range(1, 1001):
        if group_distance(P, ident) <= 10 * tol:
            order = k
            break
        P = P @ gen
    if order is None:
        return SubgroupEstimate("other", n, 0, [], [gen], residuals)
    powers = [np.linalg.matrix_power(gen, j) for j in range(order)]
    worst = 0.0
    for A in nontrivial:
        best = min(group_distance(A, Pj) for Pj in powers)
        worst = max(worst, best)
    residuals["power_match"] = worst
    if worst <= 10 * tol:
        return SubgroupEstimate(f"finite-cyclic({order})", n, 0, [], [gen],
                                residuals, order=order)
    return SubgroupEstimate("other", n, 0, [], [gen], residuals)


# ---------------------------------------------------------------------------
# quotient pseudo-distance

def quotient_distance(u, v, H: SubgroupEstimate, rng=None, coarse=200, polish=True):
    """inf over h in the estimated subgroup H of d_b(h u, v)."""
    u = check_orthogonal(u)
    v = check_orthogonal(v)
    n = u.shape[0]
    base = group_distance(u, v)
    label = H.label

    if label == "trivial":
        return base
    if label == "SO(2)-circle" or label == "full-SO(2)":
        return 0.0 if math.isfinite(base) else math.inf
    if label.startswith("full-SO("):
        return 0.0 if math.isfinite(base) else math.inf
    if label.startswith("finite-cyclic"):
        gen = H.finite_generators[0]
        best = base
        P = np.eye(n)
        for _ in range(max(H.order, 1)):
            best = min(best, group_distance(P @ u, v))
            P = P @ gen
        return best
    if label == "SU(2)-in-SO(4)" or (label == "other" and H.algebra_basis):
        basis = H.algebra_basis
        k = len(basis)
        rng = rng or np.random.default_rng(0)
        best = base
        best_theta = np.zeros(k)
        for _ in range(coarse):
            theta = rng.normal(size=k)
            norm = np.linalg.norm(theta)
            if norm > 0:
                theta = theta * (rng.random() * 2 * math.pi) / norm
            h = group_exp(sum(t * a for t, a in zip(theta, basis)))
            d = group_distance(h @ u, v)
            if d < best:
                best = d
                best_theta = theta
        if polish and math.isfinite(best):
            from scipy.optimize import minimize

            def f(theta):
                h = group_exp(sum(t * a for t, a in zip(theta, basis)))
                d = group_distance(h @ u, v)
                return d if math.isfinite(d) else 1e6

            res = minimize(f, best_theta, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400})
            best = min(best, float(res.fun))
        return best
    if label == "other" and H.finite_generators:
        best = base
        for g in H.finite_generators:
            best = min(best, group_distance(g @ u, v))
        return best
    return base


# ---------------------------------------------------------------------------
# curvature of (O(n), b)

def sectional_biinvariant(a1, a2):
    """Sectional curvature of (O(n), b) on the plane spanned by a1, a2."""
    a1 = check_skew(a1)
    a2 = check_skew(a2)
    br = a1 @ a2 - a2 @ a1
    num = 0.25 * biinvariant_inner(br, br)
    den = (biinvariant_inner(a1, a1) * biinvariant_inner(a2, a2)
           - biinvariant_inner(a1, a2) ** 2)
    if den <= 0:
        raise ValueError("a1, a2 do not span a 2-plane")
    return num / den


def ricci_biinvariant(xi):
    """Ricci of (O(n), b) in direction xi: (1/4) sum_a |[xi, u_a]|_b^2 over a
    b-orthonormal basis; equals (n-2)/4 * b(xi, xi)."""
    xi = check_skew(xi)
    n = xi.shape[0]
    total = 0.0
    for a in skew_basis(n):
        a = a / b_norm(a)
        br = xi @ a - a @ xi
        total += biinvariant_inner(br, br)
    return 0.25 * total
