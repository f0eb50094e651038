"""Independent brute-force verifiers: pointwise constraint checks, feasible
polytope vertex enumeration, LP-based decomposition tests, a mean value
coordinates baseline, and analytic single-simplex energy values.

These deliberately avoid the field implementation so they can serve as an
independent second route in tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import BoundaryPoint, DegenerateSimplex
from .geometry import (
    CONTAINS_TOL,
    Cage,
    DEGENERACY_TOL,
    Simplex,
    simplex_bary,
    simplex_heights,
    simplex_volume,
)

# ---------------------------------------------------------------------------
# Small dense LP: min c.x  s.t.  A x = b, x >= 0  (two-phase tableau simplex)


@dataclass
class LPResult:
    status: str  # optimal | infeasible | unbounded
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]
    basis[row] = col


def _run_simplex(T, basis, cost, tol=1e-10, max_iters=20000):
    """Minimize cost over the tableau in place; Bland's rule. Returns status."""
    ncols = T.shape[1] - 1
    for _ in range(max_iters):
        cb = cost[basis]
        reduced = cost[:ncols] - cb @ T[:, :ncols]
        entering = -1
        for j in range(ncols):
            if reduced[j] < -tol:
                entering = j
                break
        if entering < 0:
            return "optimal"
        col = T[:, entering]
        rows = np.nonzero(col > tol)[0]
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[np.abs(ratios - best) <= tol * (1 + abs(best))]
        leave = min(tied, key=lambda r: basis[r])
        _pivot(T, basis, leave, entering)
    raise RuntimeError("simplex iteration limit exceeded")


def solve_lp(c, A, b, tol=1e-9):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    A = A.copy()
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # Phase 1: artificial basis.
    T = np.zeros((m, n + m + 1))
    T[:, :n] = A
    T[:, n:n + m] = np.eye(m)
    T[:, -1] = b
    basis = list(range(n, n + m))
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    status = _run_simplex(T, basis, cost1)
    if status != "optimal":
        return LPResult("infeasible")
    phase1_obj = float(cost1[basis] @ T[:, -1])
    if phase1_obj > 1e-7 * (1 + abs(b).max()):
        return LPResult("infeasible")
    # Drive artificials out of the basis where possible.
    for r in range(m):
        if basis[r] >= n:
            piv = next((j for j in range(n) if abs(T[r, j]) > tol), None)
            if piv is not None:
                _pivot(T, basis, r, piv)
    keep = [r for r in range(m) if basis[r] < n]  # drop redundant rows
    T = np.ascontiguousarray(np.hstack([T[keep][:, :n], T[keep][:, -1:]]))
    basis = [basis[r] for r in keep]

    cost2 = np.asarray(c, dtype=float)
    status = _run_simplex(T, basis, cost2)
    if status != "optimal":
        return LPResult(status)
    x = np.zeros(n)
    for r, bi in enumerate(basis):
        x[bi] = T[r, -1]
    return LPResult("optimal", x, float(c @ x))


# ---------------------------------------------------------------------------
# Pointwise barycentric constraint check


@dataclass
class FeasibilityCertificate:
    point: np.ndarray
    coords: np.ndarray
    feasible: bool
    max_violation: float
    violations: dict = field(default_factory=dict)


def feasibility_check(p, alpha, cage: Cage, tol=1e-6):
    """Direct evaluation of non-negativity, partition of unity, reproduction."""
    p = np.asarray(p, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (cage.num_vertices,):
        raise ValueError(f"expected ({cage.num_vertices},) coords, got {alpha.shape}")
    violations = {
        "nonnegativity": float(max(0.0, -alpha.min())),
        "partition_of_unity": float(abs(alpha.sum() - 1.0)),
        "reproduction": float(np.linalg.norm(alpha @ cage.vertices - p)),
    }
    worst = max(violations.values())
    return FeasibilityCertificate(p, alpha, worst <= tol, worst, violations)


# ---------------------------------------------------------------------------
# Universality (feasible polytope structure) checks


def _constraint_system(cage: Cage, p):
    """Equalities [V; 1] alpha = [p; 1] of the feasible polytope at p."""
    A = np.ones((cage.d + 1, cage.num_vertices))
    A[: cage.d, :] = cage.vertices.T
    b = np.append(np.asarray(p, dtype=float), 1.0)
    return A, b


def _scatter(cage, vertex_ids, lam):
    out = np.zeros(cage.num_vertices)
    out[list(vertex_ids)] = lam
    return out


def enumerate_polytope_vertices(p, cage: Cage, tol=1e-9):
    """All vertices of the feasible coordinate polytope at p, found as basic
    feasible solutions over (d+1)-subsets of cage vertices. Returns a list of
    (subset, full K-vector) pairs."""
    p = np.asarray(p, dtype=float)
    d = cage.d
    out = []
    seen = []
    for subset in combinations(range(cage.num_vertices), d + 1):
        try:
            lam = simplex_bary(p, Simplex(subset), cage)
        except DegenerateSimplex:
            continue
        if lam.min() < -tol:
            continue
        alpha = _scatter(cage, subset, lam)
        if any(np.linalg.norm(alpha - prev) <= 1e-8 for prev in seen):
            continue
        seen.append(alpha)
        out.append((subset, alpha))
    return out


def containing_simplices(p, cage: Cage, tol=CONTAINS_TOL):
    """Unpruned candidate simplices containing p, with their coordinate vectors."""
    out = []
    for subset in combinations(range(cage.num_vertices), cage.d + 1):
        try:
            lam = simplex_bary(p, Simplex(subset), cage)
        except DegenerateSimplex:
            continue
        if lam.min() >= -tol:
            out.append((subset, _scatter(cage, subset, lam)))
    return out


def _decompose_as_convex_combination(alpha, columns, tol=1e-7):
    """Feasibility LP: alpha = sum_j mu_j columns[j], mu >= 0 (sum mu = 1 is
    implied because every column sums to one)."""
    A = np.stack(columns, axis=1)
    res = solve_lp(np.zeros(A.shape[1]), A, alpha)
    if res.status != "optimal":
        return False
    return bool(np.linalg.norm(A @ res.x - alpha) <= tol)


def universality_report(p, cage: Cage, trials=8, rng=None):
    """Structure checks of the feasible polytope at p against simplex coords."""
    if rng is None:
        rng = np.random.default_rng(0)
    p = np.asarray(p, dtype=float)
    d = cage.d
    report = {"point": p.tolist(), "ok": True, "failures": []}

    verts = enumerate_polytope_vertices(p, cage)
    simps = containing_simplices(p, cage)
    simp_coords = [alpha for _, alpha in simps]
    report["num_polytope_vertices"] = len(verts)
    report["num_containing_simplices"] = len(simps)

    # Each polytope vertex has <= d+1 nonzeros and matches simplex coords.
    for subset, alpha in verts:
        if int(np.sum(np.abs(alpha) > 1e-9)) > d + 1:
            report["ok"] = False
            report["failures"].append({"kind": "support", "vertex": alpha.tolist()})
        if not any(np.linalg.norm(alpha - sc) <= 1e-7 for sc in simp_coords):
            report["ok"] = False
            report["failures"].append({"kind": "vertex_match", "vertex": alpha.tolist()})

    # LP vertices from random objectives land on enumerated vertices.
    A, b = _constraint_system(cage, p)
    lp_vertices = []
    for _ in range(max(trials, 4)):
        res = solve_lp(rng.standard_normal(cage.num_vertices), A, b)
        if res.status != "optimal":
            report["ok"] = False
            report["failures"].append({"kind": "lp_status", "status": res.status})
            continue
        lp_vertices.append(res.x)
        if not any(np.linalg.norm(res.x - alpha) <= 1e-6 for _, alpha in verts):
            report["ok"] = False
            report["failures"].append({"kind": "lp_vertex_match", "vertex": res.x.tolist()})

    # Random feasible points decompose over containing-simplex coordinates.
    if lp_vertices:
        for _ in range(trials):
            k = min(len(lp_vertices), 1 + int(rng.integers(1, d + 3)))
            pick = rng.choice(len(lp_vertices), size=k, replace=False)
            w = rng.dirichlet(np.ones(k))
            alpha = np.einsum("k,kn->n", w, np.stack([lp_vertices[i] for i in pick]))
            if not _decompose_as_convex_combination(alpha, simp_coords):
                report["ok"] = False
                report["failures"].append({"kind": "decomposition", "point": alpha.tolist()})
    return report


def universality_check(p, cage: Cage, trials=8, rng=None):
    return bool(universality_report(p, cage, trials, rng)["ok"])


# ---------------------------------------------------------------------------
# Mean value coordinates (2D baseline)


def mean_value_coordinates(p, cage: Cage):
    """Tan-half-angle MVC weights for a 2D cage, normalized to sum one."""
    if cage.d != 2:
        raise ValueError("mean value coordinates are 2D only")
    p = np.asarray(p, dtype=float)
    scale = cage.scale()
    if float(cage.distance_to_boundary(p[None, :])[0]) < 1e-12 * scale:
        raise BoundaryPoint(f"point {p} lies on the cage boundary")
    loop = cage.boundary_loop()
    V = cage.vertices[loop]
    s = V - p
    r = np.linalg.norm(s, axis=1)
    s_next = np.roll(s, -1, axis=0)
    r_next = np.roll(r, -1)
    cross = s[:, 0] * s_next[:, 1] - s[:, 1] * s_next[:, 0]
    dot = np.einsum("kd,kd->k", s, s_next)
    tiny = np.abs(cross) < 1e-14 * scale**2
    if np.any(tiny & (dot < 0)):
        raise BoundaryPoint(f"point {p} lies on a cage edge")
    # Collinear-but-outside-the-segment sees the edge at angle 0: tan(0/2)=0.
    tan_half = np.where(tiny, 0.0, (r * r_next - dot) / np.where(tiny, 1.0, cross))
    w = (np.roll(tan_half, 1) + tan_half) / r
    w = w / w.sum()
    out = np.zeros(cage.num_vertices)
    out[loop] = w
    return out


# ---------------------------------------------------------------------------
# Analytic single-simplex smoothness energies


def analytic_simplex_tv(s: Simplex, cage: Cage):
    """Per-corner total variation of the simplex hat functions over the
    simplex: Vol / h_i."""
    vol = simplex_volume(s, cage)
    return vol / simplex_heights(s, cage)


def analytic_simplex_dirichlet(s: Simplex, cage: Cage):
    """Per-corner Dirichlet energy over the simplex: Vol / h_i^2."""
    vol = simplex_volume(s, cage)
    return vol / simplex_heights(s, cage) ** 2
