"""Cage, simplex and mesh primitives: barycentric solves, containment,
signed distances, and rejection sampling.

Everything here is pure and reentrant; no function mutates its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateSimplex, SamplingExhausted, ShapeError

# Simplex is degenerate when |det| of its homogeneous matrix falls below
# this times (bounding-box scale)^d.
DEGENERACY_TOL = 1e-12
# Default containment slack: shared-facet points belong to both neighbors.
CONTAINS_TOL = 1e-9

# Fixed, irrational-ish ray direction for 3D parity tests; avoids hitting
# mesh edges/vertices for all but adversarial inputs.
_RAY_DIR_3D = np.array([0.285690537034, 0.488613457892, 0.824356124019])
_RAY_DIR_3D /= np.linalg.norm(_RAY_DIR_3D)


@dataclass(frozen=True)
class Simplex:
    """A virtual simplex given as (d+1) distinct cage-vertex indices."""

    vertex_ids: tuple

    def __post_init__(self):
        ids = tuple(int(i) for i in self.vertex_ids)
        if len(set(ids)) != len(ids):
            raise ValueError(f"simplex has repeated vertex ids: {ids}")
        object.__setattr__(self, "vertex_ids", ids)

    def __len__(self):
        return len(self.vertex_ids)


class Cage:
    """Closed boundary polytope (polygon in 2D, triangle surface in 3D)."""

    def __init__(self, vertices, facets, check=True):
        self.vertices = np.asarray(vertices, dtype=float)
        self.facets = np.asarray(facets, dtype=int)
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise ShapeError(f"cage vertices must be (K,2) or (K,3), got {self.vertices.shape}")
        self.d = self.vertices.shape[1]
        if self.facets.ndim != 2 or self.facets.shape[1] != self.d:
            raise ShapeError(
                f"cage facets must be (F,{self.d}) for d={self.d}, got {self.facets.shape}"
            )
        self._volume_estimate = None
        if check:
            self._validate()

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    # K is the conventional name for the cage vertex count.
    K = num_vertices

    def _validate(self):
        K = self.num_vertices
        if K < self.d + 1:
            raise ValueError(f"cage needs at least d+1={self.d + 1} vertices, got {K}")
        if self.facets.size and (self.facets.min() < 0 or self.facets.max() >= K):
            raise ValueError("facet index out of range")
        if self.d == 2:
            # Closed oriented polyline: every vertex used has exactly one
            # outgoing and one incoming edge.
            out_deg = np.bincount(self.facets[:, 0], minlength=K)
            in_deg = np.bincount(self.facets[:, 1], minlength=K)
            used = (out_deg + in_deg) > 0
            if not np.all(out_deg[used] == 1) or not np.all(in_deg[used] == 1):
                raise ValueError("2D cage boundary is not a closed oriented polyline")
        else:
            # Closed oriented triangle surface: each directed edge appears once.
            edges = {}
            for tri in self.facets:
                for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                    key = (int(a), int(b))
                    if key in edges:
                        raise ValueError("3D cage has duplicated directed edge; not orientable")
                    edges[key] = True
            for a, b in list(edges):
                if (b, a) not in edges:
                    raise ValueError("3D cage boundary is not closed (unpaired edge)")

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def scale(self):
        lo, hi = self.bbox()
        return float((hi - lo).max())

    def normalized(self):
        """Rescale so the bounding box fits the unit box, aspect preserved."""
        lo, hi = self.bbox()
        s = float((hi - lo).max())
        if s <= 0:
            raise ValueError("cage has zero extent")
        return Cage((self.vertices - lo) / s, self.facets, check=False)

    def boundary_loop(self):
        """Ordered vertex ids of the 2D boundary polygon."""
        if self.d != 2:
            raise ValueError("boundary_loop is 2D only")
        succ = {int(a): int(b) for a, b in self.facets}
        start = int(self.facets[0, 0])
        loop = [start]
        cur = succ[start]
        while cur != start:
            loop.append(cur)
            cur = succ[cur]
            if len(loop) > len(succ) + 1:
                raise ValueError("2D cage edges do not form a single loop")
        return loop

    def contains(self, points):
        """Even-odd ray-cast containment for an (N,d) array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.d == 2:
            return _raycast_parity_2d(points, self.vertices, self.facets)
        return _raycast_parity_3d(points, self.vertices, self.facets)

    def distance_to_boundary(self, points):
        """Unsigned min distance from each point to any boundary facet."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.d == 2:
            a = self.vertices[self.facets[:, 0]]
            b = self.vertices[self.facets[:, 1]]
            best = np.full(points.shape[0], np.inf)
            for e in range(a.shape[0]):
                best = np.minimum(best, _point_segment_distance(points, a[e], b[e]))
            return best
        best = np.full(points.shape[0], np.inf)
        for tri in self.facets:
            va, vb, vc = self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]
            best = np.minimum(best, _point_triangle_distance(points, va, vb, vc))
        return best

    def volume_estimate(self, n=1 << 17, seed=2024):
        """Monte Carlo cage volume via bounding-box hit rate (cached)."""
        if self._volume_estimate is None:
            rng = np.random.default_rng(seed)
            lo, hi = self.bbox()
            draws = rng.uniform(lo, hi, size=(n, self.d))
            rate = float(np.mean(self.contains(draws)))
            self._volume_estimate = rate * float(np.prod(hi - lo))
        return self._volume_estimate

    def to_json_dict(self):
        return {
            "d": int(self.d),
            "vertices": self.vertices.tolist(),
            "facets": self.facets.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data):
        cage = cls(data["vertices"], data["facets"])
        if cage.d != int(data["d"]):
            raise ShapeError(f"cage JSON says d={data['d']} but vertices are {cage.d}D")
        return cage


# ---------------------------------------------------------------------------
# Simplex barycentric solves


def simplex_matrix(simplex: Simplex, cage: Cage):
    """Homogeneous (d+1)x(d+1) matrix whose columns are [v_i; 1]."""
    V = cage.vertices[list(simplex.vertex_ids)]
    M = np.ones((cage.d + 1, cage.d + 1))
    M[: cage.d, :] = V.T
    return M


def simplex_is_degenerate(simplex: Simplex, cage: Cage):
    M = simplex_matrix(simplex, cage)
    return abs(np.linalg.det(M)) < DEGENERACY_TOL * cage.scale() ** cage.d


def simplex_bary(p, simplex: Simplex, cage: Cage):
    """Barycentric coordinates of p wrt the simplex; entries may be negative
    when p is outside. Raises DegenerateSimplex when the solve is singular."""
    p = np.asarray(p, dtype=float)
    M = simplex_matrix(simplex, cage)
    if abs(np.linalg.det(M)) < DEGENERACY_TOL * cage.scale() ** cage.d:
        raise DegenerateSimplex(f"simplex {simplex.vertex_ids} is degenerate")
    rhs = np.append(p, 1.0)
    return np.linalg.solve(M, rhs)


def contains(p, simplex: Simplex, cage: Cage, tol=CONTAINS_TOL):
    """True iff all barycentric entries are >= -tol. Degenerates contain nothing."""
    try:
        lam = simplex_bary(p, simplex, cage)
    except DegenerateSimplex:
        return False
    return bool(np.all(lam >= -tol))


def signed_distance_to_boundary(p, simplex: Simplex, cage: Cage):
    """Euclidean distance from p to the simplex boundary, positive inside."""
    p = np.asarray(p, dtype=float)
    lam = simplex_bary(p, simplex, cage)
    V = cage.vertices[list(simplex.vertex_ids)]
    if cage.d == 2:
        dist = np.inf
        for i, j in ((0, 1), (1, 2), (2, 0)):
            dist = min(dist, float(_point_segment_distance(p[None, :], V[i], V[j])[0]))
    else:
        dist = np.inf
        for tri in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)):
            dist = min(
                dist, float(_point_triangle_distance(p[None, :], V[tri[0]], V[tri[1]], V[tri[2]])[0])
            )
    sign = 1.0 if np.min(lam) >= 0.0 else -1.0
    return sign * dist


def simplex_volume(simplex: Simplex, cage: Cage):
    M = simplex_matrix(simplex, cage)
    return abs(np.linalg.det(M)) / np.prod(np.arange(1, cage.d + 1))


def simplex_heights(simplex: Simplex, cage: Cage):
    """Per-vertex distance to the opposite facet (h_i = d*Vol/Vol_facet)."""
    if simplex_is_degenerate(simplex, cage):
        raise DegenerateSimplex(f"simplex {simplex.vertex_ids} is degenerate")
    V = cage.vertices[list(simplex.vertex_ids)]
    vol = simplex_volume(simplex, cage)
    d = cage.d
    heights = np.empty(d + 1)
    for i in range(d + 1):
        other = np.delete(np.arange(d + 1), i)
        if d == 2:
            facet_vol = float(np.linalg.norm(V[other[1]] - V[other[0]]))
        else:
            e1 = V[other[1]] - V[other[0]]
            e2 = V[other[2]] - V[other[0]]
            facet_vol = 0.5 * float(np.linalg.norm(np.cross(e1, e2)))
        heights[i] = d * vol / facet_vol
    return heights


# ---------------------------------------------------------------------------
# Vectorized helpers


def _point_segment_distance(points, a, b):
    """Distance from (N,d) points to segment ab."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=-1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(points - proj, axis=-1)


def _point_triangle_distance(points, a, b, c):
    """Distance from (N,3) points to triangle abc (Ericson's region method)."""
    ab = b - a
    ac = c - a
    ap = points - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = points - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = points - c
    d5 = cp @ ab
    d6 = cp @ ac

    closest = np.empty_like(points)
    done = np.zeros(points.shape[0], dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        closest[m] = value if value.ndim == 1 else value[m]
        done[m] = True

    assign((d1 <= 0) & (d2 <= 0), a)
    assign((d3 >= 0) & (d4 <= d3), b)
    assign((d6 >= 0) & (d5 <= d6), c)

    vc = d1 * d4 - d3 * d2
    m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = np.where(d1 - d3 != 0, d1 / np.where(d1 - d3 == 0, 1.0, d1 - d3), 0.0)
    assign(m, a + t[:, None] * ab)

    vb = d5 * d2 - d1 * d6
    m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = np.where(d2 - d6 != 0, d2 / np.where(d2 - d6 == 0, 1.0, d2 - d6), 0.0)
    assign(m, a + t[:, None] * ac)

    va = d3 * d6 - d5 * d4
    m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = (d4 - d3) + (d5 - d6)
    t = np.where(denom != 0, (d4 - d3) / np.where(denom == 0, 1.0, denom), 0.0)
    assign(m, b + t[:, None] * (c - b))

    # Interior region: project onto the plane.
    rest = ~done
    if np.any(rest):
        denom = va + vb + vc
        denom = np.where(denom == 0, 1.0, denom)
        v = vb / denom
        w = vc / denom
        closest[rest] = a + v[rest, None] * ab + w[rest, None] * ac
    return np.linalg.norm(points - closest, axis=-1)


def _raycast_parity_2d(points, vertices, edges):
    a = vertices[edges[:, 0]]
    b = vertices[edges[:, 1]]
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    ay, by = a[:, 1][None, :], b[:, 1][None, :]
    straddles = (ay > py) != (by > py)
    dy = np.where(b[:, 1] - a[:, 1] == 0, 1.0, b[:, 1] - a[:, 1])[None, :]
    x_int = a[:, 0][None, :] + (py - ay) * (b[:, 0] - a[:, 0])[None, :] / dy
    crossings = np.sum(straddles & (px < x_int), axis=1)
    return crossings % 2 == 1


def _raycast_parity_3d(points, vertices, tris):
    u = _RAY_DIR_3D
    a = vertices[tris[:, 0]]
    e1 = vertices[tris[:, 1]] - a
    e2 = vertices[tris[:, 2]] - a
    h = np.cross(np.broadcast_to(u, e2.shape), e2)
    det = np.einsum("fd,fd->f", e1, h)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(det == 0, 1.0, det), 0.0)
    crossings = np.zeros(points.shape[0], dtype=int)
    for f in range(tris.shape[0]):
        if not ok[f]:
            continue
        s = points - a[f]
        v0 = (s @ h[f]) * inv[f]
        q = np.cross(s, e1[f])
        v1 = (q @ u) * inv[f]
        t = (q @ e2[f]) * inv[f]
        hit = (t > 1e-12) & (v0 >= 0) & (v1 >= 0) & (v0 + v1 <= 1)
        crossings += hit
    return crossings % 2 == 1


# ---------------------------------------------------------------------------
# Rejection sampling

_MAX_DRAW_FACTOR = 10_000


def sample_inside(cage: Cage, n, rng):
    """n points uniform in the cage interior (rejection from its bbox)."""
    return _rejection_sample(cage, n, rng, want_inside=True, expand=0.0)


def sample_outside(cage: Cage, n, rng, expand=0.25):
    """n points outside the cage, drawn from its bbox expanded by `expand`
    times the bbox scale per side (the ambient shell around the shape)."""
    return _rejection_sample(cage, n, rng, want_inside=False, expand=expand)


def _rejection_sample(cage, n, rng, want_inside, expand):
    n = int(n)
    if n == 0:
        return np.empty((0, cage.d))
    if n < 0:
        raise ValueError("sample count must be >= 0")
    lo, hi = cage.bbox()
    pad = expand * cage.scale()
    lo = lo - pad
    hi = hi + pad
    out = []
    collected = 0
    drawn = 0
    budget = _MAX_DRAW_FACTOR * n
    chunk = max(4 * n, 1024)
    while collected < n:
        if drawn >= budget:
            side = "inside" if want_inside else "outside"
            raise SamplingExhausted(
                f"collected {collected}/{n} {side} samples after {drawn} draws"
            )
        m = min(chunk, budget - drawn)
        draws = rng.uniform(lo, hi, size=(m, cage.d))
        drawn += m
        keep = cage.contains(draws)
        if not want_inside:
            keep = ~keep
        pts = draws[keep]
        out.append(pts)
        collected += pts.shape[0]
    return np.concatenate(out, axis=0)[:n]


# ---------------------------------------------------------------------------
# Batched per-simplex queries (precomputed inverses; used by the field)


def _min_last(arr):
    """min over the (tiny) last axis, unrolled; much faster than arr.min(-1)."""
    out = np.minimum(arr[..., 0], arr[..., 1])
    for i in range(2, arr.shape[-1]):
        out = np.minimum(out, arr[..., i])
    return out


class SimplexBatch:
    """Vectorized barycentric/containment/distance queries for a fixed
    list of non-degenerate simplices over one cage."""

    def __init__(self, cage: Cage, simplices: Sequence[Simplex]):
        self.cage = cage
        self.simplices = list(simplices)
        d = cage.d
        J = len(self.simplices)
        self.vertex_ids = np.array([s.vertex_ids for s in self.simplices], dtype=int).reshape(
            J, d + 1
        )
        mats = np.ones((J, d + 1, d + 1))
        corners = cage.vertices[self.vertex_ids]  # (J, d+1, d)
        mats[:, :d, :] = np.swapaxes(corners, 1, 2)
        dets = np.linalg.det(mats)
        bad = np.abs(dets) < DEGENERACY_TOL * cage.scale() ** d
        if np.any(bad):
            raise DegenerateSimplex(f"degenerate simplices at indices {np.nonzero(bad)[0]}")
        self.inverses = np.linalg.inv(mats)
        self.corners = corners
        self._typed = {}

    def __len__(self):
        return len(self.simplices)

    def _data(self, dtype):
        """Per-dtype cached geometry (edge tables etc.) for the hot paths."""
        key = np.dtype(dtype)
        if key not in self._typed:
            d = self.cage.d
            J = len(self.simplices)
            # (d+1, J*(d+1)) layout turns the barycentric solve into one gemm:
            # bary_mat[b, j*(d+1)+a] = inverses[j, a, b]
            bary_mat = np.ascontiguousarray(
                self.inverses.transpose(2, 0, 1).reshape(d + 1, J * (d + 1))
            )
            entry = {
                "inverses": self.inverses.astype(key),
                "corners": self.corners.astype(key),
                "bary_mat": bary_mat.astype(key),
            }
            if d == 2:
                edges = []
                for i, j in ((0, 1), (1, 2), (2, 0)):
                    a = entry["corners"][:, i]
                    ab = entry["corners"][:, j] - a
                    len2 = (ab * ab).sum(axis=1)
                    inv_len2 = np.where(len2 == 0, 1.0, 1.0 / len2).astype(key)
                    edges.append((a, ab, inv_len2))
                entry["edges"] = edges
            # Heights h_i over the facet opposite corner i: |lam_i| * h_i is
            # the distance to that facet's supporting line/plane.
            J = len(self.simplices)
            heights = np.empty((J, d + 1))
            for jj, s in enumerate(self.simplices):
                heights[jj] = simplex_heights(s, self.cage)
            entry["heights"] = heights.astype(key)
            self._typed[key] = entry
        return self._typed[key]

    def bary(self, points, dtype=np.float64):
        """(N, J, d+1) barycentric coordinates of each point in each simplex."""
        points = np.atleast_2d(np.asarray(points, dtype=dtype))
        n = points.shape[0]
        d = self.cage.d
        hom = np.concatenate([points, np.ones((n, 1), dtype=dtype)], axis=1)
        flat = hom @ self._data(dtype)["bary_mat"]
        return flat.reshape(n, len(self), d + 1)

    def contains(self, points, tol=CONTAINS_TOL, lam=None):
        if lam is None:
            lam = self.bary(points)
        return _min_last(lam) >= -tol

    def signed_distance(self, points, lam=None, dtype=np.float64):
        """(N, J) signed distance to each simplex boundary, positive inside."""
        points = np.atleast_2d(np.asarray(points, dtype=dtype))
        if lam is None:
            lam = self.bary(points, dtype=dtype)
        d = self.cage.d
        N, J = points.shape[0], len(self)
        data = self._data(dtype)
        if d == 2:
            px, py = points[:, 0][:, None], points[:, 1][:, None]
            best = None
            for a, ab, inv_len2 in data["edges"]:
                apx = px - a[None, :, 0]
                apy = py - a[None, :, 1]
                t = np.clip((apx * ab[None, :, 0] + apy * ab[None, :, 1]) * inv_len2,
                            0.0, 1.0)
                dx = apx - t * ab[None, :, 0]
                dy = apy - t * ab[None, :, 1]
                d2 = dx * dx + dy * dy
                best = d2 if best is None else np.minimum(best, d2)
            dist = np.sqrt(best)
        else:
            corners = data["corners"]
            dist = np.full((N, J), np.inf, dtype=dtype)
            for tri in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)):
                for j in range(J):
                    va, vb, vc = corners[j, tri[0]], corners[j, tri[1]], corners[j, tri[2]]
                    dist[:, j] = np.minimum(
                        dist[:, j],
                        _point_triangle_distance(points, va, vb, vc).astype(dtype),
                    )
        sign = np.where(_min_last(lam) >= 0.0, 1.0, -1.0).astype(dtype)
        return sign * dist

    def signed_distance_clipped(self, points, lam, band, dtype=np.float64):
        """Signed boundary distance, exact within +-band of the boundary and
        clamped to +-band outside it (sufficient for saturating ramps).

        Uses |lam_i| * h_i (supporting-line distances) to prescreen: the true
        facet distance is never smaller, so pairs whose minimum line distance
        exceeds `band` are safely saturated."""
        points = np.atleast_2d(np.asarray(points, dtype=dtype))
        data = self._data(dtype)
        heights = data["heights"]  # (J, d+1)
        line_min = np.abs(lam[:, :, 0]) * heights[None, :, 0]
        for i in range(1, lam.shape[2]):
            np.minimum(line_min, np.abs(lam[:, :, i]) * heights[None, :, i], out=line_min)
        sign = np.where(_min_last(lam) >= 0.0, 1.0, -1.0).astype(dtype)
        out = sign * np.minimum(line_min, np.asarray(band, dtype=dtype))
        needs = line_min < band
        if not np.any(needs):
            return out
        rows, cols = np.nonzero(needs)
        sub_pts = points[rows]
        if self.cage.d == 2:
            best = None
            for a, ab, inv_len2 in data["edges"]:
                apx = sub_pts[:, 0] - a[cols, 0]
                apy = sub_pts[:, 1] - a[cols, 1]
                t = np.clip((apx * ab[cols, 0] + apy * ab[cols, 1]) * inv_len2[cols],
                            0.0, 1.0)
                dx = apx - t * ab[cols, 0]
                dy = apy - t * ab[cols, 1]
                d2 = dx * dx + dy * dy
                best = d2 if best is None else np.minimum(best, d2)
            exact = np.sqrt(best)
        else:
            corners = data["corners"]
            exact = np.full(rows.shape[0], np.inf, dtype=dtype)
            for tri in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)):
                for j in np.unique(cols):
                    sel = cols == j
                    va, vb, vc = corners[j, tri[0]], corners[j, tri[1]], corners[j, tri[2]]
                    exact[sel] = np.minimum(
                        exact[sel],
                        _point_triangle_distance(sub_pts[sel], va, vb, vc).astype(dtype),
                    )
        out[rows, cols] = sign[rows, cols] * np.minimum(exact, band)
        return out


# ---------------------------------------------------------------------------
# Interior meshes


class InteriorMesh:
    """Triangle mesh living inside a cage (2D domain mesh or 3D surface)."""

    def __init__(self, vertices, elements):
        self.vertices = np.asarray(vertices, dtype=float)
        self.elements = np.asarray(elements, dtype=int)
        if self.elements.ndim != 2 or self.elements.shape[1] != 3:
            raise ShapeError(f"elements must be (M,3) triangles, got {self.elements.shape}")
        n = self.vertices.shape[0]
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            raise ValueError("element index out of range")
        nbrs = [set() for _ in range(n)]
        for tri in self.elements:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                nbrs[a].add(int(b))
                nbrs[b].add(int(a))
        self.neighbors = [np.array(sorted(s), dtype=int) for s in nbrs]

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    def edges(self):
        """Unique undirected edges as an (E,2) array."""
        seen = set()
        for tri in self.elements:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                seen.add((min(int(a), int(b)), max(int(a), int(b))))
        return np.array(sorted(seen), dtype=int).reshape(-1, 2)

    def element_areas(self):
        a = self.vertices[self.elements[:, 0]]
        b = self.vertices[self.elements[:, 1]]
        c = self.vertices[self.elements[:, 2]]
        u = b - a
        v = c - a
        if self.vertices.shape[1] == 2:
            return 0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        return 0.5 * np.linalg.norm(np.cross(u, v), axis=1)

    def total_area(self):
        return float(self.element_areas().sum())

    def uniform_laplacian(self, values):
        """Umbrella Laplacian per vertex: mean of neighbor values minus own."""
        values = np.asarray(values, dtype=float)
        out = np.zeros_like(values)
        for i, nbr in enumerate(self.neighbors):
            if nbr.size == 0:
                continue
            out[i] = values[nbr].mean(axis=0) - values[i]
        return out

    def validate_inside(self, cage: Cage):
        inside = cage.contains(self.vertices)
        if not np.all(inside):
            bad = np.nonzero(~inside)[0]
            raise ValueError(f"mesh vertices outside the cage: {bad[:8]}")

    def sample_surface(self, n, rng):
        """Area-weighted uniform samples: (element index, barycentric, point)."""
        areas = self.element_areas()
        probs = areas / areas.sum()
        tri_idx = rng.choice(len(areas), size=n, p=probs)
        r1 = np.sqrt(rng.uniform(size=n))
        r2 = rng.uniform(size=n)
        bary = np.stack([1 - r1, r1 * (1 - r2), r1 * r2], axis=1)
        pts = self.barycentric_points(tri_idx, bary)
        return tri_idx, bary, pts

    def barycentric_points(self, tri_idx, bary):
        tris = self.elements[tri_idx]
        return np.einsum("nk,nkd->nd", bary, self.vertices[tris])


def grid_rectangle_mesh(lo, hi, nx, ny):
    """Structured triangulated rectangle [lo, hi] with (nx+1)x(ny+1) vertices."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], ny + 1)
    verts = np.array([[x, y] for y in ys for x in xs])
    tris = []
    for j in range(ny):
        for i in range(nx):
            v00 = j * (nx + 1) + i
            v10 = v00 + 1
            v01 = v00 + (nx + 1)
            v11 = v01 + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return InteriorMesh(verts, np.array(tris, dtype=int))
