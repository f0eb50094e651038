"""Candidate simplex enumeration and the locality-enforcing pruning pass.

Pruning proceeds in three stages: discard degenerate / boundary-crossing /
vertex-covering simplices, keep the min-longest-edge set per cage vertex,
then patch coverage holes from interior samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Sequence

import numpy as np

from .errors import NotCovered, UncoverableRegion
from .geometry import (
    CONTAINS_TOL,
    Cage,
    DEGENERACY_TOL,
    Simplex,
    sample_inside,
    sample_outside,
)

# Strict-interior slack for exterior-sample tests: a sample exactly on a
# simplex edge does not kill the simplex.
STRICT_TOL = 1e-9
# Cage vertices on a simplex edge DO count as contained (collinear guard).
VERTEX_TOL = CONTAINS_TOL

_CHUNK = 256


@dataclass
class PruningConfig:
    max_per_vertex: int = 28
    max_per_interior_point: int = 5
    n_outside: int = 4096
    n_inside: int = 4096
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_per_vertex < 1:
            raise ValueError("max_per_vertex must be >= 1")
        if self.max_per_interior_point < 0:
            raise ValueError("max_per_interior_point must be >= 0")
        if self.n_outside < 1 or self.n_inside < 1:
            raise ValueError("sample counts must be >= 1")

    @classmethod
    def defaults(cls, d, rng_seed=0):
        if d == 2:
            return cls(max_per_vertex=28, max_per_interior_point=5,
                       n_outside=4096, n_inside=4096, rng_seed=rng_seed)
        return cls(max_per_vertex=80, max_per_interior_point=5,
                   n_outside=32768, n_inside=32768, rng_seed=rng_seed)

    def to_json_dict(self):
        return {
            "max_per_vertex": self.max_per_vertex,
            "max_per_interior_point": self.max_per_interior_point,
            "n_outside": self.n_outside,
            "n_inside": self.n_inside,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json_dict(cls, data):
        return cls(**data)


@dataclass
class VirtualSimplexSet:
    simplices: List[Simplex]
    per_vertex_index: List[np.ndarray] = field(default_factory=list)

    def __len__(self):
        return len(self.simplices)

    @classmethod
    def build(cls, simplices: Sequence[Simplex], num_cage_vertices: int):
        ordered = sorted({tuple(sorted(s.vertex_ids)) for s in simplices})
        simps = [Simplex(t) for t in ordered]
        per_vertex = [[] for _ in range(num_cage_vertices)]
        for idx, s in enumerate(simps):
            for v in s.vertex_ids:
                per_vertex[v].append(idx)
        return cls(simps, [np.array(lst, dtype=int) for lst in per_vertex])

    def vertex_id_array(self):
        return np.array([s.vertex_ids for s in self.simplices], dtype=int)

    def set_hash(self):
        import hashlib

        blob = repr([s.vertex_ids for s in self.simplices]).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json_dict(self, config: Optional[PruningConfig] = None):
        data = {"simplices": [list(s.vertex_ids) for s in self.simplices]}
        if config is not None:
            data["config"] = config.to_json_dict()
        return data

    @classmethod
    def from_json_dict(cls, data, num_cage_vertices):
        return cls.build([Simplex(tuple(t)) for t in data["simplices"]], num_cage_vertices)


def candidate_count(num_vertices, d):
    return math.comb(num_vertices, d + 1)


def enumerate_all(cage: Cage):
    """(count, iterator) over all C(K, d+1) vertex-index combinations."""
    count = candidate_count(cage.num_vertices, cage.d)
    gen = (Simplex(c) for c in combinations(range(cage.num_vertices), cage.d + 1))
    return count, gen


def _candidate_arrays(cage: Cage, candidates=None):
    """Candidate simplices as an (n, d+1) id array plus their geometry;
    defaults to the full C(K, d+1) enumeration."""
    if candidates is None:
        ids = np.array(
            list(combinations(range(cage.num_vertices), cage.d + 1)), dtype=int
        )
    else:
        ids = np.array([tuple(sorted(s.vertex_ids)) for s in candidates], dtype=int)
        ids = ids.reshape(-1, cage.d + 1)
    corners = cage.vertices[ids]  # (n, d+1, d)
    d = cage.d
    mats = np.ones((ids.shape[0], d + 1, d + 1))
    mats[:, :d, :] = np.swapaxes(corners, 1, 2)
    dets = np.linalg.det(mats)
    return ids, corners, mats, dets


def _bary_chunk(inv, points):
    hom = np.concatenate([points, np.ones((points.shape[0], 1))], axis=1)
    return np.einsum("jab,nb->nja", inv, hom)


def _covered_by_any(inv, points, tol):
    """(N,) bool: point has all-bary >= -tol for at least one simplex."""
    out = np.zeros(points.shape[0], dtype=bool)
    for start in range(0, points.shape[0], _CHUNK):
        chunk = points[start:start + _CHUNK]
        lam = _bary_chunk(inv, chunk)
        out[start:start + _CHUNK] = np.any(lam.min(axis=2) >= -tol, axis=1)
    return out


def _longest_edges(corners):
    n, k, _ = corners.shape
    longest = np.zeros(n)
    for i in range(k):
        for j in range(i + 1, k):
            e = np.linalg.norm(corners[:, i] - corners[:, j], axis=1)
            longest = np.maximum(longest, e)
    return longest


def _min_longest_edge_subset(indices, longest, ids, m):
    """The m candidates with smallest longest edge; ties broken
    lexicographically on the vertex-id tuple for determinism."""
    order = sorted(indices, key=lambda i: (longest[i], tuple(ids[i])))
    return order[:m]


def prune(cage: Cage, cfg: PruningConfig, interior_samples=None, candidates=None):
    """Run the full pruning pass and return the retained simplex set.

    `interior_samples` overrides the random coverage samples (e.g. the
    vertices of a known interior mesh); `candidates` restricts the input
    pool instead of enumerating every vertex combination."""
    rng = np.random.default_rng(cfg.rng_seed)
    d = cage.d
    ids, corners, mats, dets = _candidate_arrays(cage, candidates)
    scale = cage.scale()

    keep = np.abs(dets) >= DEGENERACY_TOL * scale**d
    inv = np.zeros_like(mats)
    inv[keep] = np.linalg.inv(mats[keep])

    # Exterior samples: any sample strictly inside a candidate kills it.
    x_out = sample_outside(cage, cfg.n_outside, rng)
    live = np.nonzero(keep)[0]
    hit = np.zeros(live.size, dtype=bool)
    for start in range(0, x_out.shape[0], _CHUNK):
        lam = _bary_chunk(inv[live], x_out[start:start + _CHUNK])
        hit |= np.any(lam.min(axis=2) > STRICT_TOL, axis=0)
    keep[live[hit]] = False

    # Cage vertices: a non-corner vertex inside or on the boundary kills it.
    live = np.nonzero(keep)[0]
    lam_v = _bary_chunk(inv[live], cage.vertices)  # (K, n_live, d+1)
    inside_v = lam_v.min(axis=2) >= -VERTEX_TOL
    corner_mask = np.zeros_like(inside_v)
    cols = np.arange(live.size)
    for a in range(d + 1):
        corner_mask[ids[live, a], cols] = True
    keep[live[np.any(inside_v & ~corner_mask, axis=0)]] = False

    survivors = np.nonzero(keep)[0]
    longest = _longest_edges(corners)

    # Min-longest-edge pass, per cage vertex.
    incident = [[] for _ in range(cage.num_vertices)]
    for cand in survivors:
        for v in ids[cand]:
            incident[v].append(int(cand))
    retained = set()
    for v in range(cage.num_vertices):
        retained.update(_min_longest_edge_subset(incident[v], longest, ids, cfg.max_per_vertex))

    # Coverage pass over interior samples.
    if interior_samples is None:
        x_in = sample_inside(cage, cfg.n_inside, rng)
    else:
        x_in = np.atleast_2d(np.asarray(interior_samples, dtype=float))
    if x_in.shape[0] and cfg.max_per_interior_point > 0:
        surv_pos = {int(c): k for k, c in enumerate(survivors)}
        retained_mask = np.zeros(survivors.size, dtype=bool)
        retained_mask[[surv_pos[c] for c in retained]] = True
        surv_inv = inv[survivors]
        for start in range(0, x_in.shape[0], _CHUNK):
            chunk = x_in[start:start + _CHUNK]
            lam = _bary_chunk(surv_inv, chunk)
            contained = lam.min(axis=2) >= -CONTAINS_TOL  # (n_chunk, n_surv)
            for row in range(chunk.shape[0]):
                if np.any(contained[row] & retained_mask):
                    continue
                p = chunk[row]
                closest = int(np.argmin(np.linalg.norm(cage.vertices - p, axis=1)))
                pool = [c for c in incident[closest] if contained[row, surv_pos[c]]]
                if not pool:
                    # Closest vertex has no covering candidate; fall back to any.
                    pool = [int(survivors[k]) for k in np.nonzero(contained[row])[0]]
                if not pool:
                    raise UncoverableRegion(p)
                added = _min_longest_edge_subset(pool, longest, ids,
                                                 cfg.max_per_interior_point)
                retained.update(added)
                retained_mask[[surv_pos[c] for c in added]] = True

    simplices = [Simplex(tuple(ids[c])) for c in sorted(retained)]
    return VirtualSimplexSet.build(simplices, cage.num_vertices)


def valid_at(p, vss: VirtualSimplexSet, cage: Cage, tol=CONTAINS_TOL):
    """Indices of retained simplices containing p; raises NotCovered if none."""
    p = np.asarray(p, dtype=float)
    ids = vss.vertex_id_array()
    d = cage.d
    mats = np.ones((ids.shape[0], d + 1, d + 1))
    mats[:, :d, :] = np.swapaxes(cage.vertices[ids], 1, 2)
    lam = np.einsum("jab,b->ja", np.linalg.inv(mats), np.append(p, 1.0))
    hits = np.nonzero(lam.min(axis=1) >= -tol)[0]
    if hits.size == 0:
        raise NotCovered(f"point {p} lies in no retained simplex")
    return hits.tolist()
