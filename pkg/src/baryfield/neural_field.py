"""Trainable field mapping interior points to masked categorical
distributions over retained simplices, and the coordinate evaluator on top.

The heavy lifting (encoding, dense layers) runs in the parameter dtype
(float32 by default); barycentric geometry and the final convex combination
always run in float64 so the evaluator meets the constraint tolerances.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .energies import MollifierParams, mollifier_ramp
from .errors import NotCovered, ShapeError
from .geometry import CONTAINS_TOL, Cage, SimplexBatch, _min_last
from .simplex_enum import VirtualSimplexSet

_HASH_PRIMES = (1, 2654435761, 805459861)


def _softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus_and_sigmoid(x):
    """softplus(x) and its derivative sigmoid(x), sharing one exp."""
    t = np.exp(-np.abs(x))
    sp = np.log1p(t) + np.maximum(x, 0.0)
    sg = np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    return sp, sg


@dataclass
class HashGridConfig:
    levels: int = 16
    features_per_level: int = 4
    log2_table_size: int = 15
    base_resolution: int = 16
    growth_factor: float = 1.5

    @property
    def table_size(self):
        return 1 << self.log2_table_size

    @property
    def output_dim(self):
        return self.levels * self.features_per_level

    def to_json_dict(self):
        return {
            "levels": self.levels,
            "features_per_level": self.features_per_level,
            "log2_table_size": self.log2_table_size,
            "base_resolution": self.base_resolution,
            "growth_factor": self.growth_factor,
        }

    @classmethod
    def from_json_dict(cls, data):
        return cls(**data)


class HashGridEncoding:
    """Multi-level spatially hashed feature grid with smoothstep-weighted
    multilinear interpolation; continuous (C1) in the input.

    Tables for all levels live in one (levels*table_size, F) array; the
    public `tables` views alias it, so in-place optimizer updates stay
    coherent with the fused lookup path."""

    def __init__(self, config: HashGridConfig, d, stacked_tables):
        self.config = config
        self.d = d
        T = config.table_size
        self.stacked = stacked_tables  # (levels*T, F)
        self.tables = [self.stacked[l * T:(l + 1) * T] for l in range(config.levels)]
        self.resolutions = np.array(
            [int(np.floor(config.base_resolution * config.growth_factor**l))
             for l in range(config.levels)], dtype=np.int64
        )
        self._offsets = np.array(
            [[(c >> k) & 1 for k in range(d)] for c in range(1 << d)], dtype=np.int64
        )
        self._level_offsets = (np.arange(config.levels, dtype=np.int64) * T)

    @classmethod
    def init_random(cls, config, d, rng, dtype=np.float32):
        stacked = rng.uniform(
            -1e-4, 1e-4,
            size=(config.levels * config.table_size, config.features_per_level),
        ).astype(dtype)
        return cls(config, d, stacked)

    def _corner_indices(self, points):
        """(L, n, C) int64 indices into the stacked table plus (L, n, d) frac.

        Lattice math runs in float32/int32: resolutions stay below 2^31 and
        float32 grid snapping is immaterial (the encoding is continuous)."""
        pts32 = points.astype(np.float32)
        res32 = self.resolutions.astype(np.float32)
        scaled = pts32[None, :, :] * res32[:, None, None]  # (L,n,d)
        cell = np.floor(scaled)
        frac = scaled - cell
        cell = cell.astype(np.int32)
        corner = cell[:, :, None, :] + self._offsets.astype(np.int32)[None, None, :, :]
        acc = corner[..., 0].astype(np.uint32) * np.uint32(_HASH_PRIMES[0])
        for k in range(1, self.d):
            acc = acc ^ (corner[..., k].astype(np.uint32) * np.uint32(_HASH_PRIMES[k]))
        idx = (acc & np.uint32(self.config.table_size - 1)).astype(np.int64)
        idx += self._level_offsets[:, None, None]
        return idx, frac

    def forward(self, points, need_cache=False):
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        F = self.config.features_per_level
        L = self.config.levels
        dtype = self.stacked.dtype
        idx, frac = self._corner_indices(points)
        frac = frac.astype(dtype)
        sw = frac * frac * (3.0 - 2.0 * frac)  # smoothstep per axis (L,n,d)
        w = np.ones((L, n, self._offsets.shape[0]), dtype=dtype)
        for k in range(self.d):
            on = self._offsets[:, k][None, None, :] == 1
            w *= np.where(on, sw[:, :, None, k], 1.0 - sw[:, :, None, k])
        gathered = self.stacked[idx]  # (L, n, C, F)
        feats = np.einsum("lnc,lncf->nlf", w, gathered).reshape(n, L * F)
        return feats, (idx, w) if need_cache else None

    def backward(self, cache, dfeats):
        idx, w = cache
        F = self.config.features_per_level
        T = self.config.table_size
        L = self.config.levels
        n = idx.shape[1]
        df = dfeats.reshape(n, L, F).transpose(1, 0, 2)  # (L, n, F)
        contrib = w[:, :, :, None] * df[:, :, None, :]  # (L, n, C, F)
        flat_idx = idx.reshape(-1)
        flat = contrib.reshape(-1, F)
        stacked = np.empty((L * T, F))
        for f in range(F):
            stacked[:, f] = np.bincount(flat_idx, weights=flat[:, f], minlength=L * T)
        dtype = self.stacked.dtype
        return [stacked[l * T:(l + 1) * T].astype(dtype) for l in range(L)]


class Mlp:
    """Dense feed-forward net, LeakyReLU hidden activations, linear output."""

    def __init__(self, weights, biases, negative_slope=0.01):
        self.weights = weights
        self.biases = biases
        self.negative_slope = negative_slope

    @classmethod
    def init_random(cls, sizes, rng, dtype=np.float32):
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
            biases.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))
        return cls(weights, biases)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, x, need_cache=False):
        dt = x.dtype.type
        one, slope = dt(1.0), dt(self.negative_slope)
        inputs = [x] if need_cache else None
        derivs = [] if need_cache else None
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W
            z += b
            if i < last:
                deriv = np.where(z > 0, one, slope)
                z *= deriv
                h = z
                if need_cache:
                    derivs.append(deriv)
                    inputs.append(h)
            else:
                h = z
        return h, (inputs, derivs) if need_cache else None

    def backward(self, cache, dout):
        inputs, derivs = cache
        dws = [None] * len(self.weights)
        dbs = [None] * len(self.biases)
        g = dout
        for i in reversed(range(len(self.weights))):
            if i < len(self.weights) - 1:
                if g.base is not None or g is dout:
                    g = g.copy()
                g *= derivs[i]
            dws[i] = inputs[i].T @ g
            dbs[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return dws, dbs, g


class FieldParams:
    """Hash tables plus MLP weights; owns the canonical parameter ordering."""

    def __init__(self, encoding: HashGridEncoding, mlp: Mlp):
        self.encoding = encoding
        self.mlp = mlp

    @property
    def dtype(self):
        return self.encoding.tables[0].dtype

    def arrays(self) -> List[np.ndarray]:
        return list(self.encoding.tables) + self.mlp.weights + self.mlp.biases

    def copy_arrays(self):
        return [a.copy() for a in self.arrays()]

    def load_arrays(self, arrays):
        own = self.arrays()
        if len(own) != len(arrays):
            raise ShapeError("parameter array count mismatch")
        for dst, src in zip(own, arrays):
            if dst.shape != src.shape:
                raise ShapeError(f"parameter shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src

    def num_parameters(self):
        return int(sum(a.size for a in self.arrays()))


@dataclass
class BakedWeights:
    """Dense per-point coordinate rows, the exchange format for viewers."""

    matrix: np.ndarray  # (n_points, K)

    @property
    def n_points(self):
        return self.matrix.shape[0]

    @property
    def num_cage_vertices(self):
        return self.matrix.shape[1]


class CoordinateField:
    """Cage + retained simplices + trainable blend field."""

    def __init__(self, cage: Cage, vss: VirtualSimplexSet, params: FieldParams,
                 mollifier: Optional[MollifierParams] = None):
        if len(vss) == 0:
            raise ValueError("empty simplex set")
        out_width = params.mlp.sizes[-1]
        if out_width != len(vss):
            raise ShapeError(
                f"network output width {out_width} != simplex count {len(vss)}"
            )
        self.cage = cage
        self.vss = vss
        self.params = params
        self.mollifier = mollifier or MollifierParams.defaults(cage.d)
        self._sbatch = SimplexBatch(cage, vss.simplices)
        flat_vid = self._sbatch.vertex_ids.reshape(-1)
        # dense 0/1 scatter (one gemm instead of per-vertex column sums)
        self._scatter = {}
        for dt in (np.float32, np.float64):
            S = np.zeros((flat_vid.size, cage.num_vertices), dtype=dt)
            S[np.arange(flat_vid.size), flat_vid] = 1.0
            self._scatter[np.dtype(dt)] = S

    @property
    def num_simplices(self):
        return len(self.vss)

    def forward_batch(self, points, mollifier: Optional[MollifierParams] = None,
                      need_cache=False, compute_dtype=None):
        """Coordinates for an (N,d) batch. With a mollifier, each simplex's
        indicator is replaced by the signed-distance ramp before the convex
        combination (training surrogate; constraints not guaranteed).

        compute_dtype=None runs the combination in float64 (inference
        accuracy); training passes the parameter dtype for speed."""
        cdt = np.dtype(compute_dtype or np.float64)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        J = self.num_simplices
        K = self.cage.num_vertices
        d = self.cage.d

        lam = self._sbatch.bary(points, dtype=cdt)  # (n, J, d+1)
        if mollifier is not None and mollifier.enabled:
            sd = self._sbatch.signed_distance_clipped(
                points, lam, band=mollifier.radius, dtype=cdt
            )
            m = np.asarray(mollifier_ramp(sd, mollifier), dtype=cdt)
        else:
            m = (_min_last(lam) >= -CONTAINS_TOL).astype(cdt)

        feats, enc_cache = self.params.encoding.forward(points, need_cache=need_cache)
        raw, mlp_cache = self.params.mlp.forward(feats, need_cache=need_cache)
        raw = raw.astype(cdt)
        if need_cache:
            s, sig = _softplus_and_sigmoid(raw)
        else:
            s, sig = _softplus(raw), None
        u = s * m
        total = u.sum(axis=1)
        dead = total <= 0.0
        if np.any(dead):
            idx = np.nonzero(dead)[0]
            raise NotCovered(
                f"{idx.size} query points lie in no retained simplex", indices=idx.tolist()
            )
        w = u / total[:, None]
        contrib = (w[:, :, None] * lam).reshape(n, J * (d + 1))
        alpha = (contrib @ self._scatter[cdt]).astype(float, copy=False)
        cache = None
        if need_cache:
            cache = {
                "lam": lam, "m": m, "sigmoid": sig, "w": w, "total": total,
                "enc": enc_cache, "mlp": mlp_cache, "dtype": cdt,
            }
        return alpha, cache

    def backward_batch(self, cache, dalpha):
        """Parameter gradients (aligned with params.arrays()) of a scalar with
        gradient dalpha wrt the forward_batch output."""
        lam = cache["lam"]
        cdt = cache["dtype"]
        n, J, dp1 = lam.shape
        dalpha = np.asarray(dalpha, dtype=cdt)
        dcontrib = (dalpha @ self._scatter[cdt].T).reshape(n, J, dp1)
        prod = dcontrib * lam
        dw = prod[:, :, 0] + prod[:, :, 1]
        for a in range(2, dp1):
            dw += prod[:, :, a]
        return self.backward_distribution(cache, dw)

    def backward_distribution(self, cache, dw):
        """Like backward_batch but starting from gradients wrt the simplex
        distribution w."""
        cdt = cache["dtype"]
        w, total, m = cache["w"], cache["total"], cache["m"]
        dw = np.asarray(dw, dtype=cdt)
        du = (dw - (dw * w).sum(axis=1, keepdims=True)) / total[:, None]
        ds = du * m
        draw = ds * cache["sigmoid"]
        dtype = self.params.dtype
        dws, dbs, dfeats = self.params.mlp.backward(cache["mlp"], draw.astype(dtype))
        dtables = self.params.encoding.backward(cache["enc"], dfeats)
        return dtables + dws + dbs

    # Single-point conveniences -------------------------------------------

    def simplex_distribution(self, p):
        """Masked categorical distribution over retained simplices at p."""
        points = np.asarray(p, dtype=float)[None, :]
        lam = self._sbatch.bary(points)
        m = (_min_last(lam) >= -CONTAINS_TOL).astype(float)
        feats, _ = self.params.encoding.forward(points)
        raw, _ = self.params.mlp.forward(feats)
        s = _softplus(raw.astype(float))
        u = s * m
        total = u.sum(axis=1)
        if total[0] <= 0.0:
            raise NotCovered(f"point {p} lies in no retained simplex")
        return (u / total[:, None])[0]

    def evaluate(self, p):
        """Exact coordinates at p (hard simplex masking)."""
        alpha, _ = self.forward_batch(np.asarray(p, dtype=float)[None, :])
        return alpha[0]

    def evaluate_mollified(self, p):
        """Training-surrogate coordinates at p (ramped masking)."""
        alpha, _ = self.forward_batch(
            np.asarray(p, dtype=float)[None, :], mollifier=self.mollifier
        )
        return alpha[0]

    def bake(self, points, chunk=4096):
        """Evaluate the hard-masked field at fixed query points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rows = []
        bad = []
        for start in range(0, points.shape[0], chunk):
            part = points[start:start + chunk]
            try:
                alpha, _ = self.forward_batch(part)
            except NotCovered as err:
                bad.extend(start + i for i in err.indices)
                continue
            rows.append(alpha)
        if bad:
            raise NotCovered(f"{len(bad)} bake points not covered", indices=bad)
        return BakedWeights(np.concatenate(rows, axis=0))


def create_field(cage: Cage, vss: VirtualSimplexSet, seed=0, dtype=np.float32,
                 encoding_config: Optional[HashGridConfig] = None,
                 hidden_width=256, hidden_layers=5,
                 mollifier: Optional[MollifierParams] = None):
    """Fresh field with randomly initialized parameters."""
    rng = np.random.default_rng(seed)
    cfg = encoding_config or HashGridConfig()
    enc = HashGridEncoding.init_random(cfg, cage.d, rng, dtype=dtype)
    sizes = [cfg.output_dim] + [hidden_width] * hidden_layers + [len(vss)]
    mlp = Mlp.init_random(sizes, rng, dtype=dtype)
    return CoordinateField(cage, vss, FieldParams(enc, mlp), mollifier)
