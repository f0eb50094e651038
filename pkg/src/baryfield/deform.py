"""Deformation-side machinery: applying baked weights to a moved cage,
as-rigid-as-possible fine-tuning with jointly optimized per-vertex rotations,
and the two-stage inverse cage-fitting solver.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dataclass_field
from typing import List, Optional

import numpy as np

from .errors import ShapeError, TrainingDiverged
from .geometry import Cage, InteriorMesh
from .neural_field import BakedWeights, CoordinateField
from .training import AdamState, LrDecay, adam_step

# ---------------------------------------------------------------------------
# Rotations in log (axis-angle) form


def _skew(w):
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def exp_rotation(rho):
    """SO(2)/SO(3) exponential of a log-rotation vector ((1,) or (3,))."""
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.shape[0] == 1:
        c, s = np.cos(rho[0]), np.sin(rho[0])
        return np.array([[c, -s], [s, c]])
    theta = np.linalg.norm(rho)
    W = _skew(rho)
    if theta < 1e-8:
        A = 1.0 - theta**2 / 6.0
        B = 0.5 - theta**2 / 24.0
    else:
        A = np.sin(theta) / theta
        B = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + A * W + B * (W @ W)


def log_rotation(R):
    """Inverse of exp_rotation; angles are clamped just below pi."""
    R = np.asarray(R, dtype=float)
    if R.shape == (2, 2):
        return np.array([np.arctan2(R[1, 0], R[0, 0])])
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(tr)
    if theta < 1e-8:
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta > np.pi - 1e-6:
        theta = np.pi - 1e-6
        # Axis from the dominant column of R + I.
        M = R + np.eye(3)
        col = np.argmax(np.linalg.norm(M, axis=0))
        axis = M[:, col] / np.linalg.norm(M[:, col])
        return theta * axis
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return theta / (2.0 * np.sin(theta)) * axis


def rotation_jacobian(rho):
    """(n_rho, d, d) partial derivatives of exp_rotation wrt each component."""
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.shape[0] == 1:
        c, s = np.cos(rho[0]), np.sin(rho[0])
        return np.array([[[-s, -c], [c, -s]]])
    R = exp_rotation(rho)
    n2 = float(rho @ rho)
    out = np.empty((3, 3, 3))
    if n2 < 1e-16:
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            out[k] = _skew(e)
        return out
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        v = np.cross(rho, (np.eye(3) - R) @ e)
        out[k] = (rho[k] * _skew(rho) + _skew(v)) / n2 @ R
    return out


def exp_rotation_batch(rhos):
    return np.stack([exp_rotation(r) for r in np.atleast_2d(rhos)])


# ---------------------------------------------------------------------------
# Deformed cages


@dataclass
class DeformedCage:
    """Global similarity (rotation, scale, translation) on top of per-vertex
    local positions; composed vertices are scale*R@local + t."""

    global_rotation: np.ndarray
    global_scale: float
    global_translation: np.ndarray
    local_vertices: np.ndarray

    def __post_init__(self):
        self.global_rotation = np.asarray(self.global_rotation, dtype=float).reshape(-1)
        self.global_translation = np.asarray(self.global_translation, dtype=float)
        self.local_vertices = np.asarray(self.local_vertices, dtype=float)
        d = self.local_vertices.shape[1]
        want = 1 if d == 2 else 3
        if self.global_rotation.shape[0] != want:
            raise ShapeError(f"log-rotation must have {want} entries in {d}D")
        if self.global_translation.shape != (d,):
            raise ShapeError("translation dimension mismatch")

    @property
    def d(self):
        return self.local_vertices.shape[1]

    @classmethod
    def rest(cls, cage: Cage):
        d = cage.d
        return cls(np.zeros(1 if d == 2 else 3), 1.0, np.zeros(d),
                   cage.vertices.copy())

    def rotation_matrix(self):
        return exp_rotation(self.global_rotation)

    def vertices(self):
        R = self.rotation_matrix()
        return self.global_scale * (self.local_vertices @ R.T) + self.global_translation

    def to_json_dict(self):
        return {
            "global_rotation": self.global_rotation.tolist(),
            "global_scale": float(self.global_scale),
            "global_translation": self.global_translation.tolist(),
            "local_vertices": self.local_vertices.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data):
        return cls(np.array(data["global_rotation"]), data["global_scale"],
                   np.array(data["global_translation"]),
                   np.array(data["local_vertices"]))


def apply_deformation(weights, deformed: DeformedCage):
    """Deformed positions W @ v' for baked weights (rows = query points)."""
    W = weights.matrix if isinstance(weights, BakedWeights) else np.asarray(weights)
    verts = deformed.vertices()
    if W.ndim != 2 or W.shape[1] != verts.shape[0]:
        raise ShapeError(
            f"weight matrix has {W.shape[1] if W.ndim == 2 else '?'} columns, "
            f"cage has {verts.shape[0]} vertices"
        )
    return W @ verts


# ---------------------------------------------------------------------------
# ARAP energy


@dataclass
class RotationVariables:
    """Per-mesh-vertex log-rotations, plus fallback flags from fitting."""

    log_rotations: np.ndarray  # (N, 1) in 2D, (N, 3) in 3D
    fallback: np.ndarray = None  # (N,) bool

    def __post_init__(self):
        self.log_rotations = np.atleast_2d(np.asarray(self.log_rotations, dtype=float))
        if self.fallback is None:
            self.fallback = np.zeros(self.log_rotations.shape[0], dtype=bool)

    def matrices(self):
        return exp_rotation_batch(self.log_rotations)


def _phi_at_vertices(field_or_weights, mesh: InteriorMesh, deformed: DeformedCage):
    if isinstance(field_or_weights, CoordinateField):
        baked = field_or_weights.bake(mesh.vertices)
    elif isinstance(field_or_weights, BakedWeights):
        baked = field_or_weights
    else:
        baked = BakedWeights(np.asarray(field_or_weights, dtype=float))
    if baked.n_points != mesh.num_vertices:
        raise ShapeError("weight rows do not match mesh vertices")
    return apply_deformation(baked, deformed)


def arap_energy(field_or_weights, mesh: InteriorMesh, deformed: DeformedCage,
                rotations: RotationVariables):
    """Uniform-weight discrete ARAP energy summed over all vertices/edges."""
    phi = _phi_at_vertices(field_or_weights, mesh, deformed)
    R = rotations.matrices()
    total = 0.0
    for i, nbr in enumerate(mesh.neighbors):
        if nbr.size == 0:
            warnings.warn(f"mesh vertex {i} has no neighbors; skipped in ARAP energy")
            continue
        d_phi = phi[i] - phi[nbr]  # (n_i, d)
        d_rest = (mesh.vertices[i] - mesh.vertices[nbr]) @ R[i].T
        total += float(((d_phi - d_rest) ** 2).sum())
    return total


def arap_vertex_energy(phi, mesh: InteriorMesh, R_i, i):
    """Exhaustive per-vertex term: sum over all neighbors of vertex i."""
    nbr = mesh.neighbors[i]
    d_phi = phi[i] - phi[nbr]
    d_rest = (mesh.vertices[i] - mesh.vertices[nbr]) @ np.asarray(R_i).T
    return float(((d_phi - d_rest) ** 2).sum())


def arap_vertex_sample(phi, mesh: InteriorMesh, R_i, i, j):
    """Unbiased single-draw estimate of arap_vertex_energy: |n(i)| times the
    residual of one uniformly drawn incident edge (i, j)."""
    nbr = mesh.neighbors[i]
    r = (phi[i] - phi[j]) - np.asarray(R_i) @ (mesh.vertices[i] - mesh.vertices[j])
    return float(nbr.size * (r @ r))


def fit_rotations(mesh: InteriorMesh, deformed_positions):
    """Per-vertex best rotations via SVD of the edge covariance, stored as
    log-rotations; rank-deficient neighborhoods fall back to the identity."""
    phi = np.asarray(deformed_positions, dtype=float)
    d = mesh.vertices.shape[1]
    logs = np.zeros((mesh.num_vertices, 1 if d == 2 else 3))
    flags = np.zeros(mesh.num_vertices, dtype=bool)
    for i, nbr in enumerate(mesh.neighbors):
        if nbr.size == 0:
            flags[i] = True
            continue
        e = mesh.vertices[i] - mesh.vertices[nbr]  # rest edges (n_i, d)
        ep = phi[i] - phi[nbr]
        S = e.T @ ep  # (d, d): maximize tr(R S)
        U, sig, Vt = np.linalg.svd(S)
        if sig[-1] < 1e-12 * max(sig[0], 1e-30) or sig[0] <= 0:
            flags[i] = True
            continue
        R = Vt.T @ U.T
        if np.linalg.det(R) < 0:
            fix = np.eye(d)
            fix[-1, -1] = -1.0
            R = Vt.T @ fix @ U.T
        logs[i] = log_rotation(R)
    return RotationVariables(logs, flags)


# ---------------------------------------------------------------------------
# ARAP fine-tuning


@dataclass
class FinetuneConfig:
    steps: int = 1200
    network_lr: float = 1e-3
    rotation_lr: float = 0.1
    lr_decay: LrDecay = dataclass_field(default_factory=lambda: LrDecay(0.8, 150))
    batch_vertices: Optional[int] = None
    rng_seed: int = 0


def arap_finetune(field: CoordinateField, mesh: InteriorMesh,
                  deformed: DeformedCage, cfg: FinetuneConfig):
    """Jointly optimize field parameters and per-vertex rotations on the
    single-edge Monte Carlo ARAP estimator. Returns (field, rotations,
    loss history)."""
    rng = np.random.default_rng(cfg.rng_seed)
    verts = mesh.vertices
    n = mesh.num_vertices
    v_def = deformed.vertices()
    valence = np.array([nbr.size for nbr in mesh.neighbors], dtype=float)
    if np.any(valence == 0):
        warnings.warn("mesh has isolated vertices; they are never sampled")

    phi0 = field.bake(verts).matrix @ v_def
    rotations = fit_rotations(mesh, phi0)
    rho = rotations.log_rotations

    field_state = AdamState(field.params.arrays())
    rho_state = AdamState([rho])
    batch = cfg.batch_vertices or min(n, 3000)
    sampleable = np.nonzero(valence > 0)[0]
    losses = []

    for step in range(1, cfg.steps + 1):
        ii = sampleable[rng.integers(sampleable.size, size=batch)]
        jj = np.array([mesh.neighbors[i][rng.integers(mesh.neighbors[i].size)]
                       for i in ii])
        ids = np.unique(np.concatenate([ii, jj]))
        pos = {v: k for k, v in enumerate(ids)}
        alpha, cache = field.forward_batch(verts[ids], need_cache=True)
        phi = alpha @ v_def

        Rmats = exp_rotation_batch(rho[ii])
        e_rest = verts[ii] - verts[jj]
        r = (phi[[pos[i] for i in ii]] - phi[[pos[j] for j in jj]]
             - np.einsum("bde,be->bd", Rmats, e_rest))
        inv_val = 1.0 / valence[ii]
        loss = float((inv_val * (r * r).sum(axis=1)).mean())
        losses.append(loss)

        # Gradients wrt phi at the sampled points.
        coeff = (2.0 / batch) * inv_val[:, None] * r  # (B, d)
        dphi = np.zeros((ids.size, verts.shape[1]))
        np.add.at(dphi, [pos[i] for i in ii], coeff)
        np.add.at(dphi, [pos[j] for j in jj], -coeff)
        dalpha = dphi @ v_def.T
        grads = field.backward_batch(cache, dalpha)

        # Gradients wrt the sampled vertices' log-rotations.
        drho = np.zeros_like(rho)
        dR = -coeff[:, :, None] * e_rest[:, None, :]  # (B, d, d) => dL/dR_i
        for b, i in enumerate(ii):
            Jr = rotation_jacobian(rho[i])
            for k in range(Jr.shape[0]):
                drho[i, k] += float((dR[b] * Jr[k]).sum())

        decay = cfg.lr_decay.factor ** (step // cfg.lr_decay.every_n_steps)
        adam_step(field.params.arrays(), grads, field_state, cfg.network_lr * decay)
        adam_step([rho], [drho], rho_state, cfg.rotation_lr * decay)

    rotations.log_rotations = rho
    return field, rotations, losses


# ---------------------------------------------------------------------------
# Inverse deformation


@dataclass
class InverseConfig:
    lam: float = 1e-4
    n_samples: int = 512
    stage1_steps: int = 800
    stage1_lr: float = 5e-3
    stage2_steps: int = 800
    stage2_cage_lr: float = 5e-3
    stage2_field_lr: float = 5e-4
    lr_decay: LrDecay = dataclass_field(default_factory=lambda: LrDecay(0.8, 200))
    decay_until: int = 6000
    optimize_field: bool = True
    rng_seed: int = 0
    divergence_window: int = 10

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("regularization weight must be >= 0")


def _laplacian_norms(mesh: InteriorMesh, values):
    lap = mesh.uniform_laplacian(values)
    return np.linalg.norm(lap, axis=1), lap


def _interp(vertex_scalars, tris, bary):
    return np.einsum("nk,nk->n", bary, vertex_scalars[tris])


def inverse_energy(field: CoordinateField, mesh: InteriorMesh,
                   target_mesh: InteriorMesh, deformed: DeformedCage,
                   lam=1e-4, n_samples=512, rng=None, samples=None):
    """Mean-absolute-distance data term plus Laplacian-norm regularizer,
    scaled by the rest surface area over the samples."""
    if target_mesh.num_vertices != mesh.num_vertices:
        raise ShapeError("mesh and target must be in dense vertex correspondence")
    if rng is None:
        rng = np.random.default_rng(0)
    if samples is None:
        tri_idx, bary, pts = mesh.sample_surface(n_samples, rng)
    else:
        tri_idx, bary = samples
        pts = mesh.barycentric_points(tri_idx, bary)
    v_def = deformed.vertices()
    alpha, _ = field.forward_batch(pts)
    phi = alpha @ v_def
    target_pts = target_mesh.barycentric_points(tri_idx, bary)
    dist = np.linalg.norm(phi - target_pts, axis=1)

    w_vtx = field.bake(mesh.vertices).matrix
    n_phi, _ = _laplacian_norms(mesh, w_vtx @ v_def)
    n_tgt, _ = _laplacian_norms(mesh, target_mesh.vertices)
    tris = mesh.elements[tri_idx]
    reg = (_interp(n_phi, tris, bary) - _interp(n_tgt, tris, bary)) ** 2

    area = mesh.total_area()
    return float(area / len(dist) * (dist + lam * reg).sum())


def _uniform_laplacian_transpose(mesh: InteriorMesh, values):
    """Adjoint of the umbrella Laplacian (mean of neighbors minus self)."""
    out = -values.copy()
    inv_val = np.array([1.0 / max(len(nbr), 1) for nbr in mesh.neighbors])
    for j, nbr in enumerate(mesh.neighbors):
        if nbr.size:
            out[j] += (values[nbr] * inv_val[nbr, None]).sum(axis=0)
    return out


@dataclass
class InverseReport:
    stage1_energies: List[float]
    stage2_energies: List[float]
    final_mean_abs_distance: float


def inverse_solve(field: CoordinateField, mesh: InteriorMesh,
                  target_mesh: InteriorMesh, cfg: InverseConfig,
                  initial: Optional[DeformedCage] = None):
    """Two-stage fit of a deformed cage (and optionally the field) to a
    target mesh in dense correspondence with the rest mesh.

    Stage 1 fits the global rotation/scale/translation with the cage's
    local frame and the field frozen; stage 2 jointly optimizes the local
    vertex positions and (optionally) fine-tunes the field."""
    if target_mesh.num_vertices != mesh.num_vertices:
        raise ShapeError("mesh and target must be in dense vertex correspondence")
    rng = np.random.default_rng(cfg.rng_seed)
    d = mesh.vertices.shape[1]
    deformed = initial or DeformedCage.rest(field.cage)
    area = mesh.total_area()
    n_tgt, _ = _laplacian_norms(mesh, target_mesh.vertices)

    eval_tri, eval_bary, eval_pts = mesh.sample_surface(max(cfg.n_samples, 256), rng)
    eval_tgt = target_mesh.barycentric_points(eval_tri, eval_bary)

    # Stage 1: field and local frame frozen; per-point weights are constant.
    w_vtx = field.bake(mesh.vertices).matrix
    rot = deformed.global_rotation.copy()
    log_scale = np.array([np.log(deformed.global_scale)])
    trans = deformed.global_translation.copy()
    state = AdamState([rot, log_scale, trans])
    stage1 = []
    worse = 0
    prev_eval = None
    w_eval = field.bake(eval_pts).matrix

    def compose(local):
        R = exp_rotation(rot)
        s = float(np.exp(log_scale[0]))
        return s * (local @ R.T) + trans, R, s

    for step in range(1, cfg.stage1_steps + 1):
        tri_idx, bary, pts = mesh.sample_surface(cfg.n_samples, rng)
        W = field.bake(pts).matrix
        tgt = target_mesh.barycentric_points(tri_idx, bary)
        v_def, R, s = compose(deformed.local_vertices)
        phi = W @ v_def
        diff = phi - tgt
        dist = np.linalg.norm(diff, axis=1)
        unit = diff / np.where(dist > 1e-30, dist, 1.0)[:, None]

        lap_w = mesh.uniform_laplacian(w_vtx)
        lv = lap_w @ v_def  # (N, d) vertex Laplacians of phi
        n_phi = np.linalg.norm(lv, axis=1)
        tris = mesh.elements[tri_idx]
        delta = _interp(n_phi, tris, bary) - _interp(n_tgt, tris, bary)

        scale_fac = area / cfg.n_samples
        energy = float(scale_fac * (dist + cfg.lam * delta**2).sum())
        stage1.append(energy)

        # dE/dv' from both terms.
        dv = scale_fac * (W.T @ unit)
        dndl = lv / np.where(n_phi > 1e-30, n_phi, 1.0)[:, None]
        dn = np.zeros(mesh.num_vertices)
        np.add.at(dn, tris.reshape(-1),
                  (2.0 * cfg.lam * scale_fac) * (delta[:, None] * bary).reshape(-1))
        dv += lap_w.T @ (dn[:, None] * dndl)

        # Chain to globals: v' = s R l + t.
        local = deformed.local_vertices
        dtrans = dv.sum(axis=0)
        rl = local @ R.T
        dlogs = np.array([float((dv * (s * rl)).sum())])
        Jr = rotation_jacobian(rot)
        drot = np.array([float(s * (dv * (local @ Jr[k].T)).sum())
                         for k in range(Jr.shape[0])])
        adam_step([rot, log_scale, trans], [drot, dlogs, dtrans], state, cfg.stage1_lr)

        v_eval, _, _ = compose(deformed.local_vertices)
        eval_energy = float(np.linalg.norm(w_eval @ v_eval - eval_tgt, axis=1).mean())
        if prev_eval is not None and eval_energy > prev_eval:
            worse += 1
            if worse >= cfg.divergence_window:
                raise TrainingDiverged(
                    "stage-1 energy increased for "
                    f"{cfg.divergence_window} consecutive evaluations",
                    diagnostics={"step": step, "history": stage1[-cfg.divergence_window:]},
                )
        else:
            worse = 0
        prev_eval = eval_energy

    deformed = DeformedCage(rot, float(np.exp(log_scale[0])), trans,
                            deformed.local_vertices.copy())

    # Stage 2: local vertices (+ field) free; globals frozen.
    stage2 = []
    local = deformed.local_vertices
    R = deformed.rotation_matrix()
    s = deformed.global_scale
    cage_state = AdamState([local])
    field_state = AdamState(field.params.arrays()) if cfg.optimize_field else None

    for step in range(1, cfg.stage2_steps + 1):
        tri_idx, bary, pts = mesh.sample_surface(cfg.n_samples, rng)
        tgt = target_mesh.barycentric_points(tri_idx, bary)
        v_def = s * (local @ R.T) + deformed.global_translation

        alpha_s, cache_s = field.forward_batch(pts, need_cache=cfg.optimize_field)
        alpha_v, cache_v = field.forward_batch(mesh.vertices,
                                               need_cache=cfg.optimize_field)
        phi = alpha_s @ v_def
        diff = phi - tgt
        dist = np.linalg.norm(diff, axis=1)
        unit = diff / np.where(dist > 1e-30, dist, 1.0)[:, None]

        lv = mesh.uniform_laplacian(alpha_v @ v_def)
        n_phi = np.linalg.norm(lv, axis=1)
        tris = mesh.elements[tri_idx]
        delta = _interp(n_phi, tris, bary) - _interp(n_tgt, tris, bary)
        scale_fac = area / cfg.n_samples
        energy = float(scale_fac * (dist + cfg.lam * delta**2).sum())
        stage2.append(energy)

        dphi_s = scale_fac * unit  # (S, d)
        dn = np.zeros(mesh.num_vertices)
        np.add.at(dn, tris.reshape(-1),
                  (2.0 * cfg.lam * scale_fac) * (delta[:, None] * bary).reshape(-1))
        dndl = lv / np.where(n_phi > 1e-30, n_phi, 1.0)[:, None]
        dlap = dn[:, None] * dndl  # dE/d(vertex Laplacian)
        dphi_v = _uniform_laplacian_transpose(mesh, dlap)

        dv = alpha_s.T @ dphi_s + alpha_v.T @ dphi_v
        dlocal = s * (dv @ R)
        decay = (cfg.lr_decay.factor ** (step // cfg.lr_decay.every_n_steps)
                 if step <= cfg.decay_until else
                 cfg.lr_decay.factor ** (cfg.decay_until // cfg.lr_decay.every_n_steps))
        adam_step([local], [dlocal], cage_state, cfg.stage2_cage_lr * decay)

        if cfg.optimize_field:
            grads_s = field.backward_batch(cache_s, dphi_s @ v_def.T)
            grads_v = field.backward_batch(cache_v, dphi_v @ v_def.T)
            grads = [a + b for a, b in zip(grads_s, grads_v)]
            adam_step(field.params.arrays(), grads, field_state,
                      cfg.stage2_field_lr * decay)

    deformed = DeformedCage(deformed.global_rotation, deformed.global_scale,
                            deformed.global_translation, local)
    final_pts = field.bake(eval_pts).matrix @ deformed.vertices()
    final_mad = float(np.linalg.norm(final_pts - eval_tgt, axis=1).mean())
    return deformed, field, InverseReport(stage1, stage2, final_mad)


def mean_absolute_distance(field: CoordinateField, mesh: InteriorMesh,
                           target_mesh: InteriorMesh, deformed: DeformedCage,
                           n_samples=2048, rng=None):
    """Plain mean |phi(x) - x'| over uniform surface samples (no area factor)."""
    rng = rng or np.random.default_rng(0)
    tri_idx, bary, pts = mesh.sample_surface(n_samples, rng)
    phi = field.bake(pts).matrix @ deformed.vertices()
    tgt = target_mesh.barycentric_points(tri_idx, bary)
    return float(np.linalg.norm(phi - tgt, axis=1).mean())
