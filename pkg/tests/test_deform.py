import numpy as np
import pytest

from baryfield import cages
from baryfield.deform import (
    DeformedCage,
    FinetuneConfig,
    InverseConfig,
    RotationVariables,
    apply_deformation,
    arap_energy,
    arap_finetune,
    arap_vertex_energy,
    arap_vertex_sample,
    exp_rotation,
    fit_rotations,
    inverse_energy,
    inverse_solve,
    log_rotation,
    rotation_jacobian,
)
from baryfield.errors import ShapeError
from baryfield.geometry import grid_rectangle_mesh, sample_inside
from baryfield.neural_field import BakedWeights, create_field
from baryfield.simplex_enum import PruningConfig, prune
from baryfield.training import LrDecay


@pytest.fixture(scope="module")
def bar_setup():
    cage = cages.bar_cage()
    vss = prune(cage, PruningConfig.defaults(2))
    field = create_field(cage, vss, seed=2)
    mesh = cages.bar_interior_mesh(nx=12, ny=3)
    mesh.validate_inside(cage)
    return cage, vss, field, mesh


def bent_bar_cage(cage, angle=np.pi / 2):
    """Keep the left half fixed, rotate the right half about the middle."""
    verts = cage.vertices.copy()
    lo, hi = cage.bbox()
    pivot = np.array([0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])])
    R = exp_rotation([angle])
    for i, v in enumerate(verts):
        if v[0] > pivot[0] + 1e-9:
            verts[i] = pivot + R @ (v - pivot)
    return DeformedCage(np.zeros(1), 1.0, np.zeros(2), verts)


# ---------------------------------------------------------------------------
# Rotation utilities


def test_log_exp_round_trip(rng):
    for _ in range(100):
        w = rng.standard_normal(3)
        w *= rng.uniform(0, np.pi - 1e-3) / np.linalg.norm(w)
        assert np.linalg.norm(log_rotation(exp_rotation(w)) - w) < 1e-8
    for _ in range(50):
        th = rng.uniform(-np.pi + 1e-3, np.pi - 1e-3)
        assert abs(log_rotation(exp_rotation([th]))[0] - th) < 1e-10


def test_rotation_matrices_orthogonal(rng):
    for _ in range(50):
        w = rng.standard_normal(3) * 2
        R = exp_rotation(w)
        assert np.abs(R @ R.T - np.eye(3)).max() < 1e-10
        assert np.isclose(np.linalg.det(R), 1.0)


def test_rotation_jacobian_matches_fd(rng):
    for _ in range(20):
        rho = rng.standard_normal(3) * rng.uniform(0.0, 2.0)
        J = rotation_jacobian(rho)
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1e-7
            fd = (exp_rotation(rho + e) - exp_rotation(rho - e)) / 2e-7
            assert np.abs(fd - J[k]).max() < 1e-5


# ---------------------------------------------------------------------------
# apply_deformation


def test_apply_identity_reproduces_points(bar_setup, rng):
    cage, vss, field, mesh = bar_setup
    baked = field.bake(mesh.vertices)
    rest = DeformedCage.rest(cage)
    out = apply_deformation(baked, rest)
    assert np.abs(out - mesh.vertices).max() < 1e-5


def test_apply_rigid_motion(bar_setup):
    cage, vss, field, mesh = bar_setup
    baked = field.bake(mesh.vertices)
    moved = DeformedCage(np.array([0.6]), 1.0, np.array([0.2, -0.1]),
                         cage.vertices.copy())
    out = apply_deformation(baked, moved)
    R = exp_rotation([0.6])
    expect = mesh.vertices @ R.T + np.array([0.2, -0.1])
    assert np.abs(out - expect).max() < 1e-5


def test_apply_affine_equivariance(bar_setup, rng):
    cage, vss, field, mesh = bar_setup
    baked = field.bake(mesh.vertices)
    local = cage.vertices + 0.05 * rng.standard_normal(cage.vertices.shape)
    deformed = DeformedCage(np.array([0.3]), 1.1, np.array([0.1, 0.0]), local)
    A = rng.standard_normal((2, 2))
    b = rng.standard_normal(2)
    before = apply_deformation(baked, deformed) @ A.T + b
    after = apply_deformation(
        BakedWeights(baked.matrix),
        DeformedCage(np.zeros(1), 1.0, b, deformed.vertices() @ A.T),
    )
    assert np.abs(before - after).max() < 1e-9


def test_apply_column_support(bar_setup):
    cage, vss, field, mesh = bar_setup
    baked = field.bake(mesh.vertices)
    rest = DeformedCage.rest(cage)
    moved = DeformedCage.rest(cage)
    moved.local_vertices[3] += np.array([0.05, 0.1])
    delta = apply_deformation(baked, moved) - apply_deformation(baked, rest)
    affected = np.abs(delta).max(axis=1) > 1e-12
    has_weight = np.abs(baked.matrix[:, 3]) > 1e-12
    assert np.array_equal(affected, has_weight)


def test_apply_shape_error(bar_setup):
    cage, vss, field, mesh = bar_setup
    baked = field.bake(mesh.vertices)
    small = DeformedCage(np.zeros(1), 1.0, np.zeros(2), cage.vertices[:4].copy())
    with pytest.raises(ShapeError):
        apply_deformation(baked, small)


# ---------------------------------------------------------------------------
# ARAP energy and rotation fitting


def test_arap_zero_at_rest(bar_setup):
    cage, vss, field, mesh = bar_setup
    baked = field.bake(mesh.vertices)
    rest = DeformedCage.rest(cage)
    rots = RotationVariables(np.zeros((mesh.num_vertices, 1)))
    assert arap_energy(baked, mesh, rest, rots) < 1e-18


def test_arap_zero_under_global_rotation(bar_setup):
    cage, vss, field, mesh = bar_setup
    baked = field.bake(mesh.vertices)
    angle = 0.8
    moved = DeformedCage(np.array([angle]), 1.0, np.array([0.1, 0.2]),
                         cage.vertices.copy())
    rots = RotationVariables(np.full((mesh.num_vertices, 1), angle))
    assert arap_energy(baked, mesh, moved, rots) < 1e-16


def test_arap_uniform_scale_closed_form(bar_setup):
    cage, vss, field, mesh = bar_setup
    baked = field.bake(mesh.vertices)
    s = 1.35
    scaled = DeformedCage(np.zeros(1), s, np.zeros(2), cage.vertices.copy())
    rots = RotationVariables(np.zeros((mesh.num_vertices, 1)))
    expected = 0.0
    for i, nbr in enumerate(mesh.neighbors):
        e = mesh.vertices[i] - mesh.vertices[nbr]
        expected += (s - 1.0) ** 2 * (e**2).sum()
    got = arap_energy(baked, mesh, scaled, rots)
    assert abs(got - expected) / expected < 1e-6


def test_fit_rotations_identity_and_global(bar_setup, rng):
    cage, vss, field, mesh = bar_setup
    rots = fit_rotations(mesh, mesh.vertices.copy())
    assert np.abs(rots.log_rotations).max() < 1e-12
    R = exp_rotation([1.1])
    rots = fit_rotations(mesh, mesh.vertices @ R.T + rng.standard_normal(2))
    assert np.allclose(rots.log_rotations, 1.1, atol=1e-10)
    assert not rots.fallback.any()


def test_fit_rotations_beats_random_search(bar_setup, rng):
    cage, vss, field, mesh = bar_setup
    phi = mesh.vertices + 0.03 * rng.standard_normal(mesh.vertices.shape)
    rots = fit_rotations(mesh, phi)
    Rm = rots.matrices()
    for i in (0, 10, 25):
        best_fit = arap_vertex_energy(phi, mesh, Rm[i], i)
        for _ in range(100):
            th = rng.uniform(-np.pi, np.pi)
            rand = arap_vertex_energy(phi, mesh, exp_rotation([th]), i)
            assert best_fit <= rand + 1e-12


def test_single_sample_estimator_unbiased(bar_setup, rng):
    cage, vss, field, mesh = bar_setup
    phi = mesh.vertices + 0.05 * rng.standard_normal(mesh.vertices.shape)
    i = 17
    nbr = mesh.neighbors[i]
    Ri = exp_rotation([0.15])
    exact = arap_vertex_energy(phi, mesh, Ri, i)
    draws = rng.integers(nbr.size, size=100_000)
    est = np.mean([arap_vertex_sample(phi, mesh, Ri, i, nbr[j]) for j in draws])
    assert abs(est - exact) / exact < 0.01


def test_arap_finetune_noop_when_rest(bar_setup):
    cage, vss, field, mesh = bar_setup
    fresh = create_field(cage, vss, seed=2)
    rest = DeformedCage.rest(cage)
    pts = mesh.vertices
    before = fresh.bake(pts).matrix
    cfg = FinetuneConfig(steps=60, rng_seed=0, batch_vertices=32)
    fresh, rots, losses = arap_finetune(fresh, mesh, rest, cfg)
    after = fresh.bake(pts).matrix
    rms = np.sqrt(np.mean((after - before) ** 2))
    assert losses[0] < 1e-12  # energy starts at ~0
    assert rms < 1e-3


def test_arap_finetune_reduces_bend_energy(bar_setup):
    cage, vss, field, mesh = bar_setup
    fresh = create_field(cage, vss, seed=6)
    bent = bent_bar_cage(cage)
    cfg = FinetuneConfig(steps=150, rng_seed=0, batch_vertices=48)
    baked0 = fresh.bake(mesh.vertices)
    rots0 = fit_rotations(mesh, baked0.matrix @ bent.vertices())
    before = arap_energy(baked0, mesh, bent, rots0)
    fresh, rots, losses = arap_finetune(fresh, mesh, bent, cfg)
    after = arap_energy(fresh.bake(mesh.vertices), mesh, bent, rots)
    assert after < before


# ---------------------------------------------------------------------------
# Inverse deformation


def test_inverse_energy_zero_on_match(bar_setup):
    cage, vss, field, mesh = bar_setup
    rest = DeformedCage.rest(cage)
    # target = the current deformation of the mesh (identity map here)
    target = type(mesh)(field.bake(mesh.vertices).matrix @ rest.vertices(),
                        mesh.elements)
    e = inverse_energy(field, mesh, target, rest, lam=1e-4, n_samples=256,
                       rng=np.random.default_rng(0))
    assert e < 1e-8


def test_inverse_energy_translation_analytic(bar_setup):
    cage, vss, field, mesh = bar_setup
    rest = DeformedCage.rest(cage)
    t = np.array([0.07, -0.04])
    target = type(mesh)(mesh.vertices + t, mesh.elements)
    e = inverse_energy(field, mesh, target, rest, lam=1e-4, n_samples=512,
                       rng=np.random.default_rng(0))
    expected = mesh.total_area() * np.linalg.norm(t)
    assert abs(e - expected) / expected < 1e-4


def test_inverse_energy_lambda_zero_is_distance_only(bar_setup):
    cage, vss, field, mesh = bar_setup
    rest = DeformedCage.rest(cage)
    rng = np.random.default_rng(3)
    target = type(mesh)(mesh.vertices + 0.02 * rng.standard_normal(mesh.vertices.shape),
                        mesh.elements)
    samples = mesh.sample_surface(256, np.random.default_rng(1))[:2]
    e0 = inverse_energy(field, mesh, target, rest, lam=0.0, samples=samples)
    pts = mesh.barycentric_points(*samples)
    phi = field.bake(pts).matrix @ rest.vertices()
    tgt = target.barycentric_points(*samples)
    expected = mesh.total_area() * np.linalg.norm(phi - tgt, axis=1).mean()
    assert np.isclose(e0, expected, rtol=1e-12)


def test_inverse_stage1_recovers_rigid_target(bar_setup):
    cage, vss, field, mesh = bar_setup
    R = exp_rotation([0.35])
    t = np.array([0.08, -0.05])
    target = type(mesh)(mesh.vertices @ R.T + t, mesh.elements)
    cfg = InverseConfig(n_samples=256, stage1_steps=900, stage2_steps=0,
                        rng_seed=0, optimize_field=False)
    deformed, field2, report = inverse_solve(field, mesh, target, cfg)
    assert report.final_mean_abs_distance < 1e-3


def test_inverse_mismatched_correspondence(bar_setup):
    cage, vss, field, mesh = bar_setup
    small = grid_rectangle_mesh([0.1, 0.05], [0.8, 0.2], 4, 2)
    with pytest.raises(ShapeError):
        inverse_energy(field, mesh, small, DeformedCage.rest(cage))


def test_inverse_stage1_divergence_detection(bar_setup):
    from baryfield.errors import TrainingDiverged

    cage, vss, field, mesh = bar_setup
    target = type(mesh)(mesh.vertices + np.array([0.3, 0.1]), mesh.elements)
    # gradient ascent: the fixed-sample energy rises every step, which the
    # divergence monitor must catch after ten consecutive increases
    cfg = InverseConfig(n_samples=64, stage1_steps=100, stage1_lr=-5e-3,
                        stage2_steps=0, rng_seed=0, optimize_field=False)
    with pytest.raises(TrainingDiverged) as err:
        inverse_solve(field, mesh, target, cfg)
    assert "consecutive" in str(err.value)
    assert err.value.diagnostics["step"] <= 100


def test_arap_energy_skips_isolated_vertices(bar_setup):
    import warnings as _warnings

    cage, vss, field, mesh = bar_setup
    verts = np.vstack([mesh.vertices, [[0.5, 0.12]]])  # unreferenced vertex
    island = type(mesh)(verts, mesh.elements)
    W = field.bake(island.vertices).matrix
    rots = RotationVariables(np.zeros((island.num_vertices, 1)))
    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        e = arap_energy(BakedWeights(W), island, DeformedCage.rest(cage), rots)
    assert e < 1e-18
    assert any("no neighbors" in str(w.message) for w in caught)
