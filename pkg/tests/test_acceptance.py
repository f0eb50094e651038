"""Acceptance gate: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them live).

The long star-cage training run executes once (module fixture) and feeds
both descent tests; expect roughly 15 minutes for the whole module on a
2-core machine.
"""
import time

import numpy as np
import pytest

from baryfield import cages
from baryfield.deform import (
    DeformedCage,
    FinetuneConfig,
    InverseConfig,
    arap_energy,
    arap_finetune,
    arap_vertex_energy,
    arap_vertex_sample,
    exp_rotation,
    fit_rotations,
    inverse_solve,
)
from baryfield.energies import FDConfig, MollifierParams, mollifier_ramp, tv_loss
from baryfield.geometry import Simplex, sample_inside
from baryfield.neural_field import create_field
from baryfield.oracle import analytic_simplex_tv, universality_check
from baryfield.simplex_enum import PruningConfig, candidate_count, prune
from baryfield.training import TrainConfig, train


def report(name, ok, detail=""):
    print(f"ACCEPTANCE {'PASS' if ok else 'FAIL'}: {name} {detail}", flush=True)
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# Criterion 1: pointwise constraint suite on three cages


def test_constraint_suite():
    t0 = time.perf_counter()
    suite = {
        "triangle": cages.triangle_cage(),
        "hexagon": cages.hexagon_cage(),
        "star12": cages.star_cage(),
    }
    for name, cage in suite.items():
        vss = prune(cage, PruningConfig.defaults(2))
        field = create_field(cage, vss, seed=101)
        rng = np.random.default_rng(7)
        pts = sample_inside(cage, 10_000, rng)
        alpha, _ = field.forward_batch(pts)
        neg = float(alpha.min())
        pou = float(np.abs(alpha.sum(axis=1) - 1).max())
        rep = float(np.linalg.norm(alpha @ cage.vertices - pts, axis=1).max())
        assert neg >= -1e-7, f"{name}: min alpha {neg}"
        assert pou <= 1e-6, f"{name}: partition {pou}"
        assert rep <= 1e-5, f"{name}: reproduction {rep}"
        # Lagrange: near-vertex probes
        center = cage.vertices.mean(axis=0)
        for j in range(cage.num_vertices):
            v = cage.vertices[j]
            u = center - v
            p = v + 1e-4 / np.linalg.norm(u) * u
            a = field.evaluate(p)
            assert a[j] >= 0.999, f"{name}: Lagrange at vertex {j}: {a[j]}"
    elapsed = time.perf_counter() - t0
    report("constraint suite (3 cages x 1e4 points + Lagrange probes)",
           elapsed < 60.0, f"[{elapsed:.1f}s]")


# ---------------------------------------------------------------------------
# Criterion 2: combinatorics


def test_combinatorics_counts():
    star = cages.star_cage()
    c12 = candidate_count(12, 2)
    c34 = candidate_count(34, 2)
    vss = prune(star, PruningConfig.defaults(2))
    budget = star.num_vertices * 28
    ok = (c12 == 220) and (c34 == 5984) and (len(vss) <= budget)
    report("candidate/used simplex counts",
           ok, f"[C(12,3)={c12}, C(34,3)={c34}, used={len(vss)} <= {budget}]")
    assert len(vss) == 68  # regression: interior count equals used count


# ---------------------------------------------------------------------------
# Criterion 3: universality on convex cages


def test_universality_convex_cages():
    rng = np.random.default_rng(3)
    suite = [cages.regular_polygon_cage(k) for k in range(3, 9)]
    suite += [cages.tetrahedron_cage(), cages.octahedron_cage(), cages.cube_cage()]
    failures = 0
    total = 0
    for cage in suite:
        pts = sample_inside(cage, 50, rng)
        for p in pts:
            total += 1
            if not universality_check(p, cage, trials=5, rng=rng):
                failures += 1
    report("universality (vertex enumeration + decomposition)",
           failures == 0, f"[{total} points across {len(suite)} cages, "
                          f"{failures} failures]")


# ---------------------------------------------------------------------------
# Criterion 4: mollified TV fidelity


def test_mollified_tv_fidelity():
    # 1D two-segment jump capture at the reference parameters
    f1, f2 = 1.0, 0.3
    a, b, c = 0.2, 0.5, 0.8
    r, delta = 5e-3, 3000.0
    h = r / 2
    moll = MollifierParams(radius=r, sharpness=delta)

    def seg_sd(x, lo, hi):
        return np.minimum(x - lo, hi - x)

    def fstar(x):
        return (f1 * mollifier_ramp(seg_sd(x, a, b), moll)
                + f2 * mollifier_ramp(seg_sd(x, b, c), moll))

    w = 10 * r + h
    xs = np.linspace(b - w, b + w, 40001)
    fd = np.abs(fstar(xs + h) - fstar(xs - h)) / (2 * h)
    jump_est = float(np.trapezoid(fd, xs))
    jump_rel = abs(jump_est - abs(f1 - f2)) / abs(f1 - f2)

    tri = cages.triangle_cage()
    vss = prune(tri, PruningConfig.defaults(2))
    field = create_field(tri, vss, seed=5)
    batch = sample_inside(tri, 6000, np.random.default_rng(11))
    tv = tv_loss(field, batch)
    expected = analytic_simplex_tv(Simplex((0, 1, 2)), tri).sum()
    tri_rel = abs(tv - expected) / expected

    report("mollified TV fidelity",
           jump_rel < 0.05 and tri_rel < 0.02,
           f"[1D jump rel err {jump_rel:.2e}, triangle TV rel err {tri_rel:.3f}]")


# ---------------------------------------------------------------------------
# Criterion 5: training descent on the star cage (reference 2D config)


@pytest.fixture(scope="module")
def star_training_run():
    star = cages.star_cage()
    vss = prune(star, PruningConfig.defaults(2))
    field = create_field(star, vss, seed=0)
    eval_batch = sample_inside(star, 2048, np.random.default_rng(1))
    cfg = TrainConfig(steps=2000, learning_rate=1e-3, batch_size=3000,
                      loss="tv", rng_seed=0)
    t0 = time.perf_counter()
    field, result = train(field, cfg, eval_batch=eval_batch)
    elapsed = time.perf_counter() - t0
    return field, result, elapsed


def test_training_descent_determinism():
    star = cages.star_cage()
    vss = prune(star, PruningConfig.defaults(2))
    histories = []
    for _ in range(2):
        field = create_field(star, vss, seed=0)
        _, res = train(field, TrainConfig(steps=5, learning_rate=1e-3,
                                          batch_size=3000, loss="tv", rng_seed=0))
        histories.append(res.losses)
    report("training determinism (fixed seed)", histories[0] == histories[1],
           f"[5-step histories bitwise equal]")


def test_training_descent_regression(star_training_run):
    field, result, elapsed = star_training_run
    ratio = result.eval_losses[-1] / result.eval_losses[0]
    pairs = list(zip(result.eval_losses, result.eval_losses[1:]))
    frac_nonincreasing = np.mean([b <= a for a, b in pairs])
    ok = ratio < 0.75 and elapsed <= 15 * 60 and frac_nonincreasing >= 0.9
    report("training descent regression (established baseline)",
           ok, f"[held-out ratio {ratio:.3f} < 0.75, {elapsed / 60:.1f} min <= 15, "
               f"{frac_nonincreasing:.0%} checkpoint pairs non-increasing]")
    # training must not break validity
    pts = sample_inside(field.cage, 2000, np.random.default_rng(5))
    alpha, _ = field.forward_batch(pts)
    assert alpha.min() >= -1e-7
    assert np.abs(alpha.sum(axis=1) - 1).max() <= 1e-6


def test_training_descent_halving(star_training_run):
    field, result, elapsed = star_training_run
    ratio = result.eval_losses[-1] / result.eval_losses[0]
    # Known-infeasible at this scale: the optimized total variation lands on
    # the continuous-coordinates reference floor (mean-value coordinates score
    # ~3.96 on this cage with the same estimator) while the spatially-constant
    # random init starts near 5.7, so no optimizer can halve the loss. The
    # assertion is kept as specified rather than loosened; the regression test
    # above pins the achievable ratio.
    report("training descent halving", ratio < 0.5,
           f"[held-out ratio {ratio:.3f}, target < 0.5; reference floor "
           f"~0.70 for this cage/init]")


# ---------------------------------------------------------------------------
# Criterion 6: deformation-aware fine-tuning on the bent bar


def _bent_bar(cage, angle=np.pi / 2):
    verts = cage.vertices.copy()
    lo, hi = cage.bbox()
    pivot = np.array([0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])])
    R = exp_rotation([angle])
    for i, v in enumerate(verts):
        if v[0] > pivot[0] + 1e-9:
            verts[i] = pivot + R @ (v - pivot)
    return DeformedCage(np.zeros(1), 1.0, np.zeros(2), verts)


def test_arap_finetune_bent_bar():
    cage = cages.bar_cage()
    vss = prune(cage, PruningConfig.defaults(2))
    mesh = cages.bar_interior_mesh(nx=12, ny=3)
    field = create_field(cage, vss, seed=3)
    train(field, TrainConfig(steps=150, learning_rate=1e-3, batch_size=1024,
                             loss="weighted_tv", rng_seed=0))
    bent = _bent_bar(cage)
    baked0 = field.bake(mesh.vertices)
    rots0 = fit_rotations(mesh, baked0.matrix @ bent.vertices())
    before = arap_energy(baked0, mesh, bent, rots0)
    cfg = FinetuneConfig(steps=1200, network_lr=1e-3, rotation_lr=0.1, rng_seed=0)
    field, rots, _ = arap_finetune(field, mesh, bent, cfg)
    after = arap_energy(field.bake(mesh.vertices), mesh, bent, rots)
    report("deformation-aware fine-tuning on the bent bar", after < before,
           f"[rigidity energy {before:.4f} -> {after:.4f}]")


def test_arap_single_sample_estimator():
    cage = cages.bar_cage()
    mesh = cages.bar_interior_mesh(nx=12, ny=3)
    rng = np.random.default_rng(4)
    phi = mesh.vertices + 0.05 * rng.standard_normal(mesh.vertices.shape)
    i = 20
    nbr = mesh.neighbors[i]
    Ri = exp_rotation([0.2])
    exact = arap_vertex_energy(phi, mesh, Ri, i)
    draws = rng.integers(nbr.size, size=100_000)
    est = float(np.mean([arap_vertex_sample(phi, mesh, Ri, i, nbr[j])
                         for j in draws]))
    rel = abs(est - exact) / exact
    report("single-edge rigidity estimator unbiasedness", rel < 0.01,
           f"[relative error {rel:.4f} over 1e5 draws]")


# ---------------------------------------------------------------------------
# Criterion 7: inverse cage fitting


def test_inverse_recovers_known_cage_deformation():
    cage = cages.bar_cage()
    vss = prune(cage, PruningConfig.defaults(2))
    field = create_field(cage, vss, seed=2)
    mesh = cages.bar_interior_mesh(nx=12, ny=3)
    rng = np.random.default_rng(0)
    local = cage.vertices + 0.04 * rng.standard_normal(cage.vertices.shape)
    known = DeformedCage(np.array([0.3]), 1.05, np.array([0.06, -0.03]), local)
    target = type(mesh)(field.bake(mesh.vertices).matrix @ known.vertices(),
                        mesh.elements)
    cfg = InverseConfig(n_samples=384, stage1_steps=700, stage2_steps=1200,
                        rng_seed=0, optimize_field=False)
    fitted, field2, rep = inverse_solve(field, mesh, target, cfg)
    recon = field2.bake(mesh.vertices).matrix @ fitted.vertices()
    rms = float(np.sqrt(np.mean(np.sum((recon - target.vertices) ** 2, axis=1))))
    report("inverse solve recovers a known cage deformation", rms < 1e-3,
           f"[vertex RMS {rms:.2e}]")


def test_inverse_joint_beats_cage_only():
    cage = cages.bar_cage()
    vss = prune(cage, PruningConfig.defaults(2))
    mesh = cages.bar_interior_mesh(nx=12, ny=3)
    lo, hi = cage.bbox()
    midx, midy = 0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])

    def bend(pts, angle=np.pi / 2):
        out = pts.copy()
        rate = angle / (hi[0] - midx)
        right = pts[:, 0] > midx
        dx = pts[right, 0] - midx
        y = pts[right, 1] - midy
        th = dx * rate
        cx, cy = midx, midy + 1.0 / rate
        out[right, 0] = cx + (1.0 / rate - y) * np.sin(th)
        out[right, 1] = cy - (1.0 / rate - y) * np.cos(th)
        return out

    target = type(mesh)(bend(mesh.vertices), mesh.elements)
    final = {}
    for joint in (False, True):
        field = create_field(cage, vss, seed=2)
        cfg = InverseConfig(n_samples=384, stage1_steps=200, stage2_steps=900,
                            rng_seed=0, optimize_field=joint)
        _, _, rep = inverse_solve(field, mesh, target, cfg)
        final[joint] = rep.final_mean_abs_distance
    report("joint cage+field fit vs cage-only on a bend target",
           final[True] <= final[False],
           f"[joint {final[True]:.4f} <= cage-only {final[False]:.4f}]")


# ---------------------------------------------------------------------------
# Criterion 8: gradient correctness


def test_gradient_correctness_100_coordinates():
    star = cages.star_cage()
    vss = prune(star, PruningConfig.defaults(2))
    field = create_field(star, vss, seed=13, dtype=np.float64)
    rng = np.random.default_rng(17)
    pts = sample_inside(star, 4, rng)
    c = rng.standard_normal((4, star.num_vertices))

    def scalar():
        a, _ = field.forward_batch(pts)
        return float((c * a).sum())

    _, cache = field.forward_batch(pts, need_cache=True)
    grads = field.backward_batch(cache, c)
    arrays = field.params.arrays()
    # random coordinates among those resolvable by float64 central
    # differences (|g| above the FD noise floor of ~1e-8)
    pool = [(ai, flat) for ai, g in enumerate(grads)
            for flat in np.nonzero(np.abs(g).ravel() >= 3e-5)[0]]
    picks = rng.choice(len(pool), size=100, replace=False)
    worst = 0.0
    for pick in picks:
        ai, flat = pool[pick]
        arr, g = arrays[ai], grads[ai]
        idx = np.unravel_index(flat, arr.shape)
        eps = 1e-6 * max(1.0, abs(arr[idx]))
        old = arr[idx]
        arr[idx] = old + eps
        f1 = scalar()
        arr[idx] = old - eps
        f2 = scalar()
        arr[idx] = old
        fd = (f1 - f2) / (2 * eps)
        worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx])))
    report("parameter gradients vs central finite differences",
           worst <= 1e-3, f"[max relative error {worst:.2e} over 100 coordinates]")
