import numpy as np
import pytest

from baryfield import cages
from baryfield.energies import (
    FDConfig,
    MollifierParams,
    WeightingFunction,
    dirichlet_loss,
    fd_gradient,
    loss_with_gradient,
    mollifier_ramp,
    stencil_points,
    tv_loss,
    usable_stencil_mask,
    weighted_tv_loss,
)
from baryfield.errors import EmptyBatch
from baryfield.geometry import Simplex, sample_inside
from baryfield.oracle import analytic_simplex_dirichlet, analytic_simplex_tv


def _usable_points(field, n, rng, fdcfg=None, moll=None):
    fdcfg = fdcfg or FDConfig()
    moll = moll or field.mollifier
    pts = sample_inside(field.cage, 4 * n, rng)
    mask = usable_stencil_mask(field.cage, pts, fdcfg.spacing, moll.radius)
    return pts[mask][:n]


def test_fd_gradient_partition_of_unity(star_field, rng):
    p = _usable_points(star_field, 1, rng)[0]
    g = fd_gradient(star_field, p, FDConfig().spacing)
    assert np.abs(g.sum(axis=0)).max() < 1e-4


def test_fd_gradient_linear_reproduction(star_field, star_cage, rng):
    h = FDConfig().spacing
    for p in _usable_points(star_field, 5, rng):
        g = fd_gradient(star_field, p, h)
        M = np.einsum("kd,ke->de", g, star_cage.vertices)  # sum_i grad a_i v_i^T
        assert np.abs(M - np.eye(2)).max() < 5e-2  # O(h^2) + mollifier bands


def test_fd_gradient_single_triangle_analytic(triangle_field, triangle_cage, rng):
    s = Simplex((0, 1, 2))
    from baryfield.geometry import simplex_heights

    h_i = simplex_heights(s, triangle_cage)
    p = _usable_points(triangle_field, 3, rng)
    for q in p:
        g = fd_gradient(triangle_field, q, FDConfig().spacing)
        mags = np.linalg.norm(g, axis=1)
        assert np.allclose(mags, 1.0 / h_i, rtol=1e-6)


def test_tv_loss_single_triangle_within_2pct(triangle_field, triangle_cage, rng):
    s = Simplex((0, 1, 2))
    expected = analytic_simplex_tv(s, triangle_cage).sum()
    batch = sample_inside(triangle_cage, 6000, rng)
    loss = tv_loss(triangle_field, batch)
    assert abs(loss - expected) / expected < 0.02


def test_dirichlet_single_triangle_within_2pct(triangle_field, triangle_cage, rng):
    s = Simplex((0, 1, 2))
    expected = analytic_simplex_dirichlet(s, triangle_cage).sum()
    batch = sample_inside(triangle_cage, 6000, rng)
    loss = dirichlet_loss(triangle_field, batch)
    assert abs(loss - expected) / expected < 0.02


def test_dirichlet_matches_fem_assembly(triangle_field, triangle_cage, rng):
    # P1 finite-element oracle: interpolate the exact coordinates on a small
    # mesh of the (single-simplex) region and assemble the stiffness energy.
    from baryfield.geometry import grid_rectangle_mesh

    verts = triangle_cage.vertices
    # affine-map a structured unit-square mesh onto the triangle's interior
    base = grid_rectangle_mesh([0.05, 0.05], [0.9, 0.9], 12, 12)
    uv = base.vertices.copy()
    keep = uv.sum(axis=1) < 0.95  # restrict to the lower-left half square
    # build barycentric samples (u, v) -> inside the triangle
    nodes = verts[0] + np.outer(uv[:, 0], verts[1] - verts[0]) \
        + np.outer(uv[:, 1], verts[2] - verts[0])
    tri_elems = [e for e in base.elements if keep[e].all()]
    energy_fem = 0.0
    for e in tri_elems:
        tri = nodes[e]
        area = 0.5 * abs((tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
                         - (tri[1, 1] - tri[0, 1]) * (tri[2, 0] - tri[0, 0]))
        M = np.column_stack([tri, np.ones(3)])
        for i in range(3):
            alpha_nodes = np.array([
                triangle_field.evaluate(q)[i] for q in tri
            ])
            coeffs = np.linalg.solve(M, alpha_nodes)  # [gx, gy, const]
            energy_fem += area * (coeffs[0] ** 2 + coeffs[1] ** 2)
    covered_area = sum(
        0.5 * abs((nodes[e][1, 0] - nodes[e][0, 0]) * (nodes[e][2, 1] - nodes[e][0, 1])
                  - (nodes[e][1, 1] - nodes[e][0, 1]) * (nodes[e][2, 0] - nodes[e][0, 0]))
        for e in tri_elems
    )
    s = Simplex((0, 1, 2))
    # densities: FEM energy over covered area vs analytic energy over full area
    from baryfield.geometry import simplex_volume

    full_area = simplex_volume(s, triangle_cage)
    analytic = analytic_simplex_dirichlet(s, triangle_cage).sum()
    assert abs(energy_fem / covered_area - analytic / full_area) / (analytic / full_area) < 0.02


def test_fig6_jump_capture_quadrature():
    # two 1D segment indicators sharing a vertex; the FD estimate of total
    # variation over the joint must recover the jump |f1 - f2|
    f1, f2 = 1.0, 0.3
    a, b, c = 0.2, 0.5, 0.8
    r = 5e-3
    h = r / 2

    def seg_sd(x, lo, hi):
        return np.minimum(x - lo, hi - x)

    def estimate(delta):
        moll = MollifierParams(radius=r, sharpness=delta)

        def fstar(x):
            return (f1 * mollifier_ramp(seg_sd(x, a, b), moll)
                    + f2 * mollifier_ramp(seg_sd(x, b, c), moll))

        w = 10 * r + h
        xs = np.linspace(b - w, b + w, 40001)
        fd = np.abs(fstar(xs + h) - fstar(xs - h)) / (2 * h)
        return float(np.trapezoid(fd, xs))

    jump = abs(f1 - f2)
    errs = {d: abs(estimate(d) - jump) for d in (300, 1000, 3000)}
    assert errs[3000] / jump < 0.05
    # convergence toward the jump as delta grows (quadrature noise floor 1e-6)
    assert errs[3000] <= errs[300] + 1e-6


def test_weighted_tv_equals_tv_at_c1(star_field, rng):
    batch = sample_inside(star_field.cage, 800, rng)
    a = tv_loss(star_field, batch)
    b = weighted_tv_loss(star_field, batch, psi=WeightingFunction(c=1.0))
    assert a == b  # bitwise


def test_weighting_function_values():
    psi = WeightingFunction()
    assert psi.c == 0.1
    assert np.isclose(psi(0.0), 0.1)
    assert np.isclose(psi(1.0), 1.0)
    psi0 = WeightingFunction(c=0.0)
    assert psi0(0.0) == 0.0


def test_weighted_tv_discounts_near_vertex_mass(star_field, star_cage, rng):
    batch = sample_inside(star_cage, 1000, rng)
    unweighted = tv_loss(star_field, batch)
    weighted = weighted_tv_loss(star_field, batch, psi=WeightingFunction(c=0.1))
    assert weighted < unweighted  # distances < 1 inside the unit box


def test_losses_batch_permutation_invariant(star_field, rng):
    batch = sample_inside(star_field.cage, 500, rng)
    perm = rng.permutation(batch.shape[0])
    assert np.isclose(tv_loss(star_field, batch), tv_loss(star_field, batch[perm]),
                      rtol=0, atol=1e-12)
    assert np.isclose(dirichlet_loss(star_field, batch),
                      dirichlet_loss(star_field, batch[perm]), rtol=0, atol=1e-12)


def test_losses_finite_and_nonnegative(star_field, rng):
    batch = sample_inside(star_field.cage, 400, rng)
    for fn in (tv_loss, dirichlet_loss):
        val = fn(star_field, batch)
        assert np.isfinite(val)
        assert val >= 0


def test_empty_batch_raises(star_field, star_cage):
    # points hugging the boundary: every stencil exits the margin zone
    v0 = star_cage.vertices[0]
    center = star_cage.vertices.mean(axis=0)
    p = v0 + 1e-6 * (center - v0)
    with pytest.raises(EmptyBatch):
        tv_loss(star_field, p[None, :])


def test_stencil_layout():
    pts = np.array([[0.5, 0.25]])
    st = stencil_points(pts, 0.1)
    assert st.shape == (1, 4, 2)
    assert np.allclose(st[0, 0], [0.6, 0.25])
    assert np.allclose(st[0, 1], [0.4, 0.25])
    assert np.allclose(st[0, 2], [0.5, 0.35])
    assert np.allclose(st[0, 3], [0.5, 0.15])


def test_loss_with_gradient_returns_full_param_set(star_field, rng):
    batch = sample_inside(star_field.cage, 300, rng)
    loss, grads = loss_with_gradient(star_field, batch, FDConfig(),
                                     star_field.mollifier, "tv")
    arrays = star_field.params.arrays()
    assert len(grads) == len(arrays)
    for g, a in zip(grads, arrays):
        assert g.shape == a.shape
        assert np.all(np.isfinite(g))


def test_training_loss_gradient_matches_fd(star_cage, star_vss, rng):
    # end-to-end FD check of the TV loss gradient in float64
    from baryfield.neural_field import create_field

    field = create_field(star_cage, star_vss, seed=21, dtype=np.float64)
    batch = sample_inside(star_cage, 40, rng)
    moll = MollifierParams(radius=5e-3, sharpness=300.0)
    fdc = FDConfig()

    def loss():
        val, _ = loss_with_gradient(field, batch, fdc, moll, "tv")
        return val

    _, grads = loss_with_gradient(field, batch, fdc, moll, "tv")
    arrays = field.params.arrays()
    pool = [(ai, flat) for ai, g in enumerate(grads)
            for flat in np.nonzero(np.abs(g).ravel() >= 1e-3)[0]]
    assert pool, "no resolvable coordinates"
    picks = rng.choice(len(pool), size=min(12, len(pool)), replace=False)
    for pick in picks:
        ai, flat = pool[pick]
        arr, g = arrays[ai], grads[ai]
        idx = np.unravel_index(flat, arr.shape)
        eps = 1e-6 * max(1.0, abs(arr[idx]))
        old = arr[idx]
        arr[idx] = old + eps
        f1 = loss()
        arr[idx] = old - eps
        f2 = loss()
        arr[idx] = old
        fd = (f1 - f2) / (2 * eps)
        rel = abs(fd - g[idx]) / max(abs(fd), abs(g[idx]))
        assert rel < 2e-3, (ai, idx, fd, g[idx])
