"""Smoothness objectives over the mollified field.

The losses are Monte Carlo estimates of integrals over the cage: a central
finite-difference stencil on the mollified evaluator picks up both the
in-region gradient and (through the mollifier ramp) the jump terms across
simplex boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch


@dataclass
class MollifierParams:
    """Scaled-logistic ramp over signed simplex-boundary distance."""

    radius: float = 5e-3
    sharpness: float = 3000.0
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and (self.radius <= 0 or self.sharpness <= 0):
            raise ValueError("mollifier radius and sharpness must be positive")

    @classmethod
    def defaults(cls, d):
        if d == 2:
            return cls(radius=5e-3, sharpness=3000.0)
        return cls(radius=8e-3, sharpness=1000.0)


@dataclass
class FDConfig:
    spacing: float = 2.5e-2

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("finite-difference spacing must be positive")


@dataclass
class WeightingFunction:
    """Distance blend Psi(t) = c + (1-c) t^2 used by weighted TV."""

    c: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise ValueError("blend parameter c must lie in [0, 1]")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.c + (1.0 - self.c) * t**2


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def mollifier_ramp(signed_dist, moll: MollifierParams):
    """Normalized logistic-of-ramp weight: 0 at d<=-r, 1/2 at d=0, 1 at d>=r.

    Preserves the input float dtype."""
    d = np.asarray(signed_dist)
    if d.dtype not in (np.float32, np.float64):
        d = d.astype(float)
    ramp = np.clip(d / d.dtype.type(moll.radius), -1.0, 1.0)
    s = _stable_sigmoid(d.dtype.type(moll.sharpness) * ramp)
    lo = float(_stable_sigmoid(np.array([-moll.sharpness]))[0])
    hi = float(_stable_sigmoid(np.array([moll.sharpness]))[0])
    return (s - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# Finite-difference machinery


def stencil_points(points, h):
    """(N, 2d, d) array of p +- h e_k; even entries are +, odd are -."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    out = np.repeat(points[:, None, :], 2 * d, axis=1)
    for k in range(d):
        out[:, 2 * k, k] += h
        out[:, 2 * k + 1, k] -= h
    return out


def usable_stencil_mask(cage, points, h, margin):
    """True where the point and its whole stencil stay inside the cage with
    at least `margin` distance to the cage boundary."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    stack = np.concatenate([points[:, None, :], stencil_points(points, h)], axis=1)
    flat = stack.reshape(-1, d)
    ok = cage.contains(flat) & (cage.distance_to_boundary(flat) > margin)
    return ok.reshape(n, 2 * d + 1).all(axis=1)


def fd_gradient(field, p, h):
    """Central-difference spatial gradient of the mollified coordinates at a
    single point: (K, d) matrix of per-coordinate gradients."""
    p = np.asarray(p, dtype=float)
    d = p.shape[-1]
    flat = stencil_points(p[None, :], h).reshape(2 * d, d)
    alpha, _ = field.forward_batch(flat, mollifier=field.mollifier)
    g = np.empty((alpha.shape[1], d))
    for k in range(d):
        g[:, k] = (alpha[2 * k] - alpha[2 * k + 1]) / (2.0 * h)
    return g


# ---------------------------------------------------------------------------
# Losses (forward only and forward+parameter-gradient)


def _filter_batch(field, batch, fdcfg, moll):
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    mask = usable_stencil_mask(field.cage, batch, fdcfg.spacing, moll.radius)
    usable = batch[mask]
    if usable.shape[0] == 0:
        raise EmptyBatch("no batch point admits a full finite-difference stencil")
    return usable


def _fd_loss(field, batch, fdcfg, moll, kind, psi=None, need_grad=False):
    pts = _filter_batch(field, batch, fdcfg, moll)
    n, d = pts.shape
    h = fdcfg.spacing
    flat = stencil_points(pts, h).reshape(n * 2 * d, d)
    alpha, cache = field.forward_batch(flat, mollifier=moll, need_cache=need_grad,
                                       compute_dtype=field.params.dtype)
    K = alpha.shape[1]
    alpha = alpha.reshape(n, 2 * d, K)
    g = np.empty((n, K, d))
    for k in range(d):
        g[:, :, k] = (alpha[:, 2 * k, :] - alpha[:, 2 * k + 1, :]) / (2.0 * h)

    vol = field.cage.volume_estimate()
    if psi is None:
        w = np.ones((n, K))
    else:
        dist = np.linalg.norm(pts[:, None, :] - field.cage.vertices[None, :, :], axis=2)
        w = psi(dist)

    norms = np.linalg.norm(g, axis=2)  # (n, K)
    if kind == "tv":
        loss = vol * float((w * norms).sum(axis=1).mean())
    elif kind == "dirichlet":
        loss = vol * float((w * norms**2).sum(axis=1).mean())
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    if not need_grad:
        return loss, None

    if kind == "tv":
        safe = np.where(norms > 1e-30, norms, 1.0)
        dg = (vol / n) * w[:, :, None] * np.where(norms[:, :, None] > 1e-30,
                                                  g / safe[:, :, None], 0.0)
    else:
        dg = (vol / n) * 2.0 * w[:, :, None] * g
    dalpha = np.zeros((n, 2 * d, K))
    for k in range(d):
        dalpha[:, 2 * k, :] += dg[:, :, k] / (2.0 * h)
        dalpha[:, 2 * k + 1, :] -= dg[:, :, k] / (2.0 * h)
    grads = field.backward_batch(cache, dalpha.reshape(n * 2 * d, K))
    return loss, grads


def tv_loss(field, batch, fdcfg=None, moll=None):
    """Monte Carlo total variation (interior + mollified jump terms)."""
    fdcfg = fdcfg or FDConfig()
    moll = moll or field.mollifier
    loss, _ = _fd_loss(field, batch, fdcfg, moll, "tv")
    return loss


def weighted_tv_loss(field, batch, fdcfg=None, moll=None, psi=None, cage=None):
    """TV with each coordinate's integrand scaled by Psi(|p - v_i|)."""
    fdcfg = fdcfg or FDConfig()
    moll = moll or field.mollifier
    psi = psi or WeightingFunction()
    if psi.c == 1.0:
        return tv_loss(field, batch, fdcfg, moll)
    loss, _ = _fd_loss(field, batch, fdcfg, moll, "tv", psi=psi)
    return loss


def dirichlet_loss(field, batch, fdcfg=None, moll=None):
    """Monte Carlo squared-gradient energy with the same mollified stencil."""
    fdcfg = fdcfg or FDConfig()
    moll = moll or field.mollifier
    loss, _ = _fd_loss(field, batch, fdcfg, moll, "dirichlet")
    return loss


def loss_with_gradient(field, batch, fdcfg, moll, kind, psi=None):
    """(loss, parameter gradients) for the training loop."""
    if kind == "tv":
        return _fd_loss(field, batch, fdcfg, moll, "tv", need_grad=True)
    if kind == "weighted_tv":
        psi = psi or WeightingFunction()
        use_psi = None if psi.c == 1.0 else psi
        return _fd_loss(field, batch, fdcfg, moll, "tv", psi=use_psi, need_grad=True)
    if kind == "dirichlet":
        return _fd_loss(field, batch, fdcfg, moll, "dirichlet", need_grad=True)
    raise ValueError(f"unknown loss kind {kind!r}")
