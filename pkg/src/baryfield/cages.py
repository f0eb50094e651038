"""Canonical cage constructions used by tests, demos and the CLI.

All factories return unit-box-normalized cages (aspect preserved).
"""
from __future__ import annotations

import numpy as np

from .geometry import Cage, grid_rectangle_mesh


def _loop_edges(k):
    return np.stack([np.arange(k), (np.arange(k) + 1) % k], axis=1)


def triangle_cage():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.25, 1.0]])
    return Cage(verts, _loop_edges(3)).normalized()


def square_cage():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Cage(verts, _loop_edges(4)).normalized()


def regular_polygon_cage(k):
    ang = 2 * np.pi * np.arange(k) / k
    verts = 0.5 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return Cage(verts, _loop_edges(k)).normalized()


def hexagon_cage():
    return regular_polygon_cage(6)


def star_cage(tips=6, inner=0.5, outer=1.0):
    """Concave star polygon; the 6-tip, inner=0.5 version is the 12-vertex
    regression cage (220 candidate triangles, 68 retained)."""
    verts = []
    for i in range(tips):
        a_out = 2 * np.pi * i / tips
        a_in = 2 * np.pi * (i + 0.5) / tips
        verts.append([outer * np.cos(a_out), outer * np.sin(a_out)])
        verts.append([inner * np.cos(a_in), inner * np.sin(a_in)])
    return Cage(np.array(verts), _loop_edges(2 * tips)).normalized()


def lshape_cage():
    verts = np.array(
        [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]]
    )
    return Cage(verts, _loop_edges(6)).normalized()


def bar_cage():
    """Long 4:1 bar with midpoints on the long sides; bends at the middle."""
    verts = np.array(
        [[0.0, 0.0], [2.0, 0.0], [4.0, 0.0], [4.0, 1.0], [2.0, 1.0], [0.0, 1.0]]
    )
    return Cage(verts, _loop_edges(6)).normalized()


def polygon_cage(k):
    """Any-K convex polygon (used for candidate-count checks)."""
    return regular_polygon_cage(k)


def tetrahedron_cage():
    verts = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )
    faces = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
    return Cage(verts, faces).normalized()


def octahedron_cage():
    verts = np.array(
        [
            [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
        ]
    )
    faces = np.array(
        [
            [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
            [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
        ]
    )
    return Cage(verts, faces).normalized()


def cube_cage():
    verts = np.array(
        [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
            [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom (z=0), outward -z
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # front (y=0)
            [2, 3, 7], [2, 7, 6],  # back
            [1, 2, 6], [1, 6, 5],  # right
            [3, 0, 4], [3, 4, 7],  # left
        ]
    )
    return Cage(verts, faces).normalized()


def bar_interior_mesh(nx=16, ny=4, shrink=0.06):
    """Grid mesh strictly inside the bar cage."""
    cage = bar_cage()
    lo, hi = cage.bbox()
    pad = shrink * (hi - lo).max()
    return grid_rectangle_mesh(lo + pad, hi - pad, nx, ny)


def named_cage(name):
    factories = {
        "triangle": triangle_cage,
        "square": square_cage,
        "hexagon": hexagon_cage,
        "star": star_cage,
        "lshape": lshape_cage,
        "bar": bar_cage,
        "tetrahedron": tetrahedron_cage,
        "octahedron": octahedron_cage,
        "cube": cube_cage,
    }
    if name not in factories:
        raise KeyError(f"unknown cage '{name}'; options: {sorted(factories)}")
    return factories[name]()
