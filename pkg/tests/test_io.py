import json

import numpy as np
import pytest

from baryfield import cages, io as bio
from baryfield.errors import ShapeError
from baryfield.geometry import grid_rectangle_mesh, sample_inside
from baryfield.neural_field import BakedWeights, create_field
from baryfield.simplex_enum import PruningConfig, prune


def test_obj_roundtrip(tmp_path):
    mesh = grid_rectangle_mesh([0, 0], [1, 0.5], 3, 2)
    path = tmp_path / "mesh.obj"
    bio.save_obj(path, mesh.vertices, mesh.elements)
    verts, faces = bio.load_obj(path, dim=2)
    assert np.allclose(verts, mesh.vertices)
    assert np.array_equal(faces, mesh.elements)


def test_obj_3d_roundtrip(tmp_path):
    cube = cages.cube_cage()
    path = tmp_path / "cube.obj"
    bio.save_obj(path, cube.vertices, cube.facets)
    verts, faces = bio.load_obj(path, dim=3)
    assert np.allclose(verts, cube.vertices)
    assert np.array_equal(faces, cube.facets)


def test_cage_json_roundtrip(tmp_path):
    star = cages.star_cage()
    path = tmp_path / "cage.json"
    bio.save_cage(path, star)
    back = bio.load_cage(path, normalize=False)
    assert np.allclose(back.vertices, star.vertices)
    assert np.array_equal(back.facets, star.facets)
    # normalization on load keeps the unit box
    norm = bio.load_cage(path)
    lo, hi = norm.bbox()
    assert np.isclose((hi - lo).max(), 1.0)


def test_simplex_set_roundtrip(tmp_path):
    star = cages.star_cage()
    cfg = PruningConfig.defaults(2)
    vss = prune(star, cfg)
    path = tmp_path / "vss.json"
    bio.save_simplex_set(path, vss, cfg)
    back, cfg2 = bio.load_simplex_set(path, star)
    assert back.set_hash() == vss.set_hash()
    assert cfg2 == cfg


def test_checkpoint_roundtrip(tmp_path, star_cage, star_vss, rng):
    field = create_field(star_cage, star_vss, seed=8)
    stem = str(tmp_path / "ckpt")
    bio.save_checkpoint(stem, field)
    back = bio.load_checkpoint(stem, star_cage, star_vss)
    pts = sample_inside(star_cage, 50, rng)
    a1, _ = field.forward_batch(pts)
    a2, _ = back.forward_batch(pts)
    assert np.array_equal(a1, a2)
    assert back.mollifier == field.mollifier


def test_checkpoint_rejects_other_simplex_set(tmp_path, star_cage, star_vss):
    field = create_field(star_cage, star_vss, seed=8)
    stem = str(tmp_path / "ckpt")
    bio.save_checkpoint(stem, field)
    square = cages.square_cage()
    other = prune(square, PruningConfig.defaults(2))
    with pytest.raises(ShapeError):
        bio.load_checkpoint(stem, square, other)


def test_baked_weights_roundtrip(tmp_path, rng):
    W = rng.dirichlet(np.ones(6), size=40)
    stem = str(tmp_path / "weights")
    bio.save_baked_weights(stem, BakedWeights(W))
    back = bio.load_baked_weights(stem)
    assert back.n_points == 40 and back.num_cage_vertices == 6
    assert np.abs(back.matrix - W).max() < 1e-6  # float32 payload

    header = json.loads(open(stem + ".json").read())
    assert header["format"] == "baryfield-baked-weights"
    assert header["dtype"] == "<f4"


def test_loss_csv(tmp_path):
    rows = [(1, 0.5, 0.01), (2, 0.4, 0.02)]
    path = tmp_path / "loss.csv"
    bio.save_loss_csv(path, rows)
    text = open(path).read().strip().splitlines()
    assert text[0] == "step,loss,wall_clock"
    assert len(text) == 3


def test_manifest(tmp_path):
    cage_path = tmp_path / "cage.json"
    bio.save_cage(cage_path, cages.square_cage())
    path = tmp_path / "manifest.json"
    m = bio.save_manifest(path, {"steps": 3}, {"cage": str(cage_path)}, seed=7,
                          checkpoints=["a"], metrics={"loss": 1.0})
    assert m["seed"] == 7
    assert len(m["input_hashes"]["cage"]) == 64
    on_disk = json.loads(open(path).read())
    assert on_disk == m
