"""File formats: OBJ meshes, cage/simplex-set JSON, float32 checkpoints,
baked weight matrices, loss CSVs and run manifests.

Binary payloads are little-endian float32 with a JSON sidecar header
(`<stem>.bin` + `<stem>.json`) so non-Python consumers can read them.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from typing import Optional

import numpy as np

from .errors import ShapeError
from .geometry import Cage, InteriorMesh
from .neural_field import (
    BakedWeights,
    CoordinateField,
    FieldParams,
    HashGridConfig,
    HashGridEncoding,
    Mlp,
)
from .simplex_enum import PruningConfig, VirtualSimplexSet


# ---------------------------------------------------------------------------
# OBJ


def load_obj(path, dim=3):
    """Vertices and triangle faces from a (triangulated) OBJ file."""
    verts = []
    faces = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                ids = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
                if len(ids) != 3:
                    raise ShapeError(f"non-triangular face in {path}: {ids}")
                faces.append(ids)
    verts = np.asarray(verts, dtype=float)
    if dim == 2:
        verts = verts[:, :2]
    return verts, np.asarray(faces, dtype=int).reshape(-1, 3)


def save_obj(path, vertices, faces):
    vertices = np.asarray(vertices, dtype=float)
    with open(path, "w") as fh:
        for v in vertices:
            x, y = v[0], v[1]
            z = v[2] if vertices.shape[1] == 3 else 0.0
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for f in np.asarray(faces, dtype=int):
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_mesh(path, dim=3):
    verts, faces = load_obj(path, dim=dim)
    return InteriorMesh(verts, faces)


# ---------------------------------------------------------------------------
# Cage and simplex-set JSON


def load_cage(path, normalize=True):
    with open(path) as fh:
        cage = Cage.from_json_dict(json.load(fh))
    return cage.normalized() if normalize else cage


def save_cage(path, cage: Cage):
    with open(path, "w") as fh:
        json.dump(cage.to_json_dict(), fh)


def load_simplex_set(path, cage: Cage):
    with open(path) as fh:
        data = json.load(fh)
    vss = VirtualSimplexSet.from_json_dict(data, cage.num_vertices)
    cfg = data.get("config")
    return vss, PruningConfig.from_json_dict(cfg) if cfg else None


def save_simplex_set(path, vss: VirtualSimplexSet, config: Optional[PruningConfig] = None):
    with open(path, "w") as fh:
        json.dump(vss.to_json_dict(config), fh)


# ---------------------------------------------------------------------------
# Binary payload helpers


def _write_payload(stem, header, arrays):
    blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays)
    with open(stem + ".bin", "wb") as fh:
        fh.write(blob)
    with open(stem + ".json", "w") as fh:
        json.dump(header, fh)


def _read_payload(stem):
    with open(stem + ".json") as fh:
        header = json.load(fh)
    flat = np.fromfile(stem + ".bin", dtype="<f4")
    return header, flat


# ---------------------------------------------------------------------------
# Field checkpoints


def save_checkpoint(stem, field: CoordinateField):
    params = field.params
    arrays = params.arrays()
    header = {
        "format": "baryfield-checkpoint",
        "dtype": "<f4",
        "arrays": [{"shape": list(a.shape)} for a in arrays],
        "encoding": params.encoding.config.to_json_dict(),
        "mlp_sizes": params.mlp.sizes,
        "negative_slope": params.mlp.negative_slope,
        "simplex_set_hash": field.vss.set_hash(),
        "num_cage_vertices": field.cage.num_vertices,
        "d": field.cage.d,
        "mollifier": {
            "radius": field.mollifier.radius,
            "sharpness": field.mollifier.sharpness,
            "enabled": field.mollifier.enabled,
        },
    }
    _write_payload(stem, header, arrays)


def load_checkpoint(stem, cage: Cage, vss: VirtualSimplexSet, dtype=np.float32):
    from .energies import MollifierParams

    header, flat = _read_payload(stem)
    if header.get("format") != "baryfield-checkpoint":
        raise ShapeError(f"{stem}.json is not a field checkpoint")
    if header["simplex_set_hash"] != vss.set_hash():
        raise ShapeError("checkpoint was trained on a different simplex set")
    enc_cfg = HashGridConfig.from_json_dict(header["encoding"])
    rng = np.random.default_rng(0)
    encoding = HashGridEncoding.init_random(enc_cfg, header["d"], rng, dtype=dtype)
    sizes = header["mlp_sizes"]
    mlp = Mlp.init_random(sizes, rng, dtype=dtype)
    mlp.negative_slope = header["negative_slope"]
    params = FieldParams(encoding, mlp)
    arrays = params.arrays()
    shapes = [tuple(a["shape"]) for a in header["arrays"]]
    if [tuple(a.shape) for a in arrays] != shapes:
        raise ShapeError("checkpoint array shapes do not match the architecture")
    offset = 0
    loaded = []
    for shape in shapes:
        size = int(np.prod(shape))
        loaded.append(flat[offset:offset + size].reshape(shape).astype(dtype))
        offset += size
    if offset != flat.size:
        raise ShapeError("checkpoint payload size mismatch")
    params.load_arrays(loaded)
    m = header["mollifier"]
    moll = MollifierParams(radius=m["radius"], sharpness=m["sharpness"],
                           enabled=m["enabled"])
    return CoordinateField(cage, vss, params, moll)


# ---------------------------------------------------------------------------
# Baked weights


def save_baked_weights(stem, baked: BakedWeights):
    header = {
        "format": "baryfield-baked-weights",
        "dtype": "<f4",
        "n_points": int(baked.n_points),
        "K": int(baked.num_cage_vertices),
    }
    _write_payload(stem, header, [baked.matrix])


def load_baked_weights(stem):
    header, flat = _read_payload(stem)
    if header.get("format") != "baryfield-baked-weights":
        raise ShapeError(f"{stem}.json is not a baked-weights header")
    n, k = header["n_points"], header["K"]
    if flat.size != n * k:
        raise ShapeError("baked-weights payload size mismatch")
    return BakedWeights(flat.reshape(n, k).astype(float))


# ---------------------------------------------------------------------------
# CSV + manifest


def save_loss_csv(path, rows, header=("step", "loss", "wall_clock")):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_manifest(path, config, inputs, seed, checkpoints=(), metrics=None):
    manifest = {
        "config": config,
        "input_hashes": {name: file_sha256(p) for name, p in inputs.items()
                         if p and os.path.exists(p)},
        "seed": seed,
        "checkpoints": list(checkpoints),
        "metrics": metrics or {},
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest
