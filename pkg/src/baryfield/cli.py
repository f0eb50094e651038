"""Command-line pipeline: prune, train, finetune-arap, inverse, bake,
deform, verify, report.

Exit codes: 0 ok, 1 malformed input, 2 constraint-suite failure,
3 training divergence.
"""
from __future__ import annotations

import argparse
import json
import os
import sys


def _build_parser():
    p = argparse.ArgumentParser(prog="baryfield")
    p.add_argument("--threads", type=int, default=None,
                   help="BLAS/OpenMP thread count (also via BARYFIELD_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        return sp

    sp = add("prune", help="enumerate and prune virtual simplices")
    sp.add_argument("--cage", required=True)
    sp.add_argument("--config", default=None, help="pruning config JSON")
    sp.add_argument("--mesh", default=None, help="interior mesh OBJ for coverage samples")
    sp.add_argument("--out", required=True)

    sp = add("train", help="train the coordinate field")
    sp.add_argument("--cage", required=True)
    sp.add_argument("--simplices", required=True)
    sp.add_argument("--config", default=None, help="training config JSON")
    sp.add_argument("--loss", default=None, choices=["tv", "wtv", "dirichlet"])
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out-dir", required=True)

    sp = add("finetune-arap", help="deformation-aware fine-tuning")
    sp.add_argument("--cage", required=True)
    sp.add_argument("--simplices", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--deformed-cage", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out-dir", required=True)

    sp = add("inverse", help="fit a deformed cage to a target mesh")
    sp.add_argument("--cage", required=True)
    sp.add_argument("--simplices", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out-dir", required=True)

    sp = add("bake", help="sample the field into a dense weight matrix")
    sp.add_argument("--cage", required=True)
    sp.add_argument("--simplices", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--points", required=True, help="OBJ whose vertices are baked")
    sp.add_argument("--out", required=True, help="output stem (.bin/.json)")

    sp = add("deform", help="apply baked weights to a deformed cage")
    sp.add_argument("--weights", required=True, help="baked weights stem")
    sp.add_argument("--deformed-cage", required=True)
    sp.add_argument("--points", required=True, help="OBJ supplying faces/vertex count")
    sp.add_argument("--out", required=True)

    sp = add("verify", help="run the brute-force conformance suites")
    sp.add_argument("--cage", default=None, help="optional cage JSON; default suite otherwise")
    sp.add_argument("--out", default=None, help="write the JSON summary here")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("report", help="summarize a training run directory")
    sp.add_argument("--run-dir", required=True)
    return p


def _set_threads(n):
    if n is None:
        n = os.environ.get("BARYFIELD_THREADS")
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _stem(path):
    if path.endswith(".bin"):
        return path[:-4]
    if path.endswith(".json"):
        return path[:-5]
    return path


def main(argv=None):
    args = _build_parser().parse_args(argv)
    _set_threads(args.threads)

    # Imports happen after thread setup so BLAS picks the env up.
    import numpy as np

    from . import io as bio
    from .errors import BaryfieldError, TrainingDiverged
    from .simplex_enum import PruningConfig, candidate_count, prune

    try:
        if args.command == "prune":
            cage = bio.load_cage(args.cage)
            cfg = PruningConfig.defaults(cage.d)
            if args.config:
                with open(args.config) as fh:
                    cfg = PruningConfig.from_json_dict(json.load(fh))
            interior = None
            if args.mesh:
                interior = bio.load_mesh(args.mesh, dim=cage.d).vertices
            vss = prune(cage, cfg, interior_samples=interior)
            bio.save_simplex_set(args.out, vss, cfg)
            print(json.dumps({
                "cage_vertices": cage.num_vertices,
                "possible_simplices": candidate_count(cage.num_vertices, cage.d),
                "used_simplices": len(vss),
                "budget": cage.num_vertices * cfg.max_per_vertex
                + cfg.n_inside * cfg.max_per_interior_point,
            }))
            return 0

        if args.command == "train":
            return _cmd_train(args)
        if args.command == "finetune-arap":
            return _cmd_finetune(args)
        if args.command == "inverse":
            return _cmd_inverse(args)
        if args.command == "bake":
            return _cmd_bake(args)
        if args.command == "deform":
            return _cmd_deform(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "report":
            return _cmd_report(args)
        raise AssertionError(f"unhandled command {args.command}")
    except TrainingDiverged as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return 3
    except (BaryfieldError, OSError, KeyError, ValueError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def _load_field(args, dtype=None):
    import numpy as np

    from . import io as bio

    cage = bio.load_cage(args.cage)
    vss, _ = bio.load_simplex_set(args.simplices, cage)
    field = bio.load_checkpoint(_stem(args.checkpoint), cage, vss,
                                dtype=dtype or np.float32)
    return cage, vss, field


def _cmd_train(args):
    import numpy as np

    from . import io as bio
    from .geometry import sample_inside
    from .neural_field import create_field
    from .training import TrainConfig, train

    cage = bio.load_cage(args.cage)
    vss, _ = bio.load_simplex_set(args.simplices, cage)
    cfg = TrainConfig.defaults(cage.d)
    if args.config:
        with open(args.config) as fh:
            cfg = TrainConfig.from_json_dict(json.load(fh))
    if args.loss:
        cfg.loss = {"wtv": "weighted_tv"}.get(args.loss, args.loss)
    if args.seed is not None:
        cfg.rng_seed = args.seed

    os.makedirs(args.out_dir, exist_ok=True)
    field = create_field(cage, vss, seed=cfg.rng_seed)
    eval_batch = sample_inside(cage, min(cfg.batch_size, 2048),
                               np.random.default_rng(cfg.rng_seed + 1))
    checkpoints = []

    def save_ckpt(step, fld):
        stem = os.path.join(args.out_dir, f"ckpt_{step:06d}")
        bio.save_checkpoint(stem, fld)
        checkpoints.append(stem)

    field, result = train(field, cfg, eval_batch=eval_batch,
                          checkpoint_callback=save_ckpt)
    if result.aborted:
        print("error: non-finite loss; restored last checkpoint", file=sys.stderr)
        return 3
    bio.save_loss_csv(os.path.join(args.out_dir, "loss.csv"), result.history_rows())
    bio.save_loss_csv(os.path.join(args.out_dir, "eval_loss.csv"),
                      list(zip(result.eval_steps, result.eval_losses)),
                      header=("step", "eval_loss"))
    metrics = {
        "initial_eval_loss": result.eval_losses[0] if result.eval_losses else None,
        "final_eval_loss": result.eval_losses[-1] if result.eval_losses else None,
        "skipped_updates": result.skipped_updates,
    }
    bio.save_manifest(os.path.join(args.out_dir, "manifest.json"),
                      {"train": cfg.to_json_dict()},
                      {"cage": args.cage, "simplices": args.simplices},
                      cfg.rng_seed, checkpoints, metrics)
    print(json.dumps(metrics))
    return 0


def _cmd_finetune(args):
    from . import io as bio
    from .deform import DeformedCage, FinetuneConfig, arap_energy, arap_finetune, fit_rotations
    from .training import LrDecay

    cage, vss, field = _load_field(args)
    mesh = bio.load_mesh(args.mesh, dim=cage.d)
    with open(args.deformed_cage) as fh:
        deformed = DeformedCage.from_json_dict(json.load(fh))
    cfg = FinetuneConfig()
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        decay = raw.pop("lr_decay", None)
        cfg = FinetuneConfig(**raw)
        if decay:
            cfg.lr_decay = LrDecay(**decay)
    baked = field.bake(mesh.vertices)
    before = arap_energy(baked, mesh, deformed,
                         fit_rotations(mesh, baked.matrix @ deformed.vertices()))
    field, rotations, losses = arap_finetune(field, mesh, deformed, cfg)
    after = arap_energy(field.bake(mesh.vertices), mesh, deformed, rotations)
    os.makedirs(args.out_dir, exist_ok=True)
    bio.save_checkpoint(os.path.join(args.out_dir, "ckpt_arap"), field)
    bio.save_loss_csv(os.path.join(args.out_dir, "arap_loss.csv"),
                      list(enumerate(losses, start=1)), header=("step", "loss"))
    metrics = {"arap_before": before, "arap_after": after}
    bio.save_manifest(os.path.join(args.out_dir, "manifest.json"),
                      {"finetune": {"steps": cfg.steps,
                                    "network_lr": cfg.network_lr,
                                    "rotation_lr": cfg.rotation_lr}},
                      {"cage": args.cage, "mesh": args.mesh,
                       "deformed_cage": args.deformed_cage},
                      cfg.rng_seed, [], metrics)
    print(json.dumps(metrics))
    return 0


def _cmd_inverse(args):
    import numpy as np

    from . import io as bio
    from .deform import InverseConfig, inverse_solve

    cage, vss, field = _load_field(args)
    mesh = bio.load_mesh(args.mesh, dim=cage.d)
    target = bio.load_mesh(args.target, dim=cage.d)
    cfg = InverseConfig()
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        decay = raw.pop("lr_decay", None)
        cfg = InverseConfig(**raw)
        if decay:
            from .training import LrDecay

            cfg.lr_decay = LrDecay(**decay)
    os.makedirs(args.out_dir, exist_ok=True)
    deformed, field, report = inverse_solve(field, mesh, target, cfg)
    with open(os.path.join(args.out_dir, "fitted_cage.json"), "w") as fh:
        json.dump(deformed.to_json_dict(), fh)
    bio.save_checkpoint(os.path.join(args.out_dir, "ckpt_inverse"), field)
    # per-vertex error heat values for plotting
    recon = field.bake(mesh.vertices).matrix @ deformed.vertices()
    errs = np.linalg.norm(recon - target.vertices, axis=1)
    bio.save_loss_csv(os.path.join(args.out_dir, "vertex_errors.csv"),
                      list(enumerate(errs)), header=("vertex", "abs_error"))
    metrics = {"final_mean_abs_distance": report.final_mean_abs_distance}
    cfg_dict = {k: v for k, v in vars(cfg).items() if k != "lr_decay"}
    bio.save_manifest(os.path.join(args.out_dir, "manifest.json"),
                      {"inverse": cfg_dict},
                      {"cage": args.cage, "mesh": args.mesh, "target": args.target},
                      cfg.rng_seed, [], metrics)
    print(json.dumps(metrics))
    return 0


def _cmd_bake(args):
    from . import io as bio
    from .oracle import feasibility_check

    cage, vss, field = _load_field(args)
    pts, _ = bio.load_obj(args.points, dim=cage.d)
    baked = field.bake(pts)
    for row in range(baked.n_points):
        cert = feasibility_check(pts[row], baked.matrix[row], cage, tol=1e-5)
        if not cert.feasible:
            print(f"error: baked row {row} violates constraints "
                  f"({cert.max_violation:.2e})", file=sys.stderr)
            return 2
    bio.save_baked_weights(_stem(args.out), baked)
    print(json.dumps({"n_points": baked.n_points, "K": baked.num_cage_vertices}))
    return 0


def _cmd_deform(args):
    import json as _json

    from . import io as bio
    from .deform import DeformedCage, apply_deformation

    baked = bio.load_baked_weights(_stem(args.weights))
    with open(args.deformed_cage) as fh:
        deformed = DeformedCage.from_json_dict(_json.load(fh))
    pts, faces = bio.load_obj(args.points, dim=deformed.d)
    if pts.shape[0] != baked.n_points:
        print("error: weights row count does not match points file", file=sys.stderr)
        return 1
    out = apply_deformation(baked, deformed)
    bio.save_obj(args.out, out, faces)
    print(json.dumps({"n_points": int(out.shape[0])}))
    return 0


def _cmd_verify(args):
    import numpy as np

    from . import cages as cage_lib, io as bio
    from .errors import BoundaryPoint
    from .geometry import sample_inside
    from .neural_field import create_field
    from .oracle import feasibility_check, mean_value_coordinates, universality_check
    from .simplex_enum import PruningConfig, prune

    rng = np.random.default_rng(args.seed)
    summary = {"cages": {}, "ok": True}
    if args.cage:
        suite = {"custom": bio.load_cage(args.cage)}
    else:
        suite = {
            "triangle": cage_lib.triangle_cage(),
            "square": cage_lib.square_cage(),
            "hexagon": cage_lib.hexagon_cage(),
            "star": cage_lib.star_cage(),
        }
    for name, cage in suite.items():
        entry = {}
        vss = prune(cage, PruningConfig.defaults(cage.d, rng_seed=args.seed))
        field = create_field(cage, vss, seed=args.seed)
        pts = sample_inside(cage, 500, rng)
        alpha, _ = field.forward_batch(pts)
        worst = 0.0
        for row in range(pts.shape[0]):
            cert = feasibility_check(pts[row], alpha[row], cage)
            worst = max(worst, cert.max_violation)
        entry["feasibility_max_violation"] = worst
        entry["feasibility_ok"] = worst <= 1e-6
        if cage.d == 2 and cage.num_vertices <= 8:
            pts_u = sample_inside(cage, 5, rng)
            entry["universality_ok"] = all(
                universality_check(p, cage, trials=4, rng=rng) for p in pts_u
            )
        if cage.d == 2 and name in ("triangle", "square", "hexagon"):
            mvc_ok = True
            for p in sample_inside(cage, 50, rng):
                try:
                    w = mean_value_coordinates(p, cage)
                except BoundaryPoint:
                    continue
                mvc_ok &= feasibility_check(p, w, cage, tol=1e-8).feasible
            entry["mvc_ok"] = bool(mvc_ok)
        entry["used_simplices"] = len(vss)
        summary["cages"][name] = entry
        summary["ok"] &= all(v for k, v in entry.items() if k.endswith("_ok"))
    text = json.dumps(summary, indent=2, default=float)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return 0 if summary["ok"] else 2


def _cmd_report(args):
    import csv as _csv

    manifest_path = os.path.join(args.run_dir, "manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    report = {"manifest": manifest}
    loss_path = os.path.join(args.run_dir, "loss.csv")
    if os.path.exists(loss_path):
        with open(loss_path) as fh:
            rows = list(_csv.DictReader(fh))
        if rows:
            report["first_loss"] = float(rows[0]["loss"])
            report["last_loss"] = float(rows[-1]["loss"])
            report["steps"] = len(rows)
    print(json.dumps(report, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
