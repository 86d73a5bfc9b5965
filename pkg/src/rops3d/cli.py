"""``rops3d`` command line: library building, descriptor dumps and benchmarks.

Every option can also come from a flat JSON document passed with
``--config``; keys are option names with dashes or underscores.  Options
given on the command line override the config file.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (SyntheticScene, evaluate_recognition, lrf_error_experiment, lrf_histogram,
                          rp_experiment, sweep_experiment, synthetic_scenes)
from .features import describe_vertices, farthest_point_sampling
from .io import atomic_write_text, load_ground_truth, load_mesh, save_ground_truth, save_mesh
from .library import LibraryVersionError, ModelLibrary, build_model_library
from .matching import rp_auc
from .pipeline import RecognitionParams, recognize
from .rops import RopsParams
from .shapes import BUNDLED_MODELS, bundled_model

log = logging.getLogger("rops3d")

EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_VERSION = 3


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ helpers ---

def _load_models(items):
    """Each item is a mesh path or a bundled model name; returns (names, meshes)."""
    if not items:
        raise ConfigError("no models given (--models)")
    names, meshes = [], []
    for item in items:
        p = Path(item)
        if p.exists():
            names.append(p.stem)
            meshes.append(load_mesh(p))
        elif item in BUNDLED_MODELS:
            names.append(item)
            meshes.append(bundled_model(item))
        else:
            raise ConfigError(f"{item}: no such file or bundled model ({', '.join(BUNDLED_MODELS)})")
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate model names {names}")
    return names, meshes


def _rops_params(args, required: bool = True):
    """RopsParams from the descriptor flags; None when none were given and not ``required``."""
    given = {k: getattr(args, k) for k in ("L", "T", "radius", "combination")
             if getattr(args, k) is not None}
    if not given and not required:
        return None
    try:
        return RopsParams(**given)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _recognition_params(args):
    keys = ("tau_f", "tau_lambda", "tau_a", "tau_t", "eps1", "eps2", "alpha1", "alpha2")
    try:
        return RecognitionParams(**{k: getattr(args, k) for k in keys if getattr(args, k) is not None})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _check_nuisance(args):
    if not 0 < args.decimation <= 1:
        raise ConfigError("decimation must lie in (0, 1]")
    if args.noise < 0:
        raise ConfigError("noise must be non-negative")


def _load_truth(path):
    try:
        return load_ground_truth(path)
    except OSError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _csv(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _rp_rows(points):
    return [[_fmt(p.threshold), _fmt(p.recall), _fmt(p.one_minus_precision), p.tp, p.fp,
             p.positives, p.matches] for p in points]


RP_HEADER = ["threshold", "recall", "one_minus_precision", "tp", "fp", "positives", "matches"]


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ----------------------------------------------------------------- commands ---

def cmd_build_library(args):
    names, meshes = _load_models(args.models)
    lib = build_model_library(meshes, n_seeds=args.n_seeds, params=_rops_params(args), names=names)
    out = Path(args.output)
    lib.save(out)
    if args.json:
        lib.dump_json(out.with_suffix(".json"))
    for e in lib.models:
        print(f"{e.name}\t{len(e)} features\t{lib.skipped[e.name]} skipped")
    print(f"wrote {out}")


def cmd_describe(args):
    if not args.mesh:
        raise ConfigError("no mesh given (--mesh)")
    mesh = load_mesh(args.mesh) if Path(args.mesh).exists() else _load_models([args.mesh])[1][0]
    params = _rops_params(args)
    unit = mesh.resolution if args.unit is None else args.unit
    if args.vertices:
        verts = np.asarray(args.vertices, dtype=np.int64)
        if verts.min() < 0 or verts.max() >= mesh.n_vertices:
            raise ConfigError("vertex index out of range")
    else:
        verts = farthest_point_sampling(mesh.vertices, min(args.n_seeds, mesh.n_vertices))
    feats, skipped = describe_vertices(mesh, verts, params.radius * unit, params)
    header = ["feature_id", "x", "y", "z"] + [f"f{i}" for i in range(params.length)]
    rows = [[f.vertex] + [_fmt(c) for c in f.position] + [_fmt(c) for c in f.descriptor] for f in feats]
    out = Path(args.output)
    atomic_write_text(out, _csv(header, rows))
    _write_json(out.with_suffix(".json"), {"rops": params.to_json(), "unit": unit,
                                           "n_features": len(feats), "skipped": skipped})
    print(f"{len(feats)} descriptors ({skipped} skipped) -> {out}")


def cmd_lrf_error(args):
    _check_nuisance(args)
    _, meshes = _load_models(args.models)
    radius = _rops_params(args).radius
    errors = lrf_error_experiment(meshes, args.n_pairs, args.decimation, args.noise, args.seed,
                                  radius_mr=radius)
    edges, counts = lrf_histogram(errors, 10.0)
    out = Path(args.output)
    atomic_write_text(out / "lrf_error.csv",
                      _csv(["bin_lo_deg", "bin_hi_deg", "count"],
                           [[_fmt(a), _fmt(b), int(c)] for a, b, c in zip(edges[:-1], edges[1:], counts)]))
    frac = float((errors < 10).mean()) if len(errors) else 0.0
    _write_json(out / "lrf_error.json", {"pairs": int(len(errors)), "fraction_below_10deg": frac,
                                         "noise_mr": args.noise, "decimation": args.decimation,
                                         "seed": args.seed})
    if not args.no_figures:
        from .plotting import plot_lrf_histogram
        plot_lrf_histogram(edges, counts, out / "lrf_error.png")
    print(f"{len(errors)} pairs, fraction below 10 deg: {frac:.3f}")


def cmd_rp_curve(args):
    _check_nuisance(args)
    names, meshes = _load_models(args.models)
    params = _rops_params(args)
    out = Path(args.output)
    curves = {}
    if args.scene:
        if not args.ground_truth:
            raise ConfigError("--scene needs --ground-truth")
        poses = _load_truth(args.ground_truth)
        unknown = {p.model_id for p in poses} - set(names)
        if unknown:
            raise ConfigError(f"ground truth names unknown models {sorted(unknown)}")
        scene = SyntheticScene(load_mesh(args.scene), poses)
        curves["scene"] = rp_experiment(meshes, names, n_features=args.n_features, seed=args.seed,
                                        params=params, scene=scene, tolerance_mr=args.tolerance)
    else:
        levels = args.noise_levels if args.noise_levels else [args.noise]
        for sigma in levels:
            if sigma < 0:
                raise ConfigError("noise levels must be non-negative")
            curves[f"sigma{sigma:g}"] = rp_experiment(
                meshes, names, noise=sigma, decimation=args.decimation, n_features=args.n_features,
                seed=args.seed, params=params, tolerance_mr=args.tolerance)
    summary = []
    for label, pts in curves.items():
        atomic_write_text(out / f"rp_{label}.csv", _csv(RP_HEADER, _rp_rows(pts)))
        summary.append([label, _fmt(rp_auc(pts))])
        print(f"{label}: AUC {rp_auc(pts):.4f}")
    atomic_write_text(out / "rp_summary.csv", _csv(["curve", "auc"], summary))
    if not args.no_figures:
        from .plotting import plot_rp_curves
        plot_rp_curves(curves, out / "rp_curves.png")


def cmd_synth_scene(args):
    _check_nuisance(args)
    names, meshes = _load_models(args.models)
    if not 1 <= args.k <= 5:
        raise ConfigError("k must lie in [1, 5]")
    out = Path(args.output)
    batch = synthetic_scenes(meshes, names, args.n_scenes, k=args.k, noise=args.noise,
                             decimation=args.decimation, seed=args.seed)
    for i, sc in enumerate(batch):
        stem = out / (f"scene{i:03d}" if args.n_scenes > 1 else out.stem)
        mesh_path = stem.with_suffix(".ply") if args.n_scenes > 1 else out
        save_mesh(sc.mesh, mesh_path)
        save_ground_truth(sc.poses, mesh_path.with_suffix(".gt.json"))
        print(f"{mesh_path}\t{sc.mesh.n_vertices} vertices\t{len(sc.poses)} instances")


def cmd_recognize(args):
    if not args.library:
        raise ConfigError("no library given (--library)")
    lib = ModelLibrary.load(args.library)
    lib.check_params(_rops_params(args, required=False))
    rparams = _recognition_params(args)
    scenes = list(args.scenes or [])
    if not scenes:
        raise ConfigError("no scenes given (--scenes)")
    truths = list(args.ground_truth or [])
    if truths and len(truths) != len(scenes):
        raise ConfigError("--ground-truth needs one file per scene")
    gts = [_load_truth(p) for p in truths]
    out = Path(args.output)
    header = ["scene", "instances", "features", "seconds"]
    if gts:
        header += ["truth", "recognized", "false_positives", "rate", "mean_rotation_error_deg",
                   "mean_translation_error_mr"]
    rows, n_rec, n_tot, n_fp = [], 0, 0, 0
    for si, path in enumerate(scenes):
        scene = load_mesh(path)
        t0 = time.perf_counter()
        result = recognize(scene, lib, rparams)
        dt = time.perf_counter() - t0
        _write_json(out / f"{Path(path).stem}.result.json", result.to_json())
        row = [Path(path).name, len(result.instances), result.n_features, f"{dt:.2f}"]
        if gts:
            ev = evaluate_recognition(result, gts[si], lib.unit)
            rot = np.mean([e[1] for e in ev.pose_errors]) if ev.pose_errors else float("nan")
            tr = np.mean([e[2] for e in ev.pose_errors]) if ev.pose_errors else float("nan")
            row += [ev.total, ev.recognized, ev.false_positives, _fmt(ev.rate), _fmt(rot), _fmt(tr)]
            n_rec, n_tot, n_fp = n_rec + ev.recognized, n_tot + ev.total, n_fp + ev.false_positives
        rows.append(row)
        print("\t".join(str(c) for c in row))
    atomic_write_text(out / "summary.csv", _csv(header, rows))
    if gts:
        print(f"recognition rate {n_rec}/{n_tot} = {n_rec / max(n_tot, 1):.3f}, false positives {n_fp}")


def cmd_sweep_params(args):
    _check_nuisance(args)
    names, meshes = _load_models(args.models)
    rows = sweep_experiment(meshes, names, args.sweep, noise=args.noise, decimation=args.decimation,
                            n_features=args.n_features, seed=args.seed)
    field = {"combination": "combination", "L": "L", "T": "T", "radius": "radius"}[args.sweep]
    out = Path(args.output)
    labels = [getattr(p, field) for p, _, _ in rows]
    atomic_write_text(out / f"sweep_{args.sweep}.csv",
                      _csv([field, "length", "auc"], [[getattr(p, field), p.length, _fmt(a)] for p, a, _ in rows]))
    for p, a, pts in rows:
        atomic_write_text(out / f"sweep_{args.sweep}_{getattr(p, field)}.csv", _csv(RP_HEADER, _rp_rows(pts)))
        print(f"{field}={getattr(p, field)}\tAUC {a:.4f}")
    if not args.no_figures:
        from .plotting import plot_sweep
        plot_sweep(labels, [a for _, a, _ in rows], out / f"sweep_{args.sweep}.png", field)


# ------------------------------------------------------------------- parser ---

def _common(p, output_default):
    p.add_argument("--config", help="flat JSON file of option defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", default=output_default)
    p.add_argument("--log-level", default="WARNING")


def _rops_flags(p):
    g = p.add_argument_group("descriptor")
    g.add_argument("--L", type=int, default=None, help="distribution-matrix bins (default 5)")
    g.add_argument("--T", type=int, default=None, help="rotations per axis (default 3)")
    g.add_argument("--radius", type=float, default=None, help="support radius in mr (default 15)")
    g.add_argument("--combination", type=int, default=None, help="statistics combination 1-8 (default 6)")


def _nuisance_flags(p, noise=0.0, decimation=1.0):
    p.add_argument("--noise", type=float, default=noise, help="Gaussian noise sigma in mr")
    p.add_argument("--decimation", type=float, default=decimation, help="kept vertex fraction")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rops3d", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-library", help="describe models offline into a library file")
    _common(p, "library.ropslib")
    _rops_flags(p)
    p.add_argument("--models", nargs="+")
    p.add_argument("--n-seeds", type=int, default=1000)
    p.add_argument("--json", action="store_true", help="also write a JSON export")
    p.set_defaults(func=cmd_build_library)

    p = sub.add_parser("describe", help="dump descriptors of one mesh as CSV")
    _common(p, "descriptors.csv")
    _rops_flags(p)
    p.add_argument("--mesh")
    p.add_argument("--vertices", type=int, nargs="*")
    p.add_argument("--n-seeds", type=int, default=100)
    p.add_argument("--unit", type=float, default=None, help="length of one mr (default: mesh resolution)")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("lrf-error", help="LRF error histogram between models and degraded copies")
    _common(p, "lrf_error")
    _rops_flags(p)
    _nuisance_flags(p, 0.1, 0.5)
    p.add_argument("--models", nargs="+")
    p.add_argument("--n-pairs", type=int, default=200)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_lrf_error)

    p = sub.add_parser("rp-curve", help="recall vs 1-precision of descriptor matching")
    _common(p, "rp_curve")
    _rops_flags(p)
    _nuisance_flags(p)
    p.add_argument("--models", nargs="+")
    p.add_argument("--noise-levels", type=float, nargs="*")
    p.add_argument("--scene")
    p.add_argument("--ground-truth")
    p.add_argument("--n-features", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=2.0, help="true-positive distance in mr")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_rp_curve)

    p = sub.add_parser("synth-scene", help="compose randomly posed models into scene files")
    _common(p, "scene.ply")
    _nuisance_flags(p)
    p.add_argument("--models", nargs="+")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n-scenes", type=int, default=1)
    p.set_defaults(func=cmd_synth_scene)

    p = sub.add_parser("recognize", help="recognize library models in scenes")
    _common(p, "recognition")
    _rops_flags(p)
    p.add_argument("--library")
    p.add_argument("--scenes", nargs="+")
    p.add_argument("--ground-truth", nargs="*")
    for k in ("tau-f", "tau-lambda", "tau-a", "tau-t", "eps1", "eps2", "alpha1", "alpha2"):
        p.add_argument(f"--{k}", type=float, default=None)
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("sweep-params", help="RP-curve AUC over descriptor settings")
    _common(p, "sweep")
    _nuisance_flags(p, 0.1, 0.5)
    p.add_argument("--models", nargs="+")
    p.add_argument("--sweep", choices=["combination", "L", "T", "radius"], default="combination")
    p.add_argument("--n-features", type=int, default=150)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sweep_params, L=None, T=None, radius=None, combination=None)
    return ap


def _apply_config(parser, argv):
    """Re-parse with defaults taken from the ``--config`` document, if any."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{args.config}: expected a flat JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help", "func"):
            raise ConfigError(f"{args.config}: unknown option {key!r} for {args.command}")
        if isinstance(value, dict) or (
                isinstance(value, list) and not all(isinstance(v, (str, int, float)) for v in value)):
            raise ConfigError(f"{args.config}: option {key!r} must be flat")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except LibraryVersionError as exc:
        print(f"rops3d: version error: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except ConfigError as exc:
        print(f"rops3d: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as exc:
        # MeshError and parse errors are ValueErrors carrying file context
        print(f"rops3d: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
