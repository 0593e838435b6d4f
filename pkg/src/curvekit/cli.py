"""``curvekit`` command-line interface.

Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 degenerate-geometry
warnings under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from . import formats, losses
from .curves import CLASS_NAMES, CURVE_CLASSES, is_closed, sample_by_interval
from .errors import SchemaError
from .losses import compute_class_weights
from .metrics import DEFAULT_INTERVAL, DEFAULT_TP_CD, corpus_from_reports, evaluate_scene
from .postfit import IouConfig, SnapConfig, iou_filter, snap_and_fit
from .setopt import init_slots, optimize, resolve
from .spatial import PointIndex
from .synthgen import DENSITIES, SOLID_KINDS, SceneSpec, add_noise, augment, generate_scene, subsample

log = logging.getLogger("curvekit")

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_DEGENERATE = 3

WORKERS_ENV = "CURVEKIT_WORKERS"
BASE_DENSITY = DENSITIES[0]


class UsageError(Exception):
    """Invalid flag combination detected after argument parsing."""


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer %s=%r", WORKERS_ENV, raw)
        return 1


def _pool_map(fn: Callable, items: Sequence, workers: int) -> list:
    """Order-preserving map over a bounded process pool (serial when workers == 1)."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _fmt(x) -> str:
    return repr(float(x))


def _print_rows(rows: Iterable[Sequence], out=None) -> None:
    out = out or sys.stdout
    for r in rows:
        out.write("\t".join(str(v) for v in r) + "\n")


# -- synth ------------------------------------------------------------------


def _synth_one(job: dict) -> dict:
    spec = SceneSpec(job["kind"], job["dims"], job["base_n"], job["seed"])
    scene = generate_scene(spec)
    if job["n"] < len(scene.points):
        scene.points = subsample(scene.points, job["n"], job["seed"])
        scene.provenance["subsampled_to"] = job["n"]
    if job["noise"] > 0:
        scene.points = add_noise(scene.points, job["noise"], job["seed"])
        scene.provenance["noise_fraction"] = job["noise"]
    if job["augment"]:
        scene = augment(scene, job["seed"])
    return formats.scene_to_doc(scene)


def cmd_synth(args) -> int:
    if args.n < 16:
        raise UsageError("--n must be at least 16")
    if args.noise < 0:
        raise UsageError("--noise must be non-negative")
    if args.count < 1:
        raise UsageError("--count must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = args.kind or list(SOLID_KINDS)
    jobs = []
    for i in range(args.count):
        kind = kinds[i % len(kinds)]
        jobs.append({
            "kind": kind,
            "dims": tuple(args.dims) if args.dims else None,
            "base_n": max(args.n, BASE_DENSITY),
            "n": args.n,
            "noise": args.noise,
            "augment": args.augment,
            "seed": args.seed + i,
        })
    for j in jobs:
        SceneSpec(j["kind"], j["dims"], j["base_n"], j["seed"])  # validate before spawning work
    docs = _pool_map(_synth_one, jobs, args.workers)
    entries = []
    for i, (job, doc) in enumerate(zip(jobs, docs)):
        name = f"scene_{i:04d}.json"
        formats.write_json(out / name, doc)
        entries.append({
            "file": name,
            "kind": job["kind"],
            "seed": job["seed"],
            "n_points": job["n"],
            "noise_fraction": job["noise"],
            "augment": job["augment"],
        })
    formats.write_json(out / "manifest.json", formats.manifest_doc(entries))
    _print_rows([("file", "kind", "seed", "points", "curves")] +
                [(e["file"], e["kind"], e["seed"], len(d["points"]), len(d["curves"])) for e, d in zip(entries, docs)])
    return EXIT_OK


# -- eval -------------------------------------------------------------------


def _eval_one(job):
    pred_path, gt_path, interval, tp_cd = job
    preds = formats.read_scored_curves(pred_path)
    gt = formats.read_scene(gt_path)
    if not gt.curves:
        raise SchemaError("ground truth has no curves", f"{gt_path}:curves")
    return evaluate_scene(preds, gt.curves, interval, tp_cd), [g.cls for g in gt.curves]


def cmd_eval(args) -> int:
    if len(args.pred) != len(args.gt):
        raise UsageError(f"got {len(args.pred)} prediction files but {len(args.gt)} ground-truth files")
    if args.interval <= 0 or args.tp_cd <= 0:
        raise UsageError("--interval and --tp-cd must be positive")
    jobs = [(p, g, args.interval, args.tp_cd) for p, g in zip(args.pred, args.gt)]
    results = _pool_map(_eval_one, jobs, args.workers)
    scenes = [r for r, _ in results]
    corpus = corpus_from_reports(scenes, [c for _, cls in results for c in cls])
    header = ["scene", "cd", "hd", "map", "empty"] + [f"ap_{CLASS_NAMES[c]}" for c in CURVE_CLASSES]
    rows = [header]
    for path, rep in zip(args.pred, scenes):
        aps = [_fmt(rep.ap_per_class[c]) if c in rep.ap_per_class else "" for c in CURVE_CLASSES]
        rows.append([path, _fmt(rep.cd), _fmt(rep.hd), _fmt(rep.map), int(rep.empty_prediction)] + aps)
    aps = [_fmt(corpus.ap_per_class[c]) if c in corpus.ap_per_class else "" for c in CURVE_CLASSES]
    rows.append(["mean", _fmt(corpus.cd_mean), _fmt(corpus.hd_mean), _fmt(corpus.map), corpus.empty_predictions] + aps)
    rows.append(["std", _fmt(corpus.cd_std), _fmt(corpus.hd_std), "", "", "", "", "", ""])
    _print_rows(rows)
    if corpus.empty_predictions:
        log.warning("%d scene(s) had no predicted curves; their CD/HD are the gt bounding-box diagonal",
                    corpus.empty_predictions)
    if args.json:
        doc = {"corpus": corpus.to_dict(),
               "scenes": [dict(r.to_dict(), file=p) for p, r in zip(args.pred, scenes)]}
        formats.write_json(args.json, doc)
    if args.figure:
        from .plotting import plot_ap

        plot_ap(corpus.ap_per_class, args.figure)
    return EXIT_OK


# -- postprocess ------------------------------------------------------------


def cmd_postprocess(args) -> int:
    preds = formats.read_scored_curves(args.pred)
    degenerate = 0
    if args.snap:
        if not args.cloud:
            raise UsageError("--snap needs --cloud")
        cfg = SnapConfig(args.snap_samples, args.max_snap_distance)
        index = PointIndex(formats.read_scene(args.cloud).points)
        snapped = []
        for p in preds:
            res = snap_and_fit(p.curve, index, cfg)
            degenerate += res.degenerate
            snapped.append(type(p)(res.curve, p.confidence))
        preds = snapped
    if args.iou:
        preds = iou_filter(preds, IouConfig(args.iou_threshold, args.distance_tolerance))
    formats.write_curves(args.out, preds)
    _print_rows([("curves", "degenerate_refits"), (len(preds), degenerate)])
    if args.figure:
        from .plotting import plot_curves

        cloud = formats.read_scene(args.cloud).points if args.cloud else None
        plot_curves([p.curve for p in preds], args.figure, cloud=cloud)
    if degenerate and args.strict:
        log.error("%d degenerate refit(s); originals kept", degenerate)
        return EXIT_DEGENERATE
    return EXIT_OK


# -- fit-demo ---------------------------------------------------------------


def cmd_fit_demo(args) -> int:
    scene = formats.read_scene(args.scene)
    if args.iters < 0:
        raise UsageError("--iters must be non-negative")
    if args.k < len(scene.curves):
        raise UsageError(f"--k {args.k} is smaller than the number of ground-truth curves ({len(scene.curves)})")
    start_arcs = losses.stats.degenerate_arcs
    state = init_slots(args.k, scene, args.seed)
    state, report = optimize(scene, args.k, args.iters, args.lr, args.seed, state=state)
    curves = resolve(state.slots)
    if args.out:
        formats.write_curves(args.out, curves)
    if args.slots_out:
        formats.write_slots(args.slots_out, state.slots)
    if args.loss_csv:
        with open(args.loss_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss"])
            for i, v in enumerate(state.loss_history):
                w.writerow([i, _fmt(v)])
    if args.figure:
        from .plotting import plot_loss_history

        plot_loss_history(state.loss_history, args.figure)
    if args.curves_figure:
        from .plotting import plot_curves

        plot_curves([c.curve for c in curves], args.curves_figure, cloud=scene.points, gt=scene.curves)
    d = report.to_dict()
    _print_rows([("metric", "value"), ("cd", _fmt(d["cd"])), ("hd", _fmt(d["hd"])), ("map", _fmt(d["map"]))] +
                [(f"ap_{name}", _fmt(v)) for name, v in d["ap"].items()] +
                [("curves", len(curves)), ("empty_prediction", int(d["empty_prediction"]))])
    arcs = losses.stats.degenerate_arcs - start_arcs
    if arcs:
        log.warning("%d degenerate arc block(s) were jittered during optimization", arcs)
        if args.strict:
            return EXIT_DEGENERATE
    return EXIT_OK


# -- class-weights ----------------------------------------------------------


def cmd_class_weights(args) -> int:
    try:
        w = compute_class_weights(args.counts, args.k, args.train_samples)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    doc = {CLASS_NAMES[c]: float(v) for c, v in enumerate(w.as_array())}
    sys.stdout.write(json.dumps(doc) + "\n")
    return EXIT_OK


# -- export-obj -------------------------------------------------------------


def obj_text(curves, interval: float) -> str:
    lines = ["# curvekit OBJ export", f"# curves: {len(curves)}", f"# interval: {_fmt(interval)}"]
    base = 1
    for i, c in enumerate(curves):
        pts = sample_by_interval(c, interval)
        lines.append(f"o {CLASS_NAMES[c.cls]}_{i}")
        lines.extend(f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in pts)
        idx = list(range(base, base + len(pts)))
        if is_closed(c):
            idx.append(base)
        lines.append("l " + " ".join(map(str, idx)))
        base += len(pts)
    return "\n".join(lines) + "\n"


def cmd_export_obj(args) -> int:
    if args.interval <= 0:
        raise UsageError("--interval must be positive")
    curves = [p.curve for p in formats.read_scored_curves(args.curves)]
    _write_text(args.out, obj_text(curves, args.interval))
    _print_rows([("curves", "file"), (len(curves), args.out)])
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curvekit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def with_workers(sp):
        sp.add_argument("--workers", type=int, default=default_workers(),
                        help=f"worker processes (default ${WORKERS_ENV} or 1)")

    s = sub.add_parser("synth", help="generate synthetic CAD-like scenes")
    s.add_argument("--kind", choices=SOLID_KINDS, action="append",
                   help="solid kind; repeat to cycle through several (default: all)")
    s.add_argument("--dims", type=float, nargs="+", help="override the solid dimensions")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=BASE_DENSITY, help="points per scene")
    s.add_argument("--noise", type=float, default=0.0, help="gaussian noise as a fraction of the longest span")
    s.add_argument("--augment", action="store_true", help="apply point dropout and a random rotation")
    s.add_argument("--out", required=True, help="output directory")
    with_workers(s)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", nargs="+", required=True)
    e.add_argument("--gt", nargs="+", required=True)
    e.add_argument("--interval", type=float, default=DEFAULT_INTERVAL)
    e.add_argument("--tp-cd", type=float, default=DEFAULT_TP_CD)
    e.add_argument("--json", help="write the full report here")
    e.add_argument("--figure", help="write an AP bar chart here")
    with_workers(e)
    e.set_defaults(func=cmd_eval)

    pp = sub.add_parser("postprocess", help="Snap & Fit and/or IoU filtering")
    pp.add_argument("--pred", required=True)
    pp.add_argument("--cloud", help="scene file providing the point cloud")
    pp.add_argument("--snap", action="store_true")
    pp.add_argument("--iou", action="store_true")
    pp.add_argument("--snap-samples", type=int, default=SnapConfig.samples_per_curve)
    pp.add_argument("--max-snap-distance", type=float, default=SnapConfig.max_snap_distance)
    pp.add_argument("--iou-threshold", type=float, default=IouConfig.iou_threshold)
    pp.add_argument("--distance-tolerance", type=float, default=IouConfig.distance_tolerance)
    pp.add_argument("--out", required=True)
    pp.add_argument("--figure")
    pp.add_argument("--strict", action="store_true", help="exit 3 if any refit was degenerate")
    pp.set_defaults(func=cmd_postprocess)

    f = sub.add_parser("fit-demo", help="optimize prediction slots directly against a scene")
    f.add_argument("--scene", required=True)
    f.add_argument("--k", type=int, default=16)
    f.add_argument("--iters", type=int, default=2000)
    f.add_argument("--lr", type=float, default=0.05)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", help="resolved curves JSON")
    f.add_argument("--slots-out", help="raw slot JSON")
    f.add_argument("--loss-csv")
    f.add_argument("--figure", help="loss history plot")
    f.add_argument("--curves-figure", help="3D plot of the final curves")
    f.add_argument("--strict", action="store_true", help="exit 3 if degenerate arcs were repaired")
    f.set_defaults(func=cmd_fit_demo)

    w = sub.add_parser("class-weights", help="inverse square-root class weights")
    w.add_argument("--counts", type=float, nargs=4, required=True, metavar=("BEZIER", "LINE", "CIRCLE", "ARC"))
    w.add_argument("--k", type=int, required=True, help="queries per sample")
    w.add_argument("--train-samples", type=int, required=True)
    w.set_defaults(func=cmd_class_weights)

    o = sub.add_parser("export-obj", help="write curves as OBJ polylines")
    o.add_argument("--curves", required=True, help="prediction or scene file")
    o.add_argument("--interval", type=float, default=DEFAULT_INTERVAL)
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_export_obj)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if hasattr(args, "workers") and args.workers < 1:
        parser.error("--workers must be positive")
    try:
        return args.func(args)
    except (SchemaError, UsageError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
