"""Command-line entry point: ``polyconsensus <command> ...``.

Exit codes: 0 on success, 2 for invalid input or flags, 3 when a
computation fails (no contour, resource limits, generation failures).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

from . import __version__
from .analysis import analyze_sample
from .consensus import (
    DEFAULT_RESOLUTION,
    DEFAULT_STEP,
    PHASES,
    RaterAnnotation,
    RaterSet,
    boundary_distances,
    mean_curve,
    phase_fields,
)
from .dataset_io import (
    DEFAULT_MARGIN,
    GROUND_TRUTH_NAME,
    MERGED_NAME,
    atomic_write,
    dumps_ground_truth,
    dumps_multirater,
    load_coco_polygon,
    load_directory,
    load_multirater,
    prepare_sample,
)
from .distance import field_extent, signed_distance_on
from .errors import InvalidInputError, PolyConsensusError, ValidationError
from .exports import csv_text, heatmap_pgm, magnitude_pgm, occupancy_pgm, overlay_svg
from .geometry import shoelace_area
from .local_uncertainty import DEFAULT_BAND, DEFAULT_THRESHOLD, DEFAULT_WINDOW
from .plotting import FIGURE_FORMATS
from .raster import raster_area, rasterize_alltouch
from .report import (
    COMPARISON_REPORT_SCHEMA,
    UNCERTAINTY_REPORT_SCHEMA,
    comparison_report,
    dumps_report,
    uncertainty_report,
)
from .stats import DEFAULT_ALPHA, compare_phases
from .synth import DEFAULT_KINDS, NoiseModel, make_shape, parse_kind, simulate_sample

log = logging.getLogger("polyconsensus")

DISTANCE_PGM_LIMIT = 10.0
SHAPES_RADIUS = 12.0


# ---------------------------------------------------------------------------
# argument types


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _float_checked(text: str, low: float, inclusive: bool, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    ok = value >= low if inclusive else value > low
    if not (ok and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be {what}, got {text}")
    return value


def _positive_float(text: str) -> float:
    return _float_checked(text, 0.0, False, "a positive number")


def _nonneg_float(text: str) -> float:
    return _float_checked(text, 0.0, True, "a non-negative number")


def _probability(text: str) -> float:
    value = _positive_float(text)
    if value >= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def _figure_path(text: str) -> str:
    suffix = Path(text).suffix.lower().lstrip(".")
    if suffix not in FIGURE_FORMATS:
        raise argparse.ArgumentTypeError(f"figure path must end in one of .{', .'.join(FIGURE_FORMATS)}, got {text!r}")
    return text


def _kind_list(text: str) -> List[str]:
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    if not kinds:
        raise argparse.ArgumentTypeError("expected a comma-separated list of shape kinds")
    for k in kinds:
        try:
            parse_kind(k)
        except InvalidInputError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return kinds


# ---------------------------------------------------------------------------
# helpers


def _warn(messages) -> None:
    for msg in messages:
        print(f"warning: {msg}", file=sys.stderr)


def _write_figure(path, fig) -> None:
    from .plotting import figure_bytes, format_for

    atomic_write(path, figure_bytes(fig, format_for(path)))


def _load_phase(path, phase: str) -> RaterSet:
    raters = load_multirater(path)
    n = len(raters.for_phase(phase))
    if n < 2:
        raise ValidationError(f"{path}: phase {phase!r} has {n} polygon(s); at least 2 are needed")
    return raters


def _write_sample_outputs(args, result) -> None:
    c = result.consensus
    if args.heatmap:
        atomic_write(args.heatmap, heatmap_pgm(result.heatmap, getattr(args, "threshold", DEFAULT_THRESHOLD)))
    flagged = [s.polyline for s in result.segments]
    if args.overlay:
        sigma = result.profile.sigma if result.profile is not None else None
        svg = overlay_svg(
            field_extent(result.fields.fields[0]),
            [p.vertices for p in result.fields.polygons],
            c.vertices,
            c.closed,
            sigma_points=c.points if sigma is not None else None,
            sigma=sigma,
            vmax=4.0 * result.threshold if result.threshold else None,
            flagged=flagged,
        )
        atomic_write(args.overlay, svg)
    if args.figure:
        from .plotting import overlay_figure, sigma_profile_figure

        if result.profile is not None:
            p = result.profile
            fig = sigma_profile_figure(p.t, p.sigma, result.threshold,
                                       [(s.t_start, s.t_end) for s in result.segments], p.perimeter)
        else:
            fig = overlay_figure([p.vertices for p in result.fields.polygons], c.vertices, c.closed,
                                 heatmap=result.heatmap)
        _write_figure(args.figure, fig)


# ---------------------------------------------------------------------------
# commands


def cmd_consensus(args) -> int:
    raters = _load_phase(args.input, args.phase)
    result = analyze_sample(raters, args.phase, args.resolution, args.step, mode=args.mode,
                            band=args.band, heatmap=bool(args.heatmap or args.figure))
    _warn(result.warnings)
    atomic_write(args.out, dumps_report(uncertainty_report(result, args.stamp), UNCERTAINTY_REPORT_SCHEMA))
    _write_sample_outputs(args, result)
    return 0


def cmd_uncertainty(args) -> int:
    raters = _load_phase(args.input, args.phase)
    result = analyze_sample(raters, args.phase, args.resolution, args.step, local=True,
                            threshold=args.threshold, window=args.window, band=args.band,
                            heatmap=bool(args.heatmap))
    _warn(result.warnings)
    atomic_write(args.out, dumps_report(uncertainty_report(result, args.stamp), UNCERTAINTY_REPORT_SCHEMA))
    if args.csv:
        p = result.profile
        atomic_write(args.csv, csv_text(["t", "sigma"], zip(p.t.tolist(), p.sigma.tolist())))
    _write_sample_outputs(args, result)
    return 0


def _sample_distances(job):
    raters, resolution, step = job
    out = {}
    for phase in PHASES:
        fields = phase_fields(raters, phase, resolution)
        curve = mean_curve(raters, phase, resolution, step, fields=fields)
        out[phase] = (boundary_distances(curve, raters, phase, resolution, fields), list(curve.warnings))
    return raters.sample_id, out


def cmd_compare(args) -> int:
    samples = load_directory(args.input_dir)
    if not samples:
        raise ValidationError(f"{args.input_dir}: no sample files (*.json) found")
    for s in samples:
        for phase in PHASES:
            n = len(s.for_phase(phase))
            if n < 2:
                raise ValidationError(
                    f"sample {s.sample_id!r} has {n} {phase} polygon(s); both phases need at least 2"
                )
    jobs = [(s, args.resolution, args.step) for s in samples]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sample_distances, jobs))
    else:
        results = [_sample_distances(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    records = {phase: [] for phase in PHASES}
    warnings = []
    for sid, per_phase in results:
        for phase in PHASES:
            per_rater, w = per_phase[phase]
            records[phase].extend((sid, rid, per_rater[rid]) for rid in sorted(per_rater))
            warnings.extend(f"{sid} ({phase}): {m}" for m in w)
    report = compare_phases(records["pre_qa"], records["post_qa"], args.alpha, args.per_image_means)
    _warn(warnings)
    doc = comparison_report(report, args.resolution, warnings, args.stamp)
    atomic_write(args.out, dumps_report(doc, COMPARISON_REPORT_SCHEMA))
    if args.csv:
        pre = {s.sample_id: s for s in report.pre.per_image}
        post = {s.sample_id: s for s in report.post.per_image}
        rows = [
            (sid, pre[sid].mean, pre[sid].std, post[sid].mean, post[sid].std, post[sid].mean - pre[sid].mean)
            for sid in sorted(set(pre) & set(post))
        ]
        header = ["sample_id", "pre_mean", "pre_std", "post_mean", "post_std", "delta"]
        atomic_write(args.csv, csv_text(header, rows))
    if args.figure:
        from .plotting import cohort_figure

        _write_figure(args.figure, cohort_figure(report.pre, report.post, report.deltas))
    w = report.welch
    print(f"t = {w.t:.6f}, df = {w.df:.6f}, p = {w.p_two_sided:.6g} ({report.direction})")
    return 0


def cmd_synth(args) -> int:
    kinds = args.shapes or list(DEFAULT_KINDS)
    count = args.cohort if args.cohort is not None else (len(args.shapes) if args.shapes else 24)
    pre = NoiseModel(sigma_normal=args.pre_noise, correlation_length=args.correlation_length)
    post = None
    if args.post_noise is not None:
        post = NoiseModel(sigma_normal=args.post_noise, correlation_length=args.correlation_length)
    # an explicit shape list is meant to be compared shape against shape, so
    # those samples share one radius and center unless --radius says otherwise
    radius = args.radius if args.radius is not None else (SHAPES_RADIUS if args.shapes else None)
    out_dir = Path(args.out_dir)
    samples = []
    for i in range(count):
        kind = args.shapes[i % len(args.shapes)] if args.shapes else None
        samples.append(simulate_sample(i, args.raters, pre, post, args.seed, kinds, kind=kind, radius=radius))
    for s in samples:
        atomic_write(out_dir / f"{s.raters.sample_id}.json", dumps_multirater(s.raters))
    atomic_write(out_dir / GROUND_TRUTH_NAME, dumps_ground_truth([(s.raters.sample_id, s.ground_truth) for s in samples]))
    if args.merge:
        annotations = [
            RaterAnnotation(f"{s.raters.sample_id}/{a.rater_id}", a.phase, a.polygon)
            for s in samples for a in s.raters.annotations
        ]
        width = max(s.raters.image_size[0] for s in samples)
        height = max(s.raters.image_size[1] for s in samples)
        merged = RaterSet("merged", tuple(annotations), (width, height))
        atomic_write(out_dir / MERGED_NAME, dumps_multirater(merged))
    return 0


def cmd_rasterize(args) -> int:
    if args.input:
        raters = load_multirater(args.input)
        chosen = [a for a in raters.for_phase(args.phase) if args.rater is None or a.rater_id == args.rater]
        if not chosen:
            raise ValidationError(f"{args.input}: no polygon for rater {args.rater!r} in phase {args.phase!r}")
        polygon = chosen[0].polygon
    else:
        kind = args.shape
        if args.vertices is not None:
            kind = f"ngon:{args.vertices}" if args.shape in ("circle", "ngon") else kind
        polygon = make_shape(kind, args.radius)
    grid = rasterize_alltouch(polygon, args.resolution)
    atomic_write(args.out, occupancy_pgm(grid))
    if args.distance_pgm:
        atomic_write(args.distance_pgm, magnitude_pgm(signed_distance_on(polygon, grid.spec), DISTANCE_PGM_LIMIT))
    if args.json:
        doc = {
            "resolution": int(args.resolution),
            "width": int(grid.width),
            "height": int(grid.height),
            "origin": [float(v) for v in grid.origin],
            "filled_cells": int(grid.filled_count()),
            "raster_area": raster_area(grid),
            "polygon_area": shoelace_area(polygon),
        }
        atomic_write(args.json, json.dumps(doc, indent=1) + "\n")
    return 0


def cmd_coco_crop(args) -> int:
    polygon, bbox, image_size = load_coco_polygon(args.annotations, args.image_id, args.ann_id)
    local, crop = prepare_sample(polygon, bbox, image_size, args.margin)
    width = max(1, int(math.ceil(crop.width - 1e-9)))
    height = max(1, int(math.ceil(crop.height - 1e-9)))
    sample = RaterSet(
        f"coco_{args.image_id}_{args.ann_id}",
        (RaterAnnotation(args.rater_id, args.phase, local),),
        (width, height),
    )
    atomic_write(args.out, dumps_multirater(sample))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p, step=True) -> None:
    p.add_argument("--resolution", type=_positive_int, default=DEFAULT_RESOLUTION,
                   help="sub-pixel raster resolution (cells per pixel, default 8)")
    if step:
        p.add_argument("--step", type=_positive_float, default=DEFAULT_STEP,
                       help="arc-length sampling step in pixels (default 0.25)")
    p.add_argument("--stamp", metavar="TEXT", help="record TEXT as generated_at in the report")


def _add_sample_outputs(p) -> None:
    p.add_argument("--input", required=True, help="multi-rater sample JSON")
    p.add_argument("--phase", choices=PHASES, default="pre_qa")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--heatmap", help="PGM of the per-cell rater spread near the consensus")
    p.add_argument("--overlay", help="SVG overlay of raters and consensus")
    p.add_argument("--figure", type=_figure_path, help="rendered figure (.png, .svg or .pdf)")
    p.add_argument("--band", type=_positive_float, default=DEFAULT_BAND,
                   help="heatmap band half-width around the consensus in pixels (default 3)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyconsensus", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("consensus", help="mean consensus curve and per-rater distances")
    _add_sample_outputs(p)
    _add_common(p)
    p.add_argument("--mode", action="store_true", help="also compute the majority-vote shape")
    p.set_defaults(func=cmd_consensus)

    p = sub.add_parser("uncertainty", help="local spread along the consensus and flagged segments")
    _add_sample_outputs(p)
    _add_common(p)
    p.add_argument("--threshold", type=_nonneg_float, default=DEFAULT_THRESHOLD)
    p.add_argument("--window", type=_positive_float, default=DEFAULT_WINDOW,
                   help="moving-average window along the curve in pixels (default 2)")
    p.add_argument("--csv", help="two-column t,sigma CSV")
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("compare", help="Welch test between pre_qa and post_qa over a directory")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--alpha", type=_probability, default=DEFAULT_ALPHA)
    p.add_argument("--per-image-means", action="store_true",
                   help="test per-image means instead of pooled per-rater values")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="per-image summary CSV")
    p.add_argument("--figure", type=_figure_path, help="rendered cohort figure (.png, .svg or .pdf)")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="synthetic samples with noisy raters")
    p.add_argument("--shapes", type=_kind_list, help="comma-separated kinds, one per sample in order")
    p.add_argument("--cohort", type=_positive_int, help="number of samples (default 24, or one per --shapes kind)")
    p.add_argument("--raters", type=_positive_int, default=5)
    p.add_argument("--noise", "--pre-noise", dest="pre_noise", type=_nonneg_float, default=0.8,
                   help="pre_qa normal displacement sigma in pixels")
    p.add_argument("--post-noise", type=_nonneg_float, help="post_qa sigma; omit to generate pre_qa only")
    p.add_argument("--correlation-length", type=_nonneg_float, default=2.0)
    p.add_argument("--radius", type=_positive_float, help="pin the radius (and center) of every shape; default 12 with --shapes, else drawn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--merge", action="store_true", help=f"also write {MERGED_NAME} with every rater")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rasterize", help="all-touch occupancy raster as PGM")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--shape", help="shape kind, e.g. circle, diamond, ngon:6, star:5:0.6")
    src.add_argument("--input", help="multi-rater sample JSON")
    p.add_argument("--radius", type=_positive_float, default=10.0)
    p.add_argument("--vertices", type=_positive_int, help="vertex count for circle")
    p.add_argument("--rater", help="rater id when reading --input (default: first)")
    p.add_argument("--phase", choices=PHASES, default="pre_qa")
    p.add_argument("--resolution", type=_positive_int, default=DEFAULT_RESOLUTION)
    p.add_argument("--out", required=True)
    p.add_argument("--distance-pgm", help=f"PGM of |signed distance| clamped at {DISTANCE_PGM_LIMIT:g} px")
    p.add_argument("--json", help="cell counts and areas as JSON")
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("coco-crop", help="crop one COCO polygon into a sample file")
    p.add_argument("--annotations", required=True, help="COCO instances JSON")
    p.add_argument("--image-id", type=int, required=True)
    p.add_argument("--ann-id", type=int, required=True)
    p.add_argument("--margin", type=_nonneg_float, default=DEFAULT_MARGIN)
    p.add_argument("--rater-id", default="coco")
    p.add_argument("--phase", choices=PHASES, default="pre_qa")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_coco_crop)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PolyConsensusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
