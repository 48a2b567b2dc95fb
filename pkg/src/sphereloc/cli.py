"""Command-line interface.

Verbs mirror the pipeline stages: ``partition`` and ``sweep-n`` place
caps on the sphere and pick a cap count, ``rectify`` cuts tiles out of
a panorama, ``marker`` emits fiducial images, ``simulate`` materializes
a synthetic feed, ``track`` replays a feed through a search strategy,
and ``report`` aggregates tracking results into summary tables and
plots.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from . import sim
from .fiducial import marker_image
from .images import EquirectImage, read_image, write_image
from .partition import (
    load_layout,
    pixel_cost,
    save_layout,
    select_n,
    solve_layout,
)
from .rectify import rectify_partition
from .sim import Feed, Trajectory, default_body, load_feed, run_experiment


def _fail(message: str) -> "NoReturn":  # noqa: F821 - py3.10 spelling
    raise SystemExit(f"error: {message}")


def _load_config(args) -> dict:
    try:
        return cfgmod.load_config(getattr(args, "config", None))
    except (OSError, cfgmod.ConfigError) as exc:
        _fail(str(exc))


def _parse_traj(spec: str) -> Trajectory:
    """Build a trajectory from 'kind:key=value,key=value' text."""
    kind, _, rest = spec.partition(":")
    kwargs = {}
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                _fail(f"bad trajectory parameter {item!r} (expected key=value)")
            kwargs[key.strip()] = float(value)
    makers = {"circle": Trajectory.circle, "lissajous": Trajectory.lissajous}
    if kind not in makers:
        _fail(f"unknown trajectory kind {kind!r} (use circle or lissajous)")
    try:
        return makers[kind](**kwargs)
    except (TypeError, ValueError) as exc:
        _fail(f"trajectory spec {spec!r}: {exc}")


def _make_feed(args, cfg: dict) -> Feed:
    feed_cfg = cfg["feed"]
    if os.path.isdir(args.feed):
        try:
            return load_feed(args.feed)
        except (OSError, KeyError, ValueError) as exc:
            _fail(f"feed directory {args.feed!r}: {exc}")
    return Feed(
        trajectory=_parse_traj(args.feed),
        body=default_body(face_offset=feed_cfg["face_offset"]),
        marker_side=feed_cfg["marker_side"],
        orientation_mode=feed_cfg["orientation_mode"],
        spin_axis=tuple(feed_cfg["spin_axis"]),
        spin_rate_hz=feed_cfg["spin_rate_hz"],
        src_h=feed_cfg["src_h"],
    )


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------


def cmd_partition(args) -> int:
    cfg = _load_config(args)
    layout = solve_layout(args.n, seed=args.seed, config=cfgmod.solver_config(cfg))
    save_layout(layout, args.out)
    print(
        f"n={layout.n} theta={layout.theta_deg:.2f} deg seed={layout.seed} "
        f"-> {args.out}"
    )
    return 0


def cmd_sweep_n(args) -> int:
    cfg = _load_config(args)
    solver = cfgmod.solver_config(cfg)
    weights = cfgmod.selection_weights(cfg)
    if args.candidates:
        try:
            ns = sorted({int(x) for x in args.candidates.split(",")})
        except ValueError:
            _fail(f"bad candidate list {args.candidates!r}")
    else:
        ns = list(range(args.n_min, args.n_max + 1))
    if not ns or min(ns) < 1:
        _fail("need at least one candidate n >= 1")
    layouts = []
    for n in ns:
        layouts.append(solve_layout(n, seed=args.seed, config=solver))
        if args.layout_dir:
            os.makedirs(args.layout_dir, exist_ok=True)
            save_layout(
                layouts[-1], os.path.join(args.layout_dir, f"layout_{n}.json")
            )
    printed = cfg["selection"]["pixel_cost_printed_form"]
    best, table = select_n(layouts, args.height, args.width, weights=weights)
    rows = []
    for lay, entry in zip(layouts, table):
        rows.append(
            {
                "n": entry.n,
                "theta_deg": round(lay.theta_deg, 6),
                "pixel_count": round(
                    pixel_cost(lay, args.height, args.width, printed_form=printed), 3
                ),
                "distortion": round(entry.distortion, 9),
                "total_cost": round(entry.total, 9),
            }
        )
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    for row in rows:
        mark = " <- selected" if row["n"] == best else ""
        print(
            f"n={row['n']:3d} theta={row['theta_deg']:8.3f} "
            f"pixels={row['pixel_count']:12.0f} d={row['distortion']:8.4f} "
            f"cost={row['total_cost']:.4f}{mark}"
        )
    print(f"selected n={best}")
    return 0


def cmd_rectify(args) -> int:
    try:
        layout = load_layout(args.layout)
    except (OSError, KeyError, ValueError) as exc:
        _fail(f"layout {args.layout!r}: {exc}")
    try:
        pixels = read_image(args.infile)
    except (OSError, ValueError) as exc:
        _fail(f"frame {args.infile!r}: {exc}")
    src = EquirectImage(pixels=pixels)
    os.makedirs(args.out_dir, exist_ok=True)
    for idx in range(layout.n):
        view = rectify_partition(
            src, layout.centers[idx], layout.theta_deg, args.side,
            interp=args.interp, partition_index=idx,
        )
        write_image(os.path.join(args.out_dir, f"part_{idx}.png"), view.image)
    print(f"wrote {layout.n} tiles of {args.side}x{args.side} to {args.out_dir}")
    return 0


def cmd_marker(args) -> int:
    try:
        img = marker_image(args.id, args.px)
    except ValueError as exc:
        _fail(str(exc))
    out = args.out or f"marker_{args.id}.png"
    write_image(out, img)
    print(f"marker {args.id} -> {out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    feed_cfg = cfg["feed"]
    trajectory = _parse_traj(args.traj)
    if args.body:
        from .fiducial import load_body_model

        try:
            body = load_body_model(args.body)
        except (OSError, KeyError, ValueError) as exc:
            _fail(f"body model {args.body!r}: {exc}")
    else:
        body = default_body(face_offset=feed_cfg["face_offset"])
    try:
        feed = Feed(
            trajectory=trajectory,
            body=body,
            marker_side=args.marker_side
            if args.marker_side is not None
            else feed_cfg["marker_side"],
            orientation_mode=args.orientation or feed_cfg["orientation_mode"],
            spin_axis=tuple(feed_cfg["spin_axis"]),
            spin_rate_hz=feed_cfg["spin_rate_hz"],
            src_h=args.src_h if args.src_h is not None else feed_cfg["src_h"],
        )
    except ValueError as exc:
        _fail(str(exc))
    sim.save_feed(feed, args.out, render=args.render)
    extra = " + rendered frames" if args.render else ""
    print(
        f"feed: {feed.frame_count()} frames at {trajectory.sample_rate:g} Hz"
        f" -> {args.out}{extra}"
    )
    return 0


def cmd_track(args) -> int:
    cfg = _load_config(args)
    try:
        layout = load_layout(args.layout)
    except (OSError, KeyError, ValueError) as exc:
        _fail(f"layout {args.layout!r}: {exc}")
    feed = _make_feed(args, cfg)
    exp = cfg["experiment"]
    trk_cfg = cfg["tracker"]
    budget = args.budget if args.budget is not None else trk_cfg["budget"]
    seed = args.seed if args.seed is not None else exp["seed"]
    try:
        report = run_experiment(
            feed,
            layout,
            algo=args.algo,
            detector=args.detector,
            budget=budget,
            seed=seed,
            model=cfgmod.detector_model(cfg),
            cost=exp["cost"],
            ms_per_call=trk_cfg["ms_per_call"],
            ms_per_megapixel=exp["ms_per_megapixel"],
            realtime=exp["realtime"],
            staleness_horizon=trk_cfg["staleness_horizon"],
        )
    except ValueError as exc:
        _fail(str(exc))
    sim.write_track_csv(report, args.out)
    if args.summary:
        sim.write_summary_json(report, args.summary)
    if args.full:
        sim.write_experiment_csv(report, args.full)
    s = report.summary
    print(
        f"{args.algo} on n={layout.n}: {s['detections']}/{s['frames']} frames "
        f"found, mean {s['mean_detector_calls']:.2f} calls -> {args.out}"
    )
    return 0


def _read_results(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for raw in csv.DictReader(fh):
            rows.append(
                {
                    key: (None if value == "" else float(value))
                    for key, value in raw.items()
                }
            )
    return rows


def _read_truth(path) -> dict[int, dict]:
    return {int(row["frame"]): row for row in _read_results(path)}


REPORT_COLUMNS = [
    "source", "frames", "found", "found_rate", "mean_detector_calls",
    "mean_elapsed_ms", "localized", "mean_position_error_m",
    "mean_abs_distance_error_m",
]


def _report_row(path, truth) -> dict:
    rows = _read_results(path)
    found = [r for r in rows if r["found"]]
    row = {
        "source": os.path.basename(path),
        "frames": len(rows),
        "found": len(found),
        "found_rate": round(len(found) / len(rows), 6) if rows else 0.0,
        "mean_detector_calls": round(
            float(np.mean([r["detector_calls"] for r in rows])), 6
        )
        if rows
        else 0.0,
        "mean_elapsed_ms": round(
            float(np.mean([r["elapsed_ms"] for r in rows])), 6
        )
        if rows
        else 0.0,
        "localized": "",
        "mean_position_error_m": "",
        "mean_abs_distance_error_m": "",
    }
    if truth is not None:
        pos_err, rng_err = [], []
        for r in found:
            gt = truth.get(int(r["frame"]))
            if gt is None or r["est_x"] is None:
                continue
            est = np.array([r["est_x"], r["est_y"], r["est_z"]])
            ref = np.array([gt["gt_x"], gt["gt_y"], gt["gt_z"]])
            pos_err.append(float(np.linalg.norm(est - ref)))
            rng_err.append(
                abs(float(np.linalg.norm(est)) - float(np.linalg.norm(ref)))
            )
        row["localized"] = len(pos_err)
        if pos_err:
            row["mean_position_error_m"] = round(float(np.mean(pos_err)), 6)
            row["mean_abs_distance_error_m"] = round(float(np.mean(rng_err)), 6)
    return row


def _plot_distance(path, truth, out_png) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = _read_results(path)
    frames = [r["frame"] for r in rows]
    est = [
        np.linalg.norm([r["est_x"], r["est_y"], r["est_z"]])
        if r["est_x"] is not None
        else np.nan
        for r in rows
    ]
    fig, ax = plt.subplots(figsize=(8, 3))
    if truth is not None:
        t = [truth[int(f)]["t"] for f in frames]
        gt = [
            np.linalg.norm(
                [truth[int(f)]["gt_x"], truth[int(f)]["gt_y"], truth[int(f)]["gt_z"]]
            )
            for f in frames
        ]
        ax.plot(t, gt, label="ground truth", color="black", lw=1)
        ax.plot(t, est, label="estimate", color="tab:red", lw=1)
        ax.set_xlabel("time [s]")
    else:
        ax.plot(frames, est, label="estimate", color="tab:red", lw=1)
        ax.set_xlabel("frame")
    ax.set_ylabel("distance [m]")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(os.path.basename(path))
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def cmd_report(args) -> int:
    truth = None
    if args.truth:
        try:
            truth = _read_truth(args.truth)
        except (OSError, KeyError, ValueError) as exc:
            _fail(f"ground truth {args.truth!r}: {exc}")
    rows = []
    for path in args.infiles:
        try:
            rows.append(_report_row(path, truth))
        except (OSError, KeyError, ValueError) as exc:
            _fail(f"results {path!r}: {exc}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    if args.plots:
        os.makedirs(args.plots, exist_ok=True)
        for path in args.infiles:
            stem = os.path.splitext(os.path.basename(path))[0]
            _plot_distance(
                path, truth, os.path.join(args.plots, f"{stem}_distance.png")
            )
    for row in rows:
        err = (
            f" pos_err={row['mean_position_error_m']}m"
            if row["mean_position_error_m"] != ""
            else ""
        )
        print(
            f"{row['source']}: {row['found']}/{row['frames']} found "
            f"({100 * row['found_rate']:.1f}%), "
            f"{row['mean_detector_calls']:.2f} calls/frame{err}"
        )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphereloc",
        description="Sphere-partition visual localization toolkit.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("partition", help="solve a cap layout and save it")
    p.add_argument("--n", type=int, required=True, help="number of caps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="JSON config overrides")
    p.add_argument("--out", required=True, help="layout JSON path")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser(
        "sweep-n", help="solve layouts over a range of n and rank their cost"
    )
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--n-max", type=int, default=30)
    p.add_argument(
        "--candidates", default=None, help="comma list of n values (overrides range)"
    )
    p.add_argument("--width", type=int, default=960, help="source width, px")
    p.add_argument("--height", type=int, default=480, help="source height, px")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="cost table CSV")
    p.add_argument("--layout-dir", default=None, help="save each layout here")
    p.set_defaults(func=cmd_sweep_n)

    p = sub.add_parser("rectify", help="cut every partition tile out of a frame")
    p.add_argument("--layout", required=True)
    p.add_argument("--in", dest="infile", required=True, help="equirectangular frame")
    p.add_argument("--side", type=int, required=True, help="tile side, px")
    p.add_argument("--interp", choices=("bilinear", "nearest"), default="bilinear")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("marker", help="write a fiducial image")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--px", type=int, required=True, help="output side, px")
    p.add_argument("--out", default=None, help="default marker_<id>.png")
    p.set_defaults(func=cmd_marker)

    p = sub.add_parser("simulate", help="materialize a synthetic feed directory")
    p.add_argument(
        "--traj",
        default="lissajous",
        help="trajectory spec, e.g. lissajous:range_m=0.75,duration=20",
    )
    p.add_argument("--marker-side", type=float, default=None, help="meters")
    p.add_argument("--orientation", choices=("aim", "spin"), default=None)
    p.add_argument("--src-h", type=int, default=None, help="panorama height, px")
    p.add_argument("--body", default=None, help="body model JSON")
    p.add_argument("--render", action="store_true", help="also write frame PNGs")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="feed directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="replay a feed through a search strategy")
    p.add_argument("--layout", required=True)
    p.add_argument("--feed", required=True, help="feed directory or trajectory spec")
    p.add_argument("--algo", choices=("optimized", "greedy"), default="optimized")
    p.add_argument("--detector", choices=("geometric", "image"), default="geometric")
    p.add_argument("--budget", type=int, default=None, help="max detector calls/frame")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="results.csv")
    p.add_argument("--summary", default=None, help="also write summary JSON")
    p.add_argument("--full", default=None, help="also write the full per-frame CSV")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("report", help="aggregate tracking results")
    p.add_argument("--in", dest="infiles", nargs="+", required=True)
    p.add_argument("--truth", default=None, help="ground truth CSV for error columns")
    p.add_argument("--out", default=None, help="summary CSV")
    p.add_argument("--plots", default=None, help="write distance-vs-time PNGs here")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
