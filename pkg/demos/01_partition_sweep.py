"""Solve sphere partitions and pick the cap count worth rectifying.

Walks a few candidate cap counts, solves the covering layout for each,
then scores them on search effort, pixels processed, and tile
distortion.  Writes the winning layout to demos/out/ for the other
demos to reuse.
"""

import argparse
import pathlib

from sphereloc.partition import (
    distortion_metric,
    pixel_cost,
    save_layout,
    select_n,
    solve_layout,
)

CANDIDATES = (6, 8, 12, 16, 24)
FRAME_H, FRAME_W = 480, 960


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="demos/out")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    print(f"frame {FRAME_W}x{FRAME_H}, candidates {CANDIDATES}")
    layouts = []
    for n in CANDIDATES:
        layout = solve_layout(n, seed=args.seed)
        layouts.append(layout)
        px = pixel_cost(layout, FRAME_H, FRAME_W)
        print(
            f"  n={n:2d}  covering angle {layout.theta_deg:6.2f} deg  "
            f"pixels/frame {px * FRAME_H * FRAME_W:9.0f}  "
            f"corner distortion {distortion_metric(layout.theta_deg):.3f}"
        )

    best, table = select_n(layouts, FRAME_H, FRAME_W)
    print("\nweighted totals (search + pixels + distortion):")
    for row in table:
        mark = "  <-- selected" if row.n == best else ""
        print(f"  n={row.n:2d}  total {row.total:.3f}{mark}")

    winner = next(l for l in layouts if l.n == best)
    path = out / f"layout_{best}.json"
    save_layout(winner, path)
    print(f"\nsaved winning layout to {path}")


if __name__ == "__main__":
    main()
