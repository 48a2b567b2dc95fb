"""Sphere partitioning into minimally overlapping circular caps.

A layout is a set of N cap centers plus the covering angle theta: the
smallest cap "diameter" (in degrees) such that caps of radius theta/2
centered on the layout points cover the whole sphere.

Centers come from an iterative repulsion solver.  Caps are given a
target diameter from the area packing bound, every pair of centers
closer than the target pushes apart along its great circle, and a
candidate update is only accepted while the minimum pairwise distance
does not decrease (the step is halved until that holds).  Pushing all
overlapping pairs at once rather than just the single closest pair is
what lets ties dissolve: at a tie, moving one pair alone can never
raise the minimum, and the solve would freeze far from the optimum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo

DEFAULT_ALPHA = (0.60, 0.05, 0.35)


class ConvergenceError(RuntimeError):
    """Raised when a repulsion run exhausts its iteration budget."""


@dataclass(frozen=True)
class SolverConfig:
    eta: float = 0.05              # step gain, rad of push per rad of overlap
    max_iters: int = 200_000       # iteration budget per restart
    stall_window: int = 500        # iterations per convergence check
    stall_tol: float = 1e-6        # rad; min-distance gain below this = converged
    restarts: int = 8
    covering_samples: int = 200_000
    polish_iters: int = 20
    max_halvings: int = 20         # step halvings before an iteration gives up

    def as_dict(self) -> dict:
        return {
            "eta": self.eta,
            "max_iters": self.max_iters,
            "stall_window": self.stall_window,
            "stall_tol": self.stall_tol,
            "restarts": self.restarts,
            "covering_samples": self.covering_samples,
            "polish_iters": self.polish_iters,
            "max_halvings": self.max_halvings,
        }


@dataclass(frozen=True)
class PartitionLayout:
    """N cap centers plus the covering angle of the induced caps."""

    centers: np.ndarray            # (n, 3) unit rows
    theta_deg: float               # covering cap diameter, degrees
    seed: int

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[1] != 3 or c.shape[0] < 1:
            raise ValueError("centers must be an (n, 3) array")
        if not np.allclose(np.linalg.norm(c, axis=1), 1.0, atol=1e-9):
            raise ValueError("centers must be unit vectors")
        if not 0.0 < self.theta_deg <= 360.0:
            raise ValueError("theta_deg must be in (0, 360]")
        object.__setattr__(self, "centers", c)


@dataclass(frozen=True)
class CostBreakdown:
    """One row of the cap-count selection table."""

    n: int
    pixel_count: float             # pixels processed per frame for this n
    distortion: float              # corner magnification of the rectified tile
    weights: tuple[float, float, float]
    total: float                   # weighted sum of the min-max normalized terms


def _min_pairwise(centers: np.ndarray) -> float:
    dots = centers @ centers.T
    np.fill_diagonal(dots, -2.0)
    return float(np.arccos(np.clip(dots.max(), -1.0, 1.0)))


def repel_centers(
    n: int, rng: np.random.Generator, config: SolverConfig = SolverConfig()
) -> tuple[np.ndarray, float, list[float]]:
    """One repulsion run from a random start.

    Returns (centers, min pairwise distance, accepted-minimum trace).
    Raises ConvergenceError when the iteration budget runs out before
    the stall test declares convergence.
    """
    centers = rng.normal(size=(n, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    if n == 1:
        return centers, np.pi, [np.pi]
    # cap-area packing bound on the pairwise gap; actual optima sit below
    # it, so the push toward it never dies off on its own
    target = 2.0 * np.arccos(1.0 - 2.0 / n)
    eye = np.eye(n, dtype=bool)
    best_min = _min_pairwise(centers)
    trace = [best_min]
    stall_anchor = best_min
    stall_count = 0
    for _ in range(config.max_iters):
        dots = centers @ centers.T
        np.clip(dots, -1.0, 1.0, out=dots)
        dist = np.arccos(dots)
        overlap = (dist < target) & ~eye
        if not overlap.any():
            return centers, best_min, trace
        sin_d = np.maximum(np.sin(dist), 1e-9)
        w = np.where(overlap, config.eta * (target - dist) * 0.5 / sin_d, 0.0)
        # tangent push of i away from j is (cos(d_ij)*c_i - c_j)/sin(d_ij);
        # summing over j collapses to two matrix products
        disp = (w * dots).sum(axis=1, keepdims=True) * centers - w @ centers
        scale = 1.0
        for _ in range(config.max_halvings):
            cand = centers + scale * disp
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            cand_min = _min_pairwise(cand)
            if cand_min >= best_min:
                centers = cand
                best_min = cand_min
                trace.append(best_min)
                break
            scale *= 0.5
        stall_count += 1
        if stall_count >= config.stall_window:
            if best_min - stall_anchor < config.stall_tol:
                return centers, best_min, trace
            stall_anchor = best_min
            stall_count = 0
    raise ConvergenceError(
        f"repulsion did not converge within the {config.max_iters}-iteration budget"
    )


def covering_angle(
    centers: np.ndarray, samples: int = 200_000, polish_iters: int = 20
) -> float:
    """Covering cap diameter in degrees: 2 x the deepest-hole radius.

    Dense Fibonacci sampling finds the neighborhood of the deepest hole
    (the sphere point farthest from every center); a compass pattern
    search on the local tangent plane then refines it.  Accuracy is a
    small fraction of the sample spacing, about +-0.05 deg at the
    default sample count.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    pts = geo.fibonacci_sphere(samples)
    nearest = np.arccos(np.clip((pts @ centers.T).max(axis=1), -1.0, 1.0))
    k = int(np.argmax(nearest))
    p = pts[k]
    best = nearest[k]
    step = 0.01
    angles = np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False)
    compass = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for _ in range(polish_iters):
        e1 = np.cross(p, geo.NORTH)
        if np.linalg.norm(e1) < 1e-9:
            e1 = np.cross(p, geo.OPTICAL_AXIS)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(p, e1)
        moved = False
        for dx, dy in compass:
            q = p + step * (dx * e1 + dy * e2)
            q /= np.linalg.norm(q)
            depth = float(np.arccos(np.clip(np.max(q @ centers.T), -1.0, 1.0)))
            if depth > best:
                p, best = q, depth
                moved = True
                break
        if not moved:
            step *= 0.5
    return float(np.degrees(2.0 * best))


def solve_layout(
    n: int, seed: int = 0, config: SolverConfig = SolverConfig()
) -> PartitionLayout:
    """Place n cap centers by repulsion and evaluate their covering angle.

    Runs `config.restarts` independent repulsions seeded from (seed, k)
    and keeps the run with the largest minimum pairwise distance, so the
    result is deterministic for a given (n, seed, config).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    best_centers = None
    best_dmin = -1.0
    for k in range(config.restarts):
        rng = np.random.default_rng([seed, k])
        centers, dmin, _ = repel_centers(n, rng, config)
        if dmin > best_dmin:
            best_centers, best_dmin = centers, dmin
    theta = covering_angle(best_centers, config.covering_samples, config.polish_iters)
    return PartitionLayout(centers=best_centers, theta_deg=min(theta, 360.0), seed=seed)


def pixel_cost(
    layout: PartitionLayout, h: int, w: int, printed_form: bool = False
) -> float:
    """Pixels processed per frame when every cap is rectified.

    Default: p = N * (theta/360)^2 * (h*w) — each cap reads a patch of
    the source whose linear extent scales with its angular diameter.
    The `printed_form` alternative N * (360/theta)^2 * (h*w) grows as
    caps shrink and is kept only for side-by-side comparison.
    """
    if h < 1 or w < 1:
        raise ValueError("image dimensions must be positive")
    ratio = 360.0 / layout.theta_deg if printed_form else layout.theta_deg / 360.0
    return layout.n * ratio**2 * (h * w)


def distortion_metric(theta_deg: float) -> float:
    """Corner magnification of a square rectilinear tile with FoV theta.

    A pinhole tile of pan=tilt angle theta has its corner at off-axis
    angle psi = arctan(sqrt(2)*tan(theta/2)); the solid-angle
    magnification there is sec^3(psi), and the reported distortion is
    its excess over the center, sec^3(psi) - 1.  Strictly increasing in
    theta; theta >= 180 deg is beyond rectilinear validity and maps to
    +inf.
    """
    if theta_deg <= 0:
        raise ValueError("theta must be positive")
    if theta_deg >= 180.0:
        return float("inf")
    half = np.radians(theta_deg) / 2.0
    sec_psi = np.sqrt(1.0 + 2.0 * np.tan(half) ** 2)
    return float(sec_psi**3 - 1.0)


def _minmax(col: np.ndarray) -> np.ndarray:
    """Min-max normalize a column; a constant column normalizes to 0."""
    col = np.asarray(col, dtype=float)
    lo, hi = col.min(), col.max()
    if hi - lo < 1e-300:
        return np.zeros_like(col)
    return (col - lo) / (hi - lo)


def select_n(
    layouts: list[PartitionLayout],
    h: int,
    w: int,
    weights: tuple[float, float, float] = DEFAULT_ALPHA,
) -> tuple[int, list[CostBreakdown]]:
    """Pick the cap count minimizing a1*N + a2*p + a3*d.

    Each raw term (cap count, pixel cost, distortion) is min-max
    normalized over the candidate set before weighting, so the argmin
    is invariant under positive affine rescaling of any raw column.
    Ties break toward the smaller N.
    """
    if not layouts:
        raise ValueError("candidate list is empty")
    a1, a2, a3 = (float(x) for x in weights)
    if abs(a1 + a2 + a3 - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    if min(a1, a2, a3) <= 0:
        raise ValueError("weights must be positive")
    if a1 < 5.0 * a2:
        raise ValueError("the cap-count weight must dominate: a1 >= 5*a2")
    ns = np.array([lay.n for lay in layouts], dtype=float)
    pix = np.array([pixel_cost(lay, h, w) for lay in layouts])
    dis = np.array([distortion_metric(lay.theta_deg) for lay in layouts])
    finite = np.isfinite(dis)
    dis_norm = np.full_like(dis, np.inf)
    if finite.any():
        dis_norm[finite] = _minmax(dis[finite])
    totals = a1 * _minmax(ns) + a2 * _minmax(pix) + a3 * dis_norm
    table = [
        CostBreakdown(
            n=int(ns[i]),
            pixel_count=float(pix[i]),
            distortion=float(dis[i]),
            weights=(a1, a2, a3),
            total=float(totals[i]),
        )
        for i in range(len(layouts))
    ]
    order = sorted(range(len(layouts)), key=lambda i: (totals[i], ns[i]))
    return int(ns[order[0]]), table


# ---------------------------------------------------------------------------
# Layout files: the persisted contract between the solver, the rectifier
# and the tracker.
# ---------------------------------------------------------------------------


def _sig9(x: float) -> float:
    return float(format(float(x), ".9g"))


def save_layout(layout: PartitionLayout, path) -> None:
    """Write a layout as UTF-8 JSON with 9 significant digits."""
    lat, lon = geo.dir_to_geo(layout.centers)
    doc = {
        "n": layout.n,
        "theta_deg": _sig9(layout.theta_deg),
        "seed": int(layout.seed),
        "centers": [
            {"lat_deg": _sig9(np.degrees(la)), "lon_deg": _sig9(np.degrees(lo))}
            for la, lo in zip(lat, lon)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_layout(path) -> PartitionLayout:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    lat = np.radians([c["lat_deg"] for c in doc["centers"]])
    lon = np.radians([c["lon_deg"] for c in doc["centers"]])
    centers = geo.geo_to_dir(lat, lon)
    if centers.shape[0] != doc["n"]:
        raise ValueError("layout file center count disagrees with its n field")
    return PartitionLayout(
        centers=centers, theta_deg=float(doc["theta_deg"]), seed=int(doc["seed"])
    )
