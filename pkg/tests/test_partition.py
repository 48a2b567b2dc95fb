import json
import re

import numpy as np
import pytest

from sphereloc import geometry as geo
from sphereloc import partition

OCTAHEDRON = np.array(
    [
        [1.0, 0, 0], [-1.0, 0, 0],
        [0, 1.0, 0], [0, -1.0, 0],
        [0, 0, 1.0], [0, 0, -1.0],
    ]
)


def synthetic_layout(n, theta):
    return partition.PartitionLayout(
        centers=geo.fibonacci_sphere(n), theta_deg=theta, seed=0
    )


class TestCoveringAngle:
    def test_single_center(self):
        assert np.isclose(partition.covering_angle(np.array([[0, 0, 1.0]])), 360.0)

    def test_two_antipodal(self):
        centers = np.array([[0, 0, 1.0], [0, 0, -1.0]])
        assert np.isclose(partition.covering_angle(centers), 180.0, atol=0.1)

    def test_octahedron(self):
        # deepest hole of the octahedron is a face center, radius arccos(1/sqrt(3))
        expect = 2.0 * np.degrees(np.arccos(1.0 / np.sqrt(3.0)))
        got = partition.covering_angle(OCTAHEDRON)
        assert abs(got - expect) < 0.2

    def test_adding_center_never_increases(self, rng):
        centers = rng.normal(size=(8, 3))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
        base = partition.covering_angle(centers, samples=50_000)
        for _ in range(5):
            extra = rng.normal(size=(1, 3))
            extra /= np.linalg.norm(extra)
            bigger = partition.covering_angle(
                np.vstack([centers, extra]), samples=50_000
            )
            # evaluator accuracy is ~0.05 deg; allow that much slack
            assert bigger <= base + 0.05


class TestSolveLayout:
    def test_n1(self):
        lay = partition.solve_layout(1, seed=0)
        assert lay.n == 1
        assert np.isclose(lay.theta_deg, 360.0)

    def test_n2_antipodal(self, layout_cache):
        lay = layout_cache(2)
        gap = np.degrees(geo.angular_distance(lay.centers[0], lay.centers[1]))
        assert gap > 179.5
        assert abs(lay.theta_deg - 180.0) < 0.5

    def test_n4_tetrahedral(self, layout_cache):
        lay = layout_cache(4)
        assert abs(lay.theta_deg - 141.1) < 2.0

    @pytest.mark.parametrize("n,expect", [(6, 110.0), (12, 74.0), (24, 62.0)])
    def test_reference_counts(self, layout_cache, n, expect):
        assert abs(layout_cache(n).theta_deg - expect) <= 3.0

    def test_deterministic(self):
        a = partition.solve_layout(7, seed=3)
        b = partition.solve_layout(7, seed=3)
        assert np.array_equal(a.centers, b.centers)
        assert a.theta_deg == b.theta_deg

    def test_coverage_oracle(self, layout_cache):
        samples = geo.fibonacci_sphere(100_000)
        for n in (2, 4, 6, 12, 24):
            lay = layout_cache(n)
            nearest = np.degrees(
                np.arccos(np.clip((samples @ lay.centers.T).max(axis=1), -1, 1))
            )
            assert nearest.max() <= lay.theta_deg / 2.0 + 0.1

    def test_trace_monotone(self):
        rng = np.random.default_rng([5, 0])
        _, _, trace = partition.repel_centers(9, rng)
        diffs = np.diff(np.array(trace))
        assert np.all(diffs >= 0)

    def test_budget_exhaustion_raises(self):
        cfg = partition.SolverConfig(max_iters=3)
        with pytest.raises(partition.ConvergenceError, match="3-iteration"):
            rng = np.random.default_rng(0)
            partition.repel_centers(10, rng, cfg)

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            partition.solve_layout(0)


class TestPixelCost:
    def test_whole_sphere_single_cap(self):
        lay = synthetic_layout(1, 360.0)
        assert partition.pixel_cost(lay, 100, 100) == 10_000

    def test_reference_value(self):
        lay = synthetic_layout(12, 74.0)
        assert np.isclose(partition.pixel_cost(lay, 960, 480), 233_642.67, atol=0.5)

    def test_printed_form_grows_for_small_caps(self):
        lay = synthetic_layout(12, 74.0)
        assert partition.pixel_cost(lay, 960, 480, printed_form=True) > (
            partition.pixel_cost(lay, 960, 480)
        )

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            partition.pixel_cost(synthetic_layout(1, 360.0), 0, 10)


class TestDistortionMetric:
    def test_vanishes_at_zero_fov(self):
        assert partition.distortion_metric(1e-6) < 1e-9

    def test_90_degrees(self):
        assert np.isclose(partition.distortion_metric(90.0), 3.0 * np.sqrt(3.0) - 1.0)

    def test_monotone(self):
        d = [partition.distortion_metric(t) for t in (62.0, 74.0, 110.0)]
        assert d[0] < d[1] < d[2]

    def test_validity_boundary(self):
        assert partition.distortion_metric(180.0) == np.inf
        assert partition.distortion_metric(359.0) == np.inf
        with pytest.raises(ValueError):
            partition.distortion_metric(0.0)


class TestSelectN:
    def layouts(self):
        return [
            synthetic_layout(6, 109.47),
            synthetic_layout(12, 74.76),
            synthetic_layout(24, 62.52),
        ]

    def test_single_candidate(self):
        best, table = partition.select_n([synthetic_layout(5, 120.0)], 960, 480)
        assert best == 5
        assert len(table) == 1

    def test_dominant_first_weight_picks_smallest(self):
        eps = 1e-3
        best, _ = partition.select_n(
            self.layouts(), 960, 480, weights=(1 - 2 * eps, eps, eps)
        )
        assert best == 6

    def test_argmin_invariant_under_image_scale(self):
        best1, _ = partition.select_n(self.layouts(), 960, 480)
        best2, _ = partition.select_n(self.layouts(), 3840, 1920)
        assert best1 == best2

    def test_tie_breaks_toward_smaller_n(self):
        # identical theta and identical n-term spread force symmetric costs
        same = [synthetic_layout(8, 90.0), synthetic_layout(8, 90.0)]
        best, _ = partition.select_n(same, 100, 100)
        assert best == 8

    def test_table_totals_match_argmin(self):
        best, table = partition.select_n(self.layouts(), 960, 480)
        totals = {row.n: row.total for row in table}
        assert best == min(totals, key=totals.get)

    @pytest.mark.parametrize(
        "weights",
        [(0.5, 0.3, 0.2), (0.6, 0.2, 0.2), (0.7, 0.05, 0.24), (0.6, -0.05, 0.45)],
    )
    def test_rejects_bad_weights(self, weights):
        with pytest.raises(ValueError):
            partition.select_n(self.layouts(), 960, 480, weights=weights)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            partition.select_n([], 100, 100)

    def test_minmax_affine_invariance(self, rng):
        col = rng.uniform(1, 5, size=10)
        a = partition._minmax(col)
        b = partition._minmax(3.7 * col + 11.0)
        assert np.allclose(a, b)
        assert np.all(partition._minmax(np.full(4, 2.5)) == 0)


class TestLayoutIO:
    def test_round_trip(self, tmp_path, layout_cache):
        lay = layout_cache(6)
        path = tmp_path / "layout.json"
        partition.save_layout(lay, path)
        back = partition.load_layout(path)
        assert back.n == lay.n
        assert back.seed == lay.seed
        assert abs(back.theta_deg - lay.theta_deg) < 1e-6
        assert np.max(geo.chord_angle(back.centers, lay.centers)) < 1e-8

    def test_nine_significant_digits(self, tmp_path, layout_cache):
        path = tmp_path / "layout.json"
        partition.save_layout(layout_cache(4), path)
        text = path.read_text(encoding="utf-8")
        for num in re.findall(r"-?\d+\.\d+", text):
            digits = num.replace("-", "").replace(".", "").lstrip("0")
            assert len(digits) <= 10  # 9 significant + float repr wiggle

    def test_count_mismatch_rejected(self, tmp_path):
        doc = {
            "n": 3,
            "theta_deg": 100.0,
            "seed": 0,
            "centers": [{"lat_deg": 0.0, "lon_deg": 0.0}],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(ValueError):
            partition.load_layout(path)


class TestLayoutType:
    def test_rejects_non_unit_centers(self):
        with pytest.raises(ValueError):
            partition.PartitionLayout(
                centers=np.array([[2.0, 0, 0]]), theta_deg=100.0, seed=0
            )

    def test_rejects_bad_theta(self):
        with pytest.raises(ValueError):
            partition.PartitionLayout(
                centers=np.array([[1.0, 0, 0]]), theta_deg=0.0, seed=0
            )
        with pytest.raises(ValueError):
            partition.PartitionLayout(
                centers=np.array([[1.0, 0, 0]]), theta_deg=361.0, seed=0
            )
