"""Tests for the space module."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from udpot.base import PreconditionError
from udpot.space import (
    QuasiMetricSpace,
    ball,
    build_space,
    canonical_radii,
    geometric_doubling_number,
    quasi_triangle_constant,
    quasi_triangle_scan,
    space_summary,
)


class TestConstruction:
    """Tests for QuasiMetricSpace validation."""

    def test_grid1d_layout(self, segment):
        """Test node count, spacing, diameter and trapezoid volumes."""
        assert segment.n == 65
        assert segment.r0 == pytest.approx(1.0)
        assert segment.mesh_size == pytest.approx(1 / 64)
        assert segment.k1 == 1.0
        assert segment.volumes[0] == pytest.approx(1 / 128)
        assert segment.volumes[1] == pytest.approx(1 / 64)
        assert math.fsum(segment.volumes) == pytest.approx(1.0)

    def test_grid2d_volumes_sum_to_area(self):
        """Test that tensorised trapezoid weights integrate the unit square."""
        space = build_space({"kind": "grid2d", "n": 9})
        assert space.n == 81
        assert space.dimension == 2.0
        assert math.fsum(space.volumes) == pytest.approx(1.0)

    def test_cantor_nodes(self):
        """Test that generation g has 2**g nodes of mass 2**-g."""
        space = build_space({"kind": "cantor", "generation": 4})
        assert space.n == 16
        assert np.allclose(space.volumes, 1 / 16)
        assert space.dimension == pytest.approx(math.log(2) / math.log(3))
        assert space.mesh_size == pytest.approx(2 / 81)

    def test_asymmetric_rejected(self):
        """Test that an asymmetric distance matrix is rejected."""
        with pytest.raises(PreconditionError, match="not symmetric"):
            QuasiMetricSpace(nodes=[0, 1], dist=np.array([[0.0, 1.0], [2.0, 0.0]]))

    def test_duplicate_points_rejected(self):
        """Test that two nodes at distance zero are rejected."""
        dist = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
        with pytest.raises(PreconditionError, match="duplicate"):
            QuasiMetricSpace(nodes=[0, 1, 2], dist=dist)

    def test_nonzero_diagonal_rejected(self):
        """Test that d(x, x) must vanish."""
        with pytest.raises(PreconditionError, match="itself"):
            QuasiMetricSpace(nodes=[0], dist=np.array([[1.0]]))

    def test_unbounded_rejected(self):
        """Test that infinite distances are rejected."""
        dist = np.array([[0.0, np.inf], [np.inf, 0.0]])
        with pytest.raises(PreconditionError, match="finite"):
            QuasiMetricSpace(nodes=[0, 1], dist=dist)

    def test_unknown_kind(self):
        """Test that unknown space kinds are rejected with the valid choices."""
        with pytest.raises(PreconditionError, match="grid1d"):
            build_space({"kind": "torus"})

    def test_missing_key(self):
        """Test that a missing builder key becomes a PreconditionError."""
        with pytest.raises(PreconditionError, match="'n'"):
            build_space({"kind": "grid1d"})

    def test_unknown_node(self, segment):
        """Test that unknown node ids are rejected."""
        with pytest.raises(PreconditionError, match="unknown node"):
            segment.node_index("nowhere")

    def test_identity_hash(self):
        """Test that two equal specs still give distinct spaces."""
        a = build_space({"kind": "grid1d", "n": 3})
        b = build_space({"kind": "grid1d", "n": 3})
        assert a != b
        assert len({a, b, a}) == 2


class TestQuasiTriangle:
    """Tests for the quasi-triangle constant."""

    def test_metric_is_one(self, segment):
        """Test that a Euclidean grid has k1 = 1."""
        assert quasi_triangle_constant(segment) == pytest.approx(1.0)

    def test_stretched_triangle(self, triangle):
        """Test the exact maximum 3 / (1 + 1) on three nodes."""
        assert triangle.k1 == pytest.approx(1.5)
        assert not triangle.k1_estimated

    def test_squared_distance(self):
        """Test that squared distances on a line give k1 = 2."""
        x = np.array([0.0, 1.0, 2.0])
        dist = (x[:, None] - x[None, :]) ** 2
        k1, estimated = quasi_triangle_scan(dist)
        assert k1 == pytest.approx(2.0)
        assert not estimated

    def test_sampled_scan_flagged(self):
        """Test that the sampled scan is used above the exhaustive limit."""
        x = np.arange(6, dtype=float)
        dist = np.abs(x[:, None] - x[None, :])
        k1, estimated = quasi_triangle_scan(dist, exhaustive_limit=4, samples=1000)
        assert estimated
        assert k1 == pytest.approx(1.0)

    def test_snowflake_is_metric(self):
        """Test that a snowflaked line stays a metric."""
        space = build_space(
            {"kind": "snowflake", "theta": 0.5, "base": {"kind": "grid1d", "n": 9}}
        )
        assert space.k1 == pytest.approx(1.0)
        assert space.dimension == pytest.approx(2.0)


class TestBalls:
    """Tests for open balls and canonical radii."""

    def test_open_ball_excludes_boundary(self, segment):
        """Test that B(x, r) is open."""
        h = 1 / 64
        b = ball(segment, 32, 2 * h)
        assert set(b.members) == {31, 32, 33}
        assert 30 not in b

    def test_ball_contains_center(self, segment):
        """Test that every positive radius contains the center."""
        assert ball(segment, 0, 1e-9).members == (0,)

    def test_nonpositive_radius(self, segment):
        """Test that radii must be positive."""
        with pytest.raises(PreconditionError):
            ball(segment, 0, 0.0)

    def test_canonical_radii_sorted_and_merged(self, segment):
        """Test that canonical radii are strictly increasing without near-duplicates."""
        radii = canonical_radii(segment)
        assert np.all(np.diff(radii) > 0)
        assert np.all(radii[1:] > radii[:-1] * (1 + 1e-9))
        assert radii[-1] == pytest.approx(segment.r0)

    def test_canonical_radii_reach_below_min_distance(self, segment):
        """Test that the dyadic ladder goes below the smallest positive distance."""
        assert segment.radii[0] < 1 / 64

    def test_single_node(self):
        """Test that a single node space has the canonical radius 1."""
        space = QuasiMetricSpace(nodes=["x"], dist=np.zeros((1, 1)))
        assert list(space.radii) == [1.0]
        assert ball(space, "x", 0.5).members == ("x",)

    def test_resolved_radii_above_mesh(self, segment):
        """Test that resolved radii exceed the mesh size."""
        assert np.all(segment.resolved_radii > segment.mesh_size)

    def test_counts_match_balls(self, segment):
        """Test that counts agree with explicit ball membership."""
        radii = segment.radii[::7]
        counts = segment.counts(radii)
        for x in (0, 17, 64):
            for k, r in enumerate(radii):
                assert counts[x, k] == len(ball(segment, x, r))

    @settings(max_examples=30, deadline=None)
    @given(
        st.integers(min_value=0, max_value=64),
        st.floats(min_value=1e-3, max_value=1.5),
        st.floats(min_value=1e-3, max_value=1.5),
    )
    def test_ball_nesting(self, x, r1, r2):
        """Test that r1 <= r2 implies B(x, r1) is inside B(x, r2)."""
        space = build_space({"kind": "grid1d", "n": 65})
        lo, hi = sorted((r1, r2))
        assert set(ball(space, x, lo).members) <= set(ball(space, x, hi).members)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=32), st.floats(0.01, 1.2))
    def test_ball_permutation_equivariant(self, i, r):
        """Test that relabelling the nodes relabels every ball."""
        space = build_space({"kind": "grid2d", "n": 6, "length": 1.0})
        perm = np.random.default_rng(11).permutation(space.n)
        points = [f"p{k}" for k in perm]
        shuffled = build_space(
            {
                "kind": "explicit",
                "points": points,
                "distances": np.asarray(space.dist)[np.ix_(perm, perm)].tolist(),
            }
        )
        expected = {f"p{k}" for k in ball(space, int(perm[i]), r).indices}
        assert set(ball(shuffled, points[i], r).members) == expected


class TestDoublingNumber:
    """Tests for the geometric doubling number."""

    def test_line_is_small(self):
        """Test that a grid on a line has a small doubling number."""
        space = build_space({"kind": "grid1d", "n": 33})
        assert 2 <= geometric_doubling_number(space) <= 4

    def test_square_exceeds_line(self):
        """Test that the square needs more half balls than the line."""
        line = build_space({"kind": "grid1d", "n": 17})
        square = build_space({"kind": "grid2d", "n": 9})
        assert geometric_doubling_number(square) > geometric_doubling_number(line)

    def test_summary(self, segment):
        """Test that the summary carries the spec and the constants."""
        summary = space_summary(segment)
        assert summary["spec"] == {"kind": "grid1d", "n": 65}
        assert summary["n_nodes"] == 65
        assert summary["geometric_doubling_number"] >= 2
        assert "geometric_doubling_number" not in space_summary(segment, False)
