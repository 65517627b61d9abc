"""Tests for the dominating module."""

import math

import numpy as np
import pytest

from udpot.base import PreconditionError
from udpot.dominating import BallMeasure, Power, PowerField, Tabulated, build_lambda
from udpot.measure import DiscreteMeasure, ball_masses


class TestPower:
    """Tests for power dominating functions."""

    def test_values(self, segment):
        """Test K r**n at a node."""
        lam = Power(segment, K=2.0, n=1.5)
        assert lam(3, 0.25) == pytest.approx(2.0 * 0.25**1.5)

    def test_measured_doubling(self, segment):
        """Test that the doubling constant is measured as 2**n."""
        lam = Power(segment, K=2.0, n=1.5)
        assert lam.c_lambda == pytest.approx(2**1.5)
        assert lam.upper_dimension == pytest.approx(1.5)

    def test_declared_constant_kept_when_valid(self, segment):
        """Test that a loose declared constant is replaced by the measured one."""
        lam = Power(segment, n=1.0, c_lambda=3.0)
        assert lam.declared_c_lambda == 3.0
        assert lam.c_lambda == pytest.approx(2.0)

    def test_declared_constant_too_small(self, segment):
        """Test that a declared constant below the measured one is rejected."""
        with pytest.raises(PreconditionError, match="exceeded"):
            Power(segment, n=1.0, c_lambda=1.5)

    def test_invalid_parameters(self, segment):
        """Test that K must be positive."""
        with pytest.raises(PreconditionError, match="K > 0"):
            Power(segment, K=0.0)

    def test_radius_must_be_positive(self, segment_lambda):
        """Test that lambda(x, 0) is rejected."""
        with pytest.raises(PreconditionError, match="positive"):
            segment_lambda(0, 0.0)

    def test_evaluate_shapes(self, segment_lambda):
        """Test shared and per-row radii."""
        assert segment_lambda.evaluate([0.1, 0.2]).shape == (65, 2)
        per_row = segment_lambda.evaluate(np.array([[0.1], [0.2]]), [0, 1])
        assert np.allclose(per_row[:, 0], [0.1, 0.2])


class TestPowerField:
    """Tests for per-node exponents."""

    def test_node_dependent(self, segment):
        """Test that each node uses its own exponent."""
        field = np.where(np.arange(segment.n) < 10, 1.0, 2.0)
        lam = PowerField(segment, K=3.0, n_field=field)
        assert lam(0, 0.5) == pytest.approx(1.5)
        assert lam(20, 0.5) == pytest.approx(0.75)
        assert lam.c_lambda == pytest.approx(4.0)

    def test_missing_field(self, segment):
        """Test that the exponent field is required."""
        with pytest.raises(PreconditionError, match="exponent field"):
            PowerField(segment)


class TestBallMeasure:
    """Tests for lambda(x, r) = mu(B(x, r))."""

    def test_matches_ball_masses(self, segment, segment_measure):
        """Test that the values are the ball masses."""
        lam = BallMeasure(segment, mu=segment_measure)
        radii = segment.radii[::5]
        assert np.allclose(
            lam.evaluate(radii), ball_masses(segment, segment_measure, radii)
        )

    def test_zero_weight_not_positive(self, segment):
        """Test that a measure with an isolated zero weight is rejected."""
        weights = np.full(segment.n, 1.0)
        weights[5] = 0.0
        mu = DiscreteMeasure(weights)
        with pytest.raises(PreconditionError, match="not positive at node 5"):
            build_lambda(segment, {"kind": "ball-measure"}, mu)


class TestTabulated:
    """Tests for tabulated dominating functions."""

    def test_right_continuous_steps(self, segment):
        """Test the step values at and between tabulated radii."""
        lam = Tabulated(segment, radii=[0.1, 0.5], table=[1.0, 2.0])
        values = lam.evaluate([0.05, 0.1, 0.3, 0.5, 0.9], [0])[0]
        assert list(values) == [1.0, 1.0, 1.0, 2.0, 2.0]

    def test_decreasing_rejected(self, segment):
        """Test that a decreasing table is rejected with its witness."""
        with pytest.raises(PreconditionError, match="decreases in r"):
            Tabulated(segment, radii=[0.1, 0.5], table=[2.0, 1.0])

    def test_nonpositive_rejected(self, segment):
        """Test that zero values are rejected."""
        with pytest.raises(PreconditionError, match="not positive"):
            Tabulated(segment, radii=[0.1, 0.5], table=[0.0, 1.0])

    def test_shape_mismatch(self, segment):
        """Test that per-node tables need one row per node."""
        with pytest.raises(PreconditionError, match="table shape"):
            Tabulated(segment, radii=[0.1, 0.5], table=np.ones((3, 2)))


class TestBuildLambda:
    """Tests for build_lambda."""

    def test_power(self, segment):
        """Test the power kind with declared lower type."""
        lam = build_lambda(segment, {"kind": "power", "K": 2, "n": 1, "lower_type": 1})
        assert isinstance(lam, Power)
        assert lam.lower_type == 1
        assert lam.describe()["K"] == 2.0

    def test_power_field(self, segment):
        """Test the power-field kind from a list."""
        spec = {"kind": "power-field", "n": [1.0] * segment.n}
        lam = build_lambda(segment, spec)
        assert isinstance(lam, PowerField)
        assert math.isclose(lam.c_lambda, 2.0)

    def test_unknown_kind(self, segment):
        """Test that unknown kinds list the valid choices."""
        with pytest.raises(PreconditionError, match="tabulated"):
            build_lambda(segment, {"kind": "gaussian"})
