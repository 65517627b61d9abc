"""Tests for the measure module."""

import math

import numpy as np
import pytest

from udpot.base import PreconditionError
from udpot.dominating import Power, PowerField
from udpot.measure import (
    DiscreteMeasure,
    GridFunction,
    ahlfors_bound,
    ahlfors_envelope_fit,
    ahlfors_fit,
    atom_scan,
    ball_masses,
    ball_measure,
    build_measure,
    check_upper_doubling,
    comparable_center_constant,
    estimate_doubling_constant,
    estimate_lower_type,
    lower_type_all,
    lower_type_check,
    ratio_property_constant,
    upper_type_check,
)
from udpot.space import ball, build_space


class TestDiscreteMeasure:
    """Tests for measure construction."""

    def test_negative_weight_rejected(self):
        """Test that negative weights name the offending node."""
        with pytest.raises(PreconditionError, match="node 1"):
            DiscreteMeasure(np.array([1.0, -1.0]))

    def test_nan_weight_rejected(self):
        """Test that non-finite weights are rejected."""
        with pytest.raises(PreconditionError):
            DiscreteMeasure(np.array([np.nan]))

    def test_weights_read_only(self):
        """Test that weights are frozen after construction."""
        mu = DiscreteMeasure(np.ones(3))
        with pytest.raises(ValueError):
            mu.weights[0] = 2.0

    def test_total_and_scaled(self):
        """Test the total mass and scaling."""
        mu = DiscreteMeasure(np.full(10, 0.1))
        assert mu.total == pytest.approx(1.0)
        assert mu.scaled(3.0).total == pytest.approx(3.0)

    def test_grid_function_finite(self):
        """Test that grid functions reject infinite values."""
        with pytest.raises(PreconditionError, match="node 2"):
            GridFunction(np.array([0.0, 1.0, np.inf]))

    def test_build_kinds(self, segment):
        """Test the quadrature, uniform and weights kinds."""
        quad = build_measure(segment, {"kind": "quadrature", "scale": 2.0})
        assert quad.total == pytest.approx(2.0)
        uniform = build_measure(segment, {"kind": "uniform", "total": 5.0})
        assert np.allclose(uniform.weights, 5.0 / 65)
        explicit = build_measure(segment, {"kind": "weights", "values": [1.0] * 65})
        assert explicit.total == pytest.approx(65.0)

    def test_cluster(self, segment):
        """Test that a cluster adds a point mass at the named node."""
        spec = {"kind": "uniform", "cluster": {"node": 3, "weight": 7}}
        mu = build_measure(segment, spec)
        assert mu.weights[3] == pytest.approx(7.0 + 1.0 / 65)

    def test_misaligned(self, segment):
        """Test that a measure must have one weight per node."""
        with pytest.raises(PreconditionError, match="one value per node"):
            build_measure(segment, {"kind": "weights", "values": [1.0, 2.0]})

    def test_unknown_kind(self, segment):
        """Test that unknown measure kinds are rejected."""
        with pytest.raises(PreconditionError, match="unknown measure kind"):
            build_measure(segment, {"kind": "lebesgue"})


class TestBallMeasure:
    """Tests for ball measures."""

    def test_matches_member_sum(self, segment, segment_measure):
        """Test that mu(B(x, r)) is the sum of member weights."""
        for x, r in ((0, 0.1), (32, 0.25), (64, 2.0)):
            b = ball(segment, x, r)
            expected = math.fsum(segment_measure.weights[list(b.indices)])
            mass = ball_measure(segment, segment_measure, x, r)
            assert mass == pytest.approx(expected)

    def test_zero_radius_rejected(self, segment, segment_measure):
        """Test that the radius must be positive."""
        with pytest.raises(PreconditionError):
            ball_measure(segment, segment_measure, 0, -1.0)

    def test_monotone_in_radius(self, segment, segment_measure):
        """Test that ball masses never decrease with the radius."""
        masses = ball_masses(segment, segment_measure, segment.radii)
        assert np.all(np.diff(masses, axis=1) >= 0)


class TestUpperDoubling:
    """Tests for check_upper_doubling."""

    def test_half_density_dominated_by_r(
        self, segment, segment_measure, segment_lambda
    ):
        """Test that half the Lebesgue measure is dominated by r."""
        report = check_upper_doubling(segment, segment_measure, segment_lambda)
        assert report.holds
        assert report.best_constant <= 1.0 + 1e-12
        assert report.notes["violations"] == 0

    def test_full_density_fails(self, segment, segment_lambda):
        """Test that Lebesgue measure on a line is not dominated by r."""
        mu = build_measure(segment, {"kind": "quadrature"})
        report = check_upper_doubling(segment, mu, segment_lambda)
        assert not report.holds
        assert report.best_constant > 1.0
        node, radius = report.worst_witness
        assert 0 <= node < segment.n
        assert ball_measure(segment, mu, node, radius) > radius

    def test_report_dict(self, segment, segment_measure, segment_lambda):
        """Test that the report serializes its witness."""
        out = check_upper_doubling(segment, segment_measure, segment_lambda).to_dict()
        assert set(out["witness"]) == {"node", "radius"}
        assert out["samples"] == segment.n * segment.radii.size


class TestDoubling:
    """Tests for estimate_doubling_constant."""

    def test_grid_is_doubling(self, segment, segment_measure):
        """Test that the trapezoid measure on a segment is doubling."""
        report = estimate_doubling_constant(segment, segment_measure)
        assert report.holds
        assert 1.9 <= report.best_constant <= 3.0

    def test_scale_invariant(self, segment, segment_measure):
        """Test that scaling the measure leaves the doubling constant unchanged."""
        a = estimate_doubling_constant(segment, segment_measure).best_constant
        b = estimate_doubling_constant(segment, segment_measure.scaled(7.0))
        assert b.best_constant == pytest.approx(a)

    def test_scans_resolved_radii(self, segment, segment_measure):
        """Test that the report names the radii it scanned, all above the mesh."""
        report = estimate_doubling_constant(segment, segment_measure)
        assert report.notes["radii"] == "resolved"
        assert report.notes["min_radius"] > segment.mesh_size
        assert report.samples_checked == segment.n * segment.resolved_radii.size
        assert report.worst_witness[1] > segment.mesh_size

    def test_empty_ball_is_infinite(self, segment):
        """Test that a measure vanishing on part of the space is not doubling."""
        weights = np.zeros(segment.n)
        weights[:10] = 1.0
        mu = DiscreteMeasure(weights)
        report = estimate_doubling_constant(segment, mu)
        assert not report.holds
        assert math.isinf(report.best_constant)
        assert report.notes["zero_balls"] > 0

    def test_ratio_property(self, segment, segment_measure):
        """Test that a doubling measure has a positive ratio constant."""
        report = ratio_property_constant(segment, segment_measure)
        assert report.holds
        assert 0 < report.best_constant <= 1.0 + 1e-12


class TestAhlfors:
    """Tests for ahlfors_fit, ahlfors_envelope_fit and ahlfors_bound."""

    @pytest.mark.slow
    def test_segment(self):
        """Test that a fine segment has Q close to 1 over all samples."""
        space = build_space({"kind": "grid1d", "n": 1024})
        fit = ahlfors_fit(space, build_measure(space, {"kind": "quadrature"}))
        assert fit.Q == pytest.approx(1.0, abs=0.1)
        assert fit.method == "samples"
        assert fit.samples == space.n * fit.radii_used
        assert fit.radii_used >= 3
        assert fit.A1 >= 1.0

    def test_matches_direct_regression(self, segment, segment_measure):
        """Test the slope against numpy least squares on every (x, r) pair."""
        fit = ahlfors_fit(segment, segment_measure)
        lo, hi = fit.window
        radii = lo * 2.0 ** (np.arange(fit.radii_used) / 4.0)
        assert radii[-1] == pytest.approx(hi)
        masses = ball_masses(segment, segment_measure, radii)
        x = np.tile(np.log(radii), segment.n)
        design = np.column_stack([x, np.ones_like(x)])
        (slope, _), *_ = np.linalg.lstsq(design, np.log(masses).ravel(), rcond=None)
        assert fit.Q == pytest.approx(slope, abs=1e-10)

    @pytest.mark.slow
    def test_square(self):
        """Test that the unit square has Q close to 2.

        Centers near the edges lose part of their balls, which pulls the equal-weight
        slope below the envelope slope.
        """
        space = build_space({"kind": "grid2d", "n": 48})
        quad = build_measure(space, {"kind": "quadrature"})
        fit = ahlfors_fit(space, quad)
        assert fit.Q == pytest.approx(2.0, abs=0.2)
        assert fit.Q <= 2.05
        assert ahlfors_envelope_fit(space, quad).Q == pytest.approx(2.0, abs=0.15)

    def test_cantor(self):
        """Test that the Cantor measure has Q close to log 2 / log 3."""
        space = build_space({"kind": "cantor", "generation": 7})
        fit = ahlfors_fit(space, build_measure(space, {"kind": "quadrature"}))
        assert fit.Q == pytest.approx(math.log(2) / math.log(3), abs=0.05)

    def test_scale_invariant(self, segment, segment_measure):
        """Test that scaling the measure leaves Q and A1 unchanged up to the factor."""
        scaled = DiscreteMeasure(7.0 * segment_measure.weights)
        base = ahlfors_fit(segment, segment_measure)
        fit = ahlfors_fit(segment, scaled)
        assert fit.Q == pytest.approx(base.Q, abs=1e-10)
        assert fit.residual == pytest.approx(base.residual, abs=1e-10)

    def test_envelope_segment(self):
        """Test the envelope slope on a segment."""
        space = build_space({"kind": "grid1d", "n": 257})
        fit = ahlfors_envelope_fit(space, build_measure(space, {"kind": "quadrature"}))
        assert fit.Q == pytest.approx(1.0, abs=0.05)
        assert fit.method == "envelope"

    def test_single_radius_rejected(self):
        """Test that a fit needs two radii with positive ball measure."""
        space = build_space({"kind": "explicit", "distances": [[0, 1], [1, 0]]})
        with pytest.raises(PreconditionError, match="at least two distinct radii"):
            ahlfors_fit(space, DiscreteMeasure(np.ones(2)))

    def test_bounds(self, segment, segment_measure):
        """Test the one-sided Ahlfors constants against r**1."""
        upper = ahlfors_bound(segment, segment_measure, 1.0, "upper")
        lower = ahlfors_bound(segment, segment_measure, 1.0, "lower")
        assert upper.holds and lower.holds
        assert lower.best_constant <= upper.best_constant <= 1.0 + 1e-12

    def test_bad_side(self, segment, segment_measure):
        """Test that the side must be lower or upper."""
        with pytest.raises(PreconditionError, match="side"):
            ahlfors_bound(segment, segment_measure, 1.0, "both")


class TestTypes:
    """Tests for lower and upper type checks."""

    def test_lower_type_holds_up_to_dimension(self, segment_lambda):
        """Test that r is of lower type 1/2 and 1 with c1 = 1 and no growth."""
        for alpha in (0.5, 1.0):
            report = lower_type_check(segment_lambda, 10, alpha)
            assert report.holds
            assert report.best_constant == pytest.approx(1.0)
            assert report.notes["growth"] == pytest.approx(0.0, abs=1e-12)

    def test_lower_type_fails_just_above_dimension(self, segment_lambda):
        """Test that r is not of lower type 1.05: c1 gains 2**0.05 per octave."""
        report = lower_type_check(segment_lambda, 10, 1.05)
        assert not report.holds
        assert report.notes["growth"] == pytest.approx(0.05, rel=1e-6)

    def test_lower_type_fails_on_fine_grid(self):
        """Test that refining the grid does not let r pass at alpha = 1.1."""
        fine = build_space({"kind": "grid1d", "n": 1025})
        lam = Power(fine, K=1.0, n=1.0)
        report = lower_type_check(lam, 512, 1.1)
        assert not report.holds
        assert report.notes["growth"] == pytest.approx(0.1, rel=1e-6)
        assert report.best_constant > 1.5

    def test_lower_type_fails_above_dimension(self, segment_lambda):
        """Test that r is not of lower type 3/2."""
        report = lower_type_check(segment_lambda, 10, 1.5)
        assert not report.holds
        assert report.worst_witness[0] == 10

    def test_negative_alpha(self, segment_lambda):
        """Test that the lower type exponent must be nonnegative."""
        with pytest.raises(PreconditionError):
            lower_type_check(segment_lambda, 0, -0.1)

    def test_upper_type(self, segment_lambda):
        """Test that r is of upper type 2 and 1 but not of upper type 1/2."""
        assert upper_type_check(segment_lambda, 5, 2.0).holds
        assert upper_type_check(segment_lambda, 5, 1.0).holds
        assert not upper_type_check(segment_lambda, 5, 0.5).holds

    def test_estimate_lower_type(self, segment_lambda):
        """Test that the bisection recovers the exponent of lambda = r."""
        assert estimate_lower_type(segment_lambda) == pytest.approx(1.0, abs=2e-3)

    def test_estimate_lower_type_field(self, segment):
        """Test that a mixed field has the lower type of its smallest exponent."""
        field = np.where(np.arange(segment.n) < 30, 0.5, 2.0)
        lam = PowerField(segment, K=2.0, n_field=field)
        assert estimate_lower_type(lam) == pytest.approx(0.5, abs=2e-3)

    def test_power_field_worst_node(self, segment):
        """Test that the worst node of a mixed field has the smallest exponent."""
        field = np.where(np.arange(segment.n) < 30, 1.0, 2.0)
        lam = PowerField(segment, K=3.0, n_field=field)
        assert lower_type_all(lam, 1.0).holds
        report = lower_type_all(lam, 1.5)
        assert not report.holds
        assert report.worst_witness[0] < 30
        assert report.notes["growth_node"] < 30

    @pytest.mark.parametrize("seed", range(20))
    def test_agrees_with_direct_scan(self, segment, seed):
        """Test lower_type_check against the pairwise constant on dyadic cuts.

        For each cut t the constant is the largest
        ``lam(r1) r2**alpha / (r1**alpha lam(r2))`` over ``t <= r1 <= r2``; the type
        holds when the constant stops growing as t halves.
        """
        rng = np.random.default_rng(seed)
        if seed % 2:
            n = rng.uniform(0.5, 2.0)
            lam = Power(segment, K=rng.uniform(0.5, 2.0), n=n)
            alpha = n + rng.choice([-0.5, 0.5])
        else:
            field = np.where(np.arange(segment.n) % 3 == 0, 1.0, 2.0)
            lam = PowerField(segment, K=rng.uniform(0.5, 5.0), n_field=field)
            alpha = rng.choice([0.5, 1.5])
        radii = segment.radii
        cuts = [segment.r0]
        while cuts[-1] / 2.0 >= segment.mesh_size * (1.0 - 1e-9):
            cuts.append(cuts[-1] / 2.0)
        pair = radii[:, None] <= radii[None, :]
        for x in (0, 1, 31):
            values = lam.evaluate(radii, [x])[0]
            ratio = np.outer(values / radii**alpha, radii**alpha / values)
            best = [
                ratio[pair & (radii[:, None] >= t * (1.0 - 1e-8))].max() for t in cuts
            ]
            direct = float(np.median(np.diff(np.log2(best)))) <= 1e-6
            assert lower_type_check(lam, x, alpha).holds == direct


class TestComparableCenters:
    """Tests for comparable_center_constant and atom_scan."""

    def test_constant_power(self, segment, segment_lambda):
        """Test that a node-independent lambda has constant 1."""
        report = comparable_center_constant(segment, segment_lambda)
        assert report.best_constant == pytest.approx(1.0)

    def test_field_exceeds_one(self, segment):
        """Test that a jump in the exponent field shows up in the constant."""
        field = np.where(np.arange(segment.n) < 32, 1.0, 2.0)
        lam = PowerField(segment, n_field=field)
        assert comparable_center_constant(segment, lam).best_constant > 1.0

    def test_atoms(self, segment, segment_lambda):
        """Test that only the clustered node is an atom."""
        mu = build_measure(
            segment,
            {
                "kind": "quadrature",
                "scale": 0.5,
                "cluster": {"node": 32, "weight": 1.0},
            },
        )
        atoms = atom_scan(segment, mu, segment_lambda)
        assert [node for node, _ in atoms] == [32]
