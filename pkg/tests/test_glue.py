"""Tests for the glue module."""

import math

import numpy as np
import pytest

from udpot.base import HypothesisError, PreconditionError
from udpot.glue import (
    CONTACT,
    FIRST,
    SECOND,
    PiecewiseLambda,
    admissible,
    build_glued,
    build_glued_from_spec,
    glued_measure,
    lambda_piecewise,
    lambda_simplified,
    piecewise_lambda,
    simplified_lambda,
    verify_ball_estimates,
)
from udpot.measure import (
    check_upper_doubling,
    estimate_doubling_constant,
    lower_type_all,
    lower_type_check,
)
from udpot.operators import certify_lower_type


def _with(spec, **changes):
    return dict(spec, **changes)


def _direct_lower_type(lam, x, alpha):
    """Pairwise lower type constant on dyadic cuts; holds when it stops growing."""
    space = lam.space
    radii = space.radii
    values = lam.evaluate(radii, [x])[0]
    ratio = np.outer(values / radii**alpha, radii**alpha / values)
    pair = radii[:, None] <= radii[None, :]
    cuts = [space.r0]
    while cuts[-1] / 2.0 >= space.mesh_size * (1.0 - 1e-9):
        cuts.append(cuts[-1] / 2.0)
    best = [ratio[pair & (radii[:, None] >= t * (1.0 - 1e-8))].max() for t in cuts]
    return bool(np.median(np.diff(np.log2(best))) <= 1e-6)


class TestBuild:
    """Tests for gluing two segments at the origin."""

    def test_layout(self, two_segments_spec):
        """Test that coincident nodes collapse into a single contact node."""
        tc = build_glued_from_spec(two_segments_spec)
        assert tc.base.n == 33
        assert tc.contact == 32
        assert tc.part[tc.contact] == CONTACT
        assert np.count_nonzero(tc.part == FIRST) == 16
        assert np.count_nonzero(tc.part == SECOND) == 16
        assert tc.base.volumes[tc.contact] == 0.0

    def test_constants(self, two_segments_spec):
        """Test the contact constant and the diameter sum of a straight join."""
        tc = build_glued_from_spec(two_segments_spec)
        assert tc.contact_c == pytest.approx(1.0)
        assert tc.s_const == pytest.approx(2.0)
        assert tc.n1 == tc.n2 == 1.0

    def test_admissible(self, two_segments_spec):
        """Test that equal gamma plus dimension gives a common xi."""
        tc = build_glued_from_spec(two_segments_spec)
        assert admissible(tc)
        assert tc.xi == 1.0
        weighted = build_glued_from_spec(_with(two_segments_spec, gamma2=2.0))
        assert not admissible(weighted)
        assert weighted.xi is None

    def test_distance_to_contact(self, two_segments_spec):
        """Test that d0 measures the distance to the contact node."""
        tc = build_glued_from_spec(two_segments_spec)
        assert tc.d0[tc.contact] == 0.0
        assert tc.d0.max() == pytest.approx(1.0)

    def test_overlap_rejected(self, two_segments_spec):
        """Test that components sharing more than the contact point are rejected."""
        spec = _with(two_segments_spec, offset2=[0.0, 0.0])
        with pytest.raises(PreconditionError, match="overlap"):
            build_glued_from_spec(spec)

    def test_gamma_range(self, two_segments_spec):
        """Test that gamma_i must exceed -n_i."""
        with pytest.raises(PreconditionError, match="gamma_i > -n_i"):
            build_glued_from_spec(_with(two_segments_spec, gamma1=-1.5))

    def test_missing_component(self, two_segments_spec):
        """Test that a glued spec needs both components."""
        spec = dict(two_segments_spec)
        del spec["component2"]
        with pytest.raises(PreconditionError, match="component2"):
            build_glued_from_spec(spec)

    def test_component_needs_coordinates(self):
        """Test that a component without coordinates cannot be embedded."""
        explicit = {
            "kind": "explicit",
            "points": ["a", "b"],
            "distances": [[0, 1], [1, 0]],
        }
        with pytest.raises(PreconditionError, match="embedded"):
            build_glued(explicit, {"kind": "grid1d", "n": 5})


class TestGluedMeasure:
    """Tests for the weighted measure and its ball estimates."""

    def test_weights_vanish_at_contact(self, two_segments_spec):
        """Test that the contact node carries no mass."""
        tc = build_glued_from_spec(two_segments_spec)
        gm = glued_measure(tc)
        weights = np.asarray(gm.underlying.weights)
        assert weights[tc.contact] == 0.0
        assert tc.component_mass(gm.underlying, FIRST) == pytest.approx(1.0 - 1 / 32)

    def test_ball_estimates_hold(self, two_segments_spec):
        """Test that all three radius regimes are bounded when admissible."""
        tc = build_glued_from_spec(two_segments_spec)
        report = verify_ball_estimates(tc, glued_measure(tc))
        assert report.holds
        assert math.isfinite(report.k3)
        assert report.k3 >= 1.0
        assert report.c_small in report.k3_by_c
        assert report.far_deviation <= 1e-12
        assert 0.0 < report.contact_band[0] <= report.contact_band[1]

    def test_report_dict(self, two_segments_spec):
        """Test that the report serializes its witnesses per regime."""
        tc = build_glued_from_spec(two_segments_spec)
        out = verify_ball_estimates(tc, glued_measure(tc)).to_dict()
        assert set(out["witnesses"]) == {"near", "mid", "far"}
        assert "0.5" in out["k3_by_c"]

    def test_not_admissible(self, two_segments_spec):
        """Test that ball estimates need gamma1 + n1 == gamma2 + n2."""
        tc = build_glued_from_spec(_with(two_segments_spec, gamma2=2.0))
        gm = glued_measure(tc)
        assert math.isnan(gm.k3)
        assert math.isfinite(gm.k4)
        with pytest.raises(HypothesisError) as excinfo:
            verify_ball_estimates(tc, gm)
        assert excinfo.value.witness["gamma2"] == 2.0

    def test_k4_fails_for_negative_gamma(self, two_segments_spec):
        """Test that a negative weight exponent makes K4 blow up at the contact."""
        spec = _with(two_segments_spec, gamma1=-0.5, gamma2=-0.5)
        tc = build_glued_from_spec(spec)
        with pytest.raises(HypothesisError, match="K4") as excinfo:
            glued_measure(tc)
        witness = excinfo.value.witness
        assert witness["gamma"] == -0.5
        assert witness["distance"] <= 2.0 * tc.base.mesh_size
        assert witness["ratio"] > 2.0

    def test_ties_pick_largest_c(self, two_segments_spec):
        """Test that the largest c is reported when every c gives the same K3."""
        tc = build_glued_from_spec(two_segments_spec)
        report = verify_ball_estimates(tc, glued_measure(tc))
        best = min(report.k3_by_c.values())
        tied = [c for c, k3 in report.k3_by_c.items() if k3 == best]
        assert len(tied) == len(report.k3_by_c)
        assert report.c_small == max(tied)
        assert report.k3 == best

    @pytest.mark.parametrize("cells", [16, 32, 64])
    def test_k4_unweighted(self, two_segments_spec, cells):
        """Test that K4 of the unweighted join is the single-node ratio 2."""
        tc = build_glued_from_spec(_with(two_segments_spec, cells=cells))
        assert glued_measure(tc).k4 == pytest.approx(2.0)

    def test_k4_stable_under_refinement(self, two_segments_spec):
        """Test that K4 grows by at most ten percent per refinement."""
        k4 = [
            glued_measure(build_glued_from_spec(_with(two_segments_spec, cells=c))).k4
            for c in (16, 32, 64)
        ]
        assert all(b <= 1.1 * a for a, b in zip(k4[:-1], k4[1:]))

    def test_non_admissible_doubling_blows_up(self, two_segments_spec):
        """Test that the doubling constant grows under refinement when xi1 != xi2."""
        constants = []
        for cells in (16, 32):
            tc = build_glued_from_spec(
                _with(two_segments_spec, gamma2=2.0, cells=cells)
            )
            mu = glued_measure(tc).underlying
            constants.append(estimate_doubling_constant(tc.base, mu).best_constant)
        assert constants[1] >= 1.5 * constants[0]


class TestGluedLambda:
    """Tests for the dominating functions of a glued measure."""

    def test_piecewise_matches_power_when_unweighted(self, two_segments_spec):
        """Test that the running maximum never lifts K3 r when xi equals n."""
        tc = build_glued_from_spec(two_segments_spec)
        gm = glued_measure(tc)
        lam = piecewise_lambda(tc, gm)
        assert lam.max_deviation == pytest.approx(0.0, abs=1e-12)
        assert lambda_piecewise(tc, gm, tc.contact, 0.5) == pytest.approx(
            gm.k3 * 0.5
        )

    def test_piecewise_regimes(self, two_segments_spec):
        """Test the near regime below c d(x, x0) and the middle regime above."""
        tc = build_glued_from_spec(_with(two_segments_spec, gamma1=1.0, gamma2=1.0))
        gm = glued_measure(tc)
        lam = piecewise_lambda(tc, gm)
        x = int(np.argmax(tc.d0))
        d = float(tc.d0[x])
        near = 0.5 * gm.c_small * d
        assert lam(x, near) == pytest.approx(gm.k3 * near * d)
        assert lam(x, 1.5) == pytest.approx(gm.k3 * 1.5**2)

    def test_piecewise_needs_admissible(self, two_segments_spec):
        """Test that the piecewise form rejects a non-admissible glue."""
        tc = build_glued_from_spec(_with(two_segments_spec, gamma2=2.0))
        with pytest.raises(HypothesisError, match="admissible"):
            piecewise_lambda(tc, glued_measure(tc))

    def test_simplified_dominates(self, two_segments_spec):
        """Test that K4 r**n(x) is an upper bound for every ball."""
        tc = build_glued_from_spec(_with(two_segments_spec, gamma2=2.0))
        gm = glued_measure(tc)
        lam = simplified_lambda(tc, gm)
        assert check_upper_doubling(tc.base, gm.underlying, lam).holds
        assert lam.c_lambda == pytest.approx(2.0)
        assert lambda_simplified(tc, gm, 0, 0.25) == pytest.approx(gm.k4 * 0.25)

    def test_simplified_lower_type(self, segment_square_spec):
        """Test that K4 r**n(x) has the lower type of the segment, not the square."""
        tc = build_glued_from_spec(segment_square_spec)
        lam = simplified_lambda(tc, glued_measure(tc))
        first = int(np.flatnonzero(tc.part == FIRST)[0])
        second = int(np.flatnonzero(tc.part == SECOND)[0])
        assert lower_type_all(lam, 0.9).holds
        assert lower_type_all(lam, 1.0).holds
        for alpha in (1.1, 1.2):
            assert not lower_type_check(lam, first, alpha).holds
            assert lower_type_check(lam, second, alpha).holds
        with pytest.raises(HypothesisError, match="lower_type_check failed"):
            certify_lower_type(lam, 1.0)

    @pytest.mark.parametrize(
        ("where", "passing", "failing"), [("contact", 1.5, 2.5), ("far", 0.5, 1.5)]
    )
    def test_piecewise_lower_type(self, two_segments_spec, where, passing, failing):
        """Test the lower type of the piecewise form across its flat stretch.

        At the contact node lambda is K3 r**xi; far from it lambda grows like
        r**n(x) below c d(x, x0), stays flat, then follows r**xi.
        """
        spec = _with(two_segments_spec, gamma1=1.0, gamma2=1.0, cells=64)
        tc = build_glued_from_spec(spec)
        lam = PiecewiseLambda(tc.base, tc=tc, k3=1.0, c_small=0.9)
        x = tc.contact if where == "contact" else int(np.argmax(tc.d0))
        if where == "far":
            assert tc.d0[x] == pytest.approx(1.0)
            assert lam.max_deviation > 0
        for alpha, expected in ((passing, True), (failing, False)):
            assert lower_type_check(lam, x, alpha).holds is expected
            assert _direct_lower_type(lam, x, alpha) is expected


@pytest.mark.slow
class TestSegmentSquare:
    """Refinement of a weighted segment glued to a square at its corner."""

    LEVELS = (12, 24, 48)

    def _levels(self, spec, cells=LEVELS):
        out = []
        for c in cells:
            tc = build_glued_from_spec(_with(spec, cells=c))
            out.append((tc, glued_measure(tc)))
        return out

    def test_admissible(self, segment_square_spec):
        """Test that gamma1 + n1 = gamma2 + n2 = 2."""
        tc = build_glued_from_spec(segment_square_spec)
        assert (tc.n1, tc.n2) == (1.0, 2.0)
        assert tc.xi == 2.0
        assert np.count_nonzero(tc.part == SECOND) == 13 * 13 - 1

    def test_upper_doubling_with_k4(self, segment_square_spec):
        """Test that K4 r**n(x) dominates and K4 is stable under refinement."""
        k4 = []
        for tc, gm in self._levels(segment_square_spec):
            lam = simplified_lambda(tc, gm)
            report = check_upper_doubling(tc.base, gm.underlying, lam)
            assert report.holds
            assert report.notes["violations"] == 0
            k4.append(gm.k4)
        assert all(b <= 1.1 * a for a, b in zip(k4[:-1], k4[1:]))

    def test_ball_estimates(self, segment_square_spec):
        """Test a common (K3, c) for near and middle radii and an exact far one."""
        for tc, gm in self._levels(segment_square_spec):
            report = verify_ball_estimates(tc, gm)
            assert report.holds
            assert report.far_deviation <= 1e-12
            assert report.k3 == gm.k3

    def test_doubling_stable_when_admissible(self, segment_square_spec):
        """Test that the doubling constant settles under refinement."""
        constants = [
            estimate_doubling_constant(tc.base, gm.underlying).best_constant
            for tc, gm in self._levels(segment_square_spec)
        ]
        assert all(math.isfinite(c) for c in constants)
        assert all(b <= 1.1 * a for a, b in zip(constants[:-1], constants[1:]))

    def test_doubling_grows_when_not_admissible(self, segment_square_spec):
        """Test that gamma1 = gamma2 = 0 with n1 != n2 loses doubling."""
        spec = _with(segment_square_spec, gamma1=0.0)
        constants = [
            estimate_doubling_constant(tc.base, gm.underlying).best_constant
            for tc, gm in self._levels(spec, cells=(24, 48))
        ]
        assert constants[1] >= 1.5 * constants[0]
