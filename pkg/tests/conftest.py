"""Shared fixtures for the udpot test suite."""

import pytest

from udpot.dominating import Power
from udpot.measure import build_measure
from udpot.space import build_space


@pytest.fixture
def segment():
    """Uniform grid on [0, 1] with 65 nodes."""
    return build_space({"kind": "grid1d", "n": 65})


@pytest.fixture
def segment_measure(segment):
    """Half the trapezoid weights, dominated by lambda(x, r) = r."""
    return build_measure(segment, {"kind": "quadrature", "scale": 0.5})


@pytest.fixture
def segment_lambda(segment):
    return Power(segment, K=1.0, n=1.0, name="r")


@pytest.fixture
def triangle():
    """Three nodes on a line with a stretched outer distance, k1 = 1.5."""
    return build_space(
        {
            "kind": "explicit",
            "points": ["a", "b", "c"],
            "distances": [[0, 1, 3], [1, 0, 1], [3, 1, 0]],
        }
    )


@pytest.fixture
def two_segments_spec():
    """Two unit segments meeting at the origin, both of dimension 1."""
    return {
        "kind": "glued",
        "component1": {"kind": "grid1d", "length": 1.0},
        "component2": {"kind": "grid1d", "length": 1.0},
        "offset1": [0.0, 0.0],
        "offset2": [-1.0, 0.0],
        "contact": [0.0, 0.0],
        "gamma1": 0.0,
        "gamma2": 0.0,
        "cells": 16,
    }


@pytest.fixture
def segment_square_spec():
    """A weighted segment on [-1, 0] joined to the unit square at its corner."""
    return {
        "kind": "glued",
        "component1": {"kind": "grid1d", "length": 1.0},
        "component2": {"kind": "grid2d", "length": 1.0},
        "offset1": [-1.0, 0.0],
        "offset2": [0.0, 0.0],
        "contact": [0.0, 0.0],
        "gamma1": 1.0,
        "gamma2": 0.0,
        "cells": 12,
    }
