"""Validators for per-node data attached to a space.

Each validator works as a decorator on a validation hook or as a direct call::

    # As a decorator
    @dataclass(eq=False)
    class DiscreteMeasure(UniqueID):
        @validator.nonnegative_weights
        def __post_init__(self):
            super().__post_init__()

    # Called directly
    validator.nonnegative_weights(measure)
"""

from __future__ import annotations

from functools import wraps
from typing import Any, Callable

import numpy as np

from udpot.base import PreconditionError


def _make_validator(validate_fn: Callable[[Any], None]):
    """Create a validator usable as a decorator or called directly.

    Args:
        validate_fn: Function raising PreconditionError on invalid input

    Returns:
        A function that either wraps a method or validates an instance
    """

    def validator(arg):
        if callable(arg):
            method = arg

            @wraps(method)
            def wrapper(self, *args, **kwargs):
                result = method(self, *args, **kwargs)
                validate_fn(self)
                return result

            return wrapper

        validate_fn(arg)
        return None

    return validator


def _first_bad(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0])


def aligned(size: int, attr: str = "values"):
    """Validator that ``obj.<attr>`` is a one-dimensional array of ``size`` entries."""

    def validate(obj) -> None:
        values = np.asarray(getattr(obj, attr))
        if values.ndim != 1 or values.shape[0] != size:
            msg = (
                f"{type(obj).__name__}.{attr} must hold one value per node "
                f"({size}), got shape {values.shape}"
            )
            raise PreconditionError(msg)

    return _make_validator(validate)


def nonnegative_weights(arg):
    """Validator that a measure's weights are finite and nonnegative."""

    def validate(obj) -> None:
        weights = np.asarray(obj.weights)
        bad = ~np.isfinite(weights) | (weights < 0)
        if bad.any():
            node = _first_bad(bad)
            msg = f"weight at node {node} is {weights[node]!r}, must be finite and >= 0"
            raise PreconditionError(msg)

    return _make_validator(validate)(arg)


def finite_values(arg):
    """Validator that a grid function's values are all finite."""

    def validate(obj) -> None:
        values = np.asarray(obj.values)
        bad = ~np.isfinite(values)
        if bad.any():
            node = _first_bad(bad)
            msg = f"non-finite value {values[node]!r} at node {node}"
            raise PreconditionError(msg)

    return _make_validator(validate)(arg)


def exponent_bounds(arg):
    """Validator that exponents satisfy 1 < p_minus <= p_plus < inf."""

    def validate(obj) -> None:
        values = np.asarray(obj.values)
        bad = ~np.isfinite(values) | (values <= 1.0)
        if bad.any():
            node = _first_bad(bad)
            msg = (
                f"exponent {values[node]!r} at node {node} violates "
                "1 < p_minus <= p(x) <= p_plus < inf"
            )
            raise PreconditionError(msg)

    return _make_validator(validate)(arg)
