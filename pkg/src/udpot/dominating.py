"""Dominating functions lambda(x, r) for upper doubling measures.

A dominating function is positive, non-decreasing in r and doubling in r. All three
properties are verified at construction on the space's canonical radii, and the
doubling constant is measured rather than trusted.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Hashable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from udpot.base import PreconditionError, UniqueID, frozen_array
from udpot.measure import DiscreteMeasure, ball_masses, row_blocks
from udpot.space import QuasiMetricSpace

logger = logging.getLogger("udpot.dominating")

C_LAMBDA_RTOL = 1e-9
MONOTONE_RTOL = 1e-12


@dataclass(eq=False, repr=False)
class DominatingFunction(UniqueID, ABC):
    """Base class for dominating functions on a fixed space.

    Args:
        space:
            QuasiMetricSpace, the space whose nodes index the first argument
        c_lambda:
            float, optional, declared doubling constant. The measured constant
            replaces it, and a declared value below the measured one is rejected.
        lower_type:
            float, optional, declared lower type exponent a
        c1:
            float, the lower type constant paired with lower_type
    """

    space: QuasiMetricSpace
    c_lambda: float | None = field(default=None, kw_only=True)
    lower_type: float | None = field(default=None, kw_only=True)
    c1: float = field(default=1.0, kw_only=True)

    def __post_init__(self):
        super().__post_init__()
        self.prepare()
        self._verify()

    def prepare(self) -> None:
        """Validate and normalize subclass parameters before verification."""

    @abstractmethod
    def _evaluate(self, r: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Values for radii r of shape (len(rows), M)."""

    def evaluate(self, r, nodes=None) -> np.ndarray:
        """lambda at node positions and radii.

        Args:
            r:
                array-like, shape (M,) shared by every node or (len(nodes), M)
            nodes:
                node positions, defaults to all nodes in node order

        Returns:
            ndarray of shape (len(nodes), M)
        """
        rows = np.arange(self.space.n) if nodes is None else np.asarray(nodes, int)
        r = np.asarray(r, dtype=float)
        if r.ndim == 1:
            r = np.broadcast_to(r, (rows.size, r.size))
        return self._evaluate(r, rows)

    def __call__(self, x: Hashable, r: float) -> float:
        if not r > 0:
            msg = f"radius must be positive, got {r!r}"
            raise PreconditionError(msg)
        i = self.space.node_index(x)
        return float(self._evaluate(np.array([[float(r)]]), np.array([i]))[0, 0])

    @property
    def upper_dimension(self) -> float:
        """``log2 C_lambda``, the growth exponent implied by doubling."""
        return math.log2(self.c_lambda)

    def _verify(self) -> None:
        radii = self.space.radii
        measured = 1.0
        for rows in row_blocks(self.space.n):
            values = self.evaluate(radii, rows)
            if not np.all(values > 0):
                i, j = np.argwhere(~(values > 0))[0]
                msg = (
                    f"{type(self).__name__} is not positive at node {int(rows[i])}, "
                    f"radius {radii[j]:.6g}"
                )
                raise PreconditionError(msg)
            drop = values[:, :-1] - values[:, 1:] > MONOTONE_RTOL * values[:, 1:]
            if drop.any():
                i, j = np.argwhere(drop)[0]
                msg = (
                    f"{type(self).__name__} decreases in r at node {int(rows[i])}, "
                    f"radius {radii[j + 1]:.6g}"
                )
                raise PreconditionError(msg)
            doubled = self.evaluate(2.0 * radii, rows)
            measured = max(measured, float((doubled / values).max()))

        declared = self.c_lambda
        if declared is not None and measured > declared * (1.0 + C_LAMBDA_RTOL):
            msg = (
                f"declared doubling constant {declared:.6g} is exceeded, "
                f"measured {measured:.12g}"
            )
            raise PreconditionError(msg)
        self.declared_c_lambda = declared
        self.c_lambda = measured
        logger.debug("%s: C_lambda=%.6g", type(self).__name__, measured)

    def describe(self) -> dict[str, Any]:
        return {
            "kind": type(self).__name__,
            "c_lambda": self.c_lambda,
            "lower_type": self.lower_type,
            "c1": self.c1,
        }


@dataclass(eq=False, repr=False)
class Power(DominatingFunction):
    """``lambda(x, r) = K r**n``."""

    K: float = 1.0
    n: float = 1.0

    def prepare(self):
        if not (self.K > 0 and self.n >= 0):
            msg = f"power form needs K > 0 and n >= 0, got K={self.K}, n={self.n}"
            raise PreconditionError(msg)

    def _evaluate(self, r, rows):
        return self.K * r**self.n

    def describe(self):
        return dict(super().describe(), K=self.K, n=self.n)


@dataclass(eq=False, repr=False)
class PowerField(DominatingFunction):
    """``lambda(x, r) = K r**n(x)`` with a per-node exponent field."""

    K: float = 1.0
    n_field: np.ndarray | None = None

    def prepare(self):
        if self.n_field is None:
            msg = "power-field form needs an exponent field"
            raise PreconditionError(msg)
        self.n_field = frozen_array(
            np.broadcast_to(np.asarray(self.n_field, float), (self.space.n,))
        )
        if not (self.K > 0 and np.all(self.n_field >= 0)):
            msg = "power-field form needs K > 0 and a nonnegative exponent field"
            raise PreconditionError(msg)

    def _evaluate(self, r, rows):
        return self.K * r ** self.n_field[rows, None]

    def describe(self):
        return dict(super().describe(), K=self.K, n_field=sorted(set(self.n_field)))


@dataclass(eq=False, repr=False)
class BallMeasure(DominatingFunction):
    """``lambda(x, r) = mu(B(x, r))``, the doubling case."""

    mu: DiscreteMeasure | None = None

    def prepare(self):
        if self.mu is None:
            msg = "ball-measure form needs a measure"
            raise PreconditionError(msg)

    def _evaluate(self, r, rows):
        return ball_masses(self.space, self.mu, np.ascontiguousarray(r), rows)


@dataclass(eq=False, repr=False)
class Tabulated(DominatingFunction):
    """Right-continuous step function through tabulated values.

    ``table`` has one row per node, or a single row shared by all nodes; radii below
    the first tabulated radius take the first value.
    """

    radii: np.ndarray | None = None
    table: np.ndarray | None = None

    def prepare(self):
        if self.radii is None or self.table is None:
            msg = "tabulated form needs radii and table"
            raise PreconditionError(msg)
        self.radii = frozen_array(self.radii)
        table = np.asarray(self.table, dtype=float)
        if table.ndim == 1:
            table = np.broadcast_to(table, (self.space.n, table.size))
        if table.shape != (self.space.n, self.radii.size):
            msg = (
                f"table shape {table.shape} does not match "
                f"({self.space.n}, {self.radii.size})"
            )
            raise PreconditionError(msg)
        if np.any(np.diff(self.radii) <= 0):
            msg = "tabulated radii must be strictly increasing"
            raise PreconditionError(msg)
        self.table = frozen_array(table)

    def _evaluate(self, r, rows):
        k = np.clip(np.searchsorted(self.radii, r, side="right") - 1, 0, None)
        return np.take_along_axis(self.table[rows], k, axis=1)


def build_lambda(
    space: QuasiMetricSpace,
    spec: Mapping[str, Any],
    mu: DiscreteMeasure | None = None,
) -> DominatingFunction:
    """Build a dominating function from its JSON description.

    Kinds: ``power`` (K, n), ``power-field`` (K, n as a per-node list),
    ``ball-measure`` (uses mu) and ``tabulated`` (radii, table). Every kind accepts
    ``c_lambda``, ``lower_type`` and ``c1``.
    """
    kind = spec.get("kind")
    common = {
        "c_lambda": spec.get("c_lambda"),
        "lower_type": spec.get("lower_type"),
        "c1": float(spec.get("c1", 1.0)),
        "name": spec.get("name", str(kind)),
    }
    if kind == "power":
        return Power(
            space, K=float(spec.get("K", 1.0)), n=float(spec.get("n", 1.0)), **common
        )
    if kind == "power-field":
        return PowerField(
            space, K=float(spec.get("K", 1.0)), n_field=spec.get("n"), **common
        )
    if kind == "ball-measure":
        return BallMeasure(space, mu=mu, **common)
    if kind == "tabulated":
        return Tabulated(
            space, radii=spec.get("radii"), table=spec.get("table"), **common
        )
    msg = (
        f"unknown dominating function kind {kind!r}, choose from power, power-field, "
        "ball-measure, tabulated, piecewise, simplified"
    )
    raise PreconditionError(msg)
