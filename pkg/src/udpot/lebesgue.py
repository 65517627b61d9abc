"""Variable exponent Lebesgue spaces on discrete measures."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np
from scipy.optimize import bisect

from udpot import validator
from udpot.base import PreconditionError, frozen_array
from udpot.measure import DiscreteMeasure, GridFunction, as_values
from udpot.space import Ball

logger = logging.getLogger("udpot.lebesgue")

NORM_RTOL = 1e-10
NORM_MAXITER = 200
NORM_FLOOR = 1e-300
BALL_MASS_SLACK = 1e-12


@dataclass
class ExponentFunction:
    """An exponent p(x) per node with ``1 < p_minus <= p(x) <= p_plus < inf``."""

    values: np.ndarray

    @validator.exponent_bounds
    def __post_init__(self):
        self.values = frozen_array(np.atleast_1d(self.values))

    @classmethod
    def constant(cls, p: float, size: int) -> ExponentFunction:
        return cls(np.full(size, float(p)))

    @property
    def p_minus(self) -> float:
        return float(self.values.min())

    @property
    def p_plus(self) -> float:
        return float(self.values.max())

    @property
    def is_constant(self) -> bool:
        return self.p_minus == self.p_plus

    def to_dict(self) -> dict[str, Any]:
        return {"values": self.values, "p_minus": self.p_minus, "p_plus": self.p_plus}


def _aligned(mu: DiscreteMeasure, pexp: ExponentFunction) -> None:
    if pexp.values.size != mu.weights.size:
        msg = (
            f"exponent has {pexp.values.size} values but the measure has "
            f"{mu.weights.size} nodes"
        )
        raise PreconditionError(msg)


def modular(
    mu: DiscreteMeasure, pexp: ExponentFunction, f: GridFunction | np.ndarray
) -> float:
    """``sum |f(x)|**p(x) w(x)``."""
    _aligned(mu, pexp)
    values = np.abs(as_values(f))
    return float(np.sum(values**pexp.values * mu.weights))


def luxemburg_norm(
    mu: DiscreteMeasure, pexp: ExponentFunction, f: GridFunction | np.ndarray
) -> float:
    """``inf{lam > 0 : modular(f / lam) <= 1}`` by bisection.

    The modular of ``f / lam`` strictly decreases in lam wherever it is positive. The
    upper bracket ``max|f| max(1, mu(X))**(1/p_minus) + 1`` already satisfies the
    constraint, the lower bracket is found by halving. A norm below the floor is 0.
    """
    _aligned(mu, pexp)
    values = np.abs(as_values(f))
    weights = np.asarray(mu.weights)
    support = weights > 0
    if not np.any(values[support] > 0):
        return 0.0
    values, p, weights = values[support], pexp.values[support], weights[support]

    def excess(lam: float) -> float:
        return float(np.sum((values / lam) ** p * weights)) - 1.0

    upper = float(values.max()) * max(1.0, mu.total) ** (1.0 / pexp.p_minus) + 1.0
    lower = upper
    while excess(lower) <= 0:
        upper, lower = lower, 0.5 * lower
        if lower < NORM_FLOOR:
            return 0.0
    return float(
        bisect(
            excess,
            lower,
            upper,
            xtol=NORM_FLOOR,
            rtol=NORM_RTOL,
            maxiter=NORM_MAXITER,
        )
    )


def lp_norm(mu: DiscreteMeasure, p: float, f: GridFunction | np.ndarray) -> float:
    """Closed-form constant exponent norm, ``p = inf`` is the max over the support."""
    values = np.abs(as_values(f))
    weights = np.asarray(mu.weights)
    if p < 1:
        msg = f"p must be >= 1, got {p}"
        raise PreconditionError(msg)
    if math.isinf(p):
        support = weights > 0
        return float(values[support].max()) if support.any() else 0.0
    return float(np.sum(values**p * weights)) ** (1.0 / p)


class BallNormBound(NamedTuple):
    lhs: float
    rhs: float
    holds: bool
    margin: float


def char_ball_lower_bound(
    mu: DiscreteMeasure, pexp: ExponentFunction, B: Ball
) -> BallNormBound:
    """Compare ``||chi_B||_p(.)`` with ``mu(B)**(1/p(x))`` for every x in B.

    The constant is 1, and rhs is the largest ``mu(B)**(1/p(x))`` over the ball. The
    margin ``lhs - rhs`` is reported whether or not it is negative.
    """
    _aligned(mu, pexp)
    idx = np.asarray(B.indices, dtype=int)
    mass = float(np.sum(np.asarray(mu.weights)[idx]))
    if mass > 1.0 + BALL_MASS_SLACK:
        msg = f"ball measure {mass:.6g} exceeds 1"
        raise PreconditionError(msg)
    chi = np.zeros(mu.weights.size)
    chi[idx] = 1.0
    lhs = luxemburg_norm(mu, pexp, chi)
    rhs = float(np.max(mass ** (1.0 / pexp.values[idx]))) if mass > 0 else 0.0
    margin = lhs - rhs
    return BallNormBound(lhs, rhs, bool(margin >= -NORM_RTOL * max(rhs, 1.0)), margin)


def hls_exponent(p: float, alpha: float, nfield) -> ExponentFunction:
    """``1/q(x) = 1/p - alpha/n(x)``, the Hardy-Littlewood-Sobolev exponent."""
    nfield = np.atleast_1d(np.asarray(nfield, dtype=float))
    if not 0 < alpha < nfield.min():
        msg = f"alpha must lie in (0, min n) = (0, {nfield.min():g}), got {alpha}"
        raise PreconditionError(msg)
    if not p > 1:
        msg = f"p must exceed 1, got {p}"
        raise PreconditionError(msg)
    bad = p >= nfield / alpha
    if bad.any():
        node = int(np.flatnonzero(bad)[0])
        msg = (
            f"p={p:g} >= n(x)/alpha={nfield[node] / alpha:g} at node {node}, "
            "q(x) would be infinite"
        )
        raise PreconditionError(msg)
    return ExponentFunction(1.0 / (1.0 / p - alpha / nfield))


@dataclass
class EmbeddingReport:
    """Fitted constant of ``||f||_p(.) <= C ||f||_q(.)`` over a function family."""

    holds: bool
    constant: float
    bound: float
    holder_bound: float | None
    witness: int
    samples: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "holds": self.holds,
            "constant": self.constant,
            "bound": self.bound,
            "holder_bound": self.holder_bound,
            "witness": self.witness,
            "samples": self.samples,
        }


def embedding_check(
    mu: DiscreteMeasure,
    pexp: ExponentFunction,
    qexp: ExponentFunction,
    family: Iterable[GridFunction | np.ndarray],
) -> EmbeddingReport:
    """Fit the embedding constant of L^q(.) into L^p(.) on a finite measure.

    A violation is flagged when the fitted constant exceeds ``1 + mu(X)``, the general
    embedding bound. For constant exponents the Holder bound
    ``mu(X)**(1/p - 1/q)`` is reported as well.
    """
    _aligned(mu, pexp)
    _aligned(mu, qexp)
    if np.any(pexp.values > qexp.values):
        node = int(np.flatnonzero(pexp.values > qexp.values)[0])
        msg = f"embedding needs p(x) <= q(x), violated at node {node}"
        raise PreconditionError(msg)
    best, witness, samples = 0.0, -1, 0
    for k, f in enumerate(family):
        denom = luxemburg_norm(mu, qexp, f)
        if denom == 0:
            continue
        samples += 1
        ratio = luxemburg_norm(mu, pexp, f) / denom
        if ratio > best:
            best, witness = ratio, k
    holder = None
    if pexp.is_constant and qexp.is_constant:
        holder = mu.total ** (1.0 / pexp.p_minus - 1.0 / qexp.p_minus)
    bound = 1.0 + mu.total
    return EmbeddingReport(
        holds=best <= bound,
        constant=best,
        bound=bound,
        holder_bound=holder,
        witness=witness,
        samples=samples,
    )
