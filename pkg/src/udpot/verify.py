"""Refinement studies of the boundedness results.

Each experiment runs over a sequence of refinement levels. It fits the relevant
constant at every level and calls the constant stable when consecutive levels grow by
at most tau. The hypotheses of the result under test are checked first: when they fail,
the verdict is ``hypotheses-not-met`` and nothing is claimed about the conclusion.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from udpot.base import HypothesisError, PreconditionError, UdpotError, jsonable
from udpot.dominating import DominatingFunction, Power, PowerField
from udpot.glue import TwoComponentSpace
from udpot.lebesgue import ExponentFunction, hls_exponent, lp_norm, luxemburg_norm
from udpot.measure import (
    DiscreteMeasure,
    ahlfors_bound,
    ahlfors_fit,
    check_upper_doubling,
    row_blocks,
)
from udpot.operators import (
    KernelSpec,
    certify_lower_type,
    kernel_matrix,
    maximal_modified,
    maximal_standard,
    omega,
    potential,
)
from udpot.parallel import ordered_map
from udpot.profile import mem_profile
from udpot.space import QuasiMetricSpace

logger = logging.getLogger("udpot.verify")

TAU = 1.1
FAMILY_SIZE = 50
BALL_RADII = (0.02, 0.5)
SPIKE_THETA_MAX = 0.8
EXPONENT_RTOL = 1e-9
NECESSITY_CENTERS = 16
NECESSITY_RADII = 8
CLUSTER_WEIGHTS = (1.0, 10.0, 100.0)
WEAK_THRESHOLDS = 5

STABLE = "stable"
GROWING = "growing"
VIOLATED = "violated"
NOT_MET = "hypotheses-not-met"
VACUOUS = "vacuous"


@dataclass
class Level:
    """One refinement level: a space, a measure and a dominating function on it."""

    space: QuasiMetricSpace
    mu: DiscreteMeasure
    lam: DominatingFunction | None = None
    tc: TwoComponentSpace | None = None

    @property
    def dimension(self) -> np.ndarray:
        """Local dimension per node, used to shape the spike family."""
        if self.tc is not None:
            return np.asarray(self.tc.n_field)
        dim = self.space.dimension if self.space.dimension else 1.0
        return np.full(self.space.n, dim)


@dataclass
class LevelRecord:
    N: int
    ratio: float
    constants: dict[str, Any] = field(default_factory=dict)
    witness: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "N": self.N,
            "ratio": self.ratio,
            "constants": jsonable(self.constants),
            "witness": jsonable(self.witness),
        }


@dataclass
class ExperimentReport:
    """Per-level records, checked hypotheses and the refinement verdict."""

    experiment: str
    verdict: str
    levels: list[LevelRecord]
    hypotheses: list[dict[str, Any]]
    seed: int
    tau: float
    tracked: tuple[str, ...] = ("ratio",)
    notes: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "verdict": self.verdict,
            "levels": [lvl.to_dict() for lvl in self.levels],
            "hypotheses": jsonable(self.hypotheses),
            "seed": self.seed,
            "tau": self.tau,
            "tracked": list(self.tracked),
            "notes": jsonable(self.notes),
        }

    def csv_rows(self) -> list[dict[str, Any]]:
        rows = []
        for k, lvl in enumerate(self.levels):
            row: dict[str, Any] = {"level": k, "N": lvl.N, "ratio": lvl.ratio}
            for name, value in lvl.constants.items():
                if isinstance(value, (list, tuple)):
                    row.update({f"{name}_{i}": v for i, v in enumerate(value)})
                else:
                    row[name] = value
            row.update({f"witness_{k}": v for k, v in lvl.witness.items()})
            rows.append(row)
        return rows


def growth_factors(values: Sequence[float]) -> list[float]:
    """Ratios of consecutive values; 0 -> 0 counts as 1, 0 -> positive as inf."""
    out = []
    for prev, cur in zip(values[:-1], values[1:]):
        if prev > 0:
            out.append(cur / prev)
        else:
            out.append(1.0 if cur == 0 else math.inf)
    return out


def refinement_verdict(series: Sequence[Sequence[float]], tau: float = TAU) -> str:
    """stable when every tracked series grows by at most tau between levels.

    A series exceeding tau at every step is violated, anything in between is growing.
    All-zero series are vacuous.
    """
    if all(v == 0 for s in series for v in s):
        return VACUOUS
    verdict = STABLE
    for values in series:
        growth = growth_factors(values)
        if not growth:
            continue
        if all(g > tau for g in growth):
            return VIOLATED
        if any(g > tau for g in growth):
            verdict = GROWING
    return verdict


def function_family(
    space: QuasiMetricSpace,
    seed: int,
    size: int = FAMILY_SIZE,
    p: float = 2.0,
    dimension: np.ndarray | float | None = None,
) -> np.ndarray:
    """Seeded test functions, shape (size, N).

    A third are characteristic functions of balls with radii log-uniform in
    ``[0.02, 0.5] r0``, a third are truncated spikes ``d(., x0)**-beta`` with
    ``beta = theta n / p`` and ``theta < 0.8``, the rest are uniform in [-1, 1].
    Centers are drawn as ``floor(u N)`` so they sit at the same relative position on
    every refinement level.
    """
    rng = np.random.default_rng(seed)
    n = space.n
    dims = np.broadcast_to(
        np.asarray(1.0 if dimension is None else dimension, dtype=float), (n,)
    )
    dist = np.asarray(space.dist)
    floor = space.nearest.min() if n > 1 else 1.0
    n_balls = size // 3
    n_spikes = size // 3
    out = np.empty((size, n))
    lo, hi = np.log(BALL_RADII[0]), np.log(BALL_RADII[1])
    for k in range(size):
        if k < n_balls:
            center = min(int(rng.random() * n), n - 1)
            radius = math.exp(lo + (hi - lo) * rng.random()) * max(space.r0, 1e-300)
            out[k] = (dist[center] < radius).astype(float)
        elif k < n_balls + n_spikes:
            center = min(int(rng.random() * n), n - 1)
            beta = SPIKE_THETA_MAX * rng.random() * dims[center] / p
            out[k] = np.maximum(dist[center], floor) ** -beta
        else:
            out[k] = rng.uniform(-1.0, 1.0, size=n)
    return out


FamilyFactory = Callable[[Level, int], np.ndarray]


def _family(
    level: Level, seed: int, size: int, p: float, family: FamilyFactory | None
) -> np.ndarray:
    if family is not None:
        return np.atleast_2d(np.asarray(family(level, seed), dtype=float))
    return function_family(level.space, seed, size, p, level.dimension)


def _check_levels(levels: Sequence[Level]) -> None:
    if not levels:
        msg = "at least one refinement level is required"
        raise PreconditionError(msg)
    sizes = [lvl.space.n for lvl in levels]
    if any(b <= a for a, b in zip(sizes[:-1], sizes[1:])):
        msg = f"levels must be strictly increasing in node count, got {sizes}"
        raise PreconditionError(msg)


def _hypothesis(name: str, holds: bool, level: int, **detail) -> dict[str, Any]:
    return {"name": name, "holds": bool(holds), "level": level, **detail}


def target_exponent(
    level: Level, alpha: float, p: float, q: float | Sequence[float] | None
) -> ExponentFunction:
    """q(.) from ``1/q = 1/p - alpha/n(x)`` for power dominating functions.

    Other dominating functions need q supplied, as a constant or per node.
    """
    lam = level.lam
    if isinstance(lam, Power):
        return hls_exponent(p, alpha, np.full(level.space.n, lam.n))
    if isinstance(lam, PowerField):
        return hls_exponent(p, alpha, lam.n_field)
    if q is None:
        raise HypothesisError(
            "q(x) must be supplied for a dominating function without a power form"
        )
    values = np.broadcast_to(np.asarray(q, dtype=float), (level.space.n,))
    return ExponentFunction(np.array(values))


def exponent_condition(
    lam: DominatingFunction, alpha: float, p: float, qexp: ExponentFunction
) -> tuple[bool, float, float, tuple[int, float]]:
    """Compare ``r**alpha`` with ``lam(x, r)**(1/p - 1/q(x))`` on canonical radii.

    Returns (holds, worst, spread, witness). worst is the largest ratio of left to
    right side, holds when it is at most 1. spread is the largest per-node ratio of
    the two sides' extreme quotients; it is 1 in the equality case up to a constant.
    """
    radii = lam.space.radii
    expo = 1.0 / p - 1.0 / qexp.values

    def scan(rows):
        rhs = lam.evaluate(radii, rows) ** expo[rows, None]
        ratio = radii[None, :] ** alpha / rhs
        i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        spread = float((ratio.max(axis=1) / ratio.min(axis=1)).max())
        return float(ratio[i, j]), spread, (int(rows[i]), float(radii[j]))

    parts = ordered_map(scan, row_blocks(lam.space.n))
    worst, _, witness = max(parts, key=lambda t: t[0])
    spread = max(t[1] for t in parts)
    return worst <= 1.0 + EXPONENT_RTOL, worst, spread, witness


def _gate(
    levels: Sequence[Level], alpha: float, p: float, q, equality: bool = False
) -> tuple[list[dict[str, Any]], list[ExponentFunction | None]]:
    """Check the hypotheses of the boundedness results at every level."""
    checks: list[dict[str, Any]] = []
    targets: list[ExponentFunction | None] = []
    for k, lvl in enumerate(levels):
        if lvl.lam is None:
            checks.append(_hypothesis("dominating_function", False, k))
            targets.append(None)
            continue
        try:
            alpha0 = certify_lower_type(lvl.lam, alpha)
            checks.append(_hypothesis("lower_type", True, k, alpha0=alpha0))
        except HypothesisError as e:
            checks.append(
                _hypothesis("lower_type", False, k, reason=e.reason, **e.witness)
            )
        ud = check_upper_doubling(lvl.space, lvl.mu, lvl.lam)
        checks.append(
            _hypothesis(
                "upper_doubling",
                ud.holds,
                k,
                best_constant=ud.best_constant,
                witness=ud.to_dict()["witness"],
            )
        )
        try:
            qexp = target_exponent(lvl, alpha, p, q)
        except UdpotError as e:
            checks.append(_hypothesis("target_exponent", False, k, reason=str(e)))
            targets.append(None)
            continue
        targets.append(qexp)
        checks.append(
            _hypothesis(
                "exponent_range",
                1.0 < p < qexp.p_minus,
                k,
                p=p,
                q_minus=qexp.p_minus,
                q_plus=qexp.p_plus,
            )
        )
        holds, worst, spread, (node, radius) = exponent_condition(
            lvl.lam, alpha, p, qexp
        )
        if equality:
            holds = spread <= 1.0 + EXPONENT_RTOL
        checks.append(
            _hypothesis(
                "exponent_equality" if equality else "exponent_condition",
                holds,
                k,
                worst_ratio=worst,
                spread=spread,
                node=node,
                radius=radius,
            )
        )
    return checks, targets


def _gated(checks: list[dict[str, Any]]) -> bool:
    failed = [c for c in checks if not c["holds"]]
    for c in failed:
        logger.warning(
            "hypothesis %s not met at level %s: %s", c["name"], c["level"], c
        )
    return not failed


def _general_kernel(lvl: Level, alpha: float) -> KernelSpec:
    return KernelSpec("general", alpha, lam=lvl.lam, certify=False)


def _norm_ratios(
    mu: DiscreteMeasure,
    qexp: ExponentFunction,
    p: float,
    images: np.ndarray,
    inputs: np.ndarray,
) -> np.ndarray:
    ratios = np.zeros(inputs.shape[0])
    for k, (image, f) in enumerate(zip(images, inputs)):
        denom = lp_norm(mu, p, f)
        if denom > 0:
            ratios[k] = luxemburg_norm(mu, qexp, image) / denom
    return ratios


@mem_profile(logger)
def _sufficiency_level(
    lvl: Level,
    alpha: float,
    p: float,
    qexp: ExponentFunction,
    family: np.ndarray,
    self_cell: bool,
) -> LevelRecord:
    # the own-cell term exists only for power profiles
    self_cell = self_cell and isinstance(lvl.lam, (Power, PowerField))
    ks = _general_kernel(lvl, alpha)
    images = potential(lvl.space, lvl.mu, ks, family, self_cell)
    ratios = _norm_ratios(lvl.mu, qexp, p, images, family)
    k = int(np.argmax(ratios))
    return LevelRecord(
        N=lvl.space.n,
        ratio=float(ratios[k]),
        constants={"q_minus": qexp.p_minus, "q_plus": qexp.p_plus},
        witness={"function": k, "nonzero": int(np.count_nonzero(ratios))},
    )


def verify_sufficiency(
    levels: Sequence[Level],
    alpha: float,
    p: float,
    q: float | Sequence[float] | None = None,
    *,
    seed: int = 0,
    size: int = FAMILY_SIZE,
    tau: float = TAU,
    self_cell: bool = False,
    family: FamilyFactory | None = None,
) -> ExperimentReport:
    """Boundedness of ``I_alpha^lambda`` from ``L^p`` to ``L^q(.)`` under refinement.

    The tracked quantity is the largest ``||I f||_q(.) / ||f||_p`` over the family.
    """
    _check_levels(levels)
    checks, targets = _gate(levels, alpha, p, q)
    if not _gated(checks):
        return ExperimentReport("sufficiency", NOT_MET, [], checks, seed, tau)
    records = []
    for lvl, qexp in zip(levels, targets):
        start = time.perf_counter()
        fam = _family(lvl, seed, size, p, family)
        records.append(_sufficiency_level(lvl, alpha, p, qexp, fam, self_cell))
        logger.info(
            "sufficiency N=%s ratio=%.6g (%.2fs)",
            lvl.space.n,
            records[-1].ratio,
            time.perf_counter() - start,
        )
    verdict = refinement_verdict([[r.ratio for r in records]], tau)
    return ExperimentReport(
        "sufficiency",
        verdict,
        records,
        checks,
        seed,
        tau,
        notes={"alpha": alpha, "p": p, "self_cell": self_cell, "family_size": size},
    )


def _near_sums(space: QuasiMetricSpace, row_matrix: np.ndarray, radii: np.ndarray):
    """``sum_{d(x, y) < r} A[x, y] f(y)`` for every node and radius."""
    table = np.zeros((space.n, space.n + 1))
    ordered = np.take_along_axis(row_matrix, space.order, axis=1)
    np.cumsum(ordered, axis=1, out=table[:, 1:])
    return np.take_along_axis(table, space.counts(radii), axis=1)


@mem_profile(logger)
def _hedberg_level(
    lvl: Level, alpha: float, p: float, qexp: ExponentFunction, family: np.ndarray
) -> LevelRecord:
    space, mu, lam = lvl.space, lvl.mu, lvl.lam
    ks = _general_kernel(lvl, alpha)
    matrix = kernel_matrix(space, mu, ks)
    images = potential(space, mu, ks, family)
    tilde = maximal_modified(space, mu, family)
    omg = omega(space, mu, lam)
    radii = np.unique(np.append(space.resolved_radii, space.r0))
    lam_r = lam.evaluate(radii)
    r_alpha = radii[None, :] ** alpha
    q = qexp.values

    c1 = c3 = c5 = c6 = c0 = 0.0
    ratio = 0.0
    skipped = 0
    witness: dict[str, Any] = {}
    for k, (f, image, mf) in enumerate(zip(family, images, tilde)):
        norm = lp_norm(mu, p, f)
        if norm == 0:
            continue
        absf = np.abs(image)
        bound3 = r_alpha * (mf[:, None] + norm * lam_r ** (-1.0 / p))
        value3 = float((absf[:, None] / bound3).max())
        if value3 > c3:
            c3, witness = value3, {"function": k}
        c5 = max(c5, float(absf.max()) / norm)
        bound6 = norm * ((mf / norm) ** (p / q) + 1.0)
        c6 = max(c6, float((absf / bound6).max()))
        c0 = max(c0, lp_norm(mu, p, mf) / norm)
        ratio = max(ratio, luxemburg_norm(mu, qexp, image) / norm)

        near = _near_sums(space, np.asarray(matrix) * f[None, :], radii)
        scale = r_alpha * (omg * mf)[:, None]
        live = scale > 0
        skipped += int(np.count_nonzero(~live & (np.abs(near) > 0)))
        if live.any():
            c1 = max(c1, float((np.abs(near)[live] / scale[live]).max()))

    mass = mu.total
    predicted = 2.0 * c6 * max(
        (c0**p + mass) ** (1.0 / qexp.p_plus), (c0**p + mass) ** (1.0 / qexp.p_minus)
    )
    return LevelRecord(
        N=space.n,
        ratio=c3,
        constants={
            "C1": c1,
            "C3": c3,
            "C5": c5,
            "C6": c6,
            "C0": c0,
            "predicted_norm_constant": predicted,
            "observed_norm_ratio": ratio,
            "skipped_samples": skipped,
        },
        witness=witness,
    )


def verify_hedberg(
    levels: Sequence[Level],
    alpha: float,
    p: float,
    q: float | Sequence[float] | None = None,
    *,
    seed: int = 0,
    size: int = FAMILY_SIZE,
    tau: float = TAU,
    family: FamilyFactory | None = None,
) -> ExperimentReport:
    """Fit the pointwise constants of the Hedberg estimates.

    ``C3``: ``|If(x)| <= C3 (r**alpha M~f(x) + r**alpha ||f||_p lam(x, r)**(-1/p))``
    over nodes and resolved radii. ``C6``:
    ``|If(x)| <= C6 ||f||_p ((M~f(x) / ||f||_p)**(p/q(x)) + 1)``. ``C5`` is the
    ``r = r0`` corner ``|If(x)| <= C5 ||f||_p`` and ``C1`` the near-part constant of
    ``sum_{B(x, r)} |k f| w <= C1 r**alpha Omega(x) M~f(x)``. The verdict tracks C3,
    C6 and C1.
    """
    _check_levels(levels)
    checks, targets = _gate(levels, alpha, p, q)
    if not _gated(checks):
        return ExperimentReport("hedberg", NOT_MET, [], checks, seed, tau)
    records = []
    for lvl, qexp in zip(levels, targets):
        start = time.perf_counter()
        fam = _family(lvl, seed, size, p, family)
        records.append(_hedberg_level(lvl, alpha, p, qexp, fam))
        logger.info(
            "hedberg N=%s C3=%.6g C6=%.6g C1=%.6g (%.2fs)",
            lvl.space.n,
            records[-1].constants["C3"],
            records[-1].constants["C6"],
            records[-1].constants["C1"],
            time.perf_counter() - start,
        )
    verdict = refinement_verdict(
        [[r.constants[name] for r in records] for name in ("C3", "C6", "C1")], tau
    )
    return ExperimentReport(
        "hedberg",
        verdict,
        records,
        checks,
        seed,
        tau,
        tracked=("C3", "C6", "C1"),
        notes={"alpha": alpha, "p": p, "family_size": size},
    )


def extremal_functions(
    lvl: Level, centers: Sequence[int], radii: Sequence[float]
) -> np.ndarray:
    """``chi_B(a, r) lam(., r) / lam(a, r)`` for every center a and radius r."""
    space, lam = lvl.space, lvl.lam
    dist = np.asarray(space.dist)
    out = []
    for a in centers:
        for r in radii:
            profile = lam.evaluate(np.array([r]))[:, 0]
            out.append(np.where(dist[a] < r, profile / profile[a], 0.0))
    return np.array(out)


def _sample_centers(n: int, seed: int, count: int) -> list[int]:
    rng = np.random.default_rng(seed)
    return sorted({min(int(u * n), n - 1) for u in rng.random(count)})


def _sample_radii(space: QuasiMetricSpace, count: int) -> np.ndarray:
    radii = space.resolved_radii
    pick = np.unique(np.linspace(0, radii.size - 1, count).round().astype(int))
    return radii[pick]


def _with_cluster(mu: DiscreteMeasure, node: int, weight: float) -> DiscreteMeasure:
    weights = np.array(mu.weights)
    weights[node] += weight
    return DiscreteMeasure(
        weights, spec=dict(mu.spec, cluster={"node": node, "weight": weight})
    )


@mem_profile(logger)
def _necessity_level(
    lvl: Level,
    alpha: float,
    p: float,
    qexp: ExponentFunction,
    family: np.ndarray,
    seed: int,
    cluster_node: int | None,
    cluster_weights: Sequence[float],
) -> LevelRecord:
    space, mu, lam = lvl.space, lvl.mu, lvl.lam
    ks = _general_kernel(lvl, alpha)
    centers = _sample_centers(space.n, seed, NECESSITY_CENTERS)
    radii = _sample_radii(space, NECESSITY_RADII)
    extremal = extremal_functions(lvl, centers, radii)
    inputs = np.vstack([family, extremal])
    ratios = _norm_ratios(mu, qexp, p, potential(space, mu, ks, inputs), inputs)
    C = float(ratios.max())
    e = 1.0 - 1.0 / p + 1.0 / qexp.p_minus
    c_prime = (C * lam.c_lambda / (2.0 * space.k1) ** alpha) ** (1.0 / e)
    upper = check_upper_doubling(space, mu, lam).best_constant

    node = space.n // 2 if cluster_node is None else cluster_node
    cluster_inputs = extremal_functions(lvl, [node], radii)
    cluster_ratios, cluster_upper = [], []
    for w in cluster_weights:
        heavy = _with_cluster(mu, node, w)
        images = potential(space, heavy, ks, cluster_inputs)
        cluster_ratios.append(
            float(_norm_ratios(heavy, qexp, p, images, cluster_inputs).max())
        )
        cluster_upper.append(check_upper_doubling(space, heavy, lam).best_constant)
    k = int(np.argmax(ratios))
    return LevelRecord(
        N=space.n,
        ratio=C,
        constants={
            "C": C,
            "C_prime": c_prime,
            "exponent_e": e,
            "upper_doubling_constant": upper,
            "consistent": bool(upper <= c_prime * C * (1.0 + EXPONENT_RTOL)),
            "cluster_weights": list(cluster_weights),
            "cluster_ratios": cluster_ratios,
            "cluster_upper_doubling": cluster_upper,
        },
        witness={
            "function": k,
            "extremal": bool(k >= family.shape[0]),
            "cluster_node": node,
        },
    )


def verify_necessity(
    levels: Sequence[Level],
    alpha: float,
    p: float,
    q: float | Sequence[float] | None = None,
    *,
    seed: int = 0,
    size: int = FAMILY_SIZE,
    tau: float = TAU,
    cluster_weights: Sequence[float] = CLUSTER_WEIGHTS,
    cluster_node: int | None = None,
    family: FamilyFactory | None = None,
) -> ExperimentReport:
    """Necessity of upper doubling for boundedness, tested both ways.

    The fitted operator constant C (over the family and the extremal functions
    ``chi_B(a, r) lam(., r) / lam(a, r)``) implies ``mu(B(a, r)) <= C' lam(a, r)`` with
    ``C' = (C C_lambda / (2 k1)**alpha)**(1/e)``, ``e = 1 - 1/p + 1/q_minus``;
    consistency requires the measured upper doubling constant to be at most ``C' C``.
    Contrapositively, point masses of increasing weight at one node break upper
    doubling, and the extremal ratio at that node must increase strictly with the
    weight.
    """
    _check_levels(levels)
    checks, targets = _gate(levels, alpha, p, q, equality=True)
    if not _gated(checks):
        return ExperimentReport("necessity", NOT_MET, [], checks, seed, tau)
    records = []
    for lvl, qexp in zip(levels, targets):
        start = time.perf_counter()
        fam = _family(lvl, seed, size, p, family)
        records.append(
            _necessity_level(
                lvl, alpha, p, qexp, fam, seed, cluster_node, cluster_weights
            )
        )
        logger.info(
            "necessity N=%s C=%.6g C'=%.6g (%.2fs)",
            lvl.space.n,
            records[-1].constants["C"],
            records[-1].constants["C_prime"],
            time.perf_counter() - start,
        )
    monotone = all(
        all(g > 1.0 for g in growth_factors(r.constants["cluster_ratios"]))
        for r in records
    )
    consistent = all(r.constants["consistent"] for r in records)
    if not (monotone and consistent):
        verdict = VIOLATED
    else:
        verdict = refinement_verdict([[r.ratio for r in records]], tau)
    return ExperimentReport(
        "necessity",
        verdict,
        records,
        checks,
        seed,
        tau,
        tracked=("C",),
        notes={
            "alpha": alpha,
            "p": p,
            "cluster_monotone": monotone,
            "consistent": consistent,
        },
    )


def _weak_constant(mu: DiscreteMeasure, mf: np.ndarray, norm1: float) -> float:
    top = float(mf.max())
    if top <= 0 or norm1 <= 0:
        return 0.0
    weights = np.asarray(mu.weights)
    best = 0.0
    for j in range(1, WEAK_THRESHOLDS + 1):
        t = top * 2.0**-j
        level_set = float(np.sum(weights[mf > t]))
        best = max(best, t * level_set / norm1)
    return best


@mem_profile(logger)
def _maximal_level(
    lvl: Level, p: float, family: np.ndarray
) -> LevelRecord:
    space, mu = lvl.space, lvl.mu
    tilde = maximal_modified(space, mu, family)
    standard = maximal_standard(space, mu, family)
    violations = int(np.count_nonzero(tilde > standard))
    c0 = weak = 0.0
    witness: dict[str, Any] = {}
    for k, (f, mf) in enumerate(zip(family, tilde)):
        norm = lp_norm(mu, p, f)
        if norm == 0:
            continue
        value = lp_norm(mu, p, mf) / norm
        if value > c0:
            c0, witness = value, {"function": k}
        weak = max(weak, _weak_constant(mu, mf, lp_norm(mu, 1.0, f)))
    constants: dict[str, Any] = {
        "C0": c0,
        "weak_11": weak,
        "pointwise_violations": violations,
    }
    if lvl.lam is not None:
        ud = check_upper_doubling(space, mu, lvl.lam)
        constants["upper_doubling"] = ud.holds
        constants["omega_max"] = float(omega(space, mu, lvl.lam).max())
    return LevelRecord(N=space.n, ratio=c0, constants=constants, witness=witness)


def verify_maximal_bounds(
    levels: Sequence[Level],
    p: float,
    *,
    seed: int = 0,
    size: int = FAMILY_SIZE,
    tau: float = TAU,
    family: FamilyFactory | None = None,
) -> ExperimentReport:
    """Strong (p, p) and weak (1, 1) bounds of the modified maximal operator.

    Also counts pointwise violations of ``M~f <= Mf``, and when a dominating function
    is attached, reports ``max Omega`` next to the upper doubling check.
    """
    if not p > 1:
        msg = f"maximal bounds need p > 1, got {p}"
        raise PreconditionError(msg)
    _check_levels(levels)
    records = []
    for lvl in levels:
        start = time.perf_counter()
        fam = _family(lvl, seed, size, 2.0 if math.isinf(p) else p, family)
        records.append(_maximal_level(lvl, p, fam))
        logger.info(
            "maximal N=%s C0=%.6g weak=%.6g (%.2fs)",
            lvl.space.n,
            records[-1].constants["C0"],
            records[-1].constants["weak_11"],
            time.perf_counter() - start,
        )
    violations = sum(r.constants["pointwise_violations"] for r in records)
    omega_broken = any(
        r.constants.get("upper_doubling") and r.constants["omega_max"] > 1.0 + 1e-12
        for r in records
    )
    if violations or omega_broken:
        verdict = VIOLATED
    else:
        verdict = refinement_verdict(
            [
                [r.constants["C0"] for r in records],
                [r.constants["weak_11"] for r in records],
            ],
            tau,
        )
    return ExperimentReport(
        "maximal",
        verdict,
        records,
        [],
        seed,
        tau,
        tracked=("C0", "weak_11"),
        notes={"p": p, "family_size": size},
    )


def _bound_constant(space, mu, exponent: float, side: str) -> float:
    return ahlfors_bound(space, mu, exponent, side).best_constant


@mem_profile(logger)
def _comparison_level(
    lvl: Level,
    alpha: float,
    family: np.ndarray,
    lower: float | None,
    upper: float | None,
) -> LevelRecord:
    space, mu = lvl.space, lvl.mu
    fit = ahlfors_fit(space, mu)
    big = fit.Q if lower is None else lower
    small = fit.Q if upper is None else upper
    c0 = _bound_constant(space, mu, big, "lower")
    c = _bound_constant(space, mu, small, "upper")
    fam = np.abs(family)
    j = potential(space, mu, KernelSpec("measure-ratio", alpha), fam)
    i_big = potential(space, mu, KernelSpec("dim-power", alpha, Q=big), fam)
    i_small = potential(space, mu, KernelSpec("dim-power", alpha, Q=small), fam)
    i_q = potential(space, mu, KernelSpec("dim-power", alpha, Q=fit.Q), fam)
    slack = 1.0 + EXPONENT_RTOL
    lower_violations = int(np.count_nonzero(c0 * j > slack * i_big))
    upper_violations = int(np.count_nonzero(i_small > slack * c * j))
    live = j > 0
    band = i_q[live] / j[live] if live.any() else np.ones(1)
    low, high = float(band.min()), float(band.max())
    outside = int(
        np.count_nonzero((band * fit.A1 < 1.0 / slack) | (band > slack * fit.A1))
    )
    return LevelRecord(
        N=space.n,
        ratio=high / low,
        constants={
            "Q": fit.Q,
            "A1": fit.A1,
            "N_lower": big,
            "n_upper": small,
            "c0": c0,
            "c": c,
            "band": (low, high),
            "lower_violations": lower_violations,
            "upper_violations": upper_violations,
            "band_violations": outside,
        },
    )


def verify_comparison(
    levels: Sequence[Level],
    alpha: float,
    *,
    lower: float | None = None,
    upper: float | None = None,
    seed: int = 0,
    size: int = FAMILY_SIZE,
    tau: float = TAU,
    family: FamilyFactory | None = None,
) -> ExperimentReport:
    """Compare ``J_alpha`` with the Riesz potentials ``I^N`` and ``I^n`` on ``f >= 0``.

    With ``mu(B(x, r)) >= c0 r**N`` and ``mu(B(x, r)) <= c r**n`` on canonical radii,
    ``J_alpha f <= I^N f / c0`` and ``I^n f <= c J_alpha f`` pointwise, and on an
    Ahlfors Q-regular measure ``I^Q f / J_alpha f`` lies in ``[A1**-1, A1]``. N and n
    default to the fitted Q. The family is taken in absolute value. Any pointwise
    failure is a violation; otherwise the verdict tracks the observed band width
    ``max / min`` of ``I^Q f / J_alpha f`` and A1.
    """
    _check_levels(levels)
    records = []
    for lvl in levels:
        start = time.perf_counter()
        fam = _family(lvl, seed, size, 2.0, family)
        records.append(_comparison_level(lvl, alpha, fam, lower, upper))
        logger.info(
            "comparison N=%s c0=%.6g c=%.6g band=%.6g (%.2fs)",
            lvl.space.n,
            records[-1].constants["c0"],
            records[-1].constants["c"],
            records[-1].ratio,
            time.perf_counter() - start,
        )
    checks = [
        _hypothesis("lower_ahlfors", r.constants["c0"] > 0, k, c0=r.constants["c0"])
        for k, r in enumerate(records)
    ]
    broken = sum(
        r.constants[name]
        for r in records
        for name in ("lower_violations", "upper_violations", "band_violations")
    )
    if broken:
        verdict = VIOLATED
    else:
        verdict = refinement_verdict(
            [[r.ratio for r in records], [r.constants["A1"] for r in records]], tau
        )
    return ExperimentReport(
        "comparison",
        verdict,
        records,
        checks,
        seed,
        tau,
        tracked=("ratio", "A1"),
        notes={"alpha": alpha, "lower": lower, "upper": upper, "family_size": size},
    )
