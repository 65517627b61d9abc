"""Discrete measures and the regularity checkers that scan them.

Every checker samples (node, radius) pairs, node positions in node order and radii from
the space's canonical (or resolved, or dyadic) radii, and returns a RegularityReport
whose witness is the sample attaining the reported constant.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import TYPE_CHECKING, Any

import numpy as np

from udpot import validator
from udpot.base import PreconditionError, RegularityReport, UniqueID, frozen_array
from udpot.parallel import ordered_map
from udpot.space import QuasiMetricSpace

if TYPE_CHECKING:
    from udpot.dominating import DominatingFunction

logger = logging.getLogger("udpot.measure")

ROW_BLOCK = 256
UPPER_DOUBLING_RTOL = 1e-12
TYPE_GROWTH_TOL = 1e-6
TYPE_CUT_RTOL = 1e-8
LOWER_TYPE_TOL = 1e-3
AHLFORS_STEPS_PER_OCTAVE = 4
AHLFORS_MESH_FACTOR = 6.0
AHLFORS_FIT_MESH_FACTOR = 4.0
AHLFORS_FIT_TOP = 8.0


@dataclass(eq=False, repr=False)
class DiscreteMeasure(UniqueID):
    """Nonnegative weight per node, a quadrature approximation of a Borel measure.

    Args:
        weights:
            ndarray, one weight per node of the space, in node order
        spec:
            dict, the JSON description the measure was built from
    """

    weights: np.ndarray
    spec: dict[str, Any] = field(default_factory=dict)

    @validator.nonnegative_weights
    def __post_init__(self):
        super().__post_init__()
        self.weights = frozen_array(self.weights)
        if self.weights.ndim != 1:
            msg = f"weights must be one-dimensional, got shape {self.weights.shape}"
            raise PreconditionError(msg)

    def __repr__(self) -> str:
        return f"DiscreteMeasure(name={self.name!r}, n={self.weights.size})"

    @cached_property
    def total(self) -> float:
        return math.fsum(self.weights.tolist())

    def scaled(self, t: float) -> DiscreteMeasure:
        return DiscreteMeasure(self.weights * t, spec=dict(self.spec, scaled=t))

    def to_dict(self) -> dict[str, Any]:
        return {"spec": self.spec, "weights": self.weights, "total": self.total}


@dataclass
class GridFunction:
    """A real value per node, aligned with the space's node order."""

    values: np.ndarray

    @validator.finite_values
    def __post_init__(self):
        self.values = frozen_array(self.values)


def as_values(f: GridFunction | np.ndarray | Sequence[float]) -> np.ndarray:
    """Values of a grid function given as a GridFunction or any array-like."""
    if isinstance(f, GridFunction):
        return f.values
    values = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(values)):
        node = int(np.flatnonzero(~np.isfinite(values.reshape(-1)))[0])
        msg = f"non-finite value at flat position {node}"
        raise PreconditionError(msg)
    return values


def check_aligned(space: QuasiMetricSpace, mu: DiscreteMeasure) -> None:
    validator.aligned(space.n, "weights")(mu)


def row_blocks(n: int, size: int = ROW_BLOCK) -> list[np.ndarray]:
    return [np.arange(a, min(a + size, n)) for a in range(0, n, size)]


@lru_cache(maxsize=32)
def _prefix_table(space: QuasiMetricSpace, mu: DiscreteMeasure) -> np.ndarray:
    check_aligned(space, mu)
    return space.prefix_sums(mu.weights)


def ball_masses(
    space: QuasiMetricSpace,
    mu: DiscreteMeasure,
    radii: np.ndarray,
    rows: Sequence[int] | np.ndarray | None = None,
) -> np.ndarray:
    """Ball measures ``mu(B(x, r))`` for a block of nodes.

    Args:
        radii:
            ndarray, shape (R,) shared, or (len(rows), R) per row
        rows:
            node positions, defaults to all nodes

    Returns:
        ndarray of shape (len(rows), R)
    """
    rows = np.arange(space.n) if rows is None else np.asarray(rows, dtype=int)
    counts = space.counts(radii, rows)
    return np.take_along_axis(_prefix_table(space, mu)[rows], counts, axis=1)


def ball_measure(
    space: QuasiMetricSpace, mu: DiscreteMeasure, x: Hashable, r: float
) -> float:
    """``mu(B(x, r))``, the sum of member weights."""
    if not r > 0:
        msg = f"ball radius must be positive, got {r!r}"
        raise PreconditionError(msg)
    i = space.node_index(x)
    return float(ball_masses(space, mu, np.array([r]), [i])[0, 0])


def _best(parts, *, minimum: bool = False):
    """Pick the extreme (value, witness, extra) triple, first one on ties."""
    if minimum:
        return min(parts, key=lambda p: p[0])
    return max(parts, key=lambda p: p[0])


def check_upper_doubling(
    space: QuasiMetricSpace, mu: DiscreteMeasure, lam: DominatingFunction
) -> RegularityReport:
    """Check ``mu(B(x, r)) <= lam(x, r)`` on every node and canonical radius."""
    check_aligned(space, mu)
    radii = space.radii

    def scan(rows):
        masses = ball_masses(space, mu, radii, rows)
        bound = lam.evaluate(radii, rows)
        ratio = masses / bound
        i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        over = int(np.count_nonzero(masses > bound * (1.0 + UPPER_DOUBLING_RTOL)))
        return float(ratio[i, j]), (int(rows[i]), float(radii[j])), over

    parts = ordered_map(scan, row_blocks(space.n))
    best, witness, _ = _best(parts)
    violations = sum(p[2] for p in parts)
    if violations:
        logger.warning(
            "upper doubling fails on %s samples, worst ratio %.6g at %s",
            violations,
            best,
            witness,
        )
    return RegularityReport(
        holds=violations == 0,
        best_constant=best,
        worst_witness=witness,
        samples_checked=space.n * radii.size,
        notes={"violations": violations},
    )


def _doubling_ratios(m1: np.ndarray, m2: np.ndarray) -> np.ndarray:
    ratio = np.ones_like(m1)
    pos = m1 > 0
    ratio[pos] = m2[pos] / m1[pos]
    ratio[~pos & (m2 > 0)] = np.inf
    return ratio


def estimate_doubling_constant(
    space: QuasiMetricSpace, mu: DiscreteMeasure
) -> RegularityReport:
    """Largest ``mu(B(x, 2r)) / mu(B(x, r))`` over nodes and resolved radii.

    Radii at or below the mesh size are skipped; the notes record the scanned radii.

    Empty balls inside nonempty doubled balls give an infinite constant, reported with
    the offending witness. Two empty balls count as ratio 1.
    """
    check_aligned(space, mu)
    radii = space.resolved_radii

    def scan(rows):
        m1 = ball_masses(space, mu, radii, rows)
        m2 = ball_masses(space, mu, 2.0 * radii, rows)
        ratio = _doubling_ratios(m1, m2)
        i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        zero = int(np.count_nonzero(m1 == 0))
        return float(ratio[i, j]), (int(rows[i]), float(radii[j])), zero

    parts = ordered_map(scan, row_blocks(space.n))
    best, witness, _ = _best(parts)
    zero = sum(p[2] for p in parts)
    if not math.isfinite(best):
        logger.warning("measure is not doubling, empty ball at %s", witness)
    return RegularityReport(
        holds=math.isfinite(best),
        best_constant=best,
        worst_witness=witness,
        samples_checked=space.n * radii.size,
        notes={
            "zero_balls": zero,
            "radii": "resolved",
            "min_radius": float(radii.min()),
        },
    )


@dataclass
class AhlforsFit:
    """Log-log regression of ball measures against radii.

    A1 certifies ``A1**-1 r**Q <= mu(B(x, r)) <= A1 r**Q`` on all nodes and canonical
    radii with positive ball measure. residual is the largest deviation of a fitted
    sample from the regression line, in natural log.
    """

    Q: float
    A1: float
    residual: float
    radii_used: int
    window: tuple[float, float]
    samples: int = 0
    method: str = "samples"

    def to_dict(self) -> dict[str, Any]:
        return {
            "Q": self.Q,
            "A1": self.A1,
            "residual": self.residual,
            "radii_used": self.radii_used,
            "window": list(self.window),
            "samples": self.samples,
            "method": self.method,
        }


def _log_window(space: QuasiMetricSpace, lo: float, hi: float) -> np.ndarray:
    if lo > 0 and hi > lo:
        steps = int(math.floor(AHLFORS_STEPS_PER_OCTAVE * math.log2(hi / lo))) + 1
        window = lo * 2.0 ** (np.arange(steps) / AHLFORS_STEPS_PER_OCTAVE)
        if window.size >= 3:
            return window
    return space.resolved_radii[space.resolved_radii <= space.r0 / 2.0]


def _positive_window(space, mu, window) -> tuple[np.ndarray, np.ndarray]:
    masses = ball_masses(space, mu, window) if window.size else np.zeros((space.n, 0))
    keep = np.all(masses > 0, axis=0)
    window, masses = window[keep], masses[:, keep]
    if window.size < 2:
        msg = (
            "ahlfors fit needs at least two distinct radii with positive ball "
            f"measure, got {window.size}"
        )
        raise PreconditionError(msg)
    return window, masses


def _certified_a1(space: QuasiMetricSpace, mu: DiscreteMeasure, Q: float) -> float:
    radii = space.radii

    def deviation(rows):
        m = ball_masses(space, mu, radii, rows)
        pos = m > 0
        dev = np.abs(np.log(np.where(pos, m, 1.0)) - Q * np.log(radii)[None, :])
        return float(np.where(pos, dev, 0.0).max())

    return math.exp(max(ordered_map(deviation, row_blocks(space.n))))


def ahlfors_fit(space: QuasiMetricSpace, mu: DiscreteMeasure) -> AhlforsFit:
    """Fit the Ahlfors dimension Q and certify the constant A1.

    Q is the least-squares slope of ``log mu(B(x, r))`` on ``log r`` over every node x
    and every radius of a log-uniform window from four mesh sizes to r0/8, all
    samples weighted equally.
    """
    check_aligned(space, mu)
    window = _log_window(
        space, AHLFORS_FIT_MESH_FACTOR * space.mesh_size, space.r0 / AHLFORS_FIT_TOP
    )
    window, masses = _positive_window(space, mu, window)
    log_r = np.broadcast_to(np.log(window), masses.shape).ravel()
    log_m = np.log(masses).ravel()
    Q, intercept = np.polyfit(log_r, log_m, 1)
    residual = float(np.abs(log_m - (Q * log_r + intercept)).max())
    logger.debug(
        "ahlfors fit Q=%.6g residual=%.3g on %s samples", Q, residual, log_m.size
    )
    return AhlforsFit(
        Q=float(Q),
        A1=_certified_a1(space, mu, float(Q)),
        residual=residual,
        radii_used=window.size,
        window=(float(window[0]), float(window[-1])),
        samples=log_m.size,
    )


def ahlfors_envelope_fit(space: QuasiMetricSpace, mu: DiscreteMeasure) -> AhlforsFit:
    """Common slope of the largest and smallest ball measures over centers.

    The window runs from 6 mesh sizes to r0/4, four radii per octave. Used as the
    regularity test of glue components.
    """
    check_aligned(space, mu)
    window = _log_window(space, AHLFORS_MESH_FACTOR * space.mesh_size, space.r0 / 4.0)
    window, masses = _positive_window(space, mu, window)

    log_r = np.log(window)
    k = window.size
    design = np.zeros((2 * k, 3))
    design[:, 0] = np.concatenate([log_r, log_r])
    design[:k, 1] = 1.0
    design[k:, 2] = 1.0
    target = np.concatenate([np.log(masses.max(axis=0)), np.log(masses.min(axis=0))])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    Q = float(coef[0])
    residual = float(np.abs(target - design @ coef).max())
    logger.debug("ahlfors envelope Q=%.6g residual=%.3g on %s radii", Q, residual, k)
    return AhlforsFit(
        Q=Q,
        A1=_certified_a1(space, mu, Q),
        residual=residual,
        radii_used=k,
        window=(float(window[0]), float(window[-1])),
        samples=2 * k,
        method="envelope",
    )


def ahlfors_bound(
    space: QuasiMetricSpace,
    mu: DiscreteMeasure,
    exponent: float | np.ndarray,
    side: str = "upper",
) -> RegularityReport:
    """Best constant in a one-sided Ahlfors condition.

    ``side="lower"`` reports the largest c0 with ``mu(B(x, r)) >= c0 r**N``,
    ``side="upper"`` the smallest c with ``mu(B(x, r)) <= c r**n``. The exponent may be
    a per-node array.
    """
    if side not in ("lower", "upper"):
        msg = f"side must be 'lower' or 'upper', got {side!r}"
        raise PreconditionError(msg)
    check_aligned(space, mu)
    radii = space.radii
    expo = np.broadcast_to(np.asarray(exponent, dtype=float), (space.n,))

    def scan(rows):
        ratio = ball_masses(space, mu, radii, rows) / radii[None, :] ** expo[rows, None]
        flat = int(np.argmin(ratio) if side == "lower" else np.argmax(ratio))
        i, j = np.unravel_index(flat, ratio.shape)
        return float(ratio[i, j]), (int(rows[i]), float(radii[j])), None

    parts = ordered_map(scan, row_blocks(space.n))
    best, witness, _ = _best(parts, minimum=side == "lower")
    holds = best > 0 if side == "lower" else math.isfinite(best)
    return RegularityReport(
        holds=holds,
        best_constant=best,
        worst_witness=witness,
        samples_checked=space.n * radii.size,
        notes={"side": side},
    )


def _type_cuts(space: QuasiMetricSpace) -> np.ndarray:
    """Positions in the canonical radii of the dyadic cuts ``r0 2**-j`` above the mesh.

    Cuts run from r0 downwards; the last one is the smallest cut not below the mesh
    size, or the bottom of the ladder when fewer than two cuts are resolved.
    """
    ladder = space.dyadic_radii[::-1]
    cuts = ladder[ladder >= space.mesh_size]
    if cuts.size < 2:
        cuts = ladder
    return np.searchsorted(space.radii, cuts * (1.0 - TYPE_CUT_RTOL), side="left")


def _type_constants(
    g: np.ndarray, cuts: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row constant c, its radius index and its growth along the dyadic cuts.

    c is the smallest constant with ``g(r2) <= c g(r1)`` for all ``r1 <= r2``. The
    growth is the median over octaves of ``log2`` of the increase of c when the
    smallest admitted r1 halves. A quasi-decreasing g stops gaining after finitely
    many octaves, a power-law increase gains the same amount in every octave.
    """
    ratio = g / np.minimum.accumulate(g, axis=1)
    ahead = np.maximum.accumulate(g[:, ::-1], axis=1)[:, ::-1]
    tail = np.maximum.accumulate((ahead / g)[:, ::-1], axis=1)[:, ::-1]
    steps = np.diff(np.log2(tail[:, cuts]), axis=1)
    growth = np.median(steps, axis=1) if steps.shape[1] else np.zeros(g.shape[0])
    return ratio.max(axis=1), ratio.argmax(axis=1), np.maximum(growth, 0.0)


def _lower_type_constants(lam: DominatingFunction, alpha: float, rows: np.ndarray):
    """c1 per row for ``r -> r**alpha / lam(x, r)`` being quasi-decreasing."""
    radii = lam.space.radii
    g = radii[None, :] ** alpha / lam.evaluate(radii, rows)
    return _type_constants(g, _type_cuts(lam.space))


def _upper_type_constants(lam: DominatingFunction, beta: float, rows: np.ndarray):
    """c2 per row for ``r -> r**beta / lam(x, r)`` being quasi-increasing."""
    radii = lam.space.radii
    g = lam.evaluate(radii, rows) / radii[None, :] ** beta
    return _type_constants(g, _type_cuts(lam.space))


def _type_report(
    c: np.ndarray,
    at: np.ndarray,
    growth: np.ndarray,
    rows: np.ndarray,
    radii: np.ndarray,
    notes: dict[str, Any],
) -> RegularityReport:
    i = int(np.argmax(c))
    k = int(np.argmax(growth))
    return RegularityReport(
        holds=bool(growth[k] <= TYPE_GROWTH_TOL),
        best_constant=float(c[i]),
        worst_witness=(int(rows[i]), float(radii[at[i]])),
        samples_checked=rows.size * radii.size,
        notes=dict(notes, growth=float(growth[k]), growth_node=int(rows[k])),
    )


def lower_type_check(
    lam: DominatingFunction, x: Hashable, alpha: float
) -> RegularityReport:
    """Quasi-monotonicity of ``r -> r**alpha / lam(x, r)`` on canonical radii.

    best_constant is the smallest c1 with
    ``r2**alpha / lam(x, r2) <= c1 r1**alpha / lam(x, r1)`` for all ``r1 <= r2``.
    On a finite set of radii c1 is always finite, so the check holds when c1 stops
    growing as the radii refine: its median growth per octave, reported as
    ``notes["growth"]``, must vanish. A lambda of lower type below alpha makes c1
    gain a fixed factor ``2**(alpha - a)`` in every octave.
    """
    if alpha < 0:
        msg = f"lower type exponent must be >= 0, got {alpha}"
        raise PreconditionError(msg)
    rows = np.array([lam.space.node_index(x)])
    c1, at, growth = _lower_type_constants(lam, alpha, rows)
    return _type_report(c1, at, growth, rows, lam.space.radii, {"alpha": alpha})


def lower_type_all(lam: DominatingFunction, alpha: float) -> RegularityReport:
    """lower_type_check at every node.

    The witness attains the largest c1; ``notes["growth_node"]`` is the node whose c1
    grows fastest.
    """
    radii = lam.space.radii

    def scan(rows):
        return (rows, *_lower_type_constants(lam, alpha, rows))

    parts = ordered_map(scan, row_blocks(lam.space.n))
    rows, c1, at, growth = (np.concatenate(p) for p in zip(*parts))
    return _type_report(c1, at, growth, rows, radii, {"alpha": alpha})


def upper_type_check(
    lam: DominatingFunction, x: Hashable, beta: float
) -> RegularityReport:
    """Quasi-increase of ``r -> r**beta / lam(x, r)``, the upper type beta of lam.

    Same growth criterion as lower_type_check, applied to ``lam(x, r) / r**beta``.
    """
    rows = np.array([lam.space.node_index(x)])
    c2, at, growth = _upper_type_constants(lam, beta, rows)
    return _type_report(c2, at, growth, rows, lam.space.radii, {"beta": beta})


def estimate_lower_type(lam: DominatingFunction, tol: float = LOWER_TYPE_TOL) -> float:
    """Largest alpha, to within tol, for which lam is of lower type alpha everywhere."""
    lo, hi = 0.0, max(1.0, 2.0 * lam.upper_dimension + 1.0)
    if not lower_type_all(lam, lo).holds:
        msg = "dominating function is not of lower type 0 (not quasi-increasing)"
        raise PreconditionError(msg)
    while lower_type_all(lam, hi).holds:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if lower_type_all(lam, mid).holds:
            lo = mid
        else:
            hi = mid
    return lo


def ratio_property_constant(
    space: QuasiMetricSpace, mu: DiscreteMeasure
) -> RegularityReport:
    """Best C with ``mu(B(x, rho)) / mu(B(y, r)) >= C (rho / r)**N``.

    Scanned over dyadic radii ``r <= rho`` and centers ``y`` in ``B(x, rho)``, with
    ``N = log2 K2`` from the doubling estimate.
    """
    doubling = estimate_doubling_constant(space, mu)
    if not doubling.holds:
        return RegularityReport(
            holds=False,
            best_constant=0.0,
            worst_witness=doubling.worst_witness,
            samples_checked=0,
            notes={"reason": "measure is not doubling"},
        )
    N = math.log2(max(doubling.best_constant, 1.0))
    radii = space.dyadic_radii
    masses = ball_masses(space, mu, radii)
    dist = np.asarray(space.dist)
    best, witness, samples = math.inf, (0, float(radii[-1])), 0
    for a, rho in enumerate(radii):
        inside = dist < rho
        for b in range(a + 1):
            near = np.where(inside, masses[None, :, b], -np.inf).max(axis=1)
            ok = (masses[:, a] > 0) & (near > 0)
            if not ok.any():
                continue
            value = masses[ok, a] / near[ok] / (rho / radii[b]) ** N
            k = int(np.argmin(value))
            samples += int(ok.sum())
            if value[k] < best:
                best = float(value[k])
                witness = (int(np.flatnonzero(ok)[k]), float(rho))
    return RegularityReport(
        holds=0 < best < math.inf,
        best_constant=best,
        worst_witness=witness,
        samples_checked=samples,
        notes={"N": N, "K2": doubling.best_constant},
    )


def comparable_center_constant(
    space: QuasiMetricSpace, lam: DominatingFunction
) -> RegularityReport:
    """Best C with ``lam(x, r) <= C lam(y, r)`` whenever ``d(x, y) < r``.

    The relation is symmetric in x and y, so the constant is two-sided.
    """
    radii = space.dyadic_radii
    values = lam.evaluate(radii)
    dist = np.asarray(space.dist)
    best, witness = 1.0, (0, float(radii[0]))
    for k, r in enumerate(radii):
        col = values[:, k]
        ratio = np.where(dist < r, col[:, None] / col[None, :], 0.0)
        i = int(np.argmax(ratio.max(axis=1)))
        if ratio[i].max() > best:
            best, witness = float(ratio[i].max()), (i, float(r))
    return RegularityReport(
        holds=math.isfinite(best),
        best_constant=best,
        worst_witness=witness,
        samples_checked=space.n * radii.size,
    )


def atom_scan(
    space: QuasiMetricSpace, mu: DiscreteMeasure, lam: DominatingFunction
) -> list[tuple[Hashable, float]]:
    """Nodes whose weight exceeds ``lam(x, r_min)`` at the smallest canonical radius."""
    check_aligned(space, mu)
    r_min = space.radii[:1]
    floor = lam.evaluate(r_min)[:, 0]
    flagged = np.flatnonzero(mu.weights > floor)
    if flagged.size:
        logger.info("%s atoms at resolution %.3g", flagged.size, r_min[0])
    return [(space.nodes[i], float(mu.weights[i])) for i in flagged]


def _cluster(weights: np.ndarray, space: QuasiMetricSpace, spec) -> np.ndarray:
    items = spec if isinstance(spec, list) else [spec]
    weights = weights.copy()
    for item in items:
        weights[space.node_index(item["node"])] += float(item["weight"])
    return weights


def build_measure(space: QuasiMetricSpace, spec: Mapping[str, Any]) -> DiscreteMeasure:
    """Build a measure from its JSON description.

    Supported kinds: ``quadrature`` (scale times the space's cell volumes),
    ``uniform`` (total spread evenly) and ``weights`` (explicit values). An optional
    ``cluster`` entry ``{"node": id, "weight": w}`` (or a list of them) adds point
    masses.
    """
    kind = spec.get("kind", "quadrature")
    if kind == "quadrature":
        weights = float(spec.get("scale", 1.0)) * np.asarray(space.volumes)
    elif kind == "uniform":
        weights = np.full(space.n, float(spec.get("total", 1.0)) / space.n)
    elif kind == "weights":
        weights = np.asarray(spec["values"], dtype=float)
    else:
        msg = f"unknown measure kind {kind!r}, choose from quadrature, uniform, weights"
        raise PreconditionError(msg)
    if "cluster" in spec:
        weights = _cluster(np.asarray(weights, dtype=float), space, spec["cluster"])
    mu = DiscreteMeasure(weights, spec=dict(spec), name=spec.get("name", kind))
    check_aligned(space, mu)
    return mu
