"""Two-component spaces glued at a single contact point.

``X = X1 u X2 u {x0}`` is assembled from two embedded component spaces. The glued
measure weights each component's quadrature by ``d(x, x0)**gamma_i``; it is doubling
exactly when ``gamma1 + n1 == gamma2 + n2``, the common value being xi.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Hashable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy.spatial.distance import cdist

from udpot.base import HypothesisError, PreconditionError, frozen_array
from udpot.dominating import DominatingFunction, PowerField
from udpot.measure import (
    AhlforsFit,
    DiscreteMeasure,
    ahlfors_envelope_fit,
    ball_masses,
    row_blocks,
)
from udpot.parallel import ordered_map
from udpot.space import QuasiMetricSpace, build_space

logger = logging.getLogger("udpot.glue")

ADMISSIBLE_TOL = 1e-12
DIMENSION_TOL = 0.3
RESIDUAL_TOL = 1.0
CONTACT_RTOL = 1e-12
OVERLAP_FACTOR = 1.5
CONTACT_CLEARANCE = 2.0
C_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))
FAR_FACTORS = (1.25, 2.0)
K4_NEAR_MESHES = 2.0

CONTACT, FIRST, SECOND = 0, 1, 2


@dataclass(eq=False)
class TwoComponentSpace:
    """A glued space with its geometric constants.

    ``part`` labels every node of ``base`` with 1 or 2 (its component) or 0 (the
    contact node x0, always the last node).
    """

    base: QuasiMetricSpace
    part: np.ndarray
    n1: float
    n2: float
    gamma1: float
    gamma2: float
    contact_c: float
    s_const: float
    fits: tuple[AhlforsFit, AhlforsFit]
    spec: dict[str, Any] = field(default_factory=dict)

    @property
    def contact(self) -> int:
        return self.base.n - 1

    @property
    def xi(self) -> float | None:
        return self.gamma1 + self.n1 if admissible(self) else None

    @cached_property
    def d0(self) -> np.ndarray:
        """Distance from every node to x0."""
        return np.asarray(self.base.dist[:, self.contact])

    @cached_property
    def n_field(self) -> np.ndarray:
        return frozen_array(np.where(self.part == SECOND, self.n2, self.n1))

    @cached_property
    def gamma_field(self) -> np.ndarray:
        return frozen_array(np.where(self.part == SECOND, self.gamma2, self.gamma1))

    def component_mass(self, mu: DiscreteMeasure, which: int) -> float:
        return math.fsum(np.asarray(mu.weights)[self.part == which].tolist())


def admissible(tc: TwoComponentSpace) -> bool:
    """True iff ``gamma1 + n1 == gamma2 + n2`` (within 1e-12)."""
    return abs((tc.gamma1 + tc.n1) - (tc.gamma2 + tc.n2)) <= ADMISSIBLE_TOL


def _component(spec: Mapping[str, Any], cells: int | None) -> QuasiMetricSpace:
    spec = dict(spec)
    if cells is not None and spec.get("kind") in ("grid1d", "grid2d"):
        spec["n"] = int(cells) + 1
    comp = build_space(spec)
    if comp.coordinates is None:
        msg = f"component {comp.name} has no coordinates and cannot be embedded"
        raise PreconditionError(msg)
    return comp


def _padded(coords: np.ndarray, dim: int) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    out = np.zeros((coords.shape[0], dim))
    out[:, : coords.shape[1]] = coords
    return out


def _checked_fit(comp: QuasiMetricSpace, nominal: float | None) -> AhlforsFit:
    quad = DiscreteMeasure(comp.volumes, name=f"{comp.name}-quad")
    fit = ahlfors_envelope_fit(comp, quad)
    target = fit.Q if nominal is None else nominal
    if abs(fit.Q - target) > DIMENSION_TOL or fit.residual > RESIDUAL_TOL:
        msg = (
            f"component {comp.name} is not Ahlfors {target:g}-regular: fitted "
            f"Q={fit.Q:.4g}, residual={fit.residual:.3g}"
        )
        raise PreconditionError(msg)
    return fit


def _contact_constant(dist: np.ndarray, part: np.ndarray, contact: int) -> float:
    """Smallest c with ``d(x, x0) <= c (d(x, X1) + d(x, X2))``, x0 in both sets."""
    in1 = (part == FIRST) | (part == CONTACT)
    in2 = (part == SECOND) | (part == CONTACT)
    to1 = dist[:, in1].min(axis=1)
    to2 = dist[:, in2].min(axis=1)
    others = np.arange(dist.shape[0]) != contact
    return float((dist[others, contact] / (to1 + to2)[others]).max())


def _reject_overlap(
    coords1: np.ndarray, coords2: np.ndarray, contact: np.ndarray, mesh: float
) -> None:
    cross = cdist(coords1, coords2)
    if cross.size == 0:
        return
    near1 = np.linalg.norm(coords1 - contact, axis=1) > CONTACT_CLEARANCE * mesh
    near2 = np.linalg.norm(coords2 - contact, axis=1) > CONTACT_CLEARANCE * mesh
    touching = (cross <= OVERLAP_FACTOR * mesh) & near1[:, None] & near2[None, :]
    if touching.any():
        i, j = (int(v) for v in np.argwhere(touching)[0])
        msg = (
            "components overlap away from the contact point: "
            f"{coords1[i].tolist()} and {coords2[j].tolist()} are "
            f"{cross[i, j]:.3g} apart"
        )
        raise PreconditionError(msg)


def build_glued(
    spec1: Mapping[str, Any],
    spec2: Mapping[str, Any],
    embedding: Mapping[str, Any] | None = None,
) -> TwoComponentSpace:
    """Glue two embedded components at a contact point.

    Args:
        spec1, spec2:
            space specs of the components, each needs coordinates
        embedding:
            Mapping with ``offset1``, ``offset2`` and ``contact`` coordinates,
            ``gamma1``, ``gamma2``, optional ``n1``/``n2`` overrides of the nominal
            dimensions and ``cells`` for a common grid resolution

    Component nodes that coincide with the contact point are dropped, x0 is appended
    as the last node. Each component must pass an Ahlfors fit against its dimension.
    """
    embedding = dict(embedding or {})
    cells = embedding.get("cells")
    comp1, comp2 = _component(spec1, cells), _component(spec2, cells)
    n1 = float(embedding.get("n1", comp1.dimension or 0.0))
    n2 = float(embedding.get("n2", comp2.dimension or 0.0))
    fits = (_checked_fit(comp1, n1 or None), _checked_fit(comp2, n2 or None))
    n1, n2 = n1 or fits[0].Q, n2 or fits[1].Q
    if not 0 < n1 <= n2:
        msg = f"component dimensions must satisfy 0 < n1 <= n2, got {n1}, {n2}"
        raise PreconditionError(msg)
    gamma1 = float(embedding.get("gamma1", 0.0))
    gamma2 = float(embedding.get("gamma2", 0.0))
    if not (gamma1 > -n1 and gamma2 > -n2):
        msg = f"weight exponents need gamma_i > -n_i, got {gamma1}, {gamma2}"
        raise PreconditionError(msg)

    contact = np.asarray(embedding.get("contact", [0.0]), dtype=float)
    dim = max(
        contact.size,
        np.asarray(comp1.coordinates).shape[1],
        np.asarray(comp2.coordinates).shape[1],
        len(embedding.get("offset1", [])),
        len(embedding.get("offset2", [])),
    )
    contact = _padded(contact[None, :], dim)[0]
    coords, vols = [], []
    for comp, key in ((comp1, "offset1"), (comp2, "offset2")):
        offset = _padded(np.asarray([embedding.get(key, [0.0])], dtype=float), dim)[0]
        placed = _padded(comp.coordinates, dim) + offset
        scale = 1.0 + float(np.abs(placed).max())
        keep = np.linalg.norm(placed - contact, axis=1) > CONTACT_RTOL * scale
        coords.append(placed[keep])
        vols.append(np.asarray(comp.volumes)[keep])

    mesh = max(comp1.mesh_size, comp2.mesh_size)
    _reject_overlap(coords[0], coords[1], contact, mesh)

    all_coords = np.vstack([coords[0], coords[1], contact[None, :]])
    part = np.concatenate(
        [
            np.full(len(coords[0]), FIRST),
            np.full(len(coords[1]), SECOND),
            [CONTACT],
        ]
    )
    base = QuasiMetricSpace(
        nodes=range(all_coords.shape[0]),
        dist=cdist(all_coords, all_coords),
        k1=1.0,
        coordinates=all_coords,
        volumes=np.concatenate([vols[0], vols[1], [0.0]]),
        spec={"kind": "glued", "component1": dict(spec1), "component2": dict(spec2)}
        | embedding,
        name=embedding.get("name", f"glued-{comp1.name}-{comp2.name}"),
    )
    dist = np.asarray(base.dist)
    contact_idx = base.n - 1
    diam1 = dist[np.ix_(part != SECOND, part != SECOND)].max()
    diam2 = dist[np.ix_(part != FIRST, part != FIRST)].max()
    tc = TwoComponentSpace(
        base=base,
        part=frozen_array(part, dtype=int),
        n1=n1,
        n2=n2,
        gamma1=gamma1,
        gamma2=gamma2,
        contact_c=_contact_constant(dist, part, contact_idx),
        s_const=float(diam1 + diam2),
        fits=fits,
        spec=dict(base.spec),
    )
    logger.info(
        "glued %s nodes: n=(%g, %g), gamma=(%g, %g), c=%.4g, S=%.4g",
        base.n,
        n1,
        n2,
        gamma1,
        gamma2,
        tc.contact_c,
        tc.s_const,
    )
    return tc


def build_glued_from_spec(spec: Mapping[str, Any]) -> TwoComponentSpace:
    """build_glued from a single ``{"kind": "glued", ...}`` document."""
    try:
        spec1, spec2 = spec["component1"], spec["component2"]
    except KeyError as e:
        msg = f"glued spec is missing {e.args[0]!r}"
        raise PreconditionError(msg) from e
    embedding = {
        k: v for k, v in spec.items() if k not in ("kind", "component1", "component2")
    }
    return build_glued(spec1, spec2, embedding)


@dataclass
class BallEstimateReport:
    """Two-sided ball estimates of the glued measure by radius regime."""

    holds: bool
    k3: float
    c_small: float
    witnesses: dict[str, dict[str, float]]
    far_deviation: float
    contact_band: tuple[float, float]
    k3_by_c: dict[float, float]
    samples_checked: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "holds": self.holds,
            "k3": self.k3,
            "c_small": self.c_small,
            "witnesses": self.witnesses,
            "far_deviation": self.far_deviation,
            "contact_band": list(self.contact_band),
            "k3_by_c": {f"{c:.1f}": k for c, k in self.k3_by_c.items()},
            "samples": self.samples_checked,
        }


@dataclass(eq=False)
class GluedMeasure:
    """The measure ``mu^{gamma1, gamma2}`` with its fitted constants."""

    underlying: DiscreteMeasure
    k3: float
    k4: float
    c_small: float


def _glued_weights(tc: TwoComponentSpace) -> np.ndarray:
    d0 = tc.d0.copy()
    weights = np.zeros(tc.base.n)
    others = tc.part != CONTACT
    weights[others] = d0[others] ** tc.gamma_field[others] * np.asarray(
        tc.base.volumes
    )[others]
    return weights


def _two_sided(ratio: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.maximum(ratio, 1.0 / ratio)


def _scan_regimes(tc: TwoComponentSpace, mu: DiscreteMeasure, xi: float):
    """K3 for every candidate c, with the argmax sample per regime."""
    space = tc.base
    radii = space.resolved_radii[space.resolved_radii <= tc.s_const]
    if radii.size == 0:
        radii = space.resolved_radii[:1]
    d0, n, gam = tc.d0, tc.n_field, tc.gamma_field

    def scan(rows):
        masses = ball_masses(space, mu, radii, rows)
        with np.errstate(divide="ignore", invalid="ignore"):
            near = _two_sided(
                masses / (d0[rows, None] ** gam[rows, None] * radii ** n[rows, None])
            )
            mid = _two_sided(masses / radii[None, :] ** xi)
        out = []
        for c in C_GRID:
            first = radii[None, :] < c * d0[rows, None]
            vi = np.where(first, near, 0.0)
            vii = np.where(first, 0.0, mid)
            out.append(
                (
                    _argmax_sample(vi, rows, radii),
                    _argmax_sample(vii, rows, radii),
                )
            )
        return out

    parts = ordered_map(scan, row_blocks(space.n))
    per_c = {}
    for k, c in enumerate(C_GRID):
        best_i = max((p[k][0] for p in parts), key=lambda s: s[0])
        best_ii = max((p[k][1] for p in parts), key=lambda s: s[0])
        per_c[c] = (best_i, best_ii)
    return radii, per_c


def _argmax_sample(values: np.ndarray, rows: np.ndarray, radii: np.ndarray):
    i, j = np.unravel_index(int(np.argmax(values)), values.shape)
    return float(values[i, j]), int(rows[i]), float(radii[j])


def _fit_ball_estimates(
    tc: TwoComponentSpace, mu: DiscreteMeasure
) -> BallEstimateReport:
    if not admissible(tc):
        raise HypothesisError(
            "glued measure is not admissible: gamma1 + n1 != gamma2 + n2",
            {"gamma1": tc.gamma1, "n1": tc.n1, "gamma2": tc.gamma2, "n2": tc.n2},
        )
    xi = tc.gamma1 + tc.n1
    radii, per_c = _scan_regimes(tc, mu, xi)
    k3_by_c = {c: max(i[0], ii[0], 1.0) for c, (i, ii) in per_c.items()}
    c_small = min(C_GRID, key=lambda c: (k3_by_c[c], -c))
    best_i, best_ii = per_c[c_small]

    space = tc.base
    far = np.array([f * tc.s_const for f in FAR_FACTORS])
    total = mu.total
    far_masses = ball_masses(space, mu, far)
    far_dev = float(np.abs(far_masses - total).max() / total) if total > 0 else 0.0

    at_x0 = ball_masses(space, mu, radii, [tc.contact])[0] / radii**xi
    band = (float(at_x0.min()), float(at_x0.max()))
    k3 = k3_by_c[c_small]
    holds = math.isfinite(k3) and far_dev <= 1e-12
    logger.info(
        "ball estimates: K3=%.6g at c=%.1f, far deviation %.3g", k3, c_small, far_dev
    )
    return BallEstimateReport(
        holds=holds,
        k3=k3,
        c_small=c_small,
        witnesses={
            "near": {"value": best_i[0], "node": best_i[1], "radius": best_i[2]},
            "mid": {"value": best_ii[0], "node": best_ii[1], "radius": best_ii[2]},
            "far": {"deviation": far_dev, "radius": float(far[0])},
        },
        far_deviation=far_dev,
        contact_band=band,
        k3_by_c=k3_by_c,
        samples_checked=space.n * (radii.size + far.size),
    )


def _fit_k4(tc: TwoComponentSpace, mu: DiscreteMeasure) -> float:
    space = tc.base
    radii = space.radii
    n = tc.n_field

    def scan(rows):
        masses = ball_masses(space, mu, radii, rows)
        return _argmax_sample(masses / radii[None, :] ** n[rows, None], rows, radii)

    k4, node, radius = max(ordered_map(scan, row_blocks(space.n)), key=lambda s: s[0])
    gamma = float(tc.gamma_field[node])
    # with gamma < 0 the ratio is unbounded at the contact as the mesh shrinks
    near = tc.d0[node] <= K4_NEAR_MESHES * space.mesh_size
    if not math.isfinite(k4) or (tc.gamma_field.min() < 0 and near):
        raise HypothesisError(
            f"K4 fit fails near the contact at node {node}",
            {
                "node": node,
                "radius": radius,
                "ratio": k4,
                "gamma": gamma,
                "distance": float(tc.d0[node]),
            },
        )
    return k4


def glued_measure(tc: TwoComponentSpace) -> GluedMeasure:
    """The measure ``mu^{gamma1, gamma2}`` with K4 and, when admissible, (K3, c)."""
    mu = DiscreteMeasure(
        _glued_weights(tc),
        spec={"kind": "glued", "gamma1": tc.gamma1, "gamma2": tc.gamma2},
        name=f"glued-{tc.gamma1:g}-{tc.gamma2:g}",
    )
    k4 = _fit_k4(tc, mu)
    if admissible(tc):
        report = _fit_ball_estimates(tc, mu)
        k3, c_small = report.k3, report.c_small
    else:
        k3, c_small = math.nan, math.nan
    return GluedMeasure(underlying=mu, k3=k3, k4=k4, c_small=c_small)


def verify_ball_estimates(
    tc: TwoComponentSpace, gm: GluedMeasure
) -> BallEstimateReport:
    """Smallest K3 and c for the two-sided ball estimates in all three regimes.

    Near regime ``r < c d(x, x0)``: ``mu(B) ~ d**gamma(x) r**n(x)``. Middle regime
    ``c d(x, x0) <= r <= S``: ``mu(B) ~ r**xi``. Far regime ``r > S``: the ball is the
    whole space.
    """
    return _fit_ball_estimates(tc, gm.underlying)


@dataclass(eq=False, repr=False)
class PiecewiseLambda(DominatingFunction):
    """``K3 r**n(x) d(x, x0)**gamma(x)`` below ``c d(x, x0)`` and ``K3 r**xi`` above.

    The raw formula drops at the regime boundary when ``xi > n(x)``; the function is
    the running maximum of the raw formula in r,
    ``K3 max(r**xi, c**n(x) d(x, x0)**xi)`` above the boundary.
    """

    tc: TwoComponentSpace | None = None
    k3: float = 1.0
    c_small: float = 0.5

    def prepare(self):
        if self.tc is None or not admissible(self.tc):
            raise HypothesisError("piecewise dominating function needs admissible glue")
        self.xi = self.tc.gamma1 + self.tc.n1

    def raw(self, r: np.ndarray, rows: np.ndarray) -> np.ndarray:
        d = self.tc.d0[rows, None]
        n, gam = self.tc.n_field[rows, None], self.tc.gamma_field[rows, None]
        with np.errstate(invalid="ignore"):
            first = self.k3 * r**n * np.where(d > 0, d, 1.0) ** gam
        return np.where(r < self.c_small * d, first, self.k3 * r**self.xi)

    def _evaluate(self, r, rows):
        d = self.tc.d0[rows, None]
        n = self.tc.n_field[rows, None]
        floor = self.k3 * self.c_small**n * d**self.xi
        above = np.maximum(self.k3 * r**self.xi, floor)
        return np.where(r < self.c_small * d, self.raw(r, rows), above)

    @cached_property
    def max_deviation(self) -> float:
        """Largest relative lift of the running maximum over the raw formula."""
        radii = self.space.radii
        worst = 0.0
        for rows in row_blocks(self.space.n):
            raw = self.raw(np.broadcast_to(radii, (rows.size, radii.size)), rows)
            worst = max(worst, float((self.evaluate(radii, rows) / raw - 1.0).max()))
        return worst


def piecewise_lambda(tc: TwoComponentSpace, gm: GluedMeasure) -> PiecewiseLambda:
    lam = PiecewiseLambda(
        tc.base, tc=tc, k3=gm.k3, c_small=gm.c_small, name="piecewise"
    )
    if lam.max_deviation > 0:
        logger.info("piecewise lambda lifted by up to %.3g", lam.max_deviation)
    return lam


def simplified_lambda(tc: TwoComponentSpace, gm: GluedMeasure) -> PowerField:
    """``K4 r**n(x)``, dominating the glued measure by construction of K4."""
    return PowerField(
        tc.base, K=gm.k4, n_field=tc.n_field, lower_type=tc.n1, name="simplified"
    )


def lambda_piecewise(
    tc: TwoComponentSpace, gm: GluedMeasure, x: Hashable, r: float
) -> float:
    return piecewise_lambda(tc, gm)(x, r)


def lambda_simplified(
    tc: TwoComponentSpace, gm: GluedMeasure, x: Hashable, r: float
) -> float:
    return simplified_lambda(tc, gm)(x, r)
