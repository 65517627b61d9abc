"""Finite discretizations of bounded quasi-metric spaces.

A space is a node set with a dense distance matrix. Everything that the continuum
theory states as a supremum over radii r > 0 is sampled on the space's canonical
radii: the distinct pairwise distances merged with a dyadic ladder below the diameter.
Balls are open, ``B(x, r) = {y : d(x, y) < r}``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy.spatial.distance import cdist

from udpot.base import PreconditionError, UniqueID, frozen_array
from udpot.parallel import ordered_map

logger = logging.getLogger("udpot.space")

EXHAUSTIVE_TRIPLE_LIMIT = 2000
TRIPLE_SAMPLES = 2_000_000
TRIPLE_SAMPLE_SEED = 20240917
RADIUS_DEDUP_RTOL = 1e-9
SYMMETRY_RTOL = 1e-12


@dataclass(eq=False, repr=False)
class QuasiMetricSpace(UniqueID):
    """A finite quasi-metric space.

    Args:
        nodes:
            Sequence[Hashable], node identifiers in node order
        dist:
            ndarray, symmetric (N, N) distance matrix with zero diagonal
        k1:
            float, quasi-triangle constant, computed by a triple scan when omitted
        r0:
            float, diameter, computed when omitted
        k1_estimated:
            bool, True when k1 comes from a sampled rather than exhaustive scan
        coordinates:
            ndarray, optional, ambient coordinates (N, dim) when the space is embedded
        volumes:
            ndarray, optional, quadrature cell volume of each node
        dimension:
            float, optional, nominal (Ahlfors) dimension of the discretized continuum
        spec:
            dict, the JSON description the space was built from
    """

    nodes: Sequence[Hashable]
    dist: np.ndarray
    k1: float = math.nan
    r0: float = math.nan
    k1_estimated: bool = False
    coordinates: np.ndarray | None = None
    volumes: np.ndarray | None = None
    dimension: float | None = None
    spec: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        super().__post_init__()
        self.nodes = tuple(self.nodes)
        dist = np.asarray(self.dist, dtype=float)
        n = len(self.nodes)
        if dist.shape != (n, n):
            msg = f"distance matrix has shape {dist.shape}, expected ({n}, {n})"
            raise PreconditionError(msg)
        if len(set(self.nodes)) != n:
            msg = "node identifiers must be unique"
            raise PreconditionError(msg)
        _check_distances(dist)
        self.dist = frozen_array(dist)
        if self.coordinates is not None:
            self.coordinates = frozen_array(self.coordinates)
        self.volumes = frozen_array(
            np.full(n, 1.0 / max(n, 1)) if self.volumes is None else self.volumes
        )
        if math.isnan(self.r0):
            self.r0 = float(dist.max()) if n else 0.0
        if math.isnan(self.k1):
            self.k1, self.k1_estimated = quasi_triangle_scan(dist)

    def __repr__(self) -> str:
        return (
            f"QuasiMetricSpace(name={self.name!r}, n={self.n}, k1={self.k1:.6g}, "
            f"r0={self.r0:.6g})"
        )

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def index(self) -> dict[Hashable, int]:
        return {node: i for i, node in enumerate(self.nodes)}

    def node_index(self, x: Hashable) -> int:
        """Position of node identifier x in node order."""
        try:
            return self.index[x]
        except (KeyError, TypeError) as e:
            msg = f"unknown node id {x!r}"
            raise PreconditionError(msg) from e

    @cached_property
    def order(self) -> np.ndarray:
        """Per-row argsort of the distance matrix (stable, so ties keep node order)."""
        order = np.argsort(self.dist, axis=1, kind="stable")
        order.flags.writeable = False
        return order

    @cached_property
    def sorted_dist(self) -> np.ndarray:
        sd = np.take_along_axis(self.dist, self.order, axis=1)
        sd.flags.writeable = False
        return sd

    @cached_property
    def nearest(self) -> np.ndarray:
        """Distance from each node to its nearest other node (inf when alone)."""
        if self.n < 2:
            return np.full(self.n, np.inf)
        return self.sorted_dist[:, 1].copy()

    @cached_property
    def mesh_size(self) -> float:
        """Largest nearest-neighbour distance; balls below it may be single nodes."""
        if self.n < 2:
            return 0.0
        return float(self.nearest.max())

    @cached_property
    def radii(self) -> np.ndarray:
        return canonical_radii(self)

    @cached_property
    def resolved_radii(self) -> np.ndarray:
        """Canonical radii strictly above the mesh size."""
        radii = self.radii[self.radii > self.mesh_size]
        return radii if radii.size else self.radii[-1:]

    @cached_property
    def dyadic_radii(self) -> np.ndarray:
        return _dyadic_ladder(self.r0, _min_positive(self.dist))

    def counts(
        self, radii: np.ndarray, rows: Sequence[int] | None = None
    ) -> np.ndarray:
        """Number of ball members, ``#{y : d(x, y) < r}``.

        Args:
            radii:
                ndarray, shape (R,) shared by all rows, or (len(rows), R) per row
            rows:
                Sequence[int], optional, node positions, defaults to all nodes

        Returns:
            int ndarray of shape (len(rows), R)
        """
        rows = np.arange(self.n) if rows is None else np.asarray(rows, dtype=int)
        radii = np.asarray(radii, dtype=float)
        out = np.empty((rows.size, radii.shape[-1]), dtype=np.int64)
        shared = radii.ndim == 1
        for k, x in enumerate(rows):
            out[k] = np.searchsorted(
                self.sorted_dist[x], radii if shared else radii[k], side="left"
            )
        return out

    def prefix_sums(self, values: np.ndarray) -> np.ndarray:
        """Ball sums lookup table, ``table[x, c]`` sums values over the c nearest."""
        values = np.asarray(values, dtype=float)
        table = np.zeros((self.n, self.n + 1))
        np.cumsum(values[self.order], axis=1, out=table[:, 1:])
        return table


@dataclass(frozen=True)
class Ball:
    """Open ball ``B(center, radius)`` with its member node ids in node order."""

    center: Hashable
    radius: float
    members: tuple[Hashable, ...]
    indices: tuple[int, ...]

    def __contains__(self, node: Hashable) -> bool:
        return node in self.members

    def __len__(self) -> int:
        return len(self.members)


def _check_distances(dist: np.ndarray) -> None:
    if not np.all(np.isfinite(dist)):
        msg = "distances must be finite (bounded space)"
        raise PreconditionError(msg)
    if np.any(dist < 0):
        msg = "distances must be nonnegative"
        raise PreconditionError(msg)
    if np.any(np.diag(dist) != 0):
        msg = "distance from a node to itself must be 0"
        raise PreconditionError(msg)
    asym = np.abs(dist - dist.T) > SYMMETRY_RTOL * np.maximum(np.abs(dist), 1e-300)
    if asym.any():
        i, j = (int(v) for v in np.argwhere(asym)[0])
        msg = f"distance matrix is not symmetric at ({i}, {j})"
        raise PreconditionError(msg)
    off = dist + np.eye(dist.shape[0])
    if dist.shape[0] > 1 and np.any(off == 0):
        i, j = (int(v) for v in np.argwhere(off == 0)[0])
        msg = f"duplicate points: nodes {i} and {j} are at distance 0"
        raise PreconditionError(msg)


def _min_positive(dist: np.ndarray) -> float:
    positive = dist[dist > 0]
    return float(positive.min()) if positive.size else 0.0


def _dyadic_ladder(r0: float, floor: float) -> np.ndarray:
    if r0 <= 0:
        return np.array([1.0])
    j = 0
    ladder = [r0]
    while ladder[-1] >= floor:
        j += 1
        ladder.append(r0 * 2.0**-j)
    return np.array(ladder[::-1])


def _dedup(values: np.ndarray) -> np.ndarray:
    values = np.sort(values)
    if values.size < 2:
        return values
    keep = np.empty(values.size, dtype=bool)
    keep[0] = True
    keep[1:] = values[1:] > values[:-1] * (1.0 + RADIUS_DEDUP_RTOL)
    return values[keep]


def canonical_radii(space: QuasiMetricSpace) -> np.ndarray:
    """Finite sampling set for suprema over radii.

    The sorted set of pairwise distances, merged with ``r0 * 2**-j`` for
    ``j = 0..J``, where J is the first index putting a dyadic radius below the
    smallest positive distance. Values closer than 1e-9 (relative) are merged and
    represented by the smallest. A single-node space gets the radius 1.
    """
    if space.n < 2:
        return np.array([1.0])
    iu = np.triu_indices(space.n, k=1)
    pairwise = space.dist[iu]
    merged = _dedup(np.concatenate([pairwise, space.dyadic_radii]))
    merged.flags.writeable = False
    return merged


def _triangle_ratio_max(dist: np.ndarray, zs: Sequence[int]) -> float:
    best = 0.0
    for z in zs:
        denom = dist[:, z, None] + dist[None, z, :]
        denom[z, z] = 1.0
        best = max(best, float((dist / denom).max()))
    return best


def quasi_triangle_scan(
    dist: np.ndarray,
    exhaustive_limit: int = EXHAUSTIVE_TRIPLE_LIMIT,
    samples: int = TRIPLE_SAMPLES,
) -> tuple[float, bool]:
    """Maximum of ``d(x,y) / (d(x,z) + d(z,y))`` over triples.

    Returns:
        (k1, estimated), exhaustive below exhaustive_limit nodes, otherwise over a
        fixed-seed sample of triples.
    """
    n = dist.shape[0]
    if n < 3:
        return 1.0, False
    if n <= exhaustive_limit:
        blocks = np.array_split(np.arange(n), min(n, 64))
        best = max(ordered_map(lambda zs: _triangle_ratio_max(dist, zs), blocks))
        return max(1.0, best), False

    logger.info("k1 estimated from %s sampled triples (N=%s)", samples, n)
    rng = np.random.default_rng(TRIPLE_SAMPLE_SEED)
    best = 1.0
    batch = 200_000
    for start in range(0, samples, batch):
        size = min(batch, samples - start)
        x, y, z = rng.integers(0, n, size=(3, size))
        denom = dist[x, z] + dist[z, y]
        ok = denom > 0
        if ok.any():
            best = max(best, float((dist[x[ok], y[ok]] / denom[ok]).max()))
    return best, True


def quasi_triangle_constant(space: QuasiMetricSpace) -> float:
    """Smallest K1 with ``d(x,y) <= K1 (d(x,z) + d(z,y))`` on the scanned triples."""
    value, estimated = quasi_triangle_scan(np.asarray(space.dist))
    if estimated:
        logger.warning("quasi-triangle constant of %s is estimated", space.name)
    return value


def ball(space: QuasiMetricSpace, x: Hashable, r: float) -> Ball:
    """The open ball ``B(x, r)``."""
    if not r > 0:
        msg = f"ball radius must be positive, got {r!r}"
        raise PreconditionError(msg)
    i = space.node_index(x)
    idx = np.flatnonzero(space.dist[i] < r)
    return Ball(
        center=x,
        radius=float(r),
        members=tuple(space.nodes[k] for k in idx),
        indices=tuple(int(k) for k in idx),
    )


def _greedy_cover(dist: np.ndarray, members: np.ndarray, half: float) -> int:
    uncovered = members
    count = 0
    while uncovered.size:
        center = uncovered[0]
        count += 1
        uncovered = uncovered[dist[center, uncovered] >= half]
    return count


def geometric_doubling_number(space: QuasiMetricSpace) -> int:
    """Greedy upper bound for the geometric doubling number.

    Every ball ``B(x, r)`` over nodes x and canonical radii r is covered by balls of
    radius r/2 centered at members, picking the first uncovered member in node order.
    The largest cover size is returned.
    """
    dist = np.asarray(space.dist)

    def worst_for(x: int) -> int:
        worst = 1
        members_prev = -1
        for r in space.radii:
            members = np.flatnonzero(dist[x] < r)
            if members.size == members_prev and members.size == space.n:
                continue
            members_prev = members.size
            worst = max(worst, _greedy_cover(dist, members, r / 2.0))
        return worst

    return max(ordered_map(worst_for, range(space.n)), default=1)


def _grid1d(spec: Mapping[str, Any]) -> QuasiMetricSpace:
    length = float(spec.get("length", 1.0))
    n = int(spec["n"])
    if n < 1 or length <= 0:
        msg = f"grid1d needs n >= 1 and length > 0, got n={n}, length={length}"
        raise PreconditionError(msg)
    h = length / (n - 1) if n > 1 else length
    idx = np.arange(n)
    volumes = np.full(n, h)
    if n > 1:
        volumes[[0, -1]] = h / 2.0
    return QuasiMetricSpace(
        nodes=range(n),
        dist=np.abs(idx[:, None] - idx[None, :]) * h,
        k1=1.0,
        coordinates=(idx * h)[:, None],
        volumes=volumes,
        dimension=1.0,
        spec=dict(spec),
        name=spec.get("name", f"grid1d-{n}"),
    )


def _grid2d(spec: Mapping[str, Any]) -> QuasiMetricSpace:
    length = float(spec.get("length", 1.0))
    n = int(spec["n"])
    if n < 1 or length <= 0:
        msg = f"grid2d needs n >= 1 and length > 0, got n={n}, length={length}"
        raise PreconditionError(msg)
    h = length / (n - 1) if n > 1 else length
    ij = np.array([(i, j) for i in range(n) for j in range(n)], dtype=float)
    side = np.full(n, h)
    if n > 1:
        side[[0, -1]] = h / 2.0
    return QuasiMetricSpace(
        nodes=range(n * n),
        dist=cdist(ij, ij) * h,
        k1=1.0,
        coordinates=ij * h,
        volumes=np.outer(side, side).ravel(),
        dimension=2.0,
        spec=dict(spec),
        name=spec.get("name", f"grid2d-{n}x{n}"),
    )


def _cantor(spec: Mapping[str, Any]) -> QuasiMetricSpace:
    g = int(spec["generation"])
    if g < 0:
        msg = f"cantor generation must be >= 0, got {g}"
        raise PreconditionError(msg)
    ints = np.zeros(1, dtype=np.int64)
    for _ in range(g):
        ints = np.concatenate([3 * ints, 3 * ints + 2])
    ints.sort()
    scale = 3.0**g
    return QuasiMetricSpace(
        nodes=range(ints.size),
        dist=np.abs(ints[:, None] - ints[None, :]) / scale,
        k1=1.0,
        coordinates=(ints / scale)[:, None],
        volumes=np.full(ints.size, 2.0**-g),
        dimension=math.log(2) / math.log(3),
        spec=dict(spec),
        name=spec.get("name", f"cantor-{g}"),
    )


def _explicit(spec: Mapping[str, Any]) -> QuasiMetricSpace:
    dist = np.asarray(spec["distances"], dtype=float)
    points = spec.get("points")
    if dist.ndim == 1:
        n = math.isqrt(dist.size)
        if n * n != dist.size:
            msg = f"flat distance list of length {dist.size} is not square"
            raise PreconditionError(msg)
        dist = dist.reshape(n, n)
    nodes = tuple(points) if points is not None else tuple(range(dist.shape[0]))
    return QuasiMetricSpace(
        nodes=nodes,
        dist=dist,
        volumes=spec.get("volumes"),
        dimension=spec.get("dimension"),
        spec=dict(spec),
        name=spec.get("name", f"explicit-{dist.shape[0]}"),
    )


def _snowflake(spec: Mapping[str, Any]) -> QuasiMetricSpace:
    theta = float(spec["theta"])
    if not 0 < theta <= 1:
        msg = f"snowflake exponent must lie in (0, 1], got {theta}"
        raise PreconditionError(msg)
    base = build_space(spec["base"])
    return QuasiMetricSpace(
        nodes=base.nodes,
        dist=np.asarray(base.dist) ** theta,
        coordinates=base.coordinates,
        volumes=base.volumes,
        dimension=None if base.dimension is None else base.dimension / theta,
        spec=dict(spec),
        name=spec.get("name", f"snowflake-{theta:g}-{base.name}"),
    )


SPACE_BUILDERS = {
    "grid1d": _grid1d,
    "grid2d": _grid2d,
    "cantor": _cantor,
    "explicit": _explicit,
    "snowflake": _snowflake,
}


def build_space(spec: Mapping[str, Any]) -> QuasiMetricSpace:
    """Build a space from its JSON description.

    Supported kinds: ``grid1d`` (length, n), ``grid2d`` (length, n per side),
    ``cantor`` (generation), ``explicit`` (distances, optional points/volumes) and
    ``snowflake`` (theta, base).
    """
    kind = spec.get("kind")
    try:
        builder = SPACE_BUILDERS[kind]
    except KeyError as e:
        msg = f"unknown space kind {kind!r}, choose from {sorted(SPACE_BUILDERS)}"
        raise PreconditionError(msg) from e
    try:
        space = builder(spec)
    except KeyError as e:
        msg = f"space spec of kind {kind!r} is missing key {e.args[0]!r}"
        raise PreconditionError(msg) from e
    logger.debug("built %r", space)
    return space


def space_summary(space: QuasiMetricSpace, doubling: bool = True) -> dict[str, Any]:
    """Artifact payload describing a space, rebuildable from its spec."""
    summary: dict[str, Any] = {
        "spec": space.spec,
        "name": space.name,
        "n_nodes": space.n,
        "k1": space.k1,
        "k1_estimated": space.k1_estimated,
        "r0": space.r0,
        "mesh_size": space.mesh_size,
        "dimension": space.dimension,
    }
    if doubling:
        summary["geometric_doubling_number"] = geometric_doubling_number(space)
    return summary
