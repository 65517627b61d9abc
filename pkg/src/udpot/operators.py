"""Riesz-type potentials, maximal operators and the Omega function.

Potentials are evaluated as dense weighted kernel matrices applied with compensated
summation in fixed node order. Maximal operators take their suprema over canonical
radii using prefix sums along each node's distance order.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Hashable, Mapping
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np
from scipy.special import gamma as gamma_fn

from udpot.base import HypothesisError, PreconditionError
from udpot.dominating import DominatingFunction, Power, PowerField, build_lambda
from udpot.measure import (
    DiscreteMeasure,
    GridFunction,
    as_values,
    ball_masses,
    check_aligned,
    estimate_doubling_constant,
    lower_type_all,
    row_blocks,
)
from udpot.parallel import compensated_matvec, ordered_map
from udpot.profile import mem_profile
from udpot.space import QuasiMetricSpace

logger = logging.getLogger("udpot.operators")

KERNEL_KINDS = (
    "general",
    "dim-power",
    "one-minus",
    "measure-power",
    "measure-ratio",
    "variable-dim",
)
KERNEL_ALIASES = {
    "ialpha": "general",
    "riesz": "dim-power",
    "igamma": "one-minus",
    "kgamma": "measure-power",
    "jalpha": "measure-ratio",
    "variable": "variable-dim",
}
LOWER_TYPE_MARGIN = 1e-3


@dataclass(eq=False)
class KernelSpec:
    """Which potential to evaluate.

    Args:
        kind:
            str, one of KERNEL_KINDS
        alpha:
            float, the order, alpha for general/dim-power/measure-ratio/variable-dim
            and gamma for one-minus/measure-power
        Q:
            float, optional, dimension of the dim-power kernel
        lam:
            DominatingFunction, optional, lambda of the general kernel
        n_field:
            ndarray, optional, per-node dimension of the variable-dim kernel
        certify:
            bool, certify the lower type of lam above alpha for the general kernel
    """

    kind: str
    alpha: float
    Q: float | None = None
    lam: DominatingFunction | None = None
    n_field: np.ndarray | None = None
    certify: bool = True

    def __post_init__(self):
        self.kind = KERNEL_ALIASES.get(self.kind, self.kind)
        if self.kind not in KERNEL_KINDS:
            msg = f"unknown kernel kind {self.kind!r}, choose from {KERNEL_KINDS}"
            raise PreconditionError(msg)
        a = self.alpha
        if self.kind in ("one-minus", "measure-power") and not 0 < a < 1:
            msg = f"{self.kind} kernel needs 0 < gamma < 1, got {a}"
            raise PreconditionError(msg)
        if self.kind == "dim-power":
            if self.Q is None or not 0 < a < self.Q:
                msg = (
                    "dim-power kernel needs 0 < alpha < Q, "
                    f"got alpha={a}, Q={self.Q}"
                )
                raise PreconditionError(msg)
        if self.kind == "measure-ratio" and not a > 0:
            msg = f"measure-ratio kernel needs alpha > 0, got {a}"
            raise PreconditionError(msg)
        if self.kind == "variable-dim":
            if self.n_field is None:
                msg = "variable-dim kernel needs a dimension field n(x)"
                raise PreconditionError(msg)
            self.n_field = np.asarray(self.n_field, dtype=float)
            if not 0 < a < self.n_field.min():
                msg = (
                    "variable-dim kernel needs 0 < alpha < min n(x) = "
                    f"{self.n_field.min():g}, got {a}"
                )
                raise PreconditionError(msg)
        if self.kind == "general":
            if self.lam is None:
                msg = "general kernel needs a dominating function"
                raise PreconditionError(msg)
            if not a > 0:
                msg = f"general kernel needs alpha > 0, got {a}"
                raise PreconditionError(msg)
            if self.certify:
                certify_lower_type(self.lam, a)

    @property
    def gamma(self) -> float:
        return self.alpha

    def describe(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "alpha": self.alpha}
        if self.Q is not None:
            out["Q"] = self.Q
        if self.lam is not None:
            out["lambda"] = self.lam.describe()
        return out


def certify_lower_type(lam: DominatingFunction, alpha: float) -> float:
    """Certify that lam is of some lower type strictly above alpha.

    The exponent tried is the declared lower type when it exceeds alpha, otherwise
    ``alpha + 1e-3``. Raises HypothesisError with the failing node otherwise.
    """
    alpha0 = alpha + LOWER_TYPE_MARGIN
    if lam.lower_type is not None and lam.lower_type > alpha:
        alpha0 = lam.lower_type
    report = lower_type_all(lam, alpha0)
    if not report.holds:
        node = report.notes["growth_node"]
        radius = float(lam.space.radii[-1])
        if report.worst_witness[0] == node:
            radius = report.worst_witness[1]
        raise HypothesisError(
            f"lower_type_check failed at node {node}",
            {
                "node": node,
                "radius": radius,
                "alpha0": alpha0,
                "c1": report.best_constant,
                "growth": report.notes["growth"],
            },
        )
    return alpha0


def _safe_dist(space: QuasiMetricSpace, rows: np.ndarray) -> np.ndarray:
    d = np.array(space.dist[rows], dtype=float)
    d[np.arange(rows.size), rows] = 1.0
    return d


def _measure_rows(space, mu, rows, d):
    masses = ball_masses(space, mu, d, rows)
    needed = np.asarray(mu.weights)[None, :] > 0
    needed[np.arange(rows.size), rows] = False
    empty = (masses <= 0) & needed
    if empty.any():
        i, j = (int(v) for v in np.argwhere(empty)[0])
        msg = (
            f"ball measure vanishes at node {int(rows[i])}, radius {d[i, j]:.6g}; "
            "the kernel is undefined there"
        )
        raise PreconditionError(msg)
    return np.where(masses > 0, masses, 1.0)


def _kernel_rows(space, mu, ks: KernelSpec, rows: np.ndarray) -> np.ndarray:
    d = _safe_dist(space, rows)
    a = ks.alpha
    if ks.kind == "general":
        k = d**a / ks.lam.evaluate(d, rows)
    elif ks.kind == "dim-power":
        k = d ** (a - ks.Q)
    elif ks.kind == "one-minus":
        k = d ** (a - 1.0)
    elif ks.kind == "measure-power":
        k = _measure_rows(space, mu, rows, d) ** (a - 1.0)
    elif ks.kind == "measure-ratio":
        k = d**a / _measure_rows(space, mu, rows, d)
    else:
        k = d ** (a - ks.n_field[rows, None])
    k[np.arange(rows.size), rows] = 0.0
    return k * np.asarray(mu.weights)[None, :]


@lru_cache(maxsize=4)
@mem_profile(logger)
def kernel_matrix(
    space: QuasiMetricSpace, mu: DiscreteMeasure, ks: KernelSpec
) -> np.ndarray:
    """Weighted kernel ``A[x, y] = kernel(x, y) w(y)`` with a zero diagonal.

    The result is read-only and cached per (space, measure, kernel).
    """
    check_aligned(space, mu)
    blocks = ordered_map(
        lambda rows: _kernel_rows(space, mu, ks, rows), row_blocks(space.n)
    )
    matrix = np.vstack(blocks) if blocks else np.zeros((0, 0))
    matrix.flags.writeable = False
    logger.debug("assembled %s kernel on %s nodes", ks.kind, space.n)
    return matrix


def _power_profile(space: QuasiMetricSpace, ks: KernelSpec):
    """(beta, K, D) per node for kernels of the form ``d**beta / K``, else None."""
    n = space.n
    dim = space.dimension
    if ks.kind == "dim-power":
        D = np.full(n, dim if dim is not None else ks.Q)
        return np.full(n, ks.alpha - ks.Q), 1.0, D
    if ks.kind == "variable-dim":
        return ks.alpha - ks.n_field, 1.0, np.asarray(ks.n_field, dtype=float)
    if ks.kind == "general" and isinstance(ks.lam, Power):
        D = np.full(n, dim if dim is not None else ks.lam.n)
        return np.full(n, ks.alpha - ks.lam.n), ks.lam.K, D
    if ks.kind == "general" and isinstance(ks.lam, PowerField):
        field = np.asarray(ks.lam.n_field)
        return ks.alpha - field, ks.lam.K, field
    return None


def self_cell_term(
    space: QuasiMetricSpace, mu: DiscreteMeasure, ks: KernelSpec
) -> np.ndarray:
    """Own-cell contribution per unit f(x): ``w(x) D/(D+beta) rho**beta / K``.

    rho is the radius of the D-dimensional ball with the node's cell volume.
    """
    profile = _power_profile(space, ks)
    if profile is None:
        msg = f"self-cell correction needs a power kernel, got {ks.kind}"
        raise PreconditionError(msg)
    beta, K, D = profile
    volumes = np.asarray(space.volumes)
    omega = np.pi ** (D / 2.0) / gamma_fn(D / 2.0 + 1.0)
    term = np.zeros(space.n)
    pos = volumes > 0
    rho = (volumes[pos] / omega[pos]) ** (1.0 / D[pos])
    term[pos] = (
        np.asarray(mu.weights)[pos]
        * D[pos]
        / (D[pos] + beta[pos])
        * rho ** beta[pos]
        / K
    )
    return term


def potential(
    space: QuasiMetricSpace,
    mu: DiscreteMeasure,
    ks: KernelSpec,
    f: GridFunction | np.ndarray,
    self_cell: bool = False,
    threads: int | None = None,
) -> np.ndarray:
    """``(If)(x) = sum_{y != x} kernel(x, y) f(y) w(y)``.

    Args:
        f:
            values of shape (N,) or a family of shape (F, N)
        self_cell:
            add the own-cell quadrature term for power kernels

    Returns:
        ndarray with the shape of f
    """
    values = as_values(f)
    matrix = kernel_matrix(space, mu, ks)
    out = compensated_matvec(matrix, values.T, threads).T
    if self_cell:
        out = out + self_cell_term(space, mu, ks) * values
    return out


def hedberg_split(
    space: QuasiMetricSpace,
    mu: DiscreteMeasure,
    ks: KernelSpec,
    f: GridFunction | np.ndarray,
    x: Hashable,
    r: float,
) -> tuple[float, float]:
    """The potential at x split into the ball ``B(x, r)`` part and the rest."""
    i = space.node_index(x)
    row = kernel_matrix(space, mu, ks)[i] * as_values(f)
    inside = np.asarray(space.dist[i]) < r
    near = compensated_matvec(np.where(inside, row, 0.0)[None, :], np.ones(space.n))
    far = compensated_matvec(np.where(inside, 0.0, row)[None, :], np.ones(space.n))
    return float(near[0]), float(far[0])


def _maximal(
    space: QuasiMetricSpace,
    mu: DiscreteMeasure,
    f,
    inflate: float,
) -> np.ndarray:
    check_aligned(space, mu)
    values = np.atleast_2d(np.abs(as_values(f)))
    radii = space.radii
    weights = np.asarray(mu.weights)
    out = np.zeros(values.shape)

    def block(rows):
        num = space.counts(radii, rows)
        den = ball_masses(space, mu, inflate * radii, rows)
        result = np.zeros((values.shape[0], rows.size))
        order = space.order[rows]
        for k, v in enumerate(values):
            table = np.zeros((rows.size, space.n + 1))
            np.cumsum((v * weights)[order], axis=1, out=table[:, 1:])
            sums = np.take_along_axis(table, num, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                avg = np.where(den > 0, sums / den, 0.0)
            result[k] = avg.max(axis=1)
        return rows, result

    for rows, result in ordered_map(block, row_blocks(space.n)):
        out[:, rows] = result
    return out if np.ndim(as_values(f)) == 2 else out[0]


def maximal_standard(
    space: QuasiMetricSpace, mu: DiscreteMeasure, f: GridFunction | np.ndarray
) -> np.ndarray:
    """Hardy-Littlewood maximal function over canonical radii.

    Radii whose ball has zero measure are skipped.
    """
    return _maximal(space, mu, f, 1.0)


def maximal_modified(
    space: QuasiMetricSpace, mu: DiscreteMeasure, f: GridFunction | np.ndarray
) -> np.ndarray:
    """Maximal averages over ``B(x, r)`` normalized by ``mu(B(x, 3 k1 r))``."""
    return _maximal(space, mu, f, 3.0 * space.k1)


def omega(
    space: QuasiMetricSpace, mu: DiscreteMeasure, lam: DominatingFunction
) -> np.ndarray:
    """``Omega(x) = max_R mu(B(x, R)) / lam(x, R)`` over canonical radii."""
    check_aligned(space, mu)
    radii = space.radii

    def block(rows):
        ratio = ball_masses(space, mu, radii, rows) / lam.evaluate(radii, rows)
        return ratio.max(axis=1)

    parts = ordered_map(block, row_blocks(space.n))
    return np.concatenate(parts) if parts else np.zeros(0)


def maximal_comparison_constant(space: QuasiMetricSpace, mu: DiscreteMeasure) -> float:
    """``K2**ceil(log2(3 k1))``, with ``Mf <= C M~f`` for doubling measures."""
    k2 = estimate_doubling_constant(space, mu).best_constant
    return k2 ** math.ceil(math.log2(3.0 * space.k1))


def parse_kernel(
    text: str,
    space: QuasiMetricSpace,
    mu: DiscreteMeasure | None = None,
    lam: DominatingFunction | None = None,
    n_field: np.ndarray | None = None,
) -> KernelSpec:
    """Parse the kernel mini-language.

    ``kind:key=value,...`` with keys ``alpha`` (or ``gamma``) and ``Q``. The general
    kernel takes its lambda either from the lam argument or from ``lambda=<kind>``
    with ``lambda.<param>=<value>`` entries, e.g.
    ``general:alpha=0.5,lambda=power,lambda.K=2,lambda.n=1``.
    """
    kind, _, rest = text.partition(":")
    params: dict[str, str] = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            msg = f"kernel parameter {item!r} is not of the form key=value"
            raise PreconditionError(msg)
        params[key.strip()] = value.strip()
    order = params.pop("alpha", params.pop("gamma", None))
    if order is None:
        msg = f"kernel {text!r} needs alpha or gamma"
        raise PreconditionError(msg)
    lam_kind = params.pop("lambda", None)
    if lam_kind is not None:
        lam_spec: dict[str, Any] = {"kind": lam_kind}
        for key in [k for k in params if k.startswith("lambda.")]:
            lam_spec[key.removeprefix("lambda.")] = _number(params.pop(key))
        lam = build_lambda(space, lam_spec, mu)
    Q = params.pop("Q", None)
    if params:
        msg = f"unknown kernel parameters {sorted(params)}"
        raise PreconditionError(msg)
    return KernelSpec(
        kind=kind.strip(),
        alpha=float(order),
        Q=None if Q is None else float(Q),
        lam=lam,
        n_field=n_field,
    )


def _number(text: str) -> float | str:
    try:
        return float(text)
    except ValueError:
        return text


def kernel_from_spec(
    spec: Mapping[str, Any] | str,
    space: QuasiMetricSpace,
    mu: DiscreteMeasure | None = None,
    lam: DominatingFunction | None = None,
    n_field: np.ndarray | None = None,
) -> KernelSpec:
    """KernelSpec from the mini-language or a JSON mapping with the same keys."""
    if isinstance(spec, str):
        return parse_kernel(spec, space, mu, lam, n_field)
    spec = dict(spec)
    order = spec.get("alpha", spec.get("gamma"))
    if order is None:
        msg = "kernel spec needs alpha or gamma"
        raise PreconditionError(msg)
    if "lambda" in spec:
        lam = build_lambda(space, spec["lambda"], mu)
    return KernelSpec(
        kind=spec["kind"],
        alpha=float(order),
        Q=spec.get("Q"),
        lam=lam,
        n_field=n_field,
        certify=spec.get("certify", True),
    )
