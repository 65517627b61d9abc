"""Run configuration: JSON documents describing an experiment and its levels."""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from udpot.base import PreconditionError, jsonable
from udpot.dominating import build_lambda
from udpot.glue import (
    build_glued_from_spec,
    glued_measure,
    piecewise_lambda,
    simplified_lambda,
)
from udpot.lebesgue import ExponentFunction, hls_exponent
from udpot.measure import build_measure
from udpot.operators import KernelSpec, kernel_from_spec
from udpot.space import build_space
from udpot.verify import Level, function_family

logger = logging.getLogger("udpot.config")

LEVEL_KEYS = {
    "grid1d": "n",
    "grid2d": "n",
    "cantor": "generation",
    "glued": "cells",
}
GLUED_LAMBDA_KINDS = ("piecewise", "simplified")

_JSON_KEYS = {"lambda": "lam"}


def read_json(path: str | Path) -> Any:
    """Parse a JSON file, reporting decoder errors with line and column."""
    path = Path(path).resolve()
    try:
        text = path.read_text()
    except OSError as e:
        msg = f"cannot read {path}: {e.strerror}"
        raise PreconditionError(msg) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"{path}:{e.lineno}:{e.colno}: malformed JSON, {e.msg}"
        raise PreconditionError(msg) from e


def level_spec(spec: Mapping[str, Any], level: int | None) -> dict[str, Any]:
    """The space spec with its resolution key replaced by level."""
    spec = dict(spec)
    if level is None:
        return spec
    kind = spec.get("kind")
    if kind not in LEVEL_KEYS:
        msg = f"space kind {kind!r} has no refinement parameter"
        raise PreconditionError(msg)
    spec[LEVEL_KEYS[kind]] = int(level)
    return spec


def build_level(
    space_spec: Mapping[str, Any],
    measure_spec: Mapping[str, Any] | None = None,
    lambda_spec: Mapping[str, Any] | None = None,
) -> Level:
    """Build space, measure and dominating function for one level.

    Glued spaces accept the measure kind ``glued`` and the dominating function kinds
    ``piecewise`` and ``simplified``, all derived from the fitted glue constants.
    """
    measure_spec = dict(measure_spec or {"kind": "quadrature"})
    tc = gm = None
    if space_spec.get("kind") == "glued":
        tc = build_glued_from_spec(space_spec)
        space = tc.base
    else:
        space = build_space(space_spec)

    if measure_spec.get("kind") == "glued" or (
        lambda_spec and lambda_spec.get("kind") in GLUED_LAMBDA_KINDS
    ):
        if tc is None:
            msg = "glued measures and dominating functions need a glued space"
            raise PreconditionError(msg)
        gm = glued_measure(tc)

    if measure_spec.get("kind") == "glued":
        mu = gm.underlying
    else:
        mu = build_measure(space, measure_spec)

    lam = None
    if lambda_spec:
        kind = lambda_spec.get("kind")
        if kind == "piecewise":
            lam = piecewise_lambda(tc, gm)
        elif kind == "simplified":
            lam = simplified_lambda(tc, gm)
        else:
            lam = build_lambda(space, lambda_spec, mu)
    return Level(space=space, mu=mu, lam=lam, tc=tc)


def exponent_from_spec(spec: Any, level: Level) -> ExponentFunction:
    """Exponent from a number, a per-node list or ``"hls:p=..,alpha=.."``."""
    n = level.space.n
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return ExponentFunction.constant(float(spec), n)
    if isinstance(spec, list):
        values = np.asarray(spec, dtype=float)
        if values.size != n:
            msg = f"exponent has {values.size} values for {n} nodes"
            raise PreconditionError(msg)
        return ExponentFunction(values)
    if isinstance(spec, str) and spec.startswith("hls:"):
        params = {}
        for item in spec[4:].split(","):
            key, sep, value = item.partition("=")
            if not sep:
                msg = f"malformed exponent parameter {item!r} in {spec!r}"
                raise PreconditionError(msg)
            params[key.strip()] = float(value)
        try:
            return hls_exponent(params["p"], params["alpha"], level.dimension)
        except KeyError as e:
            msg = f"exponent {spec!r} is missing {e.args[0]!r}"
            raise PreconditionError(msg) from e
    msg = f"cannot interpret exponent spec {spec!r}"
    raise PreconditionError(msg)


def function_from_spec(spec: Any, level: Level, seed: int) -> np.ndarray:
    """Grid function from a constant, a per-node list or ``"family:K"``."""
    n = level.space.n
    if spec is None:
        return np.ones(n)
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return np.full(n, float(spec))
    if isinstance(spec, list):
        values = np.asarray(spec, dtype=float)
        if values.size != n:
            msg = f"function has {values.size} values for {n} nodes"
            raise PreconditionError(msg)
        return values
    if isinstance(spec, str) and spec.startswith("family:"):
        k = int(spec.partition(":")[2])
        family = function_family(level.space, seed, k + 1, dimension=level.dimension)
        return family[k]
    msg = f"cannot interpret function spec {spec!r}"
    raise PreconditionError(msg)


@dataclass
class RunConfig:
    """An experiment description loaded from JSON.

    Args:
        space:
            dict, space spec; ``levels`` substitute its resolution parameter
        measure:
            dict, measure spec
        lam:
            dict, optional, dominating function spec (``lambda`` in JSON)
        kernel:
            dict or str, optional, kernel spec for ``op apply``
        exponent:
            optional exponent spec for ``norm``
        function:
            optional grid function spec for ``op apply`` and ``norm``
        alpha, p, q:
            operator order and Lebesgue exponents for the verify harness
        levels:
            list[int], refinement levels; empty means the space spec as given
        seed:
            int, recorded verbatim in every report
        report, csv:
            output paths, resolved against the config file's directory
    """

    space: dict[str, Any]
    measure: dict[str, Any] = field(default_factory=lambda: {"kind": "quadrature"})
    lam: dict[str, Any] | None = None
    kernel: dict[str, Any] | str | None = None
    exponent: Any = None
    function: Any = None
    alpha: float | None = None
    p: float | None = None
    q: float | list[float] | None = None
    levels: list[int] = field(default_factory=list)
    seed: int = 0
    family_size: int = 50
    tau: float = 1.1
    self_cell: bool = False
    cluster_weights: list[float] = field(default_factory=lambda: [1.0, 10.0, 100.0])
    cluster_node: int | None = None
    report: Path | None = None
    csv: Path | None = None
    source: Path | None = None

    def __post_init__(self):
        if not isinstance(self.space, Mapping) or "kind" not in self.space:
            msg = "config needs a space spec with a kind"
            raise PreconditionError(msg)
        sizes = list(self.levels)
        if any(b <= a for a, b in zip(sizes[:-1], sizes[1:])):
            msg = f"levels must be strictly increasing, got {sizes}"
            raise PreconditionError(msg)
        if not isinstance(self.seed, int):
            msg = f"seed must be an integer, got {self.seed!r}"
            raise PreconditionError(msg)

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Any], base_dir: str | Path | None = None
    ) -> RunConfig:
        if not isinstance(data, Mapping):
            msg = f"config must be a JSON object, got {type(data).__name__}"
            raise PreconditionError(msg)
        known = {f.name for f in fields(cls)} - {"source"}
        kwargs = {}
        for key, value in data.items():
            name = _JSON_KEYS.get(key, key)
            if name not in known:
                msg = f"unknown config key {key!r}"
                raise PreconditionError(msg)
            kwargs[name] = value
        config = cls(**kwargs)
        config.resolve(base_dir)
        return config

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        path = Path(path).resolve()
        config = cls.from_dict(read_json(path), path.parent)
        config.source = path
        return config

    def resolve(self, base_dir: str | Path | None = None) -> None:
        """Make the output paths absolute."""
        base = Path(base_dir or Path.cwd()).resolve()
        for name in ("report", "csv"):
            value = getattr(self, name)
            if value is not None:
                path = Path(value)
                setattr(self, name, (path if path.is_absolute() else base / path))

    def level_specs(self) -> list[dict[str, Any]]:
        if not self.levels:
            return [dict(self.space)]
        return [level_spec(self.space, level) for level in self.levels]

    def build_levels(self) -> list[Level]:
        levels = []
        for spec in self.level_specs():
            levels.append(build_level(spec, self.measure, self.lam))
            logger.info("built level with %s nodes", levels[-1].space.n)
        return levels

    def kernel_spec(self, level: Level) -> KernelSpec:
        spec = self.kernel
        if spec is None:
            if self.alpha is None or level.lam is None:
                msg = "op apply needs a kernel spec, or alpha with a lambda"
                raise PreconditionError(msg)
            spec = {"kind": "general", "alpha": self.alpha}
        n_field = level.tc.n_field if level.tc is not None else None
        return kernel_from_spec(spec, level.space, level.mu, level.lam, n_field)

    def require(self, *names: str) -> None:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            msg = f"config is missing {', '.join(missing)}"
            raise PreconditionError(msg)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            key = next((k for k, v in _JSON_KEYS.items() if v == f.name), f.name)
            out[key] = jsonable(getattr(self, f.name))
        return out
