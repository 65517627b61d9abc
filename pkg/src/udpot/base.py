"""Base classes shared by spaces, measures, dominating functions and reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import uuid
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

import numpy as np

logger = logging.getLogger("udpot")


class UdpotError(Exception):
    """Base class for all errors raised by udpot."""


class PreconditionError(UdpotError, ValueError):
    """An input was rejected before any computation took place."""


class HypothesisError(UdpotError):
    """The hypotheses of a theorem are not met by the supplied data.

    Args:
        reason:
            str, machine-readable description of the failed check
        witness:
            Mapping, optional, the node/radius pair (or other data) exhibiting the
            failure
    """

    def __init__(self, reason: str, witness: Mapping[str, Any] | None = None):
        super().__init__(reason)
        self.reason = reason
        self.witness = dict(witness) if witness is not None else {}


@dataclass
class UniqueID:
    """Identity base for the immutable numerical objects of the package.

    Spaces, measures and dominating functions carry large arrays, so value equality is
    both expensive and ill-defined. Instances instead hash and compare on a uuid4
    assigned at construction, which lets them key caches.

    Args:
        name:
            str, optional, a human readable label, defaults to the uuid4 hex string
    """

    name: str = field(default="", kw_only=True)
    _id: str = field(init=False, repr=False)

    def __post_init__(self):
        self._id = uuid.uuid4().hex
        if not self.name:
            self.name = self._id

    def __hash__(self) -> int:
        return hash(self._id)

    def __eq__(self, other) -> bool:
        return hash(self) == hash(other)


def frozen_array(values, dtype=float) -> np.ndarray:
    """Return a read-only contiguous copy of values."""
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def jsonable(obj: Any) -> Any:
    """Convert report payloads into plain JSON-compatible python objects.

    Non-finite floats become the strings "inf", "-inf" and "nan" so that every artifact
    is strict JSON.
    """
    if is_dataclass(obj) and not isinstance(obj, type):
        to_dict = getattr(obj, "to_dict", None)
        if callable(to_dict):
            return jsonable(to_dict())
        return {f.name: jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (str, bool)) or obj is None:
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, Sequence):
        return [jsonable(v) for v in obj]
    msg = f"cannot serialize object of type {type(obj).__name__}"
    raise TypeError(msg)


def dumps(payload: Any) -> str:
    """Deterministic JSON text for a report payload."""
    return json.dumps(jsonable(payload), sort_keys=True, indent=2) + "\n"


def write_json(path: str | Path, payload: Any) -> Path:
    """Write a report payload as deterministic JSON and return the resolved path."""
    path = Path(path).resolve()
    path.write_text(dumps(payload))
    logger.getChild("io").debug("wrote %s", path)
    return path


def write_csv(path: str | Path, rows: Sequence[Mapping[str, Any]]) -> Path:
    """Write tabular report rows as CSV with a stable column order."""
    path = Path(path).resolve()
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with path.open("w", newline="") as fid:
        writer = csv.DictWriter(fid, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: jsonable(v) for k, v in row.items()})
    logger.getChild("io").debug("wrote %s", path)
    return path


@dataclass
class RegularityReport:
    """Outcome of a regularity scan over (node, radius) samples.

    Args:
        holds:
            bool, whether the checked inequality holds on every sample
        best_constant:
            float, the optimal constant found by the scan
        worst_witness:
            tuple[int, float], the (node, radius) sample attaining best_constant
        samples_checked:
            int, number of samples examined
        notes:
            dict, optional extra diagnostics
    """

    holds: bool
    best_constant: float
    worst_witness: tuple[int, float]
    samples_checked: int
    notes: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        node, radius = self.worst_witness
        return {
            "holds": bool(self.holds),
            "best_constant": float(self.best_constant),
            "witness": {"node": int(node), "radius": float(radius)},
            "samples": int(self.samples_checked),
            "notes": jsonable(self.notes),
        }
