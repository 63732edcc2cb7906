"""Turn raw indicator columns into non-negative, unit-norm feature vectors.

Order of operations: orient each column so larger means riskier, min-max
scale it over the whole dataset, assemble per-locality vectors, then divide
each vector by its l2 norm. All-zero vectors stay zero.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import SchemaError

log = logging.getLogger(__name__)

NORM_TOL = 1e-9


class Polarity(str, enum.Enum):
    HIGHER_IS_RISKIER = "higher"
    LOWER_IS_RISKIER = "lower"


class NormClass(str, enum.Enum):
    UNIT = "unit"
    ZERO = "zero"


class MissingPolicy(str, enum.Enum):
    REJECT = "reject"
    ZERO = "zero"


@dataclass(frozen=True, eq=False)
class FeatureVector:
    locality_id: str
    components: np.ndarray
    norm_class: NormClass

    def __post_init__(self):
        c = np.array(self.components, dtype=float)
        if c.ndim != 1:
            raise ValueError("feature vector must be one-dimensional")
        if np.any(c < 0):
            raise ValueError(f"{self.locality_id}: negative component in feature vector")
        norm = float(np.linalg.norm(c))
        if self.norm_class is NormClass.ZERO and norm != 0.0:
            raise ValueError(f"{self.locality_id}: zero-class vector has norm {norm}")
        if self.norm_class is NormClass.UNIT and abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"{self.locality_id}: unit-class vector has norm {norm}")
        c.setflags(write=False)
        object.__setattr__(self, "components", c)

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    @property
    def is_zero(self) -> bool:
        return self.norm_class is NormClass.ZERO


@dataclass
class RawFeatureTable:
    """Per-locality raw indicator values, one named column per variable."""

    locality_ids: list[str]
    columns: dict[str, np.ndarray]
    polarity: dict[str, Polarity] = field(default_factory=dict)

    def __post_init__(self):
        self.locality_ids = [str(z) for z in self.locality_ids]
        n = len(self.locality_ids)
        cols = {}
        for name, values in self.columns.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (n,):
                raise SchemaError(f"column {name!r} has {arr.size} values for {n} localities")
            if np.any(np.isnan(arr)):
                bad = [self.locality_ids[i] for i in np.flatnonzero(np.isnan(arr))]
                raise SchemaError(f"column {name!r} has missing values for localities {bad}")
            cols[name] = arr
        self.columns = cols
        self.polarity = {k: Polarity(v) for k, v in self.polarity.items()}
        unknown = set(self.polarity) - set(cols)
        if unknown:
            raise SchemaError(f"polarity given for unknown columns {sorted(unknown)}")

    def polarity_of(self, name: str) -> Polarity:
        return self.polarity.get(name, Polarity.HIGHER_IS_RISKIER)


def apply_missing_policy(
    locality_ids: Sequence[str],
    columns: Mapping[str, Sequence[float]],
    policy: MissingPolicy | str = MissingPolicy.REJECT,
) -> tuple[list[str], dict[str, np.ndarray]]:
    """Resolve NaNs: drop whole rows (``reject``) or substitute the column minimum (``zero``)."""
    policy = MissingPolicy(policy)
    ids = [str(z) for z in locality_ids]
    cols = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
    if not cols:
        return ids, cols
    missing = np.zeros(len(ids), dtype=bool)
    for arr in cols.values():
        missing |= np.isnan(arr)
    if not missing.any():
        return ids, cols

    if policy is MissingPolicy.REJECT:
        for i in np.flatnonzero(missing):
            log.warning("dropping locality %s: missing value", ids[i])
        keep = ~missing
        return [z for z, k in zip(ids, keep) if k], {k: v[keep] for k, v in cols.items()}

    out = {}
    for name, arr in cols.items():
        holes = np.isnan(arr)
        if holes.any():
            if holes.all():
                raise SchemaError(f"column {name!r} has no values to impute from")
            fill = float(np.nanmin(arr))
            for i in np.flatnonzero(holes):
                log.warning("locality %s: imputing %s with column minimum %g", ids[i], name, fill)
            arr = np.where(holes, fill, arr)
        out[name] = arr
    return ids, out


def orient(column, polarity: Polarity | str = Polarity.HIGHER_IS_RISKIER) -> np.ndarray:
    """Negate a column whose low values mean high risk; min-max then shifts it back up."""
    arr = np.asarray(column, dtype=float)
    if Polarity(polarity) is Polarity.LOWER_IS_RISKIER:
        return -arr
    return arr.copy()


def min_max(column, name: str = "column") -> np.ndarray:
    """Affine rescale onto [0, 1]. A constant column maps to zeros, with a warning."""
    arr = np.asarray(column, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot min-max scale an empty column")
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        log.warning("%s is constant (%g); scaling it to zeros", name, lo)
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def l2_normalize(v, locality_id: str = "") -> FeatureVector:
    arr = np.asarray(v, dtype=float)
    if np.any(arr < 0):
        raise ValueError(f"{locality_id or 'vector'}: negative component {arr.min()!r}; "
                         "orient and min-max scale before normalizing")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        return FeatureVector(locality_id, np.zeros_like(arr), NormClass.ZERO)
    return FeatureVector(locality_id, arr / norm, NormClass.UNIT)


def build_feature_vectors(table: RawFeatureTable, columns: Sequence[str]) -> list[FeatureVector]:
    """One FeatureVector per locality with components in ``columns`` order."""
    unknown = [c for c in columns if c not in table.columns]
    if unknown:
        raise SchemaError(f"unknown feature columns {unknown}; available: {sorted(table.columns)}")
    if not columns:
        raise SchemaError("at least one feature column is required")
    scaled = np.column_stack(
        [min_max(orient(table.columns[c], table.polarity_of(c)), name=c) for c in columns]
    )
    return [l2_normalize(row, z) for z, row in zip(table.locality_ids, scaled)]
