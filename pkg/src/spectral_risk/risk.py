"""Per-locality relative heat-risk indices.

The index is the product of an exposure score and a vulnerability score, each
the fidelity of the locality's rank-one state against a reference:

    R = F(e e^T, E) * F(v v^T, V) = sqrt(e^T E e) * sqrt(v^T V v).

With rank-one references ``E = e* e*^T`` this reduces to ``|<e, e*>| |<v, v*>|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, SchemaError
from .preprocess import FeatureVector
from .symmat import DensityMatrix, SymMatrix, fidelity, fidelity_pure, trace_inner

FIDELITY_AGREEMENT_TOL = 1e-9


@dataclass(frozen=True)
class RiskRecord:
    locality_id: str
    exposure_score: float
    vulnerability_score: float
    risk_index: float

    def __post_init__(self):
        for name in ("exposure_score", "vulnerability_score", "risk_index"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{self.locality_id}: {name} {val!r} outside [0, 1]")
        if abs(self.risk_index - self.exposure_score * self.vulnerability_score) > 1e-12:
            raise ValueError(f"{self.locality_id}: risk index is not the product of its scores")

    @classmethod
    def from_scores(cls, locality_id: str, exposure: float, vulnerability: float) -> "RiskRecord":
        exposure = min(max(exposure, 0.0), 1.0)
        vulnerability = min(max(vulnerability, 0.0), 1.0)
        return cls(locality_id, exposure, vulnerability, exposure * vulnerability)


def _vec(x) -> np.ndarray:
    return np.asarray(getattr(x, "components", x), dtype=float)


def _is_zero(x) -> bool:
    if isinstance(x, FeatureVector):
        return x.is_zero
    return not np.any(_vec(x))


def _dot(x, y) -> float:
    a, b = _vec(x), _vec(y)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def _id_of(e, v) -> str:
    return getattr(e, "locality_id", None) or getattr(v, "locality_id", "") or ""


def risk_rank_one(e, v, e_star, v_star) -> RiskRecord:
    """Product of absolute inner products against reference vectors."""
    exposure = 0.0 if _is_zero(e) else abs(_dot(e, e_star))
    vulnerability = 0.0 if _is_zero(v) else abs(_dot(v, v_star))
    return RiskRecord.from_scores(_id_of(e, v), exposure, vulnerability)


def risk_outer_product(e, v, e_star, v_star) -> RiskRecord:
    """Same index written with rank-one projectors and the trace inner product."""

    def score(x, ref):
        if _is_zero(x):
            return 0.0
        if _vec(x).shape != _vec(ref).shape:
            raise DimensionMismatchError(f"dimension mismatch: {_vec(x).shape[0]} vs {_vec(ref).shape[0]}")
        return math.sqrt(max(trace_inner(SymMatrix.outer(x), SymMatrix.outer(ref)), 0.0))

    return RiskRecord.from_scores(_id_of(e, v), score(e, e_star), score(v, v_star))


def risk_generalized(e, v, E: DensityMatrix, V: DensityMatrix, verify: bool = False) -> RiskRecord:
    """Index against (possibly higher-rank) reference density matrices.

    Zero vectors score 0 without touching the reference. With ``verify`` the
    closed form is recomputed through the full matrix square-root fidelity and
    the two must agree within 1e-9.
    """
    exposure = 0.0 if _is_zero(e) else fidelity_pure(e, E)
    vulnerability = 0.0 if _is_zero(v) else fidelity_pure(v, V)
    if verify:
        for x, ref, closed in ((e, E, exposure), (v, V, vulnerability)):
            if _is_zero(x):
                continue
            full = fidelity(DensityMatrix.pure(_vec(x)), ref)
            if abs(full - closed) > FIDELITY_AGREEMENT_TOL:
                raise ArithmeticError(
                    f"{_id_of(e, v)}: closed-form fidelity {closed!r} disagrees with "
                    f"matrix fidelity {full!r}"
                )
    return RiskRecord.from_scores(_id_of(e, v), exposure, vulnerability)


def score_all(
    exposure: Sequence[FeatureVector],
    vulnerability: Sequence[FeatureVector],
    E: DensityMatrix,
    V: DensityMatrix,
    verify: bool = False,
) -> list[RiskRecord]:
    """Score every locality; the two lists must be aligned by locality id."""
    if len(exposure) != len(vulnerability):
        raise SchemaError(
            f"{len(exposure)} exposure vectors but {len(vulnerability)} vulnerability vectors"
        )
    bad = [(e.locality_id, v.locality_id) for e, v in zip(exposure, vulnerability)
           if e.locality_id != v.locality_id]
    if bad:
        raise SchemaError(f"exposure and vulnerability ids are misaligned: {bad[:10]}"
                          + (f" (+{len(bad) - 10} more)" if len(bad) > 10 else ""))
    return [risk_generalized(e, v, E, V, verify=verify) for e, v in zip(exposure, vulnerability)]
