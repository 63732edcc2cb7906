"""Census CSV ingestion, indicator derivation and result serialization."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GeoJSONError, SchemaError
from .preprocess import MissingPolicy, Polarity, RawFeatureTable, apply_missing_policy
from .reference import SolverReport, principal_eigenvector
from .risk import RiskRecord
from .symmat import DensityMatrix

log = logging.getLogger(__name__)

RISK_CSV_HEADER = ("zip", "exposure_score", "vulnerability_score", "risk_index")


@dataclass(frozen=True)
class CensusRow:
    """One zip code's raw census counts; missing cells are NaN."""

    zip: str
    total_population: float
    total_area: float
    housing_units: float
    black_pop: float
    hispanic_pop: float
    american_indian_pop: float
    native_hawaiian_pop: float
    over65_pop: float
    under18_pop: float
    rental_units: float


CENSUS_FIELDS = tuple(f.name for f in fields(CensusRow))
COUNT_FIELDS = CENSUS_FIELDS[1:]
SUBGROUP_FIELDS = ("black_pop", "hispanic_pop", "american_indian_pop", "native_hawaiian_pop",
                   "over65_pop", "under18_pop")
DEFAULT_SCHEMA = {name: name for name in CENSUS_FIELDS}


@dataclass(frozen=True)
class IndicatorSpec:
    """A derived variable: sum of numerator fields over a denominator field."""

    name: str
    indicator: str
    numerators: tuple[str, ...]
    denominator: str

    def __post_init__(self):
        if self.indicator not in ("exposure", "vulnerability"):
            raise SchemaError(f"{self.name}: indicator must be exposure or vulnerability")
        for f in (*self.numerators, self.denominator):
            if f not in COUNT_FIELDS:
                raise SchemaError(f"{self.name}: unknown census field {f!r}")
        if not self.numerators:
            raise SchemaError(f"{self.name}: at least one numerator field is required")

    @property
    def formula(self) -> str:
        return f"({' + '.join(self.numerators)}) / {self.denominator}"

    @property
    def is_rate(self) -> bool:
        """Rates are proportions and should not exceed one; densities may."""
        return self.denominator != "total_area"

    def evaluate(self, row: CensusRow) -> float:
        num = sum(getattr(row, f) for f in self.numerators)
        return num / getattr(row, self.denominator)


EXPOSURE_SPECS = (
    IndicatorSpec("population_density", "exposure", ("total_population",), "total_area"),
    IndicatorSpec("housing_density", "exposure", ("housing_units",), "total_area"),
)
# housing "ratio" reading: housing units per resident instead of per area
EXPOSURE_SPECS_PER_CAPITA = (
    EXPOSURE_SPECS[0],
    IndicatorSpec("housing_density", "exposure", ("housing_units",), "total_population"),
)
VULNERABILITY_SPECS = (
    IndicatorSpec("ethnic_minority_rate", "vulnerability",
                  ("black_pop", "hispanic_pop", "american_indian_pop", "native_hawaiian_pop"),
                  "total_population"),
    IndicatorSpec("age_extremes_rate", "vulnerability", ("over65_pop", "under18_pop"), "total_population"),
    IndicatorSpec("rental_rate", "vulnerability", ("rental_units",), "housing_units"),
)
# one dimension per census variable, unaggregated
VULNERABILITY_SPECS_TABLE1 = tuple(
    IndicatorSpec(f"{f.removesuffix('_pop')}_rate", "vulnerability", (f,), "total_population")
    for f in SUBGROUP_FIELDS
) + (VULNERABILITY_SPECS[2],)


def exposure_specs(housing_density: str = "per_area") -> tuple[IndicatorSpec, ...]:
    if housing_density == "per_area":
        return EXPOSURE_SPECS
    if housing_density == "per_capita":
        return EXPOSURE_SPECS_PER_CAPITA
    raise SchemaError(f"housing_density must be per_area or per_capita, got {housing_density!r}")


def vulnerability_specs(groups="aggregated") -> tuple[IndicatorSpec, ...]:
    """Resolve a vulnerability aggregation: a preset name or ``{name: {numerator, denominator}}``."""
    if groups == "aggregated":
        return VULNERABILITY_SPECS
    if groups == "table1":
        return VULNERABILITY_SPECS_TABLE1
    if isinstance(groups, Mapping):
        specs = []
        for name, body in groups.items():
            if not isinstance(body, Mapping) or set(body) != {"numerator", "denominator"}:
                raise SchemaError(f"vulnerability group {name!r} needs exactly 'numerator' and 'denominator'")
            num = body["numerator"]
            num = (num,) if isinstance(num, str) else tuple(num)
            specs.append(IndicatorSpec(name, "vulnerability", num, body["denominator"]))
        if not specs:
            raise SchemaError("vulnerability groups must not be empty")
        return tuple(specs)
    raise SchemaError(f"unknown vulnerability grouping {groups!r}")


def resolve_schema(schema: Mapping[str, str] | None) -> dict[str, str]:
    resolved = dict(DEFAULT_SCHEMA)
    for logical, header in (schema or {}).items():
        if logical not in DEFAULT_SCHEMA:
            raise SchemaError(f"schema maps unknown field {logical!r}; known fields: {list(CENSUS_FIELDS)}")
        resolved[logical] = header
    return resolved


def parse_census_csv(path, schema: Mapping[str, str] | None = None) -> tuple[list[CensusRow], list[tuple[str, str]]]:
    """Read a census extract into CensusRows.

    Empty cells become NaN for the missing-value policy to handle later;
    negative counts are treated as missing. Rows with a non-positive area are
    dropped.

    Returns:
        ``(rows, dropped)`` where ``dropped`` lists ``(zip, reason)`` pairs.

    Raises:
        SchemaError: unreadable file, missing column, duplicate zip or a
            non-numeric cell (reported with line number and column).
    """
    path = Path(path)
    schema = resolve_schema(schema)
    try:
        handle = path.open(newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise SchemaError(f"cannot read census file {path}: {exc}") from exc

    rows: list[CensusRow] = []
    dropped: list[tuple[str, str]] = []
    seen: set[str] = set()
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [f"{logical} (column {col!r})" for logical, col in schema.items() if col not in header]
        if missing:
            raise SchemaError(f"{path}: header is missing required columns: {', '.join(missing)}")
        for record in reader:
            line = reader.line_num
            zip_code = (record[schema["zip"]] or "").strip()
            if not zip_code:
                raise SchemaError(f"{path}:{line}: empty zip in column {schema['zip']!r}")
            if zip_code in seen:
                raise SchemaError(f"{path}:{line}: duplicate zip {zip_code}")
            seen.add(zip_code)
            values = {}
            for logical in COUNT_FIELDS:
                col = schema[logical]
                values[logical] = _parse_count(record.get(col), path, line, col, zip_code)
            row = CensusRow(zip=zip_code, **values)
            if not row.total_area > 0:
                log.warning("dropping zip %s: total_area is %s", zip_code, row.total_area)
                dropped.append((zip_code, "non-positive total_area"))
                continue
            for f in SUBGROUP_FIELDS:
                if getattr(row, f) > row.total_population:
                    log.warning("zip %s: %s (%g) exceeds total_population (%g)",
                                zip_code, f, getattr(row, f), row.total_population)
            rows.append(row)
    if dropped:
        log.warning("%d row(s) dropped while reading %s", len(dropped), path)
    return rows, dropped


def _parse_count(cell, path, line, col, zip_code) -> float:
    text = (cell or "").strip().replace(",", "")
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"{path}:{line}: column {col!r}: non-numeric value {cell!r}") from None
    if not math.isfinite(value):
        raise SchemaError(f"{path}:{line}: column {col!r}: non-finite value {cell!r}")
    if value < 0:
        log.warning("zip %s: negative %s (%g) treated as missing", zip_code, col, value)
        return math.nan
    return value


def _derive(row: CensusRow, specs: Sequence[IndicatorSpec]) -> np.ndarray:
    out = np.array([spec.evaluate(row) for spec in specs], dtype=float)
    for spec, val in zip(specs, out):
        if spec.is_rate and val > 1.0:
            log.warning("zip %s: %s = %.6g exceeds 1", row.zip, spec.name, val)
    return out


def derive_exposure(row: CensusRow, specs: Sequence[IndicatorSpec] = EXPOSURE_SPECS) -> np.ndarray:
    """Population density and housing density (per unit area by default)."""
    return _derive(row, specs)


def derive_vulnerability(row: CensusRow, specs: Sequence[IndicatorSpec] = VULNERABILITY_SPECS) -> np.ndarray:
    """Minority rate, age-extremes rate and rental rate by default."""
    return _derive(row, specs)


def derive_feature_tables(
    rows: Iterable[CensusRow],
    exposure: Sequence[IndicatorSpec] = EXPOSURE_SPECS,
    vulnerability: Sequence[IndicatorSpec] = VULNERABILITY_SPECS,
    missing: MissingPolicy | str = MissingPolicy.REJECT,
    polarity: Mapping[str, Polarity | str] | None = None,
) -> tuple[RawFeatureTable, RawFeatureTable, list[tuple[str, str]]]:
    """Derive aligned exposure and vulnerability tables from census rows.

    Rows whose denominators are zero are dropped; NaNs left by missing cells
    are resolved by ``missing`` across both tables at once so the tables stay
    aligned by zip.
    """
    specs = (*exposure, *vulnerability)
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate indicator names in {names}")
    polarity = dict(polarity or {})
    unknown = set(polarity) - set(names)
    if unknown:
        raise SchemaError(f"polarity override for unknown variables {sorted(unknown)}; known: {names}")

    ids, data, dropped = [], [], []
    for row in rows:
        zero_den = [s.denominator for s in specs if getattr(row, s.denominator) == 0]
        if zero_den:
            reason = f"zero {', '.join(sorted(set(zero_den)))}"
            log.warning("dropping zip %s: %s", row.zip, reason)
            dropped.append((row.zip, reason))
            continue
        ids.append(row.zip)
        data.append(np.concatenate([derive_exposure(row, exposure), derive_vulnerability(row, vulnerability)]))
    matrix = np.array(data, dtype=float).reshape(len(ids), len(specs))
    columns = {name: matrix[:, i] for i, name in enumerate(names)}

    before = set(ids)
    ids, columns = apply_missing_policy(ids, columns, missing)
    dropped.extend((z, "missing value") for z in sorted(before - set(ids)))

    def table(group):
        cols = {s.name: columns[s.name] for s in group}
        pol = {k: v for k, v in polarity.items() if k in cols}
        return RawFeatureTable(list(ids), cols, pol)

    return table(exposure), table(vulnerability), dropped


def export_risk_csv(records: Sequence[RiskRecord], path) -> None:
    """Write ``zip,exposure_score,vulnerability_score,risk_index`` with 8 decimals, LF endings."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RISK_CSV_HEADER)
        for r in records:
            writer.writerow([r.locality_id, f"{r.exposure_score:.8f}",
                             f"{r.vulnerability_score:.8f}", f"{r.risk_index:.8f}"])


def read_risk_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RISK_CSV_HEADER:
            raise SchemaError(f"{path}: unexpected risk CSV header {reader.fieldnames}")
        return [{"zip": row["zip"], **{k: float(row[k]) for k in RISK_CSV_HEADER[1:]}} for row in reader]


def _matrix_summary(m: DensityMatrix) -> dict:
    d = m.eig()
    return {
        "eigenvalues": [float(x) for x in d.eigenvalues],
        "principal_eigenvector": [float(x) for x in principal_eigenvector(m)],
        "trace": m.trace,
    }


def _report_summary(r: SolverReport) -> dict:
    return {
        "iterations": r.iterations,
        "final_gap": r.final_gap,
        "objective": r.objective,
        "converged": r.converged,
    }


def export_reference_json(E: DensityMatrix, V: DensityMatrix, reports: tuple[SolverReport, SolverReport],
                          path, clusters: Mapping[str, Mapping] | None = None) -> None:
    """Serialize both reference matrices with their spectra and solver diagnostics."""
    payload = {
        "E_hat": E.data.tolist(),
        "V_hat": V.data.tolist(),
        "eigen": {"E_hat": _matrix_summary(E), "V_hat": _matrix_summary(V)},
        "solver": {"E_hat": _report_summary(reports[0]), "V_hat": _report_summary(reports[1])},
    }
    if clusters:
        payload["clusters"] = {k: dict(v) for k, v in clusters.items()}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_reference_json(path) -> tuple[DensityMatrix, DensityMatrix]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return DensityMatrix(payload["E_hat"]), DensityMatrix(payload["V_hat"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SchemaError(f"cannot load reference matrices from {path}: {exc}") from exc


@dataclass(frozen=True)
class JoinReport:
    matched: int
    unmatched_records: list[str]
    unmatched_features: list[str]


def export_geojson_join(records: Sequence[RiskRecord], boundaries, key_property: str, path) -> JoinReport:
    """Copy a boundary FeatureCollection, adding ``risk_index`` to features whose key matches a record."""
    try:
        collection = json.loads(Path(boundaries).read_text(encoding="utf-8"))
    except OSError as exc:
        raise GeoJSONError(f"cannot read boundaries {boundaries}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise GeoJSONError(f"{boundaries}: invalid JSON: {exc}") from exc
    if not isinstance(collection, dict) or collection.get("type") != "FeatureCollection" \
            or not isinstance(collection.get("features"), list):
        raise GeoJSONError(f"{boundaries}: expected a GeoJSON FeatureCollection")

    by_zip = {r.locality_id: r for r in records}
    hit: set[str] = set()
    unmatched_features = []
    for i, feature in enumerate(collection["features"]):
        if not isinstance(feature, dict) or feature.get("type") != "Feature":
            raise GeoJSONError(f"{boundaries}: features[{i}] is not a Feature")
        props = feature.get("properties")
        if props is None:
            props = feature["properties"] = {}
        if not isinstance(props, dict):
            raise GeoJSONError(f"{boundaries}: features[{i}].properties is not an object")
        key = props.get(key_property)
        key = None if key is None else str(key)
        if key in by_zip:
            props["risk_index"] = by_zip[key].risk_index
            hit.add(key)
        else:
            unmatched_features.append(key if key is not None else f"features[{i}]")
    unmatched_records = [r.locality_id for r in records if r.locality_id not in hit]
    Path(path).write_text(json.dumps(collection) + "\n", encoding="utf-8")
    if unmatched_records:
        log.warning("%d record(s) without a boundary feature", len(unmatched_records))
    if unmatched_features:
        log.warning("%d boundary feature(s) without a risk record", len(unmatched_features))
    return JoinReport(len(hit), unmatched_records, unmatched_features)
