"""The five pipeline stages, wired together.

1. preprocess census features into unit vectors,
2. build heuristic vectors,
3. select the right-tail clusters,
4. estimate the reference density matrices,
5. score every locality.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ingest
from .config import PipelineConfig
from .histograms import export_histograms
from .preprocess import FeatureVector, build_feature_vectors
from .reference import (
    SimilaritySet,
    SolverReport,
    SolverWarning,
    TailCluster,
    aggregate_fidelity,
    estimate_reference,
    heuristic_vector,
    reference_oracle,
    similarity_set,
    tail_cluster,
)
from .risk import RiskRecord, score_all
from .symmat import DensityMatrix

log = logging.getLogger(__name__)

RISK_CSV = "risk_indices.csv"
REFERENCE_JSON = "references.json"
GEOJSON_OUT = "risk_zips.geojson"
ORACLE_SLACK = 1e-4


@dataclass
class Features:
    ids: list[str]
    exposure: list[FeatureVector]
    vulnerability: list[FeatureVector]
    exposure_names: list[str]
    vulnerability_names: list[str]
    raw: dict[str, np.ndarray]
    dropped: list[tuple[str, str]]


@dataclass
class References:
    exposure_set: SimilaritySet
    vulnerability_set: SimilaritySet
    exposure_cluster: TailCluster
    vulnerability_cluster: TailCluster
    exposure_report: SolverReport
    vulnerability_report: SolverReport
    oracle: dict | None = None

    @property
    def E(self) -> DensityMatrix:
        return self.exposure_report.estimate

    @property
    def V(self) -> DensityMatrix:
        return self.vulnerability_report.estimate


@dataclass
class PipelineResult:
    features: Features
    records: list[RiskRecord]
    references: References | None
    artifacts: list[Path] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def load_features(cfg: PipelineConfig) -> Features:
    rows, dropped = ingest.parse_census_csv(cfg.input, cfg.schema)
    exp_specs = ingest.exposure_specs(cfg.housing_density)
    vul_specs = ingest.vulnerability_specs(cfg.vulnerability_groups)
    exp_table, vul_table, more = ingest.derive_feature_tables(
        rows, exp_specs, vul_specs, missing=cfg.missing_policy, polarity=cfg.polarity
    )
    exp_names = [s.name for s in exp_specs]
    vul_names = [s.name for s in vul_specs]
    if not exp_table.locality_ids:
        raise ValueError(f"no usable localities in {cfg.input}")
    log.info("loaded %d localities from %s (area unit %s)", len(exp_table.locality_ids), cfg.input, cfg.area_unit)
    return Features(
        ids=list(exp_table.locality_ids),
        exposure=build_feature_vectors(exp_table, exp_names),
        vulnerability=build_feature_vectors(vul_table, vul_names),
        exposure_names=exp_names,
        vulnerability_names=vul_names,
        raw={**exp_table.columns, **vul_table.columns},
        dropped=dropped + more,
    )


def _solve(cluster: TailCluster, cfg: PipelineConfig, label: str) -> SolverReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SolverWarning)
        report = estimate_reference(cluster, cfg.solver)
    if not report.converged:
        log.warning("%s reference: no convergence after %d iterations (gap %.3e)",
                    label, report.iterations, report.final_gap)
    return report


def estimate_references(features: Features, cfg: PipelineConfig) -> References:
    e_set = similarity_set(features.exposure, heuristic_vector(len(features.exposure_names)))
    v_set = similarity_set(features.vulnerability, heuristic_vector(len(features.vulnerability_names)))
    e_cluster = tail_cluster(e_set, cfg.tail_exposure, cfg.tail_inclusive)
    v_cluster = tail_cluster(v_set, cfg.tail_vulnerability, cfg.tail_inclusive)
    refs = References(e_set, v_set, e_cluster, v_cluster,
                      _solve(e_cluster, cfg, "exposure"), _solve(v_cluster, cfg, "vulnerability"))
    if cfg.run_oracle:
        refs.oracle = {}
        for label, cluster, report in (("E_hat", e_cluster, refs.exposure_report),
                                       ("V_hat", v_cluster, refs.vulnerability_report)):
            if cluster.dim > 3:
                log.warning("oracle skipped for %s: dimension %d > 3", label, cluster.dim)
                continue
            # the 3-d rotation grid grows like step**-3; cap its resolution
            step = cfg.oracle_step if cluster.dim <= 2 else max(cfg.oracle_step, 0.1)
            oracle_obj = aggregate_fidelity(cluster.members, reference_oracle(cluster, step))
            refs.oracle[label] = {"grid_step": step, "oracle_objective": oracle_obj,
                                  "solver_objective": report.objective,
                                  "passed": report.objective >= oracle_obj - ORACLE_SLACK}
    return refs


def _cluster_meta(cluster: TailCluster) -> dict:
    return {"size": len(cluster.members), "threshold": cluster.threshold,
            "rule": cluster.rule.value, "inclusive": cluster.inclusive}


def write_references(refs: References, path: Path) -> Path:
    ingest.export_reference_json(
        refs.E, refs.V, (refs.exposure_report, refs.vulnerability_report), path,
        clusters={"E_hat": _cluster_meta(refs.exposure_cluster), "V_hat": _cluster_meta(refs.vulnerability_cluster)},
    )
    return path


def _check_records(features: Features, records: list[RiskRecord]) -> list[str]:
    failures = []
    for e, v, r in zip(features.exposure, features.vulnerability, records):
        if not (0.0 <= r.risk_index <= 1.0):
            failures.append(f"{r.locality_id}: risk index {r.risk_index} outside [0, 1]")
        if (e.is_zero or v.is_zero) and r.risk_index != 0.0:
            failures.append(f"{r.locality_id}: zero feature vector but risk index {r.risk_index}")
    return failures


def write_scores(features: Features, E: DensityMatrix, V: DensityMatrix, cfg: PipelineConfig,
                 result: PipelineResult) -> None:
    result.records = score_all(features.exposure, features.vulnerability, E, V, verify=cfg.verify_fidelity)
    result.failures.extend(_check_records(features, result.records))
    csv_path = cfg.out_dir / RISK_CSV
    ingest.export_risk_csv(result.records, csv_path)
    result.artifacts.append(csv_path)
    if cfg.geojson is not None:
        geo_path = cfg.out_dir / GEOJSON_OUT
        report = ingest.export_geojson_join(result.records, cfg.geojson, cfg.geojson_key, geo_path)
        log.info("geojson join: %d matched, %d records and %d features unmatched",
                 report.matched, len(report.unmatched_records), len(report.unmatched_features))
        result.artifacts.append(geo_path)


def write_histograms(features: Features, refs: References, cfg: PipelineConfig) -> list[Path]:
    columns = dict(features.raw)
    markers = {}
    for label, s in (("exposure_similarity", refs.exposure_set), ("vulnerability_similarity", refs.vulnerability_set)):
        vals = s.values
        columns[label] = vals
        std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        markers[label] = {"mean": float(np.mean(vals)), "mean+std": float(np.mean(vals)) + std}
    return export_histograms(columns, cfg.out_dir / "histograms", markers)


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Full run: features, references, scores and every requested artifact."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    features = load_features(cfg)
    refs = estimate_references(features, cfg)
    result = PipelineResult(features, [], refs)
    result.artifacts.append(write_references(refs, cfg.out_dir / REFERENCE_JSON))
    if refs.oracle:
        for label, info in refs.oracle.items():
            if not info["passed"]:
                result.failures.append(f"{label}: solver objective {info['solver_objective']:.10f} below "
                                       f"oracle objective {info['oracle_objective']:.10f} - {ORACLE_SLACK:g}")
    write_scores(features, refs.E, refs.V, cfg, result)
    if cfg.emit_histograms:
        result.artifacts.extend(write_histograms(features, refs, cfg))
    return result


def summary(result: PipelineResult) -> str:
    lines = [f"localities: {len(result.features.ids)} (dropped {len(result.features.dropped)})"]
    refs = result.references
    if refs is not None:
        for label, cluster, report in (("exposure", refs.exposure_cluster, refs.exposure_report),
                                       ("vulnerability", refs.vulnerability_cluster, refs.vulnerability_report)):
            lines.append(
                f"{label} cluster: {len(cluster.members)} members ({cluster.rule.value} > {cluster.threshold:.6f}); "
                f"solver {report.iterations} iterations, gap {report.final_gap:.3e}, "
                f"objective {report.objective:.8f}{'' if report.converged else ' [NOT CONVERGED]'}"
            )
        for label, info in (refs.oracle or {}).items():
            verdict = "ok" if info["passed"] else "FAILED"
            lines.append(f"oracle {label}: solver {info['solver_objective']:.8f} >= "
                         f"oracle {info['oracle_objective']:.8f} - {ORACLE_SLACK:g} (step {info['grid_step']}): {verdict}")
    if result.records:
        idx = np.array([r.risk_index for r in result.records])
        lines.append(f"risk index: min {idx.min():.6f}  max {idx.max():.6f}  mean {idx.mean():.6f}")
    for f in result.failures:
        lines.append(f"CHECK FAILED: {f}")
    return "\n".join(lines)


def feature_rows(ids, vectors: list[FeatureVector], s: SimilaritySet | None):
    for i, (z, v) in enumerate(zip(ids, vectors)):
        sim = s.entries[i].similarity if s is not None else math.nan
        yield [z, *(f"{x:.8f}" for x in v.components), v.norm_class.value, f"{sim:.8f}"]
