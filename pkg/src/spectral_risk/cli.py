"""Command-line entry point: ``spectral-risk {run,preprocess,estimate,score}``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import traceback
from pathlib import Path

from . import ingest, pipeline
from .config import PipelineConfig, config_from_mapping, validate_config
from .errors import SpectralRiskError
from .reference import heuristic_vector, similarity_set

log = logging.getLogger("spectral_risk")

LOG_ENV = "SPECTRAL_RISK_LOG"

# flag dest -> config key; only flags actually given override the file
_OVERRIDES = ("input", "out_dir", "tail_exposure", "tail_vulnerability", "gap_tol", "max_iter",
              "verify_fidelity", "run_oracle", "emit_histograms", "geojson", "geojson_key", "impute", "quiet")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file")
    common.add_argument("--input", help="census CSV extract")
    common.add_argument("--out-dir", dest="out_dir", help="directory for output artifacts")
    common.add_argument("--tail-exposure", choices=("mean", "mean_std"))
    common.add_argument("--tail-vulnerability", choices=("mean", "mean_std"))
    common.add_argument("--gap-tol", type=float)
    common.add_argument("--max-iter", type=int)
    common.add_argument("--impute", choices=("none", "zero"),
                        help="missing values: drop the row (none) or use the column minimum (zero)")
    common.add_argument("--verify-fidelity", action="store_true", default=None,
                        help="recompute every score through the matrix square-root fidelity")
    common.add_argument("--run-oracle", action="store_true", default=None,
                        help="check the solver against the brute-force grid oracle")
    common.add_argument("--emit-histograms", action="store_true", default=None)
    common.add_argument("--geojson", help="boundary FeatureCollection to annotate with risk indices")
    common.add_argument("--geojson-key", help="feature property holding the zip code (default: zip)")
    common.add_argument("--quiet", action="store_true", default=None, help="suppress the summary")

    parser = argparse.ArgumentParser(prog="spectral-risk", description="Relative heat-risk indices from census data.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="full pipeline")
    sub.add_parser("preprocess", parents=[common], help="write feature vectors for inspection")
    sub.add_parser("estimate", parents=[common], help="estimate reference matrices only")
    score = sub.add_parser("score", parents=[common], help="score localities against saved references")
    score.add_argument("--references", type=Path, required=True, help="references.json from a previous run")
    return parser


def _config(args) -> PipelineConfig:
    overrides = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k, None) is not None}
    if args.config is not None:
        return validate_config(args.config, overrides)
    return config_from_mapping(overrides)


def _setup_logging() -> None:
    name = os.environ.get(LOG_ENV, "WARNING").strip().upper()
    level = int(name) if name.isdigit() else logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _module_of(exc: BaseException) -> str:
    frames = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(frames):
        p = Path(frame.filename)
        if p.parent.name == "spectral_risk":
            return p.stem
    return "spectral_risk"


def _write_features(cfg: PipelineConfig, features: pipeline.Features) -> list[Path]:
    out = []
    for label, vectors, names in (("exposure", features.exposure, features.exposure_names),
                                  ("vulnerability", features.vulnerability, features.vulnerability_names)):
        s = similarity_set(vectors, heuristic_vector(len(names)))
        path = cfg.out_dir / f"{label}_features.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["zip", *names, "norm_class", "heuristic_similarity"])
            writer.writerows(pipeline.feature_rows(features.ids, vectors, s))
        out.append(path)
    return out


def _dispatch(args) -> int:
    cfg = _config(args)
    if args.command == "run":
        result = pipeline.run_pipeline(cfg)
    else:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        features = pipeline.load_features(cfg)
        result = pipeline.PipelineResult(features, [], None)
        if args.command == "preprocess":
            result.artifacts.extend(_write_features(cfg, features))
        elif args.command == "estimate":
            result.references = pipeline.estimate_references(features, cfg)
            result.artifacts.append(pipeline.write_references(result.references, cfg.out_dir / pipeline.REFERENCE_JSON))
        else:
            E, V = ingest.load_reference_json(args.references)
            pipeline.write_scores(features, E, V, cfg, result)
    if not cfg.quiet:
        print(pipeline.summary(result))
        for path in result.artifacts:
            print(f"wrote {path}")
    if not result.ok:
        for failure in result.failures:
            log.error("check failed: %s", failure)
        return 1
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _setup_logging()
    try:
        return _dispatch(args)
    except (SpectralRiskError, ValueError, ArithmeticError, OSError) as exc:
        print(f"spectral-risk: error: {_module_of(exc)}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
