"""Pipeline configuration: JSON file plus command-line overrides."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .reference import SolverOptions, TailRule


@dataclass(frozen=True)
class PipelineConfig:
    input: Path
    out_dir: Path = Path("out")
    schema: dict = field(default_factory=dict)
    polarity: dict = field(default_factory=dict)
    impute: str = "none"
    housing_density: str = "per_area"
    vulnerability_groups: Any = "aggregated"
    area_unit: str = "km2"
    tail_exposure: TailRule = TailRule.MEAN
    tail_vulnerability: TailRule = TailRule.MEAN_PLUS_STD
    tail_inclusive: bool = False
    gap_tol: float = 1e-8
    max_iter: int = 10_000
    verify_fidelity: bool = False
    run_oracle: bool = False
    oracle_step: float = 0.01
    emit_histograms: bool = False
    geojson: Path | None = None
    geojson_key: str = "zip"
    quiet: bool = False

    @property
    def solver(self) -> SolverOptions:
        return SolverOptions(gap_tol=self.gap_tol, max_iter=self.max_iter)

    @property
    def missing_policy(self) -> str:
        return "zero" if self.impute == "zero" else "reject"


KNOWN_KEYS = tuple(f.name for f in fields(PipelineConfig))
_PATH_KEYS = ("input", "out_dir", "geojson")


def _check(cfg: PipelineConfig) -> PipelineConfig:
    if not str(cfg.input).strip():
        raise ConfigError("input path is empty")
    if not str(cfg.out_dir).strip():
        raise ConfigError("out_dir is empty")
    if isinstance(cfg.gap_tol, bool) or not isinstance(cfg.gap_tol, (int, float)) or not cfg.gap_tol > 0:
        raise ConfigError(f"gap_tol must be a positive number, got {cfg.gap_tol!r}")
    if isinstance(cfg.max_iter, bool) or not isinstance(cfg.max_iter, int) or cfg.max_iter < 1:
        raise ConfigError(f"max_iter must be a positive integer, got {cfg.max_iter!r}")
    if not 0 < cfg.oracle_step <= 0.2:
        raise ConfigError(f"oracle_step must lie in (0, 0.2], got {cfg.oracle_step!r}")
    if cfg.impute not in ("none", "zero"):
        raise ConfigError(f"impute must be 'none' or 'zero', got {cfg.impute!r}")
    if cfg.housing_density not in ("per_area", "per_capita"):
        raise ConfigError(f"housing_density must be 'per_area' or 'per_capita', got {cfg.housing_density!r}")
    for key in ("schema", "polarity"):
        value = getattr(cfg, key)
        if not isinstance(value, Mapping) or not all(isinstance(v, str) for v in value.values()):
            raise ConfigError(f"{key} must map names to strings")
    for name, pol in cfg.polarity.items():
        if pol not in ("higher", "lower"):
            raise ConfigError(f"polarity for {name!r} must be 'higher' or 'lower', got {pol!r}")
    for flag in ("tail_inclusive", "verify_fidelity", "run_oracle", "emit_histograms", "quiet"):
        if not isinstance(getattr(cfg, flag), bool):
            raise ConfigError(f"{flag} must be true or false")
    return cfg


def _coerce(key: str, value, base: Path | None):
    if key in _PATH_KEYS:
        if value is None:
            if key == "input":
                raise ConfigError("input path is required")
            return None
        if not isinstance(value, (str, Path)) or not str(value).strip():
            raise ConfigError(f"{key} must be a non-empty path")
        p = Path(value)
        return base / p if base is not None and not p.is_absolute() else p
    if key in ("tail_exposure", "tail_vulnerability"):
        try:
            return TailRule(value)
        except ValueError:
            raise ConfigError(f"{key} must be 'mean' or 'mean_std', got {value!r}") from None
    if key in ("gap_tol", "oracle_step") and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def config_from_mapping(data: Mapping[str, Any], base: Path | None = None) -> PipelineConfig:
    """Build a config from plain values; relative paths resolve against ``base``."""
    unknown = [k for k in data if k not in KNOWN_KEYS]
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(map(str, unknown))}")
    if data.get("input") is None:
        raise ConfigError("input path is required")
    values = {k: _coerce(k, v, base) for k, v in data.items()}
    return _check(PipelineConfig(**values))


def validate_config(path, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Load a JSON config file, apply ``overrides`` (which win) and fill defaults."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    unknown = [k for k in data if k not in KNOWN_KEYS]
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(map(str, unknown))}")
    base = path.parent
    resolved = {k: _coerce(k, v, base) for k, v in data.items()}
    for k, v in (overrides or {}).items():
        resolved[k] = _coerce(k, v, None)
    return config_from_mapping(resolved)


def with_overrides(cfg: PipelineConfig, **overrides) -> PipelineConfig:
    return _check(replace(cfg, **{k: _coerce(k, v, None) for k, v in overrides.items()}))
