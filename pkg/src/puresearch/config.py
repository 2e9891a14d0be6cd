"""Pipeline configuration: defaults, JSON config file, env and flag overrides.

Precedence for the store path: --store flag, then PURESEARCH_STORE, then
the config file, then ./store.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ValidationError
from .pipeline import PipelineParams
from .visual import SymbolicThresholds

STORE_ENV_VAR = "PURESEARCH_STORE"


@dataclass(frozen=True)
class PipelineConfig:
    store: str = "store"
    min_size: int = 120
    window: int = 10
    prototypes: int = 25
    pseudo_positives: int = 50
    k: int | None = None
    ridge_lambda: float = 1.0
    folds: int = 10
    repeats: int = 5
    seed: int = 42
    thresholds: SymbolicThresholds = field(default_factory=SymbolicThresholds)
    host: str = "127.0.0.1"
    port: int = 8765
    # crawl defaults: {"kind", "base", "rate_limit", "timeout", "max_results"}
    provider: dict | None = None

    def validate(self) -> "PipelineConfig":
        checks = [
            (self.min_size >= 1, "min_size must be >= 1"),
            (self.window >= 0, "window must be >= 0"),
            (self.prototypes >= 1, "prototypes must be >= 1"),
            (self.pseudo_positives >= 1, "pseudo_positives must be >= 1"),
            (self.k is None or self.k >= 1, "k must be >= 1 when set"),
            (self.ridge_lambda >= 0, "ridge_lambda must be >= 0"),
            (self.folds >= 2, "folds must be >= 2"),
            (self.repeats >= 1, "repeats must be >= 1"),
            (1 <= self.port <= 65535, "port must be in [1, 65535]"),
            (self.thresholds.min_votes >= 1, "min_votes must be >= 1"),
            (self.provider is None or isinstance(self.provider, dict),
             "provider must be an object"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValidationError(f"bad config: {message}")
        return self

    def params(self) -> PipelineParams:
        return PipelineParams(
            min_size=self.min_size,
            window=self.window,
            prototypes=self.prototypes,
            pseudo_positives=self.pseudo_positives,
            k=self.k,
            ridge_lambda=self.ridge_lambda,
            folds=self.folds,
            repeats=self.repeats,
            seed=self.seed,
            thresholds=self.thresholds,
        )


def load_config(config_path: str | None = None, **flag_overrides) -> PipelineConfig:
    """Build the effective config: defaults <- file <- env <- non-None flags."""
    values: dict = {}
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError("config file must contain a JSON object")
        known = {f.name for f in fields(PipelineConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "thresholds" in raw:
            raw["thresholds"] = SymbolicThresholds(**raw["thresholds"])
        values.update(raw)

    env_store = os.environ.get(STORE_ENV_VAR)
    if env_store:
        values["store"] = env_store
    for key, value in flag_overrides.items():
        if value is not None:
            values[key] = value
    try:
        config = PipelineConfig(**values)
    except TypeError as exc:
        raise ValidationError(f"bad config: {exc}") from exc
    return config.validate()
