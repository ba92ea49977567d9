"""Pipeline configuration: defaults, flat config files, flag merging.

Precedence is defaults < config file < environment < flags, where the
environment may override only the two provider endpoint URLs and the API
credential (never hyperparameters). Unknown config keys are rejected
outright so a typo cannot silently fall back to a default.

Stage fingerprints (sha256 over input files plus the relevant config
subset) make every pipeline stage resumable: a rerun with unchanged
inputs is a no-op.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import BadConfig

ENV_REWARD_URL = "VLCURATE_REWARD_URL"
ENV_RATING_URL = "VLCURATE_RATING_URL"
ENV_API_KEY = "VLCURATE_API_KEY"


@dataclass
class PipelineConfig:
    # paths; empty string means "derive from workdir"
    workdir: str = "work"
    manifest: str = ""
    features_dir: str = ""
    scores: str = ""
    oracle: str = ""
    embeddings: str = ""
    bundle_dir: str = ""
    subsets_dir: str = ""
    reports: str = ""
    model_dir: str = ""
    curated_dir: str = ""
    # hyperparameters
    n_subsets: int = 30
    capacity: int = 0          # 0 derives N // n_subsets (114 at the 3439-sample scale)
    k_clusters: int = 10
    alpha: int = 200
    m: int = 6
    d_model: int = 16
    ff_dim: int = 32
    layers: int = 2
    epochs: int = 20
    lr: float = 0.01
    seed: int = 0
    selector_kind: str = "attention"
    optimizer: str = "adam"
    standardize: bool = True
    reducer_mode: str = "joint"
    subset_space: str = "embedding"
    indicator: str = ""        # set to clip|length|reward|gpt for single-indicator runs
    clustering: bool = True
    # providers
    provider: str = "cache"
    reward_url: str = ""
    rating_url: str = ""
    api_key: str = ""
    workers: int = 1
    # synthetic generator
    synth_n: int = 3439
    image_dim: int = 16
    text_dim: int = 24

    # -- derived paths --------------------------------------------------
    def _derived(self, explicit: str, default_name: str) -> Path:
        return Path(explicit) if explicit else Path(self.workdir) / default_name

    def manifest_path(self) -> Path:
        return self._derived(self.manifest, "manifest.jsonl")

    def features_path(self) -> Path:
        return self._derived(self.features_dir, "features")

    def scores_path(self) -> Path:
        return self._derived(self.scores, "scores.jsonl")

    def oracle_path(self) -> Path:
        return self._derived(self.oracle, "oracle.jsonl")

    def embeddings_path(self) -> Path:
        return self._derived(self.embeddings, "embeddings.txt")

    def bundle_path(self) -> Path:
        return self._derived(self.bundle_dir, "embedding_bundle")

    def subsets_path(self) -> Path:
        return self._derived(self.subsets_dir, "subsets")

    def reports_path(self) -> Path:
        return self._derived(self.reports, "eval_reports.jsonl")

    def model_path(self) -> Path:
        return self._derived(self.model_dir, "selector_model")

    def curated_path(self) -> Path:
        return self._derived(self.curated_dir, "curated")

    def validate(self) -> None:
        checks = [
            (self.n_subsets >= 2, "n_subsets must be >= 2"),
            (self.capacity >= 0, "capacity must be >= 0 (0 = derive)"),
            (self.k_clusters >= 1, "k_clusters must be >= 1"),
            (self.alpha >= 1, "alpha must be >= 1"),
            (self.m >= 1, "m must be >= 1"),
            (self.d_model >= 1 and self.ff_dim >= 1 and self.layers >= 1,
             "selector dimensions must be positive"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.lr > 0.0, "lr must be > 0"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.selector_kind in ("linear", "mlp", "attention"),
             f"unknown selector_kind {self.selector_kind!r}"),
            (self.optimizer in ("adam", "sgd"), f"unknown optimizer {self.optimizer!r}"),
            (self.reducer_mode in ("joint", "split"),
             f"unknown reducer_mode {self.reducer_mode!r}"),
            (self.subset_space in ("embedding", "image"),
             f"unknown subset_space {self.subset_space!r}"),
            (self.indicator in ("", "clip", "length", "reward", "gpt"),
             f"unknown indicator {self.indicator!r}"),
            (self.provider in ("cache", "http"), f"unknown provider {self.provider!r}"),
        ]
        for ok, message in checks:
            if not ok:
                raise BadConfig(message)


_FIELDS = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def config_keys() -> set[str]:
    return set(_FIELDS)


def _coerce(key: str, raw: str):
    kind = _FIELDS[key]
    if kind == "bool":
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise BadConfig(f"config key {key}: cannot parse {raw!r} as bool")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise BadConfig(f"config key {key}: cannot parse {raw!r} as {kind}") from exc
    return raw.strip()


def read_config_file(path: str | Path) -> dict:
    """Flat ``key = value`` lines; # starts a comment; unknown keys rejected."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise BadConfig(f"{path}:{line_no}: expected key = value")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in _FIELDS:
                raise BadConfig(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = _coerce(key, raw)
    return values


def build_config(
    config_file: str | None = None, flag_values: dict | None = None
) -> PipelineConfig:
    """Merge defaults, file, environment (endpoint/credential keys only),
    then flags; validate the result."""
    cfg = PipelineConfig()
    if config_file:
        for key, value in read_config_file(config_file).items():
            setattr(cfg, key, value)
    env_map = (
        ("reward_url", ENV_REWARD_URL),
        ("rating_url", ENV_RATING_URL),
        ("api_key", ENV_API_KEY),
    )
    for key, env_name in env_map:
        if os.environ.get(env_name):
            setattr(cfg, key, os.environ[env_name])
    for key, value in (flag_values or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise BadConfig(f"unknown config key {key!r}")
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


# -- stage fingerprints -------------------------------------------------

def fingerprint(input_paths: list[Path], config_subset: dict) -> str:
    digest = hashlib.sha256()
    for path in sorted(Path(p) for p in input_paths):
        digest.update(str(path.name).encode())
        digest.update(path.read_bytes())
    digest.update(json.dumps(config_subset, sort_keys=True).encode())
    return digest.hexdigest()


def _fingerprint_file(workdir: str | Path, stage: str) -> Path:
    return Path(workdir) / ".fingerprints" / f"{stage}.sha256"


def stage_is_current(
    workdir: str | Path, stage: str, value: str, outputs: list[Path]
) -> bool:
    record = _fingerprint_file(workdir, stage)
    if not record.exists():
        return False
    if record.read_text(encoding="utf-8").strip() != value:
        return False
    return all(Path(p).exists() for p in outputs)


def stage_mark_done(workdir: str | Path, stage: str, value: str) -> None:
    record = _fingerprint_file(workdir, stage)
    record.parent.mkdir(parents=True, exist_ok=True)
    record.write_text(value + "\n", encoding="utf-8")
