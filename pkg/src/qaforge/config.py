"""One declarative JSON config for the whole pipeline.

Every key has a default; a config file only overrides what it names.
Unknown keys are hard errors (reported with their full dotted path) so
typos never silently fall back to defaults. The config digest is the
FNV-1a 64 hash of the effective config's canonical serialization;
artifacts stamped with different digests refuse to combine unless
forced.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .dedup import DedupConfig
from .embed import FilterConfig
from .genclient import ProviderConfig
from .hashing import hash64
from .records import DEFAULT_CREATED_AT
from .textnorm import LangGuardConfig

_PROVIDER_DEFAULTS = {
    "endpoint": "",
    "model": "",
    "auth_env": "",
    "temperature": 0.9,
    "max_output_tokens": 1024,
    "requests_per_second": 8.0,
    "max_attempts": 5,
    "backoff_base_ms": 500,
    "malformed_rate": 0.05,  # mock provider only
}

DEFAULTS: dict = {
    "corpus": {
        "corpus_id": "qaforge-corpus",
        "master_seed": 20250101,
        "created_at": DEFAULT_CREATED_AT,
        "seed_path": "",
        "out_dir": "out",
    },
    "promptgen": {
        "templates_path": "",
        "category_rules_path": "",
        "exemplars_per_prompt": 3,
        "n_total": 200,
        "per_source": {"chatgpt4o": 100, "gemini25pro": 100},
    },
    "providers": {
        "chatgpt4o": dict(_PROVIDER_DEFAULTS, auth_env="OPENAI_API_KEY", model="gpt-4o"),
        "gemini25pro": dict(
            _PROVIDER_DEFAULTS, auth_env="GEMINI_API_KEY", model="gemini-2.5-pro"
        ),
        "mock": dict(_PROVIDER_DEFAULTS, requests_per_second=1e9),
    },
    "langguard": {
        "arabic_ratio_min": 0.90,
        "latin_run_max": 4,
        "min_letters": 10,
    },
    "dedup": {
        "shingle_k": 5,
        "num_perms": 128,
        "bands": 16,
        "rows": 8,
        "jaccard_threshold": 0.80,
        "master_seed": None,  # falls back to corpus.master_seed
    },
    "filter": {
        "tau_low": 0.55,
        "tau_high": 0.95,
        "k_nn": 5,
        "target": "question_only",
    },
    "embeddings": {
        "provider": "deterministic",
        "endpoint": "",
        "auth_env": "",
    },
    "curate": {
        "question_chars": [10, 1000],
        "answer_chars": [20, 3000],
    },
    "assemble": {
        "split_ratio": 0.95,
        "split_seed": None,  # falls back to corpus.master_seed
        "review_sample": {
            "n_total": 500,
            "per_source": {"chatgpt4o": 250, "gemini25pro": 250},
        },
        "training": {
            "learning_rate": 5e-5,
            "schedule": "cosine_decay",
            "warmup_steps": 200,
            "epochs": 3,
            "batch_size": 8,
            "mixed_precision": True,
            "eval_strategy": "per_epoch",
        },
    },
    "score": {
        "idf": False,
        "provider": "deterministic",
        "seeds": [1, 2, 3],
    },
}

# Keys whose values are free-form maps rather than fixed schemas.
_OPEN_MAPS = {
    "promptgen.per_source",
    "assemble.review_sample.per_source",
}


class ConfigError(ValueError):
    pass


def _check_unknown(overrides: dict, defaults: dict, prefix: str = "") -> None:
    for key, value in overrides.items():
        path = f"{prefix}{key}"
        if path in _OPEN_MAPS or prefix.rstrip(".") in _OPEN_MAPS:
            continue
        if key not in defaults:
            raise ConfigError(f"unknown config key: {path}")
        if isinstance(value, dict) and isinstance(defaults[key], dict):
            if path not in _OPEN_MAPS:
                _check_unknown(value, defaults[key], prefix=f"{path}.")


def _merge(defaults: dict, overrides: dict, prefix: str = "") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        path = f"{prefix}{key}"
        if (
            isinstance(value, dict)
            and isinstance(merged.get(key), dict)
            and path not in _OPEN_MAPS  # quota maps replace wholesale
        ):
            merged[key] = _merge(merged[key], value, prefix=f"{path}.")
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class Config:
    """Effective pipeline configuration with typed section accessors."""

    def __init__(self, data: dict):
        self.data = data

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None) -> "Config":
        raw: dict = {}
        if path:
            try:
                raw = json.loads(Path(path).read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _check_unknown(raw, DEFAULTS)
        data = _merge(DEFAULTS, raw)
        if overrides:
            _check_unknown(overrides, DEFAULTS)
            data = _merge(data, overrides)
        return cls(data)

    def digest(self) -> str:
        canonical_json = json.dumps(
            self.data, sort_keys=True, ensure_ascii=False, separators=(",", ":")
        )
        return f"{hash64(canonical_json):016x}"

    # -- section accessors -------------------------------------------------

    @property
    def master_seed(self) -> int:
        return int(self.data["corpus"]["master_seed"])

    @property
    def created_at(self) -> str:
        return self.data["corpus"]["created_at"]

    def langguard(self) -> LangGuardConfig:
        section = self.data["langguard"]
        return LangGuardConfig(
            arabic_ratio_min=section["arabic_ratio_min"],
            latin_run_max=section["latin_run_max"],
            min_letters=section["min_letters"],
        )

    def dedup(self) -> DedupConfig:
        section = self.data["dedup"]
        master_seed = section["master_seed"]
        if master_seed is None:
            master_seed = self.master_seed
        return DedupConfig(
            shingle_k=section["shingle_k"],
            num_perms=section["num_perms"],
            bands=section["bands"],
            rows=section["rows"],
            jaccard_threshold=section["jaccard_threshold"],
            master_seed=int(master_seed),
        )

    def filter(self) -> FilterConfig:
        section = self.data["filter"]
        return FilterConfig(
            tau_low=section["tau_low"],
            tau_high=section["tau_high"],
            k_nn=section["k_nn"],
            target=section["target"],
        )

    def provider_config(self, name: str) -> ProviderConfig:
        section = self.data["providers"].get(name)
        if section is None:
            raise ConfigError(f"no provider configured under providers.{name}")
        return ProviderConfig(
            name=name,
            endpoint=section["endpoint"],
            model=section["model"],
            auth_env=section["auth_env"],
            temperature=section["temperature"],
            max_output_tokens=section["max_output_tokens"],
            requests_per_second=section["requests_per_second"],
            max_attempts=section["max_attempts"],
            backoff_base_ms=section["backoff_base_ms"],
        )

    def split_seed(self) -> int:
        seed = self.data["assemble"]["split_seed"]
        return self.master_seed if seed is None else int(seed)

    def question_chars(self) -> tuple[int, int]:
        lo, hi = self.data["curate"]["question_chars"]
        return int(lo), int(hi)

    def answer_chars(self) -> tuple[int, int]:
        lo, hi = self.data["curate"]["answer_chars"]
        return int(lo), int(hi)
