"""Merge real + synthetic corpora, split, sample for review, export.

The real subset is protected during cross-subset dedup: a synthetic
record that duplicates a real one is always the record dropped. Splits
are stratified by (source, category) with largest-remainder rounding so
the global train fraction is exact and every stratum is within one
record of the target ratio.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

from .dedup import DedupConfig, DuplicatePair, find_duplicates
from .hashing import SplitMix64, hash64, mix64
from .records import (
    CorpusManifest,
    CurationStatus,
    QARecord,
    Stage,
    State,
    write_jsonl,
)


@dataclass(frozen=True)
class TrainingManifest:
    learning_rate: float = 5e-5
    schedule: str = "cosine_decay"
    warmup_steps: int = 200
    epochs: int = 3
    batch_size: int = 8
    mixed_precision: bool = True
    eval_strategy: str = "per_epoch"
    train_path: str = "train.jsonl"
    val_path: str = "val.jsonl"
    config_digest: str = ""

    def __post_init__(self):
        if not 3 <= self.epochs <= 5:
            raise ValueError("epochs must be within 3-5")
        if self.schedule != "cosine_decay":
            raise ValueError("schedule must be cosine_decay")
        if self.eval_strategy != "per_epoch":
            raise ValueError("eval_strategy must be per_epoch")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "schedule": self.schedule,
            "warmup_steps": self.warmup_steps,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "mixed_precision": self.mixed_precision,
            "eval_strategy": self.eval_strategy,
            "train_path": self.train_path,
            "val_path": self.val_path,
            "config_digest": self.config_digest,
        }


def merge_and_protect(
    real: list[QARecord],
    synthetic: list[QARecord],
    dedup_config: DedupConfig,
    corpus_id: str = "corpus",
    config_digest: str = "",
) -> tuple[list[QARecord], CorpusManifest, list[DuplicatePair]]:
    """Cross-subset dedup with the real corpus protected.

    Returns the merged survivors (real first, in input order), a manifest
    with per-source counts, and the duplicate ledger.
    """
    combined = list(real) + list(synthetic)
    protected = {r.id for r in real}
    ledger = find_duplicates(combined, protected, dedup_config)
    merged = [r for r in combined if r.status.state != State.REJECTED]
    counts: dict[str, int] = {}
    for record in merged:
        counts[record.source.value] = counts.get(record.source.value, 0) + 1
    manifest = CorpusManifest(
        corpus_id=corpus_id, counts=counts, config_digest=config_digest
    )
    return merged, manifest, ledger


def apply_review_verdicts(
    synthetic: list[QARecord], verdicts: list[dict]
) -> list[QARecord]:
    """Drop review-rejected records; mark flagged ones.

    Any reject verdict for a record excludes it (dual-review safe). The
    surviving list preserves input order.
    """
    rejected: dict[str, str] = {}
    flagged: set[str] = set()
    for verdict in verdicts:
        record_id = verdict["record_id"]
        if verdict["verdict"] == "reject":
            rejected[record_id] = verdict.get("notes") or "review_reject"
        elif verdict["verdict"] == "flag":
            flagged.add(record_id)
    survivors = []
    for record in synthetic:
        if record.id in rejected:
            record.status = CurationStatus(
                state=State.REJECTED,
                rejected_stage=Stage.REVIEW,
                reason=rejected[record.id],
            )
            continue
        if record.id in flagged:
            record.status = CurationStatus(state=State.FLAGGED)
        survivors.append(record)
    return survivors


def split(
    records: list[QARecord],
    ratio: float = 0.95,
    seed: int = 0,
) -> dict[str, list[QARecord]]:
    """Stratified train/val split by (source, category).

    Largest-remainder rounding over strata keeps the global train count
    at round(ratio * N); a stratum of size 1 goes to train. Membership is
    decided by a seeded per-stratum shuffle, so the same seed always
    yields the same member sets.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    strata: dict[tuple[str, str], list[QARecord]] = {}
    for record in records:
        strata.setdefault((record.source.value, record.category), []).append(record)

    singles = [key for key, members in strata.items() if len(members) == 1]
    multi = sorted(key for key in strata if key not in set(singles))
    n_multi = sum(len(strata[key]) for key in multi)
    target_train = round(ratio * n_multi)

    base: dict[tuple[str, str], int] = {}
    remainders: list[tuple[float, tuple[str, str]]] = []
    for key in multi:
        exact = ratio * len(strata[key])
        base[key] = int(exact)
        remainders.append((exact - int(exact), key))
    leftover = target_train - sum(base.values())
    # Largest remainder first; ties break on stratum key for determinism.
    remainders.sort(key=lambda pair: (-pair[0], pair[1]))
    for _, key in remainders[: max(0, leftover)]:
        base[key] += 1

    train: list[QARecord] = []
    val: list[QARecord] = []
    for key in sorted(singles):
        train.extend(strata[key])
    for key in multi:
        members = list(strata[key])
        rng = SplitMix64(mix64(seed ^ hash64(f"{key[0]}//{key[1]}")))
        rng.shuffle(members)
        quota = min(base[key], len(members))
        train.extend(members[:quota])
        val.extend(members[quota:])
    return {"train": train, "val": val}


def sample_for_review(
    synthetic_accepted: list[QARecord],
    n_total: int = 500,
    per_source_quota: dict[str, int] | None = None,
    seed: int = 0,
) -> list[QARecord]:
    """Seeded uniform sample without replacement, quota per source."""
    if n_total == 0:
        return []
    if per_source_quota is None:
        sources = sorted({r.source.value for r in synthetic_accepted})
        if not sources:
            return []
        share, extra = divmod(n_total, len(sources))
        per_source_quota = {
            source: share + (1 if i < extra else 0) for i, source in enumerate(sources)
        }
    if sum(per_source_quota.values()) != n_total:
        raise ValueError("per-source quotas must sum to n_total")

    sample: list[QARecord] = []
    for source in sorted(per_source_quota):
        quota = per_source_quota[source]
        pool = [r for r in synthetic_accepted if r.source.value == source]
        if len(pool) < quota:
            warnings.warn(
                f"only {len(pool)} records available for source {source} "
                f"(wanted {quota}); sampling all of them"
            )
            sample.extend(pool)
            continue
        rng = SplitMix64(mix64(seed ^ hash64(source)))
        picked = sorted(rng.sample_without_replacement(len(pool), quota))
        sample.extend(pool[i] for i in picked)
    return sample


def _percentile(sorted_values: list[int], pct: float) -> int:
    """Nearest-rank percentile (ceil(pct/100 * n)) over a pre-sorted list."""
    if not sorted_values:
        return 0
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def length_stats(records: list[QARecord]) -> dict:
    """p50/p95/p99 of question/answer/pair lengths in chars and tokens."""
    fields = {
        "question": [r.question for r in records],
        "answer": [r.answer for r in records],
        "pair": [r.question + " " + r.answer for r in records],
    }
    stats: dict = {}
    for name, texts in fields.items():
        chars = sorted(len(t) for t in texts)
        tokens = sorted(len(t.split()) for t in texts)
        stats[name] = {
            "chars": {f"p{p}": _percentile(chars, p) for p in (50, 95, 99)},
            "tokens": {f"p{p}": _percentile(tokens, p) for p in (50, 95, 99)},
        }
    return stats


def export(
    splits: dict[str, list[QARecord]],
    manifest: CorpusManifest,
    out_dir: str | Path,
    training: TrainingManifest | None = None,
) -> dict[str, Path]:
    """Write train/val JSONL, the corpus manifest, training manifest and
    length statistics into out_dir. Returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": out / "train.jsonl",
        "val": out / "val.jsonl",
        "manifest": out / "manifest.json",
        "training_manifest": out / "training_manifest.json",
        "length_stats": out / "length_stats.json",
    }
    write_jsonl(splits["train"], paths["train"])
    write_jsonl(splits["val"], paths["val"])

    manifest.split = {
        "train": [r.id for r in splits["train"]],
        "val": [r.id for r in splits["val"]],
    }
    manifest.validate()
    paths["manifest"].write_text(
        json.dumps(manifest.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
    )

    training = training or TrainingManifest(
        train_path=str(paths["train"]),
        val_path=str(paths["val"]),
        config_digest=manifest.config_digest,
    )
    paths["training_manifest"].write_text(
        json.dumps(training.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
    )

    all_records = splits["train"] + splits["val"]
    paths["length_stats"].write_text(
        json.dumps(length_stats(all_records), indent=2), encoding="utf-8"
    )
    return paths
