"""Shared data model: QA records, curation status, manifests, JSONL I/O.

A record's id is the first 16 hex chars of the FNV-1a 64 hash of
``canonical(question) + U+241F + canonical(answer)``, so identical
content always maps to the same id and re-runs are idempotent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable

from .hashing import hash64
from .textnorm import canonical

ID_JOINER = "␟"

# Field order of the on-disk JSONL schema.
_RECORD_FIELDS = (
    "id",
    "question",
    "answer",
    "source",
    "category",
    "template_id",
    "seed_ids",
    "status",
    "metrics",
    "created_at",
)

DEFAULT_CREATED_AT = "2025-01-01T00:00:00Z"


class Source(str, Enum):
    REAL = "real"
    CHATGPT4O = "chatgpt4o"
    GEMINI25PRO = "gemini25pro"
    MOCK = "mock"


class State(str, Enum):
    RAW = "raw"
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    FLAGGED = "flagged"


class Stage(str, Enum):
    PARSE = "parse"
    NORMALIZE = "normalize"
    LANGGUARD = "langguard"
    LENGTH = "length"
    EXACT_DUP = "exact_dup"
    NEAR_DUP = "near_dup"
    SEMANTIC = "semantic"
    REVIEW = "review"


class CorpusFormatError(ValueError):
    """Raised on malformed JSONL input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class CurationStatus:
    state: State = State.RAW
    rejected_stage: Stage | None = None
    reason: str | None = None

    def __post_init__(self):
        rejected = self.state == State.REJECTED
        has_details = self.rejected_stage is not None and self.reason is not None
        if rejected != has_details:
            raise ValueError(
                "rejected_stage and reason must be present iff state is rejected"
            )

    def to_dict(self) -> dict:
        d: dict = {"state": self.state.value}
        if self.state == State.REJECTED:
            d["rejected_stage"] = self.rejected_stage.value
            d["reason"] = self.reason
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CurationStatus":
        stage = d.get("rejected_stage")
        return cls(
            state=State(d["state"]),
            rejected_stage=Stage(stage) if stage is not None else None,
            reason=d.get("reason"),
        )


def compute_record_id(question: str, answer: str) -> str:
    """Content-addressed 16-hex id over the canonical question/answer pair."""
    return f"{hash64(canonical(question) + ID_JOINER + canonical(answer)):016x}"


def utc_now_rfc3339() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class QARecord:
    question: str
    answer: str
    source: Source
    id: str = ""
    category: str = "general"
    template_id: str | None = None
    seed_ids: list[str] = field(default_factory=list)
    status: CurationStatus = field(default_factory=CurationStatus)
    metrics: dict[str, float] = field(default_factory=dict)
    created_at: str = DEFAULT_CREATED_AT
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            self.id = compute_record_id(self.question, self.answer)
        if self.source == Source.REAL and (self.template_id or self.seed_ids):
            raise ValueError("real records never carry template_id or seed_ids")

    def dedup_text(self) -> str:
        """Canonical text used for hashing and duplicate detection."""
        return canonical(self.question) + ID_JOINER + canonical(self.answer)

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "question": self.question,
            "answer": self.answer,
            "source": self.source.value,
            "category": self.category,
            "template_id": self.template_id,
            "seed_ids": list(self.seed_ids),
            "status": self.status.to_dict(),
            "metrics": {k: self.metrics[k] for k in sorted(self.metrics)},
            "created_at": self.created_at,
        }
        for key in sorted(self.extras):
            d[key] = self.extras[key]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QARecord":
        extras = {k: v for k, v in d.items() if k not in _RECORD_FIELDS}
        return cls(
            id=d["id"],
            question=d["question"],
            answer=d["answer"],
            source=Source(d["source"]),
            category=d.get("category", "general"),
            template_id=d.get("template_id"),
            seed_ids=list(d.get("seed_ids") or []),
            status=CurationStatus.from_dict(d.get("status") or {"state": "raw"}),
            metrics=dict(d.get("metrics") or {}),
            created_at=d.get("created_at", DEFAULT_CREATED_AT),
            extras=extras,
        )


def dumps_record(record: QARecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False, separators=(",", ":"))


def read_jsonl(path: str | Path) -> list[QARecord]:
    """Read records from a UTF-8 JSONL file, in file order.

    Raises CorpusFormatError on a malformed line (with its line number)
    or when the same id occurs twice (listing both occurrences).
    """
    records: list[QARecord] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                record = QARecord.from_dict(data)
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise CorpusFormatError(str(exc), line=lineno) from exc
            if record.id in seen:
                raise CorpusFormatError(
                    f"duplicate id {record.id} at lines {seen[record.id]} and {lineno}"
                )
            seen[record.id] = lineno
            records.append(record)
    return records


def write_jsonl(records: Iterable[QARecord], path: str | Path) -> None:
    """Write records as UTF-8 JSONL (no BOM), one compact object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(dumps_record(record))
            fh.write("\n")


@dataclass
class CorpusManifest:
    corpus_id: str
    counts: dict[str, int]
    config_digest: str
    split: dict[str, list[str]] = field(default_factory=dict)

    def validate(self) -> None:
        ids: set[str] = set()
        total = 0
        for part in self.split.values():
            ids.update(part)
            total += len(part)
        if len(ids) != total:
            raise ValueError("split parts overlap")
        if self.split and sum(self.counts.values()) != len(ids):
            raise ValueError("counts do not match number of distinct record ids")

    def to_dict(self) -> dict:
        return {
            "corpus_id": self.corpus_id,
            "counts": {k: self.counts[k] for k in sorted(self.counts)},
            "config_digest": self.config_digest,
            "split": {k: list(v) for k, v in sorted(self.split.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusManifest":
        return cls(
            corpus_id=d["corpus_id"],
            counts=dict(d["counts"]),
            config_digest=d["config_digest"],
            split={k: list(v) for k, v in d.get("split", {}).items()},
        )
