"""Curation funnel: raw completions in, accepted records + ledgers out.

Stage order is fixed: parse, normalize, langguard, length, exact_dup,
near_dup, semantic. Cheap filters run first; dedup runs before the
embedding stage so near-copies never cost an embedding call. Every
record either survives to the end or is rejected at exactly one stage
with one reason, so per-stage counts telescope: a stage's accepted count
is the next stage's input count.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from . import embed
from .dedup import DedupConfig, DuplicatePair, find_duplicates
from .genclient import ParseError, RawCompletion, parse_completion
from .hashing import hash64
from .promptgen import GenerationPlan, GenerationRequest
from .records import (
    DEFAULT_CREATED_AT,
    ID_JOINER,
    CurationStatus,
    QARecord,
    Source,
    Stage,
    State,
)
from .textnorm import LangGuardConfig, LangOutcome, language_stats, surface_clean, canonical

STAGES = ("parse", "normalize", "langguard", "length", "exact_dup", "near_dup", "semantic")


@dataclass(frozen=True)
class CurateConfig:
    langguard: LangGuardConfig = field(default_factory=LangGuardConfig)
    dedup: DedupConfig = field(default_factory=DedupConfig)
    filter: embed.FilterConfig = field(default_factory=embed.FilterConfig)
    question_chars: tuple[int, int] = (10, 1000)
    answer_chars: tuple[int, int] = (20, 3000)
    created_at: str = DEFAULT_CREATED_AT
    config_digest: str = ""
    run_id: str = "run-local"


@dataclass
class RejectionEntry:
    request_id: str
    record_id: str
    source: str
    stage: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "record_id": self.record_id,
            "source": self.source,
            "stage": self.stage,
            "reason": self.reason,
        }


@dataclass
class CurationReport:
    run_id: str
    config_digest: str
    started_at: str
    finished_at: str
    counts: dict[str, dict[str, dict[str, int]]]  # stage -> source -> {in,accepted,rejected}

    def stage_totals(self, stage: str) -> dict[str, int]:
        totals = {"in": 0, "accepted": 0, "rejected": 0}
        for cell in self.counts.get(stage, {}).values():
            for key in totals:
                totals[key] += cell[key]
        return totals

    def validate(self) -> None:
        for stage in STAGES:
            for source, cell in self.counts.get(stage, {}).items():
                if cell["in"] != cell["accepted"] + cell["rejected"]:
                    raise ValueError(f"conservation violated at {stage}/{source}")
        for prev, nxt in zip(STAGES, STAGES[1:]):
            for source in self.counts.get(prev, {}):
                accepted = self.counts[prev][source]["accepted"]
                incoming = self.counts.get(nxt, {}).get(source, {"in": 0})["in"]
                if accepted != incoming:
                    raise ValueError(
                        f"stage chaining violated between {prev} and {nxt} for {source}"
                    )

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_digest": self.config_digest,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "stages": list(STAGES),
            "counts": {
                stage: {
                    source: dict(cell)
                    for source, cell in sorted(self.counts.get(stage, {}).items())
                }
                for stage in STAGES
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurationReport":
        return cls(
            run_id=d["run_id"],
            config_digest=d["config_digest"],
            started_at=d["started_at"],
            finished_at=d["finished_at"],
            counts={stage: dict(per) for stage, per in d["counts"].items()},
        )


@dataclass
class FunnelResult:
    accepted: list[QARecord]
    report: CurationReport
    rejections: list[RejectionEntry]
    duplicates: list[DuplicatePair]


class _Counter:
    def __init__(self):
        self.counts: dict[str, dict[str, dict[str, int]]] = {
            stage: {} for stage in STAGES
        }

    def cell(self, stage: str, source: str) -> dict[str, int]:
        return self.counts[stage].setdefault(
            source, {"in": 0, "accepted": 0, "rejected": 0}
        )

    def enter(self, stage: str, source: str) -> None:
        self.cell(stage, source)["in"] += 1

    def accept(self, stage: str, source: str) -> None:
        self.cell(stage, source)["accepted"] += 1

    def reject(self, stage: str, source: str) -> None:
        self.cell(stage, source)["rejected"] += 1


@dataclass
class _Item:
    request: GenerationRequest
    record: QARecord | None = None
    canon_question: str = ""
    canon_answer: str = ""

    @property
    def source(self) -> str:
        return self.request.source


def run_funnel(
    completions: list[RawCompletion],
    plan: GenerationPlan,
    seed_index: embed.SeedIndex,
    config: CurateConfig,
    provider=None,
) -> FunnelResult:
    """Run the full curation funnel over raw completions.

    Per-record problems become rejections, never aborts; the only
    exceptions raised are configuration errors (e.g. a completion whose
    request_id is not in the plan).
    """
    provider = provider or embed.DeterministicProvider()
    requests_by_id = {r.request_id: r for r in plan.requests}
    plan_order = {r.request_id: i for i, r in enumerate(plan.requests)}
    for completion in completions:
        if completion.request_id not in requests_by_id:
            raise ValueError(f"completion for unknown request {completion.request_id}")
    ordered = sorted(completions, key=lambda c: plan_order[c.request_id])

    counter = _Counter()
    rejections: list[RejectionEntry] = []

    def reject(item_source: str, request_id: str, record_id: str, stage: str, reason: str):
        counter.reject(stage, item_source)
        rejections.append(
            RejectionEntry(
                request_id=request_id,
                record_id=record_id,
                source=item_source,
                stage=stage,
                reason=reason,
            )
        )

    # parse
    survivors: list[tuple[GenerationRequest, str, str]] = []
    for completion in ordered:
        request = requests_by_id[completion.request_id]
        counter.enter("parse", request.source)
        try:
            question, answer = parse_completion(completion.raw_text)
        except ParseError as exc:
            reject(request.source, request.request_id, "", "parse", str(exc))
            continue
        counter.accept("parse", request.source)
        survivors.append((request, question, answer))

    # normalize
    items: list[_Item] = []
    for request, question, answer in survivors:
        counter.enter("normalize", request.source)
        clean_q = surface_clean(question)
        clean_a = surface_clean(answer)
        if not clean_q or not clean_a:
            reason = "empty_question" if not clean_q else "empty_answer"
            reject(request.source, request.request_id, "", "normalize", reason)
            continue
        canon_q = canonical(clean_q)
        canon_a = canonical(clean_a)
        record = QARecord(
            id=f"{hash64(canon_q + ID_JOINER + canon_a):016x}",
            question=clean_q,
            answer=clean_a,
            source=Source(request.source),
            category=request.slot_values.get("category", "general"),
            template_id=request.template_id,
            seed_ids=list(request.exemplar_ids),
            created_at=config.created_at,
        )
        counter.accept("normalize", request.source)
        items.append(
            _Item(request=request, record=record, canon_question=canon_q, canon_answer=canon_a)
        )

    # langguard
    kept: list[_Item] = []
    for item in items:
        counter.enter("langguard", item.source)
        verdict_q = language_stats(item.canon_question, config.langguard)
        verdict_a = language_stats(item.canon_answer, config.langguard)
        item.record.metrics["arabic_ratio"] = min(
            verdict_q.arabic_ratio, verdict_a.arabic_ratio
        )
        if verdict_q.outcome != LangOutcome.PASS:
            reject(
                item.source,
                item.request.request_id,
                item.record.id,
                "langguard",
                f"question_{verdict_q.outcome.value}",
            )
            continue
        if verdict_a.outcome != LangOutcome.PASS:
            reject(
                item.source,
                item.request.request_id,
                item.record.id,
                "langguard",
                f"answer_{verdict_a.outcome.value}",
            )
            continue
        counter.accept("langguard", item.source)
        kept.append(item)
    items = kept

    # length bounds (canonical characters)
    kept = []
    for item in items:
        counter.enter("length", item.source)
        reason = _length_reason(
            len(item.canon_question), len(item.canon_answer), config
        )
        if reason:
            reject(item.source, item.request.request_id, item.record.id, "length", reason)
            continue
        counter.accept("length", item.source)
        kept.append(item)
    items = kept

    # exact + near dedup within the batch
    records = [item.record for item in items]
    texts = [item.canon_question + ID_JOINER + item.canon_answer for item in items]
    duplicates = find_duplicates(records, set(), config.dedup, texts=texts)
    kept = []
    for item in items:
        counter.enter("exact_dup", item.source)
        if item.record.status.rejected_stage == Stage.EXACT_DUP:
            reject(
                item.source,
                item.request.request_id,
                item.record.id,
                "exact_dup",
                item.record.status.reason,
            )
            continue
        counter.accept("exact_dup", item.source)
        kept.append(item)
    items = kept
    kept = []
    for item in items:
        counter.enter("near_dup", item.source)
        if item.record.status.rejected_stage == Stage.NEAR_DUP:
            reject(
                item.source,
                item.request.request_id,
                item.record.id,
                "near_dup",
                item.record.status.reason,
            )
            continue
        counter.accept("near_dup", item.source)
        kept.append(item)
    items = kept

    # semantic band filter
    accepted: list[QARecord] = []
    if items:
        if config.filter.target == "pair":
            targets = [
                canonical(item.record.question + "\n" + item.record.answer)
                for item in items
            ]
        else:
            targets = [item.canon_question for item in items]
        vectors = _embed_canonical_batch(provider, targets)
        similarities = embed.seed_similarity_batch(vectors, seed_index, config.filter)
        for item, similarity in zip(items, similarities):
            counter.enter("semantic", item.source)
            item.record.metrics["semantic_sim"] = float(similarity)
            outcome = embed.band_decision(float(similarity), config.filter)
            if outcome != embed.FilterOutcome.ACCEPT:
                item.record.status = CurationStatus(
                    state=State.REJECTED,
                    rejected_stage=Stage.SEMANTIC,
                    reason=outcome.value,
                )
                reject(
                    item.source,
                    item.request.request_id,
                    item.record.id,
                    "semantic",
                    outcome.value,
                )
                continue
            counter.accept("semantic", item.source)
            item.record.status = CurationStatus(state=State.ACCEPTED)
            accepted.append(item.record)

    report = CurationReport(
        run_id=config.run_id,
        config_digest=config.config_digest,
        started_at=config.created_at,
        finished_at=config.created_at,
        counts=counter.counts,
    )
    report.validate()
    return FunnelResult(
        accepted=accepted,
        report=report,
        rejections=rejections,
        duplicates=duplicates,
    )


def _length_reason(q_len: int, a_len: int, config: CurateConfig) -> str | None:
    q_min, q_max = config.question_chars
    a_min, a_max = config.answer_chars
    if q_len < q_min:
        return "question_too_short"
    if q_len > q_max:
        return "question_too_long"
    if a_len < a_min:
        return "answer_too_short"
    if a_len > a_max:
        return "answer_too_long"
    return None


def _embed_canonical_batch(provider, canon_texts: list[str]):
    import numpy as np

    out = np.empty((len(canon_texts), provider.dim), dtype=np.float64)
    for i, canon_text in enumerate(canon_texts):
        out[i] = provider.embed_canonical(canon_text)
    return out


def funnel_stats(report: CurationReport) -> tuple[str, str]:
    """Acceptance-rate table (text, csv): sources x stages plus totals."""
    sources = sorted({s for per in report.counts.values() for s in per})
    header = ["source"] + list(STAGES)
    rows: list[list[str]] = []

    def rate(cell: dict[str, int]) -> str:
        if cell["in"] == 0:
            return "-"
        return f"{100.0 * cell['accepted'] / cell['in']:.1f}"

    for source in sources:
        row = [source]
        for stage in STAGES:
            cell = report.counts.get(stage, {}).get(
                source, {"in": 0, "accepted": 0, "rejected": 0}
            )
            row.append(rate(cell))
        rows.append(row)
    totals_row = ["TOTAL"]
    for stage in STAGES:
        totals_row.append(rate(report.stage_totals(stage)))
    rows.append(totals_row)

    text_rows = [
        [row[0]] + [cell if cell == "-" else cell + "%" for cell in row[1:]]
        for row in rows
    ]
    widths = [
        max(len(header[i]), *(len(r[i]) for r in text_rows)) for i in range(len(header))
    ]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip()]
    for row in text_rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    text = "\n".join(lines)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return text, buffer.getvalue()
