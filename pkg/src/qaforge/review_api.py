"""HTTP service for human review of sampled records.

Verdicts land in an append-only JSONL log; all derived state (progress,
stats, duplicate detection) is a pure fold over that log, so a restart
reproduces exactly the same view. Records are served in sample order
and an unsubmitted assignment is sticky per reviewer.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .records import QARecord, read_jsonl, utc_now_rfc3339

RATING_FIELDS = ("fluency", "relevance", "plausibility")
VERDICT_VALUES = ("accept", "reject", "flag")


class VerdictError(ValueError):
    def __init__(self, message: str, status_code: int = 400):
        super().__init__(message)
        self.status_code = status_code


def validate_verdict(payload: dict, sample_ids: set[str]) -> dict:
    """Normalize and validate a verdict body; raises VerdictError."""
    if not isinstance(payload, dict):
        raise VerdictError("verdict body must be a JSON object")
    record_id = payload.get("record_id")
    reviewer = payload.get("reviewer")
    if not record_id or not isinstance(record_id, str):
        raise VerdictError("record_id is required")
    if not reviewer or not isinstance(reviewer, str):
        raise VerdictError("reviewer is required")
    if record_id not in sample_ids:
        raise VerdictError(f"record {record_id} is not part of the active sample")
    verdict = payload.get("verdict")
    if verdict not in VERDICT_VALUES:
        raise VerdictError(f"verdict must be one of {VERDICT_VALUES}")
    ratings = {}
    for name in RATING_FIELDS:
        value = payload.get(name)
        if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
            raise VerdictError(f"{name} must be an integer between 1 and 5")
        ratings[name] = value
    notes = payload.get("notes") or ""
    if verdict == "reject" and not notes.strip():
        raise VerdictError("a reject verdict requires non-empty notes")
    return {
        "record_id": record_id,
        "reviewer": reviewer,
        **ratings,
        "verdict": verdict,
        "notes": notes,
        "submitted_at": payload.get("submitted_at") or utc_now_rfc3339(),
    }


class ReviewState:
    """Sample + verdict log fold; one serialized writer, snapshot reads."""

    def __init__(self, sample: list[QARecord], log_path: str | Path, dual_review: bool = False):
        self.sample = sample
        self.by_id = {r.id: r for r in sample}
        self.order = [r.id for r in sample]
        self.log_path = Path(log_path)
        self.dual_review = dual_review
        self.verdicts: list[dict] = []
        self.by_record: dict[str, dict[str, dict]] = {}
        self.assignments: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.log_path.exists():
            with open(self.log_path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._fold(json.loads(line))

    def _fold(self, verdict: dict) -> None:
        self.verdicts.append(verdict)
        self.by_record.setdefault(verdict["record_id"], {})[verdict["reviewer"]] = verdict

    def _is_reviewed(self, record_id: str, reviewer: str) -> bool:
        per_reviewer = self.by_record.get(record_id, {})
        if self.dual_review:
            return reviewer in per_reviewer
        return bool(per_reviewer)

    def next_for(self, reviewer: str) -> QARecord | None:
        with self._lock:
            assigned = self.assignments.get(reviewer)
            if assigned and not self._is_reviewed(assigned, reviewer):
                return self.by_id[assigned]
            taken = {
                rid
                for rev, rid in self.assignments.items()
                if rev != reviewer and not self._is_reviewed(rid, rev)
            }
            for record_id in self.order:
                if self._is_reviewed(record_id, reviewer):
                    continue
                if not self.dual_review and record_id in taken:
                    continue
                self.assignments[reviewer] = record_id
                return self.by_id[record_id]
            self.assignments.pop(reviewer, None)
            return None

    def add_verdict(self, payload: dict) -> dict:
        with self._lock:
            verdict = validate_verdict(payload, set(self.by_id))
            existing = self.by_record.get(verdict["record_id"], {})
            if verdict["reviewer"] in existing:
                raise VerdictError(
                    f"reviewer {verdict['reviewer']} already reviewed "
                    f"{verdict['record_id']}",
                    status_code=409,
                )
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(verdict, ensure_ascii=False) + "\n")
                fh.flush()
            self._fold(verdict)
            if self.assignments.get(verdict["reviewer"]) == verdict["record_id"]:
                self.assignments.pop(verdict["reviewer"], None)
            return verdict

    def stats(self) -> dict:
        with self._lock:
            reviewed = sum(1 for rid in self.order if self.by_record.get(rid))
            verdict_counts = {v: 0 for v in VERDICT_VALUES}
            per_source: dict[str, dict[str, list[int]]] = {}
            for verdict in self.verdicts:
                verdict_counts[verdict["verdict"]] += 1
                record = self.by_id.get(verdict["record_id"])
                if record is None:
                    continue
                bucket = per_source.setdefault(
                    record.source.value, {name: [] for name in RATING_FIELDS}
                )
                for name in RATING_FIELDS:
                    bucket[name].append(verdict[name])
            mean_ratings = {
                source: {
                    name: (sum(values) / len(values) if values else 0.0)
                    for name, values in buckets.items()
                }
                for source, buckets in per_source.items()
            }
            return {
                "total": len(self.order),
                "reviewed": reviewed,
                "remaining": len(self.order) - reviewed,
                "verdicts": verdict_counts,
                "mean_ratings_per_source": mean_ratings,
            }


def create_app(
    sample: list[QARecord] | None,
    log_path: str | Path,
    dual_review: bool = False,
    cors_origins: list[str] | None = None,
) -> FastAPI:
    app = FastAPI(title="qaforge review service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = ReviewState(sample or [], log_path, dual_review) if sample is not None else None
    app.state.review = state

    @app.get("/batch/next")
    def batch_next(reviewer: str = ""):
        if state is None:
            return JSONResponse({"error": "no active review sample"}, status_code=404)
        if not reviewer:
            return JSONResponse({"error": "reviewer query parameter is required"}, status_code=400)
        record = state.next_for(reviewer)
        if record is None:
            return Response(status_code=204)
        return JSONResponse(record.to_dict())

    @app.post("/verdicts")
    async def post_verdict(payload: dict):
        if state is None:
            return JSONResponse({"error": "no active review sample"}, status_code=404)
        try:
            verdict = state.add_verdict(payload)
        except VerdictError as exc:
            return JSONResponse({"error": str(exc)}, status_code=exc.status_code)
        return JSONResponse(verdict, status_code=201)

    @app.get("/stats")
    def stats():
        if state is None:
            return JSONResponse({"error": "no active review sample"}, status_code=404)
        return JSONResponse(state.stats())

    return app


def load_sample_app(
    sample_path: str | Path,
    log_path: str | Path | None = None,
    dual_review: bool = False,
) -> FastAPI:
    sample = read_jsonl(sample_path)
    if log_path is None:
        log_path = Path(sample_path).with_suffix(".verdicts.jsonl")
    return create_app(sample, log_path, dual_review)


def serve(sample_path: str | Path, port: int = 8400, log_path: str | Path | None = None) -> None:
    import uvicorn

    app = load_sample_app(sample_path, log_path)
    uvicorn.run(app, host="127.0.0.1", port=port)
