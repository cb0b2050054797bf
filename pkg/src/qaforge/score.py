"""Greedy token-matching semantic scores and comparison tables.

Precision is the (optionally idf-weighted) mean over candidate tokens of
each token's best cosine against the reference tokens; recall mirrors it
from the reference side; F1 is their harmonic mean. Reports consume
prediction files, not live models.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .records import QARecord, read_jsonl
from .textnorm import canonical


def tokenize(text: str) -> list[str]:
    return canonical(text).split()


@dataclass(frozen=True)
class PairScore:
    precision: float
    recall: float
    f1: float
    empty_input: bool = False


class IdfWeights:
    """idf(w) = ln((N+1) / (1+df(w))) over the reference corpus."""

    def __init__(self, reference_token_lists: list[list[str]]):
        self.n_docs = len(reference_token_lists)
        self.df: dict[str, int] = {}
        for tokens in reference_token_lists:
            for token in set(tokens):
                self.df[token] = self.df.get(token, 0) + 1

    def weight(self, token: str) -> float:
        return math.log((self.n_docs + 1) / (1 + self.df.get(token, 0)))


def _f1(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def _weighted_mean(values: np.ndarray, weights: list[float] | None) -> float:
    if weights is None:
        return float(values.sum() / len(values))
    total = sum(weights)
    if total <= 0:
        return float(values.sum() / len(values))
    acc = 0.0
    for value, weight in zip(values, weights):
        acc += float(value) * weight
    return acc / total


def pair_score(
    candidate_tokens: list[str],
    candidate_vectors: np.ndarray,
    reference_tokens: list[str],
    reference_vectors: np.ndarray,
    idf: IdfWeights | None = None,
) -> PairScore:
    """Greedy-matching P/R/F1 between unit-norm token embedding lists."""
    if len(candidate_tokens) == 0 or len(reference_tokens) == 0:
        return PairScore(0.0, 0.0, 0.0, empty_input=True)
    similarity = candidate_vectors @ reference_vectors.T
    best_for_candidate = similarity.max(axis=1)
    best_for_reference = similarity.max(axis=0)
    cand_weights = [idf.weight(t) for t in candidate_tokens] if idf else None
    ref_weights = [idf.weight(t) for t in reference_tokens] if idf else None
    precision = _weighted_mean(best_for_candidate, cand_weights)
    recall = _weighted_mean(best_for_reference, ref_weights)
    return PairScore(precision, recall, _f1(precision, recall))


@dataclass
class ScoreReport:
    model: str
    provider: str
    idf: bool
    seeds: list[int]
    per_pair: dict[str, dict[str, float]]
    aggregate: dict[str, dict[str, float]]
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "provider": self.provider,
            "idf": self.idf,
            "seeds": list(self.seeds),
            "aggregate": self.aggregate,
            "per_pair": {k: self.per_pair[k] for k in sorted(self.per_pair)},
            "warnings": list(self.warnings),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
        )

    def per_pair_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["id", "precision", "recall", "f1"])
        for pair_id in sorted(self.per_pair):
            row = self.per_pair[pair_id]
            writer.writerow([pair_id, row["precision"], row["recall"], row["f1"]])
        return buffer.getvalue()


def read_predictions(path: str | Path) -> dict[str, str]:
    """JSONL of {id, output_text} -> ordered id -> text map."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                out[data["id"]] = data["output_text"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"prediction file line {lineno}: {exc}") from exc
    return out


def corpus_score(
    predictions_path: str | Path,
    references_path: str | Path,
    provider,
    seeds: list[int] = (1, 2, 3),
    idf: bool = False,
    model: str = "model",
) -> ScoreReport:
    """Score a prediction file against reference answers.

    One scoring run per seed (seeds only matter to providers that
    sample); aggregates are mean and population stddev across runs.
    """
    predictions = read_predictions(predictions_path)
    references = {r.id: r for r in read_jsonl(references_path)}
    missing = [pid for pid in predictions if pid not in references]
    if missing:
        raise ValueError(f"predictions without references: {missing[:5]}")

    reference_tokens = {rid: tokenize(rec.answer) for rid, rec in references.items()}
    idf_weights = IdfWeights(list(reference_tokens.values())) if idf else None

    run_means: list[dict[str, float]] = []
    per_pair_first: dict[str, dict[str, float]] = {}
    warning_ids: list[str] = []
    for run_index, seed in enumerate(seeds):
        scores: list[PairScore] = []
        for pair_id in sorted(predictions):
            cand_tokens = tokenize(predictions[pair_id])
            ref_tokens = reference_tokens[pair_id]
            cand_vecs = provider.token_vectors(cand_tokens, seed=seed) if cand_tokens else np.empty((0, 0))
            ref_vecs = provider.token_vectors(ref_tokens, seed=seed) if ref_tokens else np.empty((0, 0))
            score = pair_score(cand_tokens, cand_vecs, ref_tokens, ref_vecs, idf_weights)
            if score.empty_input and run_index == 0:
                warning_ids.append(pair_id)
            scores.append(score)
            if run_index == 0:
                per_pair_first[pair_id] = {
                    "precision": score.precision,
                    "recall": score.recall,
                    "f1": score.f1,
                }
        n = max(1, len(scores))
        run_means.append(
            {
                "precision": sum(s.precision for s in scores) / n,
                "recall": sum(s.recall for s in scores) / n,
                "f1": sum(s.f1 for s in scores) / n,
            }
        )

    aggregate: dict[str, dict[str, float]] = {}
    for metric in ("precision", "recall", "f1"):
        values = [m[metric] for m in run_means]
        mean = sum(values) / len(values)
        variance = sum((v - mean) ** 2 for v in values) / len(values)
        aggregate[metric] = {"mean": mean, "std": math.sqrt(variance)}

    return ScoreReport(
        model=model,
        provider=provider.name,
        idf=idf,
        seeds=list(seeds),
        per_pair=per_pair_first,
        aggregate=aggregate,
        warnings=[f"empty token list for {pid}" for pid in warning_ids],
    )


def report_csv_row(report: ScoreReport, configuration: str) -> list:
    """Row for the report CSV schema: model, configuration, P, R, F1, stddev."""
    return [
        report.model,
        configuration,
        report.aggregate["precision"]["mean"],
        report.aggregate["recall"]["mean"],
        report.aggregate["f1"]["mean"],
        report.aggregate["f1"]["std"],
    ]


@dataclass(frozen=True)
class ComparisonCell:
    model: str
    configuration: str
    f1_pct: float


@dataclass
class ComparisonTable:
    models: list[str]
    configurations: list[str]
    cells: dict[tuple[str, str], float]
    caption: str = ""

    def cell_text(self, model: str, configuration: str) -> str:
        value = self.cells.get((model, configuration))
        return "—" if value is None else f"{value:.2f}"


def build_comparison(cells: list[ComparisonCell], caption: str = "") -> ComparisonTable:
    """Rows and columns keep first-appearance order."""
    models: list[str] = []
    configurations: list[str] = []
    values: dict[tuple[str, str], float] = {}
    for cell in cells:
        if cell.model not in models:
            models.append(cell.model)
        if cell.configuration not in configurations:
            configurations.append(cell.configuration)
        values[(cell.model, cell.configuration)] = cell.f1_pct
    if not models or len(configurations) < 2:
        raise ValueError("comparison needs at least one model and two configurations")
    return ComparisonTable(
        models=models, configurations=configurations, cells=values, caption=caption
    )


def cells_from_csv(path: str | Path) -> list[ComparisonCell]:
    """Comparison input CSV: columns model, configuration, f1_pct."""
    cells = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            cells.append(
                ComparisonCell(
                    model=row["model"],
                    configuration=row["configuration"],
                    f1_pct=float(row["f1_pct"]),
                )
            )
    return cells


def render_comparison(table: ComparisonTable) -> tuple[str, str]:
    """Render to (text, csv). Column maxima are bold-marked in the text."""
    maxima: dict[str, float] = {}
    for configuration in table.configurations:
        values = [
            table.cells[(m, configuration)]
            for m in table.models
            if (m, configuration) in table.cells
        ]
        if values:
            maxima[configuration] = max(values)

    header = ["model"] + table.configurations
    text_rows = []
    for model in table.models:
        row = [model]
        for configuration in table.configurations:
            value = table.cells.get((model, configuration))
            if value is None:
                row.append("—")
            elif value == maxima.get(configuration):
                row.append(f"**{value:.2f}**")
            else:
                row.append(f"{value:.2f}")
        text_rows.append(row)
    widths = [
        max(len(header[i]), *(len(r[i]) for r in text_rows)) for i in range(len(header))
    ]
    lines = []
    if table.caption:
        lines.append(table.caption)
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip())
    for row in text_rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    text = "\n".join(lines)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for model in table.models:
        writer.writerow(
            [model]
            + [
                ""
                if (model, cfg) not in table.cells
                else f"{table.cells[(model, cfg)]:.2f}"
                for cfg in table.configurations
            ]
        )
    return text, buffer.getvalue()
