"""Deterministic generation planning.

A plan is a pure function of (seed corpus, templates, config, master
seed): requests cycle round-robin over every template x slot-value
combination, sources are interleaved to meet per-source quotas exactly,
and each request's seed exemplars are drawn without replacement by a
PRNG streamed from mix64(master_seed + request_index).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from itertools import product
from pathlib import Path

from .hashing import SplitMix64, hash64, mix64
from .records import QARecord
from .textnorm import canonical

SLOT_NAMES = ("category", "tone", "severity", "demographic")
KNOWN_PLACEHOLDERS = SLOT_NAMES + ("exemplars", "format_instructions")

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class TemplateError(ValueError):
    pass


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    applicable_categories: tuple[str, ...]

    def placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.body)

    def validate(self) -> None:
        names = self.placeholders()
        for name in names:
            if name not in KNOWN_PLACEHOLDERS:
                raise TemplateError(
                    f"template {self.template_id}: unknown placeholder {{{name}}}"
                )
        for required in ("exemplars", "format_instructions"):
            if names.count(required) != 1:
                raise TemplateError(
                    f"template {self.template_id}: {{{required}}} must appear exactly once"
                )


@dataclass(frozen=True)
class GenerationRequest:
    request_id: str
    source: str
    template_id: str
    slot_values: dict[str, str]
    exemplar_ids: tuple[str, ...]
    rendered_prompt: str

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "source": self.source,
            "template_id": self.template_id,
            "slot_values": dict(self.slot_values),
            "exemplar_ids": list(self.exemplar_ids),
            "rendered_prompt": self.rendered_prompt,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationRequest":
        return cls(
            request_id=d["request_id"],
            source=d["source"],
            template_id=d["template_id"],
            slot_values=dict(d["slot_values"]),
            exemplar_ids=tuple(d["exemplar_ids"]),
            rendered_prompt=d["rendered_prompt"],
        )


@dataclass
class GenerationPlan:
    plan_id: str
    master_seed: int
    total: int
    per_source: dict[str, int]
    requests: list[GenerationRequest]
    config_digest: str = ""

    def to_dict(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "master_seed": self.master_seed,
            "total": self.total,
            "per_source": {k: self.per_source[k] for k in sorted(self.per_source)},
            "config_digest": self.config_digest,
            "requests": [r.to_dict() for r in self.requests],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationPlan":
        return cls(
            plan_id=d["plan_id"],
            master_seed=d["master_seed"],
            total=d["total"],
            per_source=dict(d["per_source"]),
            requests=[GenerationRequest.from_dict(r) for r in d["requests"]],
            config_digest=d.get("config_digest", ""),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":")),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "GenerationPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _default_resource(name: str) -> str:
    return (
        importlib_resources.files("qaforge.resources").joinpath(name).read_text("utf-8")
    )


def load_templates(
    path: str | Path | None = None,
) -> tuple[list[PromptTemplate], dict[str, list[str]]]:
    """Load templates and slot pools; validates every template body."""
    raw = Path(path).read_text(encoding="utf-8") if path else _default_resource("templates.json")
    data = json.loads(raw)
    slot_pools = {name: list(values) for name, values in data.get("slots", {}).items()}
    for name in slot_pools:
        if name not in SLOT_NAMES:
            raise TemplateError(f"unknown slot pool {name!r}")
    templates = []
    for entry in data["templates"]:
        template = PromptTemplate(
            template_id=entry["template_id"],
            body=entry["body"],
            applicable_categories=tuple(entry.get("applicable_categories") or ("general",)),
        )
        template.validate()
        templates.append(template)
    if not templates:
        raise TemplateError("template file contains no templates")
    return templates, slot_pools


def load_category_rules(path: str | Path | None = None) -> list[tuple[str, list[str]]]:
    """Ordered (label, keywords) pairs; keywords are canonicalized."""
    raw = Path(path).read_text(encoding="utf-8") if path else _default_resource("categories.json")
    data = json.loads(raw)
    if not isinstance(data, dict):
        raise TemplateError("category rule file must be an object of label -> keywords")
    return [(label, [canonical(k) for k in keywords]) for label, keywords in data.items()]


def categorize_seed(record: QARecord, rules: list[tuple[str, list[str]]]) -> str:
    """First rule-file category with a keyword hit on canonical text."""
    text = canonical(record.question) + " " + canonical(record.answer)
    for label, keywords in rules:
        if any(keyword and keyword in text for keyword in keywords):
            return label
    return "general"


def categorize_corpus(records: list[QARecord], rules: list[tuple[str, list[str]]]) -> None:
    for record in records:
        record.category = categorize_seed(record, rules)


def render(
    template: PromptTemplate,
    slot_values: dict[str, str],
    exemplars: list[QARecord],
) -> str:
    """Substitute placeholders; exemplars become numbered QA blocks."""
    from .genclient import FORMAT_INSTRUCTIONS

    blocks = []
    for i, exemplar in enumerate(exemplars, 1):
        blocks.append(f"{i}. سؤال المريض: {exemplar.question}\n   إجابة الطبيب: {exemplar.answer}")
    values = dict(slot_values)
    values["exemplars"] = "\n".join(blocks)
    values["format_instructions"] = FORMAT_INSTRUCTIONS

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise TemplateError(
                f"template {template.template_id}: no value for placeholder {{{name}}}"
            )
        return values[name]

    return _PLACEHOLDER_RE.sub(substitute, template.body)


def _slot_combos(
    template: PromptTemplate, slot_pools: dict[str, list[str]]
) -> list[dict[str, str]]:
    """Slot-value combinations for the slots this template actually uses."""
    used = set(template.placeholders())
    axes: list[tuple[str, list[str]]] = [("category", list(template.applicable_categories))]
    for name in ("tone", "severity", "demographic"):
        if name in used:
            pool = slot_pools.get(name)
            if not pool:
                raise TemplateError(
                    f"template {template.template_id} uses {{{name}}} but no pool is defined"
                )
            axes.append((name, pool))
    combos = []
    for values in product(*(pool for _, pool in axes)):
        combos.append({name: value for (name, _), value in zip(axes, values)})
    return combos


def _interleave_sources(per_source: dict[str, int]) -> list[str]:
    """Round-robin over sources (sorted by name) until quotas are spent."""
    remaining = {name: per_source[name] for name in sorted(per_source)}
    order: list[str] = []
    while any(v > 0 for v in remaining.values()):
        for name in sorted(remaining):
            if remaining[name] > 0:
                remaining[name] -= 1
                order.append(name)
    return order


@dataclass(frozen=True)
class PlanConfig:
    total: int
    per_source: dict[str, int]
    exemplars_per_prompt: int = 3
    master_seed: int = 0


def build_plan(
    seeds: list[QARecord],
    templates: list[PromptTemplate],
    slot_pools: dict[str, list[str]],
    config: PlanConfig,
) -> GenerationPlan:
    """Build a byte-reproducible generation plan.

    Exemplars for a request come from its category's seed pool when that
    pool has at least exemplars_per_prompt records, otherwise from the
    "general" pool (the request keeps its declared category).
    """
    if config.total <= 0:
        raise PlanError("plan size must be positive")
    if not seeds:
        raise PlanError("seed corpus is empty")
    if sum(config.per_source.values()) != config.total:
        raise PlanError("per-source quotas must sum to the plan total")
    if any(q < 0 for q in config.per_source.values()):
        raise PlanError("per-source quotas must be non-negative")

    pools: dict[str, list[QARecord]] = {}
    for seed in seeds:
        pools.setdefault(seed.category, []).append(seed)
    general_pool = pools.get("general", [])
    k = config.exemplars_per_prompt

    combos: list[tuple[PromptTemplate, dict[str, str]]] = []
    for template in templates:
        for combo in _slot_combos(template, slot_pools):
            combos.append((template, combo))
    if not combos:
        raise PlanError("no template/slot combinations available")

    source_order = _interleave_sources(config.per_source)
    plan_key = json.dumps(
        {"per_source": dict(sorted(config.per_source.items())), "total": config.total},
        sort_keys=True,
    )
    plan_id = f"plan-{mix64(config.master_seed ^ hash64(plan_key)):016x}"

    requests: list[GenerationRequest] = []
    for index in range(config.total):
        template, slot_values = combos[index % len(combos)]
        category = slot_values["category"]
        pool = pools.get(category, [])
        if len(pool) < k:
            pool = general_pool
        if len(pool) < k:
            raise PlanError(
                f"not enough seeds for category {category!r} "
                f"(need {k}, general fallback has {len(general_pool)})"
            )
        rng = SplitMix64(mix64(config.master_seed + index))
        exemplars = [pool[j] for j in rng.sample_without_replacement(len(pool), k)]
        request = GenerationRequest(
            request_id=f"{plan_id}:{index:06d}",
            source=source_order[index],
            template_id=template.template_id,
            slot_values=dict(slot_values),
            exemplar_ids=tuple(e.id for e in exemplars),
            rendered_prompt=render(template, slot_values, exemplars),
        )
        requests.append(request)

    return GenerationPlan(
        plan_id=plan_id,
        master_seed=config.master_seed,
        total=config.total,
        per_source=dict(config.per_source),
        requests=requests,
    )
