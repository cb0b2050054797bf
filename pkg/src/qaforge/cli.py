"""Command-line entry point: the pipeline as subcommands.

Every command reads one declarative JSON config (--config) plus a few
overrides, writes only into the declared output directory, and stamps
artifacts with the config digest. Artifacts whose digests disagree
refuse to combine unless --force is given.

Exit codes: 0 success, 1 validation/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import assemble as assemble_mod
from . import embed, review_api
from . import score as score_mod
from .config import Config, ConfigError
from .curate import CurateConfig, FunnelResult, run_funnel, funnel_stats
from .genclient import LiveProvider, MockProvider, execute, load_checkpoint
from .promptgen import (
    GenerationPlan,
    PlanConfig,
    PlanError,
    TemplateError,
    build_plan,
    categorize_corpus,
    load_category_rules,
    load_templates,
)
from .records import CorpusFormatError, read_jsonl, write_jsonl


class DigestMismatch(ValueError):
    pass


def _load_config(args) -> Config:
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("corpus", {})["master_seed"] = args.seed
    if getattr(args, "out_dir", None):
        overrides.setdefault("corpus", {})["out_dir"] = args.out_dir
    if getattr(args, "n", None) is not None:
        overrides.setdefault("promptgen", {})["n_total"] = args.n
    return Config.load(getattr(args, "config", None), overrides)


def _out_dir(cfg: Config) -> Path:
    out = Path(cfg.data["corpus"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_digest(artifact_digest: str, cfg: Config, what: str, force: bool) -> None:
    if artifact_digest and artifact_digest != cfg.digest() and not force:
        raise DigestMismatch(
            f"{what} was produced with config digest {artifact_digest}, current is "
            f"{cfg.digest()}; pass --force to combine anyway"
        )


def _load_seed_corpus(cfg: Config):
    seed_path = cfg.data["corpus"]["seed_path"]
    if not seed_path:
        raise ConfigError("corpus.seed_path is not set")
    seeds = read_jsonl(seed_path)
    if not seeds:
        raise ConfigError(f"seed corpus {seed_path} is empty")
    rules = load_category_rules(cfg.data["promptgen"]["category_rules_path"] or None)
    categorize_corpus(seeds, rules)
    return seeds


def _per_source(cfg: Config) -> dict[str, int]:
    section = cfg.data["promptgen"]
    total = int(section["n_total"])
    per_source = {k: int(v) for k, v in section["per_source"].items()}
    if sum(per_source.values()) != total:
        # n_total was overridden: redistribute evenly over configured sources
        names = sorted(per_source)
        share, extra = divmod(total, len(names))
        per_source = {
            name: share + (1 if i < extra else 0) for i, name in enumerate(names)
        }
    return per_source


def cmd_plan(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    seeds = _load_seed_corpus(cfg)
    templates, slot_pools = load_templates(
        cfg.data["promptgen"]["templates_path"] or None
    )
    plan = build_plan(
        seeds,
        templates,
        slot_pools,
        PlanConfig(
            total=int(cfg.data["promptgen"]["n_total"]),
            per_source=_per_source(cfg),
            exemplars_per_prompt=int(cfg.data["promptgen"]["exemplars_per_prompt"]),
            master_seed=cfg.master_seed,
        ),
    )
    plan.config_digest = cfg.digest()
    plan.save(out / "plan.json")
    print(f"plan {plan.plan_id}: {plan.total} requests -> {out / 'plan.json'}")
    return 0


def _build_providers(cfg: Config, plan: GenerationPlan, provider_override: str | None):
    sources = sorted({r.source for r in plan.requests})
    if provider_override == "mock" or (
        provider_override is None and set(sources) == {"mock"}
    ):
        seeds = _load_seed_corpus(cfg)
        malformed_rate = float(cfg.data["providers"]["mock"]["malformed_rate"])
        mock_cfg = cfg.provider_config("mock")
        return {
            source: MockProvider(
                seeds, plan.master_seed, malformed_rate, config=mock_cfg
            )
            for source in sources
        }
    providers = {}
    for source in sources:
        if source == "mock":
            seeds = _load_seed_corpus(cfg)
            providers[source] = MockProvider(
                seeds,
                plan.master_seed,
                float(cfg.data["providers"]["mock"]["malformed_rate"]),
                config=cfg.provider_config("mock"),
            )
        else:
            providers[source] = LiveProvider(cfg.provider_config(source))
    return providers


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    plan = GenerationPlan.load(out / "plan.json")
    _check_digest(plan.config_digest, cfg, "plan.json", args.force)
    providers = _build_providers(cfg, plan, args.provider)
    result = execute(
        plan,
        providers,
        concurrency_limit=args.concurrency,
        checkpoint_path=out / "completions.jsonl",
    )
    meta = {
        "config_digest": cfg.digest(),
        "plan_id": plan.plan_id,
        "completed": len(result.completions),
        "failed": len(result.failures),
        "provider_calls": result.provider_calls,
    }
    (out / "completions.meta.json").write_text(json.dumps(meta, indent=2), "utf-8")
    if result.failures:
        with open(out / "failures.jsonl", "w", encoding="utf-8") as fh:
            for failure in result.failures:
                fh.write(json.dumps(failure.to_dict(), ensure_ascii=False) + "\n")
    print(
        f"generated {len(result.completions)}/{plan.total} "
        f"({len(result.failures)} failures, {result.provider_calls} provider calls)"
    )
    return 0


def _embedding_provider(cfg: Config):
    section = cfg.data["embeddings"]
    if section["provider"] == "http":
        return embed.HttpProvider(section["endpoint"], section["auth_env"] or None)
    return embed.DeterministicProvider()


def _run_curate(cfg: Config, out: Path, force: bool) -> FunnelResult:
    plan = GenerationPlan.load(out / "plan.json")
    _check_digest(plan.config_digest, cfg, "plan.json", force)
    meta_path = out / "completions.meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text("utf-8"))
        _check_digest(meta.get("config_digest", ""), cfg, "completions", force)
    done = load_checkpoint(out / "completions.jsonl")
    completions = [done[r.request_id] for r in plan.requests if r.request_id in done]

    seeds = _load_seed_corpus(cfg)
    provider = _embedding_provider(cfg)
    seed_index = embed.build_seed_index(seeds, provider, cfg.filter())
    curate_cfg = CurateConfig(
        langguard=cfg.langguard(),
        dedup=cfg.dedup(),
        filter=cfg.filter(),
        question_chars=cfg.question_chars(),
        answer_chars=cfg.answer_chars(),
        created_at=cfg.created_at,
        config_digest=cfg.digest(),
        run_id=f"run-{cfg.digest()}",
    )
    return run_funnel(completions, plan, seed_index, curate_cfg, provider)


def cmd_curate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    result = _run_curate(cfg, out, args.force)
    write_jsonl(result.accepted, out / "accepted.jsonl")
    with open(out / "rejections.jsonl", "w", encoding="utf-8") as fh:
        for entry in result.rejections:
            fh.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")
    with open(out / "duplicates.jsonl", "w", encoding="utf-8") as fh:
        for pair in result.duplicates:
            fh.write(json.dumps(pair.to_dict(), ensure_ascii=False) + "\n")
    (out / "curation_report.json").write_text(
        json.dumps(result.report.to_dict(), ensure_ascii=False, indent=2), "utf-8"
    )
    text, csv_text = funnel_stats(result.report)
    (out / "funnel_stats.txt").write_text(text + "\n", "utf-8")
    (out / "funnel_stats.csv").write_text(csv_text, "utf-8")
    print(text)
    print(f"accepted {len(result.accepted)}, rejected {len(result.rejections)}")
    return 0


def cmd_assemble(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    real = read_jsonl(cfg.data["corpus"]["seed_path"])
    synthetic = read_jsonl(out / "accepted.jsonl")
    if args.verdicts:
        verdicts = []
        with open(args.verdicts, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    verdicts.append(json.loads(line))
        synthetic = assemble_mod.apply_review_verdicts(synthetic, verdicts)
    merged, manifest, ledger = assemble_mod.merge_and_protect(
        real,
        synthetic,
        cfg.dedup(),
        corpus_id=cfg.data["corpus"]["corpus_id"],
        config_digest=cfg.digest(),
    )
    splits = assemble_mod.split(
        merged, ratio=float(cfg.data["assemble"]["split_ratio"]), seed=cfg.split_seed()
    )
    training_section = cfg.data["assemble"]["training"]
    training = assemble_mod.TrainingManifest(
        learning_rate=training_section["learning_rate"],
        schedule=training_section["schedule"],
        warmup_steps=training_section["warmup_steps"],
        epochs=training_section["epochs"],
        batch_size=training_section["batch_size"],
        mixed_precision=training_section["mixed_precision"],
        eval_strategy=training_section["eval_strategy"],
        train_path=str(out / "train.jsonl"),
        val_path=str(out / "val.jsonl"),
        config_digest=cfg.digest(),
    )
    paths = assemble_mod.export(splits, manifest, out, training)
    with open(out / "assemble_duplicates.jsonl", "w", encoding="utf-8") as fh:
        for pair in ledger:
            fh.write(json.dumps(pair.to_dict(), ensure_ascii=False) + "\n")
    print(
        f"assembled {len(merged)} records "
        f"(train {len(splits['train'])}, val {len(splits['val'])}) -> {paths['manifest']}"
    )
    return 0


def cmd_sample_review(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    accepted = read_jsonl(out / "accepted.jsonl")
    section = cfg.data["assemble"]["review_sample"]
    per_source = {k: int(v) for k, v in section["per_source"].items()}
    sample = assemble_mod.sample_for_review(
        accepted,
        n_total=int(section["n_total"]),
        per_source_quota=per_source,
        seed=cfg.master_seed,
    )
    write_jsonl(sample, out / "review_sample.jsonl")
    print(f"review sample of {len(sample)} -> {out / 'review_sample.jsonl'}")
    return 0


def cmd_serve_review(args) -> int:
    review_api.serve(args.sample, port=args.port, log_path=args.log)
    return 0


def cmd_score(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    section = cfg.data["score"]
    if section["provider"] == "http":
        provider = embed.HttpProvider(
            cfg.data["embeddings"]["endpoint"], cfg.data["embeddings"]["auth_env"] or None
        )
    else:
        provider = embed.DeterministicProvider()
    report = score_mod.corpus_score(
        args.predictions,
        args.references,
        provider,
        seeds=[int(s) for s in section["seeds"]],
        idf=bool(section["idf"]),
        model=args.model,
    )
    report.save(out / "score_report.json")
    (out / "per_pair.csv").write_text(report.per_pair_csv(), "utf-8")
    agg = report.aggregate
    print(
        f"{report.model}: P={agg['precision']['mean']:.4f} "
        f"R={agg['recall']['mean']:.4f} F1={agg['f1']['mean']:.4f} "
        f"(std {agg['f1']['std']:.4f})"
    )
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    for table_path in args.tables:
        stem = Path(table_path).stem
        cells = score_mod.cells_from_csv(table_path)
        table = score_mod.build_comparison(cells, caption=stem)
        text, csv_text = score_mod.render_comparison(table)
        (out / f"comparison_{stem}.txt").write_text(text + "\n", "utf-8")
        (out / f"comparison_{stem}.csv").write_text(csv_text, "utf-8")
        print(text)
        print()
    return 0


def cmd_funnel_stats(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    report_path = Path(args.report) if args.report else out / "curation_report.json"
    from .curate import CurationReport

    report = CurationReport.from_dict(json.loads(report_path.read_text("utf-8")))
    text, csv_text = funnel_stats(report)
    (out / "funnel_stats.csv").write_text(csv_text, "utf-8")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qaforge",
        description="Expand a seed QA corpus into a large curated training corpus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, force: bool = True):
        p.add_argument("--config", help="path to the pipeline JSON config")
        p.add_argument("--seed", type=int, help="override corpus.master_seed")
        p.add_argument("--out-dir", help="override corpus.out_dir")
        if force:
            p.add_argument(
                "--force", action="store_true", help="combine artifacts across digests"
            )

    p = sub.add_parser("plan", help="build a deterministic generation plan")
    common(p)
    p.add_argument("--n", type=int, help="override promptgen.n_total")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("generate", help="run the plan through providers")
    common(p)
    p.add_argument("--provider", choices=["mock"], help="serve all sources with the mock")
    p.add_argument("--concurrency", type=int, default=4)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("curate", help="run the curation funnel")
    common(p)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("assemble", help="merge, split and export the corpus")
    common(p)
    p.add_argument("--verdicts", help="review verdict log to apply before merging")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("sample-review", help="draw the human-review sample")
    common(p)
    p.set_defaults(func=cmd_sample_review)

    p = sub.add_parser("serve-review", help="serve the review API")
    p.add_argument("--sample", required=True, help="review sample JSONL")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--log", help="verdict log path (default: alongside the sample)")
    p.set_defaults(func=cmd_serve_review)

    p = sub.add_parser("score", help="score a prediction file against references")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--model", default="model")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="render comparison tables from CSV inputs")
    common(p)
    p.add_argument("--tables", nargs="+", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("funnel-stats", help="render the funnel table from a report")
    common(p)
    p.add_argument("--report", help="path to curation_report.json")
    p.set_defaults(func=cmd_funnel_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        PlanError,
        TemplateError,
        CorpusFormatError,
        DigestMismatch,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
