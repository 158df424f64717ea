"""Command-line entry points. Exit codes: 0 success, 1 domain error,
2 usage error. Subcommands never mutate the corpus files they read."""

from __future__ import annotations

import argparse
import sys

from . import agreement as agreement_mod
from . import corpus as corpus_mod
from . import generation, metrics, prompts, report as report_mod, service as service_mod
from .errors import QGBenchError
from .ioutil import read_json, sha256_file, write_json, atomic_write_text

FORMATS = ("lines", "csv", "md")


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=FORMATS, default="lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgbench",
        description="Benchmark harness for prompt-based question generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a corpus file against the schema rules")
    p.add_argument("--corpus", required=True)
    _add_format(p)

    p = sub.add_parser("stats", help="corpus summary statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--top-bigrams", type=int, default=10)
    _add_format(p)

    p = sub.add_parser("split", help="deterministic train/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("render", help="print model inputs for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--setting", required=True,
                   help="long | short | without (or the canonical names)")
    p.add_argument("--kind", default="instruction",
                   choices=("instruction", "segmented-source", "segmented-target"))
    p.add_argument("--record-id", action="append", default=None,
                   help="limit to specific record ids (repeatable)")

    p = sub.add_parser("generate", help="drive a generation endpoint over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--setting", required=True)
    p.add_argument("--config", default=None,
                   help="JSON file with models, base_url, style, params, "
                        "parallelism, cache_dir; explicit flags override it")
    p.add_argument("--adapter", choices=("mock", "http"), default=None)
    p.add_argument("--model", default=None, help="model id (required for http)")
    p.add_argument("--base-url", default=None, help="endpoint base URL (http adapter)")
    p.add_argument("--style", choices=("chat", "completions"), default=None)
    p.add_argument("--input-kind", choices=("instruction", "segmented"), default="instruction")
    p.add_argument("--runs-dir", required=True)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--presence-penalty", type=float, default=None)
    p.add_argument("--frequency-penalty", type=float, default=None)
    p.add_argument("--run-id", default=None,
                   help="fixed run id (single-model invocations only)")
    p.add_argument("--split-seed", type=int, default=None,
                   help="recorded in the run manifest for provenance")

    p = sub.add_parser("score", help="score a persisted run against gold questions")
    p.add_argument("--runs-dir", required=True)
    p.add_argument("--run-id", required=True)
    p.add_argument("--corpus", required=True, help="gold corpus file")
    p.add_argument("--embeddings", default=None, help="JSON token-vector file")
    p.add_argument("--out-dir", default=None)
    _add_format(p)

    p = sub.add_parser("kappa", help="inter-annotator agreement from a ratings file")
    p.add_argument("--ratings", required=True)
    _add_format(p)

    p = sub.add_parser("report", help="render the report document set")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("--runs-dir", default=None)
    p.add_argument("--run-id", action="append", default=None,
                   help="runs to score and include (repeatable; default: all)")
    p.add_argument("--ratings", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--sections", default="stats,auto,human,agreement",
                   help="comma-separated subset of stats,auto,human,agreement")

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int, default=None, help="override the config port")

    return parser


def _print_rows(rows: list[list[str]], fmt: str, header: list[str]) -> None:
    if fmt == "csv":
        print(",".join(header))
        for row in rows:
            print(",".join(row))
    elif fmt == "md":
        print("| " + " | ".join(header) + " |")
        print("|" + "|".join(" --- " for _ in header) + "|")
        for row in rows:
            print("| " + " | ".join(row) + " |")
    else:
        for row in rows:
            print("\t".join(row))


def cmd_validate(args) -> int:
    records = corpus_mod.load_corpus(args.corpus)
    rows = []
    worst_is_error = False
    for record in records:
        for issue in corpus_mod.validate(record):
            rows.append([record.id, issue.severity.value, issue.code, issue.message])
            worst_is_error = worst_is_error or issue.severity is corpus_mod.Severity.ERROR
    _print_rows(rows, args.format, ["record_id", "severity", "code", "message"])
    print(f"checked {len(records)} records, {len(rows)} issues", file=sys.stderr)
    return 1 if worst_is_error else 0


def cmd_stats(args) -> int:
    stats = corpus_mod.stats(corpus_mod.load_corpus(args.corpus))
    rows = [["total", str(stats.total)]]
    for subject, count in sorted(stats.per_subject.items()):
        rows.append(["subject", subject, str(count)])
    if stats.mean_words:
        for field_name in ("context", "long_prompt", "short_prompt", "question"):
            rows.append(["mean_words", field_name, f"{stats.mean_words[field_name]:.2f}"])
    for b in stats.leading_bigrams[: args.top_bigrams]:
        rows.append(["bigram", b.bigram, str(b.count), f"{b.share:.2f}"])
    _print_rows(rows, args.format, ["row", "key", "value", "share"])
    return 0


def cmd_split(args) -> int:
    records = corpus_mod.load_corpus(args.corpus)
    spec = corpus_mod.SplitSpec(ratio=args.ratio, seed=args.seed)
    train, test = corpus_mod.split(records, spec)
    import os

    os.makedirs(args.out_dir, exist_ok=True)
    train_path = os.path.join(args.out_dir, "train.ndjson")
    test_path = os.path.join(args.out_dir, "test.ndjson")
    atomic_write_text(train_path, corpus_mod.serialize_quads(train))
    atomic_write_text(test_path, corpus_mod.serialize_quads(test))
    write_json(
        os.path.join(args.out_dir, "manifest.json"),
        {
            "ratio": args.ratio,
            "seed": args.seed,
            "input_digest": sha256_file(args.corpus),
            "train_count": len(train),
            "test_count": len(test),
            "train_file": "train.ndjson",
            "test_file": "test.ndjson",
        },
    )
    print(f"train\t{len(train)}")
    print(f"test\t{len(test)}")
    return 0


def cmd_render(args) -> int:
    records = corpus_mod.load_corpus(args.corpus)
    setting = prompts.parse_setting(args.setting)
    if args.record_id:
        wanted = set(args.record_id)
        records = [r for r in records if r.id in wanted]
    for record in records:
        if args.kind == "instruction":
            rendered = prompts.render_instruction(record, setting)
        else:
            side = prompts.Side.SOURCE if args.kind.endswith("source") else prompts.Side.TARGET
            rendered = prompts.render_segmented(record, setting, side)
        print(prompts.flatten(rendered))
    return 0


def _pick(flag_value, config: dict, key: str, default):
    return flag_value if flag_value is not None else config.get(key, default)


def _generation_plan(args) -> tuple[list, generation.GenParams, int, str | None]:
    """Merge the generate flags over the optional config file: flags win,
    then config values, then built-in defaults. Returns (adapters, params,
    parallelism, cache_dir)."""
    config = read_json(args.config) if args.config else {}
    cfg_params = config.get("params", {})
    params = generation.GenParams(
        max_tokens=_pick(args.max_tokens, cfg_params, "max_tokens", 50),
        temperature=_pick(args.temperature, cfg_params, "temperature", 0.7),
        presence_penalty=_pick(args.presence_penalty, cfg_params, "presence_penalty", None),
        frequency_penalty=_pick(args.frequency_penalty, cfg_params, "frequency_penalty", None),
    )
    parallelism = _pick(args.parallelism, config, "parallelism", 1)
    cache_dir = args.cache_dir if args.cache_dir is not None else config.get("cache_dir")

    adapter_kind = _pick(args.adapter, config, "adapter", "http")
    if adapter_kind == "mock":
        return [generation.MockEchoAdapter()], params, parallelism, cache_dir

    models = [args.model] if args.model else config.get("models") or []
    if not models and config.get("model"):
        models = [config["model"]]
    base_url = _pick(args.base_url, config, "base_url", None)
    style = _pick(args.style, config, "style", "chat")
    if not models or not base_url:
        raise QGBenchError(
            "http adapter needs a model (--model or config models) and a base URL"
        )
    adapters = [
        generation.ChatCompletionsAdapter(base_url, model, style=style)
        for model in models
    ]
    return adapters, params, parallelism, cache_dir


def cmd_generate(args) -> int:
    records = corpus_mod.load_corpus(args.corpus)
    setting = prompts.parse_setting(args.setting)
    adapters, params, parallelism, cache_dir = _generation_plan(args)
    if args.run_id and len(adapters) > 1:
        raise QGBenchError("--run-id only applies to single-model invocations")
    cache = generation.ResultCache(cache_dir) if cache_dir else None
    digest = sha256_file(args.corpus)
    for adapter in adapters:
        run = generation.run_batch(
            adapter,
            records,
            setting,
            params,
            parallelism=parallelism,
            cache=cache,
            input_kind=args.input_kind,
            run_id=args.run_id,
        )
        generation.save_run(
            run, args.runs_dir, corpus_digest=digest, split_seed=args.split_seed
        )
        ok = sum(1 for r in run.results if r.is_ok)
        print(f"run_id\t{run.run_id}")
        print(f"model\t{run.model_id}")
        print(f"ok\t{ok}")
        print(f"failed\t{len(run.results) - ok}")
    return 0


def _score_run(runs_dir: str, run_id: str, gold: dict, embeddings_path: str | None):
    run = generation.load_run(runs_dir, run_id)
    provider = metrics.FileEmbeddings(embeddings_path) if embeddings_path else None
    return metrics.evaluate_run(run, gold, provider)


def cmd_score(args) -> int:
    gold = {r.id: r.question for r in corpus_mod.load_corpus(args.corpus)}
    report = _score_run(args.runs_dir, args.run_id, gold, args.embeddings)
    if args.out_dir:
        import os

        os.makedirs(args.out_dir, exist_ok=True)
        write_json(os.path.join(args.out_dir, f"{args.run_id}.scores.json"), report.as_dict())
        atomic_write_text(
            os.path.join(args.out_dir, f"{args.run_id}.scores.csv"),
            metrics.report_to_csv(report),
        )
    means = report.corpus_means
    rows = [
        ["rouge2_f1", f"{means.rouge2.f1:.4f}"],
        ["rougeL_f1", f"{means.rouge_l.f1:.4f}"],
        ["meteor", f"{means.meteor:.4f}"],
        ["chrf_pct", f"{means.chrf * 100:.2f}"],
        ["bleu_pct", f"{means.bleu * 100:.2f}"],
        ["bertscore_f1", f"{means.bertscore.f1:.4f}" if means.bertscore else "-"],
        ["scored", str(report.scored)],
        ["failed", str(report.failed)],
    ]
    _print_rows(rows, args.format, ["metric", "value"])
    return 0


def cmd_kappa(args) -> int:
    ratings = agreement_mod.load_ratings(args.ratings)
    report = agreement_mod.kappa_per_criterion(ratings)
    rows = [[c, f"{report.kappa[c]:.4f}"] for c in agreement_mod.CRITERIA]
    rows.append(["n_items", str(report.n_items)])
    rows.append(["n_raters", str(report.n_raters)])
    _print_rows(rows, args.format, ["criterion", "kappa"])
    return 0


def cmd_report(args) -> int:
    sections = {s.strip() for s in args.sections.split(",") if s.strip()}
    unknown = sections - {"stats", "auto", "human", "agreement"}
    if unknown:
        raise QGBenchError(f"unknown report sections: {', '.join(sorted(unknown))}")

    stats = None
    gold = {}
    if args.corpus:
        records = corpus_mod.load_corpus(args.corpus)
        gold = {r.id: r.question for r in records}
        if "stats" in sections:
            stats = corpus_mod.stats(records)

    scores = []
    target_meta: dict[str, tuple[str, str]] = {}
    if args.runs_dir:
        manifests = generation.list_runs(args.runs_dir)
        wanted = set(args.run_id) if args.run_id else {m["run_id"] for m in manifests}
        for manifest in manifests:
            rid = manifest["run_id"]
            run = generation.load_run(args.runs_dir, rid)
            for result in run.results:
                if result.is_ok:
                    key = service_mod.target_id(rid, result.record_id)
                    target_meta[key] = (run.model_id, run.setting.value)
            if "auto" in sections and rid in wanted and gold:
                scores.append(_score_run(args.runs_dir, rid, gold, args.embeddings))

    rating_rows = []
    agreement_report = None
    if args.ratings:
        ratings = agreement_mod.load_ratings(args.ratings)
        if "human" in sections and ratings:
            rating_rows = agreement_mod.aggregate_ratings(ratings, target_meta)
        if "agreement" in sections and ratings:
            try:
                agreement_report = agreement_mod.kappa_per_criterion(ratings)
            except agreement_mod.AgreementError as exc:
                print(f"agreement skipped: {exc}", file=sys.stderr)

    docs = report_mod.render_report(stats, scores, agreement_report, rating_rows)
    for path in report_mod.write_report(docs, args.out_dir):
        print(path)
    return 0


def cmd_serve(args) -> int:
    config = service_mod.ServiceConfig.from_file(args.config)
    if args.port is not None:
        config.port = args.port
    service_mod.serve(config)
    return 0


_COMMANDS = {
    "validate": cmd_validate,
    "stats": cmd_stats,
    "split": cmd_split,
    "render": cmd_render,
    "generate": cmd_generate,
    "score": cmd_score,
    "kappa": cmd_kappa,
    "report": cmd_report,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except QGBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
