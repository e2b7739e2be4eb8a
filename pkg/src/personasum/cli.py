"""Command-line pipeline driver.

Subcommands cover the full path from raw documents to reports:
ingest, split, generate, filter, export-train, infer, eval, critique,
compare-judges, agree, sweep, make-tasks, serve, report.

Exit codes: 0 success, 1 pipeline failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from personasum import PersonasumError
from personasum.corpus import Document, SplitSpec, assign_splits, ingest_file, split_counts
from personasum.gateway import (
    DEFAULT_MAX_NEW_TOKENS,
    DEFAULT_TEMPERATURE,
    CompletionConfig,
    Gateway,
    sweep as run_sweep,
)
from personasum.prompts import DEFAULT_REGISTRY, ChatPrompt, PersonaRegistry, render_finetune_record
from personasum.records import iter_records, write_records


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _load_config_defaults(path: str) -> dict[str, str]:
    """key=value lines; '#' starts a comment. Keys use the flag dest names."""
    defaults = {}
    for line_no, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PersonasumError(f"{path}:{line_no}: expected key=value")
        key, value = line.split("=", 1)
        defaults[key.strip().replace("-", "_")] = value.strip()
    return defaults


def _registry(args) -> PersonaRegistry:
    if getattr(args, "personas_file", None):
        return PersonaRegistry.from_file(args.personas_file)
    return DEFAULT_REGISTRY


def _personas(args, registry: PersonaRegistry) -> list[str]:
    raw = getattr(args, "personas", None)
    if not raw:
        return registry.names()
    return [registry.get(name).name for name in raw.split(",") if name.strip()]


def _gateway(args) -> Gateway:
    return Gateway(cache_dir=getattr(args, "cache_dir", None),
                   trace_path=getattr(args, "trace", None))


def _config(args, role: str) -> CompletionConfig:
    return CompletionConfig(
        endpoint_url=args.endpoint,
        model_id=args.model,
        temperature=args.temperature,
        max_new_tokens=args.max_new_tokens,
        timeout_s=args.timeout_s,
        max_retries=args.max_retries,
        role=role,
    )


def _add_gateway_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--endpoint", required=True, help="chat-completions endpoint URL")
    parser.add_argument("--model", required=True, help="model identifier")
    parser.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    parser.add_argument("--max-new-tokens", type=int, default=DEFAULT_MAX_NEW_TOKENS)
    parser.add_argument("--timeout-s", type=float, default=60.0)
    parser.add_argument("--max-retries", type=int, default=3)
    parser.add_argument("--cache-dir", default=None, help="completion cache directory")
    parser.add_argument("--trace", default=None, help="append request traces to this file")
    parser.add_argument("--parallelism", type=int, default=1)


def _load_documents(path: str) -> list[Document]:
    return [Document.from_record(r) for r in iter_records(path)]


def _load_summaries(path: str):
    from personasum.generation import PersonaSummary
    return [PersonaSummary.from_record(r) for r in iter_records(path)]


# -- subcommand implementations ---------------------------------------------


def cmd_ingest(args) -> int:
    paths: list[Path] = []
    root = Path(args.input)
    if root.is_dir():
        paths = sorted(p for p in root.iterdir() if p.is_file())
    elif root.exists():
        paths = [root]
    else:
        raise PersonasumError(f"input path not found: {root}")
    from personasum.corpus import EmptyBody
    docs = []
    skipped = 0
    for path in paths:
        try:
            docs.append(ingest_file(path, fmt=args.format, min_words=args.min_words))
        except EmptyBody as exc:
            skipped += 1
            print(f"skipped: {exc}", file=sys.stderr)
    write_records(args.out, [d.to_record() for d in docs])
    print(f"ingested {len(docs)} documents ({skipped} skipped) -> {args.out}")
    return 0


def cmd_split(args) -> int:
    docs = _load_documents(args.corpus)
    spec = SplitSpec(train=args.train, validation=args.validation,
                     test=args.test, seed=args.seed)
    assigned = assign_splits(docs, spec)
    write_records(args.out, [d.to_record() for d in assigned])
    counts = split_counts(assigned)
    print("split counts: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_generate(args) -> int:
    from personasum.generation import generate_for_document
    registry = _registry(args)
    personas = _personas(args, registry)
    docs = _load_documents(args.corpus)
    if args.split:
        docs = [d for d in docs if d.split == args.split]
    gateway = _gateway(args)
    config = _config(args, role="teacher")
    summaries = []
    failures = []
    for doc in docs:
        got, failed = generate_for_document(doc, personas, gateway, config,
                                            registry=registry)
        summaries.extend(got)
        failures.extend(failed)
    write_records(args.out, [s.to_record() for s in summaries])
    if failures:
        write_records(str(args.out) + ".failed", [f.to_record() for f in failures])
        print(f"{len(failures)} persona generations failed -> {args.out}.failed",
              file=sys.stderr)
    print(f"generated {len(summaries)} summaries -> {args.out}")
    return 0


def cmd_filter(args) -> int:
    from personasum.filtering import load_lexicon, run_filter
    registry = _registry(args)
    summaries = _load_summaries(args.infile)
    docs = _load_documents(args.corpus)
    lexicon = load_lexicon(args.lexicon)
    kept, report = run_filter(summaries, docs, lexicon, threshold=args.threshold,
                              fuzzy=args.fuzzy, exhaustive=args.exhaustive,
                              registry=registry)
    write_records(args.out, [s.to_record() for s in kept])
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    Path(args.report).write_text(json.dumps(report.to_record(), sort_keys=True,
                                            indent=2) + "\n", "utf-8")
    print(f"kept {report.kept_count}/{report.pre_count} "
          f"({report.overall_removed_pct:.2f}% removed) -> {args.out}")
    return 0


def cmd_export_train(args) -> int:
    registry = _registry(args)
    summaries = _load_summaries(args.summaries)
    docs = {d.doc_id: d for d in _load_documents(args.corpus)}
    records = []
    for s in summaries:
        if s.filter_flags:
            continue
        if s.origin != "teacher":
            continue
        doc = docs.get(s.doc_id)
        if doc is None:
            raise PersonasumError(f"no document for summary {s.key()}")
        if args.split and doc.split != args.split:
            continue
        records.append(render_finetune_record(s.persona, doc.body, s.text,
                                              doc_id=s.doc_id, registry=registry))
    write_records(args.out, [r.to_record() for r in records])
    print(f"exported {len(records)} fine-tune records -> {args.out}")
    return 0


def cmd_infer(args) -> int:
    from personasum.generation import EmptyGeneration, infer_student
    from personasum.gateway import GatewayError
    registry = _registry(args)
    personas = _personas(args, registry)
    docs = _load_documents(args.corpus)
    if args.split:
        docs = [d for d in docs if d.split == args.split]
    gateway = _gateway(args)
    config = _config(args, role="student")
    summaries = []
    failures = []
    for doc in docs:
        for persona in personas:
            try:
                summaries.append(infer_student(doc, persona, gateway, config,
                                               registry=registry))
            except (GatewayError, EmptyGeneration) as exc:
                failures.append({"doc_id": doc.doc_id, "persona": persona,
                                 "error": str(exc)})
    write_records(args.out, [s.to_record() for s in summaries])
    if failures:
        write_records(str(args.out) + ".failed", failures)
        print(f"{len(failures)} inferences failed -> {args.out}.failed", file=sys.stderr)
    print(f"inferred {len(summaries)} summaries -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    from personasum.metrics import HttpEmbeddingProvider, evaluate_corpus
    candidates = _load_summaries(args.candidates)
    references = {(s.doc_id, s.persona): s for s in _load_summaries(args.references)}
    pairs = []
    for c in candidates:
        ref = references.get((c.doc_id, c.persona))
        if ref is None:
            raise PersonasumError(f"no reference for {c.key()}")
        pairs.append((c.doc_id, c.persona, c.text, ref.text))
    embedder = HttpEmbeddingProvider(args.embedder) if args.embedder else None
    corpus_report = evaluate_corpus(pairs, embedder=embedder)
    payload = corpus_report.to_record()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", "utf-8")
    if args.per_pair:
        write_records(args.per_pair, [r.to_record() for r in corpus_report.reports])
    print(f"evaluated {len(pairs)} pairs -> {args.out}")
    return 0


def cmd_critique(args) -> int:
    from personasum.critic import critique
    registry = _registry(args)
    docs = {d.doc_id: d for d in _load_documents(args.corpus)}
    gateway = _gateway(args)
    config = _config(args, role="judge")
    results = []
    for record in iter_records(args.pairs):
        doc = docs.get(record["doc_id"])
        if doc is None:
            raise PersonasumError(f"no document {record['doc_id']!r} for critique pair")
        results.append(critique(doc, record["reference"], record["candidate"],
                                record["persona"], gateway, config, registry=registry))
    write_records(args.out, [r.to_record() for r in results])
    print(f"critiqued {len(results)} summaries -> {args.out}")
    return 0


def cmd_compare_judges(args) -> int:
    from personasum.critic import CritiqueResult, cross_judge_compare
    results_a = [CritiqueResult.from_record(r) for r in iter_records(args.a)]
    results_b = [CritiqueResult.from_record(r) for r in iter_records(args.b)]
    report = cross_judge_compare(results_a, results_b)
    print(json.dumps(report.to_record(), sort_keys=True, indent=2))
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_record(), sort_keys=True, indent=2) + "\n", "utf-8")
    return 0


def cmd_agree(args) -> int:
    from personasum.reports import render_agreement_report
    from personasum.service import AnnotationStore, TaskBoard, load_tasks
    store = AnnotationStore(args.store)
    board = TaskBoard(load_tasks(args.tasks), store, quorum=args.quorum)
    report = board.agreement_report()
    if args.task:
        report = {k: v for k, v in report.items() if k in (args.task, "records")}
    print(render_agreement_report(report), end="")
    if args.out:
        Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n",
                                  "utf-8")
    return 0


def cmd_sweep(args) -> int:
    prompts = [ChatPrompt(system=r["system"], user=r["user"])
               for r in iter_records(args.prompts)]
    references = None
    if args.references:
        references = [r["text"] for r in iter_records(args.references)]
        if len(references) != len(prompts):
            raise PersonasumError("references must align one-to-one with prompts")
    gateway = _gateway(args)
    config = _config(args, role=args.role)
    temperatures = [float(v) for v in args.temperatures.split(",") if v.strip()]
    token_values = [int(v) for v in args.token_grid.split(",") if v.strip()]

    evaluate = None
    if references is not None:
        from personasum.metrics import rouge_l

        def evaluate(texts: list[str]) -> dict[str, float]:
            if not texts:
                return {"rougeL_f1": 0.0}
            scores = [rouge_l(t, ref).f1 for t, ref in zip(texts, references)]
            return {"rougeL_f1": sum(scores) / len(scores)}

    rows = run_sweep(gateway, prompts, config, temperatures, token_values,
                     evaluate=evaluate, parallelism=args.parallelism)
    write_records(args.out, [r.to_record() for r in rows])
    for row in rows:
        metrics = " ".join(f"{k}={v:.4f}" for k, v in row.metrics.items())
        print(f"temperature={row.temperature} max_new_tokens={row.max_new_tokens} "
              f"errors={row.errors} {metrics}".rstrip())
    return 0


def cmd_make_tasks(args) -> int:
    from personasum.service import (
        build_comparative_tasks,
        build_persona_id_tasks,
        build_quality_tasks,
        write_tasks,
    )
    docs = {d.doc_id: d for d in _load_documents(args.corpus)}
    tasks = []
    if args.kind in ("persona_id", "all"):
        tasks += build_persona_id_tasks(docs, _load_summaries(args.summaries),
                                        seed=args.seed)
    if args.kind in ("quality_check", "all"):
        tasks += build_quality_tasks(docs, _load_summaries(args.summaries))
    if args.kind in ("comparative", "all"):
        if not args.summaries_b:
            raise PersonasumError("comparative tasks need --summaries-b (references)")
        tasks += build_comparative_tasks(docs, _load_summaries(args.summaries),
                                         _load_summaries(args.summaries_b),
                                         seed=args.seed)
    write_tasks(args.out, tasks)
    print(f"wrote {len(tasks)} tasks -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from personasum.service import AnnotationStore, TaskBoard, create_app, load_tasks
    store = AnnotationStore(args.store)
    board = TaskBoard(load_tasks(args.tasks), store, quorum=args.quorum)
    app = create_app(board, static_dir=args.static_dir)
    import uvicorn
    print(f"serving on http://{args.host}:{args.port} "
          f"(store={args.store}, tasks={args.tasks})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_report(args) -> int:
    out = []
    if args.filter_report:
        from personasum.filtering import ConflictPair, FilterReport, StepStats
        data = json.loads(Path(args.filter_report).read_text("utf-8"))
        report = FilterReport(
            pre_count=data["pre_count"],
            kept_count=data["kept_count"],
            steps=[StepStats(name=s["name"], removed_count=s["removed_count"],
                             removed_pct=s["removed_pct"],
                             removed_keys=s.get("removed_keys", []))
                   for s in data["steps"]],
            overall_removed_pct=data["overall_removed_pct"],
            conflict_pairs=[ConflictPair(p["a"], p["b"], p["f1"])
                            for p in data.get("conflict_pairs", [])],
            exhaustive=data.get("exhaustive", False),
            exhaustive_flags=data.get("exhaustive_flags", {}),
        )
        from personasum.reports import render_filter_report
        out.append(render_filter_report(report))
    if args.metrics:
        from personasum.reports import render_corpus_metrics
        data = json.loads(Path(args.metrics).read_text("utf-8"))
        out.append(render_corpus_metrics(data["overall"], data.get("per_persona", {}),
                                         label=args.label))
    if args.critiques:
        from personasum.critic import CritiqueResult, aggregate_critiques
        from personasum.reports import render_critique_table
        results = [CritiqueResult.from_record(r) for r in iter_records(args.critiques)]
        out.append(render_critique_table(aggregate_critiques(results)))
    if args.length_ratios:
        from personasum.generation import length_ratio_report
        summaries = _load_summaries(args.length_ratios)
        docs = _load_documents(args.corpus) if args.corpus else []
        report = length_ratio_report(summaries, docs)
        out.append(json.dumps(report.to_record(), sort_keys=True, indent=2) + "\n")
    if not out:
        raise PersonasumError(
            "nothing to report: pass --filter-report, --metrics, --critiques, "
            "or --length-ratios")
    text = "\n".join(out)
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    print(text, end="")
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="personasum",
        description="Persona-conditioned summarization pipeline.")
    parser.add_argument("--config", default=None,
                        help="key=value file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize raw files into a corpus")
    p.add_argument("--input", required=True, help="file or directory of raw documents")
    p.add_argument("--format", choices=("plain", "html"), default="plain")
    p.add_argument("--min-words", type=_positive_int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="assign train/validation/test splits")
    p.add_argument("--corpus", required=True)
    p.add_argument("--train", type=_positive_int, required=True)
    p.add_argument("--validation", type=_positive_int, required=True)
    p.add_argument("--test", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("generate", help="teacher summaries per persona")
    p.add_argument("--corpus", required=True)
    p.add_argument("--personas", default=None, help="comma-separated persona names")
    p.add_argument("--personas-file", default=None)
    p.add_argument("--split", default=None, help="restrict to one split")
    p.add_argument("--out", required=True)
    _add_gateway_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("filter", help="apply the four-step quality filter")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.85)
    p.add_argument("--fuzzy", action="store_true",
                   help="allow Jaro-Winkler matches for lexicon grounding")
    p.add_argument("--exhaustive", action="store_true",
                   help="also evaluate removed records on later steps (reporting only)")
    p.add_argument("--personas-file", default=None)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("export-train", help="filtered summaries to fine-tune records")
    p.add_argument("--summaries", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)
    p.add_argument("--personas-file", default=None)
    p.set_defaults(func=cmd_export_train)

    p = sub.add_parser("infer", help="student summaries via the fine-tune prompt")
    p.add_argument("--corpus", required=True)
    p.add_argument("--personas", default=None)
    p.add_argument("--personas-file", default=None)
    p.add_argument("--split", default=None)
    p.add_argument("--out", required=True)
    _add_gateway_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="reference metrics for candidate summaries")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--embedder", default=None, help="embedding endpoint URL")
    p.add_argument("--out", required=True, help="aggregate report (JSON)")
    p.add_argument("--per-pair", default=None, help="per-pair metric records")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("critique", help="LLM-judge scores for candidate summaries")
    p.add_argument("--pairs", required=True,
                   help="records with doc_id, persona, reference, candidate")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--personas-file", default=None)
    _add_gateway_flags(p)
    p.set_defaults(func=cmd_critique)

    p = sub.add_parser("compare-judges", help="correlate two judge runs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare_judges)

    p = sub.add_parser("agree", help="agreement statistics from the annotation store")
    p.add_argument("--store", default=os.environ.get(STORE_ENV_DEFAULT, "store.jsonl"))
    p.add_argument("--tasks", required=True, help="task file (holds the hidden truth)")
    p.add_argument("--task", default=None, choices=("persona_id", "quality_check",
                                                    "comparative"))
    p.add_argument("--quorum", type=int, default=2)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("sweep", help="grid of sampling settings over a prompt set")
    p.add_argument("--prompts", required=True, help="records with system and user text")
    p.add_argument("--references", default=None,
                   help="records with reference text, aligned with prompts")
    p.add_argument("--temperatures", required=True, help="comma-separated values")
    p.add_argument("--token-grid", required=True,
                   help="comma-separated max-new-token values")
    p.add_argument("--role", default=None)
    p.add_argument("--out", required=True)
    _add_gateway_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("make-tasks", help="build annotation tasks from summaries")
    p.add_argument("--corpus", required=True)
    p.add_argument("--summaries", required=True)
    p.add_argument("--summaries-b", default=None,
                   help="reference summaries for comparative tasks")
    p.add_argument("--kind", choices=("persona_id", "quality_check", "comparative",
                                      "all"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_tasks)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--store", default=None)
    p.add_argument("--tasks", required=True)
    p.add_argument("--static-dir", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--quorum", type=int, default=2)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="render result files as tables")
    p.add_argument("--filter-report", default=None)
    p.add_argument("--metrics", default=None)
    p.add_argument("--critiques", default=None)
    p.add_argument("--length-ratios", default=None,
                   help="summary records; requires --corpus")
    p.add_argument("--corpus", default=None)
    p.add_argument("--label", default="candidate")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


STORE_ENV_DEFAULT = "PERSONA_STORE"


def cli_dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        defaults = _load_config_defaults(args.config)
        known = {action.dest for action in parser._actions}
        for sub_action in parser._subparsers._group_actions:
            for sub_parser in sub_action.choices.values():
                known |= {action.dest for action in sub_parser._actions}
        unknown = set(defaults) - known
        if unknown:
            raise PersonasumError(f"unknown config keys: {sorted(unknown)}")
        for key, value in defaults.items():
            current = getattr(args, key, None)
            if current is None:
                setattr(args, key, value)
            elif current is False:
                setattr(args, key, value.strip().lower() in ("1", "true", "yes", "on"))
    if args.command == "serve":
        if args.store is None:
            args.store = os.environ.get(STORE_ENV_DEFAULT, "store.jsonl")
        if args.port is None:
            args.port = int(os.environ.get("PERSONA_PORT", "8700"))
        args.port = int(args.port)
        args.quorum = int(args.quorum)
    return args.func(args)


def main() -> None:
    try:
        code = cli_dispatch()
    except PersonasumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = 1
    sys.exit(code)
