"""Command-line front end for the grading toolkit.

Subcommands: ingest, validate, build-pairs, train-embedder, build-vdb,
score, evaluate, rag-fraction, optimize-prompt.  Exit codes: 0 success,
1 validation failure, 2 runtime error, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .corpus import (
    Corpus,
    CorpusError,
    Scheme,
    parse_jsonl,
    parse_semeval_xml,
    validate_corpus,
    write_jsonl,
)
from .embedding import Adapter, EmbeddingError, HashEmbedder
from .glm import GlmError, make_backend
from .harness import (
    ExperimentConfig,
    HarnessError,
    format_report_table,
    grade_responses,
    rag_fraction_experiment,
    resolve_embedder,
    run_scenario,
)
from .losses import LossKind
from .metrics import MetricsError
from .optimize import OptimizerConfig, OptimizerError, PromptEvaluator, optimize
from .pairs import Scope, Strategy, build_training_sets, write_pairs_jsonl, write_triplets_jsonl
from .prompts import PromptError, load_template, scheme_task
from .training import TrainConfig, TrainingError, train_for_corpus
from .vstore import StoreError, VectorStore, build_store

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64

_RUNTIME_ERRORS = (
    CorpusError,
    HarnessError,
    EmbeddingError,
    StoreError,
    PromptError,
    GlmError,
    OptimizerError,
    MetricsError,
    TrainingError,
    ValueError,
    OSError,
)


class _UsageExit(Exception):
    def __init__(self, message: str):
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    """argparse that signals usage problems instead of exiting with code 2."""

    def error(self, message):
        raise _UsageExit(message)


def _load_corpus(path: str) -> Corpus:
    if Path(path).is_dir():
        return parse_semeval_xml(path)
    return parse_jsonl(path)


def _add_common_eval_args(p: argparse.ArgumentParser):
    # eval-family defaults live in ExperimentConfig; None means "not given",
    # so a --config file is only overridden by flags the user actually passed
    p.add_argument("--corpus", required=True, help="corpus JSONL file or XML directory")
    p.add_argument("--scheme", default=None, help="5way, 3way, or 2way (default 3way)")
    p.add_argument("--backend", default=None, help="mock, remote, replay:PATH, scripted:PATH")
    p.add_argument("--k", type=int, default=None, help="retrieved examples per query")
    p.add_argument("--template-style", default=None, choices=("cpg", "dspy"))
    p.add_argument("--seeds", default=None, help="comma-separated run seeds (default 1,2,3)")
    p.add_argument("--runs", type=int, default=None, help="must match the seed count if given")
    p.add_argument("--dim", type=int, default=None, help="base embedding dimension")
    p.add_argument("--adapter", default=None, help="adapter file or directory of per-question adapters")
    p.add_argument("--store", default=None, help="prebuilt vector store file")
    p.add_argument("--train", action="store_true", default=None, help="train adapter(s) before scoring")
    p.add_argument("--config", default=None, help="experiment config JSON (flags override)")
    p.add_argument("--out", default=None, help="write the JSON report here")


def _parse_seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip())


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.from_json(args.config)
    else:
        config = ExperimentConfig()
    overrides = {
        "corpus": args.corpus,
        "scheme": args.scheme,
        "backend": args.backend,
        "k": args.k,
        "template_style": args.template_style,
        "seeds": list(_parse_seeds(args.seeds)) if args.seeds else None,
        "embed_dim": args.dim,
        "train_adapter": args.train,
    }
    merged = config.manifest()
    merged.update({key: value for key, value in overrides.items() if value is not None})
    if args.runs is not None and args.runs != len(merged["seeds"]):
        raise _UsageExit(f"--runs {args.runs} does not match {len(merged['seeds'])} seeds")
    return ExperimentConfig.from_dict(merged)


def _load_adapters(path: str | None):
    if path is None:
        return None
    p = Path(path)
    if p.is_dir():
        return {f.stem: Adapter.load(f) for f in sorted(p.glob("*.adapter"))}
    return Adapter.load(p)


def build_parser() -> _Parser:
    parser = _Parser(prog="ragrade", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="parse a dataset and write canonical JSONL")
    p.add_argument("--xml-root", default=None, help="dataset XML directory")
    p.add_argument("--jsonl", default=None, help="existing JSONL corpus to re-validate and copy")
    p.add_argument("--name", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("validate", help="report corpus invariant violations and label counts")
    p.add_argument("--corpus", required=True)

    p = sub.add_parser("build-pairs", help="mine balanced pair and triplet training sets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scheme", default="3way")
    p.add_argument("--strategy", default="general", choices=("strict", "general"))
    p.add_argument("--scope", default="question", help="question or global")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train-embedder", help="fit the embedding adapter(s)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scheme", default="3way")
    p.add_argument("--strategy", default="general", choices=("strict", "general"))
    p.add_argument("--scope", default="question")
    p.add_argument("--loss", default="cosine_sentence")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--lr", type=float, default=6e-6)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=384)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("build-vdb", help="embed train responses into a vector store")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dim", type=int, default=384)
    p.add_argument("--adapter", default=None)
    p.add_argument("--include-question", action="store_true")
    p.add_argument("--include-reference", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("score", help="grade one split and write predictions JSONL")
    _add_common_eval_args(p)
    p.add_argument("--scenario", default="ua", choices=("ua", "uq", "ud"))

    p = sub.add_parser("evaluate", help="evaluate a scenario and report metrics")
    _add_common_eval_args(p)
    p.add_argument("--scenario", default="ua", choices=("ua", "uq", "ud"))

    p = sub.add_parser("rag-fraction", help="move a test fraction into the store, then grade the rest")
    _add_common_eval_args(p)
    p.add_argument("--scenario", default="uq", choices=("uq", "ud"))
    p.add_argument("--fraction", type=float, required=True)

    p = sub.add_parser("optimize-prompt", help="propose/evaluate/rank template candidates")
    _add_common_eval_args(p)
    p.add_argument("--scenario", default="ua", choices=("ua", "uq", "ud"))
    p.add_argument("--critic", required=True, help="critic backend selector (e.g. scripted:FILE)")
    p.add_argument("--steps", type=int, default=3)
    p.add_argument("--candidates", type=int, default=4)
    p.add_argument("--metric", default="accuracy", choices=("accuracy", "macro_f1", "weighted_f1"))
    p.add_argument("--out-dir", required=True)

    return parser


def _cmd_ingest(args) -> int:
    if bool(args.xml_root) == bool(args.jsonl):
        raise _UsageExit("ingest needs exactly one of --xml-root or --jsonl")
    if args.xml_root:
        corpus = parse_semeval_xml(args.xml_root, name=args.name)
    else:
        corpus = parse_jsonl(args.jsonl, name=args.name)
    write_jsonl(corpus, args.out)
    report = validate_corpus(corpus)
    print(f"wrote {args.out}: {sum(len(corpus.split(s)) for s in ('train', 'ua', 'uq', 'ud'))} responses")
    if not report.ok:
        for v in report.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _cmd_validate(args) -> int:
    corpus = _load_corpus(args.corpus)
    report = validate_corpus(corpus)
    print(json.dumps({"violations": report.violations, "counts": report.counts}, indent=2))
    return EXIT_OK if report.ok else EXIT_VALIDATION


def _cmd_build_pairs(args) -> int:
    corpus = _load_corpus(args.corpus)
    sets = build_training_sets(
        corpus,
        Scheme.parse(args.scheme),
        Strategy.parse(args.strategy),
        Scope.parse(args.scope),
        args.seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pairs_jsonl(sets.merged_pairs(), out / "pairs.jsonl")
    write_triplets_jsonl(sets.merged_triplets(), out / "triplets.jsonl")
    manifest = sets.manifest()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(manifest))
    return EXIT_OK


def _cmd_train_embedder(args) -> int:
    corpus = _load_corpus(args.corpus)
    scheme = Scheme.parse(args.scheme)
    scope = Scope.parse(args.scope)
    sets = build_training_sets(corpus, scheme, Strategy.parse(args.strategy), scope, args.seed)
    config = TrainConfig(
        loss=LossKind.parse(args.loss),
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    base = HashEmbedder(args.dim)
    results = train_for_corpus(config, corpus, sets, base)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for key, result in results.items():
        result.adapter.save(out / f"{key}.adapter")
    summary = {
        "adapters": len(results),
        "config": config.manifest(),
        "final_epoch_loss": {k: r.epoch_means[-1] if r.epoch_means else None for k, r in results.items()},
    }
    (out / "manifest.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"trained {len(results)} adapter(s) into {out}")
    return EXIT_OK


def _cmd_build_vdb(args) -> int:
    corpus = _load_corpus(args.corpus)
    base = HashEmbedder(args.dim)
    adapters = _load_adapters(args.adapter)
    embedder = resolve_embedder(ExperimentConfig(embed_dim=args.dim), base, adapters)
    store = build_store(
        list(corpus.split("train")),
        embedder,
        corpus.questions,
        include_question=args.include_question,
        include_reference=args.include_reference,
    )
    store.save(args.out)
    print(f"wrote {args.out}: {len(store)} entries, dim {store.dim}")
    return EXIT_OK


def _run_eval_like(args, fraction: float | None):
    corpus = _load_corpus(args.corpus)
    config = _experiment_config(args)
    adapters = _load_adapters(args.adapter)
    store = VectorStore.load(args.store) if args.store else None
    if fraction is None:
        return run_scenario(corpus, args.scenario, config, adapters=adapters, store=store)
    return rag_fraction_experiment(
        corpus, args.scenario, fraction, config, adapters=adapters, store=store
    )


def _cmd_score(args) -> int:
    corpus = _load_corpus(args.corpus)
    config = _experiment_config(args)
    adapters = _load_adapters(args.adapter)
    base = HashEmbedder(config.embed_dim)
    embedder = resolve_embedder(config, base, adapters)
    responses = list(corpus.split(args.scenario))
    if not responses:
        raise HarnessError(f"corpus has no {args.scenario} split")
    with_examples = args.scenario == "ua"
    store = None
    if args.store:
        store = VectorStore.load(args.store)
    elif with_examples:
        store = build_store(list(corpus.split("train")), embedder, corpus.questions)
    template = load_template(
        scheme_task(config.scheme),
        "with_examples" if with_examples else "without_examples",
        config.template_style,
    )
    outcome = grade_responses(
        responses,
        corpus.questions,
        config.scheme,
        template,
        make_backend(config.backend),
        embedder=embedder,
        store=store,
        k=config.k,
        same_question_only=with_examples,
        params=config.gen_params(),
        fallback_label=config.resolved_fallback(),
    )
    lines = [
        json.dumps({"id": r.id, "gold": g, "predicted": p}, ensure_ascii=False)
        for r, g, p in zip(responses, outcome.gold, outcome.predictions)
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"scored {len(responses)} responses, {outcome.parse_failures} parse failures", file=sys.stderr)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    report = _run_eval_like(args, fraction=None)
    if args.out:
        report.write_json(args.out)
    print(format_report_table([report]))
    print(json.dumps(report.metrics))
    return EXIT_OK


def _cmd_rag_fraction(args) -> int:
    report = _run_eval_like(args, fraction=args.fraction)
    if args.out:
        report.write_json(args.out)
    moved = report.per_run[0]["moved_to_store"] if report.per_run else 0
    print(format_report_table([report]))
    print(f"moved {moved} responses into the store per run")
    return EXIT_OK


def _cmd_optimize_prompt(args) -> int:
    corpus = _load_corpus(args.corpus)
    config = _experiment_config(args)
    adapters = _load_adapters(args.adapter)
    base = HashEmbedder(config.embed_dim)
    embedder = resolve_embedder(config, base, adapters)
    with_examples = args.scenario == "ua"
    store = None
    if with_examples:
        store = (
            VectorStore.load(args.store)
            if args.store
            else build_store(list(corpus.split("train")), embedder, corpus.questions)
        )
    draft = load_template(
        scheme_task(config.scheme),
        "with_examples" if with_examples else "without_examples",
        config.template_style,
    )
    opt_config = OptimizerConfig(steps=args.steps, beam=args.candidates, metric=args.metric)
    evaluator = PromptEvaluator(
        list(corpus.split(args.scenario)),
        corpus,
        config.scheme,
        make_backend(config.backend),
        metric=args.metric,
        embedder=embedder,
        store=store,
        k=config.k,
        same_question_only=with_examples,
        params=opt_config.task_params,
    )
    result = optimize(opt_config, draft, evaluator, make_backend(args.critic))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "best_template.txt").write_text(result.best.template.body, encoding="utf-8")
    result.write_history_jsonl(out / "history.jsonl", args.metric, evaluator.dev_set_id)
    print(f"best score {result.best.score:.4f} after {args.steps} steps; trace {result.best_trace}")
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "validate": _cmd_validate,
    "build-pairs": _cmd_build_pairs,
    "train-embedder": _cmd_train_embedder,
    "build-vdb": _cmd_build_vdb,
    "score": _cmd_score,
    "evaluate": _cmd_evaluate,
    "rag-fraction": _cmd_rag_fraction,
    "optimize-prompt": _cmd_optimize_prompt,
}


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _UsageExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli())
