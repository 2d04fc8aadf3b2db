"""Command-line surface wiring datasets, backends, and pipeline stages.

Every artifact is written atomically (temp file + rename) and JSON/JSONL
outputs embed the effective configuration and input digests, so identical
invocations produce byte-identical files. ``--mock script.json`` swaps the
wire backend for the scripted model everywhere, making the full CLI
testable offline.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import curation, evaluation, plotting
from .budget import BudgetPolicy
from .client import BackendError, ScriptedModel, WireBackend
from .config import Config, ConfigError, load_config
from .curation import CurationError, CurationReport, SamplingPlan
from .evaluation import SweepResult
from .jsonl import (
    SchemaError,
    atomic_write_bytes,
    load_questions,
    load_traces,
    question_to_record,
    sha256_file,
    trace_to_record,
    write_json,
    write_jsonl,
)
from .regression import FitRefusedError, RegressionFit, fit_linear_with_ci

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--base-url", dest="base_url", help="chat-completions base URL")
    parser.add_argument("--model", help="model name sent to the backend")
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--budget", dest="thinking_budget", type=int, help="thinking token budget")
    parser.add_argument("--forcing-count", dest="forcing_count", type=int)
    parser.add_argument("--per-forcing-cap", dest="per_forcing_cap", type=int)
    parser.add_argument("--forcing-text", dest="forcing_text")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--mock", action="append", default=None, help="scripted-model JSON; repeatable")


_CONFIG_FLAGS = (
    "base_url",
    "model",
    "temperature",
    "seed",
    "thinking_budget",
    "forcing_count",
    "per_forcing_cap",
    "forcing_text",
    "workers",
)


def _effective_config(args: argparse.Namespace) -> Config:
    flags = {key: getattr(args, key, None) for key in _CONFIG_FLAGS}
    return load_config(args.config, flags={k: v for k, v in flags.items() if v is not None})


def _backend(args: argparse.Namespace, cfg: Config):
    if args.mock:
        return ScriptedModel.from_file(args.mock[0])
    return WireBackend(base_url=cfg.base_url, model=cfg.model)


def _graders(args: argparse.Namespace, cfg: Config) -> list:
    if args.mock:
        return [ScriptedModel.from_file(path) for path in args.mock]
    models = args.grader_model or [cfg.model]
    return [WireBackend(base_url=cfg.base_url, model=m) for m in models]


def _provenance(cfg: Config, inputs: list[str]) -> dict:
    return {
        "config": cfg.to_dict(),
        "inputs": {path: sha256_file(path) for path in sorted(set(inputs))},
    }


def _write_report(path: str, stages: list[curation.StageCount], cfg: Config, inputs: list[str], header: dict | None = None) -> None:
    report = CurationReport(header=dict(header or {}))
    for stage in stages:
        report.add_stage(stage.name, stage.counts, stage.params)
    report.validate()
    payload = report.to_dict()
    payload["_provenance"] = _provenance(cfg, inputs)
    write_json(path, payload)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thinkctl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    curate = sub.add_parser("curate", help="data curation pipeline stages")
    curate_sub = curate.add_subparsers(dest="stage", required=True)

    p = curate_sub.add_parser("filter", help="keep questions every grader misses")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--grader-model", action="append", default=None, help="wire grader model; repeatable")
    p.set_defaults(handler=cmd_curate_filter)

    p = curate_sub.add_parser("validate", help="keep traces whose answer is correct")
    _add_common(p)
    p.add_argument("--traces", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_curate_validate)

    p = curate_sub.add_parser("decontaminate", help="drop eval-overlapping items, then dedup")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--eval", action="append", required=True, dest="eval_sets")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--ngram", type=int, default=curation.DEFAULT_NGRAM_SIZE)
    p.set_defaults(handler=cmd_curate_decontaminate)

    p = curate_sub.add_parser("dedup", help="drop exact duplicates by normalized stem")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_curate_dedup)

    p = curate_sub.add_parser("sample", help="hierarchical diversity sampling")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_curate_sample)

    p = curate_sub.add_parser("annotate", help="label domains from a term lexicon")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--lexicon", required=True, help="JSON object mapping term -> qualifier")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_curate_annotate)

    p = curate_sub.add_parser("format-sft", help="render verified traces as training text")
    _add_common(p)
    p.add_argument("--traces", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_curate_format_sft)

    p = sub.add_parser("eval", help="accuracy per dataset under a policy, plus the macro average")
    _add_common(p)
    p.add_argument("--dataset", action="append", required=True, dest="datasets", help="repeatable")
    p.add_argument("--out", help="per-question outcomes JSONL")
    p.add_argument("--summary", help="summary JSON")
    p.add_argument("--transcripts", help="full reasoning transcripts JSONL")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sweep", help="accuracy vs thinking budget")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument(
        "--budgets",
        default=",".join(str(b) for b in evaluation.DEFAULT_BUDGET_GRID),
        help="comma-separated budgets",
    )
    p.add_argument("--out-csv", dest="out_csv", required=True)
    p.add_argument("--out-svg", dest="out_svg")
    p.add_argument("--out-json", dest="out_json", help="sweep result JSON for later plotting")
    p.add_argument("--summary")
    p.add_argument("--no-fit", action="store_true", help="skip the regression fit")
    p.add_argument("--reuse-transcripts", action="store_true", help="fast mode: truncate cached transcripts")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("force-sweep", help="accuracy vs forcing count")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--max-forcings", dest="max_forcings", type=int, required=True)
    p.add_argument("--out-csv", dest="out_csv", required=True)
    p.add_argument("--out-svg", dest="out_svg")
    p.add_argument("--out-json", dest="out_json")
    p.add_argument("--summary")
    p.add_argument("--no-fit", action="store_true")
    p.set_defaults(handler=cmd_force_sweep)

    p = sub.add_parser("plot", help="re-emit CSV/SVG from a saved sweep JSON")
    _add_common(p)
    p.add_argument("--sweep", required=True)
    p.add_argument("--format", choices=[plotting.FORMAT_CSV, plotting.FORMAT_SVG], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-fit", action="store_true")
    p.set_defaults(handler=cmd_plot)

    p = sub.add_parser("report", help="validate and print a curation ledger")
    _add_common(p)
    p.add_argument("--in", dest="report_in", required=True)
    p.add_argument("--out", help="write the normalized report JSON")
    p.set_defaults(handler=cmd_report)

    return parser


def cmd_curate_filter(args, cfg: Config) -> int:
    pool = load_questions(args.pool)
    graders = _graders(args, cfg)
    kept, row = curation.difficulty_filter(pool, graders, workers=cfg.workers)
    meta = _provenance(cfg, [args.pool] + (args.mock or []))
    write_jsonl(args.out, (question_to_record(q) for q in kept), meta=meta)
    if args.report:
        _write_report(args.report, [curation.initial_collection_row(pool), row], cfg, [args.pool])
    print(f"kept {len(kept)} of {len(pool)} questions")
    return EXIT_OK


def cmd_curate_validate(args, cfg: Config) -> int:
    records = load_traces(args.traces)
    kept, row = curation.validate_traces(records)
    meta = _provenance(cfg, [args.traces])
    write_jsonl(args.out, (trace_to_record(t) for t in kept), meta=meta)
    if args.report:
        input_row = curation.StageCount(
            "input_traces", curation.source_counts(t.question for t in records)
        )
        _write_report(args.report, [input_row, row], cfg, [args.traces])
    print(f"verified {len(kept)} of {len(records)} traces")
    return EXIT_OK


def cmd_curate_decontaminate(args, cfg: Config) -> int:
    pool = load_questions(args.pool)
    eval_sets = [load_questions(path) for path in args.eval_sets]
    clean, row = curation.decontaminate(pool, eval_sets, ngram_size=args.ngram)
    inputs = [args.pool] + list(args.eval_sets)
    write_jsonl(args.out, (question_to_record(q) for q in clean), meta=_provenance(cfg, inputs))
    if args.report:
        _write_report(args.report, [curation.initial_collection_row(pool), row], cfg, inputs)
    print(f"kept {len(clean)} of {len(pool)} questions")
    return EXIT_OK


def cmd_curate_dedup(args, cfg: Config) -> int:
    pool = load_questions(args.pool)
    kept, row = curation.deduplicate(pool)
    write_jsonl(args.out, (question_to_record(q) for q in kept), meta=_provenance(cfg, [args.pool]))
    if args.report:
        _write_report(args.report, [curation.initial_collection_row(pool), row], cfg, [args.pool])
    print(f"kept {len(kept)} of {len(pool)} questions")
    return EXIT_OK


def cmd_curate_sample(args, cfg: Config) -> int:
    pool = load_questions(args.pool)
    plan = SamplingPlan.from_questions(pool, target_n=args.n, seed=cfg.seed)
    selected, row = curation.diversity_sample(plan)
    by_id = {q.id: q for q in pool}
    chosen = [by_id[item_id] for item_id, _ in selected]
    write_jsonl(args.out, (question_to_record(q) for q in chosen), meta=_provenance(cfg, [args.pool]))
    if args.report:
        _write_report(
            args.report,
            [curation.initial_collection_row(pool), row],
            cfg,
            [args.pool],
            header={"rng": curation.SAMPLER_RNG, "seed": cfg.seed},
        )
    print(f"sampled {len(chosen)} of {len(pool)} questions")
    return EXIT_OK


def cmd_curate_annotate(args, cfg: Config) -> int:
    pool = load_questions(args.pool)
    with open(args.lexicon, encoding="utf-8") as fh:
        lexicon = json.load(fh)
    annotated = curation.annotate_domains(pool, lexicon)
    inputs = [args.pool, args.lexicon]
    write_jsonl(args.out, (question_to_record(q) for q in annotated), meta=_provenance(cfg, inputs))
    print(f"annotated {len(annotated)} questions")
    return EXIT_OK


def cmd_curate_format_sft(args, cfg: Config) -> int:
    records = load_traces(args.traces)
    texts = [{"text": curation.format_sft_example(r)} for r in records if r.verified]
    write_jsonl(args.out, texts, meta=_provenance(cfg, [args.traces]))
    print(f"formatted {len(texts)} examples")
    return EXIT_OK


def _policy_from(cfg: Config) -> BudgetPolicy:
    return cfg.policy()


def cmd_eval(args, cfg: Config) -> int:
    backend = _backend(args, cfg)
    results = {}
    for path in args.datasets:
        questions = load_questions(path)
        results[path] = evaluation.evaluate(
            questions,
            backend,
            _policy_from(cfg),
            temperature=cfg.temperature,
            seed=cfg.seed,
            workers=cfg.workers,
        )
    inputs = list(args.datasets) + (args.mock or [])
    macro = evaluation.macro_average([100.0 * r.accuracy for r in results.values()])
    if args.out:
        records = (
            {
                "dataset": path,
                "id": o.question_id,
                "letter": o.letter,
                "correct": o.correct,
                "thinking_tokens": o.thinking_tokens,
                "error": o.error,
            }
            for path, result in results.items()
            for o in result.outcomes
        )
        write_jsonl(args.out, records, meta=_provenance(cfg, inputs))
    if args.transcripts:
        records = (
            o.transcript.to_record(o.question_id)
            for result in results.values()
            for o in result.outcomes
            if o.transcript is not None
        )
        write_jsonl(args.transcripts, records, meta=_provenance(cfg, inputs))
    if args.summary:
        write_json(
            args.summary,
            {
                "datasets": {
                    path: {
                        "accuracy": result.accuracy,
                        "accuracy_percent": 100.0 * result.accuracy,
                        "n": result.n,
                        "n_correct": result.n_correct,
                    }
                    for path, result in results.items()
                },
                "macro_average_percent": macro,
                "_provenance": _provenance(cfg, inputs),
            },
        )
    for path, result in results.items():
        print(f"{path}: accuracy {result.accuracy:.4f} ({result.n_correct}/{result.n})")
    print(f"macro average: {macro:.2f}%")
    return EXIT_OK


def _emit_sweep_outputs(args, cfg: Config, sweep: SweepResult, inputs: list[str]) -> None:
    fit = None
    if not args.no_fit:
        try:
            # regression runs on percent values, matching the plotted axis
            fit = fit_linear_with_ci([(p.x, 100.0 * p.accuracy) for p in sweep.points])
        except FitRefusedError:
            fit = None
    atomic_write_bytes(args.out_csv, plotting.emit_plot(sweep, fit, plotting.FORMAT_CSV))
    if args.out_svg:
        atomic_write_bytes(args.out_svg, plotting.emit_plot(sweep, fit, plotting.FORMAT_SVG))
    if args.out_json:
        payload = sweep.to_dict()
        payload["fit"] = fit.to_dict() if fit else None
        payload["_provenance"] = _provenance(cfg, inputs)
        write_json(args.out_json, payload)
    if args.summary:
        write_json(
            args.summary,
            {
                "dataset": sweep.dataset,
                "kind": sweep.kind,
                "points": [p.to_dict() for p in sweep.points],
                "fit": fit.to_dict() if fit else None,
                "_provenance": _provenance(cfg, inputs),
            },
        )


def cmd_sweep(args, cfg: Config) -> int:
    questions = load_questions(args.dataset)
    backend = _backend(args, cfg)
    try:
        budgets = [int(b) for b in args.budgets.split(",") if b.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse --budgets {args.budgets!r}")
    sweep = evaluation.budget_sweep(
        questions,
        backend,
        budgets,
        _policy_from(cfg),
        dataset_name=args.dataset,
        reuse_transcripts=args.reuse_transcripts,
        temperature=cfg.temperature,
        seed=cfg.seed,
        workers=cfg.workers,
    )
    _emit_sweep_outputs(args, cfg, sweep, [args.dataset] + (args.mock or []))
    for point in sweep.points:
        print(f"budget {int(point.x)}: accuracy {point.accuracy:.4f} ({point.n_correct}/{point.n})")
    return EXIT_OK


def cmd_force_sweep(args, cfg: Config) -> int:
    questions = load_questions(args.dataset)
    backend = _backend(args, cfg)
    sweep = evaluation.forcing_sweep(
        questions,
        backend,
        args.max_forcings,
        _policy_from(cfg),
        dataset_name=args.dataset,
        temperature=cfg.temperature,
        seed=cfg.seed,
        workers=cfg.workers,
    )
    _emit_sweep_outputs(args, cfg, sweep, [args.dataset] + (args.mock or []))
    for point in sweep.points:
        print(f"forcings {int(point.x)}: accuracy {point.accuracy:.4f} ({point.n_correct}/{point.n})")
    return EXIT_OK


def cmd_plot(args, cfg: Config) -> int:
    with open(args.sweep, encoding="utf-8") as fh:
        payload = json.load(fh)
    sweep = SweepResult.from_dict(payload)
    fit = None
    if not args.no_fit and payload.get("fit"):
        fit = RegressionFit.from_dict(payload["fit"])
    atomic_write_bytes(args.out, plotting.emit_plot(sweep, fit, args.format))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_report(args, cfg: Config) -> int:
    with open(args.report_in, encoding="utf-8") as fh:
        payload = json.load(fh)
    payload.pop("_provenance", None)
    report = CurationReport.from_dict(payload)
    report.validate()
    sources = sorted({src for stage in report.stages for src in stage.counts})
    header = ["stage"] + sources + ["total"]
    print("\t".join(header))
    for stage in report.stages:
        cells = [stage.name] + [str(stage.counts.get(s, 0)) for s in sources] + [str(stage.total)]
        print("\t".join(cells))
    if args.out:
        write_json(args.out, report.to_dict())
    return EXIT_OK


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _effective_config(args)
        return args.handler(args, cfg)
    except (SchemaError, ConfigError, CurationError, FitRefusedError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run(sys.argv[1:]))
