"""Training-data curation pipeline with a per-stage provenance ledger.

Stages: difficulty filtering (keep questions every grader misses),
reasoning-trace validation (keep traces whose final answer is correct),
decontamination against evaluation sets plus exact deduplication,
hierarchical diversity sampling (domain, then dataset, then item), and
supervised-finetuning example formatting. Every stage reports per-source
counts so the ledger reconciles end to end.
"""

from __future__ import annotations

import logging
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .budget import ANSWER_MARKER, THINK_MARKER
from .client import BackendError, probe_answer
from .qa import DEFAULT_INSTRUCTION, McqQuestion, extract_answer, format_prompt, grade

log = logging.getLogger(__name__)

UNLABELED_DOMAIN = "Unlabeled"
DEFAULT_NGRAM_SIZE = 8
SAMPLER_RNG = "pcg64"


class CurationError(ValueError):
    pass


@dataclass
class TraceRecord:
    """One question paired with a generated reasoning trace and answer."""

    question: McqQuestion
    thinking: str
    response: str
    extracted: str | None
    verified: bool

    def __post_init__(self) -> None:
        if self.verified != (self.extracted == self.question.gold):
            raise CurationError(
                f"trace for {self.question.id!r}: verified flag inconsistent with "
                f"extracted={self.extracted!r} vs gold={self.question.gold!r}"
            )

    @classmethod
    def from_response(cls, question: McqQuestion, thinking: str, response: str) -> "TraceRecord":
        outcome = extract_answer(response, question.options)
        return cls(
            question=question,
            thinking=thinking,
            response=response,
            extracted=outcome.letter,
            verified=grade(outcome, question.gold),
        )


@dataclass
class StageCount:
    """Per-source record counts for one pipeline stage."""

    name: str
    counts: dict[str, int]
    params: dict | None = None

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "counts": dict(self.counts), "total": self.total}
        if self.params:
            out["params"] = dict(self.params)
        return out


@dataclass
class CurationReport:
    """The provenance ledger: ordered stage rows keyed by source dataset."""

    stages: list[StageCount] = field(default_factory=list)
    header: dict = field(default_factory=dict)

    def add_stage(self, name: str, counts: Mapping[str, int], params: dict | None = None) -> StageCount:
        row = StageCount(name, dict(counts), params)
        self.stages.append(row)
        return row

    def validate(self) -> None:
        """Check the ledger identities: totals equal per-source sums and
        never increase from one stage to the next."""
        previous = None
        for stage in self.stages:
            if any(v < 0 for v in stage.counts.values()):
                raise CurationError(f"stage {stage.name!r}: negative count")
            if previous is not None and stage.total > previous.total:
                raise CurationError(
                    f"stage {stage.name!r}: total {stage.total} exceeds previous "
                    f"stage {previous.name!r} total {previous.total}"
                )
            previous = stage

    def to_dict(self) -> dict:
        return {"header": dict(self.header), "stages": [s.to_dict() for s in self.stages]}

    @classmethod
    def from_dict(cls, data: dict) -> "CurationReport":
        report = cls(header=dict(data.get("header", {})))
        for row in data["stages"]:
            stage = report.add_stage(row["name"], row["counts"], row.get("params"))
            if "total" in row and row["total"] != stage.total:
                raise CurationError(
                    f"stage {row['name']!r}: recorded total {row['total']} does not "
                    f"equal per-source sum {stage.total}"
                )
        return report


def source_counts(questions: Iterable[McqQuestion]) -> dict[str, int]:
    """Per-source-dataset record counts, the unit of every ledger row."""
    counts: dict[str, int] = {}
    for q in questions:
        counts[q.source] = counts.get(q.source, 0) + 1
    return counts


def initial_collection_row(pool: Sequence[McqQuestion]) -> StageCount:
    return StageCount("initial_collection", source_counts(pool))


def difficulty_filter(
    pool: Sequence[McqQuestion],
    graders: Sequence,
    *,
    instruction: str = DEFAULT_INSTRUCTION,
    workers: int = 1,
    retries: int = 2,
    backoff: float = 0.5,
) -> tuple[list[McqQuestion], StageCount]:
    """Keep only questions that every grader answers incorrectly.

    A grader hard failure counts as an incorrect answer for that question
    (logged), so flaky backends can only keep questions, never drop them.
    Results merge in item-id order regardless of worker completion order.
    """
    if not graders:
        raise CurationError("difficulty_filter needs at least one grader")

    def grader_correct(grader, question: McqQuestion) -> bool:
        prompt = format_prompt(question, instruction)
        try:
            text = probe_answer(grader, prompt, retries=retries, backoff=backoff)
        except BackendError as exc:
            log.warning("grader failed on %s (%s); counted incorrect", question.id, exc)
            return False
        return grade(extract_answer(text, question.options), question.gold)

    def verdict(question: McqQuestion) -> tuple[str, bool]:
        keep = not any(grader_correct(g, question) for g in graders)
        return question.id, keep

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            verdicts = dict(pool_exec.map(verdict, pool))
    else:
        verdicts = dict(verdict(q) for q in pool)

    kept = sorted((q for q in pool if verdicts[q.id]), key=lambda q: q.id)
    return kept, StageCount("difficulty_filter", source_counts(kept))


def validate_traces(records: Sequence[TraceRecord]) -> tuple[list[TraceRecord], StageCount]:
    """Keep traces whose final answer matches the gold label."""
    kept = [r for r in records if r.verified]
    return kept, StageCount("trace_validation", source_counts(r.question for r in kept))


def normalize_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    lowered = text.lower().translate(str.maketrans(string.punctuation, " " * len(string.punctuation)))
    return " ".join(lowered.split())


def word_ngrams(text: str, n: int) -> set[str]:
    words = text.split()
    return {" ".join(words[i : i + n]) for i in range(len(words) - n + 1)}


def deduplicate(pool: Sequence[McqQuestion]) -> tuple[list[McqQuestion], StageCount]:
    """Drop exact duplicates by normalized stem, keeping the first seen."""
    seen: set[str] = set()
    kept = []
    for q in pool:
        key = normalize_text(q.stem)
        if key in seen:
            continue
        seen.add(key)
        kept.append(q)
    return kept, StageCount("deduplication", source_counts(kept))


def decontaminate(
    pool: Sequence[McqQuestion],
    eval_sets: Sequence[Sequence[McqQuestion]],
    *,
    ngram_size: int = DEFAULT_NGRAM_SIZE,
) -> tuple[list[McqQuestion], StageCount]:
    """Remove pool items overlapping any evaluation stem, then deduplicate.

    Overlap means sharing any ``ngram_size``-word window after
    normalization. Items shorter than the window never match. Applying the
    stage twice equals applying it once.
    """
    eval_ngrams: set[str] = set()
    for eval_set in eval_sets:
        for q in eval_set:
            eval_ngrams |= word_ngrams(normalize_text(q.stem), ngram_size)

    clean = []
    for q in pool:
        grams = word_ngrams(normalize_text(q.stem), ngram_size)
        if grams & eval_ngrams:
            continue
        clean.append(q)
    deduped, _ = deduplicate(clean)
    params = {
        "ngram_size": ngram_size,
        "normalization": "lowercase, punctuation stripped, whitespace collapsed",
    }
    return deduped, StageCount("decontamination_dedup", source_counts(deduped), params)


@dataclass
class SamplingPlan:
    """Hierarchical strata for diversity sampling: domain -> dataset -> ids.

    Within the whole plan an item id belongs to exactly one dataset; an
    item may appear under several domains and is removed from all of them
    once drawn.
    """

    target_n: int
    seed: int
    strata: dict[str, dict[str, list[str]]]

    def __post_init__(self) -> None:
        dataset_of: dict[str, str] = {}
        for domain, datasets in self.strata.items():
            for dataset, ids in datasets.items():
                for item in ids:
                    if dataset_of.get(item, dataset) != dataset:
                        raise CurationError(
                            f"item {item!r} appears under both {dataset_of[item]!r} and {dataset!r}"
                        )
                    dataset_of[item] = dataset
        self.pool_size = len(dataset_of)
        if self.target_n > self.pool_size:
            raise CurationError(
                f"target_n={self.target_n} exceeds pool size {self.pool_size}"
            )
        if self.target_n < 0:
            raise CurationError("target_n must be >= 0")

    @classmethod
    def from_questions(cls, questions: Sequence[McqQuestion], target_n: int, seed: int) -> "SamplingPlan":
        strata: dict[str, dict[str, list[str]]] = {}
        for q in questions:
            domains = q.domains or [UNLABELED_DOMAIN]
            for domain in domains:
                strata.setdefault(domain, {}).setdefault(q.source, []).append(q.id)
        return cls(target_n=target_n, seed=seed, strata=strata)


def diversity_sample(plan: SamplingPlan) -> tuple[list[tuple[str, str]], StageCount]:
    """Draw ``target_n`` items: a uniform domain (among nonempty ones), a
    uniform dataset within it, then a uniform item without replacement.

    Deterministic given the plan seed (PCG64). Returns (item id, dataset)
    pairs in draw order plus the per-dataset report row.
    """
    rng = np.random.Generator(np.random.PCG64(plan.seed))

    pools: dict[tuple[str, str], list[str]] = {}
    position: dict[tuple[str, str], dict[str, int]] = {}
    memberships: dict[str, list[tuple[str, str]]] = {}
    for domain in sorted(plan.strata):
        for dataset in sorted(plan.strata[domain]):
            ids = sorted(plan.strata[domain][dataset])
            key = (domain, dataset)
            pools[key] = list(ids)
            position[key] = {item: i for i, item in enumerate(ids)}
            for item in ids:
                memberships.setdefault(item, []).append(key)

    domains = sorted(plan.strata)
    domain_remaining = {
        d: sum(len(pools[(d, s)]) for s in plan.strata[d]) for d in domains
    }

    def remove(item: str) -> None:
        for key in memberships[item]:
            pool = pools[key]
            pos = position[key]
            i = pos.pop(item)
            last = pool.pop()
            if last != item:
                pool[i] = last
                pos[last] = i
            domain_remaining[key[0]] -= 1

    selected: list[tuple[str, str]] = []
    for _ in range(plan.target_n):
        live_domains = [d for d in domains if domain_remaining[d] > 0]
        domain = live_domains[int(rng.integers(len(live_domains)))]
        live_datasets = [s for s in sorted(plan.strata[domain]) if pools[(domain, s)]]
        dataset = live_datasets[int(rng.integers(len(live_datasets)))]
        pool = pools[(domain, dataset)]
        item = pool[int(rng.integers(len(pool)))]
        remove(item)
        selected.append((item, dataset))

    counts: dict[str, int] = {}
    for _, dataset in selected:
        counts[dataset] = counts.get(dataset, 0) + 1
    params = {"rng": SAMPLER_RNG, "seed": plan.seed, "target_n": plan.target_n}
    return selected, StageCount("diversity_sampling", counts, params)


def annotate_domains(
    questions: Sequence[McqQuestion], lexicon: Mapping[str, str]
) -> list[McqQuestion]:
    """Label questions with every qualifier whose lexicon terms appear in
    the stem (word-boundary match); unmatched items get ``Unlabeled``."""
    if not lexicon:
        raise CurationError("lexicon must be nonempty")
    patterns = [
        (re.compile(rf"\b{re.escape(term)}\b", re.IGNORECASE), qualifier)
        for term, qualifier in lexicon.items()
    ]
    annotated = []
    for q in questions:
        labels = sorted({qualifier for pattern, qualifier in patterns if pattern.search(q.stem)})
        annotated.append(replace(q, domains=labels or [UNLABELED_DOMAIN]))
    return annotated


def format_sft_example(record: TraceRecord) -> str:
    """Render a verified trace as one fine-tuning example.

    Layout: question prompt, think marker, thinking, answer marker,
    response, joined by single newlines. Refuses unverified records and any
    field containing a literal marker (delimiter hygiene).
    """
    if not record.verified:
        raise CurationError(f"record {record.question.id!r} is not verified")
    prompt = format_prompt(record.question, DEFAULT_INSTRUCTION)
    for marker in (THINK_MARKER, ANSWER_MARKER):
        for label, text in (("prompt", prompt), ("thinking", record.thinking), ("response", record.response)):
            if marker in text:
                raise CurationError(
                    f"record {record.question.id!r}: {label} contains the literal marker {marker!r}"
                )
    return "\n".join([prompt, THINK_MARKER, record.thinking, ANSWER_MARKER, record.response])


def parse_sft_example(text: str) -> tuple[str, str, str]:
    """Split a formatted example back into (prompt, thinking, response)."""
    head, _, rest = text.partition("\n" + THINK_MARKER + "\n")
    thinking, sep, response = rest.partition("\n" + ANSWER_MARKER + "\n")
    if not sep:
        raise CurationError("text is not a well-formed fine-tuning example")
    return head, thinking, response
