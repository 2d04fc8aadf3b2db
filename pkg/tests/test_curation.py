from __future__ import annotations

import random

import numpy as np
import pytest

from conftest import load_fixture
from thinkctl.budget import ANSWER_MARKER, THINK_MARKER
from thinkctl.client import ScriptEntry, ScriptedModel
from thinkctl.curation import (
    CurationError,
    CurationReport,
    SamplingPlan,
    StageCount,
    TraceRecord,
    annotate_domains,
    decontaminate,
    deduplicate,
    difficulty_filter,
    diversity_sample,
    format_sft_example,
    normalize_text,
    parse_sft_example,
    source_counts,
    validate_traces,
)
from thinkctl.qa import McqQuestion, format_prompt


def question(qid: str, stem: str, gold: str = "A", source: str = "src", domains=None) -> McqQuestion:
    return McqQuestion(
        id=qid,
        stem=stem,
        options={"A": "one", "B": "two", "C": "three", "D": "four"},
        gold=gold,
        source=source,
        domains=domains or [],
    )


def grader_for(verdicts: dict[str, bool], pool) -> ScriptedModel:
    """Scripted grader: answers gold iff verdicts[qid], else a wrong letter."""
    entries = []
    for q in pool:
        letter = q.gold if verdicts[q.id] else ("B" if q.gold != "B" else "C")
        entries.append(ScriptEntry(format_prompt(q), f"\\boxed{{{letter}}}", None))
    entries.append(ScriptEntry("", "", None))
    return ScriptedModel(tuple(entries))


# --- difficulty filter --------------------------------------------------------


def test_question_correct_for_one_grader_is_excluded():
    pool = [question("q1", "stem one"), question("q2", "stem two")]
    g1 = grader_for({"q1": True, "q2": False}, pool)
    g2 = grader_for({"q1": False, "q2": False}, pool)
    kept, row = difficulty_filter(pool, [g1, g2])
    assert [q.id for q in kept] == ["q2"]
    assert row.counts == {"src": 1}


def test_question_missed_by_all_graders_is_kept():
    pool = [question("q1", "stem one")]
    graders = [grader_for({"q1": False}, pool), grader_for({"q1": False}, pool)]
    kept, _ = difficulty_filter(pool, graders)
    assert [q.id for q in kept] == ["q1"]


def test_grader_hard_failure_counts_as_incorrect():
    class Broken:
        token_joiner = " "

        def raw_stream(self, req):
            from thinkctl.client import ConnectionFailure

            raise ConnectionFailure("always down")
            yield  # pragma: no cover

    pool = [question("q1", "stem one")]
    kept, _ = difficulty_filter(pool, [Broken()], backoff=0.0)
    assert [q.id for q in kept] == ["q1"]


def test_difficulty_filter_requires_a_grader():
    with pytest.raises(CurationError):
        difficulty_filter([question("q1", "s")], [])


def test_difficulty_filter_matches_bruteforce_on_random_verdicts():
    rng = random.Random(7)
    for _ in range(20):
        n_q = rng.randint(1, 30)
        n_g = rng.randint(1, 3)
        pool = [question(f"q{i:03d}", f"unique stem {i}") for i in range(n_q)]
        verdicts = {q.id: [rng.random() < 0.4 for _ in range(n_g)] for q in pool}
        graders = [grader_for({qid: v[g] for qid, v in verdicts.items()}, pool) for g in range(n_g)]
        kept, _ = difficulty_filter(pool, graders)
        expected = sorted(q.id for q in pool if not any(verdicts[q.id]))
        assert [q.id for q in kept] == expected


def test_difficulty_filter_worker_count_does_not_change_result():
    pool = [question(f"q{i}", f"stem number {i}") for i in range(12)]
    verdicts = {q.id: (i % 3 == 0) for i, q in enumerate(pool)}
    graders = [grader_for(verdicts, pool)]
    seq, _ = difficulty_filter(pool, graders, workers=1)
    par, _ = difficulty_filter(pool, graders, workers=4)
    assert [q.id for q in seq] == [q.id for q in par]


# --- trace validation -----------------------------------------------------------


def trace(qid: str, extracted, gold="A", source="src") -> TraceRecord:
    q = question(qid, f"stem {qid}", gold=gold, source=source)
    return TraceRecord(
        question=q,
        thinking="because reasons",
        response=f"\\boxed{{{extracted}}}" if extracted else "no answer",
        extracted=extracted,
        verified=extracted == gold,
    )


def test_validate_traces_keeps_correct_only():
    records = [trace("t1", "A"), trace("t2", "B"), trace("t3", None)]
    kept, row = validate_traces(records)
    assert [r.question.id for r in kept] == ["t1"]
    assert row.total == 1


def test_trace_consistency_enforced():
    q = question("t1", "stem")
    with pytest.raises(CurationError):
        TraceRecord(question=q, thinking="", response="", extracted="A", verified=False)


def test_trace_from_response_extracts_and_verifies():
    q = question("t1", "stem", gold="C")
    record = TraceRecord.from_response(q, "thinking", "surely \\boxed{C}")
    assert record.extracted == "C"
    assert record.verified


# --- decontamination and dedup ---------------------------------------------------


def long_stem(seed_word: str) -> str:
    # ten distinct words so stems from different seeds share no 8-gram
    return " ".join(f"{seed_word}{i}" for i in range(10))


def test_planted_duplicate_is_removed():
    eval_q = question("e1", long_stem("shared"), source="eval")
    pool = [question("p1", long_stem("shared")), question("p2", long_stem("fresh"))]
    clean, row = decontaminate(pool, [[eval_q]])
    assert [q.id for q in clean] == ["p2"]
    assert row.params["ngram_size"] == 8


def test_short_stems_never_match():
    eval_q = question("e1", "too short to overlap", source="eval")
    pool = [question("p1", "too short to overlap")]
    clean, _ = decontaminate(pool, [[eval_q]])
    assert len(clean) == 1  # under the 8-word window, so no n-grams exist


def test_near_duplicates_normalize_together():
    pool = [
        question("p1", "Trailing whitespace question   "),
        question("p2", "trailing WHITESPACE question"),
    ]
    kept, _ = deduplicate(pool)
    assert [q.id for q in kept] == ["p1"]


def test_decontaminate_is_idempotent():
    eval_q = question("e1", long_stem("shared"), source="eval")
    pool = [
        question("p1", long_stem("shared")),
        question("p2", long_stem("fresh")),
        question("p3", long_stem("fresh")),
    ]
    once, _ = decontaminate(pool, [[eval_q]])
    twice, _ = decontaminate(once, [[eval_q]])
    assert [q.id for q in once] == [q.id for q in twice] == ["p2"]


def test_dedup_is_idempotent():
    pool = [question("p1", "same stem here"), question("p2", "same stem here")]
    once, _ = deduplicate(pool)
    twice, _ = deduplicate(once)
    assert [q.id for q in once] == [q.id for q in twice] == ["p1"]


def test_normalize_text_pipeline():
    assert normalize_text("  A  B!  c? ") == "a b c"
    assert normalize_text("end.Start") == "end start"


# --- diversity sampling -----------------------------------------------------------


def plan_from(strata, target_n, seed=42) -> SamplingPlan:
    return SamplingPlan(target_n=target_n, seed=seed, strata=strata)


def test_one_item_per_domain_forces_whole_pool():
    strata = {f"dom{i}": {"ds": [f"item{i}"]} for i in range(5)}
    for seed in (0, 1, 99):
        selected, _ = diversity_sample(plan_from(strata, 5, seed))
        assert sorted(item for item, _ in selected) == sorted(f"item{i}" for i in range(5))


def test_target_exceeding_pool_errors_before_drawing():
    strata = {
        "d1": {"ds1": [f"a{i}" for i in range(50)], "ds2": [f"b{i}" for i in range(50)]},
        "d2": {"ds1": [f"c{i}" for i in range(50)], "ds2": [f"d{i}" for i in range(50)]},
    }
    with pytest.raises(CurationError):
        plan_from(strata, 1000)


def test_sampling_is_deterministic_per_seed():
    strata = {
        "d1": {"ds1": [f"a{i}" for i in range(30)]},
        "d2": {"ds1": [f"b{i}" for i in range(30)]},
    }
    first, _ = diversity_sample(plan_from(strata, 20, seed=123))
    second, _ = diversity_sample(plan_from(strata, 20, seed=123))
    other, _ = diversity_sample(plan_from(strata, 20, seed=124))
    assert first == second
    assert first != other


def test_sampling_without_replacement():
    strata = {"d1": {"ds1": [f"a{i}" for i in range(40)]}}
    selected, _ = diversity_sample(plan_from(strata, 40))
    ids = [item for item, _ in selected]
    assert len(set(ids)) == len(ids) == 40


def test_multi_domain_item_removed_from_all_strata():
    strata = {
        "d1": {"ds1": ["shared", "x1"]},
        "d2": {"ds1": ["shared", "x2"]},
    }
    selected, _ = diversity_sample(plan_from(strata, 3))
    ids = [item for item, _ in selected]
    assert sorted(ids) == ["shared", "x1", "x2"]


def test_plan_rejects_item_in_two_datasets():
    with pytest.raises(CurationError):
        plan_from({"d1": {"ds1": ["x"], "ds2": ["x"]}}, 1)


def test_report_row_counts_by_dataset():
    strata = {"d1": {"ds1": ["a1", "a2"], "ds2": ["b1"]}}
    selected, row = diversity_sample(plan_from(strata, 3))
    assert row.counts == {"ds1": 2, "ds2": 1}
    assert row.params["rng"] == "pcg64"


def test_exhausted_domains_are_skipped():
    strata = {
        "tiny": {"ds": ["only"]},
        "big": {"ds": [f"b{i}" for i in range(20)]},
    }
    selected, _ = diversity_sample(plan_from(strata, 15))
    assert len(selected) == 15


def sample_domain_counts(per_domain: int, target: int, seed: int) -> dict[str, int]:
    strata = {f"d{k}": {"ds": [f"d{k}-i{i}" for i in range(per_domain)]} for k in range(4)}
    selected, _ = diversity_sample(plan_from(strata, target, seed))
    counts = {f"d{k}": 0 for k in range(4)}
    for item, _ in selected:
        counts[item.split("-")[0]] += 1
    return counts


def test_ample_pool_domain_counts_within_simulated_bound():
    # sim-derived: for ample equal pools the per-domain count is
    # multinomial(400, 1/4); |count-100| <= 30 held in >= 99.8% of seeds
    hits = 0
    for seed in range(300):
        counts = sample_domain_counts(1000, 400, seed)
        if all(70 <= c <= 130 for c in counts.values()):
            hits += 1
    assert hits / 300 >= 0.97


def test_plan_from_questions_groups_by_domain_and_source():
    qs = [
        question("q1", "s1", source="ds1", domains=["cardio"]),
        question("q2", "s2", source="ds2", domains=["cardio", "renal"]),
        question("q3", "s3", source="ds1", domains=[]),
    ]
    plan = SamplingPlan.from_questions(qs, target_n=3, seed=1)
    assert set(plan.strata) == {"cardio", "renal", "Unlabeled"}
    assert plan.strata["cardio"]["ds2"] == ["q2"]
    assert plan.strata["Unlabeled"]["ds1"] == ["q3"]
    selected, _ = diversity_sample(plan)
    assert sorted(item for item, _ in selected) == ["q1", "q2", "q3"]


# --- domain annotation -------------------------------------------------------------


def test_direct_lexicon_hit():
    qs = [question("q1", "Options for chemotherapy dosing.")]
    annotated = annotate_domains(qs, {"chemotherapy": "Drug Therapy"})
    assert annotated[0].domains == ["Drug Therapy"]


def test_no_hit_gets_unlabeled():
    qs = [question("q1", "Nothing medical at all.")]
    annotated = annotate_domains(qs, {"chemotherapy": "Drug Therapy"})
    assert annotated[0].domains == ["Unlabeled"]


def test_empty_lexicon_rejected():
    with pytest.raises(CurationError):
        annotate_domains([question("q1", "stem")], {})


def test_annotation_fixture_pool_exact_labels():
    fixture = load_fixture("domain_stems.json")
    qs = [question(f"q{i}", case["stem"]) for i, case in enumerate(fixture["cases"])]
    annotated = annotate_domains(qs, fixture["lexicon"])
    for got, case in zip(annotated, fixture["cases"]):
        assert got.domains == case["domains"], case["stem"]


def test_annotation_does_not_mutate_input():
    qs = [question("q1", "chemotherapy stem", domains=["old"])]
    annotate_domains(qs, {"chemotherapy": "Drug Therapy"})
    assert qs[0].domains == ["old"]


# --- fine-tuning example formatting ---------------------------------------------


def test_sft_example_contains_markers_once_in_order():
    record = trace("t1", "A")
    text = format_sft_example(record)
    assert text.count(THINK_MARKER) == 1
    assert text.count(ANSWER_MARKER) == 1
    assert text.index(THINK_MARKER) < text.index(ANSWER_MARKER)


def test_sft_round_trip():
    record = trace("t1", "A")
    text = format_sft_example(record)
    prompt, thinking, response = parse_sft_example(text)
    assert prompt == format_prompt(record.question)
    assert thinking == record.thinking
    assert response == record.response


def test_sft_refuses_unverified():
    with pytest.raises(CurationError):
        format_sft_example(trace("t1", "B"))


def test_sft_refuses_marker_contamination():
    q = question("t1", "stem")
    record = TraceRecord(
        question=q,
        thinking=f"sneaky {THINK_MARKER} inside",
        response="\\boxed{A}",
        extracted="A",
        verified=True,
    )
    with pytest.raises(CurationError):
        format_sft_example(record)


# --- ledger report -----------------------------------------------------------------


def test_stage_total_is_per_source_sum():
    row = StageCount("s", {"a": 2, "b": 3})
    assert row.total == 5


def test_report_validate_rejects_increasing_totals():
    report = CurationReport()
    report.add_stage("first", {"a": 5})
    report.add_stage("second", {"a": 9})
    with pytest.raises(CurationError):
        report.validate()


def test_report_from_dict_rejects_wrong_total():
    with pytest.raises(CurationError):
        CurationReport.from_dict(
            {"stages": [{"name": "s", "counts": {"a": 2, "b": 3}, "total": 6}]}
        )


def test_report_round_trip():
    report = CurationReport(header={"seed": 42})
    report.add_stage("first", {"a": 5, "b": 2})
    report.add_stage("second", {"a": 3, "b": 1}, params={"k": 1})
    back = CurationReport.from_dict(report.to_dict())
    assert back.to_dict() == report.to_dict()


def test_live_pipeline_ledger_conservation():
    # a small end-to-end run whose report must reconcile at every stage
    pool = [
        question("q1", long_stem("alpha"), source="ds1"),
        question("q2", long_stem("beta"), source="ds1"),
        question("q3", long_stem("gamma"), source="ds2"),
        question("q4", long_stem("gamma"), source="ds2"),  # duplicate stem
        question("q5", long_stem("leaked"), source="ds2"),
    ]
    eval_set = [question("e1", long_stem("leaked"), source="eval")]
    graders = [grader_for({"q1": True, "q2": False, "q3": False, "q4": False, "q5": False}, pool)]

    report = CurationReport()
    report.add_stage("initial_collection", source_counts(pool))
    kept, row = difficulty_filter(pool, graders)
    report.stages.append(row)
    clean, row = decontaminate(kept, [eval_set])
    report.stages.append(row)
    plan = SamplingPlan.from_questions(clean, target_n=2, seed=3)
    _, row = diversity_sample(plan)
    report.stages.append(row)
    report.validate()
    totals = [stage.total for stage in report.stages]
    assert totals == [5, 4, 2, 2]
    for stage in report.stages:
        assert stage.total == sum(stage.counts.values())
