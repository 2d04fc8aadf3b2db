"""The curation pipeline on a miniature pool, ledger included.

Stages: difficulty filtering with scripted graders, trace validation,
decontamination + dedup against an evaluation set, domain annotation, and
hierarchical diversity sampling. Every stage contributes a per-source row
to the report, whose totals must reconcile.
"""

import json

from thinkctl import (
    CurationReport,
    McqQuestion,
    SamplingPlan,
    ScriptEntry,
    ScriptedModel,
    TraceRecord,
    annotate_domains,
    decontaminate,
    difficulty_filter,
    diversity_sample,
    format_sft_example,
    validate_traces,
)
from thinkctl.curation import source_counts
from thinkctl.qa import format_prompt


def mk(qid, stem, gold="A", source="examsA"):
    return McqQuestion(
        id=qid,
        stem=stem,
        options={"A": "yes", "B": "no", "C": "maybe"},
        gold=gold,
        source=source,
    )


def unique_stem(word):
    return " ".join(f"{word}{i}" for i in range(10))


pool = [
    mk("q1", unique_stem("cardiac") + " heart failure case"),
    mk("q2", unique_stem("renal") + " with renal involvement", source="examsB"),
    mk("q3", unique_stem("leaky")),
    mk("q4", unique_stem("easy")),
    mk("q5", unique_stem("dupane")),
    mk("q6", unique_stem("dupane"), source="examsB"),
]
eval_set = [mk("e1", unique_stem("leaky"), source="heldout")]

# the scripted grader nails q4 and misses everything else
grader_entries = [
    ScriptEntry(format_prompt(q), "\\boxed{A}" if q.id == "q4" else "\\boxed{B}")
    for q in pool
]
grader = ScriptedModel(tuple(grader_entries))

report = CurationReport(header={"demo": True})
report.add_stage("initial_collection", source_counts(pool))

kept, row = difficulty_filter(pool, [grader])
report.stages.append(row)
print("difficulty filter kept:", [q.id for q in kept])

clean, row = decontaminate(kept, [eval_set])
report.stages.append(row)
print("after decontamination + dedup:", [q.id for q in clean])

lexicon = {"heart": "Cardiology", "renal": "Urology"}
annotated = annotate_domains(clean, lexicon)
print("domains:", {q.id: q.domains for q in annotated})

plan = SamplingPlan.from_questions(annotated, target_n=2, seed=42)
selected, row = diversity_sample(plan)
report.stages.append(row)
print("sampled:", selected)

report.validate()
print("--- ledger ---")
print(json.dumps(report.to_dict(), indent=2))

# verified traces render as fine-tuning examples with the phase markers
trace = TraceRecord.from_response(pool[0], thinking="weighing the findings", response="\\boxed{A}")
verified, _ = validate_traces([trace])
print("--- fine-tuning example ---")
print(format_sft_example(verified[0]))
