from __future__ import annotations

import pytest

from thinkctl.budget import (
    ANSWER_MARKER,
    THINK_MARKER,
    BudgetPolicy,
    BudgetRunError,
    ReasoningTranscript,
    Segment,
    TERMINATION_BUDGET,
    TERMINATION_FORCING,
    TERMINATION_NATURAL,
    reelicit_answer,
    run_with_budget,
    truncate_to_budget,
)
from thinkctl.client import ConnectionFailure, ScriptEntry, ScriptedModel


def words(prefix: str, n: int) -> str:
    return " ".join(f"{prefix}{i}" for i in range(n))


def forcing_model(initial: int, per_round: int, answer: str = "\\boxed{B}") -> ScriptedModel:
    """Thinks `initial` tokens, and after each "Wait." injection thinks
    `per_round` more, always offering to stop via the end-of-think marker."""
    return ScriptedModel(
        (
            ScriptEntry("Wait.", words("w", per_round), ANSWER_MARKER),
            ScriptEntry("Final Answer:", answer, None),
            ScriptEntry("", words("t", initial), ANSWER_MARKER),
        )
    )


def test_policy_defaults_match_operating_point():
    policy = BudgetPolicy()
    assert policy.thinking_budget == 4096
    assert policy.forcing_text == "Wait."
    assert policy.per_forcing_cap == 2048
    assert policy.forcing_count == 0
    assert policy.think_marker == THINK_MARKER
    assert policy.end_of_think_marker == ANSWER_MARKER


def test_policy_validation():
    with pytest.raises(ValueError):
        BudgetPolicy(thinking_budget=0)
    with pytest.raises(ValueError):
        BudgetPolicy(per_forcing_cap=0)
    with pytest.raises(ValueError):
        BudgetPolicy(forcing_count=1, forcing_text="")
    BudgetPolicy(forcing_count=0, forcing_text="")  # allowed when unused


def test_natural_end_without_forcing():
    model = forcing_model(5, 3)
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=4096, forcing_count=0), model)
    assert [(s.provenance, len(s.tokens)) for s in transcript.segments] == [("initial", 5)]
    assert transcript.injections == 0
    assert transcript.termination == TERMINATION_NATURAL
    assert transcript.answer_text == "\\boxed{B}"


def test_forcing_trace_matches_hand_replay():
    # hand-traced: 10 initial tokens, two forced rounds of 7, both forcings used
    model = forcing_model(10, 7)
    policy = BudgetPolicy(thinking_budget=4096, forcing_count=2)
    transcript = run_with_budget("Q?", policy, model)
    assert [(s.provenance, len(s.tokens)) for s in transcript.segments] == [
        ("initial", 10),
        ("forced(1)", 7),
        ("forced(2)", 7),
    ]
    assert transcript.injections == 2
    assert transcript.thinking_tokens == 24
    assert transcript.termination == TERMINATION_FORCING


def test_budget_cut_transitions_to_answer():
    model = forcing_model(50, 7)
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=8, forcing_count=3), model)
    assert transcript.segments[0].tokens == tuple(f"t{i}" for i in range(8))
    assert transcript.termination == TERMINATION_BUDGET
    assert transcript.injections == 0
    assert transcript.answer_text == "\\boxed{B}"


def test_forced_segment_capped_by_per_forcing_cap():
    model = forcing_model(5, 100)
    policy = BudgetPolicy(thinking_budget=4096, forcing_count=2, per_forcing_cap=10)
    transcript = run_with_budget("Q?", policy, model)
    assert [(s.provenance, len(s.tokens)) for s in transcript.segments] == [
        ("initial", 5),
        ("forced(1)", 10),
    ]
    assert transcript.termination == TERMINATION_BUDGET


def test_aggregate_forcing_cap_limits_total_forced_tokens():
    model = forcing_model(5, 6)
    policy = BudgetPolicy(
        thinking_budget=4096, forcing_count=5, per_forcing_cap=10, aggregate_forcing_cap=10
    )
    transcript = run_with_budget("Q?", policy, model)
    forced = [len(s.tokens) for s in transcript.segments[1:]]
    assert sum(forced) <= 10
    # second forced round is capped at the remaining aggregate allowance
    assert forced == [6, 4]
    assert transcript.termination == TERMINATION_BUDGET


def test_marker_never_stored_in_segments():
    model = ScriptedModel(
        (
            ScriptEntry("Final Answer:", "\\boxed{A}", None),
            ScriptEntry("", f"one two {ANSWER_MARKER} three", None),
        )
    )
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=100), model)
    for segment in transcript.segments:
        assert all(ANSWER_MARKER not in token for token in segment.tokens)
        assert ANSWER_MARKER not in " ".join(segment.tokens)
    assert transcript.segments[0].tokens == ("one", "two")


def test_backend_stop_during_thinking_is_natural():
    model = ScriptedModel(
        (
            ScriptEntry("Final Answer:", "\\boxed{C}", None),
            ScriptEntry("", "ran out of script", None),
        )
    )
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=100, forcing_count=2), model)
    assert transcript.termination == TERMINATION_NATURAL
    assert transcript.injections == 0
    assert transcript.answer_text == "\\boxed{C}"


def test_empty_answer_sets_flag():
    # no entry matches the answer-phase context, so the answer is empty
    model = ScriptedModel((ScriptEntry(THINK_MARKER, "some thinking", ANSWER_MARKER),))
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=100), model)
    assert transcript.answer_text == ""
    assert transcript.empty_answer
    assert transcript.termination == TERMINATION_NATURAL


def test_backend_error_carries_partial_transcript():
    class Flaky:
        token_joiner = " "

        def __init__(self):
            self.calls = 0

        def raw_stream(self, req):
            self.calls += 1
            if self.calls == 1:
                yield from ["some", "thinking"]
                return
            raise ConnectionFailure("died")

    model = ScriptedModel(
        (
            ScriptEntry("Wait.", "", None),
            ScriptEntry("", "a b c", ANSWER_MARKER),
        )
    )
    backend = Flaky()
    with pytest.raises(BudgetRunError) as excinfo:
        run_with_budget("Q?", BudgetPolicy(thinking_budget=100), backend)
    err = excinfo.value
    assert err.retryable
    assert err.partial is not None
    assert err.partial.segments[0].tokens == ("some", "thinking")


def test_prefix_stability_when_forcing_count_grows():
    model = forcing_model(10, 7)
    for k in range(4):
        a = run_with_budget("Q?", BudgetPolicy(thinking_budget=4096, forcing_count=k), model)
        b = run_with_budget("Q?", BudgetPolicy(thinking_budget=4096, forcing_count=k + 1), model)
        shared = min(k + 1, len(a.segments), len(b.segments))
        assert a.segments[:shared] == b.segments[:shared]


def test_transcript_invariants_enforced():
    seg = Segment("initial", ("a", "b"))
    with pytest.raises(ValueError):
        ReasoningTranscript((), 0, 0, "", TERMINATION_NATURAL)
    with pytest.raises(ValueError):
        ReasoningTranscript((seg,), 0, 5, "", TERMINATION_NATURAL)
    with pytest.raises(ValueError):
        ReasoningTranscript(
            (seg, Segment("forced(2)", ("c",))), 1, 3, "", TERMINATION_NATURAL
        )


def test_serialization_round_trip():
    model = forcing_model(4, 3)
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=4096, forcing_count=1), model)
    record = transcript.to_record("q1")
    assert record["id"] == "q1"
    assert record["segments"][0]["text"] == "t0 t1 t2 t3"
    assert record["segments"][0]["tokens"] == ["t0", "t1", "t2", "t3"]
    assert record["injections"] == 1
    back = ReasoningTranscript.from_record(record)
    assert back.segments == transcript.segments
    assert back.answer_text == transcript.answer_text
    assert back.termination == transcript.termination


def test_truncate_noop_at_exact_budget():
    model = forcing_model(10, 7)
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=4096, forcing_count=2), model)
    assert transcript.thinking_tokens == 24
    assert truncate_to_budget(transcript, 24) is transcript
    assert truncate_to_budget(transcript, 100) is transcript


def test_truncate_cuts_and_clears_answer():
    model = forcing_model(10, 7)
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=4096, forcing_count=2), model)
    cut = truncate_to_budget(transcript, 10)
    assert cut.thinking_tokens == 10
    assert cut.termination == TERMINATION_BUDGET
    assert cut.answer_text == ""
    assert [s.provenance for s in cut.segments] == ["initial"]
    assert cut.injections == 0
    mid = truncate_to_budget(transcript, 12)
    assert [(s.provenance, len(s.tokens)) for s in mid.segments] == [("initial", 10), ("forced(1)", 2)]
    assert mid.injections == 1


def test_truncate_budgets_are_prefix_nested():
    model = forcing_model(10, 7)
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=4096, forcing_count=2), model)

    def flat(t):
        return [tok for s in t.segments for tok in s.tokens]

    previous: list[str] = []
    for budget in (8, 16, 24):
        tokens = flat(truncate_to_budget(transcript, budget))
        assert tokens[: len(previous)] == previous
        assert len(tokens) == min(budget, 24)
        previous = tokens


def test_truncate_rejects_nonpositive_budget():
    model = forcing_model(3, 1)
    transcript = run_with_budget("Q?", BudgetPolicy(thinking_budget=10), model)
    with pytest.raises(ValueError):
        truncate_to_budget(transcript, 0)


def test_reelicit_answer_after_truncation():
    # answers differ depending on whether the full thought survived
    full_tail = f"t9 {ANSWER_MARKER} Final Answer:"
    model = ScriptedModel(
        (
            ScriptEntry(full_tail, "\\boxed{B}", None),
            ScriptEntry("Final Answer:", "\\boxed{D}", None),
            ScriptEntry("", words("t", 10), ANSWER_MARKER),
        )
    )
    policy = BudgetPolicy(thinking_budget=4096)
    transcript = run_with_budget("Q?", policy, model)
    assert transcript.answer_text == "\\boxed{B}"
    cut = truncate_to_budget(transcript, 5)
    answered = reelicit_answer("Q?", cut, policy, model)
    assert answered.thinking_tokens == 5
    assert answered.answer_text == "\\boxed{D}"
