"""Thinking-budget enforcement and forcing control.

The controller streams a thinking phase capped by a token budget. When the
model signals the end of thinking early (by emitting the end-of-think
marker) and forcing injections remain, the marker is suppressed and the
forcing text is appended so the model keeps reasoning, each continuation
capped separately. When the budget cuts a thought, the end-of-think marker
and the answer cue are injected and the answer phase is streamed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .client import (
    CAUSE_BACKEND_STOP,
    CAUSE_CAP,
    BackendError,
    DEFAULT_SEED,
    DEFAULT_TEMPERATURE,
    GenerationRequest,
    collect,
    stream_generate,
)

# phase markers of the fine-tuned output format: thinking is enclosed
# between the think marker and the answer marker
THINK_MARKER = "<|im_start|>think"
ANSWER_MARKER = "<|im_start|>answer"

DEFAULT_THINKING_BUDGET = 4096
DEFAULT_PER_FORCING_CAP = 2048
DEFAULT_FORCING_TEXT = "Wait."

TERMINATION_NATURAL = "natural"
TERMINATION_BUDGET = "budget_exhausted"
TERMINATION_FORCING = "forcing_exhausted"

PROVENANCE_INITIAL = "initial"


def forced_provenance(index: int) -> str:
    return f"forced({index})"


@dataclass(frozen=True)
class BudgetPolicy:
    """Test-time scaling controls.

    ``thinking_budget`` caps the initial thinking segment; each forced
    continuation is capped by ``per_forcing_cap`` (optionally also by an
    aggregate cap over all forced tokens). Injected forcing text never
    counts toward thinking tokens. The end-of-think marker is the delimiter
    whose emission ends the thinking phase; at budget exhaustion the marker
    followed by the answer cue is injected to elicit the final answer.
    """

    thinking_budget: int = DEFAULT_THINKING_BUDGET
    forcing_count: int = 0
    forcing_text: str = DEFAULT_FORCING_TEXT
    per_forcing_cap: int = DEFAULT_PER_FORCING_CAP
    think_marker: str = THINK_MARKER
    end_of_think_marker: str = ANSWER_MARKER
    answer_cue: str = "Final Answer:"
    answer_cap: int = 1024
    aggregate_forcing_cap: int | None = None

    def __post_init__(self) -> None:
        if self.thinking_budget < 1:
            raise ValueError("thinking_budget must be >= 1")
        if self.per_forcing_cap < 1:
            raise ValueError("per_forcing_cap must be >= 1")
        if self.forcing_count < 0:
            raise ValueError("forcing_count must be >= 0")
        if self.forcing_count > 0 and not self.forcing_text:
            raise ValueError("forcing_text must be nonempty when forcing_count > 0")
        if self.answer_cap < 1:
            raise ValueError("answer_cap must be >= 1")
        if not self.end_of_think_marker:
            raise ValueError("end_of_think_marker must be nonempty")


@dataclass(frozen=True)
class Segment:
    """One thinking segment with its provenance (initial or forced(i))."""

    provenance: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class ReasoningTranscript:
    """Ordered thinking segments plus the captured answer.

    ``thinking_tokens`` counts model-emitted thinking tokens only; injected
    forcing text is recorded via ``injections``. ``token_joiner`` is the
    producing backend's join rule, kept so segment text reconstructs
    exactly.
    """

    segments: tuple[Segment, ...]
    injections: int
    thinking_tokens: int
    answer_text: str
    termination: str
    empty_answer: bool = False
    token_joiner: str = " "

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("transcript must contain at least one segment")
        if self.thinking_tokens != sum(len(s.tokens) for s in self.segments):
            raise ValueError("thinking_tokens must equal the sum of segment token counts")
        expected = [PROVENANCE_INITIAL] + [forced_provenance(i) for i in range(1, len(self.segments))]
        actual = [s.provenance for s in self.segments]
        if actual != expected:
            raise ValueError(f"segment provenance must be consecutive, got {actual}")

    @property
    def thinking_text(self) -> str:
        return self.token_joiner.join(t for s in self.segments for t in s.tokens)

    def to_record(self, transcript_id: str) -> dict:
        return {
            "id": transcript_id,
            "segments": [
                {
                    "provenance": s.provenance,
                    "text": self.token_joiner.join(s.tokens),
                    "tokens": list(s.tokens),
                }
                for s in self.segments
            ],
            "injections": self.injections,
            "thinking_tokens": self.thinking_tokens,
            "answer": self.answer_text,
            "termination": self.termination,
        }

    @classmethod
    def from_record(cls, record: dict, token_joiner: str = " ") -> "ReasoningTranscript":
        segments = tuple(
            Segment(provenance=s["provenance"], tokens=tuple(s["tokens"]))
            for s in record["segments"]
        )
        return cls(
            segments=segments,
            injections=record["injections"],
            thinking_tokens=record["thinking_tokens"],
            answer_text=record["answer"],
            termination=record["termination"],
            token_joiner=token_joiner,
        )


class BudgetRunError(BackendError):
    """Backend failure during a controlled run; carries the partial
    transcript built so far (its termination is a placeholder
    ``budget_exhausted`` since the run never completed)."""

    def __init__(self, message: str, partial: ReasoningTranscript | None):
        super().__init__(message)
        self.partial = partial

    @property
    def retryable(self) -> bool:  # type: ignore[override]
        cause = self.__cause__
        return isinstance(cause, BackendError) and cause.retryable


def _partial_transcript(segments: list[Segment], injections: int, joiner: str) -> ReasoningTranscript | None:
    if not segments:
        return None
    return ReasoningTranscript(
        segments=tuple(segments),
        injections=injections,
        thinking_tokens=sum(len(s.tokens) for s in segments),
        answer_text="",
        termination=TERMINATION_BUDGET,
        empty_answer=True,
        token_joiner=joiner,
    )


def run_with_budget(
    prompt: str,
    policy: BudgetPolicy,
    backend,
    *,
    temperature: float = DEFAULT_TEMPERATURE,
    seed: int = DEFAULT_SEED,
) -> ReasoningTranscript:
    """Run one budgeted, optionally forced, think-then-answer generation.

    The prompt must already be formatted. Thinking streams with the
    end-of-think marker watched; a marker before the budget with forcings
    remaining is suppressed and replaced by the forcing text. A budget cut
    transitions to the answer phase via marker + answer cue injection.
    """
    joiner = getattr(backend, "token_joiner", "")

    def extend(context: str, text: str) -> str:
        return context + joiner + text if context else text

    context = extend(prompt, policy.think_marker)
    segments: list[Segment] = []
    injections = 0
    forced_left = (
        policy.aggregate_forcing_cap
        if policy.aggregate_forcing_cap is not None
        else policy.forcing_count * policy.per_forcing_cap
    )
    termination = TERMINATION_NATURAL

    while True:
        if not segments:
            cap = policy.thinking_budget
            provenance = PROVENANCE_INITIAL
        else:
            cap = min(policy.per_forcing_cap, forced_left)
            provenance = forced_provenance(injections)
        req = GenerationRequest(
            prompt=context,
            max_new_tokens=cap,
            temperature=temperature,
            seed=seed,
            stop_on=policy.end_of_think_marker,
        )
        try:
            tokens, cause = collect(stream_generate(backend, req))
        except BackendError as exc:
            raise BudgetRunError(
                f"backend failed during thinking phase: {exc}",
                _partial_transcript(segments, injections, joiner),
            ) from exc
        segments.append(Segment(provenance, tuple(tokens)))
        if tokens:
            context = extend(context, joiner.join(tokens))
        if len(segments) > 1:
            forced_left -= len(tokens)

        if cause == CAUSE_CAP:
            termination = TERMINATION_BUDGET
            break
        if cause == CAUSE_BACKEND_STOP:
            termination = TERMINATION_NATURAL
            break
        # marker: the model signalled end of thinking
        if injections < policy.forcing_count and forced_left > 0:
            injections += 1
            context = extend(context, policy.forcing_text)
            continue
        if policy.forcing_count > 0 and injections == policy.forcing_count:
            termination = TERMINATION_FORCING
        else:
            termination = TERMINATION_NATURAL
        break

    # answer phase: inject the end-of-think marker followed by the answer cue
    context = extend(extend(context, policy.end_of_think_marker), policy.answer_cue)
    answer_req = GenerationRequest(
        prompt=context,
        max_new_tokens=policy.answer_cap,
        temperature=temperature,
        seed=seed,
    )
    try:
        answer_tokens, _ = collect(stream_generate(backend, answer_req))
    except BackendError as exc:
        raise BudgetRunError(
            f"backend failed during answer phase: {exc}",
            _partial_transcript(segments, injections, joiner),
        ) from exc
    answer_text = joiner.join(answer_tokens)

    return ReasoningTranscript(
        segments=tuple(segments),
        injections=injections,
        thinking_tokens=sum(len(s.tokens) for s in segments),
        answer_text=answer_text,
        termination=termination,
        empty_answer=not answer_text.strip(),
        token_joiner=joiner,
    )


def truncate_to_budget(transcript: ReasoningTranscript, budget: int) -> ReasoningTranscript:
    """Re-slice a cached transcript to at most ``budget`` thinking tokens.

    Cutting clears the answer (it must be re-elicited) and records
    ``budget_exhausted``; a transcript already within budget is returned
    unchanged. Budgets applied in increasing order give prefix-nested
    results.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if transcript.thinking_tokens <= budget:
        return transcript
    kept: list[Segment] = []
    remaining = budget
    for seg in transcript.segments:
        if remaining <= 0:
            break
        take = min(len(seg.tokens), remaining)
        kept.append(Segment(seg.provenance, seg.tokens[:take]))
        remaining -= take
    injections = sum(1 for s in kept if s.provenance != PROVENANCE_INITIAL)
    return ReasoningTranscript(
        segments=tuple(kept),
        injections=injections,
        thinking_tokens=sum(len(s.tokens) for s in kept),
        answer_text="",
        termination=TERMINATION_BUDGET,
        empty_answer=False,
        token_joiner=transcript.token_joiner,
    )


def reelicit_answer(
    prompt: str,
    transcript: ReasoningTranscript,
    policy: BudgetPolicy,
    backend,
    *,
    temperature: float = DEFAULT_TEMPERATURE,
    seed: int = DEFAULT_SEED,
) -> ReasoningTranscript:
    """Stream a fresh answer phase for a (typically truncated) transcript.

    Rebuilds the generation context from the prompt and the transcript's
    thinking tokens, replaying the forcing injections at segment
    boundaries, then injects the marker + answer cue transition. Used by
    the sweep fast mode; an approximation of a full re-run.
    """
    joiner = getattr(backend, "token_joiner", "")

    def extend(context: str, text: str) -> str:
        return context + joiner + text if context else text

    context = extend(prompt, policy.think_marker)
    for i, seg in enumerate(transcript.segments):
        if i > 0:
            context = extend(context, policy.forcing_text)
        if seg.tokens:
            context = extend(context, joiner.join(seg.tokens))
    context = extend(extend(context, policy.end_of_think_marker), policy.answer_cue)
    req = GenerationRequest(
        prompt=context,
        max_new_tokens=policy.answer_cap,
        temperature=temperature,
        seed=seed,
    )
    try:
        answer_tokens, _ = collect(stream_generate(backend, req))
    except BackendError as exc:
        raise BudgetRunError(
            f"backend failed during answer re-elicitation: {exc}",
            transcript,
        ) from exc
    answer_text = joiner.join(answer_tokens)
    return replace(transcript, answer_text=answer_text, empty_answer=not answer_text.strip())
