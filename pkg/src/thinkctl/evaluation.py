"""Multiple-choice evaluation, budget/forcing sweeps, and macro averaging.

Accuracy is exact: reported accuracy times n always equals the integer
count of correct outcomes. Per-question hard failures count as incorrect
(never excluded) so n stays fixed across sweep points.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from statistics import fmean
from typing import Sequence

from .budget import BudgetPolicy, ReasoningTranscript, reelicit_answer, run_with_budget, truncate_to_budget
from .client import BackendError, DEFAULT_SEED, DEFAULT_TEMPERATURE, with_retries
from .qa import DEFAULT_INSTRUCTION, McqQuestion, extract_answer, format_prompt, grade

DEFAULT_BUDGET_GRID = (512, 1024, 2048, 4096, 8192)
DEFAULT_WORKERS = 8

KIND_BUDGET = "budget"
KIND_FORCING = "forcing"


@dataclass
class EvalOutcome:
    """One graded question: extraction, correctness, and token accounting."""

    question_id: str
    transcript: ReasoningTranscript | None
    letter: str | None
    correct: bool
    thinking_tokens: int
    error: str | None = None


@dataclass
class EvalResult:
    accuracy: float
    n_correct: int
    n: int
    outcomes: list[EvalOutcome]


@dataclass(frozen=True)
class SweepPoint:
    """One sweep sample: x is the imposed budget or the forcing count.

    ``mean_thinking_tokens`` records the realized mean thinking length so
    curves can be replotted against either axis convention.
    """

    x: float
    accuracy: float
    n: int
    n_correct: int
    mean_thinking_tokens: float

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "accuracy": self.accuracy,
            "n": self.n,
            "n_correct": self.n_correct,
            "mean_thinking_tokens": self.mean_thinking_tokens,
        }


@dataclass
class SweepResult:
    """(x, accuracy) points for one dataset, sorted by x, distinct x values."""

    dataset: str
    kind: str
    points: list[SweepPoint]

    def __post_init__(self) -> None:
        xs = [p.x for p in self.points]
        if sorted(xs) != xs:
            raise ValueError("sweep points must be sorted by x")
        if len(set(xs)) != len(xs):
            raise ValueError("sweep x values must be distinct")
        for p in self.points:
            if p.n and p.accuracy != p.n_correct / p.n:
                raise ValueError(f"point x={p.x}: accuracy is not exactly n_correct/n")

    def to_dict(self) -> dict:
        return {"dataset": self.dataset, "kind": self.kind, "points": [p.to_dict() for p in self.points]}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepResult":
        points = [SweepPoint(**p) for p in data["points"]]
        return cls(dataset=data["dataset"], kind=data.get("kind", KIND_BUDGET), points=points)


def evaluate(
    questions: Sequence[McqQuestion],
    backend,
    policy: BudgetPolicy,
    *,
    instruction: str = DEFAULT_INSTRUCTION,
    temperature: float = DEFAULT_TEMPERATURE,
    seed: int = DEFAULT_SEED,
    workers: int = DEFAULT_WORKERS,
    retries: int = 2,
    backoff: float = 0.5,
) -> EvalResult:
    """Run every question through the budget controller and grade it.

    Outcomes are merged in question-id order, so results do not depend on
    worker completion order. A question whose backend calls fail after
    retries is flagged and counted incorrect.
    """
    if not questions:
        raise ValueError("dataset is empty")

    def run_one(question: McqQuestion) -> EvalOutcome:
        prompt = format_prompt(question, instruction)
        try:
            transcript = with_retries(
                lambda: run_with_budget(prompt, policy, backend, temperature=temperature, seed=seed),
                retries=retries,
                backoff=backoff,
            )
        except BackendError as exc:
            return EvalOutcome(question.id, None, None, False, 0, error=str(exc))
        outcome = extract_answer(transcript.answer_text, question.options)
        return EvalOutcome(
            question_id=question.id,
            transcript=transcript,
            letter=outcome.letter,
            correct=grade(outcome, question.gold),
            thinking_tokens=transcript.thinking_tokens,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, questions))
    else:
        outcomes = [run_one(q) for q in questions]
    outcomes.sort(key=lambda o: o.question_id)

    n = len(outcomes)
    n_correct = sum(1 for o in outcomes if o.correct)
    return EvalResult(accuracy=n_correct / n, n_correct=n_correct, n=n, outcomes=outcomes)


def macro_average(per_dataset: Sequence[float]) -> float:
    """Unweighted arithmetic mean of per-dataset accuracies, reported to
    two decimal places (percent scale in, percent scale out)."""
    if not per_dataset:
        raise ValueError("need at least one dataset accuracy")
    return round(fmean(per_dataset), 2)


def _point(x: float, result: EvalResult) -> SweepPoint:
    realized = [o.thinking_tokens for o in result.outcomes]
    return SweepPoint(
        x=x,
        accuracy=result.accuracy,
        n=result.n,
        n_correct=result.n_correct,
        mean_thinking_tokens=fmean(realized) if realized else 0.0,
    )


def budget_sweep(
    questions: Sequence[McqQuestion],
    backend,
    budgets: Sequence[int],
    policy: BudgetPolicy,
    *,
    dataset_name: str = "dataset",
    reuse_transcripts: bool = False,
    **eval_kwargs,
) -> SweepResult:
    """Evaluate once per thinking budget.

    By default each budget re-runs generation. ``reuse_transcripts`` is an
    opt-in fast mode: one run at the largest budget, then each smaller
    budget truncates those transcripts and re-elicits only the answer (an
    approximation of a full re-run).
    """
    if not budgets:
        raise ValueError("need at least one budget")
    if len(set(budgets)) != len(budgets):
        raise ValueError("budgets must be distinct")
    ordered = sorted(budgets)

    points = []
    if not reuse_transcripts:
        for budget in ordered:
            result = evaluate(questions, backend, replace(policy, thinking_budget=budget), **eval_kwargs)
            points.append(_point(budget, result))
        return SweepResult(dataset_name, KIND_BUDGET, points)

    instruction = eval_kwargs.get("instruction", DEFAULT_INSTRUCTION)
    temperature = eval_kwargs.get("temperature", DEFAULT_TEMPERATURE)
    seed = eval_kwargs.get("seed", DEFAULT_SEED)
    full = evaluate(questions, backend, replace(policy, thinking_budget=ordered[-1]), **eval_kwargs)
    by_id = {q.id: q for q in questions}
    for budget in ordered:
        n_correct = 0
        realized = []
        for outcome in full.outcomes:
            if outcome.transcript is None:
                realized.append(0)
                continue
            question = by_id[outcome.question_id]
            cut = truncate_to_budget(outcome.transcript, budget)
            if cut is outcome.transcript:
                answered = outcome.transcript
            else:
                answered = reelicit_answer(
                    format_prompt(question, instruction),
                    cut,
                    replace(policy, thinking_budget=budget),
                    backend,
                    temperature=temperature,
                    seed=seed,
                )
            realized.append(answered.thinking_tokens)
            if grade(extract_answer(answered.answer_text, question.options), question.gold):
                n_correct += 1
        n = full.n
        points.append(
            SweepPoint(
                x=budget,
                accuracy=n_correct / n,
                n=n,
                n_correct=n_correct,
                mean_thinking_tokens=fmean(realized) if realized else 0.0,
            )
        )
    return SweepResult(dataset_name, KIND_BUDGET, points)


def forcing_sweep(
    questions: Sequence[McqQuestion],
    backend,
    max_forcings: int,
    policy: BudgetPolicy,
    *,
    dataset_name: str = "dataset",
    **eval_kwargs,
) -> SweepResult:
    """Evaluate once per forcing count, 0..max_forcings.

    x = 0 takes the model's first answer without forcing; each forced
    continuation stays within the policy's per-forcing token limit.
    """
    if max_forcings < 0:
        raise ValueError("max_forcings must be >= 0")
    points = []
    for count in range(max_forcings + 1):
        result = evaluate(questions, backend, replace(policy, forcing_count=count), **eval_kwargs)
        points.append(_point(count, result))
    return SweepResult(dataset_name, KIND_FORCING, points)
