"""Prompt construction and answer extraction for multiple-choice QA.

Prompt layouts are bit-exact contracts: evaluation prompts are
``{question}\\n{options}\\n{instruction}`` and trace-generation prompts put
the instruction first. Extraction scans ``\\boxed{...}`` expressions first
and falls back to a versioned regex cascade; absence of a match is an
outcome, not an error.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Mapping

log = logging.getLogger(__name__)

DEFAULT_INSTRUCTION = "Return your final response within \\boxed{}."
COT_INSTRUCTION = "Let's think step by step. Return your final response within \\boxed{}."

METHOD_BOXED = "boxed"
METHOD_FALLBACK = "regex_fallback"
METHOD_NONE = "none"

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass
class McqQuestion:
    """One multiple-choice item with lettered options.

    Option letters are consecutive from 'A'; the gold answer must be one of
    them. ``domains`` holds MeSH-qualifier style labels used as sampling
    strata.
    """

    id: str
    stem: str
    options: dict[str, str]
    gold: str
    source: str = ""
    domains: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        letters = list(self.options)
        if len(letters) < 2:
            raise ValueError(f"question {self.id!r}: needs at least 2 options")
        expected = list(_LETTERS[: len(letters)])
        if letters != expected:
            raise ValueError(
                f"question {self.id!r}: option letters must be consecutive from 'A', got {letters}"
            )
        if self.gold not in self.options:
            raise ValueError(f"question {self.id!r}: gold {self.gold!r} not among options")

    @property
    def letters(self) -> list[str]:
        return list(self.options)


@dataclass(frozen=True)
class ExtractionOutcome:
    """Result of scanning a completion for an answer letter.

    ``letter`` is present iff ``method`` is not ``none``; ``span`` is the
    character range of the matched evidence in the source text.
    """

    letter: str | None
    method: str
    span: tuple[int, int] | None

    def __post_init__(self) -> None:
        if (self.letter is None) != (self.method == METHOD_NONE):
            raise ValueError("letter must be present exactly when method != none")


def format_options(options: Mapping[str, str]) -> str:
    """Render options one per line as ``<letter>. <text>``, no trailing newline."""
    return "\n".join(f"{letter}. {text}" for letter, text in options.items())


def format_prompt(question: McqQuestion, instruction: str = DEFAULT_INSTRUCTION) -> str:
    """Evaluation prompt: question, then options, then instruction."""
    if not instruction:
        raise ValueError("instruction must be nonempty")
    if not question.stem:
        log.warning("question %s has an empty stem; prompt will start with a newline", question.id)
    return f"{question.stem}\n{format_options(question.options)}\n{instruction}"


def format_trace_prompt(question: McqQuestion) -> str:
    """Trace-generation prompt: instruction first, then question, then options."""
    return f"{DEFAULT_INSTRUCTION}\n{question.stem}\n{format_options(question.options)}"


# Fallback patterns applied, in order, when no boxed expression resolves.
# {letters} expands to the allowed-letter alternation. The table is
# versioned so that any change is visible to the fixture snapshot test.
FALLBACK_CASCADE_VERSION = 1
FALLBACK_CASCADE: tuple[tuple[str, str], ...] = (
    ("answer-is", r"answer\s+is\s*:?\s*\(?({letters})\)?(?![A-Za-z])"),
    ("answer-colon", r"answer\s*:\s*\(?({letters})\)?(?![A-Za-z])"),
    ("option", r"option\s+\(?({letters})\)?(?![A-Za-z])"),
    ("standalone", r"(?<![A-Za-z])(?:\(({letters})\)|({letters})\.)"),
)
# the standalone pattern only applies to this many final characters
STANDALONE_TAIL = 200


def _normalize_options(options) -> dict[str, str]:
    if isinstance(options, Mapping):
        return {str(k).upper(): str(v) for k, v in options.items()}
    return {str(letter).upper(): "" for letter in options}


def _iter_boxed(text: str):
    """Yield (content, span) for each ``\\boxed{...}`` with balanced braces."""
    for match in re.finditer(r"\\boxed\s*\{", text):
        depth = 1
        pos = match.end()
        while pos < len(text) and depth > 0:
            if text[pos] == "{":
                depth += 1
            elif text[pos] == "}":
                depth -= 1
            pos += 1
        if depth == 0:
            yield text[match.end() : pos - 1], (match.start(), pos)


def _resolve_boxed(content: str, options: dict[str, str]) -> str | None:
    content = content.strip()
    if not content:
        return None
    upper = content.upper()
    # bare letter, or letter followed by "." / ")"
    if upper in options:
        return upper
    if len(content) == 2 and content[1] in ".)" and upper[0] in options:
        return upper[0]
    # letter plus the option text, e.g. "B. no" / "B) no"
    lead = re.match(r"^([A-Za-z])[.):]?\s+(.*)$", content, re.DOTALL)
    if lead and lead.group(1).upper() in options:
        letter = lead.group(1).upper()
        if lead.group(2).strip().casefold() == options[letter].strip().casefold():
            return letter
    # the full option text, mapped back to its letter
    for letter, option_text in options.items():
        if option_text and content.casefold() == option_text.strip().casefold():
            return letter
    return None


def extract_answer(text: str, options) -> ExtractionOutcome:
    """Extract an answer letter from a completion.

    ``options`` is the letter->text mapping (or a bare iterable of letters
    when option-text matching is not wanted). Boxed expressions are scanned
    first; the earliest one that resolves to an allowed letter wins.
    Otherwise the fallback cascade applies, stage by stage, earliest span
    winning within a stage. Pure and total: any text yields exactly one
    outcome.
    """
    option_map = _normalize_options(options)
    if not option_map:
        raise ValueError("options must be nonempty")

    for content, span in _iter_boxed(text):
        letter = _resolve_boxed(content, option_map)
        if letter is not None:
            return ExtractionOutcome(letter, METHOD_BOXED, span)

    alternation = "|".join(re.escape(letter) for letter in option_map)
    for name, template in FALLBACK_CASCADE:
        pattern = re.compile(template.format(letters=alternation), re.IGNORECASE)
        if name == "standalone":
            offset = max(0, len(text) - STANDALONE_TAIL)
            region = text[offset:]
        else:
            offset = 0
            region = text
        match = pattern.search(region)
        if match:
            letter = next(g for g in match.groups() if g is not None).upper()
            span = (offset + match.start(), offset + match.end())
            return ExtractionOutcome(letter, METHOD_FALLBACK, span)

    return ExtractionOutcome(None, METHOD_NONE, None)


def grade(outcome: ExtractionOutcome, gold: str) -> bool:
    """True iff the extracted letter equals the gold letter; no letter grades false."""
    return outcome.letter is not None and outcome.letter == gold.upper()
