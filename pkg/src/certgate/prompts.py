"""Prompt strategies and template rendering.

Seven certainty-eliciting strategies plus the document-augmented answering
template. Bodies live in an editable YAML file; the shipped defaults are in
``certgate/data/templates.yaml``. Rendering is a pure, literal placeholder
substitution.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

import yaml

from .core import CertgateError, ModelTurn
from .parsing import OutputContract


class StrategyId(str, Enum):
    VANILLA = "vanilla"
    PUNISH = "punish"
    CHALLENGE = "challenge"
    STEP_BY_STEP = "step_by_step"
    GENERATE = "generate"
    EXPLAIN = "explain"
    PUNISH_EXPLAIN = "punish_explain"
    RA_ANSWER = "ra_answer"

    def __str__(self) -> str:  # plain value in logs and ledgers
        return self.value


#: Strategies whose completions must carry a certainty marker.
CERTAINTY_STRATEGIES = tuple(s for s in StrategyId if s is not StrategyId.RA_ANSWER)

#: This exact sentence must appear in the punish and punish_explain bodies.
PUNISH_SENTENCE = "You will be punished if the answer is not right but you say certain"

_CHALLENGE_FOLLOWUP = (
    "You previously answered the question with {answer}.\n"
    "I do not think that is correct. Reconsider your answer carefully.\n"
    'If you are still certain it is right, finish with exactly "Certainty: certain"; '
    'otherwise finish with exactly "Certainty: uncertain".'
)

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class TemplateError(CertgateError):
    """Malformed template definition or template file."""


class UnknownStrategy(TemplateError):
    """Template file names a strategy id outside the closed set."""


class MissingDocument(CertgateError):
    """ra_answer rendered without a document."""


class UnexpectedDocument(CertgateError):
    """Document passed to a strategy that does not take one."""


@dataclass(frozen=True)
class PromptTemplate:
    strategy: StrategyId
    body: str
    output_contract: OutputContract

    def __post_init__(self) -> None:
        placeholders = set(_PLACEHOLDER_RE.findall(self.body))
        wants_doc = self.strategy is StrategyId.RA_ANSWER
        expected = {"question", "document"} if wants_doc else {"question"}
        if placeholders != expected:
            raise TemplateError(
                f"{self.strategy}: body placeholders {sorted(placeholders)} "
                f"!= expected {sorted(expected)}"
            )
        if self.strategy in (StrategyId.PUNISH, StrategyId.PUNISH_EXPLAIN):
            if PUNISH_SENTENCE not in self.body:
                raise TemplateError(
                    f"{self.strategy}: body must contain the sentence {PUNISH_SENTENCE!r}"
                )


def render(template: PromptTemplate, question: str, document: str | None = None) -> str:
    """Substitute placeholders literally; input text is never transformed.

    Raises:
        MissingDocument: ra_answer template without a document.
        UnexpectedDocument: document given to any other strategy.
    """
    wants_doc = template.strategy is StrategyId.RA_ANSWER
    if wants_doc and document is None:
        raise MissingDocument(f"{template.strategy} requires a document")
    if not wants_doc and document is not None:
        raise UnexpectedDocument(f"{template.strategy} does not accept a document")

    values = {"question": question, "document": document}

    def repl(m: re.Match[str]) -> str:
        return values[m.group(1)]  # type: ignore[return-value]

    # Single pass, so placeholder-looking text inside inputs is left alone.
    return _PLACEHOLDER_RE.sub(repl, template.body)


def challenge_followup(prior_turn: ModelTurn) -> str:
    """Second-round prompt contesting the prior answer.

    The prior answer is quoted verbatim; when it is empty the prompt falls
    back to the words "your answer" so the turn stays well-formed.
    """
    answer = prior_turn.answer.strip()
    ref = f'"{answer}"' if answer else "your answer"
    return _CHALLENGE_FOLLOWUP.format(answer=ref)


def _parse_contract(raw: object, strategy: str) -> OutputContract:
    if raw is None:
        return OutputContract()
    if not isinstance(raw, dict):
        raise TemplateError(f"{strategy}: output_contract must be a mapping")
    known = {"certain_marker", "uncertain_marker", "strip_labels", "description"}
    unknown = set(raw) - known
    if unknown:
        raise TemplateError(f"{strategy}: unknown output_contract fields {sorted(unknown)}")
    kwargs = dict(raw)
    if "strip_labels" in kwargs:
        kwargs["strip_labels"] = tuple(str(x) for x in kwargs["strip_labels"])
    return OutputContract(**kwargs)


def load_templates(path: str | Path | None = None) -> dict[StrategyId, PromptTemplate]:
    """Load templates from a YAML file (or the shipped defaults).

    Unknown strategy ids are rejected; entries missing a body are an error.
    """
    if path is None:
        raw_text = resources.files("certgate.data").joinpath("templates.yaml").read_text("utf-8")
    else:
        raw_text = Path(path).read_text("utf-8")
    data = yaml.safe_load(raw_text)
    if not isinstance(data, dict):
        raise TemplateError("template file must be a mapping of strategy id to entry")

    valid = {s.value: s for s in StrategyId}
    templates: dict[StrategyId, PromptTemplate] = {}
    for key, entry in data.items():
        if key not in valid:
            raise UnknownStrategy(f"unknown strategy id {key!r} in template file")
        if not isinstance(entry, dict) or "body" not in entry:
            raise TemplateError(f"{key}: entry must be a mapping with a 'body' field")
        strategy = valid[key]
        templates[strategy] = PromptTemplate(
            strategy=strategy,
            body=str(entry["body"]),
            output_contract=_parse_contract(entry.get("output_contract"), key),
        )
    return templates


@lru_cache(maxsize=1)
def default_templates() -> dict[StrategyId, PromptTemplate]:
    return load_templates(None)
