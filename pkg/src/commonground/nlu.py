"""Turn utterances into attributed fact deltas.

Two paths produce the same ``FactExtraction`` structure:

* a deterministic line grammar (always available, fully offline), and
* a chat-completion endpoint asked for a single JSON object at
  temperature 0, with one self-repair reprompt before giving up.

Grammar, one clause per line::

    fact: <category> <subject> <relation> [<arg>...] <+|-> missing-from: <robot|human|both>
    why: <agent> <action> [<arg>...]

The second form is a clarification question about an observed action; it
carries no facts and is attributed missing-from-human. Extracted facts
are always validated against the scenario vocabulary; model output is
filtered, never trusted.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .errors import EndpointUnavailable, SchemaViolation, VocabularyViolation
from .facts import Fact, ContextModel, Vocabulary

DEFAULT_NLU_MODE = "llm-with-grammar-fallback"
NLU_MODES = ("grammar", "llm", "llm-with-grammar-fallback")


class Attribution(str, Enum):
    MISSING_FROM_ROBOT = "missing-from-robot"
    MISSING_FROM_HUMAN = "missing-from-human"
    BOTH = "both"
    NO_NEW_INFORMATION = "no-new-information"


_TARGETS = {
    "robot": Attribution.MISSING_FROM_ROBOT,
    "human": Attribution.MISSING_FROM_HUMAN,
    "both": Attribution.BOTH,
}
_TARGET_WORDS = {v: k for k, v in _TARGETS.items()}


@dataclass(frozen=True)
class Utterance:
    speaker: str  # "human" | "robot"
    text: str
    timestamp: int = 0

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("utterance text must be non-empty")


@dataclass(frozen=True)
class QueryRef:
    """An action someone asked about: ``why: <agent> <action> [args]``."""

    agent: str
    schema: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class FactExtraction:
    facts: tuple[Fact, ...]
    attribution: Attribution
    source: str  # "grammar" | "llm"
    query: QueryRef | None = None

    def __post_init__(self):
        if self.attribution is Attribution.NO_NEW_INFORMATION and self.facts:
            raise ValueError("no-new-information extraction cannot carry facts")


def no_new_information(source: str = "grammar") -> FactExtraction:
    return FactExtraction(facts=(), attribution=Attribution.NO_NEW_INFORMATION, source=source)


# ---------------------------------------------------------------------------
# Structured grammar
# ---------------------------------------------------------------------------


def parse_structured(utterance: Utterance) -> FactExtraction | None:
    """Parse the structured grammar; ``None`` when the text is free-form."""
    lines = [ln.strip() for ln in utterance.text.lower().splitlines() if ln.strip()]
    if not lines:
        return None

    if len(lines) == 1 and lines[0].startswith("why:"):
        tokens = lines[0][len("why:"):].split()
        if len(tokens) < 2:
            return None
        return FactExtraction(
            facts=(),
            attribution=Attribution.MISSING_FROM_HUMAN,
            source="grammar",
            query=QueryRef(agent=tokens[0], schema=tokens[1], args=tuple(tokens[2:])),
        )

    facts: list[Fact] = []
    attributions: set[Attribution] = set()
    for line in lines:
        parsed = _parse_fact_line(line)
        if parsed is None:
            return None
        fact, attribution = parsed
        facts.append(fact)
        attributions.add(attribution)
    if len(attributions) != 1:
        return None
    return FactExtraction(facts=tuple(facts), attribution=attributions.pop(), source="grammar")


def _parse_fact_line(line: str) -> tuple[Fact, Attribution] | None:
    if not line.startswith("fact:"):
        return None
    tokens = line[len("fact:"):].split()
    # ... <sign> missing-from: <target> is the fixed tail.
    if len(tokens) < 6 or tokens[-2] != "missing-from:" or tokens[-3] not in ("+", "-"):
        return None
    target = tokens[-1]
    if target not in _TARGETS:
        return None
    category, subject, relation, *args = tokens[:-3]
    try:
        fact = Fact(
            category=category,
            subject=subject,
            relation=relation,
            args=tuple(args),
            polarity="positive" if tokens[-3] == "+" else "negative",
        )
    except ValueError:
        return None
    return fact, _TARGETS[target]


def render_fact_utterance(fact: Fact, attribution: Attribution) -> str:
    """Inverse of the fact grammar; parse_structured recovers key and attribution."""
    sign = "+" if fact.polarity == "positive" else "-"
    target = _TARGET_WORDS.get(attribution, "robot")
    parts = ["fact:", fact.category, fact.subject, fact.relation, *fact.args, sign,
             "missing-from:", target]
    return " ".join(parts)


def render_facts_utterance(facts, attribution: Attribution) -> str:
    """Multi-fact utterance, one grammar clause per line."""
    return "\n".join(render_fact_utterance(f, attribution) for f in facts)


def render_question_utterance(agent: str, schema: str, args=()) -> str:
    return " ".join(["why:", agent, schema, *args])


# ---------------------------------------------------------------------------
# Endpoint client
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str = ""
    model: str = ""
    api_key_env: str = "COMMONGROUND_LLM_API_KEY"
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_env(cls) -> "LlmEndpointConfig":
        return cls(
            base_url=os.environ.get("COMMONGROUND_LLM_URL", ""),
            model=os.environ.get("COMMONGROUND_LLM_MODEL", ""),
            api_key_env=os.environ.get("COMMONGROUND_LLM_KEY_VAR", "COMMONGROUND_LLM_API_KEY"),
        )


Transport = Callable[[dict], dict]


class LlmClient:
    """Chat-completion client with a swappable transport.

    Tests inject a transport that replays recorded responses; the default
    posts to ``{base_url}/chat/completions`` with a bearer key read from
    the configured environment variable.
    """

    def __init__(self, config: LlmEndpointConfig, transport: Transport | None = None):
        self.config = config
        self._transport = transport or self._http_transport

    def _http_transport(self, payload: dict) -> dict:
        import httpx

        if not self.config.base_url:
            raise EndpointUnavailable("no endpoint configured")
        headers = {}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            response = httpx.post(
                self.config.base_url.rstrip("/") + "/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.config.timeout,
            )
            response.raise_for_status()
            return response.json()
        except httpx.HTTPError as exc:  # pragma: no cover - network path
            raise EndpointUnavailable(str(exc)) from exc

    def complete(self, system: str, user: str) -> str:
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        last_error: Exception | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                body = self._transport(payload)
                return body["choices"][0]["message"]["content"]
            except EndpointUnavailable as exc:
                last_error = exc
            except (KeyError, IndexError, TypeError) as exc:
                last_error = EndpointUnavailable(f"malformed endpoint response: {exc}")
        raise last_error or EndpointUnavailable("endpoint failed")


def first_json_object(text: str) -> dict:
    """Extract the first balanced JSON object embedded in free text."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        parsed = json.loads(text[start:i + 1])
                        if isinstance(parsed, dict):
                            return parsed
                    except json.JSONDecodeError:
                        break
        start = text.find("{", start + 1)
    raise SchemaViolation("no JSON object found in completion")


# ---------------------------------------------------------------------------
# Extraction engine
# ---------------------------------------------------------------------------

_SYSTEM_TEMPLATE = """\
You are the language front-end of a robot reconciling task knowledge with a human teammate.
Read the human's utterance and decide which side's context is missing information.
Respond with exactly one JSON object and nothing else:
{{"attribution": "missing-from-robot" | "missing-from-human" | "both" | "no-new-information",
  "facts": [{{"category": "object|init|goal|capability|preference", "subject": "...",
             "relation": "...", "args": ["..."], "polarity": "positive|negative",
             "gloss": "..."}}],
  "query": null | {{"agent": "...", "action": "...", "args": ["..."]}}}}

Rules:
- a fact the robot does not yet know is attributed missing-from-robot;
- a question about something the robot knows is missing-from-human, with "query" naming the action asked about;
- small talk or acknowledgements are no-new-information with an empty fact list;
- use only these names.

Vocabulary:
  types: {types}
  predicates (name/arity): {predicates}
  actions: {schemas}
  objects: {objects}

Robot currently believes:
{robot_facts}

Known to the human so far:
{human_summary}
"""


@dataclass
class NluEngine:
    """Routes utterances through the grammar, the endpoint, or both."""

    mode: str = DEFAULT_NLU_MODE
    client: LlmClient | None = None
    extractions: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.mode not in NLU_MODES:
            raise ValueError(f"unknown NLU mode {self.mode!r}")

    def extract_facts(
        self,
        utterance: Utterance,
        robot_ctx: ContextModel,
        human_ctx_visible: str,
        vocabulary: Vocabulary,
    ) -> FactExtraction:
        """Utterance -> validated, attributed fact delta."""
        self.extractions += 1
        if self.mode != "llm":
            structured = parse_structured(utterance)
            if structured is not None:
                self._validate(structured.facts, robot_ctx, vocabulary)
                return structured
            if self.mode == "grammar":
                return no_new_information()
        return self._extract_llm(utterance, robot_ctx, human_ctx_visible, vocabulary)

    def match_restatement(self, restatement: Utterance, communicated, robot_ctx, vocabulary):
        """Check the human's echo covers every communicated fact key."""
        extraction = self.extract_facts(restatement, robot_ctx, "", vocabulary)
        have = {f.key for f in extraction.facts}
        missing = sorted(f.key for f in communicated if f.key not in have)
        return RestatementMatch(matched=not missing, missing_keys=tuple(missing))

    # -- endpoint path ------------------------------------------------------

    def _extract_llm(self, utterance, robot_ctx, human_summary, vocabulary) -> FactExtraction:
        if self.client is None:
            raise EndpointUnavailable("LLM extraction requested but no client configured")
        system = _SYSTEM_TEMPLATE.format(
            types=", ".join(sorted(vocabulary.types)),
            predicates=", ".join(f"{n}/{a}" for n, a in sorted(vocabulary.predicates.items())),
            schemas=", ".join(sorted(vocabulary.schemas)),
            objects=", ".join(f"{n} ({t})" for n, t in sorted(vocabulary.objects.items())),
            robot_facts="\n".join(f"- {f.key}: {f.gloss}" for f in robot_ctx.facts) or "- nothing yet",
            human_summary=human_summary or "- nothing yet",
        )
        user = utterance.text
        error: Exception | None = None
        for attempt in range(2):
            content = self.client.complete(system, user)
            try:
                extraction = self._decode(first_json_object(content))
                self._validate(extraction.facts, robot_ctx, vocabulary)
                return extraction
            except (SchemaViolation, VocabularyViolation, ValueError, KeyError, TypeError) as exc:
                error = exc
                user = (
                    f"{utterance.text}\n\nYour previous answer was rejected: {exc}. "
                    "Reply with one corrected JSON object only."
                )
        if isinstance(error, VocabularyViolation):
            raise error
        raise SchemaViolation(f"unusable endpoint output after reprompt: {error}")

    @staticmethod
    def _decode(payload: dict) -> FactExtraction:
        attribution = Attribution(payload.get("attribution", ""))
        facts = tuple(
            Fact(
                category=item["category"],
                subject=item["subject"],
                relation=item["relation"],
                args=tuple(item.get("args", ())),
                polarity=item.get("polarity", "positive"),
                gloss=item.get("gloss", ""),
            )
            for item in payload.get("facts", ())
        )
        query = None
        raw_query = payload.get("query")
        if raw_query:
            query = QueryRef(
                agent=raw_query["agent"],
                schema=raw_query.get("action") or raw_query.get("schema", ""),
                args=tuple(raw_query.get("args", ())),
            )
        if attribution is Attribution.NO_NEW_INFORMATION and facts:
            raise SchemaViolation("no-new-information must carry no facts")
        return FactExtraction(facts=facts, attribution=attribution, source="llm", query=query)

    @staticmethod
    def _validate(facts, robot_ctx: ContextModel, vocabulary: Vocabulary) -> None:
        known_objects = [f for f in robot_ctx.facts if f.category == "object"]
        effective = vocabulary.extended_with(known_objects).extended_with(facts)
        problems = []
        for f in facts:
            problems.extend(f"fact '{f.key}': {p}" for p in effective.fact_errors(f))
        if problems:
            raise VocabularyViolation("; ".join(problems))


@dataclass(frozen=True)
class RestatementMatch:
    matched: bool
    missing_keys: tuple[str, ...] = ()
