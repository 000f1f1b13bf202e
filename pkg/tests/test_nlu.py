from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commonground import Attribution, NluEngine, Utterance, Vocabulary, parse_structured
from commonground.errors import (
    EndpointUnavailable,
    SchemaViolation,
    VocabularyViolation,
)
from commonground.nlu import (
    LlmClient,
    LlmEndpointConfig,
    first_json_object,
    render_fact_utterance,
    render_facts_utterance,
    render_question_utterance,
)

from .conftest import ctx, fact


@pytest.fixture(scope="module")
def vocab(dinner_domain=None):
    from commonground import parse_domain, parse_problem
    from commonground.harness import bundled_scenarios, load_scenario

    s = load_scenario(bundled_scenarios()["dinner-neither-incomplete"])
    return Vocabulary.from_model(s.domain, s.problem)


def utter(text: str) -> Utterance:
    return Utterance(speaker="human", text=text)


# ---------------------------------------------------------------------------
# Grammar
# ---------------------------------------------------------------------------


def test_parse_init_fact_line():
    out = parse_structured(utter("fact: init alice vegetarian + missing-from: robot"))
    assert out is not None
    assert out.attribution is Attribution.MISSING_FROM_ROBOT
    assert len(out.facts) == 1
    assert out.facts[0].key == "init alice vegetarian +"


def test_parse_negative_capability_line():
    out = parse_structured(utter("fact: capability human load-dishwasher - missing-from: robot"))
    assert out is not None
    assert out.facts[0].polarity == "negative"
    assert out.facts[0].key == "capability human load-dishwasher -"


def test_parse_fact_with_args():
    out = parse_structured(utter("fact: preference alice served paella + missing-from: both"))
    assert out is not None
    assert out.facts[0].args == ("paella",)
    assert out.attribution is Attribution.BOTH


def test_parse_multi_line_facts():
    text = ("fact: object alice guest + missing-from: robot\n"
            "fact: preference alice served paella + missing-from: robot")
    out = parse_structured(utter(text))
    assert out is not None
    assert len(out.facts) == 2


def test_parse_mixed_attributions_rejected():
    text = ("fact: object alice guest + missing-from: robot\n"
            "fact: object carol guest + missing-from: human")
    assert parse_structured(utter(text)) is None


def test_parse_question_line():
    out = parse_structured(utter("why: robot serve salad carol"))
    assert out is not None
    assert out.attribution is Attribution.MISSING_FROM_HUMAN
    assert out.facts == ()
    assert out.query.agent == "robot"
    assert out.query.schema == "serve"
    assert out.query.args == ("salad", "carol")


def test_free_text_not_structured():
    assert parse_structured(utter("hello there")) is None
    assert parse_structured(utter("fact: gibberish")) is None
    assert parse_structured(utter("fact: init alice vegetarian missing-from: robot")) is None


def test_render_fact_round_trip_examples():
    f = fact("init", "alice", "vegetarian")
    text = render_fact_utterance(f, Attribution.MISSING_FROM_ROBOT)
    assert text == "fact: init alice vegetarian + missing-from: robot"
    out = parse_structured(utter(text))
    assert out.facts[0].key == f.key
    assert out.attribution is Attribution.MISSING_FROM_ROBOT


categories = st.sampled_from(["object", "init", "goal", "capability", "preference"])
identifiers = st.from_regex(r"[a-z][a-z0-9\-]{0,8}", fullmatch=True)
polarities = st.sampled_from(["positive", "negative"])
attributions = st.sampled_from(
    [Attribution.MISSING_FROM_ROBOT, Attribution.MISSING_FROM_HUMAN, Attribution.BOTH]
)


@settings(max_examples=400)
@given(categories, identifiers, identifiers,
       st.lists(identifiers, max_size=3), polarities, attributions)
def test_grammar_round_trip_property(category, subject, relation, args, polarity, attribution):
    f = fact(category, subject, relation, *args, polarity=polarity)
    out = parse_structured(utter(render_fact_utterance(f, attribution)))
    assert out is not None
    assert out.facts[0].key == f.key
    assert out.attribution is attribution


def test_render_question_round_trip():
    text = render_question_utterance("robot", "serve", ("salad", "carol"))
    out = parse_structured(utter(text))
    assert out.query.agent == "robot"
    assert out.query.schema == "serve"
    assert out.query.args == ("salad", "carol")


# ---------------------------------------------------------------------------
# Engine: grammar mode
# ---------------------------------------------------------------------------


def test_engine_grammar_extracts(vocab):
    engine = NluEngine(mode="grammar")
    out = engine.extract_facts(
        utter("fact: goal bob served steak + missing-from: robot"),
        ctx("robot"), "", vocab,
    )
    assert out.attribution is Attribution.MISSING_FROM_ROBOT
    assert out.source == "grammar"


def test_engine_grammar_null_case(vocab):
    engine = NluEngine(mode="grammar")
    out = engine.extract_facts(utter("ok sounds good"), ctx("robot"), "", vocab)
    assert out.attribution is Attribution.NO_NEW_INFORMATION
    assert out.facts == ()


def test_engine_grammar_vocabulary_closure(vocab):
    engine = NluEngine(mode="grammar")
    with pytest.raises(VocabularyViolation):
        engine.extract_facts(
            utter("fact: init dragon fire + missing-from: robot"), ctx("robot"), "", vocab,
        )


def test_engine_allows_context_added_objects(vocab):
    engine = NluEngine(mode="grammar")
    robot_ctx = ctx("robot", fact("object", "alice", "guest"))
    out = engine.extract_facts(
        utter("fact: preference alice served paella + missing-from: robot"),
        robot_ctx, "", vocab,
    )
    assert out.facts[0].subject == "alice"


def test_engine_allows_batch_internal_objects(vocab):
    engine = NluEngine(mode="grammar")
    text = ("fact: object carol guest + missing-from: robot\n"
            "fact: preference carol served salad + missing-from: robot")
    out = engine.extract_facts(utter(text), ctx("robot"), "", vocab)
    assert len(out.facts) == 2


# ---------------------------------------------------------------------------
# Engine: endpoint path with recorded transcripts
# ---------------------------------------------------------------------------


def recorded(*contents):
    """Transport replaying canned completions; records requests."""
    calls = []
    queue = list(contents)

    def transport(payload):
        calls.append(payload)
        if not queue:
            raise EndpointUnavailable("transcript exhausted")
        return {"choices": [{"message": {"content": queue.pop(0)}}]}

    transport.calls = calls
    return transport


def llm_engine(*contents, mode="llm"):
    config = LlmEndpointConfig(base_url="http://recorded", model="test", max_retries=0)
    return NluEngine(mode=mode, client=LlmClient(config, transport=recorded(*contents)))


VEGETARIAN_REPLY = json.dumps({
    "attribution": "missing-from-robot",
    "facts": [{"category": "init", "subject": "alice", "relation": "vegetarian",
               "args": [], "polarity": "positive",
               "gloss": "alice is vegetarian so the steak will not do"}],
    "query": None,
})


def test_llm_extracts_vegetarian_fact(vocab):
    engine = llm_engine("Here is the structured result:\n" + VEGETARIAN_REPLY)
    robot_ctx = ctx("robot", fact("object", "alice", "guest"))
    out = engine.extract_facts(
        utter("Alice is vegetarian, so don't cook the steak"), robot_ctx, "", vocab,
    )
    assert out.source == "llm"
    assert out.attribution is Attribution.MISSING_FROM_ROBOT
    assert out.facts[0].key == "init alice vegetarian +"
    assert out.facts[0].gloss == "alice is vegetarian so the steak will not do"


def test_llm_prompt_carries_vocabulary_and_context_not_ground_truth(vocab):
    engine = llm_engine(VEGETARIAN_REPLY)
    robot_ctx = ctx("robot", fact("object", "alice", "guest", gloss="alice is a guest"))
    engine.extract_facts(utter("Alice is vegetarian"), robot_ctx, "", vocab)
    transport = engine.client._transport
    system = transport.calls[0]["messages"][0]["content"]
    assert "served" in system  # vocabulary
    assert "object alice guest +" in system  # robot context keys
    assert transport.calls[0]["temperature"] == 0.0


def test_llm_reprompts_once_then_schema_violation(vocab):
    engine = llm_engine("not json at all", "still not json")
    with pytest.raises(SchemaViolation):
        engine.extract_facts(utter("something"), ctx("robot"), "", vocab)
    assert len(engine.client._transport.calls) == 2
    assert "rejected" in engine.client._transport.calls[1]["messages"][1]["content"]


def test_llm_repair_after_bad_first_reply(vocab):
    engine = llm_engine("oops no json", VEGETARIAN_REPLY)
    robot_ctx = ctx("robot", fact("object", "alice", "guest"))
    out = engine.extract_facts(utter("alice is vegetarian"), robot_ctx, "", vocab)
    assert out.facts[0].relation == "vegetarian"


def test_llm_vocabulary_violation_after_reprompt(vocab):
    bad = json.dumps({
        "attribution": "missing-from-robot",
        "facts": [{"category": "init", "subject": "dragon", "relation": "fire",
                   "args": [], "polarity": "positive", "gloss": "x"}],
        "query": None,
    })
    engine = llm_engine(bad, bad)
    with pytest.raises(VocabularyViolation):
        engine.extract_facts(utter("dragons breathe fire"), ctx("robot"), "", vocab)


def test_endpoint_unavailable(vocab):
    config = LlmEndpointConfig(base_url="", model="m", max_retries=0)

    def down(payload):
        raise EndpointUnavailable("connection refused")

    engine = NluEngine(mode="llm", client=LlmClient(config, transport=down))
    with pytest.raises(EndpointUnavailable):
        engine.extract_facts(utter("hello"), ctx("robot"), "", vocab)


def test_fallback_mode_uses_grammar_without_endpoint(vocab):
    engine = NluEngine(mode="llm-with-grammar-fallback", client=None)
    out = engine.extract_facts(
        utter("fact: goal bob served steak + missing-from: robot"), ctx("robot"), "", vocab,
    )
    assert out.source == "grammar"
    with pytest.raises(EndpointUnavailable):
        engine.extract_facts(utter("free text needs the endpoint"), ctx("robot"), "", vocab)


def test_first_json_object_extraction():
    assert first_json_object('noise {"a": 1} trailing')["a"] == 1
    assert first_json_object('{"a": {"b": 2}}')["a"]["b"] == 2
    assert first_json_object('{bad} then {"ok": true}')["ok"] is True
    with pytest.raises(SchemaViolation):
        first_json_object("no braces here")


# ---------------------------------------------------------------------------
# Restatement matching
# ---------------------------------------------------------------------------


def test_match_restatement_exact_echo(vocab):
    engine = NluEngine(mode="grammar")
    facts = [fact("object", "carol", "guest"), fact("preference", "carol", "served", "salad")]
    echo = render_facts_utterance(facts, Attribution.MISSING_FROM_HUMAN)
    match = engine.match_restatement(utter(echo), facts, ctx("robot", *facts), vocab)
    assert match.matched
    assert match.missing_keys == ()


def test_match_restatement_missing_key(vocab):
    engine = NluEngine(mode="grammar")
    facts = [fact("object", "carol", "guest"), fact("preference", "carol", "served", "salad")]
    partial = render_fact_utterance(facts[0], Attribution.MISSING_FROM_HUMAN)
    match = engine.match_restatement(utter(partial), facts, ctx("robot", *facts), vocab)
    assert not match.matched
    assert match.missing_keys == ("preference carol served salad +",)


def test_match_restatement_empty_echo(vocab):
    engine = NluEngine(mode="grammar")
    facts = [fact("goal", "bob", "served", "steak")]
    match = engine.match_restatement(utter("um"), facts, ctx("robot", *facts), vocab)
    assert not match.matched
    assert match.missing_keys == ("goal bob served steak +",)


def test_match_restatement_superset_is_fine(vocab):
    engine = NluEngine(mode="grammar")
    facts = [fact("goal", "bob", "served", "steak")]
    echo = render_facts_utterance(
        facts + [fact("object", "alice", "guest")], Attribution.MISSING_FROM_HUMAN
    )
    match = engine.match_restatement(utter(echo), facts, ctx("robot", *facts), vocab)
    assert match.matched
