import json

import numpy as np
import pytest

from llinbo.agents import (
    AdversarialAgent,
    AgentConfig,
    ChatCompletionAgent,
    OracleNoiseAgent,
    ProblemContext,
    ReplayAgent,
    ReplayExhausted,
    UniformRandomAgent,
    clamp,
    make_agent,
    parse_number,
    parse_vector,
    parse_vectors,
    render_candidate_generation_prompt,
    render_data_card,
    render_warmstart_prompt,
)
from llinbo.benchlab.stub_server import StubChatServer
from llinbo.gp import Dataset

CTX = ProblemContext("smooth, multimodal benchmark with three global maxima", 2, optimum=(0.2, 0.8))


def test_data_card_format():
    d = Dataset(np.array([[0.23346, 0.12], [1.0, 0.0]]), np.array([1.23123, -1234567.0]))
    assert render_data_card(d) == "x: (0.2335, 0.12), f(x): 1.231; x: (1.0, 0.0), f(x): -1.235e+06"
    assert render_data_card(d, order=[1, 0]).startswith("x: (1.0, 0.0)")


def test_warmstart_prompt_fields():
    p = render_warmstart_prompt(CTX, 2)
    assert "three global maxima" in p and "Suggest 2 promising" in p and "[0, 1]^2" in p
    g = render_candidate_generation_prompt(CTX, Dataset(np.array([[0.5, 0.5]]), np.array([2.0])))
    assert "x: (0.5, 0.5), f(x): 2" in g and "single 2-dimensional" in g


@pytest.mark.parametrize(
    "text, expected",
    [
        ("[0.1, 0.2]", [0.1, 0.2]),
        ("```json\n[0.1, 0.2]\n```", [0.1, 0.2]),
        ("[[0.3, 0.4]]", [0.3, 0.4]),
        ('{"x": [0.5, 0.6]}', [0.5, 0.6]),
        ("Sure: [0.7, 0.8]", [0.7, 0.8]),
    ],
)
def test_parse_vector_accepts(text, expected):
    np.testing.assert_allclose(parse_vector(text, 2), expected)


@pytest.mark.parametrize("text", ["[0.1]", "hello", "[0.1, NaN]", "[true, 0.2]", "[[0.1, 0.2], [0.3, 0.4]]"])
def test_parse_vector_rejects(text):
    with pytest.raises(ValueError):
        parse_vector(text, 2)


def test_parse_vectors_and_number():
    assert len(parse_vectors("[[0.1, 0.2], [0.3, 0.4]]", 2)) == 2
    assert len(parse_vectors("[0.1, 0.2]", 2)) == 1
    assert parse_number(" -1.5e2 ") == -150.0
    assert parse_number("The value is 3.25.") == 3.25
    with pytest.raises(ValueError):
        parse_number("none")


def test_clamp():
    x, flag = clamp(np.array([-0.2, 0.5, 1.4]))
    np.testing.assert_array_equal(x, [0.0, 0.5, 1.0])
    assert flag
    assert not clamp(np.array([0.5]))[1]


def test_oracle_noise_agent():
    assert OracleNoiseAgent(0.0).suggest(CTX, Dataset.empty(2), 1).design.tolist() == [0.2, 0.8]
    a, b = OracleNoiseAgent(0.1, seed=3), OracleNoiseAgent(0.1, seed=3)
    np.testing.assert_array_equal(a.suggest(CTX, Dataset.empty(2), 1).design, b.suggest(CTX, Dataset.empty(2), 1).design)
    pts = np.array([OracleNoiseAgent(0.05, seed=s).suggest(CTX, Dataset.empty(2), 1).design for s in range(200)])
    np.testing.assert_allclose(pts.mean(0), [0.2, 0.8], atol=0.02)


def test_adversarial_is_far_from_optimum():
    d = AdversarialAgent(1).suggest(CTX, Dataset.empty(2), 1).design
    assert np.linalg.norm(d - np.array([0.2, 0.8])) > 0.8


def test_uniform_warmstart_count():
    pts = UniformRandomAgent(0).warmstart(CTX, 5)
    assert len(pts) == 5 and all(p.shape == (2,) for p in pts)


def test_replay_agent(tmp_path):
    f = tmp_path / "designs.jsonl"
    f.write_text("[0.1, 0.2]\n[1.5, 0.3]\n")
    agent = ReplayAgent(f)
    assert agent.suggest(CTX, Dataset.empty(2), 1).design.tolist() == [0.1, 0.2]
    s = agent.suggest(CTX, Dataset.empty(2), 2)
    assert s.clamped and s.design.tolist() == [1.0, 0.3]
    with pytest.raises(ReplayExhausted):
        agent.suggest(CTX, Dataset.empty(2), 3)


def test_make_agent_kinds(tmp_path):
    assert isinstance(make_agent(AgentConfig("UniformRandom")), UniformRandomAgent)
    assert isinstance(make_agent(AgentConfig("OracleNoise", sigma=0.3)), OracleNoiseAgent)
    assert isinstance(make_agent(AgentConfig("ChatCompletion", endpoint="http://x")), ChatCompletionAgent)
    with pytest.raises(ValueError):
        AgentConfig("Psychic")
    with pytest.raises(ValueError):
        AgentConfig("Replay")


def test_chat_payload_and_auth(monkeypatch):
    seen = {}

    def transport(url, payload, headers, timeout):
        seen.update(url=url, payload=payload, headers=headers)
        return {"choices": [{"message": {"content": "[0.25, 0.75]"}}]}

    monkeypatch.setenv("TEST_KEY_VAR", "sekrit")
    agent = ChatCompletionAgent("http://h/v1", "m1", temperature=0.5, api_key_env="TEST_KEY_VAR", transport=transport)
    s = agent.suggest(CTX, Dataset.empty(2), 1)
    assert s.design.tolist() == [0.25, 0.75] and not s.fallback and s.attempts == 1
    assert seen["payload"]["model"] == "m1" and seen["payload"]["temperature"] == 0.5
    roles = [m["role"] for m in seen["payload"]["messages"]]
    assert roles == ["system", "user"]
    assert seen["headers"]["Authorization"] == "Bearer sekrit"
    assert "sekrit" not in json.dumps(s.to_dict())


def test_chat_retries_then_falls_back():
    calls = []

    def transport(url, payload, headers, timeout):
        calls.append(1)
        return {"choices": [{"message": {"content": "I think somewhere in the middle"}}]}

    agent = ChatCompletionAgent("http://h", max_retries=2, transport=transport)
    s = agent.suggest(CTX, Dataset.empty(2), 1)
    assert s.fallback and s.attempts == 3 and len(calls) == 3
    assert np.all((s.design >= 0) & (s.design <= 1))
    assert agent.fallbacks == 1


def test_chat_recovers_on_retry():
    replies = iter(["garbage", "[0.4, 0.6]"])

    def transport(url, payload, headers, timeout):
        return {"choices": [{"message": {"content": next(replies)}}]}

    s = ChatCompletionAgent("http://h", transport=transport).suggest(CTX, Dataset.empty(2), 1)
    assert s.attempts == 2 and not s.fallback


def test_stub_valid_roundtrip(stub_valid):
    agent = ChatCompletionAgent(stub_valid.url, max_retries=0, timeout=5)
    pts = agent.warmstart(CTX, 3)
    assert len(pts) == 3
    s = agent.suggest(CTX, Dataset(np.array([[0.1, 0.1]]), np.array([1.0])), 1)
    assert not s.fallback
    v = agent.predict_value(CTX, Dataset(np.array([[0.1, 0.1]]), np.array([1.0])), [0.2, 0.2])
    assert -1 <= v <= 1
    assert len(stub_valid.requests) == 3


def test_stub_error_falls_back(stub_error):
    agent = ChatCompletionAgent(stub_error.url, max_retries=1, timeout=5)
    s = agent.suggest(CTX, Dataset.empty(2), 1)
    assert s.fallback and s.attempts == 2
    assert len(agent.warmstart(CTX, 2)) == 2


def test_stub_script_mode():
    with StubChatServer("script", ["[0.9, 0.1]"]) as srv:
        agent = ChatCompletionAgent(srv.url, max_retries=0, timeout=5)
        assert agent.suggest(CTX, Dataset.empty(2), 1).design.tolist() == [0.9, 0.1]
        assert agent.suggest(CTX, Dataset.empty(2), 2).fallback
