import pytest

from tiermem.agents import (
    Completion,
    CompletionParams,
    MalformedResponse,
    OpenAICompatibleProvider,
    ScriptedProvider,
    TransportError,
    http_complete,
    render_prompt,
    scripted_complete,
)
from tiermem.core import Message, estimate_tokens


def test_scripted_default_and_rule_order():
    p = ScriptedProvider(default_response="default")
    p.add_rule("hello", "first")
    p.add_rule("hello world", "second")
    assert p.complete([Message.user("nothing here")]).text == "default"
    assert p.complete([Message.user("hello world")]).text == "first"
    assert p.calls == 2


def test_scripted_exact_match_and_callable():
    p = ScriptedProvider()
    p.add_rule("user: ping", "pong", exact=True)
    p.add_rule("upper", lambda prompt: prompt.upper())
    assert p.complete([Message.user("ping")]).text == "pong"
    assert p.complete([Message.user("ping!")]).text == ""
    assert p.complete([Message.user("upper")]).text == "USER: UPPER"


def test_scripted_token_accounting_and_transcript():
    msgs = [Message.user("abcdefgh"), Message.assistant("ok")]
    p = ScriptedProvider(default_response="12345")
    c = scripted_complete(p, msgs)
    prompt = render_prompt(msgs)
    assert prompt == "user: abcdefgh\nassistant: ok"
    assert c == Completion("12345", estimate_tokens(prompt), 2)
    assert p.transcript[0].prompt == prompt and p.transcript[0].response == "12345"


def test_scripted_transport_error_is_logged():
    def fail(_):
        raise TransportError(503, "down")

    p = ScriptedProvider(default_response=fail)
    with pytest.raises(TransportError) as err:
        p.complete([Message.user("x")])
    assert err.value.status == 503
    assert p.transcript[-1].response == "<transport error>"


def test_scripted_is_deterministic():
    def run():
        p = ScriptedProvider(default_response=lambda s: str(len(s)))
        return [p.complete([Message.user("x" * i)]).text for i in range(1, 5)]

    assert run() == run()


def test_http_complete_parses_recorded_fixture(stub_server, completion_fixture):
    stub_server.queue.append((200, completion_fixture))
    c = http_complete(stub_server.url, "sk-test", "stub-model", [Message.user("hi")], CompletionParams(0.0, 64))
    assert c == Completion("SUFFICIENT\nThe rule is parity.", 42, 7)
    req = stub_server.requests[-1]
    assert req == {
        "model": "stub-model",
        "messages": [{"role": "user", "content": "hi"}],
        "temperature": 0.0,
        "max_tokens": 64,
    }
    assert stub_server.headers[-1]["Authorization"] == "Bearer sk-test"


def test_http_complete_error_statuses(stub_server):
    stub_server.queue.append((429, {"error": "rate limited"}))
    with pytest.raises(TransportError) as err:
        http_complete(stub_server.url, None, "m", [Message.user("hi")])
    assert err.value.status == 429
    assert "Authorization" not in stub_server.headers[-1]


@pytest.mark.parametrize(
    "payload",
    [
        {"choices": [], "usage": {"prompt_tokens": 1, "completion_tokens": 1}},
        {"choices": [{"message": {"content": "x"}}]},
        {"choices": [{"message": {"content": None}}], "usage": {"prompt_tokens": 1, "completion_tokens": 1}},
        "not json",
    ],
)
def test_http_complete_malformed(stub_server, payload):
    stub_server.queue.append((200, payload))
    with pytest.raises(MalformedResponse):
        http_complete(stub_server.url, None, "m", [Message.user("hi")])


def test_http_complete_unreachable():
    with pytest.raises(TransportError) as err:
        http_complete("http://127.0.0.1:9", None, "m", [Message.user("hi")], timeout=2)
    assert err.value.status is None


def test_http_complete_rejects_bad_roles(stub_server):
    with pytest.raises(ValueError):
        http_complete(stub_server.url, None, "m", [{"role": "tool", "content": "x"}])
    assert stub_server.requests == []


def test_openai_provider_reads_key_from_env(stub_server, monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "sk-env")
    p = OpenAICompatibleProvider(stub_server.url, "stub-model", temperature=0.5, max_output_tokens=9)
    assert p.complete([Message.user("echo me")]).text == "echo me"
    assert stub_server.headers[-1]["Authorization"] == "Bearer sk-env"
    assert stub_server.requests[-1]["temperature"] == 0.5
    assert stub_server.requests[-1]["max_tokens"] == 9
