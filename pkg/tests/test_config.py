import json

import pytest

from tiermem.agents import OpenAICompatibleProvider, ScriptedProvider
from tiermem.config import ConfigError, build_provider, load_config, parse_config


def test_defaults():
    cfg = parse_config({})
    s = cfg.engine_settings()
    assert (s.budget_tokens, s.ttl_ticks, s.gc_work_bound, s.tau_merge, s.retrieve_k) == (2048, 128, 16, 0.85, 3)
    assert cfg.reasoning_provider.kind == "oracle"


@pytest.mark.parametrize("obj,key", [
    ({"budget_tokens": "2048"}, "budget_tokens"),
    ({"budget_tokens": 0}, "budget_tokens"),
    ({"tau_merge": 1.5}, "tau_merge"),
    ({"da_enabled": 1}, "da_enabled"),
    ({"budgt_tokens": 5}, "budgt_tokens"),
    ({"reasoning_provider": {"kind": "magic"}}, "reasoning_provider.kind"),
    ({"memory_provider": {"kind": "openai", "model": "m"}}, "memory_provider.endpoint"),
    ({"memory_provider": {"temprature": 0.1}}, "memory_provider.temprature"),
    ({"reasoning_provider": {"kind": "scripted", "rules": [{"pattern": "a", "response": 3}]}},
     "reasoning_provider.rules[0].response"),
    ({"da_enabled": False}, "ltm_enabled"),
])
def test_errors_name_the_key(obj, key):
    with pytest.raises(ConfigError) as info:
        parse_config(obj)
    assert info.value.key == key
    assert key in str(info.value)


def test_load_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_build_providers(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({
        "reasoning_provider": {"kind": "scripted", "default": "SUFFICIENT\nhi",
                               "rules": [{"pattern": "hello", "response": "SUFFICIENT\nthere"}]},
        "memory_provider": {"kind": "openai", "endpoint": "http://localhost:9/v1", "model": "m",
                            "temperature": 0.2},
    }))
    cfg = load_config(p)
    r = build_provider(cfg.reasoning_provider, "reasoning")
    assert isinstance(r, ScriptedProvider)
    from tiermem.core import Message
    assert r.complete([Message.user("say hello")]).text == "SUFFICIENT\nthere"
    assert r.complete([Message.user("x")]).text == "SUFFICIENT\nhi"
    m = build_provider(cfg.memory_provider, "memory")
    assert isinstance(m, OpenAICompatibleProvider)
    assert cfg.engine_settings().memory_params.temperature == 0.2
