"""JSON configuration for the command line and the HTTP service."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .agents import ChatProvider, CompletionParams, OpenAICompatibleProvider, ScriptedProvider
from .engine import EngineSettings

PROVIDER_KINDS = ("oracle", "scripted", "openai")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, reason: str) -> None:
        self.key = key
        super().__init__(f"config key {key!r}: {reason}")


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "oracle"
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    max_output_tokens: int = 1024
    api_key_env: str = "OPENAI_API_KEY"
    rules: tuple[tuple[str, str, bool], ...] = ()
    default: str = ""

    @property
    def params(self) -> CompletionParams:
        return CompletionParams(self.temperature, self.max_output_tokens)


@dataclass(frozen=True)
class Config:
    budget_tokens: int = 2048
    ttl_ticks: int = 128
    gc_work_bound: int = 16
    tau_merge: float = 0.85
    retrieve_k: int = 3
    retrieve_min_sim: float = 0.25
    embed_dimension: int = 64
    da_enabled: bool = True
    ltm_enabled: bool = True
    reasoning_provider: ProviderConfig = field(default_factory=ProviderConfig)
    memory_provider: ProviderConfig = field(default_factory=ProviderConfig)
    ltm_path: str | None = None
    state_path: str | None = None

    def engine_settings(self, **overrides) -> EngineSettings:
        return EngineSettings(
            budget_tokens=self.budget_tokens,
            ttl_ticks=self.ttl_ticks,
            gc_work_bound=self.gc_work_bound,
            tau_merge=self.tau_merge,
            retrieve_k=self.retrieve_k,
            retrieve_min_sim=self.retrieve_min_sim,
            embed_dimension=self.embed_dimension,
            da_enabled=self.da_enabled,
            ltm_enabled=self.ltm_enabled,
            reasoning_params=self.reasoning_provider.params,
            memory_params=self.memory_provider.params,
            **overrides,
        )


def _int(key: str, value: Any, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(key, f"must be at least {minimum}")
    return value


def _float(key: str, value: Any, lo: float, hi: float) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if not lo <= value <= hi:
        raise ConfigError(key, f"must lie in [{lo}, {hi}]")
    return float(value)


def _bool(key: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(key, f"expected true or false, got {value!r}")
    return value


def _str(key: str, value: Any, optional: bool = True) -> str | None:
    if value is None and optional:
        return None
    if not isinstance(value, str) or not value:
        raise ConfigError(key, f"expected a non-empty string, got {value!r}")
    return value


def _provider(key: str, obj: Any) -> ProviderConfig:
    if not isinstance(obj, dict):
        raise ConfigError(key, "expected an object")
    known = {f.name for f in fields(ProviderConfig)}
    for k in obj:
        if k not in known:
            raise ConfigError(f"{key}.{k}", "unknown key")
    kind = obj.get("kind", "oracle")
    if kind not in PROVIDER_KINDS:
        raise ConfigError(f"{key}.kind", f"must be one of {', '.join(PROVIDER_KINDS)}")
    rules = []
    for i, rule in enumerate(obj.get("rules", [])):
        rkey = f"{key}.rules[{i}]"
        if not isinstance(rule, dict) or not isinstance(rule.get("pattern"), str):
            raise ConfigError(rkey, "expected {pattern, response[, exact]}")
        if not isinstance(rule.get("response"), str):
            raise ConfigError(f"{rkey}.response", "expected a string")
        rules.append((rule["pattern"], rule["response"], _bool(f"{rkey}.exact", rule.get("exact", False))))
    default = obj.get("default", "")
    if not isinstance(default, str):
        raise ConfigError(f"{key}.default", "expected a string")
    cfg = ProviderConfig(
        kind=kind,
        endpoint=_str(f"{key}.endpoint", obj.get("endpoint")),
        model=_str(f"{key}.model", obj.get("model")),
        temperature=_float(f"{key}.temperature", obj.get("temperature", 0.0), 0.0, 2.0),
        max_output_tokens=_int(f"{key}.max_output_tokens", obj.get("max_output_tokens", 1024)),
        api_key_env=_str(f"{key}.api_key_env", obj.get("api_key_env", "OPENAI_API_KEY"), False),
        rules=tuple(rules),
        default=default,
    )
    if kind == "openai":
        if cfg.endpoint is None:
            raise ConfigError(f"{key}.endpoint", "required for kind 'openai'")
        if cfg.model is None:
            raise ConfigError(f"{key}.model", "required for kind 'openai'")
    return cfg


def parse_config(obj: Any) -> Config:
    if not isinstance(obj, dict):
        raise ConfigError("<root>", "expected a JSON object")
    known = {f.name for f in fields(Config)}
    for k in obj:
        if k not in known:
            raise ConfigError(k, "unknown key")
    d = Config()
    g = obj.get
    cfg = Config(
        budget_tokens=_int("budget_tokens", g("budget_tokens", d.budget_tokens)),
        ttl_ticks=_int("ttl_ticks", g("ttl_ticks", d.ttl_ticks)),
        gc_work_bound=_int("gc_work_bound", g("gc_work_bound", d.gc_work_bound)),
        tau_merge=_float("tau_merge", g("tau_merge", d.tau_merge), 0.0, 1.0),
        retrieve_k=_int("retrieve_k", g("retrieve_k", d.retrieve_k)),
        retrieve_min_sim=_float("retrieve_min_sim", g("retrieve_min_sim", d.retrieve_min_sim), -1.0, 1.0),
        embed_dimension=_int("embed_dimension", g("embed_dimension", d.embed_dimension)),
        da_enabled=_bool("da_enabled", g("da_enabled", d.da_enabled)),
        ltm_enabled=_bool("ltm_enabled", g("ltm_enabled", d.ltm_enabled)),
        reasoning_provider=_provider("reasoning_provider", g("reasoning_provider", {})),
        memory_provider=_provider("memory_provider", g("memory_provider", {})),
        ltm_path=_str("ltm_path", g("ltm_path")),
        state_path=_str("state_path", g("state_path")),
    )
    if cfg.ltm_enabled and not cfg.da_enabled:
        raise ConfigError("ltm_enabled", "requires da_enabled")
    return cfg


def load_config(path: str | Path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"not valid JSON: {exc}") from exc
    return parse_config(obj)


def build_provider(cfg: ProviderConfig, role: str) -> ChatProvider:
    """``role`` is "reasoning" or "memory"; it picks the oracle agent."""
    if cfg.kind == "openai":
        return OpenAICompatibleProvider(
            cfg.endpoint, cfg.model, api_key_env=cfg.api_key_env,
            temperature=cfg.temperature, max_output_tokens=cfg.max_output_tokens,
        )
    if cfg.kind == "scripted":
        p = ScriptedProvider(default_response=cfg.default)
        for pattern, response, exact in cfg.rules:
            p.add_rule(pattern, response, exact)
        return p
    from .harness.oracle import oracle_memory_agent, oracle_reasoner

    return oracle_reasoner() if role == "reasoning" else oracle_memory_agent()
