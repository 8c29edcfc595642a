"""Agent configuration: flat ``section.key = value`` text files with CLI
flag overrides. Ablation toggles live here so every ablated variant is a
pure configuration change."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ProcalcError


class ConfigError(ProcalcError):
    pass


@dataclass
class ModelConfig:
    base_url: Optional[str] = None
    key_env: str = "PROCALC_MODEL_KEY"
    replay_path: Optional[str] = None
    mode: str = "replay"
    name: str = "default"


@dataclass
class SandboxConfig:
    runner_path: str = ""
    timeout_ms: int = 30_000


@dataclass
class ReflectionConfig:
    max_iterations: int = 3
    reflect_on_timeout: bool = False


@dataclass
class CacheConfig:
    path: str = "procalc_cache.jsonl"
    threshold: float = 0.92


@dataclass
class RagConfig:
    window: int = 800
    stride: int = 600
    embed_url: Optional[str] = None
    rerank_url: Optional[str] = None


@dataclass
class AblationFlags:
    no_react: bool = False
    no_external_knowledge: bool = False
    no_reflection: bool = False
    no_cache: bool = False


@dataclass
class AgentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    reflection: ReflectionConfig = field(default_factory=ReflectionConfig)
    cache: CacheConfig = field(default_factory=CacheConfig)
    rag: RagConfig = field(default_factory=RagConfig)
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def validate(self) -> "AgentConfig":
        if self.model.mode not in ("live", "replay", "record"):
            raise ConfigError(f"model.mode must be live|replay|record, got {self.model.mode!r}")
        if self.model.mode == "replay" and not self.model.replay_path:
            raise ConfigError("model.mode=replay requires model.replay_path")
        if self.sandbox.timeout_ms < 100:
            raise ConfigError("sandbox.timeout_ms must be >= 100")
        if self.reflection.max_iterations < 1:
            raise ConfigError("reflection.max_iterations must be >= 1")
        if not 0.0 <= self.cache.threshold <= 1.0:
            raise ConfigError("cache.threshold must be in [0, 1]")
        if self.rag.window < 1 or self.rag.stride < 1:
            raise ConfigError("rag.window and rag.stride must be positive")
        if self.rag.stride > self.rag.window:
            raise ConfigError("rag.stride must be <= rag.window")
        return self


_BOOL_KEYS = {
    "reflection.reflect_on_timeout",
    "ablation.no_react",
    "ablation.no_external_knowledge",
    "ablation.no_reflection",
    "ablation.no_cache",
}
_INT_KEYS = {"sandbox.timeout_ms", "reflection.max_iterations", "rag.window", "rag.stride"}
_FLOAT_KEYS = {"cache.threshold"}


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def load_config(path: Optional[str | Path] = None) -> AgentConfig:
    """Parse a flat dotted-key config file; missing file -> defaults."""
    config = AgentConfig()
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_number}: expected key = value")
        key, _, raw = stripped.partition("=")
        set_key(config, key.strip(), raw.strip())
    return config


def set_key(config: AgentConfig, key: str, raw: str) -> None:
    if "." not in key:
        raise ConfigError(f"unknown config key {key!r}")
    section_name, _, field_name = key.partition(".")
    section = getattr(config, section_name, None)
    if section is None or not hasattr(section, field_name):
        raise ConfigError(f"unknown config key {key!r}")
    value: object = raw
    if key in _BOOL_KEYS:
        value = _parse_bool(raw, key)
    elif key in _INT_KEYS:
        value = int(raw)
    elif key in _FLOAT_KEYS:
        value = float(raw)
    elif raw == "":
        value = None if field_name in ("base_url", "replay_path", "embed_url", "rerank_url") else raw
    setattr(section, field_name, value)
