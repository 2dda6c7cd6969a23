"""Resolved runtime configuration for the CLI and service.

Settings come from three layers with fixed precedence: command-line
flags override environment variables, which override the ``litrag.toml``
config file. The resolved object is fully concrete before any command
runs and can be printed with ``litrag config show``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .engine import EngineConfig
from .errors import LitragError
from .ingest import ChunkMethod, ChunkingConfig
from .providers import ProviderConfig

DEFAULT_CONFIG_FILE = "litrag.toml"

DEFAULT_BIND = "127.0.0.1:8080"

# env var -> flat settings key
ENV_KEYS = {
    "LITRAG_BASE_URL": "base_url",
    "LITRAG_API_KEY": "api_key",
    "LITRAG_CHAT_MODEL": "chat_model",
    "LITRAG_EMBED_MODEL": "embed_model",
    "LITRAG_BIND": "bind",
    "LITRAG_CORS_ORIGIN": "cors_origin",
}

_PATH_KEYS = ("corpus_dir", "index_dir", "state_dir")
_PROVIDER_KEYS = ("kind", "base_url", "api_key", "chat_model", "embed_model")
_ENGINE_KEYS = ("top_k", "top_k_nodes", "path_depth", "max_synonyms", "context_budget")
_CHUNKING_KEYS = ("method", "buffer_size", "breakpoint_percentile", "max_tokens_fixed")
_SERVICE_KEYS = ("bind", "cors_origin")


@dataclass(frozen=True)
class CliConfig:
    corpus_dir: Path = Path("corpus")
    index_dir: Path = Path("index")
    state_dir: Path = Path("state")
    provider_kind: str = "openai"  # openai | mock
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    bind: str = DEFAULT_BIND
    cors_origin: str | None = None

    def display_dict(self) -> dict:
        """Resolved settings with the API key redacted."""
        return {
            "corpus_dir": str(self.corpus_dir),
            "index_dir": str(self.index_dir),
            "state_dir": str(self.state_dir),
            "provider": {
                "kind": self.provider_kind,
                "base_url": self.provider.base_url,
                "api_key": "***" if self.provider.api_key else "",
                "chat_model": self.provider.chat_model,
                "embed_model": self.provider.embed_model,
            },
            "engine": {
                "top_k": self.engine.top_k,
                "top_k_nodes": self.engine.top_k_nodes,
                "path_depth": self.engine.path_depth,
                "max_synonyms": self.engine.max_synonyms,
                "context_budget": self.engine.context_budget,
            },
            "chunking": {
                "method": self.chunking.method.value,
                "buffer_size": self.chunking.buffer_size,
                "breakpoint_percentile": self.chunking.breakpoint_percentile,
                "max_tokens_fixed": self.chunking.max_tokens_fixed,
            },
            "service": {"bind": self.bind, "cors_origin": self.cors_origin},
        }


def _read_config_file(path: Path) -> dict[str, Any]:
    """Flatten the sectioned TOML file into flat settings keys."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise LitragError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise LitragError(f"malformed config file {path}: {exc}") from exc
    flat: dict[str, Any] = {}
    sections = {
        "paths": _PATH_KEYS,
        "provider": _PROVIDER_KEYS,
        "engine": _ENGINE_KEYS,
        "chunking": _CHUNKING_KEYS,
        "service": _SERVICE_KEYS,
    }
    for section, keys in sections.items():
        body = data.get(section, {})
        if not isinstance(body, dict):
            raise LitragError(f"config section [{section}] must be a table")
        for key, value in body.items():
            if key not in keys:
                raise LitragError(f"unknown config key {section}.{key}")
            flat["provider_kind" if key == "kind" else key] = value
    return flat


def load_config(
    config_path: str | Path | None = None,
    *,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> CliConfig:
    """Resolve configuration with precedence flags > env > file.

    ``config_path`` of None looks for ./litrag.toml and skips the file
    layer when absent; an explicit path must exist.
    """
    env = os.environ if env is None else env
    settings: dict[str, Any] = {}

    if config_path is None:
        candidate = Path(DEFAULT_CONFIG_FILE)
        if candidate.exists():
            settings.update(_read_config_file(candidate))
    else:
        path = Path(config_path)
        if not path.exists():
            raise LitragError(f"config file not found: {path}")
        settings.update(_read_config_file(path))

    for env_name, key in ENV_KEYS.items():
        if env_name in env and env[env_name] != "":
            settings[key] = env[env_name]

    for key, value in (overrides or {}).items():
        if value is not None:
            settings[key] = value

    provider = ProviderConfig(
        base_url=str(settings.get("base_url", ProviderConfig.base_url)),
        api_key=str(settings.get("api_key", ProviderConfig.api_key)),
        chat_model=str(settings.get("chat_model", ProviderConfig.chat_model)),
        embed_model=str(settings.get("embed_model", ProviderConfig.embed_model)),
    )
    try:
        chunking = ChunkingConfig(
            buffer_size=int(settings.get("buffer_size", 1)),
            breakpoint_percentile=float(settings.get("breakpoint_percentile", 95.0)),
            max_tokens_fixed=int(settings.get("max_tokens_fixed", 200)),
            method=ChunkMethod(str(settings.get("method", ChunkMethod.SEMANTIC.value))),
        )
        engine = EngineConfig(
            top_k=int(settings.get("top_k", 5)),
            top_k_nodes=int(settings.get("top_k_nodes", 4)),
            path_depth=int(settings.get("path_depth", 1)),
            max_synonyms=int(settings.get("max_synonyms", 10)),
            context_budget=int(settings.get("context_budget", 24_000)),
        )
    except ValueError as exc:
        raise LitragError(f"invalid configuration: {exc}") from exc
    provider_kind = str(settings.get("provider_kind", "openai"))
    if provider_kind not in ("openai", "mock"):
        raise LitragError(f"unknown provider kind {provider_kind!r}")
    cors = settings.get("cors_origin")
    return CliConfig(
        corpus_dir=Path(settings.get("corpus_dir", "corpus")),
        index_dir=Path(settings.get("index_dir", "index")),
        state_dir=Path(settings.get("state_dir", "state")),
        provider_kind=provider_kind,
        provider=provider,
        chunking=chunking,
        engine=engine,
        bind=str(settings.get("bind", DEFAULT_BIND)),
        cors_origin=str(cors) if cors else None,
    )
