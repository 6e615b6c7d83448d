"""Runtime configuration: TOML file + CLI flag overrides.

Every key has a spec'd default, every key has a mirrored CLI flag
(--section-key, e.g. --vad-energy-threshold), unknown keys are rejected
by name, and the effective config can be dumped back to TOML for
reproducibility. Precedence: defaults < file < flags. The config path
can also come from the OL_CONFIG environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from ..errors import ConfigError
from ..vad import VadConfig
from . import BackendDescriptor
from .reference import DEFAULT_FILLER_LEXICON


@dataclass
class ProfileConfig:
    t: int = 16            # frames per clip
    n: int = 16            # tokens per frame
    p: int = 4             # down-sampled tokens per frame
    c: int = 64            # feature width
    sample_rate: int = 16000

    def validate(self) -> None:
        problems = []
        if self.t < 1:
            problems.append("profile.t must be >= 1")
        if self.n < 1:
            problems.append("profile.n must be >= 1")
        if self.p < 1 or self.n % self.p != 0:
            problems.append(f"profile.p={self.p} must divide profile.n={self.n}")
        if self.c < 2:
            problems.append("profile.c must be >= 2")
        if self.sample_rate != 16000:
            problems.append("profile.sample_rate is fixed at 16000")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass
class IngestConfig:
    frame_rate_fps: float = 1.0
    stall_threshold_ms: int = 5000

    def validate(self) -> None:
        if self.frame_rate_fps <= 0:
            raise ConfigError("ingest.frame_rate_fps must be > 0")
        if self.stall_threshold_ms <= 0:
            raise ConfigError("ingest.stall_threshold_ms must be > 0")


@dataclass
class QueuesConfig:
    # sized so a stalled consumer surfaces as backpressure within seconds
    audio: int = 512
    frame: int = 8
    asr_todo: int = 4
    llm_todo: int = 4
    tts_todo: int = 16
    outbound_audio: int = 256

    def validate(self) -> None:
        bad = [f.name for f in fields(self) if getattr(self, f.name) < 1]
        if bad:
            raise ConfigError("; ".join(f"queues.{n} must be >= 1" for n in bad))


@dataclass
class MemoryConfig:
    top_k: int = 2
    window_clips: int = 32
    max_snapshots: int = 8
    frame_refs_per_clip: int = 4
    recency_bonus: float = 0.0

    def validate(self) -> None:
        problems = []
        if self.top_k < 1:
            problems.append("memory.top_k must be >= 1")
        if self.window_clips < 1:
            problems.append("memory.window_clips must be >= 1")
        if self.max_snapshots < 1:
            problems.append("memory.max_snapshots must be >= 1")
        if self.frame_refs_per_clip < 1:
            problems.append("memory.frame_refs_per_clip must be >= 1")
        if self.recency_bonus < 0:
            problems.append("memory.recency_bonus must be >= 0")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass
class GateConfig:
    filler_lexicon: list = field(default_factory=lambda: list(DEFAULT_FILLER_LEXICON))
    min_content_tokens: int = 2

    def validate(self) -> None:
        if self.min_content_tokens < 1:
            raise ConfigError("gate.min_content_tokens must be >= 1")


@dataclass
class ReasoningConfig:
    sentence_streaming: bool = True
    cancel_generation_on_interrupt: bool = False

    def validate(self) -> None:
        pass


@dataclass
class TtsConfig:
    ms_per_char: int = 80

    def validate(self) -> None:
        if self.ms_per_char <= 0:
            raise ConfigError("tts.ms_per_char must be > 0")


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = 8076
    ws_path: str = "/ws/ol"

    def validate(self) -> None:
        if not (0 < self.port < 65536):
            raise ConfigError("gateway.port must be in 1..65535")
        if not self.ws_path.startswith("/"):
            raise ConfigError("gateway.ws_path must start with '/'")


def _descriptor(role: str, implementation: str) -> BackendDescriptor:
    return BackendDescriptor(role=role, implementation=implementation)


@dataclass
class BackendsConfig:
    asr: BackendDescriptor = field(default_factory=lambda: _descriptor("asr", "wizard"))
    frame_encoder: BackendDescriptor = field(
        default_factory=lambda: _descriptor("frame_encoder", "reference")
    )
    compressor: BackendDescriptor = field(
        default_factory=lambda: _descriptor("compressor", "reference")
    )
    reasoner: BackendDescriptor = field(
        default_factory=lambda: _descriptor("reasoner", "reference")
    )
    tts: BackendDescriptor = field(default_factory=lambda: _descriptor("tts", "reference"))
    gate: BackendDescriptor = field(default_factory=lambda: _descriptor("gate", "reference"))

    def validate(self) -> None:
        for f in fields(self):
            getattr(self, f.name).validate()


@dataclass
class RuntimeConfig:
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    queues: QueuesConfig = field(default_factory=QueuesConfig)
    vad: VadConfig = field(default_factory=VadConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    reasoning: ReasoningConfig = field(default_factory=ReasoningConfig)
    tts: TtsConfig = field(default_factory=TtsConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    backends: BackendsConfig = field(default_factory=BackendsConfig)

    def validate(self) -> None:
        for f in fields(self):
            getattr(self, f.name).validate()


# section name -> (attribute path getter, dataclass type)
_FLAT_SECTIONS = {
    "profile": ProfileConfig,
    "ingest": IngestConfig,
    "queues": QueuesConfig,
    "vad": VadConfig,
    "memory": MemoryConfig,
    "gate": GateConfig,
    "reasoning": ReasoningConfig,
    "tts": TtsConfig,
    "gateway": GatewayConfig,
}
_BACKEND_ROLES = ("asr", "frame_encoder", "compressor", "reasoner", "tts", "gate")
_DESCRIPTOR_KEYS = (
    "implementation", "endpoint", "timeout_ms", "max_retries",
    "backoff_base_ms", "inflight_limit",
)


def _section_obj(cfg: RuntimeConfig, section: str):
    if section.startswith("backends."):
        return getattr(cfg.backends, section.split(".", 1)[1])
    return getattr(cfg, section)


def iter_keys():
    """Yield (section, key, type) for every configurable key."""
    for section, cls in _FLAT_SECTIONS.items():
        for f in fields(cls):
            yield section, f.name, f.type
    for role in _BACKEND_ROLES:
        for f in fields(BackendDescriptor):
            if f.name in _DESCRIPTOR_KEYS:
                yield f"backends.{role}", f.name, f.type


def _coerce(section: str, key: str, value: Any, current: Any) -> Any:
    try:
        if isinstance(current, bool):
            if isinstance(value, bool):
                return value
            if isinstance(value, str):
                low = value.strip().lower()
                if low in ("true", "1", "yes", "on"):
                    return True
                if low in ("false", "0", "no", "off"):
                    return False
            raise ValueError(f"expected a boolean, got {value!r}")
        if isinstance(current, int):
            if isinstance(value, bool):
                raise ValueError("expected an integer, got a boolean")
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            if isinstance(value, str):
                return [v.strip() for v in value.split(",") if v.strip()]
            return [str(v) for v in value]
        if isinstance(current, str):
            if not isinstance(value, str):
                raise ValueError(f"expected a string, got {value!r}")
            return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc
    raise ConfigError(f"{section}.{key}: unsupported value type")


def _apply(cfg: RuntimeConfig, section: str, key: str, value: Any) -> None:
    obj = _section_obj(cfg, section)
    if not any(f.name == key for f in fields(obj)):
        raise ConfigError(f"unknown key: {section}.{key}")
    coerced = _coerce(section, key, value, getattr(obj, key))
    if dataclasses.is_dataclass(obj) and getattr(type(obj), "__dataclass_params__").frozen:
        new_obj = dataclasses.replace(obj, **{key: coerced})
        if section.startswith("backends."):
            setattr(cfg.backends, section.split(".", 1)[1], new_obj)
        else:
            setattr(cfg, section, new_obj)
    else:
        setattr(obj, key, coerced)


def _known_sections() -> set:
    return set(_FLAT_SECTIONS) | {f"backends.{r}" for r in _BACKEND_ROLES}


def apply_override(cfg: RuntimeConfig, dotted: str, value: Any) -> None:
    """Apply one "section.key" override (CLI flag or trace metadata)."""
    section, _, key = dotted.rpartition(".")
    if not section or section not in _known_sections():
        raise ConfigError(f"unknown key: {dotted}")
    _apply(cfg, section, key, value)


def load_config(
    path: Optional[str] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> RuntimeConfig:
    """Build the effective config: defaults, then the TOML file (explicit
    path, else $OL_CONFIG), then flat "section.key" overrides. Unknown
    keys are an error naming every offender."""
    cfg = RuntimeConfig()
    if path is None:
        path = os.environ.get("OL_CONFIG") or None
    if path:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        unknown = []
        for section, body in data.items():
            if not isinstance(body, dict):
                unknown.append(section)
                continue
            if section == "backends":
                for role, role_body in body.items():
                    if role not in _BACKEND_ROLES or not isinstance(role_body, dict):
                        unknown.append(f"backends.{role}")
                        continue
                    for key in role_body:
                        if key not in _DESCRIPTOR_KEYS:
                            unknown.append(f"backends.{role}.{key}")
                continue
            if section not in _FLAT_SECTIONS:
                unknown.append(section)
                continue
            for key in body:
                if not any(f.name == key for f in fields(_FLAT_SECTIONS[section])):
                    unknown.append(f"{section}.{key}")
        if unknown:
            raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))
        for section, body in data.items():
            if section == "backends":
                for role, role_body in body.items():
                    for key, value in role_body.items():
                        _apply(cfg, f"backends.{role}", key, value)
            else:
                for key, value in body.items():
                    _apply(cfg, section, key, value)
    for dotted, value in (overrides or {}).items():
        apply_override(cfg, dotted, value)
    cfg.validate()
    return cfg


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump_config(cfg: RuntimeConfig) -> str:
    """Effective config as TOML; load(dump(cfg)) reproduces cfg."""
    lines = []
    for section in sorted(_FLAT_SECTIONS):
        obj = _section_obj(cfg, section)
        lines.append(f"[{section}]")
        for f in sorted(fields(obj), key=lambda f: f.name):
            lines.append(f"{f.name} = {_toml_value(getattr(obj, f.name))}")
        lines.append("")
    for role in _BACKEND_ROLES:
        desc = getattr(cfg.backends, role)
        lines.append(f"[backends.{role}]")
        for key in _DESCRIPTOR_KEYS:
            lines.append(f"{key} = {_toml_value(getattr(desc, key))}")
        lines.append("")
    return "\n".join(lines)


def flag_name(section: str, key: str) -> str:
    return "--" + f"{section.replace('.', '-')}-{key}".replace("_", "-")


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    """Add one flag per config key, mirroring the file schema."""
    group = parser.add_argument_group("config overrides")
    for section, key, _type in iter_keys():
        group.add_argument(
            flag_name(section, key),
            dest=f"cfgkey::{section}.{key}",
            metavar="V",
            default=None,
            help=argparse.SUPPRESS,
        )


def overrides_from_args(args: argparse.Namespace) -> dict[str, str]:
    out = {}
    for name, value in vars(args).items():
        if name.startswith("cfgkey::") and value is not None:
            out[name.split("::", 1)[1]] = value
    return out
