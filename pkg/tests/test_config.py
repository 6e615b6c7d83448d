import argparse

import pytest

from olive.backends.config import (
    add_config_arguments,
    apply_override,
    dump_config,
    flag_name,
    iter_keys,
    load_config,
    overrides_from_args,
)
from olive.errors import ConfigError


def test_empty_file_gives_documented_defaults(tmp_path):
    path = tmp_path / "ol.toml"
    path.write_text("")
    cfg = load_config(str(path))
    assert cfg.profile.t == 16 and cfg.profile.n == 16
    assert cfg.profile.p == 4 and cfg.profile.c == 64
    assert cfg.queues.audio == 512 and cfg.queues.frame == 8
    assert cfg.queues.asr_todo == 4 and cfg.queues.tts_todo == 16
    assert cfg.memory.top_k == 2 and cfg.memory.recency_bonus == 0.0
    assert cfg.vad.hangover_ms == 256
    assert cfg.backends.asr.implementation == "wizard"
    assert cfg.tts.ms_per_char == 80


def test_divisibility_violation_names_both_fields(tmp_path):
    path = tmp_path / "ol.toml"
    path.write_text("[profile]\np = 3\nn = 16\n")
    with pytest.raises(ConfigError) as exc:
        load_config(str(path))
    assert "profile.p=3" in str(exc.value) and "profile.n=16" in str(exc.value)


def test_flag_overrides_file(tmp_path):
    path = tmp_path / "ol.toml"
    path.write_text("[memory]\ntop_k = 2\n")
    cfg = load_config(str(path), overrides={"memory.top_k": "5"})
    assert cfg.memory.top_k == 5


def test_unknown_keys_listed(tmp_path):
    path = tmp_path / "ol.toml"
    path.write_text("[memory]\ntop_q = 1\n[mystery]\nx = 2\n")
    with pytest.raises(ConfigError) as exc:
        load_config(str(path))
    message = str(exc.value)
    assert "memory.top_q" in message and "mystery" in message


def test_unknown_override_rejected():
    with pytest.raises(ConfigError):
        load_config(overrides={"memory.nope": 1})


def test_dump_load_round_trip(tmp_path):
    cfg = load_config(overrides={"memory.top_k": 7, "vad.energy_threshold": 950.0,
                                 "backends.reasoner.implementation": "wizard"})
    once = dump_config(cfg)
    path = tmp_path / "dumped.toml"
    path.write_text(once)
    twice = dump_config(load_config(str(path)))
    assert once == twice
    reloaded = load_config(str(path))
    assert reloaded.memory.top_k == 7
    assert reloaded.vad.energy_threshold == 950.0
    assert reloaded.backends.reasoner.implementation == "wizard"


def test_env_var_config_path(tmp_path, monkeypatch):
    path = tmp_path / "ol.toml"
    path.write_text("[memory]\ntop_k = 9\n")
    monkeypatch.setenv("OL_CONFIG", str(path))
    assert load_config().memory.top_k == 9


def test_remote_requires_endpoint():
    with pytest.raises(ConfigError) as exc:
        load_config(overrides={"backends.tts.implementation": "remote"})
    assert "endpoint" in str(exc.value)


def test_cli_flags_mirror_every_key():
    parser = argparse.ArgumentParser()
    add_config_arguments(parser)
    keys = list(iter_keys())
    assert ("vad", "energy_threshold", "float") == (
        keys[[k[:2] for k in keys].index(("vad", "energy_threshold"))][0],
        "energy_threshold",
        "float",
    )
    args = parser.parse_args(
        ["--memory-top-k", "5", "--vad-energy-threshold", "800",
         "--backends-asr-timeout-ms", "1234", "--gate-filler-lexicon", "ok,enn"]
    )
    overrides = overrides_from_args(args)
    cfg = load_config(overrides=overrides)
    assert cfg.memory.top_k == 5
    assert cfg.vad.energy_threshold == 800.0
    assert cfg.backends.asr.timeout_ms == 1234
    assert cfg.gate.filler_lexicon == ["ok", "enn"]


def test_every_key_has_a_distinct_flag():
    names = [flag_name(section, key) for section, key, _ in iter_keys()]
    assert len(names) == len(set(names))
    assert "--queues-outbound-audio" in names
    assert "--backends-compressor-endpoint" in names


def test_apply_override_on_frozen_section():
    cfg = load_config()
    apply_override(cfg, "vad.onset_min_ms", 32)
    assert cfg.vad.onset_min_ms == 32


def test_bool_coercion():
    cfg = load_config(overrides={"reasoning.cancel_generation_on_interrupt": "true"})
    assert cfg.reasoning.cancel_generation_on_interrupt is True
    with pytest.raises(ConfigError):
        load_config(overrides={"reasoning.sentence_streaming": "maybe"})
