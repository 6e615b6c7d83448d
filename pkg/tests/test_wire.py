import json
from pathlib import Path

import jsonschema
import pytest
from hypothesis import given, strategies as st

from olive.gateway import wire

SCHEMA = json.loads(
    (
        Path(__file__).parent.parent
        / "src" / "olive" / "assets" / "schemas" / "wire.json"
    ).read_text()
)


class TestBinaryCodec:
    @given(
        st.sampled_from([wire.KIND_AUDIO_IN, wire.KIND_FRAME_IN, wire.KIND_AUDIO_OUT]),
        st.integers(min_value=0, max_value=2**32 - 1),
        st.integers(min_value=0, max_value=2**63),
        st.binary(max_size=600),
    )
    def test_round_trip(self, kind, seq, t_ms, body):
        frame = wire.BinaryFrame(kind, seq, t_ms, body)
        assert wire.decode_binary(wire.encode_binary(frame)) == frame

    def test_layout_is_bit_exact(self):
        data = wire.encode_binary(wire.BinaryFrame(0x11, 7, 1000, b"xy"))
        assert data[:1] == b"\x11"
        assert data[1:5] == (7).to_bytes(4, "big")
        assert data[5:13] == (1000).to_bytes(8, "big")
        assert data[13:] == b"xy"

    def test_unknown_kind_rejected(self):
        with pytest.raises(wire.WireFormatError):
            wire.decode_binary(b"\x03" + bytes(12))
        with pytest.raises(wire.WireFormatError):
            wire.encode_binary(wire.BinaryFrame(0x7F, 0, 0, b""))

    def test_short_frame_rejected(self):
        with pytest.raises(wire.WireFormatError):
            wire.decode_binary(b"\x01\x00")


def _examples():
    return [
        {"type": "hello", "session": "s", "payload": {"version": "ol/1"}},
        {
            "type": "hello",
            "session": "s",
            "payload": {
                "version": "ol/1",
                "profile": {"t": 4, "n": 4, "p": 2, "c": 16, "sample_rate": 16000},
            },
        },
        {
            "type": "ready",
            "session": "s",
            "payload": {
                "version": "ol/1",
                "profile": {"t": 16, "n": 16, "p": 4, "c": 64, "sample_rate": 16000},
            },
        },
        {"type": "interrupt", "session": "s", "payload": {"t_ms": 500, "generation": 2}},
        {
            "type": "transcript",
            "session": "s",
            "payload": {
                "utterance_id": 1,
                "t_start_ms": 0,
                "t_end_ms": 400,
                "sound_class": "speech",
                "text": "hi there",
            },
        },
        {
            "type": "answer",
            "session": "s",
            "payload": {
                "utterance_id": 1,
                "question": "what is this",
                "answer": "a mug",
                "grounded_clips": [0, 2],
                "gate_ms": 0.1,
                "retrieve_ms": 0.2,
                "generate_ms": 0.3,
            },
        },
        {
            "type": "status",
            "session": "s",
            "payload": {"status": "gate_ignored", "detail": "filler", "utterance_id": 3},
        },
        {"type": "bye", "session": "s", "payload": {"reason": "version"}},
    ]


class TestJsonMessages:
    def test_examples_validate_against_published_schema(self):
        for example in _examples():
            jsonschema.validate(example, SCHEMA)

    def test_parse_accepts_every_example(self):
        for example in _examples():
            parsed = wire.parse_json_message(example)
            assert parsed.type == example["type"]

    def test_unknown_type_rejected_by_parser_and_schema(self):
        bad = {"type": "mystery", "session": "s", "payload": {}}
        with pytest.raises(wire.WireFormatError):
            wire.parse_json_message(bad)
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(bad, SCHEMA)

    def test_pydantic_and_schema_agree_on_extra_fields(self):
        bad = {
            "type": "interrupt",
            "session": "s",
            "payload": {"t_ms": 5, "generation": 1, "extra": True},
        }
        with pytest.raises(wire.WireFormatError):
            wire.parse_json_message(bad)
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(bad, SCHEMA)
