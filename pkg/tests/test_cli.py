import json

import pytest

from olive.cli import replay_main, serve_main


def test_dump_config_prints_effective_toml(capsys):
    code = serve_main(["--dump-config", "--memory-top-k", "6"])
    assert code == 0
    out = capsys.readouterr().out
    assert "[memory]" in out and "top_k = 6" in out


def test_replay_bundled_trace_writes_report(tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = replay_main(["weather", "--report", str(report_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "expect retrieved_contains: PASS" in out
    doc = json.loads(report_path.read_text())
    assert doc["trace"] == "weather" and doc["mode"] == "virtual"


def test_replay_missing_trace_exits_with_error():
    with pytest.raises(SystemExit):
        replay_main(["no-such-trace"])


def test_replay_failed_expect_sets_exit_code(tmp_path):
    # a trace whose expectation cannot hold: an interrupt that never happens
    trace = tmp_path / "t.jsonl"
    trace.write_text(
        "\n".join(
            [
                json.dumps({"t_ms": 0, "kind": "audio", "payload": {"silence_ms": 160}}),
                json.dumps({"t_ms": 160, "kind": "expect",
                            "payload": {"expect_type": "interrupt_by_ms", "t_ms": 32}}),
            ]
        )
    )
    assert replay_main([str(trace)]) == 1
