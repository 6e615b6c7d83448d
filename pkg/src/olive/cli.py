"""Command-line entry points: ol-serve and ol-replay."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backends.config import (
    add_config_arguments,
    dump_config,
    load_config,
    overrides_from_args,
)
from .errors import OliveError
from .harness import REALTIME, VIRTUAL, bundled_trace_path, measure, replay


def _build_config(args: argparse.Namespace):
    return load_config(path=args.config, overrides=overrides_from_args(args))


def serve_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ol-serve",
        description="Run the live gateway (WebSocket media in, answers and audio out).",
    )
    parser.add_argument("--config", default=None, help="TOML config path (or $OL_CONFIG)")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the effective config and exit")
    add_config_arguments(parser)
    args = parser.parse_args(argv)
    try:
        cfg = _build_config(args)
    except OliveError as exc:
        parser.error(str(exc))
    if args.dump_config:
        print(dump_config(cfg), end="")
        return 0

    import uvicorn

    from .gateway import create_app

    uvicorn.run(create_app(cfg), host=cfg.gateway.host, port=cfg.gateway.port)
    return 0


def _resolve_trace(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = bundled_trace_path(name)
    if bundled.exists():
        return bundled
    raise SystemExit(f"trace not found: {name} (no file and no bundled trace)")


def replay_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ol-replay",
        description="Replay a trace through the full pipeline and report.",
    )
    parser.add_argument("trace", help="trace file, or the name of a bundled scenario")
    parser.add_argument("--mode", choices=[VIRTUAL, REALTIME], default=VIRTUAL)
    parser.add_argument("--report", default=None, help="write the JSON report here")
    parser.add_argument("--config", default=None, help="TOML config path (or $OL_CONFIG)")
    add_config_arguments(parser)
    args = parser.parse_args(argv)
    try:
        cfg = _build_config(args)
    except OliveError as exc:
        parser.error(str(exc))

    report = replay(_resolve_trace(args.trace), mode=args.mode, config=cfg)
    doc = report.to_dict()
    if args.report:
        Path(args.report).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    answered = [u for u in doc["utterances"] if u["answered"]]
    print(f"trace={doc['trace']} mode={doc['mode']}")
    print(
        f"utterances={len(doc['utterances'])} answered={len(answered)} "
        f"clips={len(doc['clips'])} interrupts={len(doc['interrupts'])} "
        f"audio_frames={doc['transport_counts']['audio_frames']}"
    )
    for key, value in sorted(measure(doc).items()):
        print(f"{key}: {value}")
    failed = 0
    for verdict in doc["expects"]:
        ok = verdict["pass"]
        failed += 0 if ok else 1
        detail = f" ({verdict['detail']})" if verdict.get("detail") else ""
        print(f"expect {verdict['expect_type']}: {'PASS' if ok else 'FAIL'}{detail}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(replay_main())
