"""WebSocket gateway: wire protocol and FastAPI application."""

from .app import create_app
from .wire import BinaryFrame, decode_binary, encode_binary, parse_json_message

__all__ = [
    "BinaryFrame",
    "create_app",
    "decode_binary",
    "encode_binary",
    "parse_json_message",
]
