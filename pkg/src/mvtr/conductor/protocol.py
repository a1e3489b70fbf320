"""Wire framing: length-prefixed TCP JSON and minimal WebSocket text frames.

Both carriers move the same UTF-8 JSON payloads, one message per frame.
TCP framing is a u32 big-endian byte length followed by the payload.
The WebSocket side implements just enough of RFC 6455 for text frames:
HTTP upgrade handshake, masked client frames, ping/pong, close.
"""

from __future__ import annotations

import base64
import hashlib
import json
import struct

MAX_MESSAGE_BYTES = 1 << 20
_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class ProtocolError(Exception):
    pass


def encode_tcp_frame(payload: bytes) -> bytes:
    return struct.pack(">I", len(payload)) + payload


async def read_tcp_frame(reader) -> bytes:
    head = await reader.readexactly(4)
    (length,) = struct.unpack(">I", head)
    if length > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    return await reader.readexactly(length)


def parse_json_message(payload: bytes):
    """Returns (message dict, None) or (None, error description)."""
    try:
        msg = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        return None, f"invalid JSON: {e}"
    if not isinstance(msg, dict):
        return None, "top-level JSON value must be an object"
    return msg, None


def dump_json_message(msg: dict) -> bytes:
    return json.dumps(msg, sort_keys=True).encode("utf-8")


# ---- WebSocket ------------------------------------------------------------


def ws_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _WS_GUID).encode()).digest()
    return base64.b64encode(digest).decode()


async def ws_handshake(reader, writer, first_line: bytes) -> None:
    """Consume the HTTP upgrade request and reply 101. `first_line` is the
    request line already read by protocol sniffing."""
    headers = {}
    line = first_line
    while True:
        line = await reader.readline()
        if line in (b"\r\n", b"\n", b""):
            break
        name, _, value = line.decode("latin-1").partition(":")
        headers[name.strip().lower()] = value.strip()
    key = headers.get("sec-websocket-key")
    if key is None or "websocket" not in headers.get("upgrade", "").lower():
        writer.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
        await writer.drain()
        raise ProtocolError("not a WebSocket upgrade request")
    writer.write(
        b"HTTP/1.1 101 Switching Protocols\r\n"
        b"Upgrade: websocket\r\n"
        b"Connection: Upgrade\r\n"
        b"Sec-WebSocket-Accept: " + ws_accept_key(key).encode() + b"\r\n\r\n"
    )
    await writer.drain()


def ws_encode_frame(payload: bytes, opcode: int = 0x1) -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < (1 << 16):
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


async def ws_read_frame(reader) -> tuple:
    """Returns (opcode, payload) for one frame; unmasks client payloads."""
    head = await reader.readexactly(2)
    fin = head[0] & 0x80
    opcode = head[0] & 0x0F
    if not fin:
        raise ProtocolError("fragmented frames not supported")
    masked = head[1] & 0x80
    n = head[1] & 0x7F
    if n == 126:
        (n,) = struct.unpack(">H", await reader.readexactly(2))
    elif n == 127:
        (n,) = struct.unpack(">Q", await reader.readexactly(8))
    if n > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"frame of {n} bytes exceeds limit")
    mask = await reader.readexactly(4) if masked else None
    payload = await reader.readexactly(n)
    if mask:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


async def ws_read_text(reader, writer):
    """Next text payload, transparently answering pings. None on close."""
    while True:
        opcode, payload = await ws_read_frame(reader)
        if opcode == 0x1:
            return payload
        if opcode == 0x9:  # ping
            writer.write(ws_encode_frame(payload, opcode=0xA))
            await writer.drain()
        elif opcode == 0x8:  # close
            writer.write(ws_encode_frame(payload, opcode=0x8))
            await writer.drain()
            return None
        elif opcode == 0xA:  # pong
            continue
        else:
            raise ProtocolError(f"unsupported opcode {opcode}")
