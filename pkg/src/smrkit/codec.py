"""Canonical byte encoding and length-prefixed record streams.

Every value that gets signed, digested, or written to a trace file goes
through ``encode``.  The encoding is fully deterministic (dict keys are
sorted), so byte equality of two encoded values is value equality.  This is
what makes trace files comparable with ``==`` and signatures reproducible.

Supported types: None, bool, int (unbounded), bytes, str, list/tuple, and
dicts with str keys.  Floats are deliberately unsupported; all simulated
times are integer nanoseconds.
"""

from __future__ import annotations

import struct
from typing import Any, BinaryIO

_LEN = struct.Struct(">I")


def encode(value: Any) -> bytes:
    out: list[bytes] = []
    _enc(value, out)
    return b"".join(out)


def _enc(v: Any, out: list[bytes]) -> None:
    if v is None:
        out.append(b"n")
    elif v is True:
        out.append(b"t")
    elif v is False:
        out.append(b"f")
    elif isinstance(v, int):
        out.append(b"i%d;" % v)
    elif isinstance(v, bytes):
        out.append(b"b%d:" % len(v))
        out.append(v)
    elif isinstance(v, str):
        raw = v.encode("utf-8")
        out.append(b"s%d:" % len(raw))
        out.append(raw)
    elif isinstance(v, (list, tuple)):
        out.append(b"l")
        for item in v:
            _enc(item, out)
        out.append(b";")
    elif isinstance(v, dict):
        out.append(b"d")
        for k in sorted(v):
            if not isinstance(k, str):
                raise TypeError(f"dict keys must be str, got {type(k).__name__}")
            _enc(k, out)
            _enc(v[k], out)
        out.append(b";")
    else:
        raise TypeError(f"cannot encode {type(v).__name__}")


def decode(data: bytes) -> Any:
    value, pos = _dec(data, 0)
    if pos != len(data):
        raise ValueError(f"trailing bytes after value at offset {pos}")
    return value


def _dec(data: bytes, pos: int) -> tuple[Any, int]:
    tag = data[pos : pos + 1]
    if tag == b"n":
        return None, pos + 1
    if tag == b"t":
        return True, pos + 1
    if tag == b"f":
        return False, pos + 1
    if tag == b"i":
        end = data.index(b";", pos)
        return int(data[pos + 1 : end]), end + 1
    if tag in (b"b", b"s"):
        colon = data.index(b":", pos)
        length = int(data[pos + 1 : colon])
        start = colon + 1
        raw = data[start : start + length]
        if len(raw) != length:
            raise ValueError("truncated string")
        return (raw if tag == b"b" else raw.decode("utf-8")), start + length
    if tag == b"l":
        pos += 1
        items: list[Any] = []
        while data[pos : pos + 1] != b";":
            item, pos = _dec(data, pos)
            items.append(item)
        return items, pos + 1
    if tag == b"d":
        pos += 1
        d: dict[str, Any] = {}
        while data[pos : pos + 1] != b";":
            k, pos = _dec(data, pos)
            v, pos = _dec(data, pos)
            d[k] = v
        return d, pos + 1
    raise ValueError(f"bad tag {tag!r} at offset {pos}")


def write_record(fh: BinaryIO, value: Any) -> None:
    """Append one length-prefixed canonical record to a stream."""
    payload = encode(value)
    fh.write(_LEN.pack(len(payload)))
    fh.write(payload)


def read_records(fh: BinaryIO):
    """Yield records until EOF.  A truncated trailing record is ignored,
    so partially written traces stay readable."""
    while True:
        header = fh.read(4)
        if len(header) < 4:
            return
        (length,) = _LEN.unpack(header)
        payload = fh.read(length)
        if len(payload) < length:
            return
        yield decode(payload)
