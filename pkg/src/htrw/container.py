"""
Binary container for every artifact kind.

Layout (little-endian)::

    b"HTRW" | u32 version | u64 header length | UTF-8 JSON header | payload

The header lists the payload arrays in order as ``{"name", "shape"}``; the
payload is their float64 row-major bytes, concatenated.
"""

import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"HTRW"
VERSION = 1
KINDS = ("phantom", "boundary", "sinogram", "channels", "volume", "report")
_PREFIX = struct.Struct("<4sIQ")


def pack(kind, header, arrays=None):
    """Serialise ``header`` (JSON-able dict) and named float64 arrays to bytes."""
    if kind not in KINDS:
        raise FormatError(f"unknown container kind {kind!r}")
    arrays = dict(arrays or {})
    head = dict(header)
    head["kind"] = kind
    head["arrays"] = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    text = json.dumps(head, sort_keys=True, allow_nan=False).encode("utf-8")
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    return _PREFIX.pack(MAGIC, VERSION, len(text)) + text + body


def unpack(blob):
    """Inverse of :func:`pack`: returns ``(kind, header, arrays)``."""
    if len(blob) < _PREFIX.size:
        raise FormatError("container is truncated")
    magic, version, n_head = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError("not an HTRW container (bad magic)")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version} (expected {VERSION})")
    start = _PREFIX.size
    if start + n_head > len(blob):
        raise FormatError("container header is truncated")
    try:
        head = json.loads(blob[start:start + n_head].decode("utf-8"))
        kind = head["kind"]
        specs = head["arrays"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed container header: {exc}") from None
    if kind not in KINDS:
        raise FormatError(f"unknown container kind {kind!r}")
    offset = start + n_head
    sizes = []
    for s in specs:
        try:
            shape = tuple(int(x) for x in s["shape"])
        except (KeyError, TypeError, ValueError):
            raise FormatError("malformed array descriptor") from None
        if any(x < 0 for x in shape):
            raise FormatError("negative array dimension")
        sizes.append((s.get("name"), shape, 8 * int(np.prod(shape, dtype=np.int64))))
    if offset + sum(n for *_, n in sizes) != len(blob):
        raise FormatError("payload length does not match the header")
    arrays = {}
    for name, shape, nbytes in sizes:
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape).copy()
        offset += nbytes
    return kind, head, arrays


def write(path, kind, header, arrays=None):
    blob = pack(kind, header, arrays)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def read(path, expect=None):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    kind, head, arrays = unpack(blob)
    if expect is not None and kind != expect:
        raise FormatError(f"{path}: expected a {expect} container, found {kind}")
    return kind, head, arrays
