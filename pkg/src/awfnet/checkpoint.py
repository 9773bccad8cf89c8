"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"AWFN1"
    uint32 entry count
    per entry: uint16 name length, UTF-8 name, uint8 ndim, ndim x uint32 dims
    payload: float32 values of every entry, in manifest order
    uint64 checksum: first 8 bytes of BLAKE2b over the payload
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

from .exceptions import CorruptCheckpointError, IncompatibleCheckpointError

MAGIC = b"AWFN1"


def payload_checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def encode(arrays) -> bytes:
    header = [MAGIC, struct.pack("<I", len(arrays))]
    chunks = []
    for name, value in arrays:
        value = np.asarray(value)
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw)
        header.append(struct.pack("<B", value.ndim) + struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    payload = b"".join(chunks)
    return b"".join(header) + payload + struct.pack("<Q", payload_checksum(payload))


def decode(blob: bytes):
    """Parse a checkpoint into ``[(name, float32 array), ...]``; nothing is
    returned unless the whole file validates."""
    try:
        if blob[:5] != MAGIC:
            raise CorruptCheckpointError("bad magic: not an AWFN1 checkpoint")
        pos = 5
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        manifest = []
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + n].decode("utf-8")
            if len(name.encode("utf-8")) != n:
                raise CorruptCheckpointError("truncated manifest")
            pos += n
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            manifest.append((name, shape))
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"unreadable manifest: {exc}") from None
    expected = sum(int(np.prod(shape)) for _, shape in manifest) * 4
    if len(blob) != pos + expected + 8:
        raise CorruptCheckpointError(
            f"payload size mismatch: expected {pos + expected + 8} bytes, file has {len(blob)}"
        )
    payload = blob[pos:pos + expected]
    (stored,) = struct.unpack_from("<Q", blob, pos + expected)
    if stored != payload_checksum(payload):
        raise CorruptCheckpointError("checksum mismatch")
    arrays, offset = [], 0
    for name, shape in manifest:
        n = int(np.prod(shape))
        arrays.append((name, np.frombuffer(payload, dtype="<f4", count=n, offset=offset).reshape(shape).copy()))
        offset += 4 * n
    return arrays


def save(path, arrays):
    with open(path, "wb") as fh:
        fh.write(encode(arrays))


def load(path):
    with open(path, "rb") as fh:
        return decode(fh.read())


def save_network(path, net):
    save(path, net.state_arrays())


def load_into(net, path):
    """Load a checkpoint into ``net`` after checking the manifest matches exactly."""
    arrays = load(path)
    have = [(name, tuple(a.shape)) for name, a in arrays]
    want = [(name, tuple(np.shape(a))) for name, a in net.state_arrays()]
    if have != want:
        missing = sorted(set(want) - set(have))
        extra = sorted(set(have) - set(want))
        raise IncompatibleCheckpointError(
            f"checkpoint manifest does not match network (missing {missing[:3]}, unexpected {extra[:3]})"
        )
    net.load_state_arrays(arrays)
    return net
