"""
Binary model files.

Layout (all little-endian)::

    b"ANCL"                      magic
    u16   version                (currently 1)
    u8    feature kind           0 = ACF, 1 = QAF, 255 = unspecified
    u16   n_lags, u32 * n_lags
    u16   n_levels, f64 * n_levels
    u32   d, u32 embed width, u32 head width
    f64 * ...                    W1 b1 W2 b2 W3 b3 W4 b4, row-major
    u32   CRC-32 of every byte after the version field

Truncated files, bad magic/version and checksum mismatches raise
distinct exceptions.
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from .features import FeatureSpec
from .network import PARAM_NAMES, NetworkParams

MAGIC = b"ANCL"
VERSION = 1
_KINDS = {"acf": 0, "qaf": 1}
_UNSPECIFIED = 255


class ModelFileError(Exception):
    pass


class ModelVersionError(ModelFileError):
    pass


class ModelTruncatedError(ModelFileError):
    pass


class ModelChecksumError(ModelFileError):
    pass


def _shapes(d, E, H):
    return {"W1": (d, E), "b1": (E,), "W2": (E, E), "b2": (E,),
            "W3": (E, H), "b3": (H,), "W4": (H, 1), "b4": (1,)}


def dumps(params: NetworkParams) -> bytes:
    spec = params.spec
    d, E, H = params.dims
    body = bytearray()
    if spec is None:
        body += struct.pack("<BHH", _UNSPECIFIED, 0, 0)
    else:
        body += struct.pack("<BH", _KINDS[spec.kind], len(spec.lags))
        body += struct.pack(f"<{len(spec.lags)}I", *spec.lags)
        body += struct.pack("<H", len(spec.levels))
        body += struct.pack(f"<{len(spec.levels)}d", *spec.levels)
    body += struct.pack("<III", d, E, H)
    for name in PARAM_NAMES:
        body += np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes()
    header = MAGIC + struct.pack("<H", VERSION)
    return header + bytes(body) + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf, start):
        self.buf, self.pos = buf, start

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise ModelTruncatedError(f"model file ends early at byte {self.pos}")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out

    def array(self, shape):
        count = int(np.prod(shape))
        nbytes = 8 * count
        if self.pos + nbytes > len(self.buf):
            raise ModelTruncatedError(f"model file ends early at byte {self.pos}")
        arr = np.frombuffer(self.buf, dtype="<f8", count=count, offset=self.pos).astype(np.float64)
        self.pos += nbytes
        return arr.reshape(shape)


def loads(buf: bytes) -> NetworkParams:
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise ModelVersionError("not a model file (bad magic bytes)")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != VERSION:
        raise ModelVersionError(f"unsupported model file version {version}")
    if len(buf) < 10:
        raise ModelTruncatedError("model file has no payload")
    body, (crc,) = buf[6:-4], struct.unpack("<I", buf[-4:])
    r = _Reader(buf[:-4], 6)
    (kind,) = r.take("<B")
    (n_lags,) = r.take("<H")
    lags = r.take(f"<{n_lags}I")
    (n_levels,) = r.take("<H")
    levels = r.take(f"<{n_levels}d")
    d, E, H = r.take("<III")
    arrays = {name: r.array(shape) for name, shape in _shapes(d, E, H).items()}
    if r.pos != len(buf) - 4:
        # size disagrees with the declared dimensions
        raise ModelTruncatedError("model payload length does not match its dimension record")
    if zlib.crc32(body) != crc:
        raise ModelChecksumError("model file checksum mismatch")
    if kind == _UNSPECIFIED:
        spec = None
    else:
        inv = {v: k for k, v in _KINDS.items()}
        if kind not in inv:
            raise ModelVersionError(f"unknown feature kind code {kind}")
        spec = FeatureSpec(inv[kind], tuple(lags), tuple(levels))
    return NetworkParams(**arrays, spec=spec)


def save_params(params: NetworkParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params))


def load_params(path) -> NetworkParams:
    with open(path, "rb") as fh:
        return loads(fh.read())
