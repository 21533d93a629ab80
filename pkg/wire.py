"""Coordinator/worker messages and their binary framing.

frame = u32 payload length | u8 tag | payload, everything little-endian.
"""
import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ambient_cache import RECORD_SIZE, decode_record, encode_record
from errors import ProtocolError
from partition import Window
from scene_core import RAY_KINDS, TraceCounters

_HEADER = struct.Struct("<IB")
_U32 = struct.Struct("<I")
_I32 = struct.Struct("<i")
COORDINATOR = -1
BROADCAST = -2
UNIT_SCANBAR, UNIT_WINDOW = 0, 1


@dataclass(frozen=True)
class Hello:
    worker: int
    capabilities: int = 0
    TAG = 1


@dataclass(frozen=True)
class AssignScanbars:
    scanbars: tuple
    TAG = 2


@dataclass(frozen=True)
class AssignWindow:
    window: Window
    frame: int
    TAG = 3


@dataclass(frozen=True)
class RequestWork:
    worker: int
    TAG = 4


@dataclass(frozen=True)
class TransferHalfDemand:
    target: int
    TAG = 5


@dataclass(frozen=True)
class TransferredScanbars:
    scanbars: tuple
    from_worker: int
    to_worker: int
    TAG = 6


@dataclass(frozen=True, eq=False)
class ScanlineChunk:
    y: int
    x0: int
    colors: np.ndarray
    TAG = 7


@dataclass(frozen=True)
class ScanlineOwnerUpdate:
    y: int
    worker: int
    TAG = 8


@dataclass(frozen=True)
class AmbientBatch:
    records: tuple
    TAG = 9


@dataclass(frozen=True, eq=False)
class ResultBlock:
    worker: int
    unit_kind: int
    unit: int
    frame: int
    x0: int
    y0: int
    colors: np.ndarray
    traced: np.ndarray
    counters: TraceCounters = field(default_factory=TraceCounters)
    TAG = 10

    @property
    def height(self): return self.colors.shape[0]

    @property
    def width(self): return self.colors.shape[1]


@dataclass(frozen=True)
class FrameAdvance:
    frame: int
    TAG = 11


@dataclass(frozen=True)
class Shutdown:
    expected_records: tuple = ()  # (worker, records created) pairs
    TAG = 12


MESSAGES = {cls.TAG: cls for cls in (Hello, AssignScanbars, AssignWindow, RequestWork, TransferHalfDemand, TransferredScanbars,
                                      ScanlineChunk, ScanlineOwnerUpdate, AmbientBatch, ResultBlock, FrameAdvance, Shutdown)}


# --- Codificación ---
def _ints(values): return _U32.pack(len(values)) + struct.pack(f"<{len(values)}I", *values)


def _counters_bytes(c):
    return struct.pack("<7Q", *(c.rays[k] for k in RAY_KINDS), c.intersection_tests, c.ambient_records_created, c.ambient_records_merged)


def _payload(msg):
    if isinstance(msg, Hello): return struct.pack("<II", msg.worker, msg.capabilities)
    if isinstance(msg, AssignScanbars): return _ints(msg.scanbars)
    if isinstance(msg, AssignWindow):
        w = msg.window
        return struct.pack("<8I", w.index, w.row, w.col, w.x0, w.y0, w.width, w.height, msg.frame)
    if isinstance(msg, RequestWork): return _U32.pack(msg.worker)
    if isinstance(msg, TransferHalfDemand): return _U32.pack(msg.target)
    if isinstance(msg, TransferredScanbars): return struct.pack("<II", msg.from_worker, msg.to_worker) + _ints(msg.scanbars)
    if isinstance(msg, ScanlineChunk):
        colors = np.ascontiguousarray(msg.colors, dtype="<f4").reshape(-1, 3)
        return struct.pack("<III", msg.y, msg.x0, len(colors)) + colors.tobytes()
    if isinstance(msg, ScanlineOwnerUpdate): return struct.pack("<II", msg.y, msg.worker)
    if isinstance(msg, AmbientBatch): return _U32.pack(len(msg.records)) + b"".join(encode_record(r) for r in msg.records)
    if isinstance(msg, ResultBlock):
        h, w = msg.colors.shape[:2]
        head = struct.pack("<IBIIIIII", msg.worker, msg.unit_kind, msg.unit, msg.frame, msg.x0, msg.y0, w, h)
        bits = np.packbits(np.asarray(msg.traced, dtype=bool).reshape(-1)).tobytes()
        return head + np.ascontiguousarray(msg.colors, dtype="<f4").tobytes() + bits + _counters_bytes(msg.counters)
    if isinstance(msg, FrameAdvance): return _U32.pack(msg.frame)
    if isinstance(msg, Shutdown): return _U32.pack(len(msg.expected_records)) + b"".join(struct.pack("<II", w, n) for w, n in msg.expected_records)
    raise ProtocolError(f"cannot encode {type(msg).__name__}")


def encode_message(msg):
    payload = _payload(msg)
    return _HEADER.pack(len(payload), msg.TAG) + payload


def encode_routed(dest, msg): return _I32.pack(dest) + encode_message(msg)


# --- Decodificación ---
class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n):
        if self.pos + n > len(self.data): raise ProtocolError("truncated payload")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def ints(self):
        (n,) = self.unpack("<I")
        return tuple(self.unpack(f"<{n}I"))

    def done(self):
        if self.pos != len(self.data): raise ProtocolError(f"{len(self.data) - self.pos} trailing payload bytes")


def _decode_payload(tag, payload):
    r = _Reader(payload)
    if tag == Hello.TAG: msg = Hello(*r.unpack("<II"))
    elif tag == AssignScanbars.TAG: msg = AssignScanbars(r.ints())
    elif tag == AssignWindow.TAG:
        f = r.unpack("<8I")
        msg = AssignWindow(Window(*f[:7]), f[7])
    elif tag == RequestWork.TAG: msg = RequestWork(*r.unpack("<I"))
    elif tag == TransferHalfDemand.TAG: msg = TransferHalfDemand(*r.unpack("<I"))
    elif tag == TransferredScanbars.TAG:
        src, dst = r.unpack("<II")
        msg = TransferredScanbars(r.ints(), src, dst)
    elif tag == ScanlineChunk.TAG:
        y, x0, n = r.unpack("<III")
        msg = ScanlineChunk(y, x0, np.frombuffer(r.take(12 * n), dtype="<f4").reshape(n, 3).astype(np.float32))
    elif tag == ScanlineOwnerUpdate.TAG: msg = ScanlineOwnerUpdate(*r.unpack("<II"))
    elif tag == AmbientBatch.TAG:
        (n,) = r.unpack("<I")
        msg = AmbientBatch(tuple(decode_record(r.take(RECORD_SIZE)) for _ in range(n)))
    elif tag == ResultBlock.TAG:
        worker, kind, unit, frame, x0, y0, w, h = r.unpack("<IBIIIIII")
        colors = np.frombuffer(r.take(12 * w * h), dtype="<f4").reshape(h, w, 3).astype(np.float32)
        bits = np.frombuffer(r.take((w * h + 7) // 8), dtype=np.uint8)
        traced = np.unpackbits(bits, count=w * h).astype(bool).reshape(h, w)
        f = r.unpack("<7Q")
        counters = TraceCounters(Counter(dict(zip(RAY_KINDS, f[:4]))), f[4], f[5], f[6])
        msg = ResultBlock(worker, kind, unit, frame, x0, y0, colors, traced, counters)
    elif tag == FrameAdvance.TAG: msg = FrameAdvance(*r.unpack("<I"))
    elif tag == Shutdown.TAG:
        (n,) = r.unpack("<I")
        msg = Shutdown(tuple(r.unpack("<II") for _ in range(n)))
    else: raise ProtocolError(f"unknown message tag {tag}")
    r.done()
    return msg


def decode_message(data):
    msg, used = split_frame(data)
    if msg is None: raise ProtocolError("incomplete frame")
    if used != len(data): raise ProtocolError(f"{len(data) - used} bytes after frame")
    return msg


def split_frame(buffer):
    """Decode the first complete frame of buffer; (None, 0) when more bytes are needed."""
    if len(buffer) < _HEADER.size: return None, 0
    length, tag = _HEADER.unpack_from(buffer)
    end = _HEADER.size + length
    if len(buffer) < end: return None, 0
    return _decode_payload(tag, bytes(buffer[_HEADER.size:end])), end
