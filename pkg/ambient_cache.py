import itertools
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from errors import ProtocolError

logger = logging.getLogger(__name__)

RECORD_SIZE = 64
_RECORD = struct.Struct("<3f3f3ffIQ")
_PADDING = bytes(RECORD_SIZE - _RECORD.size)
NORMAL_AGREEMENT = 0.9
WEIGHT_EPSILON = 1e-6


def quantize(values):
    return tuple(float(x) for x in np.asarray(values, dtype=np.float32))


@dataclass(frozen=True)
class AmbientRecord:
    position: tuple
    normal: tuple
    value: tuple
    radius: float
    origin_worker: int
    sequence: int

    @property
    def key(self): return (self.origin_worker, self.sequence)


def make_record(position, normal, value, radius, origin_worker, sequence):
    """Record with every float field rounded to binary32, as it travels on the wire."""
    return AmbientRecord(quantize(position), quantize(normal), quantize(value), quantize([radius])[0], int(origin_worker), int(sequence))


def encode_record(record):
    return _RECORD.pack(*record.position, *record.normal, *record.value, record.radius, record.origin_worker, record.sequence) + _PADDING


def decode_record(data):
    if len(data) != RECORD_SIZE: raise ProtocolError(f"ambient record must be {RECORD_SIZE} bytes, got {len(data)}")
    f = _RECORD.unpack_from(data)
    if any(math.isnan(x) for x in f[:10]): raise ProtocolError("NaN field in ambient record")
    if not f[9] > 0.0: raise ProtocolError("ambient record radius must be > 0")
    return AmbientRecord(tuple(f[0:3]), tuple(f[3:6]), tuple(f[6:9]), f[9], f[10], f[11])


def _dist(a, b): return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def _cube_distance(point, center, half):
    d2 = 0.0
    for i in range(3):
        e = abs(point[i] - center[i]) - half
        if e > 0.0: d2 += e * e
    return math.sqrt(d2)


def record_weight(point, normal, record):
    d = _dist(point, record.position)
    dot = sum(n * m for n, m in zip(normal, record.normal))
    return 1.0 / (d / record.radius + math.sqrt(max(0.0, 1.0 - dot)) + WEIGHT_EPSILON)


def record_matches(point, normal, record, tolerance):
    dot = sum(n * m for n, m in zip(normal, record.normal))
    return _dist(point, record.position) < record.radius * tolerance and dot > NORMAL_AGREEMENT


@dataclass
class _Node:
    center: tuple
    half: float
    depth: int
    records: list = field(default_factory=list)
    children: dict = field(default_factory=dict)
    max_radius: float = 0.0


class AmbientCache:
    """Grow-only set of ambient records keyed by (origin_worker, sequence)."""

    def __init__(self, center, half, max_depth=8):
        self.root = _Node(tuple(center), float(half), 0)
        self.max_depth = max_depth
        self._keys = set()

    @classmethod
    def for_octree(cls, octree): return cls(octree.root.center, octree.root.half, octree.max_depth)

    def __len__(self): return len(self._keys)

    def __contains__(self, key): return key in self._keys

    def keys(self): return set(self._keys)

    def contains_point(self, p):
        c, h = self.root.center, self.root.half
        return all(c[i] - h <= p[i] <= c[i] + h for i in range(3))

    def placement(self, record):
        """Path of child slots from the root to the node that holds the record."""
        if not self.contains_point(record.position): return None
        path, c, h = [], self.root.center, self.root.half
        while len(path) < self.max_depth and h / 2.0 >= record.radius:
            k = sum(1 << i for i in range(3) if record.position[i] >= c[i])
            h = h / 2.0
            c = tuple(c[i] + (h if k >> i & 1 else -h) for i in range(3))
            path.append(k)
        return tuple(path)

    def insert(self, record):
        if record.key in self._keys: return False
        path = self.placement(record)
        node = self.root
        node.max_radius = max(node.max_radius, record.radius)
        if path is None:
            logger.warning("ambient record %s outside the cache root, kept at root level", record.key)
            path = ()
        for k in path:
            if k not in node.children:
                h = node.half / 2.0
                node.children[k] = _Node(tuple(node.center[i] + (h if k >> i & 1 else -h) for i in range(3)), h, node.depth + 1)
            node = node.children[k]
            node.max_radius = max(node.max_radius, record.radius)
        node.records.append(record)
        self._keys.add(record.key)
        return True

    def merge(self, records): return sum(1 for r in records if self.insert(r))

    def records(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield from node.records
            stack.extend(node.children.values())

    def candidates(self, point, normal, tolerance):
        found, stack = [], [self.root]
        while stack:
            node = stack.pop()
            found.extend(r for r in node.records if record_matches(point, normal, r, tolerance))
            for child in node.children.values():
                if _cube_distance(point, child.center, child.half) < child.max_radius * tolerance: stack.append(child)
        return sorted(found, key=lambda r: r.key)

    def lookup(self, point, normal, tolerance):
        found = self.candidates(point, normal, tolerance)
        if not found: return None
        if len(found) == 1: return found[0].value
        weights = [record_weight(point, normal, r) for r in found]
        total = sum(weights)
        return tuple(sum(w * r.value[c] for w, r in zip(weights, found)) / total for c in range(3))


class AmbientSession:
    """A worker's view of one cache: lookups plus numbering of the records it creates.

    cache=None disables caching entirely (every query samples the hemisphere).
    """

    def __init__(self, cache, worker=0, sequence=None):
        self.cache = cache
        self.worker = worker
        self.sequence = sequence if sequence is not None else itertools.count()
        self.pending = []

    @property
    def enabled(self): return self.cache is not None

    def lookup(self, point, normal, tolerance):
        return None if self.cache is None else self.cache.lookup(point, normal, tolerance)

    def create(self, position, normal, value, radius):
        record = make_record(position, normal, value, radius, self.worker, next(self.sequence))
        if self.cache is not None:
            self.cache.insert(record)
            self.pending.append(record)
        return record

    def drain(self):
        out, self.pending = self.pending, []
        return out
