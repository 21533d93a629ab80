from __future__ import annotations

import math

import numpy as np
import pytest

from ambient_cache import (RECORD_SIZE, AmbientCache, AmbientSession, decode_record, encode_record, make_record,
                           record_matches, record_weight)
from errors import ProtocolError


def rec(position=(0.0, 0.0, 0.0), normal=(0.0, 1.0, 0.0), value=(0.5, 0.5, 0.5), radius=1.0, worker=0, seq=0):
    return make_record(position, normal, value, radius, worker, seq)


def test_record_fields_are_float32():
    r = rec(position=(0.1, 0.2, 0.3))
    assert r.position == tuple(float(np.float32(x)) for x in (0.1, 0.2, 0.3))


def test_decode_encode_identity():
    rng = np.random.default_rng(0)
    for i in range(200):
        r = rec(tuple(rng.normal(size=3)), tuple(rng.normal(size=3)), tuple(rng.random(3)), float(rng.uniform(0.05, 10)), i % 7, i)
        data = encode_record(r)
        assert len(data) == RECORD_SIZE
        assert decode_record(data) == r


def test_decode_rejects_bad_records():
    good = encode_record(rec())
    with pytest.raises(ProtocolError):
        decode_record(good[:-1])
    nan = encode_record(rec(value=(math.nan, 0.0, 0.0)))
    with pytest.raises(ProtocolError):
        decode_record(nan)
    with pytest.raises(ProtocolError):
        decode_record(encode_record(rec(radius=-1.0)))


def test_weight_matches_direct_formula():
    r = rec(radius=2.0)
    p, n = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)
    assert record_weight(p, n, r) == pytest.approx(1.0 / (0.5 + 0.0 + 1e-6))
    assert record_matches(p, n, r, 0.6)
    assert not record_matches(p, n, r, 0.4)
    assert not record_matches(p, (0.0, -1.0, 0.0), r, 10.0)


def brute_force_placement(cache, r):
    path, c, h = [], cache.root.center, cache.root.half
    while len(path) < cache.max_depth and h / 2 >= r.radius:
        k = (r.position[0] >= c[0]) + 2 * (r.position[1] >= c[1]) + 4 * (r.position[2] >= c[2])
        h /= 2
        c = tuple(c[i] + (h if k >> i & 1 else -h) for i in range(3))
        path.append(k)
    return tuple(path)


def test_placement_follows_radius():
    cache = AmbientCache((0.0, 0.0, 0.0), 8.0, max_depth=8)
    rng = np.random.default_rng(1)
    for i in range(100):
        r = rec(tuple(rng.uniform(-8, 8, 3)), radius=float(rng.uniform(0.05, 10)), seq=i)
        assert cache.placement(r) == brute_force_placement(cache, r)
    assert cache.placement(rec(radius=20.0)) == ()
    assert cache.placement(rec(position=(9.0, 0.0, 0.0))) is None


def test_insert_is_idempotent_and_grow_only():
    cache = AmbientCache((0.0, 0.0, 0.0), 4.0)
    a, b = rec(seq=0), rec(position=(1.0, 0.0, 0.0), seq=1)
    assert cache.insert(a)
    assert not cache.insert(a)
    assert cache.merge([a, b]) == 1
    assert len(cache) == 2 and cache.keys() == {(0, 0), (0, 1)}
    assert sorted(r.key for r in cache.records()) == [(0, 0), (0, 1)]


def test_outside_record_is_kept_at_root():
    cache = AmbientCache((0.0, 0.0, 0.0), 1.0)
    far = rec(position=(5.0, 0.0, 0.0), radius=0.1)
    assert cache.insert(far)
    assert far in cache.root.records


def test_lookup_single_and_weighted():
    cache = AmbientCache((0.0, 0.0, 0.0), 4.0)
    assert cache.lookup((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 0.3) is None
    cache.insert(rec(value=(1.0, 0.0, 0.0), seq=0))
    assert cache.lookup((0.1, 0.0, 0.0), (0.0, 1.0, 0.0), 0.3) == (1.0, 0.0, 0.0)
    cache.insert(rec(position=(0.2, 0.0, 0.0), value=(0.0, 1.0, 0.0), seq=1))
    v = cache.lookup((0.1, 0.0, 0.0), (0.0, 1.0, 0.0), 0.3)
    assert v[0] == pytest.approx(0.5) and v[1] == pytest.approx(0.5)


def test_lookup_ignores_insertion_order():
    records = [rec(position=(0.05 * i, 0.0, 0.0), value=(0.1 * i, 0.0, 0.0), worker=i % 2, seq=i) for i in range(6)]
    a, b = AmbientCache((0.0, 0.0, 0.0), 4.0), AmbientCache((0.0, 0.0, 0.0), 4.0)
    a.merge(records)
    b.merge(reversed(records))
    assert a.lookup((0.1, 0.0, 0.0), (0.0, 1.0, 0.0), 0.5) == b.lookup((0.1, 0.0, 0.0), (0.0, 1.0, 0.0), 0.5)


def test_session_numbers_and_drains_records():
    session = AmbientSession(AmbientCache((0.0, 0.0, 0.0), 4.0), worker=3)
    first = session.create((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0, 1.0), 1.0)
    second = session.create((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0, 1.0), 1.0)
    assert (first.key, second.key) == ((3, 0), (3, 1))
    assert session.drain() == [first, second]
    assert session.drain() == []


def test_disabled_session_never_hits():
    session = AmbientSession(None)
    assert not session.enabled
    session.create((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0, 1.0), 1.0)
    assert session.lookup((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 0.3) is None
    assert session.pending == []
