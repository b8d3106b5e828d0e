import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcache.embedding import Embedding, Modality
from semcache.errors import InvalidParameter
from semcache.maintenance import (Maintainer, MaintenanceConfig, Policy, baseline_evict, evict, lcu_candidates,
                                  lcu_evict, run_maintenance, total_size)
from semcache.payloads import MemoryPayloadStore
from semcache.store import CacheEntry, Shard

from conftest import entry, random_shard


class RawShard(Shard):
    """Shard without the unit-norm check, for exact hand geometry."""
    _UNIT_TOL = float("inf")


def raw_entry(eid, vec):
    v = np.asarray(vec, dtype=float)
    return CacheEntry(eid, Embedding(v, Modality.IMAGE), Embedding(v), f"mem://{eid}")


def federation(rng, sizes, dim=8, quantize=None):
    shards, start = {}, 0
    for i, n in enumerate(sizes):
        shards[f"n{i}"] = random_shard(rng, n, dim, f"n{i}", start, quantize)
        start += n
    return shards


def oracle_lcu(shards, c_max):
    """Recompute centroids from the entries, sort everything, pop from the front."""
    rows = []
    for node, shard in shards.items():
        entries = list(shard)
        if not entries:
            continue
        mu = sum(e.image_vec.values for e in entries) / len(entries)
        for e in entries:
            rows.append((float(np.sqrt(np.sum((e.image_vec.values - mu) ** 2))), e.id, node))
    rows.sort(key=lambda r: (r[0], r[1]), reverse=True)
    excess = max(0, len(rows) - c_max)
    gone = rows[:excess]
    sizes = {n: len(s) for n, s in shards.items()}
    for _, _, n in gone:
        sizes[n] -= 1
    return {eid for _, eid, _ in gone}, sizes


def test_under_budget_is_noop(rng):
    shards = federation(rng, [3, 4])
    before = {n: s.ids() for n, s in shards.items()}
    for p in Policy:
        assert evict(shards, 7, p).ids == []
    assert {n: s.ids() for n, s in shards.items()} == before


def test_lcu_evicts_farthest_from_centroid():
    # collinear offsets 0, +1, +1, -2 around a mean of (5, 0)
    s = RawShard("a", 2)
    for eid, x in [(1, 5.0), (2, 6.0), (3, 6.0), (4, 3.0)]:
        s.insert(raw_entry(eid, [x, 0.0]))
    assert np.array_equal(s.centroid(), [5.0, 0.0])
    dists = {c.entry_id: c.key for c in lcu_candidates({"a": s})}
    assert dists == {1: 0.0, 2: 1.0, 3: 1.0, 4: 2.0}
    assert lcu_evict({"a": s}, 3).ids == [4]


def test_lcu_equal_distances_evict_larger_id_first():
    s = RawShard("a", 2)
    for eid, x in [(1, 5.0), (2, 6.0), (3, 6.0), (4, 3.0)]:
        s.insert(raw_entry(eid, [x, 0.0]))
    assert lcu_evict({"a": s}, 2).ids == [4, 3]


def test_lcu_two_shards_merged_ordering(rng):
    shards = federation(rng, [5, 5])
    cands = {c.entry_id: c.key for c in lcu_candidates(shards)}
    res = lcu_evict(shards, 6)
    assert len(res.ids) == 4 and total_size(shards) == 6
    survivors = [eid for s in shards.values() for eid in s.ids()]
    assert min(cands[e] for e in res.ids) >= max(cands[e] for e in survivors)


def test_lcu_centroids_frozen_during_pass():
    # removing the outlier would move the centroid; the second pick must still use the old one
    s = RawShard("a", 1)
    for eid, x in [(1, 0.0), (2, 1.0), (3, 2.0), (4, 9.0)]:
        s.insert(raw_entry(eid, [x]))
    # mean 3: distances 3, 2, 1, 6
    assert lcu_evict({"a": s}, 2).ids == [4, 1]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([None, 1]))
def test_lcu_matches_oracle(seed, quantize):
    g = np.random.default_rng(seed)
    sizes = g.integers(0, 25, size=int(g.integers(1, 5))).tolist()
    shards = federation(g, sizes, dim=4, quantize=quantize)
    c_max = int(g.integers(0, sum(sizes) + 2))
    want_ids, want_sizes = oracle_lcu(shards, c_max)
    res = lcu_evict(shards, c_max)
    assert set(res.ids) == want_ids and len(res.ids) == len(want_ids)
    assert {n: len(s) for n, s in shards.items()} == want_sizes
    assert total_size(shards) <= c_max or c_max >= sum(sizes)


def test_lru_example():
    s = Shard("n", 2)
    for eid in (1, 2, 3):
        s.insert(entry(eid, [1, eid]))
    for tick, eid in enumerate((1, 2, 3), start=1):
        s.get(eid).touch(tick)
    assert baseline_evict({"n": s}, 2, Policy.LRU).ids == [1]


def test_lfu_example():
    s = Shard("n", 2)
    for eid, hits in zip((1, 2, 3), (5, 1, 3)):
        s.insert(entry(eid, [1, eid], hits=hits))
    assert baseline_evict({"n": s}, 2, Policy.LFU).ids == [2]


def test_fifo_example():
    s = Shard("n", 2)
    for i in range(10):
        s.insert(entry(i, [1, i], tick=i))
    assert baseline_evict({"n": s}, 7, Policy.FIFO).ids == [0, 1, 2]


def test_baseline_ties_prefer_smaller_id():
    shards = {"b": Shard("b", 2), "a": Shard("a", 2)}
    shards["b"].insert(entry(4, [1, 0]))
    shards["a"].insert(entry(9, [1, 0]))
    shards["a"].insert(entry(2, [0, 1]))
    assert baseline_evict(shards, 1, Policy.FIFO).ids == [2, 4]


def test_baseline_rejects_lcu():
    with pytest.raises(InvalidParameter):
        baseline_evict({}, 0, Policy.LCU)


def test_policies_differ_on_same_state(rng):
    def build():
        shards = federation(np.random.default_rng(4), [6, 6])
        for s in shards.values():
            for e in s:
                e.created_at = e.id
                e.last_access = (e.id * 7) % 12
                e.hit_count = (e.id * 5) % 12
        return shards

    picks = {p: tuple(evict(build(), 8, p).ids) for p in Policy}
    assert len(set(picks.values())) == 4


def test_period_counts():
    m = Maintainer(MaintenanceConfig(c_max=10, period=100))
    shards = {"n": Shard("n", 2)}
    assert sum(m.maybe_run(shards, i) is not None for i in range(1, 100)) == 0
    assert sum(m.maybe_run(shards, i) is not None for i in range(100, 201)) == 2
    assert m.runs == 2


def test_run_deletes_payloads_and_logs(tmp_path, rng):
    shards = federation(rng, [10, 10])
    store = MemoryPayloadStore()
    for s in shards.values():
        for e in s:
            store.adopt(e.payload_uri, b"x")
    log = tmp_path / "m.jsonl"
    m = Maintainer(MaintenanceConfig(c_max=12, period=1), log)
    rep = m.run_now(shards, store)
    assert len(rep.evicted_ids) == 8 and total_size(shards) == 12
    live = {e.payload_uri for s in shards.values() for e in s}
    assert store.uris() == live
    rec = json.loads(log.read_text())
    assert rec == {"run": 1, "policy": "lcu", "evicted": 8, "sizes_before": [10, 10],
                   "sizes_after": rep.sizes_after}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Policy)))
def test_budget_holds_after_every_run(seed, policy):
    g = np.random.default_rng(seed)
    shards = federation(g, g.integers(1, 20, size=3).tolist(), dim=4)
    c_max = int(g.integers(3, 30))
    rep = run_maintenance(shards, MaintenanceConfig(c_max, 1, policy))
    assert total_size(shards) <= c_max
    assert sum(rep.sizes_before) - sum(rep.sizes_after) == len(rep.evicted_ids)


def test_config_validation():
    with pytest.raises(InvalidParameter):
        MaintenanceConfig(c_max=10, period=0)
    with pytest.raises(InvalidParameter):
        MaintenanceConfig(c_max=-1)
    with pytest.raises(InvalidParameter):
        MaintenanceConfig(c_max=2).validate_for(3)
    assert MaintenanceConfig(5, policy="lru").policy is Policy.LRU
