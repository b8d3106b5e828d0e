import numpy as np

from semcache.bench import DriftSpec, _weights, bench_evict, drift_config, drift_workload, run_policy
from semcache.classifier import partition_dataset
from semcache.config import SystemConfig
from semcache.embedding import HashEmbedder
from semcache.maintenance import Policy
from semcache.pipeline import Pipeline
from semcache.workloads import ingest

TINY = DriftSpec(per_cycle=40, cycles=2)


def test_budget_is_fraction_of_cycle_volume():
    assert DriftSpec().c_max == 180
    assert TINY.c_max == 24


def test_dominant_topic_rotates():
    spec = DriftSpec()
    dominant = [int(np.argmax(_weights(spec, c))) for c in range(6)]
    assert dominant == [0, 1, 2, 0, 1, 2]
    assert np.isclose(_weights(spec, 4).sum(), 1.0)


def test_workload_shape_and_determinism():
    corpus, cycles = drift_workload(TINY)
    assert len(corpus) == 40 and len(cycles) == 3 and all(len(c) == 40 for c in cycles)
    assert drift_workload(TINY) == (corpus, cycles)
    assert drift_workload(DriftSpec(per_cycle=40, cycles=2, seed=8)) != (corpus, cycles)


def test_drift_config():
    cfg = drift_config(DriftSpec(), Policy.LFU, SystemConfig(seed=3))
    assert len(cfg.nodes) == 3 and cfg.seed == 3
    assert cfg.maintenance.c_max == 180 and cfg.maintenance.policy is Policy.LFU


def test_probe_has_no_side_effects():
    corpus, cycles = drift_workload(TINY)
    cfg = drift_config(TINY)
    emb = HashEmbedder(cfg.dim, cfg.seed, cfg.image_noise)
    pipe = Pipeline(cfg, partition_dataset(ingest(corpus, emb), cfg.node_ids), embedder=emb)
    snapshot = {n: [(e.id, e.hit_count, e.last_access) for e in s] for n, s in pipe.shards.items()}
    first = [pipe.probe(p) for p in cycles[1]]
    assert [pipe.probe(p) for p in cycles[1]] == first
    assert {n: [(e.id, e.hit_count, e.last_access) for e in s] for n, s in pipe.shards.items()} == snapshot
    assert len(pipe.history) == 0 and pipe.counter == 0


def test_rows_and_budget():
    rows = bench_evict(TINY, [Policy.LCU, Policy.FIFO])
    assert [(c, p) for c, p, _ in rows] == [(1, "lcu"), (2, "lcu"), (1, "fifo"), (2, "fifo")]
    assert all(0.0 <= h <= 1.0 for _, _, h in rows)
    assert run_policy(TINY, Policy.LCU) == [h for _, p, h in rows if p == "lcu"]
