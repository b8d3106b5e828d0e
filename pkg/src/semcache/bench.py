"""Clustered-drift eviction benchmark.

Three caption topics share a small multi-node cache. Every cycle a burst of
requests arrives whose topic mix has drifted from the previous cycle, with
a steady share of one-off prompts that resemble nothing in the cache. After
each cycle one maintenance pass trims the cache to ``c_max``, and the next
cycle's hit rate shows how useful the surviving entries were.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import partition_dataset
from .cluster import gpu_node
from .config import SystemConfig
from .dispatcher import Mode
from .embedding import HashEmbedder
from .maintenance import MaintenanceConfig, Policy
from .pipeline import Pipeline
from .workloads import _word, ingest, make_topics


@dataclass(frozen=True)
class DriftSpec:
    n_topics: int = 3
    per_cycle: int = 300
    cycles: int = 5
    novel_frac: float = 0.3
    dominant: float = 0.6
    budget_frac: float = 0.6
    n_anchors: int = 4
    n_slots: int = 6
    slot_vocab: int = 200
    window: int = 60
    shift: int = 30
    seed: int = 7

    @property
    def c_max(self) -> int:
        # insert volume of one cycle: every request may add one entry
        return int(round(self.budget_frac * self.per_cycle))


def _weights(spec: DriftSpec, cycle: int) -> np.ndarray:
    w = np.full(spec.n_topics, (1.0 - spec.dominant) / max(1, spec.n_topics - 1))
    w[cycle % spec.n_topics] = spec.dominant if spec.n_topics > 1 else 1.0
    return w


def _caption(topic, rng: np.random.Generator, lo: int, width: int) -> str:
    # slot words come from a sliding window of each slot's vocabulary
    words = [s[(lo + int(rng.integers(width))) % len(s)] for s in topic.slots]
    half = len(words) // 2
    return f"{' '.join(words[:half])}, {' '.join(topic.anchors)}, {' '.join(words[half:])}"


def drift_workload(spec: DriftSpec = DriftSpec()) -> tuple[list[dict], list[list[str]]]:
    """Warm corpus (one cycle's volume, balanced over topics) and per-cycle prompt lists.

    Cycle 0 is the warm-up burst that precedes the first maintenance pass.
    """
    topics = make_topics(spec.n_topics, spec.seed, spec.n_anchors, spec.n_slots, spec.slot_vocab)
    rng = np.random.default_rng(spec.seed + 1)
    corpus = [{"caption": _caption(topics[i % spec.n_topics], rng, 0, spec.window),
               "payload_uri": f"drift/{i:05d}.img"}
              for i in range(spec.per_cycle)]
    n_words = spec.n_anchors + spec.n_slots
    cycles = []
    for c in range(spec.cycles + 1):
        w = _weights(spec, c)
        prompts = []
        for _ in range(spec.per_cycle):
            if rng.random() < spec.novel_frac:
                prompts.append(" ".join(_word(rng) for _ in range(n_words)))
            else:
                topic = topics[int(rng.choice(spec.n_topics, p=w))]
                prompts.append(_caption(topic, rng, c * spec.shift, spec.window))
        cycles.append(prompts)
    return corpus, cycles


def drift_config(spec: DriftSpec, policy=Policy.LCU, base: SystemConfig | None = None) -> SystemConfig:
    base = base or SystemConfig()
    nodes = tuple(gpu_node(f"node-{i}", "rtx4090d", heterogeneous=False) for i in range(spec.n_topics))
    # maintenance is driven explicitly at cycle boundaries
    maint = MaintenanceConfig(c_max=spec.c_max, period=10 ** 9, policy=Policy(policy))
    # prompts never repeat here, so one cycle of history is plenty
    return base.with_(nodes=nodes, maintenance=maint, history_capacity=spec.per_cycle)


def run_policy(spec: DriftSpec, policy, workload=None, base: SystemConfig | None = None) -> list[float]:
    """Hit rate after each of the ``spec.cycles`` maintenance passes.

    After update c the next cycle's prompts are first probed against the
    frozen cache (that is the recorded hit rate), then served for real so
    their results feed the following update.
    """
    corpus, cycles = workload or drift_workload(spec)
    config = drift_config(spec, policy, base)
    emb = HashEmbedder(config.dim, config.seed, config.image_noise)
    shards = partition_dataset(ingest(corpus, emb), config.node_ids, seed=config.seed)
    pipe = Pipeline(config, shards, embedder=emb)
    rates = []
    for c, prompts in enumerate(cycles):
        if c > 0:
            hits = sum(pipe.probe(p)[1].mode != Mode.TEXT_TO_IMAGE for p in prompts)
            rates.append(hits / len(prompts))
        if c == spec.cycles:
            break
        for p in prompts:
            pipe.handle(p)
        pipe.maintain()
    return rates


def bench_evict(spec: DriftSpec = DriftSpec(), policies=tuple(Policy),
                base: SystemConfig | None = None) -> list[tuple[int, str, float]]:
    """Rows of (cycle, policy, hit_rate), policy-major in the order given."""
    workload = drift_workload(spec)
    rows = []
    for pol in policies:
        pol = Policy(pol)
        for c, rate in enumerate(run_policy(spec, pol, workload, base), 1):
            rows.append((c, pol.value, rate))
    return rows
