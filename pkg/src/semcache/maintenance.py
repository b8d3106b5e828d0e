"""Cache maintenance: correlation-based eviction (LCU) and LRU/LFU/FIFO baselines.

All policies enforce one global entry budget across every shard. Eviction
only removes entries from shards and reports them; deleting payload files is
the caller's job.
"""
from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .embedding import Modality
from .errors import InvalidParameter
from .store import CacheEntry, Shard


class Policy(str, enum.Enum):
    LCU = "lcu"
    LRU = "lru"
    LFU = "lfu"
    FIFO = "fifo"


@dataclass(frozen=True)
class MaintenanceConfig:
    c_max: int
    period: int = 500
    policy: Policy = Policy.LCU

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.period < 1:
            raise InvalidParameter("maintenance.period must be >= 1")
        if self.c_max < 0:
            raise InvalidParameter("maintenance.c_max must be >= 0")

    def validate_for(self, n_nodes: int) -> None:
        if self.c_max < n_nodes:
            raise InvalidParameter(f"maintenance.c_max={self.c_max} is below the node count {n_nodes}")


@dataclass(frozen=True)
class EvictionCandidate:
    entry_id: int
    node_id: str
    key: float


@dataclass
class EvictionResult:
    evicted: list[tuple[str, CacheEntry]] = field(default_factory=list)

    @property
    def ids(self) -> list[int]:
        return [e.id for _, e in self.evicted]

    @property
    def payload_uris(self) -> list[str]:
        return [e.payload_uri for _, e in self.evicted]


def total_size(shards: Mapping[str, Shard]) -> int:
    return sum(len(s) for s in shards.values())


def lcu_candidates(shards: Mapping[str, Shard]) -> list[EvictionCandidate]:
    """Distance of every image vector to its own shard's centroid, most distant first.

    Centroids are computed once, before anything is removed.
    """
    cands = []
    for node_id in sorted(shards):
        shard = shards[node_id]
        if len(shard) == 0:
            continue
        mu = shard.centroid()
        diff = shard.matrix(Modality.IMAGE) - mu
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        for eid, dist in zip(shard.row_ids().tolist(), d.tolist()):
            cands.append(EvictionCandidate(eid, node_id, dist))
    cands.sort(key=lambda c: (-c.key, -c.entry_id))
    return cands


def _pop_until(shards: Mapping[str, Shard], cands, c_max: int) -> EvictionResult:
    result = EvictionResult()
    total = total_size(shards)
    for c in cands:
        if total <= c_max:
            break
        result.evicted.append((c.node_id, shards[c.node_id].remove(c.entry_id)))
        total -= 1
    return result


def lcu_evict(shards: Mapping[str, Shard], c_max: int) -> EvictionResult:
    if total_size(shards) <= c_max:
        return EvictionResult()
    return _pop_until(shards, lcu_candidates(shards), c_max)


_BASELINE_KEYS = {
    Policy.LRU: lambda e: e.last_access,
    Policy.LFU: lambda e: e.hit_count,
    Policy.FIFO: lambda e: e.created_at,
}


def baseline_evict(shards: Mapping[str, Shard], c_max: int, policy) -> EvictionResult:
    policy = Policy(policy)
    if policy not in _BASELINE_KEYS:
        raise InvalidParameter(f"{policy.value} is not a baseline policy")
    if total_size(shards) <= c_max:
        return EvictionResult()
    key = _BASELINE_KEYS[policy]
    cands = [EvictionCandidate(e.id, node_id, key(e))
             for node_id in sorted(shards) for e in shards[node_id]]
    cands.sort(key=lambda c: (c.key, c.entry_id))
    return _pop_until(shards, cands, c_max)


def evict(shards: Mapping[str, Shard], c_max: int, policy) -> EvictionResult:
    policy = Policy(policy)
    if policy == Policy.LCU:
        return lcu_evict(shards, c_max)
    return baseline_evict(shards, c_max, policy)


@dataclass
class MaintenanceReport:
    run: int
    policy: Policy
    evicted_ids: list[int]
    sizes_before: list[int]
    sizes_after: list[int]
    wall_time: float

    def log_record(self) -> dict:
        # wall time is left out so run logs stay reproducible
        return {
            "run": self.run,
            "policy": self.policy.value,
            "evicted": len(self.evicted_ids),
            "sizes_before": self.sizes_before,
            "sizes_after": self.sizes_after,
        }


def run_maintenance(shards: Mapping[str, Shard], config: MaintenanceConfig, run: int = 1,
                    store=None) -> MaintenanceReport:
    """One maintenance pass; payloads of evicted entries are deleted from ``store`` if given."""
    nodes = sorted(shards)
    before = [len(shards[n]) for n in nodes]
    t0 = time.perf_counter()
    result = evict(shards, config.c_max, config.policy)
    if store is not None:
        for uri in result.payload_uris:
            store.delete(uri)
    return MaintenanceReport(run, config.policy, result.ids, before,
                             [len(shards[n]) for n in nodes], time.perf_counter() - t0)


class Maintainer:
    """Triggers maintenance every ``period`` requests and keeps the run log."""

    def __init__(self, config: MaintenanceConfig, log_path=None):
        self.config = config
        self.log_path = log_path
        self.runs = 0
        self.reports: list[MaintenanceReport] = []

    def due(self, request_counter: int) -> bool:
        return request_counter > 0 and request_counter % self.config.period == 0

    def maybe_run(self, shards: Mapping[str, Shard], request_counter: int, store=None):
        if not self.due(request_counter):
            return None
        return self.run_now(shards, store)

    def run_now(self, shards: Mapping[str, Shard], store=None) -> MaintenanceReport:
        self.runs += 1
        report = run_maintenance(shards, self.config, self.runs, store)
        self.reports.append(report)
        if self.log_path is not None:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(report.log_record(), separators=(",", ":")) + "\n")
        return report
