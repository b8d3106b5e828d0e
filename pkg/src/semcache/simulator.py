"""Deterministic trace replay over a modeled edge cluster.

Latencies come from the latency model only; the per-node queue (one
generation in flight per node) affects completion times, and through them
the simulated span, but never the recorded request latency.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .cluster import NodeProfile
from .config import SystemConfig
from .dispatcher import LatencyParams, Mode, gpu_seconds, request_latency
from .errors import ConfigError, NonMonotonicArrivals, ParseError
from .pipeline import Pipeline
from .scheduler import Reason
from .store import Shard


@dataclass(frozen=True)
class TraceRequest:
    id: str
    arrival: float
    prompt: str
    user: str = ""
    quality: bool = False

    def to_record(self) -> dict:
        return {"id": self.id, "t": self.arrival, "prompt": self.prompt, "user": self.user,
                "quality": self.quality}


def load_trace(path) -> list[TraceRequest]:
    path = Path(path)
    out: list[TraceRequest] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                req = TraceRequest(str(rec["id"]), float(rec["t"]), str(rec["prompt"]),
                                   str(rec.get("user", "")), bool(rec.get("quality", False)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(path, line_no, f"bad trace record: {exc}") from exc
            if not req.prompt.strip():
                raise ParseError(path, line_no, "empty prompt")
            if out and req.arrival < out[-1].arrival:
                raise NonMonotonicArrivals(f"{path}:{line_no}: arrival {req.arrival} < {out[-1].arrival}")
            out.append(req)
    return out


def write_trace(path, trace: Iterable[TraceRequest]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for req in trace:
            fh.write(json.dumps(req.to_record(), separators=(",", ":")) + "\n")


@dataclass(frozen=True)
class RequestRecord:
    request_id: str
    node: str
    mode: Mode
    reason: str
    score: float
    latency: float
    gpu_seconds: float
    arrival: float
    finish: float
    wait: float

    @property
    def hit(self) -> bool:
        return self.mode in (Mode.RETURN_CACHED, Mode.IMAGE_TO_IMAGE)


@dataclass
class SimulationReport:
    label: str
    records: list[RequestRecord]
    params: dict[str, LatencyParams]
    period: int
    policy: str
    uses_vdb: bool = True
    maintenance_log: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def mode_counts(self) -> dict[str, int]:
        counts = {m.value: 0 for m in Mode}
        for r in self.records:
            counts[r.mode.value] += 1
        return counts

    @property
    def latencies(self) -> list[float]:
        return [r.latency for r in self.records]

    @property
    def mean_latency(self) -> float:
        return sum(self.latencies) / len(self.records) if self.records else 0.0

    @property
    def span(self) -> float:
        if not self.records:
            return 0.0
        return max(r.finish for r in self.records) - min(r.arrival for r in self.records)

    @property
    def throughput(self) -> float:
        span = self.span
        return len(self.records) / span if span > 0 else 0.0

    def hit_rates(self) -> list[tuple[int, float]]:
        """Hit rate over each window of ``period`` consecutive requests."""
        out = []
        for c, start in enumerate(range(0, len(self.records), self.period), 1):
            window = self.records[start:start + self.period]
            out.append((c, sum(r.hit for r in window) / len(window)))
        return out


class _NodeQueues:
    def __init__(self):
        self.free_at: dict[str, float] = {}

    def admit(self, node: str, arrival: float, latency: float, params: LatencyParams, gpu: float):
        """Return (finish, wait); only generation work occupies the node."""
        if gpu <= 0:
            return arrival + latency, 0.0
        ready = arrival + params.t_retrieve
        start = max(ready, self.free_at.get(node, 0.0))
        self.free_at[node] = start + gpu
        return arrival + latency + (start - ready), start - ready


def run(trace: Sequence[TraceRequest], config: SystemConfig, shards: Mapping[str, Shard] | None = None,
        seed: int | None = None, label: str = "cache", **pipeline_kwargs) -> SimulationReport:
    """Replay ``trace`` through the full caching pipeline, single-threaded."""
    if not config.nodes:
        raise ConfigError("nodes: at least one node is required")
    if seed is not None:
        config = config.with_(seed=seed)
    shards = shards if shards is not None else {n.node_id: Shard(n.node_id, config.dim) for n in config.nodes}
    unknown = set(shards) - set(config.node_ids)
    if unknown:
        raise ConfigError(f"nodes: shards for unknown nodes {sorted(unknown)}")
    pipe = Pipeline(config, shards, **pipeline_kwargs)
    queues = _NodeQueues()
    records = []
    for req in trace:
        out = pipe.handle(req.prompt, req.quality)
        params = pipe.params[out.node]
        finish, wait = queues.admit(out.node, req.arrival, out.latency, params, out.gpu_seconds)
        records.append(RequestRecord(req.id, out.node, out.mode, out.reason.value, out.score, out.latency,
                                     out.gpu_seconds, req.arrival, finish, wait))
    return SimulationReport(label, records, dict(pipe.params), config.maintenance.period,
                            config.maintenance.policy.value, True,
                            [r.log_record() for r in pipe.maintainer.reports])


def run_baseline(trace: Sequence[TraceRequest], config: SystemConfig, label: str = "baseline") -> SimulationReport:
    """Every request generated from noise, round-robin over nodes, with no vector database."""
    params = {n.node_id: LatencyParams(0.0, n.t_return, n.t_noise, n.t_step, config.K, config.N)
              for n in config.nodes}
    nodes = config.node_ids
    queues = _NodeQueues()
    records = []
    for i, req in enumerate(trace):
        node = nodes[i % len(nodes)]
        p = params[node]
        lat = request_latency(Mode.TEXT_TO_IMAGE, p)
        gpu = gpu_seconds(Mode.TEXT_TO_IMAGE, p)
        finish, wait = queues.admit(node, req.arrival, lat, p, gpu)
        records.append(RequestRecord(req.id, node, Mode.TEXT_TO_IMAGE, Reason.SEMANTIC_MATCH.value, 0.0,
                                     lat, gpu, req.arrival, finish, wait))
    return SimulationReport(label, records, params, config.maintenance.period, "none", False)


def profiles_by_id(profiles: Iterable[NodeProfile]) -> dict[str, NodeProfile]:
    return {p.node_id: p for p in profiles}
