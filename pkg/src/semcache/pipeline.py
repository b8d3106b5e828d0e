"""The request path shared by the simulator and the HTTP service.

optimize prompt -> embed -> schedule (history / quality / semantic)
-> decide on the chosen node -> execute -> periodic maintenance.
"""
from __future__ import annotations

import math
import threading
from contextlib import ExitStack
from dataclasses import dataclass
from typing import Mapping

from .config import SystemConfig
from .dispatcher import (DispatchDecision, LatencyParams, Mode, ReferenceScorer, SimulatedGenerator,
                         decide, execute)
from .embedding import HashEmbedder
from .maintenance import Maintainer
from .optimizer import restructure
from .payloads import MemoryPayloadStore
from .scheduler import PromptHistory, Reason, Scheduler
from .store import Shard


@dataclass(frozen=True)
class RequestOutcome:
    node: str
    mode: Mode
    reason: Reason
    score: float
    match_score: float
    latency: float
    gpu_seconds: float
    payload_uri: str
    entry_id: int | None
    prompt: str


class Pipeline:
    def __init__(self, config: SystemConfig, shards: Mapping[str, Shard], *, embedder=None, scorer=None,
                 generator=None, store=None, importance=None, maintenance_log=None):
        missing = set(config.node_ids) - set(shards)
        for node_id in sorted(missing):
            shards = dict(shards)
            shards[node_id] = Shard(node_id, config.dim, config.profile(node_id).capacity_hint)
        self.config = config
        self.shards = shards
        self.embedder = embedder or HashEmbedder(config.dim, config.seed, config.image_noise)
        self.scorer = scorer or ReferenceScorer()
        self.generator = generator or SimulatedGenerator(config.N, config.generator_jitter, config.seed)
        self.store = store if store is not None else MemoryPayloadStore()
        self.importance = importance
        self.history = PromptHistory(config.history_capacity, config.reuse_threshold, config.repeat_threshold)
        self.scheduler = Scheduler(shards, config.nodes, self.history, config.representation)
        self.maintainer = Maintainer(config.maintenance, maintenance_log)
        self.params = {n.node_id: LatencyParams.from_profile(n, config.K, config.N) for n in config.nodes}
        self.counter = 0
        ids = [eid for s in shards.values() for eid in s.ids()]
        self._next_id = max(ids) + 1 if ids else 0
        for s in shards.values():
            for e in s:
                if not self.store.exists(e.payload_uri):
                    self.store.adopt(e.payload_uri)
        self._state_lock = threading.Lock()
        self._node_locks = {n: threading.Lock() for n in shards}

    def _prepare(self, prompt: str):
        text = restructure(prompt, self.importance) if self.config.optimizer else prompt
        return text, self.embedder.embed_text(text)

    def handle(self, prompt: str, quality: bool = False) -> RequestOutcome:
        text, vec = self._prepare(prompt)
        with self._state_lock:
            sched = self.scheduler.schedule(vec, quality)
            entry_id = self._next_id
            self._next_id += 1
            tick = self.counter
        node = sched.node_id
        with self._node_locks[node]:
            shard = self.shards[node]
            reason = sched.reason
            if reason == Reason.HISTORY_REUSE and sched.result_id not in shard:
                # evicted between scheduling and execution
                reason = Reason.SEMANTIC_MATCH
            if reason == Reason.HISTORY_REUSE:
                decision = DispatchDecision(Mode.RETURN_CACHED, sched.result_id, sched.match_score)
            elif reason == Reason.QUALITY_PRIORITY:
                decision = DispatchDecision(Mode.TEXT_TO_IMAGE, None, sched.match_score)
            else:
                decision = decide(vec, shard, self.config.k, self.config.thresholds, self.scorer, text)
            result = execute(decision, text, vec, self.generator, shard, self.store, self.params[node],
                             entry_id, tick, seed=self.config.seed * 1_000_003 + tick)
        score = decision.best_score if math.isfinite(decision.best_score) else 0.0
        with self._state_lock:
            if reason != Reason.HISTORY_REUSE:
                self.history.record(vec, result.entry_id, node, result.payload_uri)
            self.counter += 1
            counter = self.counter
        if self.maintainer.due(counter):
            self.maintain()
        return RequestOutcome(node, decision.mode, reason, score, sched.match_score, result.latency,
                              result.gpu_seconds, result.payload_uri, result.entry_id, text)

    def probe(self, prompt: str, quality: bool = False) -> tuple[str, DispatchDecision]:
        """Route and decide without executing, recording or touching anything."""
        text, vec = self._prepare(prompt)
        with self._state_lock:
            sched = self.scheduler.schedule(vec, quality)
        with self._node_locks[sched.node_id]:
            shard = self.shards[sched.node_id]
            if sched.reason == Reason.HISTORY_REUSE and sched.result_id in shard:
                return sched.node_id, DispatchDecision(Mode.RETURN_CACHED, sched.result_id, sched.match_score)
            if sched.reason == Reason.QUALITY_PRIORITY:
                return sched.node_id, DispatchDecision(Mode.TEXT_TO_IMAGE, None, sched.match_score)
            return sched.node_id, decide(vec, shard, self.config.k, self.config.thresholds, self.scorer, text)

    def maintain(self):
        with ExitStack() as stack:
            for n in sorted(self._node_locks):
                stack.enter_context(self._node_locks[n])
            return self.maintainer.run_now(self.shards, self.store)

    def total_entries(self) -> int:
        return sum(len(s) for s in self.shards.values())
