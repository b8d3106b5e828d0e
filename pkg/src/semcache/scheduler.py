"""Semantic request routing across edge nodes."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embedding import Embedding, dot_rows
from .errors import DegenerateRepresentation, EmptyShard, NoNodesAvailable
from .store import Shard

_DEGENERATE = 1e-12


class Reason(str, enum.Enum):
    SEMANTIC_MATCH = "semantic_match"
    QUALITY_PRIORITY = "quality_priority"
    HISTORY_REUSE = "history_reuse"


class RepresentationMode(str, enum.Enum):
    JOINT = "joint"
    IMAGE = "image"


@dataclass(frozen=True)
class NodeRepresentation:
    node_id: str
    repr_vec: np.ndarray

    @cached_property
    def norm(self) -> float:
        return float(np.linalg.norm(self.repr_vec))

    @property
    def degenerate(self) -> bool:
        return self.norm < _DEGENERATE


@dataclass(frozen=True)
class ScheduleDecision:
    node_id: str
    reason: Reason
    match_score: float
    result_id: int | None = None
    payload_uri: str | None = None


def node_representation(shard: Shard, mode: RepresentationMode = RepresentationMode.JOINT) -> NodeRepresentation:
    """Mean of the vectors held by a shard, from its running sums."""
    n = len(shard)
    if n == 0:
        raise EmptyShard(f"shard {shard.node_id} is empty")
    if RepresentationMode(mode) == RepresentationMode.IMAGE:
        vec = shard.img_sum / n
    else:
        vec = (shard.img_sum + shard.txt_sum) / (2 * n)
    return NodeRepresentation(shard.node_id, vec.copy())


def s_match(v_p, rep: NodeRepresentation) -> float:
    """Cosine between the prompt vector and a node's (un-normalized) representation."""
    v = v_p.values if isinstance(v_p, Embedding) else np.asarray(v_p, dtype=np.float64)
    rn = rep.norm
    if rn < _DEGENERATE:
        raise DegenerateRepresentation(f"node {rep.node_id} has a near-zero representation")
    return float(np.dot(v, rep.repr_vec) / (np.linalg.norm(v) * rn))


def select_node(v_p, representations: Iterable[NodeRepresentation]) -> ScheduleDecision:
    best: tuple[float, str] | None = None
    for rep in representations:
        if rep.degenerate:
            continue
        score = s_match(v_p, rep)
        if best is None or score > best[0] or (score == best[0] and rep.node_id < best[1]):
            best = (score, rep.node_id)
    if best is None:
        raise NoNodesAvailable("no node has a usable representation")
    return ScheduleDecision(best[1], Reason.SEMANTIC_MATCH, best[0])


@dataclass(frozen=True)
class HistoryItem:
    embedding: Embedding
    result_id: int
    node_id: str
    payload_uri: str


class PromptHistory:
    """Bounded ring of recent prompt embeddings and the results they produced."""

    def __init__(self, capacity: int = 1024, reuse_threshold: float = 0.99,
                 repeat_threshold: float = 0.95):
        if capacity < 1:
            raise ValueError("history capacity must be >= 1")
        if not (0.0 <= repeat_threshold <= reuse_threshold <= 1.0):
            raise ValueError("need 0 <= repeat_threshold <= reuse_threshold <= 1")
        self.capacity = capacity
        self.reuse_threshold = reuse_threshold
        self.repeat_threshold = repeat_threshold
        self._items: list[HistoryItem | None] = [None] * capacity
        self._mat: np.ndarray | None = None
        self._seq = np.full(capacity, -1, dtype=np.int64)
        self._next = 0

    def __len__(self) -> int:
        return int(min(self._next, self.capacity))

    def items(self) -> list[HistoryItem]:
        order = np.argsort(self._seq)
        return [self._items[i] for i in order if self._seq[i] >= 0]

    def record(self, embedding: Embedding, result_id: int, node_id: str, payload_uri: str = "") -> None:
        if self._mat is None:
            self._mat = np.zeros((self.capacity, embedding.dim))
        slot = self._next % self.capacity
        self._items[slot] = HistoryItem(embedding, result_id, node_id, payload_uri)
        self._mat[slot] = embedding.values
        self._seq[slot] = self._next
        self._next += 1

    def best(self, v_p: Embedding, valid=None, floor: float = -np.inf) -> tuple[float, HistoryItem | None]:
        """Highest cosine among (valid) items at or above ``floor``; the newest wins ties."""
        if self._mat is None:
            return -np.inf, None
        n = len(self)
        sims = dot_rows(self._mat[:n], v_p.values)
        cand = np.nonzero(sims >= floor)[0] if np.isfinite(floor) else np.arange(n)
        seq = self._seq[cand]
        for j in np.lexsort((-seq, -sims[cand])):
            item = self._items[cand[j]]
            if valid is None or valid(item):
                return float(sims[cand[j]]), item
        return -np.inf, None


def fastest_node(profiles: Sequence) -> str:
    """Node with the smallest per-step time; ties go to the smaller node id."""
    if not profiles:
        raise NoNodesAvailable("empty node set")
    return min(profiles, key=lambda p: (p.t_step, p.node_id)).node_id


def check_history(v_p: Embedding, history: PromptHistory, profiles: Sequence,
                  quality: bool = False, valid=None) -> ScheduleDecision | None:
    """Reuse a past result, or force quality routing for a repeated prompt.

    A quality-flagged request never gets a recycled image; once it is
    recognised as a repeat it goes to the fastest node for a fresh generation.
    """
    score, item = history.best(v_p, valid, floor=history.repeat_threshold)
    if item is None:
        return None
    if score >= history.reuse_threshold and not quality:
        return ScheduleDecision(item.node_id, Reason.HISTORY_REUSE, score, item.result_id, item.payload_uri)
    if score >= history.repeat_threshold:
        return ScheduleDecision(fastest_node(profiles), Reason.QUALITY_PRIORITY, score)
    return None


class Scheduler:
    """Routes prompts over a federation of shards, caching representations per shard version."""

    def __init__(self, shards: Mapping[str, Shard], profiles: Sequence,
                 history: PromptHistory | None = None,
                 mode: RepresentationMode = RepresentationMode.JOINT):
        self.shards = shards
        self.profiles = list(profiles)
        self.history = history if history is not None else PromptHistory()
        self.mode = RepresentationMode(mode)
        self._cache: dict[str, tuple[int, NodeRepresentation]] = {}

    def representation(self, node_id: str) -> NodeRepresentation | None:
        shard = self.shards[node_id]
        if len(shard) == 0:
            return None
        hit = self._cache.get(node_id)
        if hit is not None and hit[0] == shard.version:
            return hit[1]
        rep = node_representation(shard, self.mode)
        self._cache[node_id] = (shard.version, rep)
        return rep

    def representations(self) -> list[NodeRepresentation]:
        reps = (self.representation(n) for n in sorted(self.shards))
        return [r for r in reps if r is not None]

    def _live(self, item: HistoryItem) -> bool:
        shard = self.shards.get(item.node_id)
        return shard is not None and item.result_id in shard

    def schedule(self, v_p: Embedding, quality: bool = False) -> ScheduleDecision:
        hit = check_history(v_p, self.history, self.profiles, quality, valid=self._live)
        if hit is not None:
            return hit
        try:
            return select_node(v_p, self.representations())
        except NoNodesAvailable:
            # nothing cached anywhere yet: fall back to the fastest node
            return ScheduleDecision(fastest_node(self.profiles), Reason.SEMANTIC_MATCH, 0.0)
