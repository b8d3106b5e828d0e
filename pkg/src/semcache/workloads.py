"""Synthetic workloads: the clustered caption corpus, Poisson prompt traces and the
clustered-drift eviction benchmark.

Captions are built from per-topic vocabularies. Every caption of a topic
carries the topic's anchor words plus one word from each of several slots,
so two captions of one topic share about half their tokens and captions of
different topics share almost none.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cluster import NodeProfile, gpu_node
from .embedding import EmbedderBackend
from .errors import ParseError
from .simulator import TraceRequest
from .store import CacheEntry

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st", "tr", "sh"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "n", "r", "l", "s", "m", "th", "x"]


def _word(rng: np.random.Generator, syllables: int = 3) -> str:
    def pick(seq):
        return seq[int(rng.integers(len(seq)))]

    return "".join(pick(_ONSETS) + pick(_VOWELS) + (pick(_CODAS) if i == syllables - 1 else "")
                   for i in range(syllables))


@dataclass(frozen=True)
class Topic:
    anchors: tuple[str, ...]
    slots: tuple[tuple[str, ...], ...]

    def caption(self, rng: np.random.Generator) -> str:
        words = [s[int(rng.integers(len(s)))] for s in self.slots]
        half = len(words) // 2
        return f"{' '.join(words[:half])}, {' '.join(self.anchors)}, {' '.join(words[half:])}"


def make_topics(n_topics: int, seed: int, n_anchors: int = 3, n_slots: int = 5,
                slot_vocab: int = 30) -> list[Topic]:
    rng = np.random.default_rng(seed)
    seen: set[str] = set()

    def fresh() -> str:
        while True:
            w = _word(rng)
            if w not in seen:
                seen.add(w)
                return w

    return [
        Topic(tuple(fresh() for _ in range(n_anchors)),
              tuple(tuple(fresh() for _ in range(slot_vocab)) for _ in range(n_slots)))
        for _ in range(n_topics)
    ]


@dataclass(frozen=True)
class WorkloadSpec:
    """Knobs of the reference workload (defaults are the calibrated reference)."""

    n_topics: int = 8
    n_corpus: int = 5000
    n_requests: int = 5000
    rate: float = 12.0
    repeat_frac: float = 0.09
    novel_frac: float = 0.26
    repeat_window: int = 400
    n_anchors: int = 4
    n_slots: int = 6
    slot_vocab: int = 200
    seed: int = 2024


def reference_corpus(spec: WorkloadSpec = WorkloadSpec()) -> list[dict]:
    topics = make_topics(spec.n_topics, spec.seed, spec.n_anchors, spec.n_slots, spec.slot_vocab)
    rng = np.random.default_rng(spec.seed + 1)
    out = []
    for i in range(spec.n_corpus):
        t = topics[i % len(topics)]
        out.append({"caption": t.caption(rng), "payload_uri": f"corpus/{i:06d}.img"})
    return out


def reference_trace(spec: WorkloadSpec = WorkloadSpec()) -> list[TraceRequest]:
    """Poisson arrivals. Each prompt is an exact repeat of a recent prompt, a one-off
    prompt of unseen words, or a fresh caption from one of the corpus topics."""
    topics = make_topics(spec.n_topics, spec.seed, spec.n_anchors, spec.n_slots, spec.slot_vocab)
    n_words = spec.n_anchors + spec.n_slots
    rng = np.random.default_rng(spec.seed + 2)
    t = 0.0
    prompts: list[str] = []
    trace = []
    for i in range(spec.n_requests):
        t += float(rng.exponential(1.0 / spec.rate))
        u = float(rng.random())
        if prompts and u < spec.repeat_frac:
            lo = max(0, len(prompts) - spec.repeat_window)
            prompt = prompts[int(rng.integers(lo, len(prompts)))]
        elif u < spec.repeat_frac + spec.novel_frac:
            prompt = " ".join(_word(rng) for _ in range(n_words))
        else:
            prompt = topics[int(rng.integers(len(topics)))].caption(rng)
        prompts.append(prompt)
        trace.append(TraceRequest(f"r{i:05d}", round(t, 6), prompt, f"u{int(rng.integers(50)):02d}", False))
    return trace


def reference_cluster() -> list[NodeProfile]:
    """Eight nodes priced by GPU tier (3x 4090 D, 1x 3090, 4x 2070), all at the calibrated step time."""
    tiers = ["rtx4090d"] * 3 + ["rtx3090"] + ["rtx2070"] * 4
    return [gpu_node(f"node-{i}", g, heterogeneous=False, capacity_hint=len(tiers) - i)
            for i, g in enumerate(tiers)]


def read_corpus(path) -> list[dict]:
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                caption, uri = rec["caption"], rec["payload_uri"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(path, line_no, f"bad corpus record: {exc}") from exc
            if not isinstance(caption, str) or not caption.strip():
                raise ParseError(path, line_no, "empty caption")
            out.append({"caption": caption, "payload_uri": str(uri)})
    return out


def write_jsonl(path, records: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def ingest(records: Sequence[dict], embedder: EmbedderBackend, start_id: int = 0) -> list[CacheEntry]:
    """Embed caption/payload records into cache entries with sequential ids."""
    out = []
    for i, rec in enumerate(records):
        txt = embedder.embed_text(rec["caption"])
        img = embedder.embed_image(rec["payload_uri"], caption=rec["caption"])
        out.append(CacheEntry(start_id + i, img, txt, rec["payload_uri"], rec["caption"], 0, 0, 0))
    return out


def reference_config(**changes):
    """System config used for the reference latency and cost runs."""
    from .config import SystemConfig
    from .maintenance import MaintenanceConfig

    base = SystemConfig(nodes=tuple(reference_cluster()),
                        maintenance=MaintenanceConfig(c_max=6000, period=500))
    return base.with_(**changes) if changes else base


def reference_shards(config, spec: WorkloadSpec = WorkloadSpec()):
    """Embed the reference corpus and partition it over ``config.nodes``."""
    from .classifier import partition_dataset
    from .embedding import HashEmbedder

    emb = HashEmbedder(config.dim, config.seed, config.image_noise)
    entries = ingest(reference_corpus(spec), emb)
    return partition_dataset(entries, config.node_ids, seed=config.seed,
                             capacity={n.node_id: n.capacity_hint for n in config.nodes})
