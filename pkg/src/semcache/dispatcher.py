"""Similarity-threshold dispatch between cached return, image-to-image and text-to-image.

The latency model charges every request the retrieval time plus exactly one
of: return transfer, noising plus K denoising steps, or N denoising steps.
"""
from __future__ import annotations

import enum
import hashlib
import time
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .embedding import Embedding, Modality, _seeded_rng, cosine_similarity, l2_normalize, perturb
from .errors import BackendFailure, InvalidParameter
from .store import CacheEntry, Shard


class Mode(str, enum.Enum):
    RETURN_CACHED = "return_cached"
    IMAGE_TO_IMAGE = "image_to_image"
    TEXT_TO_IMAGE = "text_to_image"

    @property
    def flags(self) -> tuple[int, int, int]:
        """One-hot (x, y, z) indicator triple."""
        return {
            Mode.RETURN_CACHED: (1, 0, 0),
            Mode.IMAGE_TO_IMAGE: (0, 1, 0),
            Mode.TEXT_TO_IMAGE: (0, 0, 1),
        }[self]


@dataclass(frozen=True)
class Thresholds:
    hi: float = 0.5
    lo: float = 0.4

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise InvalidParameter(f"thresholds need 0 <= lo < hi <= 1, got lo={self.lo} hi={self.hi}")


@dataclass(frozen=True)
class DispatchDecision:
    mode: Mode
    reference_id: int | None
    best_score: float

    def __post_init__(self):
        if self.mode in (Mode.RETURN_CACHED, Mode.IMAGE_TO_IMAGE) and self.reference_id is None:
            raise InvalidParameter(f"{self.mode.value} needs a reference entry")

    @property
    def flags(self) -> tuple[int, int, int]:
        return self.mode.flags


@dataclass(frozen=True)
class LatencyParams:
    t_retrieve: float = 0.10
    t_return: float = 0.03
    t_noise: float = 0.05
    t_step: float = 0.0448
    K: int = 20
    N: int = 50

    def __post_init__(self):
        for name in ("t_retrieve", "t_return", "t_noise", "t_step"):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"{name} must be >= 0")
        if not (0 <= self.K < self.N):
            raise InvalidParameter(f"need 0 <= K < N, got K={self.K} N={self.N}")

    @classmethod
    def from_profile(cls, profile, K: int = 20, N: int = 50) -> "LatencyParams":
        return cls(profile.t_retrieve, profile.t_return, profile.t_noise, profile.t_step, K, N)


def request_latency(decision, params: LatencyParams) -> float:
    mode = decision.mode if isinstance(decision, DispatchDecision) else Mode(decision)
    x, y, z = mode.flags
    p = params
    return p.t_retrieve + x * p.t_return + y * (p.t_noise + p.K * p.t_step) + z * p.N * p.t_step


def gpu_seconds(decision, params: LatencyParams) -> float:
    """The generation terms of the latency model (the part billed as GPU time)."""
    mode = decision.mode if isinstance(decision, DispatchDecision) else Mode(decision)
    _, y, z = mode.flags
    p = params
    return y * (p.t_noise + p.K * p.t_step) + z * p.N * p.t_step


class ScorerBackend(Protocol):
    def score(self, prompt: str, prompt_vec: Embedding, entry: CacheEntry) -> tuple[float, float]: ...


class ReferenceScorer:
    """Cosine against the entry's image vector and its caption vector."""

    def score(self, prompt: str, prompt_vec: Embedding, entry: CacheEntry) -> tuple[float, float]:
        return cosine_similarity(prompt_vec, entry.image_vec), cosine_similarity(prompt_vec, entry.text_vec)


def composite_score(prompt_vec: Embedding, entry: CacheEntry, scorer: ScorerBackend | None = None,
                    prompt: str = "") -> float:
    """Sum of the two relevance components, halved onto the cosine scale."""
    clip_like, pick_like = (scorer or ReferenceScorer()).score(prompt, prompt_vec, entry)
    return (clip_like + pick_like) / 2.0


def decide(prompt_vec: Embedding, shard: Shard, k: int = 5, thresholds: Thresholds = Thresholds(),
           scorer: ScorerBackend | None = None, prompt: str = "") -> DispatchDecision:
    scorer = scorer or ReferenceScorer()
    best_id, best = None, -np.inf
    for eid in shard.dual_retrieve(prompt_vec, k):
        s = composite_score(prompt_vec, shard.get(eid), scorer, prompt)
        if s > best or (s == best and eid < best_id):
            best_id, best = eid, s
    if best_id is None:
        return DispatchDecision(Mode.TEXT_TO_IMAGE, None, float("-inf"))
    if best > thresholds.hi:
        return DispatchDecision(Mode.RETURN_CACHED, best_id, best)
    if best >= thresholds.lo:
        return DispatchDecision(Mode.IMAGE_TO_IMAGE, best_id, best)
    return DispatchDecision(Mode.TEXT_TO_IMAGE, None, best)


@dataclass(frozen=True)
class GenerationResult:
    payload: bytes
    image_vec: Embedding
    text_vec: Embedding
    steps: int
    payload_uri: str | None = None


class GeneratorBackend(Protocol):
    simulated: bool

    def text_to_image(self, prompt: str, prompt_vec: Embedding, steps: int, seed: int) -> GenerationResult: ...

    def image_to_image(self, prompt: str, prompt_vec: Embedding, reference: CacheEntry, steps: int,
                       seed: int) -> GenerationResult: ...


class SimulatedGenerator:
    """Deterministic fake diffusion backend.

    The payload is a digest of (mode, prompt, reference, seed, steps). The
    output image vector is the prompt vector (with seeded jitter) for
    text-to-image; for image-to-image it leans toward the reference by
    (N - K) / N, the fraction of the schedule the reference survives.
    """

    simulated = True

    def __init__(self, total_steps: int = 50, jitter: float = 1.2, seed: int = 0):
        self.total_steps = total_steps
        self.jitter = jitter
        self.seed = seed

    @staticmethod
    def _digest(*parts) -> bytes:
        h = hashlib.sha256("\x1f".join(map(str, parts)).encode("utf-8")).hexdigest()
        return b"SIMIMG\x00" + h.encode("ascii")

    def _image_vec(self, base: np.ndarray, *key) -> Embedding:
        if self.jitter <= 0:
            return l2_normalize(base, Modality.IMAGE)
        return perturb(base, self.jitter, _seeded_rng(self.seed, *key), Modality.IMAGE)

    def text_to_image(self, prompt, prompt_vec, steps, seed):
        payload = self._digest("t2i", prompt, seed, steps)
        img = self._image_vec(prompt_vec.values, "t2i", prompt, seed)
        return GenerationResult(payload, img, Embedding(prompt_vec.values, Modality.TEXT), steps)

    def image_to_image(self, prompt, prompt_vec, reference, steps, seed):
        payload = self._digest("i2i", prompt, reference.id, seed, steps)
        keep = (self.total_steps - steps) / self.total_steps
        blended = (1.0 - keep) * prompt_vec.values + keep * reference.image_vec.values
        img = self._image_vec(blended, "i2i", prompt, reference.id, seed)
        return GenerationResult(payload, img, Embedding(prompt_vec.values, Modality.TEXT), steps)


@dataclass(frozen=True)
class ExecutionResult:
    decision: DispatchDecision
    payload_uri: str
    latency: float
    gpu_seconds: float
    entry_id: int | None
    steps: int


def execute(decision: DispatchDecision, prompt: str, prompt_vec: Embedding, backend: GeneratorBackend,
            shard: Shard, store, params: LatencyParams, new_id: int, tick: int = 0,
            seed: int = 0) -> ExecutionResult:
    """Carry out a dispatch decision on one node.

    Generated images are inserted into ``shard`` under ``new_id`` and their
    payload written to ``store``. Latency comes from the latency model for a
    simulated backend and from the wall clock otherwise.
    """
    start = time.perf_counter()
    if decision.mode == Mode.RETURN_CACHED:
        entry = shard.get(decision.reference_id)
        entry.touch(tick)
        return ExecutionResult(decision, entry.payload_uri, request_latency(decision, params),
                               0.0, entry.id, 0)
    try:
        if decision.mode == Mode.IMAGE_TO_IMAGE:
            ref = shard.get(decision.reference_id)
            ref.touch(tick)
            out = backend.image_to_image(prompt, prompt_vec, ref, params.K, seed)
        else:
            out = backend.text_to_image(prompt, prompt_vec, params.N, seed)
    except Exception as exc:
        raise BackendFailure(str(exc), mode=decision.mode.value, reference_id=decision.reference_id,
                             prompt=prompt) from exc
    uri = out.payload_uri or store.put(f"gen-{new_id:08d}.img", out.payload)
    shard.insert(CacheEntry(new_id, out.image_vec, out.text_vec, uri, prompt, tick, tick, 0))
    if getattr(backend, "simulated", False):
        latency = request_latency(decision, params)
    else:
        latency = params.t_retrieve + (time.perf_counter() - start)
    return ExecutionResult(decision, uri, latency, gpu_seconds(decision, params), new_id, out.steps)
