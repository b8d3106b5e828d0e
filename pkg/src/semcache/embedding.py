"""Embedding vectors, similarity math and the deterministic mock embedder.

Every vector that is stored or queried goes through :func:`l2_normalize`, so
similarity everywhere else in the package is a plain dot product.
"""
from __future__ import annotations

import base64
import enum
import hashlib
import json
import re
import urllib.request
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, InvalidParameter, ZeroVector

DEFAULT_DIM = 512
_ZERO_NORM = 1e-12
_UNIT_TOL = 1e-6


class Modality(str, enum.Enum):
    TEXT = "text"
    IMAGE = "image"


@dataclass(frozen=True, eq=False)
class Embedding:
    """Immutable unit-norm vector tagged with the modality it came from."""

    values: np.ndarray
    modality: Modality = Modality.TEXT

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise DimensionMismatch(f"embedding must be 1-D, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def is_unit(self, tol: float = _UNIT_TOL) -> bool:
        return abs(float(np.linalg.norm(self.values)) - 1.0) <= tol

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.modality == other.modality and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.modality, self.values.tobytes()))


def l2_normalize(v, modality: Modality = Modality.TEXT) -> Embedding:
    if isinstance(v, Embedding):
        modality = v.modality
        v = v.values
    arr = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm < _ZERO_NORM:
        raise ZeroVector("cannot normalize a vector with L2 norm below 1e-12")
    return Embedding(arr / norm, modality)


def _as_array(v) -> np.ndarray:
    return v.values if isinstance(v, Embedding) else np.asarray(v, dtype=np.float64)


def cosine_similarity(a, b) -> float:
    """Dot product of two unit embeddings (equal to their cosine)."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"dimension {x.shape[0]} vs {y.shape[0]}")
    return float(np.einsum("j,j->", x, y))


def dot_rows(matrix: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise dot products, bit-identical to :func:`cosine_similarity` on each row.

    BLAS matrix-vector products may round rows differently depending on their
    position, which would make similarity ties (and so tie-breaks) unstable.
    """
    return np.einsum("ij,j->i", matrix, v)


_TOKEN_STRIP = ".,;:!?\"'()[]{}"
_SPLIT = re.compile(r"\s+")


def tokenize(text: str) -> list[str]:
    tokens = []
    for raw in _SPLIT.split(text.strip().lower()):
        tok = raw.strip(_TOKEN_STRIP)
        if tok:
            tokens.append(tok)
    return tokens


@lru_cache(maxsize=65536)
def _token_vector(token: str, seed: int, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}\x00{token}".encode("utf-8"), digest_size=16).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
    vec = rng.integers(0, 2, size=dim).astype(np.float64) * 2.0 - 1.0
    vec.setflags(write=False)
    return vec


@lru_cache(maxsize=32768)
def hash_embed(text: str, modality: Modality = Modality.TEXT, seed: int = 0,
               dim: int = DEFAULT_DIM) -> Embedding:
    """Bag-of-tokens embedding: one seeded +/-1 vector per token, summed, normalized.

    Strings that share tokens have positive expected cosine; the construction
    is stable across processes because it only depends on blake2b.
    """
    tokens = tokenize(text) if isinstance(text, str) else []
    if not tokens:
        raise EmptyInput("hash_embed needs at least one token")
    acc = np.zeros(dim)
    for tok in tokens:
        acc += _token_vector(tok, seed, dim)
    return l2_normalize(acc, modality)


def _seeded_rng(*parts) -> np.random.Generator:
    digest = hashlib.blake2b("\x00".join(map(str, parts)).encode("utf-8"), digest_size=16).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))


def random_unit(rng: np.random.Generator, dim: int, modality: Modality = Modality.TEXT) -> Embedding:
    return l2_normalize(rng.standard_normal(dim), modality)


def perturb(base, scale: float, rng: np.random.Generator,
            modality: Modality | None = None) -> Embedding:
    """normalize(base + scale * noise) with noise ~ N(0, I/D), so ||noise|| is about 1."""
    arr = _as_array(base)
    mod = modality or (base.modality if isinstance(base, Embedding) else Modality.TEXT)
    noise = rng.standard_normal(arr.shape[0]) / np.sqrt(arr.shape[0])
    return l2_normalize(arr + scale * noise, mod)


def synth_clustered_embeddings(k: int, n_per_cluster: int, spread: float, seed: int,
                               dim: int = DEFAULT_DIM,
                               modality: Modality = Modality.IMAGE):
    """Draw ``k`` separated unit centroids and ``n_per_cluster`` noisy samples of each.

    Returns a list of ``(Embedding, label)`` in cluster-major order.
    """
    if k < 1 or n_per_cluster < 1 or not (0.0 < spread < 1.0):
        raise InvalidParameter(f"need k>=1, n_per_cluster>=1, 0<spread<1; got {k}, {n_per_cluster}, {spread}")
    rng = np.random.default_rng(seed)
    centroids = _separated_centroids(k, dim, rng)
    out = []
    for label, c in enumerate(centroids):
        for _ in range(n_per_cluster):
            out.append((perturb(c, spread, rng, modality), label))
    return out


def _separated_centroids(k: int, dim: int, rng: np.random.Generator,
                         max_cos: float = 0.5, tries: int = 1000) -> list[np.ndarray]:
    chosen: list[np.ndarray] = []
    attempts = 0
    while len(chosen) < k:
        cand = rng.standard_normal(dim)
        cand /= np.linalg.norm(cand)
        attempts += 1
        # low dimensions cannot host many mutually distant directions; relax after many tries
        if attempts > tries or all(float(cand @ c) < max_cos for c in chosen):
            chosen.append(cand)
    return chosen


class EmbedderBackend(Protocol):
    dim: int

    def embed_text(self, text: str) -> Embedding: ...

    def embed_image(self, payload_ref: str, caption: str | None = None) -> Embedding: ...


class HashEmbedder:
    """Offline stand-in for a CLIP-style dual encoder.

    Image embeddings have no pixels to look at; when a caption hint is given,
    the image vector is the caption vector perturbed by noise seeded from the
    payload reference, which mimics imperfect cross-modal alignment.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0, image_noise: float = 1.2):
        self.dim = dim
        self.seed = seed
        self.image_noise = image_noise

    def embed_text(self, text: str) -> Embedding:
        return hash_embed(text, Modality.TEXT, self.seed, self.dim)

    def embed_image(self, payload_ref: str, caption: str | None = None) -> Embedding:
        if caption is None:
            return hash_embed(payload_ref, Modality.IMAGE, self.seed, self.dim)
        base = hash_embed(caption, Modality.IMAGE, self.seed, self.dim)
        if self.image_noise <= 0:
            return base
        return perturb(base, self.image_noise, _seeded_rng(self.seed, "img", payload_ref), Modality.IMAGE)


class HttpEmbedder:
    """Client for an external embedding service.

    POST ``{"kind": "text"|"image", "data": ...}`` and expect ``{"vector": [...]}``.
    The returned vector is normalized before use.
    """

    def __init__(self, url: str, dim: int = DEFAULT_DIM, timeout: float = 10.0):
        self.url = url
        self.dim = dim
        self.timeout = timeout

    def _call(self, kind: str, data: str, modality: Modality) -> Embedding:
        body = json.dumps({"kind": kind, "data": data}).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        vec = payload["vector"]
        if len(vec) != self.dim:
            raise DimensionMismatch(f"service returned {len(vec)} components, expected {self.dim}")
        return l2_normalize(vec, modality)

    def embed_text(self, text: str) -> Embedding:
        return self._call("text", text, Modality.TEXT)

    def embed_image(self, payload_ref, caption: str | None = None) -> Embedding:
        if isinstance(payload_ref, (bytes, bytearray)):
            raw = bytes(payload_ref)
        else:
            raw = Path(payload_ref).read_bytes()
        return self._call("image", base64.b64encode(raw).decode("ascii"), Modality.IMAGE)


def stack(embeddings: Sequence[Embedding]) -> np.ndarray:
    return np.vstack([e.values for e in embeddings]) if embeddings else np.zeros((0, 0))
