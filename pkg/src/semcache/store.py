"""Per-node vector shard: exact top-k retrieval over paired image/text vectors."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .embedding import Embedding, Modality, dot_rows, l2_normalize
from .errors import DimensionMismatch, DuplicateId, EmptyShard, NotFound, ParseError


@dataclass
class CacheEntry:
    id: int
    image_vec: Embedding
    text_vec: Embedding
    payload_uri: str
    caption: str = ""
    created_at: int = 0
    last_access: int = 0
    hit_count: int = 0

    def __post_init__(self):
        if self.last_access < self.created_at:
            self.last_access = self.created_at

    def touch(self, tick: int) -> None:
        self.hit_count += 1
        self.last_access = max(self.last_access, tick)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "caption": self.caption,
            "payload_uri": self.payload_uri,
            "image_vec": self.image_vec.values.tolist(),
            "text_vec": self.text_vec.values.tolist(),
            "created_at": self.created_at,
            "hit_count": self.hit_count,
            "last_access": self.last_access,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CacheEntry":
        return cls(
            id=int(rec["id"]),
            image_vec=Embedding(np.asarray(rec["image_vec"], dtype=np.float64), Modality.IMAGE),
            text_vec=Embedding(np.asarray(rec["text_vec"], dtype=np.float64), Modality.TEXT),
            payload_uri=rec["payload_uri"],
            caption=rec.get("caption", ""),
            created_at=int(rec.get("created_at", 0)),
            last_access=int(rec.get("last_access", rec.get("created_at", 0))),
            hit_count=int(rec.get("hit_count", 0)),
        )


class Shard:
    """Vector database shard for one edge node.

    Vectors live in dense row-major matrices with swap-remove, so insert and
    remove are O(D) and a query is one matrix-vector product. The running
    sums of image and text vectors back both :meth:`centroid` and the
    scheduler's node representation.
    """

    _UNIT_TOL = 1e-6

    def __init__(self, node_id: str, dim: int, capacity_hint: int = 0):
        self.node_id = node_id
        self.dim = dim
        self.capacity_hint = capacity_hint
        self._entries: dict[int, CacheEntry] = {}
        self._slot: dict[int, int] = {}
        cap = max(16, capacity_hint)
        self._ids = np.zeros(cap, dtype=np.int64)
        self._img = np.zeros((cap, dim))
        self._txt = np.zeros((cap, dim))
        self._n = 0
        self.img_sum = np.zeros(dim)
        self.txt_sum = np.zeros(dim)
        self.version = 0

    def __len__(self) -> int:
        return self._n

    def size(self) -> int:
        return self._n

    def __contains__(self, entry_id: int) -> bool:
        return entry_id in self._entries

    def __iter__(self) -> Iterator[CacheEntry]:
        return iter(self._entries.values())

    def ids(self) -> list[int]:
        return sorted(self._entries)

    def get(self, entry_id: int) -> CacheEntry:
        try:
            return self._entries[entry_id]
        except KeyError:
            raise NotFound(f"entry {entry_id} not in shard {self.node_id}") from None

    def _check_vec(self, emb: Embedding, what: str) -> None:
        if emb.dim != self.dim:
            raise DimensionMismatch(f"{what} has dimension {emb.dim}, shard expects {self.dim}")
        if not emb.is_unit(self._UNIT_TOL):
            raise DimensionMismatch(f"{what} is not unit-norm")

    def _grow(self) -> None:
        cap = self._ids.shape[0] * 2
        for name in ("_img", "_txt"):
            old = getattr(self, name)
            new = np.zeros((cap, self.dim))
            new[: self._n] = old[: self._n]
            setattr(self, name, new)
        ids = np.zeros(cap, dtype=np.int64)
        ids[: self._n] = self._ids[: self._n]
        self._ids = ids

    def insert(self, entry: CacheEntry) -> None:
        if entry.id in self._entries:
            raise DuplicateId(f"entry {entry.id} already in shard {self.node_id}")
        self._check_vec(entry.image_vec, "image_vec")
        self._check_vec(entry.text_vec, "text_vec")
        if self._n == self._ids.shape[0]:
            self._grow()
        i = self._n
        self._ids[i] = entry.id
        self._img[i] = entry.image_vec.values
        self._txt[i] = entry.text_vec.values
        self._slot[entry.id] = i
        self._entries[entry.id] = entry
        self._n += 1
        self.img_sum += entry.image_vec.values
        self.txt_sum += entry.text_vec.values
        self.version += 1

    def remove(self, entry_id: int) -> CacheEntry:
        """Drop an entry; the caller owns deleting its payload."""
        entry = self.get(entry_id)
        i = self._slot.pop(entry_id)
        last = self._n - 1
        if i != last:
            moved = int(self._ids[last])
            self._ids[i] = moved
            self._img[i] = self._img[last]
            self._txt[i] = self._txt[last]
            self._slot[moved] = i
        self._n -= 1
        del self._entries[entry_id]
        self.img_sum -= entry.image_vec.values
        self.txt_sum -= entry.text_vec.values
        if self._n == 0:
            # drop accumulated rounding error
            self.img_sum[:] = 0.0
            self.txt_sum[:] = 0.0
        self.version += 1
        return entry

    def matrix(self, modality: Modality) -> np.ndarray:
        return (self._img if modality == Modality.IMAGE else self._txt)[: self._n]

    def row_ids(self) -> np.ndarray:
        return self._ids[: self._n]

    def top_k(self, query: Embedding, modality: Modality, k: int) -> list[tuple[int, float]]:
        """Best ``k`` entries by cosine, ordered by (similarity desc, id asc)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if query.dim != self.dim:
            raise DimensionMismatch(f"query dimension {query.dim}, shard expects {self.dim}")
        if self._n == 0:
            return []
        sims = dot_rows(self.matrix(modality), query.values)
        ids = self.row_ids()
        if k < self._n:
            # keep everything tied with the k-th best so the id tie-break stays exact
            kth = np.partition(sims, self._n - k)[self._n - k]
            keep = np.nonzero(sims >= kth)[0]
            sims, ids = sims[keep], ids[keep]
        order = np.lexsort((ids, -sims))[:k]
        return [(int(ids[j]), float(sims[j])) for j in order]

    def dual_retrieve(self, query: Embedding, k: int) -> list[int]:
        """Union of the text-embedding query against image vectors and text vectors.

        Ids come back image hits first, then text hits not already present.
        """
        out: list[int] = []
        seen: set[int] = set()
        for modality in (Modality.IMAGE, Modality.TEXT):
            for eid, _ in self.top_k(query, modality, k):
                if eid not in seen:
                    seen.add(eid)
                    out.append(eid)
        return out

    def centroid(self) -> np.ndarray:
        """Un-normalized mean of the stored image vectors."""
        if self._n == 0:
            raise EmptyShard(f"shard {self.node_id} is empty")
        return self._img[: self._n].mean(axis=0)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for eid in self.ids():
                fh.write(json.dumps(self._entries[eid].to_record(), separators=(",", ":")))
                fh.write("\n")

    @classmethod
    def load(cls, path, node_id: str, dim: int | None = None, capacity_hint: int = 0) -> "Shard":
        entries = list(read_entries(path))
        if dim is None:
            dim = entries[0].image_vec.dim if entries else 0
        shard = cls(node_id, dim, capacity_hint)
        for e in entries:
            shard.insert(e)
        return shard


def read_entries(path) -> Iterable[CacheEntry]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield CacheEntry.from_record(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(path, line_no, str(exc)) from exc


def make_entry(entry_id: int, image_vec, text_vec, payload_uri: str = "", caption: str = "",
               tick: int = 0) -> CacheEntry:
    """Build an entry from raw or embedded vectors, normalizing both."""
    img = image_vec if isinstance(image_vec, Embedding) and image_vec.is_unit() else l2_normalize(image_vec, Modality.IMAGE)
    txt = text_vec if isinstance(text_vec, Embedding) and text_vec.is_unit() else l2_normalize(text_vec, Modality.TEXT)
    img = Embedding(img.values, Modality.IMAGE)
    txt = Embedding(txt.values, Modality.TEXT)
    return CacheEntry(entry_id, img, txt, payload_uri or f"mem://{entry_id}", caption, tick, tick, 0)
