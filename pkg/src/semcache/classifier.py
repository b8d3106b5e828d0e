"""K-means partitioning of the reference corpus across edge nodes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .embedding import Embedding
from .errors import IndexOutOfRange, TooFewSamples
from .store import CacheEntry, Shard


@dataclass(frozen=True)
class ClusteringResult:
    centroids: np.ndarray
    assignments: np.ndarray
    objective: float
    iterations: int
    # objective after every assignment/update half-step, starting from the seeding
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _as_matrix(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return np.asarray(samples, dtype=np.float64)
    rows = [s.values if isinstance(s, Embedding) else np.asarray(s, dtype=np.float64) for s in samples]
    return np.vstack(rows) if rows else np.zeros((0, 0))


def _sq_dists(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0], centroids.shape[0]))
    for j, c in enumerate(centroids):
        diff = X - c
        out[:, j] = np.einsum("ij,ij->i", diff, diff)
    return out


def objective(samples, centroids, assignments) -> float:
    """Within-cluster sum of squared Euclidean distances."""
    X = _as_matrix(samples)
    C = np.asarray(centroids, dtype=np.float64)
    a = np.asarray(assignments)
    if a.shape[0] != X.shape[0]:
        raise IndexOutOfRange(f"{a.shape[0]} assignments for {X.shape[0]} samples")
    if a.size and (a.min() < 0 or a.max() >= C.shape[0]):
        raise IndexOutOfRange("assignment outside [0, k)")
    diff = X - C[a]
    return float(np.einsum("ij,ij->", diff, diff))


def _farthest_point_seeds(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    first = int(rng.integers(X.shape[0]))
    idx = [first]
    d = np.einsum("ij,ij->i", X - X[first], X - X[first])
    for _ in range(1, k):
        nxt = int(np.argmax(d))
        idx.append(nxt)
        diff = X - X[nxt]
        d = np.minimum(d, np.einsum("ij,ij->i", diff, diff))
    return X[idx].copy()


def kmeans(samples, k: int, max_iter: int = 100, seed: int = 0) -> ClusteringResult:
    """Lloyd iterations from farthest-point seeding.

    Stops when assignments stop changing or after ``max_iter`` rounds. An
    emptied cluster is reseeded with the sample farthest from its centroid.
    """
    X = _as_matrix(samples)
    n = X.shape[0]
    if k < 1 or n < k:
        raise TooFewSamples(f"need at least k={k} samples, got {n}")
    rng = np.random.default_rng(seed)
    C = _farthest_point_seeds(X, k, rng)
    assign = np.argmin(_sq_dists(X, C), axis=1)
    history = [objective(X, C, assign)]
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        for j in range(k):
            members = X[assign == j]
            if len(members):
                C[j] = members.mean(axis=0)
        assign = _repair_empty(X, C, assign, k)
        history.append(objective(X, C, assign))
        new_assign = np.argmin(_sq_dists(X, C), axis=1)
        new_assign = _repair_empty(X, C, new_assign, k)
        history.append(objective(X, C, new_assign))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    # final update so centroids are the means of the final assignment
    for j in range(k):
        members = X[assign == j]
        if len(members):
            C[j] = members.mean(axis=0)
    J = objective(X, C, assign)
    history.append(J)
    return ClusteringResult(C, assign.astype(np.int64), J, iterations, tuple(history))


def _repair_empty(X: np.ndarray, C: np.ndarray, assign: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(assign, minlength=k)
    if counts.min() > 0:
        return assign
    assign = assign.copy()
    for j in np.nonzero(counts == 0)[0]:
        d = np.einsum("ij,ij->i", X - C[assign], X - C[assign])
        # only steal from clusters that would stay nonempty
        counts = np.bincount(assign, minlength=k)
        d[counts[assign] <= 1] = -1.0
        far = int(np.argmax(d))
        assign[far] = j
        C[j] = X[far]
    return assign


def map_clusters_to_nodes(cluster_sizes: Sequence[int], nodes: Sequence[str],
                          capacity: Mapping[str, int] | None = None) -> dict[int, str]:
    """Largest cluster to the node with the largest capacity hint, and so on down."""
    capacity = capacity or {}
    node_order = sorted(range(len(nodes)), key=lambda i: (-capacity.get(nodes[i], 0), i))
    cluster_order = sorted(range(len(cluster_sizes)), key=lambda c: (-cluster_sizes[c], c))
    return {c: nodes[node_order[rank]] for rank, c in enumerate(cluster_order)}


def build_shards(corpus: Sequence[CacheEntry], result: ClusteringResult, nodes: Sequence[str],
                 capacity: Mapping[str, int] | None = None) -> dict[str, Shard]:
    if not corpus:
        raise TooFewSamples("empty corpus")
    dim = corpus[0].image_vec.dim
    sizes = np.bincount(result.assignments, minlength=len(nodes)).tolist()
    mapping = map_clusters_to_nodes(sizes, nodes, capacity)
    capacity = capacity or {}
    shards = {n: Shard(n, dim, capacity.get(n, 0)) for n in nodes}
    for entry, c in zip(corpus, result.assignments):
        shards[mapping[int(c)]].insert(entry)
    return shards


def partition_dataset(corpus: Sequence[CacheEntry], nodes: Sequence[str], seed: int = 0,
                      capacity: Mapping[str, int] | None = None,
                      max_iter: int = 100) -> dict[str, Shard]:
    """Cluster image vectors with k = number of nodes; one shard per cluster."""
    if not nodes or len(corpus) < len(nodes):
        raise TooFewSamples(f"{len(corpus)} entries for {len(nodes)} nodes")
    result = kmeans([e.image_vec for e in corpus], len(nodes), max_iter, seed)
    return build_shards(corpus, result, nodes, capacity)


def write_manifest(path, shards: Mapping[str, Shard], centroids: Mapping[str, np.ndarray]) -> None:
    doc = {
        "nodes": {n: s.ids() for n, s in shards.items()},
        "centroids": {n: np.asarray(c).tolist() for n, c in centroids.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")
