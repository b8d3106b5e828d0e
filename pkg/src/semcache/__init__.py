"""Semantic image cache for diffusion serving at the edge.

Prompts are matched against a sharded vector store of past images; close
matches are returned directly, moderate ones seed image-to-image generation,
and the rest are generated from noise.
"""
from .config import SystemConfig, load_config
from .dispatcher import DispatchDecision, LatencyParams, Mode, Thresholds, decide, request_latency
from .embedding import Embedding, HashEmbedder, Modality, cosine_similarity, hash_embed, l2_normalize
from .maintenance import MaintenanceConfig, Policy, evict, lcu_evict
from .pipeline import Pipeline
from .scheduler import Reason, Scheduler, select_node
from .store import CacheEntry, Shard

__version__ = "0.1.0"

__all__ = [
    "CacheEntry", "DispatchDecision", "Embedding", "HashEmbedder", "LatencyParams", "MaintenanceConfig",
    "Modality", "Mode", "Pipeline", "Policy", "Reason", "Scheduler", "Shard", "SystemConfig", "Thresholds",
    "cosine_similarity", "decide", "evict", "hash_embed", "l2_normalize", "lcu_evict", "load_config",
    "request_latency", "select_node",
]
