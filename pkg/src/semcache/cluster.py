"""Edge node profiles: latency constants and hourly prices per node."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .errors import ConfigError

# Stable Diffusion average of 2.24 s at 50 steps
DEFAULT_T_STEP = 0.0448
DEFAULT_T_NOISE = 0.05
DEFAULT_T_RETRIEVE = 0.10
DEFAULT_T_RETURN = 0.03

# hourly rental prices (USD) by GPU class
GPU_PRICES = {"rtx4090d": 0.28, "rtx3090": 0.23, "rtx2070": 0.084}
# per-step slowdown relative to the 4090 D, proportional to the price tiers
GPU_SLOWDOWN = {"rtx4090d": 1.0, "rtx3090": 1.4, "rtx2070": 2.6}
VDB_HOURLY = 0.12


@dataclass(frozen=True)
class NodeProfile:
    node_id: str
    gpu_class: str = "rtx4090d"
    t_step: float = DEFAULT_T_STEP
    t_noise: float = DEFAULT_T_NOISE
    t_retrieve: float = DEFAULT_T_RETRIEVE
    t_return: float = DEFAULT_T_RETURN
    hourly_cost: float = GPU_PRICES["rtx4090d"]
    capacity_hint: int = 0

    def __post_init__(self):
        for name in ("t_step", "t_noise", "t_retrieve", "t_return", "hourly_cost"):
            if getattr(self, name) < 0:
                raise ConfigError(f"nodes[{self.node_id}].{name} must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def gpu_node(node_id: str, gpu_class: str, heterogeneous: bool = True, capacity_hint: int = 0,
             **overrides) -> NodeProfile:
    slow = GPU_SLOWDOWN[gpu_class] if heterogeneous else 1.0
    prof = NodeProfile(node_id, gpu_class, t_step=DEFAULT_T_STEP * slow,
                       hourly_cost=GPU_PRICES[gpu_class], capacity_hint=capacity_hint)
    return replace(prof, **overrides) if overrides else prof


def default_cluster() -> list[NodeProfile]:
    """One node per GPU tier, with per-step times scaled by tier."""
    return [
        gpu_node("node-a", "rtx4090d", capacity_hint=3),
        gpu_node("node-b", "rtx3090", capacity_hint=2),
        gpu_node("node-c", "rtx2070", capacity_hint=1),
    ]
