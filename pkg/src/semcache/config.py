"""System configuration: one structured document, validated on load."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .cluster import VDB_HOURLY, NodeProfile, default_cluster
from .dispatcher import Thresholds
from .errors import ConfigError, InvalidParameter
from .maintenance import MaintenanceConfig, Policy


@dataclass(frozen=True)
class SystemConfig:
    dim: int = 512
    k: int = 5
    thresholds: Thresholds = field(default_factory=Thresholds)
    K: int = 20
    N: int = 50
    nodes: tuple[NodeProfile, ...] = field(default_factory=lambda: tuple(default_cluster()))
    maintenance: MaintenanceConfig = field(default_factory=lambda: MaintenanceConfig(c_max=10000, period=500))
    reuse_threshold: float = 0.99
    repeat_threshold: float = 0.95
    history_capacity: int = 1024
    representation: str = "joint"
    optimizer: bool = False
    seed: int = 0
    vdb_hourly: float = VDB_HOURLY
    image_noise: float = 1.2
    generator_jitter: float = 1.2

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}")

        if self.dim < 1:
            bad("dim", "must be >= 1")
        if self.k < 1:
            bad("k", "must be >= 1")
        if not (0 <= self.K < self.N):
            bad("K", f"must satisfy 0 <= K < N (K={self.K}, N={self.N})")
        if not self.nodes:
            bad("nodes", "at least one node is required")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            bad("nodes", "node ids must be unique")
        if not (0.0 <= self.repeat_threshold <= self.reuse_threshold <= 1.0):
            bad("repeat_threshold", "need 0 <= repeat_threshold <= reuse_threshold <= 1")
        if self.history_capacity < 1:
            bad("history_capacity", "must be >= 1")
        if self.representation not in ("joint", "image"):
            bad("representation", "must be 'joint' or 'image'")
        if self.vdb_hourly < 0:
            bad("vdb_hourly", "must be >= 0")
        try:
            self.maintenance.validate_for(len(self.nodes))
        except InvalidParameter as exc:
            raise ConfigError(str(exc)) from None

    @property
    def node_ids(self) -> list[str]:
        return [n.node_id for n in self.nodes]

    def profile(self, node_id: str) -> NodeProfile:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["maintenance"]["policy"] = self.maintenance.policy.value
        d["nodes"] = [n.to_dict() for n in self.nodes]
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "SystemConfig":
        raw = dict(raw or {})
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            if "thresholds" in raw:
                raw["thresholds"] = Thresholds(**raw["thresholds"])
        except (InvalidParameter, TypeError) as exc:
            raise ConfigError(f"thresholds: {exc}") from None
        try:
            if "maintenance" in raw:
                m = dict(raw["maintenance"])
                if "policy" in m:
                    m["policy"] = Policy(str(m["policy"]).lower())
                raw["maintenance"] = MaintenanceConfig(**m)
        except (InvalidParameter, TypeError, ValueError) as exc:
            raise ConfigError(f"maintenance: {exc}") from None
        if "nodes" in raw:
            nodes = []
            for i, n in enumerate(raw["nodes"]):
                try:
                    nodes.append(NodeProfile(**n))
                except TypeError as exc:
                    raise ConfigError(f"nodes[{i}]: {exc}") from None
            raw["nodes"] = tuple(nodes)
        return cls(**raw)


def load_config(path=None, **overrides) -> SystemConfig:
    """Read a YAML (or JSON) config file; keyword overrides win over the file."""
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return SystemConfig.from_dict(raw)
