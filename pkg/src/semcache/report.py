"""Latency percentiles, cost accounting and CSV artifacts for simulation reports."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .cluster import VDB_HOURLY, NodeProfile

PERCENTILES = (50, 90, 95, 99)


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not values:
        raise ValueError("percentile of an empty sample")
    if not (0 < p <= 100):
        raise ValueError("p must be in (0, 100]")
    ordered = sorted(values)
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return ordered[rank - 1]


def latency_stats(latencies: Sequence[float]) -> dict[str, float]:
    if not latencies:
        return {}
    med = percentile(latencies, 50)
    stats = {"count": float(len(latencies)), "mean": sum(latencies) / len(latencies), "median": med}
    for p in PERCENTILES[1:]:
        v = percentile(latencies, p)
        stats[f"p{p}"] = v
        stats[f"p{p}_over_median"] = v / med if med > 0 else float("nan")
    return stats


@dataclass(frozen=True)
class CostBreakdown:
    gpu: float
    vdb: float

    @property
    def total(self) -> float:
        return self.gpu + self.vdb

    def rows(self) -> list[tuple[str, float]]:
        return [("gpu", self.gpu), ("vdb", self.vdb), ("total", self.total)]


def cost(report, profiles: Iterable[NodeProfile], vdb_hourly: float = VDB_HOURLY) -> CostBreakdown:
    """GPU busy time at each node's hourly price, plus the vector database over the simulated span."""
    price = {p.node_id: p.hourly_cost for p in profiles}
    gpu = sum(r.gpu_seconds * price[r.node] / 3600.0 for r in report.records)
    vdb = report.span * vdb_hourly / 3600.0 if report.uses_vdb else 0.0
    return CostBreakdown(gpu, vdb)


def similarity_cdf(scores: Sequence[float]) -> list[tuple[float, float]]:
    ordered = sorted(scores)
    n = len(ordered)
    return [(s, (i + 1) / n) for i, s in enumerate(ordered)]


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def summarize(report, out_dir, profiles: Sequence[NodeProfile], vdb_hourly: float = VDB_HOURLY,
              header: Sequence[str] = ()) -> str:
    """Write latency/hitrate/percentile/cost CSVs plus a similarity CDF; return a text summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "latency.csv", ("request_id", "node", "mode", "score", "latency_s"),
               ((r.request_id, r.node, r.mode.value, r.score, r.latency) for r in report.records))
    _write_csv(out / "hitrate.csv", ("cycle", "policy", "hit_rate"),
               ((c, report.policy, h) for c, h in report.hit_rates()))
    stats = latency_stats(report.latencies)
    stats["throughput_img_per_s"] = report.throughput
    _write_csv(out / "percentiles.csv", ("stat", "value"), sorted(stats.items()))
    breakdown = cost(report, profiles, vdb_hourly)
    _write_csv(out / "cost.csv", ("component", "amount"), breakdown.rows())
    _write_csv(out / "similarity_cdf.csv", ("score", "cdf"),
               similarity_cdf([r.score for r in report.records]))
    lines = [f"# {h}" for h in header]
    lines.append(f"report: {report.label}  requests: {len(report)}")
    lines.append("modes: " + ", ".join(f"{k}={v}" for k, v in report.mode_counts.items()))
    for key in ("mean", "median", "p90", "p95", "p99", "p90_over_median", "p95_over_median", "p99_over_median"):
        if key in stats:
            lines.append(f"{key}: {stats[key]:.4f}")
    lines.append(f"throughput_img_per_s: {report.throughput:.4f}")
    lines.append(f"cost_total: {breakdown.total:.6f} (gpu {breakdown.gpu:.6f}, vdb {breakdown.vdb:.6f})")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    return text
