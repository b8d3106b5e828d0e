"""Command line entry point: ingest, cluster, simulate, bench-evict, serve, reference."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .bench import DriftSpec, bench_evict
from .classifier import build_shards, kmeans, map_clusters_to_nodes, write_manifest
from .config import SystemConfig, load_config
from .embedding import HashEmbedder, HttpEmbedder
from .errors import SemcacheError
from .maintenance import MaintenanceConfig, Policy
from .payloads import DirectoryPayloadStore
from .pipeline import Pipeline
from .report import cost, summarize
from .simulator import load_trace, run, run_baseline
from .store import CacheEntry, Shard, read_entries
from .workloads import (WorkloadSpec, ingest, read_corpus, reference_config, reference_corpus,
                        reference_trace, write_jsonl)

log = logging.getLogger("semcache")

WORKLOAD_NOTE = ("workload: synthetic reference generator (Poisson arrivals, clustered captions); "
                 "the arrival process is our own construction")
CALIBRATION_NOTE = ("calibration: t_step={t_step} s with N={N} so a text-to-image request costs "
                    "{full:.4f} s; K={K}; t_retrieve/t_noise/t_return are config values")


def _config(args) -> SystemConfig:
    cfg = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "k", None) is not None:
        changes["k"] = args.k
    if getattr(args, "optimize", False):
        changes["optimizer"] = True
    m = cfg.maintenance
    policy = getattr(args, "policy", None)
    c_max = getattr(args, "c_max", None)
    period = getattr(args, "period", None)
    if policy or c_max is not None or period is not None:
        changes["maintenance"] = MaintenanceConfig(c_max if c_max is not None else m.c_max,
                                                   period if period is not None else m.period,
                                                   Policy(policy) if policy else m.policy)
    return cfg.with_(**changes) if changes else cfg


def _embedder(cfg: SystemConfig, url: str | None):
    return HttpEmbedder(url, cfg.dim) if url else HashEmbedder(cfg.dim, cfg.seed, cfg.image_noise)


def _load_entries(path, cfg: SystemConfig, embed_url: str | None = None) -> list[CacheEntry]:
    """Accept either embedded entries (ingest output) or a raw caption corpus."""
    with open(path, encoding="utf-8") as fh:
        first = next((line for line in fh if line.strip()), "")
    if first and "image_vec" in json.loads(first):
        return list(read_entries(path))
    return ingest(read_corpus(path), _embedder(cfg, embed_url))


def _load_shards(directory, cfg: SystemConfig) -> dict[str, Shard]:
    d = Path(directory)
    shards = {}
    for node in cfg.nodes:
        f = d / f"{node.node_id}.jsonl"
        shards[node.node_id] = (Shard.load(f, node.node_id, cfg.dim, node.capacity_hint) if f.exists()
                                else Shard(node.node_id, cfg.dim, node.capacity_hint))
    return shards


def cmd_ingest(args) -> int:
    cfg = _config(args)
    entries = ingest(read_corpus(args.corpus), _embedder(cfg, args.embed_url))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "entries.jsonl", [e.to_record() for e in entries])
    print(f"ingested {len(entries)} entries -> {out / 'entries.jsonl'}")
    return 0


def cmd_cluster(args) -> int:
    cfg = _config(args)
    entries = _load_entries(args.corpus, cfg, args.embed_url)
    nodes = cfg.node_ids
    result = kmeans([e.image_vec for e in entries], len(nodes), seed=cfg.seed)
    capacity = {n.node_id: n.capacity_hint for n in cfg.nodes}
    shards = build_shards(entries, result, nodes, capacity)
    sizes = np.bincount(result.assignments, minlength=len(nodes)).tolist()
    mapping = map_clusters_to_nodes(sizes, nodes, capacity)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for node_id, shard in shards.items():
        shard.save(out / f"{node_id}.jsonl")
    write_manifest(out / "manifest.json", shards, {mapping[c]: result.centroids[c] for c in mapping})
    print(f"partitioned {len(entries)} entries: "
          + ", ".join(f"{n}={len(s)}" for n, s in sorted(shards.items())))
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    trace = load_trace(args.trace)
    shards = _load_shards(args.shards, cfg) if args.shards else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "maintenance.jsonl"
    log_path.unlink(missing_ok=True)
    rep = run(trace, cfg, shards, maintenance_log=log_path)
    base = run_baseline(trace, cfg)
    full = cfg.N * min(n.t_step for n in cfg.nodes)
    header = [WORKLOAD_NOTE, CALIBRATION_NOTE.format(t_step=cfg.nodes[0].t_step, N=cfg.N, K=cfg.K, full=full)]
    text = summarize(rep, out / "cache", cfg.nodes, cfg.vdb_hourly, header)
    summarize(base, out / "baseline", cfg.nodes, cfg.vdb_hourly, header)
    c_rep, c_base = cost(rep, cfg.nodes, cfg.vdb_hourly), cost(base, cfg.nodes, cfg.vdb_hourly)
    lat_red = 1.0 - rep.mean_latency / base.mean_latency if base.mean_latency else 0.0
    cost_red = 1.0 - c_rep.total / c_base.total if c_base.total else 0.0
    comparison = (f"baseline_mean_latency: {base.mean_latency:.4f}\n"
                  f"cache_mean_latency: {rep.mean_latency:.4f}\n"
                  f"latency_reduction: {lat_red:.4f}\n"
                  f"cost_reduction: {cost_red:.4f}\n")
    (out / "comparison.txt").write_text(comparison, encoding="utf-8")
    sys.stdout.write(text + comparison)
    return 0


def cmd_bench_evict(args) -> int:
    cfg = _config(args)
    policies = [Policy(p.strip().lower()) for p in args.policies.split(",") if p.strip()]
    spec = DriftSpec(cycles=args.cycles, seed=args.workload_seed)
    rows = bench_evict(spec, policies, base=cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "hitrate.csv", "w", encoding="utf-8") as fh:
        fh.write("cycle,policy,hit_rate\n")
        for c, p, h in rows:
            fh.write(f"{c},{p},{h!r}\n")
    for c, p, h in rows:
        if c == spec.cycles:
            print(f"{p}: cycle {c} hit rate {h:.4f}")
    return 0


def cmd_serve(args) -> int:
    from .service import Service

    cfg = _config(args)
    shards = _load_shards(args.shards, cfg) if args.shards else {}
    store = DirectoryPayloadStore(args.payload_dir) if args.payload_dir else None
    pipe = Pipeline(cfg, shards, embedder=_embedder(cfg, args.embed_url), store=store,
                    maintenance_log=args.maintenance_log)
    Service(pipe, args.address).serve_until_signal()
    return 0


def cmd_reference(args) -> int:
    spec = WorkloadSpec(seed=args.workload_seed) if args.workload_seed is not None else WorkloadSpec()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "corpus.jsonl", reference_corpus(spec))
    write_jsonl(out / "trace.jsonl", [r.to_record() for r in reference_trace(spec)])
    (out / "config.yaml").write_text(yaml.safe_dump(reference_config().to_dict(), sort_keys=False),
                                     encoding="utf-8")
    print(f"wrote corpus.jsonl, trace.jsonl and config.yaml under {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semcache", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--k", type=int, help="retrieval fan-out")
        sp.add_argument("--policy", choices=[x.value for x in Policy])
        sp.add_argument("--c-max", type=int, dest="c_max")
        sp.add_argument("--period", type=int)
        sp.add_argument("--optimize", action="store_true", help="reorder prompt phrases by importance first")

    sp = sub.add_parser("ingest", help="embed a caption corpus")
    sp.add_argument("corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--embed-url", help="external embedding service")
    common(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("cluster", help="partition entries over the configured nodes")
    sp.add_argument("corpus", help="ingest output or a raw caption corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--embed-url")
    common(sp)
    sp.set_defaults(func=cmd_cluster)

    sp = sub.add_parser("simulate", help="replay a trace against the cache and the baseline")
    sp.add_argument("trace")
    sp.add_argument("--shards", help="directory of <node>.jsonl shard files")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bench-evict", help="compare eviction policies on the clustered-drift workload")
    sp.add_argument("--policies", default="lcu,lru,lfu,fifo")
    sp.add_argument("--cycles", type=int, default=5)
    sp.add_argument("--workload-seed", type=int, default=DriftSpec.seed)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_bench_evict)

    sp = sub.add_parser("serve", help="run the HTTP request API")
    sp.add_argument("--shards")
    sp.add_argument("--address", help="host:port (default from SEMCACHE_ADDRESS)")
    sp.add_argument("--payload-dir")
    sp.add_argument("--maintenance-log")
    sp.add_argument("--embed-url")
    common(sp)
    sp.set_defaults(func=cmd_serve)

    sp = sub.add_parser("reference", help="write the reference corpus, trace and config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--workload-seed", type=int)
    sp.set_defaults(func=cmd_reference)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SemcacheError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
