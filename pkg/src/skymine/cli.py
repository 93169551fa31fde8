"""Command-line driver: ingest, build, query, crossmatch, olap, cluster, svc, gen.

Results go to stdout as CSV, diagnostics to stderr. Exit status is 0 on
success, 1 on usage errors and 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import htm, svc as svc_mod, warehouse
from .bulkload import VamSplitParams, vamsplit_build
from .catalog import CatalogSchema, ingest, key_matrix, read_store
from .cluster import birch, clique, clique_labels, cure
from .config import RunConfig
from .errors import DataError, SkyMineError, UsageError
from .kdtree import KdBuildParams, KDTree
from .paging import IoCounter
from .rtree import MBB, RTree
from .rtree.tree import MAGIC as RT_MAGIC
from .synth import DEFAULT_SCHEMA, generate_catalog


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _keys(text: str) -> list[str]:
    return [k.strip() for k in text.split(",") if k.strip()]


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _emit(out, rows, header: Sequence[str]):
    out.write(",".join(header) + "\n")
    for r in rows:
        out.write(",".join(_fmt(v) for v in r) + "\n")


# -------------------------------------------------------------- commands


def cmd_ingest(a, cfg: RunConfig, out):
    schema = CatalogSchema.load(a.schema) if a.schema else DEFAULT_SCHEMA
    store = ingest(a.csv, schema, a.output, a.page_size or cfg.page_size)
    print(f"ingested {store.record_count} records into {len(store.page_counts)} pages", file=sys.stderr)


def _kd_params(cfg: RunConfig) -> KdBuildParams:
    return KdBuildParams(cfg.kd_leaf_points, cfg.kd_leaf_extent, cfg.kd_rule)


def cmd_build(a, cfg: RunConfig, out):
    store = read_store(a.store)
    keys = _keys(a.keys) if a.keys else list(store.schema.position_columns)
    kind = a.index
    if kind == "htm":
        ra, dec = store.positions()
        part = htm.partition(ra, dec, a.level if a.level is not None else cfg.htm_level)
        Path(a.output).write_text(part.to_csv())
        print(f"htm level {part.level}: {len(part.buckets)} non-empty trixels", file=sys.stderr)
        return
    pts = key_matrix(store, keys)
    if kind == "kdtree":
        KDTree.build(pts, _kd_params(cfg))  # validates the inputs now
        rel = os.path.relpath(os.path.abspath(a.store), os.path.dirname(os.path.abspath(a.output)))
        desc = {"kind": "kdtree", "store": rel, "keys": keys,
                "leaf_point_threshold": cfg.kd_leaf_points,
                "leaf_extent_threshold": cfg.kd_leaf_extent, "splitting_rule": cfg.kd_rule}
        Path(a.output).write_text(json.dumps(desc, sort_keys=True, indent=1) + "\n")
        return
    meta = {"keys": keys, "kind": kind}
    if kind == "rtree-bulk":
        params = VamSplitParams(leaf_capacity=cfg.leaf_capacity or None, sample_size=cfg.sample_size,
                                cache_pages=cfg.cache_pages, memory_budget=cfg.memory_budget,
                                seed=cfg.seed, page_size=cfg.page_size)
        on_split = (lambda ev: print(ev.line(), file=sys.stderr)) if a.report else None
        tree, rep = vamsplit_build(pts, a.output, params, meta=meta, on_split=on_split,
                                   scratch_dir=os.path.dirname(os.path.abspath(a.output)))
        tree.close()
        print(f"bulk-loaded {rep.records} records into {rep.leaves} leaves", file=sys.stderr)
        return
    tree = RTree.create(a.output, pts.shape[1], cfg.page_size, cfg.cache_pages, meta=meta)
    for i, p in enumerate(pts):
        tree.insert(MBB.point(p), i)
    tree.close()
    if a.stats:
        print(str(tree.io), file=sys.stderr)


def _open_index(path):
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == RT_MAGIC:
        return "rtree", None
    try:
        desc = json.loads(Path(path).read_text())
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise DataError(f"{path}: not a skymine index") from None
    if desc.get("kind") != "kdtree":
        raise DataError(f"{path}: unknown index kind")
    return "kdtree", desc


def _load_kdtree(path, desc):
    store_path = Path(path).resolve().parent / desc["store"]
    store = read_store(store_path)
    params = KdBuildParams(desc["leaf_point_threshold"], desc["leaf_extent_threshold"], desc["splitting_rule"])
    return KDTree.build(key_matrix(store, desc["keys"]), params)


def cmd_query(a, cfg: RunConfig, out):
    if a.kind == "knn" and (a.k is None or a.k < 1):
        raise UsageError("query knn: --k must be >= 1")
    if a.kind in ("point", "knn") and a.at is None:
        raise UsageError(f"query {a.kind}: --at is required")
    if a.kind == "range" and (a.low is None or a.high is None):
        raise UsageError("query range: --low and --high are required")
    kind, desc = _open_index(a.index)
    io = IoCounter()
    if kind == "kdtree":
        tree = _load_kdtree(a.index, desc)
        if a.kind == "point":
            p = _floats(a.at)
            ids = tree.range_query(p, p)
            _emit(out, ((i,) for i in ids), ["record_index"])
        elif a.kind == "range":
            _emit(out, ((i,) for i in tree.range_query(_floats(a.low), _floats(a.high))), ["record_index"])
        else:
            _emit(out, tree.knn(_floats(a.at), a.k), ["record_index", "distance"])
    else:
        tree = RTree.open(a.index, cache_pages=cfg.cache_pages)
        try:
            if a.kind == "point":
                _emit(out, ((i,) for i in tree.point_query(_floats(a.at))), ["record_index"])
            elif a.kind == "range":
                low, high = _floats(a.low), _floats(a.high)
                if any(lo > hi for lo, hi in zip(low, high)):
                    raise UsageError("query range: --low exceeds --high")
                _emit(out, ((i,) for i in tree.range_query(MBB(low, high))), ["record_index"])
            else:
                _emit(out, tree.knn(_floats(a.at), a.k), ["record_index", "distance"])
            io = tree.io
        finally:
            tree.file.close()
    if a.stats:
        print(str(io), file=sys.stderr)


def cmd_crossmatch(a, cfg: RunConfig, out):
    if a.radius_deg < 0 or a.radius_deg > 180:
        raise UsageError("--radius-deg must be in [0, 180]")
    trees = []
    for path in (a.index_a, a.index_b):
        kind, _ = _open_index(path)
        if kind != "rtree":
            raise UsageError(f"{path}: crossmatch needs R-tree indexes")
        trees.append(RTree.open(path, cache_pages=cfg.cache_pages))
    try:
        for path, t in zip((a.index_a, a.index_b), trees):
            if t.meta.get("keys") != ["xyz"]:
                raise UsageError(f"{path}: crossmatch needs indexes built with --keys xyz")
        chord = 2.0 * math.sin(math.radians(a.radius_deg) / 2.0)
        pairs = trees[0].spatial_join(trees[1], chord)
        _emit(out, pairs, ["record_index_a", "record_index_b"])
        if a.stats:
            reads = sum(t.io.reads for t in trees)
            writes = sum(t.io.writes for t in trees)
            print(f"reads={reads} writes={writes}", file=sys.stderr)
    finally:
        for t in trees:
            t.file.close()


def cmd_olap(a, cfg: RunConfig, out):
    dims = [warehouse.DimensionHierarchy.from_csv(p) for p in _keys(a.dims)]
    rows = warehouse.load_fact_csv(a.fact)
    measures = [c for c in (rows[0].keys() if rows else []) if c not in {d.dimension_name for d in dims}]
    schema = warehouse.StarSchema(Path(a.fact).stem, measures, dims)
    measure = a.measure or (measures[0] if measures else "")
    q = warehouse.OlapQuery.make(schema, warehouse.parse_group_spec(a.group), measure, a.agg)
    for _ in range(a.roll_up_steps or 0):
        for d in warehouse.parse_group_spec(a.group):
            q = warehouse.roll_up(q, d, schema)
    result = warehouse.aggregate(rows, q, schema)
    out.write("\n".join(warehouse.format_rows(result, q)) + "\n")


def _store_points(a, store):
    keys = _keys(a.columns) if a.columns else list(store.schema.position_columns)
    return key_matrix(store, keys)


def _emit_labels(out, labels, summary: dict, extra: Sequence[str] = ()):
    _emit(out, enumerate(labels.tolist()), ["record_index", "cluster_id"])
    out.write("\n")
    for k, v in summary.items():
        out.write(f"# {k}={_fmt(v)}\n")
    for line in extra:
        out.write(f"# {line}\n")


def cmd_cluster(a, cfg: RunConfig, out):
    store = read_store(a.store)
    X = _store_points(a, store)
    if len(X) == 0:
        raise DataError(f"{a.store}: no records to cluster")
    if a.algorithm == "birch":
        res = birch(X, a.k or cfg.birch_k, a.threshold if a.threshold is not None else cfg.birch_threshold,
                    cfg.birch_branching)
        summ = {"clusters": len(res.groups), "leaf_entries": len(res.tree.leaf_entries()),
                "height": res.tree.height}
        _emit_labels(out, res.labels, summ,
                     [f"centroid {i}=" + " ".join(_fmt(x) for x in c) for i, c in enumerate(res.centroids)])
    elif a.algorithm == "cure":
        res, labels = cure(X, a.k or cfg.cure_k, cfg.cure_c, cfg.cure_alpha, cfg.cure_sample, cfg.seed)
        summ = {"clusters": len(res.clusters), "sample": sum(len(c.members) for c in res.clusters)}
        _emit_labels(out, labels, summ)
    else:
        res = clique(X, cfg.clique_xi, cfg.clique_tau)
        labels = clique_labels(X, res)
        regions = []
        for cid, cl in enumerate(res.clusters):
            for reg in cl.describe(res.grid):
                regions.append(f"cluster {cid} subspace={'/'.join(map(str, cl.subspace))} region=" +
                               " ".join(f"d{d}:[{_fmt(lo)},{_fmt(hi)}]" for d, lo, hi in reg))
        summ = {"clusters": len(res.clusters), "dense_subspaces": len(res.dense)}
        _emit_labels(out, labels, summ, regions)


def cmd_svc(a, cfg: RunConfig, out):
    store = read_store(a.store)
    X = _store_points(a, store)
    params = svc_mod.SvcParams(a.q if a.q is not None else cfg.svc_q, a.C if a.C is not None else cfg.svc_C,
                               cfg.svc_tol, cfg.svc_max_iter, cfg.svc_m)
    model = svc_mod.train(X, params)
    labels = svc_mod.label_clusters(model)
    s = svc_mod.summary(model)
    _emit_labels(out, labels, {"n_sv": s["n_sv"], "n_bsv": s["n_bsv"], "R": s["R"],
                               "dual_objective": s["objective"]})


def cmd_gen(a, cfg: RunConfig, out):
    text = generate_catalog(a.spec, cfg.seed)
    if a.output:
        Path(a.output).write_text(text)
    else:
        out.write(text)
    if a.schema_out:
        Path(a.schema_out).write_text(json.dumps(DEFAULT_SCHEMA.to_dict(), indent=1) + "\n")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="skymine", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key=value run configuration file")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="CSV catalog -> .skyf record store")
    s.add_argument("csv")
    s.add_argument("schema", nargs="?", help="schema JSON (default: ra, dec, mag)")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--page-size", type=int)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("build", help="build an index over a record store")
    s.add_argument("--index", required=True, choices=["htm", "kdtree", "rtree-bulk", "rtree-insert"])
    s.add_argument("store")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--keys", help="comma-separated key columns, or 'xyz' for unit vectors")
    s.add_argument("--level", type=int, help="HTM level (default from config)")
    s.add_argument("--report", action="store_true", help="print VAMSplit split lines to stderr")
    s.add_argument("--stats", action="store_true")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("query", help="point / range / knn query against an index")
    s.add_argument("kind", choices=["point", "range", "knn"])
    s.add_argument("index")
    s.add_argument("--at", help="query point x1,x2,...")
    s.add_argument("--low")
    s.add_argument("--high")
    s.add_argument("--k", type=int)
    s.add_argument("--stats", action="store_true")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("crossmatch", help="spatial join of two xyz R-tree indexes")
    s.add_argument("index_a")
    s.add_argument("index_b")
    s.add_argument("--radius-deg", type=float, required=True)
    s.add_argument("--stats", action="store_true")
    s.set_defaults(func=cmd_crossmatch)

    s = sub.add_parser("olap", help="aggregate a fact table over dimension hierarchies")
    s.add_argument("fact")
    s.add_argument("dims", help="comma-separated dimension CSV files")
    s.add_argument("--group", required=True, help="dimension=level,...")
    s.add_argument("--agg", required=True, choices=list(warehouse.AGGREGATES))
    s.add_argument("--measure")
    s.add_argument("--roll-up-steps", type=int, default=0)
    s.set_defaults(func=cmd_olap)

    s = sub.add_parser("cluster", help="BIRCH / CURE / CLIQUE over a record store")
    s.add_argument("algorithm", choices=["birch", "cure", "clique"])
    s.add_argument("store")
    s.add_argument("--columns")
    s.add_argument("--k", type=int)
    s.add_argument("--threshold", type=float)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("svc", help="support vector clustering / outlier detection")
    s.add_argument("store")
    s.add_argument("--q", type=float)
    s.add_argument("--C", type=float)
    s.add_argument("--columns")
    s.set_defaults(func=cmd_svc)

    s = sub.add_parser("gen", help="write a synthetic catalog (uniform|clustered:n=...,...)")
    s.add_argument("spec")
    s.add_argument("-o", "--output")
    s.add_argument("--schema-out")
    s.set_defaults(func=cmd_gen)
    return p


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        args.func(args, cfg, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SkyMineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())


def main_entry() -> None:
    sys.exit(main())
