"""Command-line entry point: ``ccp fetch|reduce|embed|eval|plot|bench``.

Exit codes: 0 success, 1 domain error, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import figures
from .config import RunConfig, from_mapping, load_config
from .errors import CcpError, ValidationError
from .evaluate import AriReport, benchmark, score_grid, standard_pipeline, write_reports
from .geo import fetch_geo
from .ingest import (
    ExpressionMatrix,
    LabelVector,
    atomic_write_text,
    filter_rare_cell_types,
    load_expression_matrix,
    load_labels,
    log_transform,
    read_matrix_csv,
    write_matrix_csv,
)
from .partition import build_partition, gene_variances
from .projection import ccp_reduce
from .svg import panel_svg, scatter_svg
from .tsne import export_coords, import_coords, tsne, write_kl_trace

log = logging.getLogger("ccp")

CONFIG_KEYS = {f.name for f in fields(RunConfig)}
DEFAULT_VC_GRID = (0.6, 0.7, 0.8, 0.9)
DEFAULT_N_GRID = (50, 100, 150, 200, 250, 300)


def _float_list(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _int_list(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _add_ingest(p):
    p.add_argument("--input", help="expression matrix (or table CSV where noted)")
    p.add_argument("--labels", help="cell_id,label CSV")
    p.add_argument("--format", choices=("dense-csv", "dense-tsv", "matrix-market"))
    p.add_argument("--orientation", choices=("genes-as-rows", "cells-as-rows"))
    p.add_argument("--min-cells", dest="min_cells", type=int, help="drop cell types rarer than this (default 15)")
    p.add_argument("--log", action=argparse.BooleanOptionalAction, help="apply ln(1+x) (default on)")


def _add_ccp(p):
    p.add_argument("--n-supergenes", dest="n_supergenes", type=int)
    p.add_argument("--vc", type=float, help="variance cutoff ratio (default 0.8)")
    p.add_argument("--tau", type=float, help="kernel scale multiplier (default 6.0)")
    p.add_argument("--kappa", type=float, help="kernel exponent (default 2.0)")
    p.add_argument("--cell-distance", dest="cell_distance", choices=("euclidean", "manhattan"))
    p.add_argument("--cluster-method", dest="cluster_method", choices=("kmedoids", "kmeans"))
    p.add_argument("--metric", choices=("correlation", "covariance", "euclidean"))


def _add_tsne(p):
    p.add_argument("--perplexity", type=float)
    p.add_argument("--tsne-iters", dest="tsne_iters", type=int)
    p.add_argument("--early-exaggeration", dest="early_exaggeration", type=float)
    p.add_argument("--exaggeration-iters", dest="exaggeration_iters", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--init", choices=("pca", "random"))


def _add_common(p):
    p.add_argument("--config", help="key = value file, or a JSON sidecar from a previous run")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (file for plot)")
    p.add_argument("--run-id", dest="run_id")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccp", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download GEO supplementary files")
    p.add_argument("accession")
    p.add_argument("dest", nargs="?", help="destination (default $CCP_CACHE_DIR or ./geo_cache)")

    p = sub.add_parser("reduce", help="partition genes and project them into super-genes")
    _add_ingest(p)
    _add_ccp(p)
    _add_common(p)

    p = sub.add_parser("embed", help="exact t-SNE of a table or expression matrix")
    _add_ingest(p)
    p.add_argument("--input-kind", dest="input_kind", choices=("table", "expression"), default="table",
                   help="'table' reads a cells-as-rows CSV such as supergenes.csv")
    _add_tsne(p)
    _add_common(p)

    p = sub.add_parser("eval", help="k-means + ARI over a seed grid")
    _add_ingest(p)
    _add_ccp(p)
    _add_tsne(p)
    _add_common(p)
    p.add_argument("--table", action="append", default=[], metavar="TAG=PATH",
                   help="reduced data to score; repeat a TAG for reduction replicates")
    p.add_argument("--methods", default="ccp,ccp+tsne,raw+tsne",
                   help="built-in pipelines to run when no --table is given")
    p.add_argument("--reduction-seeds", dest="reduction_seeds", type=int)
    p.add_argument("--clustering-seeds", dest="clustering_seeds", type=int)
    p.add_argument("--n-neighbors", dest="n_neighbors", type=int,
                   help="recorded with external embeddings (UMAP setting), not used")
    p.add_argument("--k", type=int, help="clusters for k-means (default: number of cell types)")

    p = sub.add_parser("plot", help="SVG scatter coloured by label")
    p.add_argument("--coords", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title")

    p = sub.add_parser("bench", help="sweep v_c and N, one embedding and ARI report per cell")
    _add_ingest(p)
    _add_ccp(p)
    _add_tsne(p)
    _add_common(p)
    p.add_argument("--vc-grid", dest="vc_grid", type=_float_list, default=DEFAULT_VC_GRID)
    p.add_argument("--n-grid", dest="n_grid", type=_int_list, default=DEFAULT_N_GRID)
    p.add_argument("--clustering-seeds", dest="clustering_seeds", type=int)
    return parser


def resolve_config(args) -> RunConfig:
    base = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: v for k, v in vars(args).items() if k in CONFIG_KEYS and v is not None}
    return from_mapping(overrides, base)


def _out_dir(cfg) -> Path:
    if not cfg.out:
        raise ValidationError("--out is required")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_expression(cfg: RunConfig):
    """Load, filter and log-transform according to ``cfg``."""
    if not cfg.input:
        raise ValidationError("--input is required")
    matrix = load_expression_matrix(cfg.input, cfg.format, cfg.orientation)
    labels = None
    if cfg.labels:
        labels = load_labels(cfg.labels, matrix.cell_ids)
        matrix, labels = filter_rare_cell_types(matrix, labels, cfg.min_cells)
    if cfg.log:
        matrix = log_transform(matrix)
    log.info("loaded %d cells x %d genes", matrix.n_cells, matrix.n_genes)
    return matrix, labels


def _write_labels(path, cell_ids, labels: LabelVector):
    lines = ["cell_id,label"] + [f"{c},{lab}" for c, lab in zip(cell_ids, labels.labels)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def cmd_fetch(args) -> int:
    dest = args.dest or os.environ.get("CCP_CACHE_DIR") or "geo_cache"
    paths = fetch_geo(args.accession, dest)
    for p in paths:
        print(p)
    return 0


def run_reduce(matrix: ExpressionMatrix, cfg: RunConfig, out: Path, n_supergenes=None, vc=None):
    pcfg = cfg.partition_config(n_supergenes, vc)
    partition = build_partition(matrix, pcfg)
    sg = ccp_reduce(matrix, partition, cfg.kernel())
    write_matrix_csv(out / "supergenes.csv", sg.as_table())
    atomic_write_text(out / "partition.json", partition.to_json() + "\n")
    _write_json(out / "supergenes.json", {**sg.sidecar(), "run_config": replace(cfg, n_supergenes=pcfg.n_supergenes,
                                                                               vc=pcfg.v_c).to_dict()})
    return sg


def cmd_reduce(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    matrix, labels = load_expression(cfg)
    if labels is not None:
        _write_labels(out / "labels.csv", matrix.cell_ids, labels)
    sg = run_reduce(matrix, cfg, out)
    figures.variance_curve(gene_variances(matrix), [cfg.vc], out / "variance.png")
    print(f"{sg.shape[0]}x{sg.shape[1]} super-gene matrix -> {out / 'supergenes.csv'}")
    return 0


def cmd_embed(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    if args.input_kind == "expression":
        matrix, labels = load_expression(cfg)
        ids, X = matrix.cell_ids, matrix.values
    else:
        if not cfg.input:
            raise ValidationError("--input is required")
        table = read_matrix_csv(cfg.input)
        ids, X = table.row_ids, table.values
    emb = tsne(X, cfg.tsne_config(), cell_ids=ids)
    export_coords(emb, out / "coords.csv")
    write_kl_trace(emb.kl_trace, out / "kl_trace.csv")
    _write_json(out / "embed.json", {"run_config": cfg.to_dict(), "init": emb.meta.get("init"),
                                     "init_fallback": emb.meta.get("init_fallback"),
                                     "kl_initial": emb.kl_trace[0][1], "kl_final": emb.kl_trace[-1][1]})
    print(f"KL {emb.kl_trace[0][1]:.4f} -> {emb.kl_trace[-1][1]:.4f}; {len(ids)} points -> {out / 'coords.csv'}")
    return 0


def _parse_tables(items):
    grouped = {}
    for item in items:
        if "=" not in item:
            raise ValidationError(f"--table expects TAG=PATH, got {item!r}")
        tag, path = item.split("=", 1)
        grouped.setdefault(tag, []).append(path)
    return grouped


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    reports = []
    if args.table:
        if not cfg.labels:
            raise ValidationError("--labels is required")
        for tag, paths in _parse_tables(args.table).items():
            tables = [read_matrix_csv(p) for p in paths]
            ids = tables[0].row_ids
            labels = load_labels(cfg.labels, ids)
            reduced = []
            for t in tables:
                if list(t.row_ids) != list(ids):
                    raise ValidationError(f"{tag}: replicate tables list different cells")
                reduced.append(t.values)
            k = args.k or len(labels.distinct_types)
            grid = score_grid(reduced, labels.codes(), k, cfg.clustering_seeds)
            meta = {"k": k, "sources": paths}
            if tag.endswith("+external"):
                meta["n_neighbors"] = cfg.n_neighbors
            reports.append(AriReport(tag, len(reduced), cfg.clustering_seeds, grid, meta))
    else:
        matrix, labels = load_expression(cfg)
        if labels is None:
            raise ValidationError("--labels is required")
        for method in [m.strip() for m in args.methods.split(",") if m.strip()]:
            pcfg = cfg.partition_config() if method.startswith("ccp") else None
            pipe = standard_pipeline(method, pcfg, cfg.kernel(), cfg.tsne_config())
            reports.append(benchmark(matrix, labels, pipe, cfg.reduction_seeds, cfg.clustering_seeds, args.k))
    write_reports(reports, out / "ari.json", out / "ari.csv")
    figures.ari_bars(reports, out / "ari.png")
    for r in reports:
        print(f"{r.method}: mean ARI {r.mean_ari:.4f} (std {r.std_ari:.4f}, grid {r.n_reduction_seeds}x{r.n_clustering_seeds})")
    return 0


def cmd_plot(args) -> int:
    emb = import_coords(args.coords)
    labels = load_labels(args.labels, emb.cell_ids)
    svg = scatter_svg(emb.coords, labels.labels, title=args.title)
    atomic_write_text(args.out, svg)
    return 0


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    matrix, labels = load_expression(cfg)
    if labels is None:
        raise ValidationError("--labels is required")
    truth = labels.codes()
    k = len(labels.distinct_types)
    vcs, ns = args.vc_grid, args.n_grid
    tiles = [[None] * len(ns) for _ in vcs]
    means = np.full((len(vcs), len(ns)), np.nan)
    rows = [("vc", "n_supergenes", "status", "mean_ari", "std_ari", "error")]
    for r, vc in enumerate(vcs):
        for c, n in enumerate(ns):
            cell_dir = out / f"vc{vc:g}_n{n}"
            cell_dir.mkdir(parents=True, exist_ok=True)
            try:
                sg = run_reduce(matrix, cfg, cell_dir, n_supergenes=n, vc=vc)
                emb = tsne(sg.values, cfg.tsne_config(), cell_ids=matrix.cell_ids)
                export_coords(emb, cell_dir / "coords.csv")
                grid = score_grid([emb.coords], truth, k, cfg.clustering_seeds)
                report = AriReport("ccp+tsne", 1, cfg.clustering_seeds, grid, {"k": k, "vc": vc, "n_supergenes": n})
                write_reports([report], cell_dir / "ari.json", cell_dir / "ari.csv")
            except CcpError as exc:
                log.warning("v_c=%g N=%d failed: %s", vc, n, exc)
                rows.append((f"{vc:g}", n, "failed", "", "", str(exc)))
                continue
            tiles[r][c] = (emb.coords, labels.labels)
            means[r, c] = report.mean_ari
            rows.append((f"{vc:g}", n, "ok", repr(report.mean_ari), repr(report.std_ari), ""))
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    atomic_write_text(out / "bench.csv", buf.getvalue())
    if any(t is not None for row in tiles for t in row):
        atomic_write_text(out / "panel.svg", panel_svg(tiles, [f"v_c={v:g}" for v in vcs], [f"N={n}" for n in ns]))
    figures.ari_heatmap(vcs, ns, means, out / "ari_heatmap.png")
    figures.variance_curve(gene_variances(matrix), vcs, out / "variance.png")
    n_ok = int(np.isfinite(means).sum())
    print(f"{n_ok}/{means.size} grid cells succeeded -> {out / 'bench.csv'}")
    return 0 if n_ok else 1


COMMANDS = {"fetch": cmd_fetch, "reduce": cmd_reduce, "embed": cmd_embed, "eval": cmd_eval,
            "plot": cmd_plot, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (CcpError, ValueError) as exc:
        print(f"ccp {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ccp {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
