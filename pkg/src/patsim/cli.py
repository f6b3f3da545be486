"""Command-line entry point wiring ingestion, embedding, indexing, the
benchmark and the studies, plus the read-only search service.

Exit codes: 0 success, 1 usage error, 2 input/config error, 3 internal
error. Every artifact-producing run writes a manifest (config snapshot,
seed, input checksums, version, wall time) next to its outputs.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bench, corpus, studies
from .embed import (
    EmbeddingStore,
    HashingTextEmbedder,
    embed_corpus,
    import_precomputed,
    load_store,
    save_store,
)
from .index import IndexConfig, SearchFilter, build_index, load_index, save_index
from .stats import fit_design, summarize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

INPUT_ERRORS = (
    corpus.CorpusError,
    bench.BenchError,
    studies.StudyError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
    OSError,
)


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on bad flags; the contract says 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    inputs: list[Path], outputs: list[str], started: float) -> None:
    manifest = {
        "command": command,
        "config": {
            k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "config") and not k.startswith("_")
        },
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": outputs,
        "version": __version__,
        "wall_time_s": round(time.time() - started, 3),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2, default=str) + "\n", "utf-8"
    )


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser,
                  section: str) -> None:
    """Fill unset options from the config file section; flags always win."""
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} does not exist")
    ini = configparser.ConfigParser()
    ini.read(path)
    if section not in ini:
        return
    for key, raw in ini[section].items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            continue
        if getattr(args, attr) is not None:
            continue  # explicit flag wins
        for action in parser._actions:
            if action.dest == attr:
                if action.type is not None:
                    setattr(args, attr, action.type(raw))
                elif isinstance(action, argparse._StoreTrueAction):
                    setattr(args, attr, raw.lower() in ("1", "true", "yes"))
                else:
                    setattr(args, attr, raw)
                break


def _defaults(args: argparse.Namespace, **values) -> None:
    for key, value in values.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _load_documents(path: str, fmt: str = "jsonl") -> dict[str, corpus.Document]:
    return {d.id: d for d in corpus.ingest_documents(path, format=fmt)}


def _doc_meta(documents) -> dict[str, tuple[int, str]]:
    return {d.id: (d.pub_year, d.kind) for d in documents.values()}


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", "utf-8")


# --- subcommands --------------------------------------------------------------


def cmd_ingest(args, parser) -> int:
    started = time.time()
    _defaults(args, format="jsonl")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = [Path(args.documents)]
    documents = corpus.ingest_documents(args.documents, format=args.format)
    corpus.write_documents(out / "documents.jsonl", documents)
    outputs = ["documents.jsonl"]
    if args.citations:
        inputs.append(Path(args.citations))
        corpus.write_citations(out / "citations.tsv", corpus.load_citations(args.citations))
        outputs.append("citations.tsv")
    if args.ppps:
        inputs.append(Path(args.ppps))
        corpus.write_ppps(out / "ppps.tsv", corpus.load_ppps(args.ppps))
        outputs.append("ppps.tsv")
    _write_manifest(out, "ingest", args, inputs, outputs, started)
    print(f"ingested {len(documents)} documents -> {out}")
    return EXIT_OK


def cmd_clean(args, parser) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    documents = corpus.ingest_documents(args.documents)
    cleaned = [
        corpus.Document(
            id=d.id, kind=d.kind, title=d.title,
            abstract=corpus.clean_abstract(d.abstract),
            pub_date=d.pub_date, lang=d.lang, filing_year=d.filing_year,
            authority=d.authority, family_id=d.family_id,
            application_id=d.application_id, cpc_sections=d.cpc_sections,
        )
        for d in documents
    ]
    corpus.write_documents(out / "documents.jsonl", cleaned)
    _write_manifest(out, "clean", args, [Path(args.documents)], ["documents.jsonl"], started)
    print(f"cleaned {len(cleaned)} abstracts -> {out}")
    return EXIT_OK


def cmd_embed(args, parser) -> int:
    started = time.time()
    _defaults(args, embedder="toy", pooling="cls", dim=768, seed=0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = []
    if args.embedder == "toy":
        if not args.documents:
            raise UsageError("embed: --documents is required with the toy embedder")
        inputs.append(Path(args.documents))
        documents = _load_documents(args.documents)
        embedder = HashingTextEmbedder(dim=args.dim, seed=args.seed)
        store = embed_corpus(
            documents.values(), embedder, pooling=args.pooling, dim=args.dim,
            provenance=f"toy-v1(dim={args.dim},seed={args.seed},pooling={args.pooling})",
        )
        renormalized = 0
    elif args.embedder == "imported":
        if not args.vectors or not args.ids:
            raise UsageError("embed: --vectors and --ids are required with --embedder imported")
        inputs += [Path(args.vectors), Path(args.ids)]
        store, renormalized = import_precomputed(args.vectors, args.ids)
    else:
        raise UsageError(f"embed: unknown embedder {args.embedder!r}")
    save_store(store, out / "store.bin")
    _write_manifest(out, "embed", args, inputs, ["store.bin"], started)
    print(f"embedded {len(store)} documents (dim {store.dim}, "
          f"{renormalized} re-normalized) -> {out}")
    return EXIT_OK


def cmd_index(args, parser) -> int:
    started = time.time()
    _defaults(args, mode="exact", hnsw_m=16, hnsw_ef_construction=200,
              hnsw_ef_search=128, seed=0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    documents = _load_documents(args.documents)
    store = load_store(args.store)
    config = IndexConfig(
        mode=args.mode, hnsw_m=args.hnsw_m,
        hnsw_ef_construction=args.hnsw_ef_construction,
        hnsw_ef_search=args.hnsw_ef_search, seed=args.seed,
    )
    index = build_index(store, _doc_meta(documents), config)
    save_index(index, out / "index.bin")
    _write_manifest(out, "index", args, [Path(args.documents), Path(args.store)],
                    ["index.bin"], started)
    print(f"indexed {len(index)} vectors ({args.mode}) -> {out}")
    return EXIT_OK


def _parse_filter(args) -> SearchFilter | None:
    if args.year_min is None and args.year_max is None and args.kind is None:
        return None
    return SearchFilter(year_min=args.year_min, year_max=args.year_max, kind=args.kind)


def cmd_search(args, parser) -> int:
    _defaults(args, k=10)
    store = load_store(args.store)
    index = load_index(args.index, store)
    if args.query_id:
        if args.query_id not in store:
            raise corpus.CorpusError(f"query id {args.query_id!r} not in store")
        query = store.get(args.query_id)
    elif args.query_vector:
        query = np.asarray(
            [float(x) for x in Path(args.query_vector).read_text("utf-8").replace(",", " ").split()],
            dtype=np.float32,
        )
    else:
        raise UsageError("search: provide --query-id or --query-vector")
    exclude = set(args.exclude.split(",")) if args.exclude else None
    results = index.search(query, args.k, search_filter=_parse_filter(args), exclude=exclude)
    print(json.dumps(
        {
            "results": [{"doc_id": n.doc_id, "score": n.score} for n in results],
            "index_checksum": index.checksum_hex(),
        },
        indent=2,
    ))
    return EXIT_OK


def cmd_bench_build(args, parser) -> int:
    started = time.time()
    if args.seed is None:
        raise UsageError("bench-build: --seed is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    documents = _load_documents(args.documents)
    citations = corpus.load_citations(args.citations)
    tasks = bench.build_tasks(citations, documents, rng_seed=args.seed)
    bench.write_tasks(out / "tasks.jsonl", tasks)
    _write_manifest(out, "bench-build", args,
                    [Path(args.documents), Path(args.citations)], ["tasks.jsonl"], started)
    print(f"built {len(tasks)} tasks -> {out}")
    return EXIT_OK


def cmd_bench_run(args, parser) -> int:
    started = time.time()
    _defaults(args, model="toy", pooling="cls")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = bench.load_tasks(args.tasks)
    patent_store = load_store(args.patent_store)
    paper_store = load_store(args.paper_store) if args.paper_store else patent_store
    report = bench.run_bench(tasks, patent_store, paper_store)
    bench.write_metrics_csv(out / "metrics.csv", report, args.model, args.pooling)
    _write_json(out / "aggregates.json", {
        "model": args.model,
        "pooling": args.pooling,
        "query_count": report.query_count,
        "avg_rfr": report.avg_rfr,
        "map": report.map,
        "mrr10": report.mrr10,
    })
    inputs = [Path(args.tasks), Path(args.patent_store)]
    if args.paper_store:
        inputs.append(Path(args.paper_store))
    _write_manifest(out, "bench-run", args, inputs, ["metrics.csv", "aggregates.json"], started)
    print(f"Q={report.query_count} avg_rfr={report.avg_rfr:.4f} "
          f"map={report.map:.4f} mrr10={report.mrr10:.4f}")
    return EXIT_OK


def cmd_bench_compare(args, parser) -> int:
    started = time.time()
    _defaults(args, scheme="appendix")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    merged: dict[str, dict[str, bench.PerQueryMetrics]] = {}
    for path in args.metrics:
        for model, rows in bench.load_metrics_csv(path).items():
            merged.setdefault(model, {}).update(rows)
    if args.base not in merged:
        raise bench.BenchError(f"base model {args.base!r} absent from metrics files")
    fits = {}
    for metric, getter in (("avg_rfr", lambda m: float(m.rfr)),
                           ("map", lambda m: m.ap),
                           ("mrr10", lambda m: m.rr10)):
        per_model = {
            model: {tid: getter(m) for tid, m in rows.items()}
            for model, rows in merged.items()
        }
        fits[metric] = bench.compare_models(per_model, args.base)
    text, csv_text = bench.comparison_table(fits, scheme=args.scheme)
    (out / "comparison.txt").write_text(text, "utf-8")
    (out / "comparison.csv").write_text(csv_text, "utf-8")
    _write_manifest(out, "bench-compare", args, [Path(p) for p in args.metrics],
                    ["comparison.txt", "comparison.csv"], started)
    print(text)
    return EXIT_OK


def cmd_study_ppp_sep(args, parser) -> int:
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ppps = corpus.load_ppps(args.ppps)
    ppcs = corpus.load_citations(args.citations)
    store = load_store(args.store)
    result = studies.ppp_ppc_similarity(ppps, ppcs, store)
    _write_csv(
        out / "pair_similarities.csv",
        ["patent_id", "paper_id", "pair_type", "similarity"],
        [(r.patent_id, r.paper_id, r.pair_type, repr(r.similarity)) for r in result.records],
    )
    hist_rows = []
    for pair_type, counts in sorted(result.histograms.items()):
        for i, count in enumerate(counts):
            hist_rows.append(
                (pair_type, repr(float(result.bin_edges[i])),
                 repr(float(result.bin_edges[i + 1])), int(count))
            )
    _write_csv(out / "similarity_histogram.csv",
               ["pair_type", "bin_lo", "bin_hi", "count"], hist_rows)
    _write_json(out / "summary.json", {
        "mean_ppp": result.mean("ppp"),
        "mean_ppc": result.mean("ppc"),
        "n_ppp": sum(1 for r in result.records if r.pair_type == "ppp"),
        "n_ppc": sum(1 for r in result.records if r.pair_type == "ppc"),
        "missing_embeddings": result.missing_embeddings,
    })
    _write_manifest(out, "study-ppp-sep", args,
                    [Path(args.ppps), Path(args.citations), Path(args.store)],
                    ["pair_similarities.csv", "similarity_histogram.csv", "summary.json"],
                    started)
    print(f"mean similarity: ppp {result.mean('ppp'):.4f}, ppc {result.mean('ppc'):.4f}")
    return EXIT_OK


def _summary_payload(summary: dict[str, studies.RankSummary]) -> dict:
    return {
        level: {
            "count": s.count,
            "share_pct": s.share_pct,
            "median": s.median,
            "mean": s.mean,
            "std": s.std,
        }
        for level, s in summary.items()
    }


def cmd_study_ppp_predict(args, parser) -> int:
    started = time.time()
    _defaults(args, k=1000, window=9)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    documents = _load_documents(args.documents)
    ppps = corpus.load_ppps(args.ppps)
    store = load_store(args.store)
    index = load_index(args.index, store)
    patent_year = {d.id: d.pub_year for d in documents.values() if d.kind == "patent"}
    result = studies.predict_ppp(ppps, index, store, patent_year,
                                 k=args.k, window_years=args.window)
    _write_csv(
        out / "outcomes.csv",
        ["patent_id", "paper_id", "rank", "confidence_level"],
        [(o.patent_id, o.paper_id, "" if o.rank is None else o.rank, o.confidence_level)
         for o in result.outcomes],
    )
    ecdf_rows = []
    for level, points in sorted(result.ecdf.items()):
        for rank, share in points:
            ecdf_rows.append((level, rank, repr(share)))
    _write_csv(out / "ecdf.csv", ["confidence_level", "rank", "cumulative_share"], ecdf_rows)
    _write_json(out / "summary.json", {
        "by_level": _summary_payload(result.summary),
        "unscored_patents": result.unscored,
    })
    _write_manifest(out, "study-ppp-predict", args,
                    [Path(args.documents), Path(args.ppps), Path(args.store), Path(args.index)],
                    ["outcomes.csv", "ecdf.csv", "summary.json"], started)
    total = result.summary["total"]
    print(f"match rate {total.share_pct:.1f}% over {total.count} pairs")
    return EXIT_OK


def cmd_study_ppc_match(args, parser) -> int:
    started = time.time()
    _defaults(args, k=3000, rank_threshold=1000)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    documents = _load_documents(args.documents)
    ppcs = corpus.load_citations(args.citations)
    store = load_store(args.store)
    index = load_index(args.index, store)
    result = studies.ppc_match_study(ppcs, index, store, documents,
                                     k=args.k, rank_threshold=args.rank_threshold)
    _write_csv(
        out / "match_records.csv",
        ["patent_id", "paper_id", "matched", "authority", "filing_year", "location",
         "self_citation", "confidence", "cpc_sections", "n_paper_citations"],
        [(r.patent_id, r.paper_id, int(r.matched), r.authority, r.filing_year,
          r.location, int(r.self_citation), r.confidence,
          "".join(sorted(r.cpc_sections)), r.n_paper_citations)
         for r in result.records],
    )
    _write_csv(
        out / "per_patent_shares.csv",
        ["patent_id", "matched_share"],
        [(pid, repr(share)) for pid, share in sorted(result.per_patent_share.items())],
    )
    hist_rows = [
        (repr(float(result.share_bin_edges[i])), repr(float(result.share_bin_edges[i + 1])),
         int(count))
        for i, count in enumerate(result.share_histogram)
    ]
    _write_csv(out / "share_histogram.csv", ["bin_lo", "bin_hi", "count"], hist_rows)
    _write_json(out / "summary.json", {
        "n_links": len(result.records),
        "n_patents": len(result.per_patent_share),
        "match_rate": result.match_rate,
        "k": args.k,
        "rank_threshold": args.rank_threshold,
    })
    _write_manifest(out, "study-ppc-match", args,
                    [Path(args.documents), Path(args.citations), Path(args.store), Path(args.index)],
                    ["match_records.csv", "per_patent_shares.csv", "share_histogram.csv",
                     "summary.json"], started)
    print(f"matched {result.match_rate * 100:.1f}% of {len(result.records)} links")
    return EXIT_OK


def _records_from_csv(path: str) -> list[studies.PPCMatchRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            records.append(
                studies.PPCMatchRecord(
                    patent_id=row["patent_id"],
                    paper_id=row["paper_id"],
                    matched=row["matched"] == "1",
                    authority=row["authority"],
                    filing_year=int(row["filing_year"]),
                    location=row["location"],
                    self_citation=row["self_citation"] == "1",
                    confidence=int(row["confidence"]),
                    cpc_sections=frozenset(row["cpc_sections"]),
                    n_paper_citations=int(row["n_paper_citations"]),
                )
            )
    return records


def cmd_regress(args, parser) -> int:
    started = time.time()
    _defaults(args, scheme="table4")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = _records_from_csv(args.records)
    rows, spec = studies.build_regression_frame(
        records,
        filing_year_fe=bool(args.filing_year_fe),
        confidence_fe=bool(args.confidence_fe),
        cpc_dummies=bool(args.cpc),
    )
    fit = fit_design(rows, spec)
    text, csv_text = summarize(fit, scheme=args.scheme)
    (out / "regression.txt").write_text(text, "utf-8")
    (out / "regression.csv").write_text(csv_text, "utf-8")
    _write_manifest(out, "regress", args, [Path(args.records)],
                    ["regression.txt", "regression.csv"], started)
    print(text)
    return EXIT_OK


def cmd_serve(args, parser) -> int:
    _defaults(args, host="127.0.0.1", port=8080)
    from .service import create_app  # deferred: FastAPI import is heavy

    store = load_store(args.store)
    index = load_index(args.index, store)
    documents = _load_documents(args.documents) if args.documents else {}
    app = create_app(index, store, documents)
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_report(args, parser) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory {run_dir} does not exist")
    sections = []
    for name in ("aggregates.json", "summary.json"):
        path = run_dir / name
        if path.exists():
            payload = json.loads(path.read_text("utf-8"))
            body = json.dumps(payload, sort_keys=True, indent=2)
            sections.append(f"== {name} ==\n{body}")
    for name in ("comparison.txt", "regression.txt"):
        path = run_dir / name
        if path.exists():
            sections.append(f"== {name} ==\n{path.read_text('utf-8').rstrip()}")
    manifest = run_dir / "manifest.json"
    if manifest.exists():
        payload = json.loads(manifest.read_text("utf-8"))
        sections.append(
            f"== manifest ==\ncommand: {payload.get('command')}\n"
            f"version: {payload.get('version')}\nwall_time_s: {payload.get('wall_time_s')}"
        )
    if not sections:
        raise FileNotFoundError(f"{run_dir}: no report-able artifacts found")
    text = "\n\n".join(sections) + "\n"
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    print(text)
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="patsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"patsim {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="INI config file; explicit flags win")
        p.set_defaults(func=func, _parser=p)
        return p

    p = add("ingest", cmd_ingest, help="validate and normalize document/citation dumps")
    p.add_argument("--documents", required=True)
    p.add_argument("--format", choices=["jsonl", "tsv"])
    p.add_argument("--citations")
    p.add_argument("--ppps")
    p.add_argument("--out", required=True)

    p = add("clean", cmd_clean, help="apply abstract cleaning to a document dump")
    p.add_argument("--documents", required=True)
    p.add_argument("--out", required=True)

    p = add("embed", cmd_embed, help="embed documents or import precomputed vectors")
    p.add_argument("--documents")
    p.add_argument("--embedder", choices=["toy", "imported"])
    p.add_argument("--pooling", choices=["cls", "mean"])
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--vectors", help="precomputed vectors (binary float32 or CSV)")
    p.add_argument("--ids", help="ids, one per line (imported embedder)")
    p.add_argument("--out", required=True)

    p = add("index", cmd_index, help="build a search index over a store")
    p.add_argument("--documents", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--mode", choices=["exact", "hnsw"])
    p.add_argument("--hnsw-m", type=int)
    p.add_argument("--hnsw-ef-construction", type=int)
    p.add_argument("--hnsw-ef-search", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("search", cmd_search, help="query a built index")
    p.add_argument("--store", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--query-id")
    p.add_argument("--query-vector", help="file of whitespace/comma separated floats")
    p.add_argument("-k", type=int)
    p.add_argument("--year-min", type=int)
    p.add_argument("--year-max", type=int)
    p.add_argument("--kind", choices=["patent", "paper"])
    p.add_argument("--exclude", help="comma-separated ids to exclude")

    p = add("bench-build", cmd_bench_build, help="construct triplet ranking tasks")
    p.add_argument("--documents", required=True)
    p.add_argument("--citations", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("bench-run", cmd_bench_run, help="rank tasks against stores and score")
    p.add_argument("--tasks", required=True)
    p.add_argument("--patent-store", required=True)
    p.add_argument("--paper-store")
    p.add_argument("--model")
    p.add_argument("--pooling")
    p.add_argument("--out", required=True)

    p = add("bench-compare", cmd_bench_compare, help="cross-model significance comparison")
    p.add_argument("--metrics", nargs="+", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--scheme", choices=["table4", "appendix"])
    p.add_argument("--out", required=True)

    p = add("study-ppp-sep", cmd_study_ppp_sep, help="pair vs citation similarity separation")
    p.add_argument("--ppps", required=True)
    p.add_argument("--citations", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)

    p = add("study-ppp-predict", cmd_study_ppp_predict, help="find paired papers by search")
    p.add_argument("--documents", required=True)
    p.add_argument("--ppps", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("-k", type=int)
    p.add_argument("--window", type=int, help="years around the patent publication")
    p.add_argument("--out", required=True)

    p = add("study-ppc-match", cmd_study_ppc_match, help="citation semantic-match study")
    p.add_argument("--documents", required=True)
    p.add_argument("--citations", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("-k", type=int)
    p.add_argument("--rank-threshold", type=int)
    p.add_argument("--out", required=True)

    p = add("regress", cmd_regress, help="fit the match regression from study records")
    p.add_argument("--records", required=True)
    p.add_argument("--filing-year-fe", action="store_true", default=None)
    p.add_argument("--confidence-fe", action="store_true", default=None)
    p.add_argument("--cpc", action="store_true", default=None)
    p.add_argument("--scheme", choices=["table4", "appendix"])
    p.add_argument("--out", required=True)

    p = add("serve", cmd_serve, help="serve search over HTTP (read-only)")
    p.add_argument("--store", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--documents")
    p.add_argument("--host")
    p.add_argument("--port", type=int)

    p = add("report", cmd_report, help="render artifacts in a run directory as text")
    p.add_argument("run_dir")
    p.add_argument("--out")

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        _apply_config(args, args._parser, args.command)
        return args.func(args, parser)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
