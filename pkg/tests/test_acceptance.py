"""Acceptance suite: every criterion checked at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion. Numbered to mirror the project acceptance checklist.
"""

import random
import time

import numpy as np
import pytest
import scipy.stats

from patsim import cli
from patsim.bench import (
    PerQueryMetrics,
    RankedList,
    TripletTask,
    aggregate,
    average_precision,
    build_tasks,
    rank_task,
    rfr,
    rr_at10,
    run_bench,
    score_task,
)
from patsim.corpus import write_citations, write_documents, select_family_representative
from patsim.embed import (
    EmbeddingStore,
    HashingTextEmbedder,
    embed_corpus,
    load_store,
    save_store,
)
from patsim.index import IndexConfig, SearchFilter, build_index, load_index, save_index
from patsim.service import create_app
from patsim.stats import (
    Categorical,
    Continuous,
    DesignMatrixSpec,
    DummyBlock,
    encode_design,
    fit_design,
    ols_fit,
)
from patsim.studies import ppc_match_study, ppp_ppc_similarity, predict_ppp
from patsim.synthetic import make_corpus

from conftest import make_doc, random_unit_store


def report(criterion, detail=""):
    print(f"PASS  criterion {criterion}: {detail}")


# --- naive single-purpose oracles, independent of the implementation ----------


def oracle_rfr(ids, relevant):
    for position, doc_id in enumerate(ids, start=1):
        if doc_id in relevant:
            return position
    raise AssertionError


def oracle_ap(ids, relevant):
    total = 0.0
    for k in range(1, len(ids) + 1):
        if ids[k - 1] in relevant:
            total += sum(1 for x in ids[:k] if x in relevant) / k
    return total / len(relevant)


def oracle_rr10(ids, relevant):
    position = oracle_rfr(ids, relevant)
    return 1.0 / position if position <= 10 else 0.0


def ranking_with_relevant_at(positions, n=30):
    relevant = {f"r{p:02d}" for p in sorted(positions)}
    ids, filler = [], 0
    for pos in range(1, n + 1):
        if pos in positions:
            ids.append(f"r{pos:02d}")
        else:
            filler += 1
            ids.append(f"c{filler:02d}")
    ranked = RankedList(
        task_id="t", ordered=tuple((x, float(n - i)) for i, x in enumerate(ids))
    )
    return ranked, relevant


def test_c01_metric_exactness():
    started = time.time()
    rng = random.Random(20240501)
    for _ in range(1000):
        positions = set(rng.sample(range(1, 31), 5))
        ranked, relevant = ranking_with_relevant_at(positions)
        ids = ranked.ids()
        assert rfr(ranked, relevant) == oracle_rfr(ids, relevant)
        assert abs(average_precision(ranked, relevant) - oracle_ap(ids, relevant)) <= 1e-12
        assert abs(rr_at10(ranked, relevant) - oracle_rr10(ids, relevant)) <= 1e-12
    perfect = [
        score_task_like(ranking_with_relevant_at({1, 2, 3, 4, 5}))
        for _ in range(10)
    ]
    report_obj = aggregate(perfect)
    assert report_obj.map == 1.0
    assert report_obj.mrr10 == 1.0
    assert report_obj.avg_rfr == 1.0
    elapsed = time.time() - started
    assert elapsed < 5.0
    report(1, f"1000 fixtures vs naive oracles exact; perfect ranking aggregates = 1 "
              f"({elapsed:.2f}s < 5s)")


_task_counter = iter(range(10**6))


def score_task_like(pair):
    ranked, relevant = pair
    ranked = RankedList(task_id=f"t{next(_task_counter):06d}", ordered=ranked.ordered)
    return PerQueryMetrics(
        task_id=ranked.task_id,
        rfr=rfr(ranked, relevant),
        ap=average_precision(ranked, relevant),
        rr10=rr_at10(ranked, relevant),
    )


def test_c02_equation_anchored_spot_values():
    ranked, relevant = ranking_with_relevant_at({1, 2, 4})
    assert average_precision(ranked, relevant) == (1.0 + 1.0 + 0.75) / 3.0
    assert average_precision(ranked, relevant) == pytest.approx(11.0 / 12.0, abs=0)
    ranked, relevant = ranking_with_relevant_at({10, 20, 30})
    assert average_precision(ranked, relevant) == pytest.approx(0.1, abs=1e-16)
    ranked, relevant = ranking_with_relevant_at({11})
    assert rr_at10(ranked, relevant) == 0.0
    report(2, "AP({1,2,4})=11/12, AP({10,20,30})=0.1, RR@10(rank 11)=0 exact")


def test_c03_exact_search_oracle():
    started = time.time()
    rng = np.random.default_rng(33)
    for trial in range(200):
        n = int(rng.integers(10, 5001))
        years = rng.integers(1970, 2020, size=n).tolist()
        kinds = ["paper" if x < 0.7 else "patent" for x in rng.random(n)]
        store, meta = random_unit_store(n, 64, seed=trial, years=years, kinds=kinds)
        index = build_index(store, meta, IndexConfig(mode="exact"))
        k = int(rng.integers(1, 64))
        search_filter = None
        if trial % 2:
            lo = int(rng.integers(1970, 2010))
            search_filter = SearchFilter(
                year_min=lo, year_max=lo + int(rng.integers(5, 30)),
                kind="paper" if trial % 4 == 1 else None,
            )
        query = rng.normal(size=64).astype(np.float32)
        got = index.search(query, k, search_filter=search_filter)
        # oracle: full scan over the same cosine scores, full sort, no shortcuts
        qn = query / np.linalg.norm(query)
        ids = sorted(store.ids())
        scores = store.matrix(ids) @ qn
        rows = []
        for doc_id, score in zip(ids, scores):
            year, kind = meta[doc_id]
            if search_filter is not None and not search_filter.matches(year, kind):
                continue
            rows.append((doc_id, float(score)))
        rows.sort(key=lambda pair: (-pair[1], pair[0]))
        assert [g.doc_id for g in got] == [r[0] for r in rows[:k]]
    elapsed = time.time() - started
    assert elapsed < 30.0
    report(3, f"200 filtered instances equal brute-force sort incl. tie order "
              f"({elapsed:.2f}s < 30s)")


def test_c04_ann_quality():
    started = time.time()
    n, dim = 10000, 64
    years = [1970 + i % 50 for i in range(n)]  # any 15-year window keeps 30%
    store, meta = random_unit_store(n, dim, seed=404, years=years)
    hnsw = build_index(store, meta, IndexConfig(mode="hnsw", seed=11))
    exact = build_index(store, meta, IndexConfig(mode="exact"))
    rng = np.random.default_rng(505)
    flt = SearchFilter(year_min=1980, year_max=1994)
    retained = sum(1 for y in years if 1980 <= y <= 1994) / n
    assert abs(retained - 0.30) < 0.005
    hits = fhits = 0
    for _ in range(100):
        query = rng.normal(size=dim).astype(np.float32)
        approx = {r.doc_id for r in hnsw.search(query, 10)}
        truth = {r.doc_id for r in exact.search(query, 10)}
        hits += len(approx & truth)
        fapprox = {r.doc_id for r in hnsw.search(query, 10, search_filter=flt)}
        ftruth = {r.doc_id for r in exact.search(query, 10, search_filter=flt)}
        fhits += len(fapprox & ftruth)
    recall = hits / 1000
    frecall = fhits / 1000
    elapsed = time.time() - started
    assert recall >= 0.95, f"unfiltered recall {recall}"
    assert frecall >= 0.90, f"filtered recall {frecall}"
    assert elapsed < 60.0
    report(4, f"recall@10 {recall:.3f} >= 0.95, filtered {frecall:.3f} >= 0.90 "
              f"({elapsed:.1f}s < 60s)")


def test_c05_benchmark_construction_rules():
    corpus = make_corpus(n_families=12, cited_per_family=5, n_decoys=250, seed=95)
    documents = corpus.documents

    tasks = build_tasks(corpus.citations, documents, rng_seed=5)
    assert tasks, "fixture must qualify at least one family"
    for task in tasks:
        assert len(task.positives) == 5
        assert len(task.negatives) == 25
        for neg in task.negatives:
            year = documents[neg].pub_year
            assert task.family_year - 38 <= year <= task.family_year - 1

    # confidence-10 requirement: demoting one family's links removes its task
    family_patents = {t.focal_patent_id for t in tasks}
    victim = sorted(family_patents)[0]
    demoted = [
        c if c.patent_id != victim or c.confidence != 10
        else type(c)(c.patent_id, c.paper_id, 9, c.location, c.self_citation)
        for c in corpus.citations
    ]
    reduced = build_tasks(demoted, documents, rng_seed=5)
    assert victim not in {t.focal_patent_id for t in reduced}

    # determinism under a fixed seed; family set stable across seeds
    again = build_tasks(corpus.citations, documents, rng_seed=5)
    assert again == tasks
    other_seed = build_tasks(corpus.citations, documents, rng_seed=6)
    assert [t.focal_patent_id for t in other_seed] == [t.focal_patent_id for t in tasks]
    report(5, f"{len(tasks)} tasks: counts, window, confidence filter, determinism")


def test_c06_family_representative():
    order = ["EP", "WO", "US", "JP", "CN", "KR", "DE", "FR", "GB", "IT",
             "ES", "SE", "NL", "ZZ"]
    members = [
        make_doc(doc_id=f"{a}-{i}", authority=a, application_id=str(100 + i),
                 family_id="FAM")
        for i, a in enumerate(order)
    ]
    remaining = list(members)
    for expected in order[:-1]:
        winner = select_family_representative(remaining)
        assert winner.authority == expected
        remaining.remove(winner)
    assert select_family_representative(remaining).authority == "ZZ"

    ties = [
        make_doc(doc_id="US-a", authority="US", application_id="2024", family_id="T"),
        make_doc(doc_id="US-b", authority="US", application_id="2023", family_id="T"),
    ]
    assert select_family_representative(ties).id == "US-b"
    report(6, "14-authority pecking order and lower-application-id ties exact")


@pytest.fixture(scope="module")
def e2e_corpus():
    corpus = make_corpus(n_families=30, cited_per_family=5, n_decoys=400, seed=777)
    embedder = HashingTextEmbedder(dim=256, seed=9)
    store = embed_corpus(corpus.documents.values(), embedder, pooling="cls", dim=256)
    return corpus, store


def test_c07_end_to_end_separation(e2e_corpus):
    started = time.time()
    corpus, store = e2e_corpus
    result = ppp_ppc_similarity(corpus.ppps, corpus.citations, store)
    ppp = [r.similarity for r in result.records if r.pair_type == "ppp"]
    ppc = [r.similarity for r in result.records if r.pair_type == "ppc"]
    assert np.mean(ppp) > np.mean(ppc)
    test = scipy.stats.ttest_ind(ppp, ppc, equal_var=False, alternative="greater")
    elapsed = time.time() - started
    assert test.pvalue < 0.01
    assert elapsed < 60.0
    report(7, f"mean ppp {np.mean(ppp):.3f} > mean ppc {np.mean(ppc):.3f}, "
              f"one-sided Welch p={test.pvalue:.2e} < 0.01 ({elapsed:.1f}s < 60s)")


def test_c08_end_to_end_ranking(e2e_corpus):
    started = time.time()
    corpus, store = e2e_corpus
    tasks = build_tasks(corpus.citations, corpus.documents, rng_seed=42)
    assert tasks
    result = run_bench(tasks, store, store)

    # Monte-Carlo baseline: 10,000 random shuffles of every task's ranking
    rng = np.random.default_rng(606)
    n_shuffles, n_tasks = 10000, len(tasks)
    uniforms = rng.random((n_shuffles * n_tasks, 30))
    order = np.argsort(uniforms, axis=1)
    # rank positions (1-based) of the 5 relevant items in each shuffle
    relevant_positions = np.argsort(np.where(order < 5, order, 99), axis=1)[:, :5] + 1
    relevant_positions.sort(axis=1)
    hits = np.arange(1, 6)[None, :]
    ap = (hits / relevant_positions).mean(axis=1)
    baseline_map = float(ap.reshape(n_shuffles, n_tasks).mean(axis=1).mean())
    elapsed = time.time() - started
    assert result.map >= 2.0 * baseline_map, (result.map, baseline_map)
    assert elapsed < 120.0
    report(8, f"toy MAP {result.map:.3f} >= 2 x MC baseline {baseline_map:.3f} "
              f"({elapsed:.1f}s < 120s)")


def test_c09_ols_correctness():
    started = time.time()
    rng = np.random.default_rng(909)

    # normal-equations oracle, 1e-8 relative
    for _ in range(5):
        matrix = rng.normal(size=(500, 8))
        y = matrix @ rng.normal(size=8) + rng.normal(size=500)
        fit = ols_fit(matrix, y)
        oracle = np.linalg.solve(matrix.T @ matrix, matrix.T @ y)
        got = np.array([fit.coefficients[f"x{i}"] for i in range(8)])
        np.testing.assert_allclose(got, oracle, rtol=1e-8)

    # dummy-coding group-mean identity, 1e-10
    groups = ["a", "b", "c"]
    rows = [{"y": rng.normal() + i % 3, "grp": groups[i % 3]} for i in range(900)]
    fit = fit_design(rows, DesignMatrixSpec("y", [Categorical("grp", "a")]))
    mean = lambda g: np.mean([r["y"] for r in rows if r["grp"] == g])
    assert abs(fit.coefficients["Intercept"] - mean("a")) <= 1e-10
    assert abs(fit.coefficients["grp[b]"] - (mean("b") - mean("a"))) <= 1e-10
    assert abs(fit.coefficients["grp[c]"] - (mean("c") - mean("a"))) <= 1e-10

    # known-beta recovery within 4 standard errors at n = 10,000
    n = 10000
    matrix = np.column_stack([np.ones(n), rng.normal(size=(n, 5))])
    beta_true = np.array([0.2, -1.5, 0.8, 0.0, 2.0, -0.4])
    y = matrix @ beta_true + rng.normal(size=n)
    fit = ols_fit(matrix, y)
    for i in range(6):
        name = f"x{i}"
        assert abs(fit.coefficients[name] - beta_true[i]) <= 4.0 * fit.std_errors[name]

    # match-regression shaped design on 100,000 synthetic rows
    authorities = ["EP", "US", "AU", "CA", "CN", "DE", "EA", "ES", "FR", "GB",
                   "IL", "IT", "JP", "KR", "RU", "TW"]
    big_started = time.time()
    n = 100000
    rows = []
    for i in range(n):
        row = {
            "matched": float(rng.random() < 0.13),
            "authority": authorities[int(rng.integers(0, 16))],
            "front_and_body": float(rng.random() < 0.3),
            "self_citation": float(rng.random() < 0.1),
            "n_paper_citations": float(rng.integers(1, 40)),
            "filing_year": str(1990 + int(rng.integers(0, 30))),
            "confidence": f"{int(rng.integers(1, 11)):02d}",
        }
        for s, section in enumerate("ABCDEFGHY"):
            row[f"cpc_{section}"] = float(rng.random() < 0.25)
        rows.append(row)
    spec = DesignMatrixSpec("matched", [
        Categorical("authority", "EP"),
        DummyBlock(["front_and_body"]),
        DummyBlock(["self_citation"]),
        Continuous("n_paper_citations"),
        Categorical("filing_year", "1990"),
        Categorical("confidence", "01"),
        DummyBlock([f"cpc_{s}" for s in "ABCDEFGHY"]),
    ])
    matrix, names, response = encode_design(rows, spec)
    assert sum(1 for c in names if c.startswith("authority[")) == 15
    fit = ols_fit(matrix, response, names)
    big_elapsed = time.time() - big_started
    assert fit.n == n
    assert big_elapsed < 30.0
    elapsed = time.time() - started
    report(9, f"oracle 1e-8, group means 1e-10, beta within 4 SE, "
              f"{len(names)}-column fit on 100k rows in {big_elapsed:.1f}s < 30s "
              f"(total {elapsed:.1f}s)")


@pytest.fixture(scope="module")
def big_corpus():
    corpus = make_corpus(n_families=60, cited_per_family=5, n_decoys=9560, seed=1010)
    assert len(corpus.documents) >= 10000
    embedder = HashingTextEmbedder(dim=64, seed=2)
    store = embed_corpus(corpus.documents.values(), embedder, pooling="cls", dim=64)
    meta = {d.id: (d.pub_year, d.kind) for d in corpus.documents.values()}
    return corpus, store, meta


def test_c10_study_pipeline_oracle(big_corpus):
    corpus, store, meta = big_corpus
    index = build_index(store, meta, IndexConfig(mode="exact"))
    documents = corpus.documents
    matrix_ids = sorted(store.ids())
    matrix = store.matrix(matrix_ids).astype(np.float64)

    def oracle_positions(patent_id, year_min, year_max, k):
        """Exact scan: all papers in window sorted by (-score, id)."""
        query = store.get(patent_id).astype(np.float64)
        scores = matrix @ query
        rows = []
        for doc_id, score in zip(matrix_ids, scores):
            year, kind = meta[doc_id]
            if kind != "paper":
                continue
            if year_min is not None and year < year_min:
                continue
            if year_max is not None and year > year_max:
                continue
            rows.append((doc_id, float(score)))
        rows.sort(key=lambda pair: (-pair[1], pair[0]))
        return {doc_id: i + 1 for i, (doc_id, _s) in enumerate(rows[:k])}

    patent_year = {d.id: d.pub_year for d in documents.values() if d.kind == "patent"}
    prediction = predict_ppp(corpus.ppps, index, store, patent_year, k=1000)
    matched_ranks = []
    for outcome in prediction.outcomes:
        year = patent_year[outcome.patent_id]
        positions = oracle_positions(outcome.patent_id, year - 9, year + 9, 1000)
        assert outcome.rank == positions.get(outcome.paper_id)
        if outcome.rank is not None:
            matched_ranks.append(outcome.rank)
    oracle_rate = 100.0 * len(matched_ranks) / len(prediction.outcomes)
    assert prediction.summary["total"].share_pct == oracle_rate
    # ECDF points recomputed naively
    sorted_ranks = sorted(matched_ranks)
    oracle_ecdf = []
    for rank in sorted(set(sorted_ranks)):
        share = sum(1 for r in sorted_ranks if r <= rank) / len(sorted_ranks)
        oracle_ecdf.append((rank, share))
    assert prediction.ecdf["total"] == oracle_ecdf

    match = ppc_match_study(corpus.citations, index, store, documents,
                            k=3000, rank_threshold=1000)
    per_patent = {}
    for record in match.records:
        filing = documents[record.patent_id].filing_year
        positions = oracle_positions(record.patent_id, None, filing, 3000)
        rank = positions.get(record.paper_id)
        expected = rank is not None and rank < 1000
        assert record.matched == expected
        per_patent.setdefault(record.patent_id, []).append(expected)
    for patent_id, flags in per_patent.items():
        assert match.per_patent_share[patent_id] == sum(flags) / len(flags)
    oracle_match_rate = sum(r.matched for r in match.records) / len(match.records)
    assert match.match_rate == oracle_match_rate
    report(10, f"ranks, flags, rates, ECDF, shares equal exact scan on "
               f"{len(documents)} documents ({len(match.records)} links)")


def test_c11_persistence_and_determinism(tmp_path, big_corpus):
    corpus, store, meta = big_corpus
    # bitwise store round-trip
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_store(store, p1)
    save_store(load_store(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()

    # index round-trip: bytes identical after save -> load -> save
    small_store, small_meta = random_unit_store(500, 32, seed=7)
    index = build_index(small_store, small_meta, IndexConfig(mode="hnsw", seed=3))
    i1, i2 = tmp_path / "i1.bin", tmp_path / "i2.bin"
    save_index(index, i1)
    save_index(load_index(i1, small_store), i2)
    assert i1.read_bytes() == i2.read_bytes()

    # repeated pipeline runs with one seed produce byte-identical CSVs
    root = tmp_path / "corpus"
    root.mkdir()
    small = make_corpus(n_families=10, n_decoys=150, seed=5)
    write_documents(root / "documents.jsonl", small.document_list())
    write_citations(root / "citations.tsv", small.citations)
    docs = str(root / "documents.jsonl")
    for run_name in ("r1", "r2"):
        out = tmp_path / run_name
        assert cli.main(["embed", "--documents", docs, "--dim", "64", "--seed", "8",
                         "--out", str(out / "store")]) == 0
        assert cli.main(["bench-build", "--documents", docs,
                         "--citations", str(root / "citations.tsv"),
                         "--seed", "21", "--out", str(out / "tasks")]) == 0
        assert cli.main(["bench-run", "--tasks", str(out / "tasks" / "tasks.jsonl"),
                         "--patent-store", str(out / "store" / "store.bin"),
                         "--model", "toy", "--out", str(out / "bench")]) == 0
    assert (tmp_path / "r1" / "store" / "store.bin").read_bytes() == \
        (tmp_path / "r2" / "store" / "store.bin").read_bytes()
    assert (tmp_path / "r1" / "tasks" / "tasks.jsonl").read_bytes() == \
        (tmp_path / "r2" / "tasks" / "tasks.jsonl").read_bytes()
    assert (tmp_path / "r1" / "bench" / "metrics.csv").read_bytes() == \
        (tmp_path / "r2" / "bench" / "metrics.csv").read_bytes()
    report(11, "store/index round-trips bitwise; seeded pipeline CSVs byte-identical")


def test_c12_service_contract():
    from fastapi.testclient import TestClient

    rng = np.random.default_rng(3)
    store = EmbeddingStore(dim=16)
    documents = {}
    for i in range(25):
        doc = make_doc(doc_id=f"svc{i:02d}", kind="paper", year=1990 + i,
                       title=f"t {i}", abstract=f"a {i}.")
        documents[doc.id] = doc
        vec = rng.normal(size=16)
        store.add(doc.id, (vec / np.linalg.norm(vec)).astype(np.float32))
    index = build_index(store, {d.id: (d.pub_year, d.kind) for d in documents.values()})
    client = TestClient(create_app(index, store, documents))

    health = client.get("/healthz")
    assert health.status_code == 200
    assert health.json() == {"status": "ok"}

    hit = client.post("/v1/search", json={"query_id": "svc10", "k": 1})
    assert hit.status_code == 200
    payload = hit.json()
    assert payload["results"][0]["doc_id"] == "svc10"
    assert payload["results"][0]["score"] == pytest.approx(1.0, abs=1e-6)
    assert "index_checksum" in payload

    empty = client.post("/v1/search",
                        json={"query_id": "svc10", "k": 5, "filter": {"year_min": 2500}})
    assert empty.status_code == 200
    assert empty.json()["results"] == []

    doc = client.get("/v1/documents/svc03")
    assert doc.status_code == 200
    assert doc.json()["id"] == "svc03"
    assert client.get("/v1/documents/ghost").status_code == 404
    report(12, "healthz, self-retrieval k=1 score 1.0, all-excluded filter empty 200")
