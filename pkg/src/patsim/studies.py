"""Validation studies: pair-type similarity separation, pair prediction over
a candidate universe, and the citation semantic-match study with its
regression frame.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import CitationLink, Document, PPPRecord
from .embed import EmbeddingStore
from .index import CosineKNNIndex, SearchFilter
from . import stats

logger = logging.getLogger(__name__)

SIMILARITY_BIN_WIDTH = 0.005
SHARE_BIN_WIDTH = 0.05
CPC_ORDER = "ABCDEFGHY"

_AUTHORITY_RE = re.compile(r"^[A-Z]{2}$")


class StudyError(ValueError):
    """Contract violation in a study input."""


@dataclass(frozen=True)
class PairSimRecord:
    patent_id: str
    paper_id: str
    pair_type: str
    similarity: float


@dataclass
class SimilarityStudyResult:
    records: list[PairSimRecord]
    bin_edges: np.ndarray
    histograms: dict[str, np.ndarray]
    missing_embeddings: dict[str, int]

    def mean(self, pair_type: str) -> float:
        values = [r.similarity for r in self.records if r.pair_type == pair_type]
        if not values:
            raise StudyError(f"no records of type {pair_type!r}")
        return float(np.mean(values))


def ppp_ppc_similarity(
    ppps: Sequence[PPPRecord],
    ppcs: Sequence[CitationLink],
    store: EmbeddingStore,
) -> SimilarityStudyResult:
    """Cosine similarity per pair, with citation pairs that duplicate a
    verified pair excluded. Pairs lacking embeddings are counted, never
    silently dropped.
    """
    ppp_keys = {(p.patent_id, p.paper_id) for p in ppps}
    records: list[PairSimRecord] = []
    missing = {"ppp": 0, "ppc": 0}

    def score(patent_id: str, paper_id: str, pair_type: str) -> None:
        if patent_id not in store or paper_id not in store:
            missing[pair_type] += 1
            return
        sim = float(np.clip(store.get(patent_id) @ store.get(paper_id), -1.0, 1.0))
        records.append(PairSimRecord(patent_id, paper_id, pair_type, sim))

    for pair in ppps:
        score(pair.patent_id, pair.paper_id, "ppp")
    for link in ppcs:
        if (link.patent_id, link.paper_id) in ppp_keys:
            continue
        score(link.patent_id, link.paper_id, "ppc")

    if not records:
        raise StudyError("no scorable pairs left after exclusion")
    edges = np.arange(-1.0, 1.0 + SIMILARITY_BIN_WIDTH / 2, SIMILARITY_BIN_WIDTH)
    histograms = {}
    for pair_type in ("ppp", "ppc"):
        values = [r.similarity for r in records if r.pair_type == pair_type]
        histograms[pair_type], _ = np.histogram(values, bins=edges)
    if missing["ppp"] or missing["ppc"]:
        logger.info(
            "pairs without embeddings: %d ppp, %d ppc", missing["ppp"], missing["ppc"]
        )
    return SimilarityStudyResult(
        records=records, bin_edges=edges, histograms=histograms, missing_embeddings=missing
    )


@dataclass(frozen=True)
class PPPSearchOutcome:
    patent_id: str
    paper_id: str
    rank: int | None
    confidence_level: int


@dataclass(frozen=True)
class RankSummary:
    count: int
    share_pct: float
    median: float | None
    mean: float | None
    std: float | None


@dataclass
class PPPPredictionResult:
    outcomes: list[PPPSearchOutcome]
    summary: dict[str, RankSummary]
    ecdf: dict[str, list[tuple[int, float]]]
    unscored: list[str] = field(default_factory=list)


def _rank_summary(ranks: list[int], total: int) -> RankSummary:
    if not ranks:
        return RankSummary(count=total, share_pct=0.0, median=None, mean=None, std=None)
    arr = np.asarray(ranks, dtype=float)
    return RankSummary(
        count=total,
        share_pct=100.0 * len(ranks) / total,
        median=float(np.median(arr)),
        mean=float(arr.mean()),
        std=float(arr.std(ddof=1)) if len(ranks) > 1 else 0.0,
    )


def _ecdf(ranks: list[int]) -> list[tuple[int, float]]:
    if not ranks:
        return []
    arr = np.sort(np.asarray(ranks))
    points = []
    n = len(arr)
    for rank in np.unique(arr):
        points.append((int(rank), float(np.searchsorted(arr, rank, side="right") / n)))
    return points


def predict_ppp(
    ppps: Sequence[PPPRecord],
    paper_index: CosineKNNIndex,
    patent_store: EmbeddingStore,
    patent_year: Mapping[str, int],
    k: int = 1000,
    window_years: int = 9,
) -> PPPPredictionResult:
    """Search the paper universe for each patent's paired paper.

    Candidates are papers published within +-window_years of the patent;
    the paired paper's 1-based rank among the k most similar is recorded
    when present. Patents without embeddings are flagged unscored and
    excluded from the denominators.
    """
    by_patent: dict[str, list[PPPRecord]] = {}
    for pair in ppps:
        by_patent.setdefault(pair.patent_id, []).append(pair)

    outcomes: list[PPPSearchOutcome] = []
    unscored: list[str] = []
    for patent_id in sorted(by_patent):
        if patent_id not in patent_store:
            unscored.append(patent_id)
            continue
        if patent_id not in patent_year:
            raise StudyError(f"no publication year for patent {patent_id!r}")
        year = patent_year[patent_id]
        window = SearchFilter(year_min=year - window_years, year_max=year + window_years,
                              kind="paper")
        neighbors = paper_index.search(patent_store.get(patent_id), k, search_filter=window)
        position = {n.doc_id: i + 1 for i, n in enumerate(neighbors)}
        for pair in sorted(by_patent[patent_id], key=lambda p: p.paper_id):
            outcomes.append(
                PPPSearchOutcome(
                    patent_id=patent_id,
                    paper_id=pair.paper_id,
                    rank=position.get(pair.paper_id),
                    confidence_level=pair.confidence_level,
                )
            )

    summary: dict[str, RankSummary] = {}
    ecdf: dict[str, list[tuple[int, float]]] = {}
    for level in (1, 2, 3, 4):
        subset = [o for o in outcomes if o.confidence_level == level]
        if not subset:
            continue
        ranks = [o.rank for o in subset if o.rank is not None]
        summary[str(level)] = _rank_summary(ranks, len(subset))
        ecdf[str(level)] = _ecdf(ranks)
    all_ranks = [o.rank for o in outcomes if o.rank is not None]
    summary["total"] = _rank_summary(all_ranks, len(outcomes)) if outcomes else _rank_summary([], 0)
    ecdf["total"] = _ecdf(all_ranks)
    if unscored:
        logger.info("%d patents had no embedding and were left unscored", len(unscored))
    return PPPPredictionResult(outcomes=outcomes, summary=summary, ecdf=ecdf, unscored=unscored)


@dataclass(frozen=True)
class PPCMatchRecord:
    patent_id: str
    paper_id: str
    matched: bool
    authority: str
    filing_year: int
    location: str
    self_citation: bool
    confidence: int
    cpc_sections: frozenset[str]
    n_paper_citations: int


@dataclass
class PPCMatchResult:
    records: list[PPCMatchRecord]
    per_patent_share: dict[str, float]
    share_bin_edges: np.ndarray
    share_histogram: np.ndarray

    @property
    def match_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.matched for r in self.records) / len(self.records)


def ppc_match_study(
    ppcs: Sequence[CitationLink],
    paper_index: CosineKNNIndex,
    patent_store: EmbeddingStore,
    documents: Mapping[str, Document],
    k: int = 3000,
    rank_threshold: int = 1000,
) -> PPCMatchResult:
    """Flag each citation as matched when the cited paper ranks inside the
    threshold among papers published no later than the patent's filing year.
    """
    if k < rank_threshold:
        raise StudyError(f"k={k} must be >= rank_threshold={rank_threshold}")
    by_patent: dict[str, list[CitationLink]] = {}
    for link in ppcs:
        by_patent.setdefault(link.patent_id, []).append(link)

    records: list[PPCMatchRecord] = []
    per_patent_share: dict[str, float] = {}
    for patent_id in sorted(by_patent):
        patent = documents.get(patent_id)
        if patent is None:
            raise StudyError(f"citing patent {patent_id!r} missing from documents")
        if patent.filing_year is None:
            raise StudyError(f"patent {patent_id!r} has no filing year")
        if patent_id not in patent_store:
            raise StudyError(f"patent {patent_id!r} has no embedding")
        links = sorted(by_patent[patent_id], key=lambda l: l.paper_id)
        window = SearchFilter(year_max=patent.filing_year, kind="paper")
        neighbors = paper_index.search(patent_store.get(patent_id), k, search_filter=window)
        position = {n.doc_id: i + 1 for i, n in enumerate(neighbors)}
        n_matched = 0
        for link in links:
            rank = position.get(link.paper_id)
            matched = rank is not None and rank < rank_threshold
            n_matched += matched
            records.append(
                PPCMatchRecord(
                    patent_id=patent_id,
                    paper_id=link.paper_id,
                    matched=matched,
                    authority=patent.authority or "",
                    filing_year=patent.filing_year,
                    location=link.location,
                    self_citation=link.self_citation,
                    confidence=link.confidence,
                    cpc_sections=patent.cpc_sections,
                    n_paper_citations=len(links),
                )
            )
        per_patent_share[patent_id] = n_matched / len(links)

    edges = np.arange(0.0, 1.0 + SHARE_BIN_WIDTH / 2, SHARE_BIN_WIDTH)
    histogram, _ = np.histogram(list(per_patent_share.values()), bins=edges)
    return PPCMatchResult(
        records=records,
        per_patent_share=per_patent_share,
        share_bin_edges=edges,
        share_histogram=histogram,
    )


def build_regression_frame(
    records: Sequence[PPCMatchRecord],
    filing_year_fe: bool = False,
    confidence_fe: bool = False,
    cpc_dummies: bool = False,
    reference_authority: str = "EP",
) -> tuple[list[dict], stats.DesignMatrixSpec]:
    """Rows plus a design spec for the match regression.

    Base terms: authority (reference EP), the front-and-body location
    dummy, the self-citation dummy, and the paper-citation count. Year and
    confidence fixed effects and the non-exclusive CPC section block are
    optional.
    """
    if not records:
        raise StudyError("no match records to encode")
    bad = sorted({r.patent_id for r in records if not _AUTHORITY_RE.match(r.authority)})
    if bad:
        raise StudyError(f"unknown authority code on patents: {bad[:20]}")
    rows = []
    for r in records:
        row = {
            "matched": 1.0 if r.matched else 0.0,
            "authority": r.authority,
            "front_and_body": 1.0 if r.location == "front_and_body" else 0.0,
            "self_citation": 1.0 if r.self_citation else 0.0,
            "n_paper_citations": float(r.n_paper_citations),
            "filing_year": str(r.filing_year),
            "confidence": f"{r.confidence:02d}",
        }
        for section in CPC_ORDER:
            row[f"cpc_{section}"] = 1.0 if section in r.cpc_sections else 0.0
        rows.append(row)

    terms: list[stats.Term] = [
        stats.Categorical("authority", reference_authority),
        stats.DummyBlock(["front_and_body"]),
        stats.DummyBlock(["self_citation"]),
        stats.Continuous("n_paper_citations"),
    ]
    if filing_year_fe:
        reference_year = str(min(r.filing_year for r in records))
        terms.append(stats.Categorical("filing_year", reference_year))
    if confidence_fe:
        reference_conf = f"{min(r.confidence for r in records):02d}"
        terms.append(stats.Categorical("confidence", reference_conf))
    if cpc_dummies:
        terms.append(stats.DummyBlock([f"cpc_{s}" for s in CPC_ORDER]))
    spec = stats.DesignMatrixSpec(response="matched", terms=terms)
    return rows, spec
