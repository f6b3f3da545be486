"""Triplet ranking benchmark: task construction, metrics, model comparison.

Each task asks a model to rank 5 cited ("positive") papers above 25
non-cited ("negative") papers drawn from the patent family's risk window.
Metrics are rank of first relevant, average precision, and reciprocal rank
cut off at 10.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import CitationLink, Document, is_english, select_family_representative
from .embed import EmbeddingStore
from .index import cosine
from . import stats

logger = logging.getLogger(__name__)

N_POSITIVES = 5
N_NEGATIVES = 25
RISK_WINDOW_YEARS = 38
REQUIRED_CONFIDENCE = 10
RR_CUTOFF = 10


class BenchError(ValueError):
    """Contract violation in task construction or metric computation."""


@dataclass(frozen=True)
class TripletTask:
    focal_patent_id: str
    positives: frozenset[str]
    negatives: frozenset[str]
    family_year: int

    def __post_init__(self):
        object.__setattr__(self, "positives", frozenset(self.positives))
        object.__setattr__(self, "negatives", frozenset(self.negatives))
        if len(self.positives) != N_POSITIVES:
            raise BenchError(f"task {self.focal_patent_id}: need {N_POSITIVES} positives")
        if len(self.negatives) != N_NEGATIVES:
            raise BenchError(f"task {self.focal_patent_id}: need {N_NEGATIVES} negatives")
        if self.positives & self.negatives:
            raise BenchError(f"task {self.focal_patent_id}: positives overlap negatives")
        if self.focal_patent_id in self.positives | self.negatives:
            raise BenchError(f"task {self.focal_patent_id}: focal appears among candidates")

    @property
    def task_id(self) -> str:
        return self.focal_patent_id

    @property
    def candidates(self) -> frozenset[str]:
        return self.positives | self.negatives


@dataclass(frozen=True)
class RankedList:
    task_id: str
    ordered: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "ordered", tuple(self.ordered))
        scores = [s for _i, s in self.ordered]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise BenchError(f"ranked list {self.task_id}: scores increase")

    def ids(self) -> list[str]:
        return [i for i, _s in self.ordered]


@dataclass(frozen=True)
class PerQueryMetrics:
    task_id: str
    rfr: int
    ap: float
    rr10: float


@dataclass(frozen=True)
class MetricReport:
    per_query: tuple[PerQueryMetrics, ...]
    avg_rfr: float
    map: float
    mrr10: float
    query_count: int


def build_tasks(
    citations: Sequence[CitationLink],
    documents: Mapping[str, Document],
    rng_seed: int,
) -> list[TripletTask]:
    """One task per qualifying DocDB family, deterministic under the seed.

    Only top-confidence citations count. A family qualifies with at least 5
    distinct cited papers carrying English abstracts; 5 positives are drawn
    uniformly, 25 negatives come from English papers published 1 to 38 years
    before the family's earliest publication year. Families with a short
    risk set are skipped with a logged reason.
    """
    english_cache: dict[str, bool] = {}

    def english(doc: Document) -> bool:
        flag = english_cache.get(doc.id)
        if flag is None:
            flag = is_english(doc)
            english_cache[doc.id] = flag
        return flag

    cited_by_family: dict[str, set[str]] = {}
    members_by_family: dict[str, list[Document]] = {}
    for link in citations:
        if link.confidence != REQUIRED_CONFIDENCE:
            continue
        patent = documents.get(link.patent_id)
        paper = documents.get(link.paper_id)
        if patent is None:
            raise BenchError(f"citation references unknown patent {link.patent_id!r}")
        if paper is None:
            raise BenchError(f"citation references unknown paper {link.paper_id!r}")
        family = patent.family_id or patent.id
        cited_by_family.setdefault(family, set()).add(link.paper_id)
        members = members_by_family.setdefault(family, [])
        if all(m.id != patent.id for m in members):
            members.append(patent)

    papers = [doc for doc in documents.values() if doc.kind == "paper"]
    english_papers = sorted((p for p in papers if english(p)), key=lambda d: d.id)
    paper_year = {p.id: p.pub_year for p in english_papers}

    rng = random.Random(rng_seed)
    tasks: list[TripletTask] = []
    for family in sorted(cited_by_family):
        members = members_by_family[family]
        cited = cited_by_family[family]
        cited_english = sorted(
            pid for pid in cited if documents[pid].kind == "paper" and english(documents[pid])
        )
        if len(cited_english) < N_POSITIVES:
            logger.info(
                "family %s skipped: %d English cited papers (< %d)",
                family, len(cited_english), N_POSITIVES,
            )
            continue
        family_year = min(m.pub_year for m in members)
        focal = _family_focal(members)
        if len(cited_english) == N_POSITIVES:
            positives = list(cited_english)
        else:
            positives = rng.sample(cited_english, N_POSITIVES)
        risk_set = [
            pid
            for pid, year in ((p.id, paper_year[p.id]) for p in english_papers)
            if pid not in cited
            and family_year - RISK_WINDOW_YEARS <= year <= family_year - 1
        ]
        if len(risk_set) < N_NEGATIVES:
            logger.info(
                "family %s skipped: risk set %d (< %d)", family, len(risk_set), N_NEGATIVES
            )
            continue
        negatives = rng.sample(risk_set, N_NEGATIVES)
        tasks.append(
            TripletTask(
                focal_patent_id=focal.id,
                positives=frozenset(positives),
                negatives=frozenset(negatives),
                family_year=family_year,
            )
        )
    return tasks


def _family_focal(members: Sequence[Document]) -> Document:
    """Representative patent: pecking order when resolvable, else lowest id."""
    if len(members) == 1:
        return members[0]
    if all(m.authority and m.application_id for m in members):
        return select_family_representative(members)
    return min(members, key=lambda m: m.id)


def rank_task(task: TripletTask, store: EmbeddingStore, focal_vector) -> RankedList:
    """Rank all 30 candidates by cosine to the focal vector, ties by id."""
    scored = []
    for paper_id in sorted(task.candidates):
        if paper_id not in store:
            raise BenchError(f"task {task.task_id}: no embedding for {paper_id!r}")
        scored.append((paper_id, cosine(focal_vector, store.get(paper_id))))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return RankedList(task_id=task.task_id, ordered=tuple(scored))


def rfr(ranked: RankedList, relevant: Iterable[str]) -> int:
    """1-based rank of the first relevant item."""
    relevant = set(relevant)
    if not relevant:
        raise BenchError("relevant set is empty")
    for position, doc_id in enumerate(ranked.ids(), start=1):
        if doc_id in relevant:
            return position
    raise BenchError(f"no relevant item present in ranked list {ranked.task_id!r}")


def average_precision(ranked: RankedList, relevant: Iterable[str]) -> float:
    """Mean of precision-at-k over the positions holding relevant items."""
    relevant = set(relevant)
    if not relevant:
        raise BenchError("relevant set is empty")
    ids = ranked.ids()
    missing = relevant - set(ids)
    if missing:
        raise BenchError(f"relevant items {sorted(missing)} absent from list {ranked.task_id!r}")
    hits = 0
    precision_sum = 0.0
    for position, doc_id in enumerate(ids, start=1):
        if doc_id in relevant:
            hits += 1
            precision_sum += hits / position
    return precision_sum / len(relevant)


def rr_at10(ranked: RankedList, relevant: Iterable[str]) -> float:
    """Reciprocal rank of the first relevant item; 0 beyond rank 10."""
    rank = rfr(ranked, relevant)
    return 1.0 / rank if rank <= RR_CUTOFF else 0.0


def score_task(task: TripletTask, ranked: RankedList) -> PerQueryMetrics:
    return PerQueryMetrics(
        task_id=task.task_id,
        rfr=rfr(ranked, task.positives),
        ap=average_precision(ranked, task.positives),
        rr10=rr_at10(ranked, task.positives),
    )


def aggregate(per_query: Sequence[PerQueryMetrics]) -> MetricReport:
    """Arithmetic means over queries."""
    if not per_query:
        raise BenchError("cannot aggregate zero queries")
    ordered = tuple(sorted(per_query, key=lambda m: m.task_id))
    q = len(ordered)
    return MetricReport(
        per_query=ordered,
        avg_rfr=sum(m.rfr for m in ordered) / q,
        map=sum(m.ap for m in ordered) / q,
        mrr10=sum(m.rr10 for m in ordered) / q,
        query_count=q,
    )


def run_bench(
    tasks: Sequence[TripletTask],
    patent_store: EmbeddingStore,
    paper_store: EmbeddingStore,
) -> MetricReport:
    """Rank and score every task against one model's stores."""
    per_query = []
    for task in sorted(tasks, key=lambda t: t.task_id):
        if task.focal_patent_id not in patent_store:
            raise BenchError(f"no embedding for focal patent {task.focal_patent_id!r}")
        ranked = rank_task(task, paper_store, patent_store.get(task.focal_patent_id))
        per_query.append(score_task(task, ranked))
    return aggregate(per_query)


def compare_models(
    per_query_metrics: Mapping[str, Mapping[str, float]],
    base_model: str,
) -> stats.RegressionFit:
    """Regress a per-query metric on model dummies relative to a base model.

    The constant estimates the base model's mean; every other coefficient
    estimates that model's mean shift against the base.
    """
    if base_model not in per_query_metrics:
        raise BenchError(f"base model {base_model!r} not among {sorted(per_query_metrics)}")
    task_sets = {model: set(values) for model, values in per_query_metrics.items()}
    reference_tasks = task_sets[base_model]
    for model, tasks in sorted(task_sets.items()):
        if tasks != reference_tasks:
            missing = sorted(reference_tasks ^ tasks)
            raise BenchError(
                f"model {model!r} covers a different task set; mismatched tasks: {missing[:10]}"
            )
    models = sorted(per_query_metrics)
    others = [m for m in models if m != base_model]
    rows = []
    for task_id in sorted(reference_tasks):
        for model in models:
            row = {"metric": per_query_metrics[model][task_id]}
            for other in others:
                row[f"model[{other}]"] = 1.0 if model == other else 0.0
            rows.append(row)
    spec = stats.DesignMatrixSpec(
        response="metric",
        terms=[stats.DummyBlock([f"model[{other}]" for other in others])],
    )
    return stats.fit_design(rows, spec)


def comparison_table(
    fits: Mapping[str, stats.RegressionFit], scheme: str = "appendix"
) -> tuple[str, str]:
    """Aligned text + CSV for per-metric model comparisons with stars."""
    metric_names = list(fits)
    term_names = fits[metric_names[0]].column_names
    width = max(len(t) for t in term_names) + 2
    lines = []
    header = "".join(f"{m:>20}" for m in metric_names)
    lines.append(f"{'':<{width}}{header}")
    for term in term_names:
        cells = []
        for metric in metric_names:
            fit = fits[metric]
            stars_txt = stats.significance_stars(fit.p_values[term], scheme)
            cells.append(f"{fit.coefficients[term]: .3f}{stars_txt} ({fit.std_errors[term]:.3f})")
        lines.append(f"{term:<{width}}" + "".join(f"{c:>20}" for c in cells))
    lines.append(
        f"{'N':<{width}}" + "".join(f"{fits[m].n:>20}" for m in metric_names)
    )
    text = "\n".join(lines) + "\n"

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["term", "metric", "estimate", "std_error", "p_value", "stars"])
    for term in term_names:
        for metric in metric_names:
            fit = fits[metric]
            writer.writerow(
                [
                    term,
                    metric,
                    repr(fit.coefficients[term]),
                    repr(fit.std_errors[term]),
                    repr(fit.p_values[term]),
                    stats.significance_stars(fit.p_values[term], scheme),
                ]
            )
    return text, buffer.getvalue()


# --- serialization -----------------------------------------------------------


def write_tasks(path: str | Path, tasks: Sequence[TripletTask]) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for task in tasks:
            handle.write(
                json.dumps(
                    {
                        "focal_patent_id": task.focal_patent_id,
                        "positives": sorted(task.positives),
                        "negatives": sorted(task.negatives),
                        "family_year": task.family_year,
                    }
                )
                + "\n"
            )


def load_tasks(path: str | Path) -> list[TripletTask]:
    tasks = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            tasks.append(
                TripletTask(
                    focal_patent_id=record["focal_patent_id"],
                    positives=frozenset(record["positives"]),
                    negatives=frozenset(record["negatives"]),
                    family_year=record["family_year"],
                )
            )
    return tasks


def write_metrics_csv(
    path: str | Path, report: MetricReport, model: str, pooling: str
) -> None:
    """Per-query metric rows (task_id, model, pooling, rfr, ap, rr10)."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["task_id", "model", "pooling", "rfr", "ap", "rr10"])
        for m in report.per_query:
            writer.writerow([m.task_id, model, pooling, m.rfr, repr(m.ap), repr(m.rr10)])


def load_metrics_csv(path: str | Path) -> dict[str, dict[str, PerQueryMetrics]]:
    """Rows grouped as {model: {task_id: metrics}}."""
    grouped: dict[str, dict[str, PerQueryMetrics]] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            grouped.setdefault(row["model"], {})[row["task_id"]] = PerQueryMetrics(
                task_id=row["task_id"],
                rfr=int(row["rfr"]),
                ap=float(row["ap"]),
                rr10=float(row["rr10"]),
            )
    return grouped
