"""Patent and publication corpus handling.

Ingests document dumps (JSONL/TSV), citation and verified-pair tables,
normalizes abstracts, detects languages, and resolves one representative
patent per DocDB family.
"""

from __future__ import annotations

import csv
import datetime
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

CPC_SECTIONS = frozenset("ABCDEFGHY")
CITATION_LOCATIONS = ("front", "body", "front_and_body")

# Patent office precedence used to pick one representative per DocDB family.
# Offices not listed fall into the trailing "other" bucket.
AUTHORITY_PECKING_ORDER = (
    "EP", "WO", "US", "JP", "CN", "KR", "DE", "FR", "GB", "IT", "ES", "SE", "NL",
)

DOCUMENT_FIELDS = (
    "id", "kind", "title", "abstract", "lang", "pub_date", "filing_year",
    "authority", "family_id", "application_id", "cpc_sections",
)


class CorpusError(ValueError):
    """Invalid corpus data (bad record, duplicate id, contract violation)."""


class IngestError(CorpusError):
    """Malformed input file; carries the offending line number and field."""

    def __init__(self, message: str, *, line: int | None = None, fieldname: str | None = None):
        detail = message
        if line is not None:
            detail = f"line {line}: {detail}"
        if fieldname is not None:
            detail = f"{detail} (field '{fieldname}')"
        super().__init__(detail)
        self.line = line
        self.fieldname = fieldname


@dataclass(frozen=True)
class Document:
    """A patent or paper record.

    Papers carry no patent-only metadata: authority, family_id, filing_year
    and cpc_sections must be absent/empty when kind == "paper".
    """

    id: str
    kind: str
    title: str
    abstract: str
    pub_date: datetime.date
    lang: str | None = None
    filing_year: int | None = None
    authority: str | None = None
    family_id: str | None = None
    application_id: str | None = None
    cpc_sections: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.id:
            raise CorpusError("document id must be non-empty")
        if self.kind not in ("patent", "paper"):
            raise CorpusError(f"document {self.id!r}: kind must be 'patent' or 'paper', got {self.kind!r}")
        if not isinstance(self.pub_date, datetime.date):
            raise CorpusError(f"document {self.id!r}: pub_date must be a calendar date")
        object.__setattr__(self, "cpc_sections", frozenset(self.cpc_sections))
        bad = self.cpc_sections - CPC_SECTIONS
        if bad:
            raise CorpusError(f"document {self.id!r}: invalid CPC sections {sorted(bad)}")
        if self.kind == "paper":
            if self.authority or self.family_id or self.filing_year is not None or self.cpc_sections:
                raise CorpusError(f"paper {self.id!r} must not carry patent-only fields")

    @property
    def pub_year(self) -> int:
        return self.pub_date.year


@dataclass(frozen=True)
class CitationLink:
    """A patent's citation of a scientific paper, with match confidence 1-10."""

    patent_id: str
    paper_id: str
    confidence: int
    location: str
    self_citation: bool = False

    def __post_init__(self):
        if not 1 <= self.confidence <= 10:
            raise CorpusError(f"citation {self.patent_id}->{self.paper_id}: confidence must be in [1,10]")
        if self.location not in CITATION_LOCATIONS:
            raise CorpusError(f"citation {self.patent_id}->{self.paper_id}: bad location {self.location!r}")
        if self.patent_id == self.paper_id:
            raise CorpusError(f"citation must link two distinct documents, got {self.patent_id!r} twice")


@dataclass(frozen=True)
class PPPRecord:
    """A verified patent-paper pair (same invention), confidence level 1-4."""

    patent_id: str
    paper_id: str
    confidence_level: int

    def __post_init__(self):
        if self.confidence_level not in (1, 2, 3, 4):
            raise CorpusError(
                f"pair {self.patent_id}/{self.paper_id}: confidence_level must be 1..4, "
                f"got {self.confidence_level}"
            )


def reconstruct_abstract(inverted: Mapping[str, Sequence[int]]) -> str:
    """Rebuild plain text from an inverted {token: positions} mapping.

    Gaps in the position numbering collapse; tokens are joined by single
    spaces. Raises CorpusError if two tokens claim the same position.
    """
    slots: dict[int, str] = {}
    for token, positions in inverted.items():
        for pos in positions:
            if pos < 0:
                raise CorpusError(f"negative token position {pos}")
            if pos in slots:
                raise CorpusError(f"duplicate token position {pos}")
            slots[pos] = token
    return " ".join(slots[pos] for pos in sorted(slots))


def _load_cleaning_rules() -> list[dict]:
    raw = resources.files("patsim.data").joinpath("cleaning_rules.json").read_text("utf-8")
    return json.loads(raw)["rules"]


class AbstractCleaner:
    """Applies the versioned, ordered cleaning pattern list to raw abstracts.

    Removes structural headings, copyright statements and markup, then
    collapses whitespace. Idempotent; output never longer than input.
    """

    def __init__(self, rules: list[dict] | None = None):
        if rules is None:
            rules = _load_cleaning_rules()
        self._compiled = [
            (rule["name"], re.compile(rule["pattern"], re.MULTILINE), rule["replacement"])
            for rule in rules
        ]

    def clean(self, raw: str) -> str:
        text = raw
        for _name, pattern, replacement in self._compiled:
            text = pattern.sub(replacement, text)
        return re.sub(r"\s+", " ", text).strip()


_DEFAULT_CLEANER: AbstractCleaner | None = None


def clean_abstract(raw: str) -> str:
    """Clean one abstract with the packaged default rule set."""
    global _DEFAULT_CLEANER
    if _DEFAULT_CLEANER is None:
        _DEFAULT_CLEANER = AbstractCleaner()
    return _DEFAULT_CLEANER.clean(raw)


# Small built-in stopword profiles; enough to tell the supported languages
# apart on title+abstract sized inputs. Chinese is handled by character class.
_STOPWORD_PROFILES: dict[str, frozenset[str]] = {
    "en": frozenset(
        "the a an and or of to in is are was were be been for on with as by at it "
        "this that from we our which these those not have has had but can will".split()
    ),
    "de": frozenset(
        "der die das und oder von zu in ist sind war waren für auf mit als bei es "
        "dieser diese dieses nicht haben hat hatte aber kann wird werden ein eine einer dem den".split()
    ),
    "fr": frozenset(
        "le la les et ou de du des à dans est sont était pour sur avec comme par il "
        "ce cette ces ne pas avoir a avait mais peut sera un une au aux".split()
    ),
    "es": frozenset(
        "el la los las y o de del a en es son era para sobre con como por ello "
        "este esta estos estas no haber ha había pero puede será un una al lo".split()
    ),
}

_CJK_RE = re.compile(r"[一-鿿]")
_WORD_RE = re.compile(r"[^\W\d_]+", re.UNICODE)

UNDETERMINED = ("und", 0.0)


def detect_language(text: str, min_chars: int = 20) -> tuple[str, float]:
    """Best-scoring language from the built-in profiles, with confidence in [0,1].

    Deterministic. Returns the ("und", 0.0) signal for inputs shorter than
    ``min_chars`` or with no scoring evidence.
    """
    if len(text) < min_chars:
        return UNDETERMINED
    tokens = [t.lower() for t in _WORD_RE.findall(text)]
    scores: dict[str, float] = {}
    if tokens:
        for code, stopwords in _STOPWORD_PROFILES.items():
            hits = sum(1 for t in tokens if t in stopwords)
            scores[code] = hits / len(tokens)
    cjk_chars = len(_CJK_RE.findall(text))
    if cjk_chars:
        scores["zh"] = cjk_chars / max(len(text), 1)
    total = sum(scores.values())
    if total == 0.0:
        return UNDETERMINED
    # Ties break alphabetically so the result never depends on dict order.
    best = min(scores, key=lambda code: (-scores[code], code))
    return best, scores[best] / total


def is_english(doc: Document, min_chars: int = 20) -> bool:
    """English status: trust the upstream flag when present, else detect."""
    if doc.lang is not None:
        return doc.lang == "en"
    text = doc.abstract or doc.title
    code, _conf = detect_language(text, min_chars=min_chars)
    return code == "en"


def _application_id_key(app_id: str) -> tuple:
    # Numeric comparison when the id is purely numeric, else lexicographic;
    # numeric ids order before non-numeric ones so the key stays total.
    if app_id.isdigit():
        return (0, int(app_id), "")
    return (1, 0, app_id)


def select_family_representative(members: Sequence[Document]) -> Document:
    """Pick one patent to represent a DocDB family.

    Highest-ranked authority in the pecking order wins; ties resolve to the
    lowest application id.
    """
    if not members:
        raise CorpusError("cannot pick a representative from an empty family")
    family_ids = {doc.family_id for doc in members}
    if len(family_ids) != 1:
        raise CorpusError(f"members span multiple families: {sorted(str(f) for f in family_ids)}")
    for doc in members:
        if not doc.authority or not doc.application_id:
            raise CorpusError(f"family member {doc.id!r} lacks authority or application_id")

    def rank(doc: Document) -> tuple:
        try:
            authority_rank = AUTHORITY_PECKING_ORDER.index(doc.authority)
        except ValueError:
            authority_rank = len(AUTHORITY_PECKING_ORDER)
        return (authority_rank, _application_id_key(doc.application_id))

    return min(members, key=rank)


def build_model_input(doc: Document, separator: str = "[SEP]") -> str:
    """Title + separator + cleaned abstract, the text fed to embedders."""
    if not doc.title and not doc.abstract:
        raise CorpusError(f"document {doc.id!r} has neither title nor abstract")
    return f"{doc.title}{separator}{clean_abstract(doc.abstract)}"


# --- file ingestion -----------------------------------------------------


def _parse_cpc_field(value) -> frozenset[str]:
    if value is None or value == "":
        return frozenset()
    if isinstance(value, str):
        # accepts both separated ("A,G") and contiguous ("AG") spellings
        parts = [p for p in re.split(r"[,;|\s]+", value) if p]
        return frozenset(ch for part in parts for ch in part)
    return frozenset(value)


def _document_from_record(record: dict, line: int) -> Document:
    if "abstract_inverted_index" in record and "abstract" not in record:
        try:
            record = dict(record)
            record["abstract"] = reconstruct_abstract(record.pop("abstract_inverted_index"))
        except CorpusError as exc:
            raise IngestError(str(exc), line=line, fieldname="abstract_inverted_index") from exc
    for required in ("id", "kind", "pub_date"):
        if record.get(required) in (None, ""):
            raise IngestError("missing required field", line=line, fieldname=required)
    try:
        pub_date = datetime.date.fromisoformat(str(record["pub_date"]))
    except ValueError as exc:
        raise IngestError(f"bad date {record['pub_date']!r}", line=line, fieldname="pub_date") from exc
    filing_year = record.get("filing_year")
    if filing_year in ("", None):
        filing_year = None
    else:
        try:
            filing_year = int(filing_year)
        except (TypeError, ValueError) as exc:
            raise IngestError(f"bad filing_year {filing_year!r}", line=line, fieldname="filing_year") from exc
    try:
        return Document(
            id=str(record["id"]),
            kind=str(record["kind"]),
            title=str(record.get("title") or ""),
            abstract=str(record.get("abstract") or ""),
            pub_date=pub_date,
            lang=record.get("lang") or None,
            filing_year=filing_year,
            authority=record.get("authority") or None,
            family_id=record.get("family_id") or None,
            application_id=record.get("application_id") or None,
            cpc_sections=_parse_cpc_field(record.get("cpc_sections")),
        )
    except CorpusError as exc:
        raise IngestError(str(exc), line=line) from exc


def ingest_documents(path: str | Path, format: str = "jsonl") -> list[Document]:
    """Load documents from a JSONL or TSV dump, preserving input order.

    Malformed records raise IngestError with the line number; duplicate ids
    raise CorpusError naming the id.
    """
    path = Path(path)
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"unsupported format {format!r}")
    documents: list[Document] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8", newline="") as handle:
        if format == "jsonl":
            records = _iter_jsonl_records(handle)
        else:
            records = _iter_tsv_records(handle)
        for line, record in records:
            doc = _document_from_record(record, line)
            if doc.id in seen:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)
            documents.append(doc)
    return documents


def _iter_jsonl_records(handle) -> Iterable[tuple[int, dict]]:
    for line_no, raw in enumerate(handle, start=1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise IngestError(f"invalid JSON: {exc.msg}", line=line_no) from exc
        if not isinstance(record, dict):
            raise IngestError("record is not a JSON object", line=line_no)
        yield line_no, record


def _iter_tsv_records(handle) -> Iterable[tuple[int, dict]]:
    reader = csv.DictReader(handle, delimiter="\t")
    if reader.fieldnames is None:
        return
    unknown = set(reader.fieldnames) - set(DOCUMENT_FIELDS)
    if unknown:
        raise IngestError(f"unknown columns {sorted(unknown)}", line=1)
    for line_no, row in enumerate(reader, start=2):
        yield line_no, {k: v for k, v in row.items() if v not in (None, "")}


def write_documents(path: str | Path, documents: Iterable[Document]) -> None:
    """Serialize documents to JSONL with the canonical field names."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for doc in documents:
            handle.write(json.dumps(document_to_record(doc), ensure_ascii=False) + "\n")


def document_to_record(doc: Document) -> dict:
    record = {
        "id": doc.id,
        "kind": doc.kind,
        "title": doc.title,
        "abstract": doc.abstract,
        "pub_date": doc.pub_date.isoformat(),
    }
    if doc.lang is not None:
        record["lang"] = doc.lang
    if doc.filing_year is not None:
        record["filing_year"] = doc.filing_year
    if doc.authority is not None:
        record["authority"] = doc.authority
    if doc.family_id is not None:
        record["family_id"] = doc.family_id
    if doc.application_id is not None:
        record["application_id"] = doc.application_id
    if doc.cpc_sections:
        record["cpc_sections"] = "".join(sorted(doc.cpc_sections))
    return record


def load_citations(path: str | Path) -> list[CitationLink]:
    """Load the citation TSV (patent_id, paper_id, confidence, location, self_citation)."""
    path = Path(path)
    links: list[CitationLink] = []
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle, delimiter="\t")
        required = {"patent_id", "paper_id", "confidence", "location", "self_citation"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise IngestError(f"citation TSV must have columns {sorted(required)}", line=1)
        for line_no, row in enumerate(reader, start=2):
            try:
                links.append(
                    CitationLink(
                        patent_id=row["patent_id"],
                        paper_id=row["paper_id"],
                        confidence=int(row["confidence"]),
                        location=row["location"],
                        self_citation=row["self_citation"] == "1",
                    )
                )
            except (CorpusError, ValueError) as exc:
                raise IngestError(str(exc), line=line_no) from exc
    return links


def write_citations(path: str | Path, links: Iterable[CitationLink]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(["patent_id", "paper_id", "confidence", "location", "self_citation"])
        for link in links:
            writer.writerow(
                [link.patent_id, link.paper_id, link.confidence, link.location,
                 "1" if link.self_citation else "0"]
            )


def load_ppps(path: str | Path) -> list[PPPRecord]:
    """Load the verified-pair TSV (patent_id, paper_id, confidence_level)."""
    path = Path(path)
    pairs: list[PPPRecord] = []
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle, delimiter="\t")
        required = {"patent_id", "paper_id", "confidence_level"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise IngestError(f"pair TSV must have columns {sorted(required)}", line=1)
        for line_no, row in enumerate(reader, start=2):
            try:
                pairs.append(
                    PPPRecord(
                        patent_id=row["patent_id"],
                        paper_id=row["paper_id"],
                        confidence_level=int(row["confidence_level"]),
                    )
                )
            except (CorpusError, ValueError) as exc:
                raise IngestError(str(exc), line=line_no) from exc
    return pairs


def write_ppps(path: str | Path, pairs: Iterable[PPPRecord]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(["patent_id", "paper_id", "confidence_level"])
        for pair in pairs:
            writer.writerow([pair.patent_id, pair.paper_id, pair.confidence_level])
