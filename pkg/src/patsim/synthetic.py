"""Deterministic synthetic corpora with controlled token overlap.

Generates patent families, cited papers, paired papers and decoys whose
token-share structure mirrors the studies' expectations: paired papers
reuse about 80% of the patent's tokens, cited papers about 30%, decoys
none beyond chance. Everything derives from a single seed.
"""

from __future__ import annotations

import datetime
import random
from dataclasses import dataclass

from .corpus import CitationLink, Document, PPPRecord

AUTHORITIES = ("EP", "US", "DE", "JP", "GB", "FR", "CN", "KR", "IT", "ES", "CA", "IL")
PPP_OVERLAP = 0.8
PPC_OVERLAP = 0.3


@dataclass
class SyntheticCorpus:
    documents: dict[str, Document]
    citations: list[CitationLink]
    ppps: list[PPPRecord]

    def document_list(self) -> list[Document]:
        return list(self.documents.values())


def _text_from_tokens(tokens: list[str], sentence_len: int = 10) -> tuple[str, str]:
    title = " ".join(tokens[:5])
    body_tokens = tokens[5:]
    sentences = []
    for i in range(0, len(body_tokens), sentence_len):
        sentences.append(" ".join(body_tokens[i : i + sentence_len]) + ".")
    return title, " ".join(sentences)


def _mixed_tokens(rng: random.Random, base: list[str], vocab: list[str], overlap: float,
                  size: int) -> list[str]:
    n_shared = round(size * overlap)
    shared = rng.sample(base, min(n_shared, len(base)))
    fresh = rng.sample(vocab, size - len(shared))
    tokens = shared + fresh
    rng.shuffle(tokens)
    return tokens


def make_corpus(
    n_families: int = 30,
    cited_per_family: int = 5,
    n_decoys: int = 300,
    seed: int = 0,
    vocab_size: int = 4000,
    tokens_per_doc: int = 45,
    family_span: int = 1,
    stray_citations: bool = True,
) -> SyntheticCorpus:
    """Build a corpus of patent families with cited papers, one paired
    paper per family, and decoy papers spread over a wide year range.
    """
    rng = random.Random(seed)
    vocab = [f"w{i:05d}" for i in range(vocab_size)]
    documents: dict[str, Document] = {}
    citations: list[CitationLink] = []
    ppps: list[PPPRecord] = []

    def add(doc: Document) -> None:
        documents[doc.id] = doc

    for fi in range(n_families):
        family_id = f"F{fi:04d}"
        base_tokens = rng.sample(vocab, tokens_per_doc)
        patent_year = rng.randint(2000, 2012)
        filing_year = patent_year - rng.randint(0, 2)
        n_members = family_span if family_span > 1 and fi % 3 == 0 else 1
        member_ids = []
        for mi in range(n_members):
            patent_id = f"PAT{fi:04d}" if mi == 0 else f"PAT{fi:04d}M{mi}"
            title, abstract = _text_from_tokens(
                _mixed_tokens(rng, base_tokens, vocab, 0.95, tokens_per_doc)
                if mi else list(base_tokens)
            )
            add(
                Document(
                    id=patent_id,
                    kind="patent",
                    title=title,
                    abstract=abstract,
                    pub_date=datetime.date(patent_year, 1 + (fi % 12), 1 + (fi % 27)),
                    lang="en",
                    filing_year=filing_year,
                    authority=AUTHORITIES[(fi + mi) % len(AUTHORITIES)],
                    family_id=family_id,
                    application_id=str(1000 + fi * 10 + mi),
                    cpc_sections=frozenset(rng.sample("ABCDEFGHY", rng.randint(1, 3))),
                )
            )
            member_ids.append(patent_id)

        focal_id = member_ids[0]
        n_cited = cited_per_family + rng.randint(0, 3)
        for j in range(n_cited):
            paper_id = f"PPR{fi:04d}x{j}"
            tokens = _mixed_tokens(rng, base_tokens, vocab, PPC_OVERLAP, tokens_per_doc)
            title, abstract = _text_from_tokens(tokens)
            cited_year = filing_year - rng.randint(1, 20)
            add(
                Document(
                    id=paper_id,
                    kind="paper",
                    title=title,
                    abstract=abstract,
                    pub_date=datetime.date(cited_year, 1 + (j % 12), 1 + (j % 27)),
                    lang="en",
                )
            )
            citations.append(
                CitationLink(
                    patent_id=focal_id,
                    paper_id=paper_id,
                    confidence=10 if j < 5 else rng.randint(1, 10),
                    location=rng.choice(("front", "body", "front_and_body")),
                    self_citation=rng.random() < 0.1,
                )
            )

        if stray_citations and n_decoys:
            # a low-confidence link to an unrelated decoy: realistic noise and
            # guaranteed variation in the match studies' response
            stray = f"DEC{rng.randrange(n_decoys):05d}"
            citations.append(
                CitationLink(
                    patent_id=focal_id,
                    paper_id=stray,
                    confidence=rng.randint(1, 9),
                    location=rng.choice(("front", "body", "front_and_body")),
                    self_citation=False,
                )
            )

        paired_id = f"PPPR{fi:04d}"
        tokens = _mixed_tokens(rng, base_tokens, vocab, PPP_OVERLAP, tokens_per_doc)
        title, abstract = _text_from_tokens(tokens)
        paired_year = patent_year + rng.randint(-5, 5)
        add(
            Document(
                id=paired_id,
                kind="paper",
                title=title,
                abstract=abstract,
                pub_date=datetime.date(paired_year, 1 + (fi % 12), 1),
                lang="en",
            )
        )
        ppps.append(
            PPPRecord(
                patent_id=focal_id,
                paper_id=paired_id,
                confidence_level=1 + (fi % 4),
            )
        )

    for di in range(n_decoys):
        decoy_year = rng.randint(1965, 2015)
        tokens = rng.sample(vocab, tokens_per_doc)
        title, abstract = _text_from_tokens(tokens)
        add(
            Document(
                id=f"DEC{di:05d}",
                kind="paper",
                title=title,
                abstract=abstract,
                pub_date=datetime.date(decoy_year, 1 + (di % 12), 1 + (di % 27)),
                lang="en",
            )
        )

    return SyntheticCorpus(documents=documents, citations=citations, ppps=ppps)
