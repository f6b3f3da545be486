import datetime
import json

import pytest

from patsim.corpus import (
    AbstractCleaner,
    CitationLink,
    CorpusError,
    Document,
    IngestError,
    PPPRecord,
    build_model_input,
    clean_abstract,
    detect_language,
    document_to_record,
    ingest_documents,
    load_citations,
    load_ppps,
    reconstruct_abstract,
    select_family_representative,
    write_citations,
    write_documents,
    write_ppps,
)

from conftest import make_doc


class TestDocumentInvariants:
    def test_paper_must_not_carry_patent_fields(self):
        with pytest.raises(CorpusError):
            Document(id="W1", kind="paper", title="t", abstract="a",
                     pub_date=datetime.date(2000, 1, 1), authority="US")

    def test_bad_cpc_rejected(self):
        with pytest.raises(CorpusError):
            make_doc(cpc_sections={"A", "Z"})

    def test_empty_id_rejected(self):
        with pytest.raises(CorpusError):
            make_doc(doc_id="")

    def test_kind_restricted(self):
        with pytest.raises(CorpusError):
            make_doc(kind="article")

    def test_citation_confidence_range(self):
        with pytest.raises(CorpusError):
            CitationLink("P1", "W1", confidence=11, location="front")
        with pytest.raises(CorpusError):
            CitationLink("P1", "P1", confidence=5, location="front")

    def test_ppp_confidence_level(self):
        with pytest.raises(CorpusError):
            PPPRecord("P1", "W1", confidence_level=5)


class TestIngest:
    def test_empty_file_gives_empty_sequence(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        path.write_text("")
        assert ingest_documents(path) == []

    def test_three_patent_lines(self, tmp_path):
        docs = [make_doc(doc_id=f"P{i}", application_id=str(i)) for i in range(3)]
        path = tmp_path / "docs.jsonl"
        write_documents(path, docs)
        loaded = ingest_documents(path)
        assert len(loaded) == 3
        assert all(d.kind == "patent" for d in loaded)
        assert [d.id for d in loaded] == ["P0", "P1", "P2"]
        assert loaded[0] == docs[0]

    def test_missing_pub_date_names_line(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        lines = [
            json.dumps({"id": "W1", "kind": "paper", "title": "t", "abstract": "a",
                        "pub_date": "2001-02-03"}),
            json.dumps({"id": "W2", "kind": "paper", "title": "t", "abstract": "a"}),
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(IngestError) as err:
            ingest_documents(path)
        assert err.value.line == 2
        assert err.value.fieldname == "pub_date"

    def test_duplicate_id_named(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        record = {"id": "W1", "kind": "paper", "title": "t", "abstract": "a",
                  "pub_date": "2001-02-03"}
        path.write_text(json.dumps(record) + "\n" + json.dumps(record) + "\n")
        with pytest.raises(CorpusError, match="W1"):
            ingest_documents(path)

    def test_inverted_abstract_reconstructed_on_load(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        record = {
            "id": "W1", "kind": "paper", "title": "t", "pub_date": "2001-02-03",
            "abstract_inverted_index": {"Hello": [0], "world": [1]},
        }
        path.write_text(json.dumps(record) + "\n")
        (doc,) = ingest_documents(path)
        assert doc.abstract == "Hello world"

    def test_roundtrip_all_fields(self, tmp_path):
        docs = [
            make_doc(doc_id="P1", cpc_sections={"A", "G"}),
            make_doc(doc_id="W9", kind="paper", title="Paper", abstract="Text here.",
                     year=1999, lang=None),
        ]
        path = tmp_path / "docs.jsonl"
        write_documents(path, docs)
        assert ingest_documents(path) == docs

    def test_tsv_format(self, tmp_path):
        path = tmp_path / "docs.tsv"
        path.write_text(
            "id\tkind\ttitle\tabstract\tpub_date\tlang\n"
            "W1\tpaper\tT one\tA one.\t2003-04-05\ten\n"
            "W2\tpaper\tT two\tA two.\t2004-05-06\t\n"
        )
        docs = ingest_documents(path, format="tsv")
        assert [d.id for d in docs] == ["W1", "W2"]
        assert docs[1].lang is None


class TestReconstructAbstract:
    def test_two_tokens(self):
        assert reconstruct_abstract({"Hello": [0], "world": [1]}) == "Hello world"

    def test_repeated_token(self):
        assert reconstruct_abstract({"a": [0, 2], "b": [1]}) == "a b a"

    def test_duplicate_position_rejected(self):
        with pytest.raises(CorpusError, match="position 0"):
            reconstruct_abstract({"x": [0], "y": [0]})

    def test_gaps_collapse(self):
        assert reconstruct_abstract({"a": [0], "b": [5]}) == "a b"

    def test_reinversion_roundtrip(self):
        inverted = {"to": [0, 3], "be": [1, 4], "or": [2], "not": [5]}
        text = reconstruct_abstract(inverted)
        rebuilt = {}
        for pos, token in enumerate(text.split(" ")):
            rebuilt.setdefault(token, []).append(pos)
        assert rebuilt == inverted


class TestCleanAbstract:
    def test_heading_and_copyright(self):
        raw = "BACKGROUND: We study X. © 2020 Elsevier."
        assert clean_abstract(raw) == "We study X."

    def test_no_rule_fires(self):
        assert clean_abstract("plain abstract") == "plain abstract"

    def test_whitespace_normalization(self):
        assert clean_abstract("  a   b  ") == "a b"

    def test_markup_removed(self):
        assert clean_abstract("Uses <sub>2</sub> and <i>genes</i>.") == "Uses 2 and genes ."

    def test_never_longer_than_input(self):
        fixtures = [
            "BACKGROUND: x. METHODS: y. RESULTS: z.",
            "(C) 2019 Springer Nature. All rights reserved.",
            "plain",
            "",
        ]
        for raw in fixtures:
            assert len(clean_abstract(raw)) <= len(raw)

    def test_idempotent(self):
        fixtures = [
            "BACKGROUND: We study X. © 2020 Elsevier.",
            "OBJECTIVE: a b c. Copyright 2011 Wiley. RESULTS: done.",
            "  spaced   out  text ",
            "plain abstract",
            "<p>Tagged</p> CONCLUSIONS: fine.",
        ]
        for raw in fixtures:
            once = clean_abstract(raw)
            assert clean_abstract(once) == once

    def test_rules_are_versioned_data(self):
        cleaner = AbstractCleaner()
        assert cleaner.clean("METHODS: things.") == "things."


class TestDetectLanguage:
    def test_english_sentence(self):
        code, confidence = detect_language(
            "the quick brown fox jumps over the lazy dog repeatedly"
        )
        assert code == "en"
        assert confidence >= 0.9

    def test_empty_is_undetermined(self):
        assert detect_language("") == ("und", 0.0)

    def test_short_text_undetermined(self):
        assert detect_language("short text here")[0] == "und"

    def test_german_fixture(self):
        code, _ = detect_language(
            "Der schnelle braune Fuchs springt und die Katze ist nicht langsam, "
            "aber der Hund war schneller als die anderen."
        )
        assert code == "de"
        assert code != "en"

    def test_deterministic(self):
        text = "we analyse the data and report the results of the experiments"
        assert detect_language(text) == detect_language(text)


class TestIsEnglish:
    def test_flag_trusted_even_when_wrong(self):
        # upstream flag wins; detection only runs when the flag is absent
        doc = make_doc(kind="paper", lang="de",
                       abstract="the quick brown fox jumps over the lazy dog")
        from patsim.corpus import is_english
        assert not is_english(doc)

    def test_detection_fallback_without_flag(self):
        from patsim.corpus import is_english
        english = make_doc(kind="paper", lang=None,
                           abstract="we present the results of the analysis and "
                                    "discuss the implications for the field")
        german = make_doc(doc_id="W2", kind="paper", lang=None,
                          abstract="wir zeigen die Ergebnisse der Analyse und "
                                   "diskutieren die Folgen für das Fachgebiet")
        assert is_english(english)
        assert not is_english(german)


def family(*specs):
    docs = []
    for authority, app_id in specs:
        docs.append(
            make_doc(doc_id=f"{authority}-{app_id}", authority=authority,
                     application_id=app_id, family_id="FAM")
        )
    return docs


class TestFamilyRepresentative:
    def test_ep_beats_us(self):
        members = family(("US", "123"), ("EP", "456"))
        assert select_family_representative(members).id == "EP-456"

    def test_wo_beats_jp(self):
        members = family(("WO", "1"), ("JP", "2"))
        assert select_family_representative(members).id == "WO-1"

    def test_tie_breaks_on_lower_application_id(self):
        members = family(("US", "5"), ("US", "3"))
        assert select_family_representative(members).id == "US-3"

    def test_numeric_tie_break_is_numeric(self):
        members = family(("US", "10"), ("US", "9"))
        assert select_family_representative(members).id == "US-9"

    def test_full_pecking_order(self):
        order = ["EP", "WO", "US", "JP", "CN", "KR", "DE", "FR", "GB", "IT",
                 "ES", "SE", "NL", "XX"]
        members = family(*[(a, "1") for a in order])
        remaining = list(members)
        for expected in order:
            winner = select_family_representative(remaining)
            assert winner.authority == expected
            remaining.remove(winner)
            if len(remaining) == 1:
                break

    def test_permutation_invariant(self):
        members = family(("JP", "9"), ("US", "77"), ("EP", "200"), ("KR", "1"))
        expected = select_family_representative(members).id
        for shift in range(len(members)):
            rotated = members[shift:] + members[:shift]
            assert select_family_representative(rotated).id == expected

    def test_empty_family_rejected(self):
        with pytest.raises(CorpusError):
            select_family_representative([])

    def test_unknown_authority_ranks_last(self):
        members = family(("XX", "1"), ("NL", "999"))
        assert select_family_representative(members).id == "NL-999"


class TestBuildModelInput:
    def test_title_sep_abstract(self):
        doc = make_doc(title="T", abstract="A")
        assert build_model_input(doc) == "T[SEP]A"

    def test_empty_abstract(self):
        doc = make_doc(title="T", abstract="")
        assert build_model_input(doc) == "T[SEP]"

    def test_both_empty_is_error(self):
        doc = make_doc(title="", abstract="")
        with pytest.raises(CorpusError):
            build_model_input(doc)

    def test_abstract_is_cleaned(self):
        doc = make_doc(title="T", abstract="RESULTS: it works.")
        assert build_model_input(doc) == "T[SEP]it works."

    def test_custom_separator(self):
        doc = make_doc(title="T", abstract="A")
        assert build_model_input(doc, separator=" | ") == "T | A"


class TestCitationAndPairFiles:
    def test_citation_roundtrip(self, tmp_path):
        links = [
            CitationLink("P1", "W1", 10, "front", False),
            CitationLink("P1", "W2", 3, "front_and_body", True),
        ]
        path = tmp_path / "citations.tsv"
        write_citations(path, links)
        assert load_citations(path) == links

    def test_citation_header_required(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("P1\tW1\t10\tfront\t0\n")
        with pytest.raises(IngestError):
            load_citations(path)

    def test_ppp_roundtrip(self, tmp_path):
        pairs = [PPPRecord("P1", "W1", 4), PPPRecord("P2", "W2", 1)]
        path = tmp_path / "ppps.tsv"
        write_ppps(path, pairs)
        assert load_ppps(path) == pairs

    def test_bad_confidence_names_line(self, tmp_path):
        path = tmp_path / "citations.tsv"
        path.write_text(
            "patent_id\tpaper_id\tconfidence\tlocation\tself_citation\n"
            "P1\tW1\t99\tfront\t0\n"
        )
        with pytest.raises(IngestError) as err:
            load_citations(path)
        assert err.value.line == 2

    def test_document_record_shape(self):
        doc = make_doc(cpc_sections={"G", "A"})
        record = document_to_record(doc)
        assert record["cpc_sections"] == "AG"
        assert record["pub_date"] == "2005-06-15"
