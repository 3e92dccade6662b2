import json
import random
from collections import Counter

import pytest

from qasum.corpus import (
    Document,
    Paragraph,
    SegmentedCorpus,
    load_abbreviations,
    load_corpus,
    segment_paragraphs,
    split_sentences,
)
from qasum.errors import DuplicateIdError, FormatError, IoError


def make_doc(text, doc_id="d1", note_type="other"):
    return Document(doc_id=doc_id, patient_id="p", note_type=note_type, timestamp=None, text=text)


# -- load_corpus ------------------------------------------------------------


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", "utf-8")


def record(doc_id, text="some text", note_type="other"):
    return {"doc_id": doc_id, "patient_id": "p1", "note_type": note_type,
            "timestamp": None, "text": text}


def test_load_jsonl_in_file_order(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [record("a"), record("b"), record("c")])
    docs = load_corpus(path)
    assert [d.doc_id for d in docs] == ["a", "b", "c"]
    assert docs[0].text == "some text"


def test_load_empty_file(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("", "utf-8")
    assert load_corpus(path) == []


def test_duplicate_doc_id_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [record("dup"), record("dup")])
    with pytest.raises(DuplicateIdError) as err:
        load_corpus(path)
    assert "dup" in str(err.value)
    assert "line 2" in str(err.value) or ":2" in str(err.value)


def test_malformed_json_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(record("a")) + "\n{not json\n", "utf-8")
    with pytest.raises(FormatError) as err:
        load_corpus(path)
    assert ":2" in str(err.value)


def test_bad_note_type_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    write_jsonl(path, [record("a", note_type="triage")])
    with pytest.raises(FormatError, match="note_type"):
        load_corpus(path)


def test_missing_field_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    bad = record("a")
    del bad["patient_id"]
    write_jsonl(path, [bad])
    with pytest.raises(FormatError, match="patient_id"):
        load_corpus(path)


def test_missing_path_is_io_error(tmp_path):
    with pytest.raises(IoError):
        load_corpus(tmp_path / "nope.jsonl")


def test_load_text_dir(tmp_path):
    (tmp_path / "admission_p9.txt").write_text("Admitted today.", "utf-8")
    (tmp_path / "discharge_p9.txt").write_text("Going home.", "utf-8")
    (tmp_path / "zz_consult.txt").write_text("Consult note.", "utf-8")
    docs = load_corpus(tmp_path, format="text-dir")
    assert [d.doc_id for d in docs] == ["admission_p9", "discharge_p9", "zz_consult"]
    assert [d.note_type for d in docs] == ["admission", "discharge", "other"]


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(FormatError, match="format"):
        load_corpus(tmp_path, format="csv")


# -- segment_paragraphs -----------------------------------------------------


def test_blank_line_split():
    paras = segment_paragraphs(make_doc("A\n\nB"))
    assert [p.text for p in paras] == ["A", "B"]
    assert [p.char_span for p in paras] == [(0, 1), (3, 4)]
    assert [p.para_id for p in paras] == ["d1#0", "d1#1"]


def test_empty_document():
    assert segment_paragraphs(make_doc("")) == []
    assert segment_paragraphs(make_doc("  \n\n \n")) == []


def test_discharge_note_with_header_line():
    # Two blank-line breaks plus one embedded header line; spans derived by
    # hand from the rules before implementation.
    text = (
        "Patient admitted with sepsis.\n"
        "\n"
        "HOSPITAL COURSE:\n"
        "Treated with IV antibiotics.\n"
        "MEDICATIONS:\n"
        "Ceftriaxone 1 g daily.\n"
        "\n"
        "Discharged home.\n"
    )
    paras = segment_paragraphs(make_doc(text, note_type="discharge"))
    assert [p.text for p in paras] == [
        "Patient admitted with sepsis.",
        "HOSPITAL COURSE:\nTreated with IV antibiotics.",
        "MEDICATIONS:\nCeftriaxone 1 g daily.",
        "Discharged home.",
    ]
    assert [p.char_span for p in paras] == [(0, 29), (31, 76), (77, 112), (114, 130)]


def test_header_must_start_line():
    # Indented pseudo-header does not split.
    paras = segment_paragraphs(make_doc("one\n MEDICATIONS:\ntwo"))
    assert len(paras) == 1


def test_token_cap_splits_at_sentence_boundaries():
    sentence = "Alpha beta gamma delta epsilon. "
    doc = make_doc((sentence * 80).strip())  # 480 tokens, 80 sentences
    paras = segment_paragraphs(doc, max_paragraph_tokens=50)
    assert all(len(p.text.split()) <= 50 for p in paras)
    assert all(p.text.endswith(".") for p in paras)


def test_token_cap_hard_splits_single_long_sentence():
    doc = make_doc(" ".join(f"tok{i}" for i in range(600)))
    paras = segment_paragraphs(doc, max_paragraph_tokens=256)
    assert all(len(p.text.split()) <= 256 for p in paras)
    assert sum(len(p.text.split()) for p in paras) == 600


# -- split_sentences --------------------------------------------------------


def para_of(text):
    return segment_paragraphs(make_doc(text))[0]


def test_basic_sentence_split():
    sents = split_sentences(para_of("Pt stable. Discharged home."))
    assert [s.text for s in sents] == ["Pt stable.", "Discharged home."]
    assert [s.sent_id for s in sents] == ["d1#0:0", "d1#0:1"]


def test_abbreviation_exception():
    sents = split_sentences(para_of("Dr. Smith increased dosage."))
    assert [s.text for s in sents] == ["Dr. Smith increased dosage."]


def test_unit_abbreviation_does_not_split():
    sents = split_sentences(para_of("Gave lisinopril 10 mg. Continue at home."))
    assert len(sents) == 1


def test_no_terminal_punctuation_is_one_sentence():
    para = para_of("no terminal punctuation")
    sents = split_sentences(para)
    assert [s.text for s in sents] == ["no terminal punctuation"]


def test_lowercase_after_period_does_not_split():
    sents = split_sentences(para_of("Oxygen at 2 L. min on admission."))
    assert len(sents) == 1


def test_semicolon_splits_before_uppercase():
    sents = split_sentences(para_of("Stable overnight; Plan discharge."))
    assert [s.text for s in sents] == ["Stable overnight;", "Plan discharge."]


def test_newline_alone_does_not_split():
    sents = split_sentences(para_of("HEADER:\nfirst line\nsecond line"))
    assert len(sents) == 1


def test_abbreviation_list_loads():
    abbrevs = load_abbreviations()
    assert {"dr", "mg", "q", "vs", "pt", "hx", "i.e", "e.g"} <= abbrevs


# -- invariants -------------------------------------------------------------


def nonspace_counter(text):
    return Counter(ch for ch in text if not ch.isspace())


def random_note(rng):
    words = ["patient", "stable", "fever", "Dr", "mg", "ceftriaxone", "daily",
             "improved", "пульс", "overnight", "alert", "x-ray", "10.5", "q"]
    lines = []
    for _ in range(rng.randint(1, 12)):
        kind = rng.random()
        if kind < 0.15:
            lines.append("")
        elif kind < 0.3:
            lines.append("SECTION HEADER:")
        else:
            n = rng.randint(1, 20)
            sep = rng.choice([". ", " ", "; ", "! ", "? "])
            lines.append(sep.join(rng.choice(words) for _ in range(n)))
    return "\n".join(lines)


@pytest.fixture(scope="module")
def random_docs():
    rng = random.Random(20240601)
    return [make_doc(random_note(rng), doc_id=f"r{i}") for i in range(50)]


def assert_spans_valid(doc, paras):
    raw = doc.text.encode("utf-8")
    last_end = 0
    for ordinal, para in enumerate(paras):
        start, end = para.char_span
        assert 0 <= start < end <= len(raw)
        assert start >= last_end
        last_end = end
        sliced = raw[start:end].decode("utf-8")
        assert sliced == para.text
        assert sliced.strip() == sliced
        assert para.ordinal == ordinal
        para_raw = para.text.encode("utf-8")
        sent_last = 0
        for s_ord, sent in enumerate(split_sentences(para)):
            s_start, s_end = sent.char_span
            assert 0 <= s_start < s_end <= len(para_raw)
            assert s_start >= sent_last
            sent_last = s_end
            assert para_raw[s_start:s_end].decode("utf-8") == sent.text
            assert sent.ordinal == s_ord


def test_roundtrip_and_spans_on_fixture_corpus(corpus_docs):
    for doc in corpus_docs:
        paras = segment_paragraphs(doc)
        combined = Counter()
        for para in paras:
            combined += nonspace_counter(para.text)
        assert combined == nonspace_counter(doc.text)
        assert_spans_valid(doc, paras)


def test_roundtrip_and_spans_on_random_docs(random_docs):
    for doc in random_docs:
        paras = segment_paragraphs(doc, max_paragraph_tokens=30)
        combined = Counter()
        for para in paras:
            combined += nonspace_counter(para.text)
            assert len(para.text.split()) <= 30
        assert combined == nonspace_counter(doc.text)
        assert_spans_valid(doc, paras)


def test_segmentation_is_deterministic(random_docs):
    for doc in random_docs[:10]:
        first = segment_paragraphs(doc)
        second = segment_paragraphs(doc)
        assert first == second


def test_multibyte_spans_are_byte_offsets():
    doc = make_doc("émigré café.\n\nNaïve test.")
    paras = segment_paragraphs(doc)
    assert len(paras) == 2
    assert_spans_valid(doc, paras)
    start, end = paras[0].char_span
    assert end - start == len("émigré café.".encode("utf-8"))


# -- SegmentedCorpus --------------------------------------------------------


def test_segmented_corpus_lookups(segmented):
    para = segmented.paragraphs[0]
    assert segmented.paragraph(para.para_id) == para
    sents = segmented.sentences(para.para_id)
    assert sents
    first = sents[0]
    assert segmented.sentence(first.sent_id) == first
    assert segmented.order_key(first.sent_id) == (0, 0, 0)


def test_order_key_follows_document_order(segmented):
    keys = [
        segmented.order_key(sent.sent_id)
        for para in segmented.paragraphs
        for sent in segmented.sentences(para.para_id)
    ]
    assert keys == sorted(keys)
