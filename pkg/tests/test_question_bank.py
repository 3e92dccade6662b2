import json

import pytest

from qasum.errors import IoError, ValidationError
from qasum.question_bank import (
    Question,
    RetrievalParams,
    bank_to_dict,
    effective_params,
    load_question_bank,
    save_question_bank,
)


def base_bank():
    return {
        "name": "test-bank",
        "version": "0.1",
        "defaults": {"k": 4, "fusion_weight": 0.5, "score_threshold": 0.6, "dedup_cosine": 0.95},
        "questions": [
            {"q_id": "q1", "text": "Why was the patient admitted?", "order": 0},
            {"q_id": "q2", "text": "What medications were given?", "order": 3, "k": 2,
             "score_threshold": 0.4, "note_type_filter": ["discharge"]},
        ],
    }


def write_bank(tmp_path, data):
    path = tmp_path / "bank.json"
    path.write_text(json.dumps(data), "utf-8")
    return path


def test_fixture_bank_loads_in_order(bank):
    assert bank.name == "clinical-core"
    assert len(bank.questions) == 6
    assert [q.order for q in bank.questions] == [0, 1, 2, 3, 4, 5]
    assert bank.questions[0].text == "Why was the patient admitted?"
    assert bank.questions[2].k_override == 3
    assert bank.questions[2].note_type_filter == frozenset({"discharge"})
    assert bank.defaults == RetrievalParams(k=4, fusion_weight=0.5,
                                            score_threshold=0.6, dedup_cosine=0.95)


def test_overrides_parsed(tmp_path):
    loaded = load_question_bank(write_bank(tmp_path, base_bank()))
    q2 = loaded.questions[1]
    assert q2.k_override == 2
    assert q2.threshold_override == 0.4
    assert q2.note_type_filter == frozenset({"discharge"})


def test_duplicate_q_id_rejected(tmp_path):
    data = base_bank()
    data["questions"][1]["q_id"] = "q1"
    with pytest.raises(ValidationError, match="q1"):
        load_question_bank(write_bank(tmp_path, data))


def test_out_of_range_threshold_names_field(tmp_path):
    data = base_bank()
    data["questions"][1]["score_threshold"] = 1.5
    with pytest.raises(ValidationError, match=r"questions\[1\].score_threshold"):
        load_question_bank(write_bank(tmp_path, data))


def test_out_of_range_default_names_field(tmp_path):
    data = base_bank()
    data["defaults"]["dedup_cosine"] = 1.2
    with pytest.raises(ValidationError, match="defaults.dedup_cosine"):
        load_question_bank(write_bank(tmp_path, data))


def test_empty_text_rejected(tmp_path):
    data = base_bank()
    data["questions"][0]["text"] = "   "
    with pytest.raises(ValidationError, match=r"questions\[0\].text"):
        load_question_bank(write_bank(tmp_path, data))


def test_orders_must_increase(tmp_path):
    data = base_bank()
    data["questions"][1]["order"] = 0
    with pytest.raises(ValidationError, match="order"):
        load_question_bank(write_bank(tmp_path, data))


def test_empty_question_list_rejected(tmp_path):
    data = base_bank()
    data["questions"] = []
    with pytest.raises(ValidationError, match="questions"):
        load_question_bank(write_bank(tmp_path, data))


def test_unknown_note_type_rejected(tmp_path):
    data = base_bank()
    data["questions"][1]["note_type_filter"] = ["triage"]
    with pytest.raises(ValidationError, match="triage"):
        load_question_bank(write_bank(tmp_path, data))


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        load_question_bank(tmp_path / "missing.json")


def test_reload_idempotence(tmp_path, bank):
    path = tmp_path / "roundtrip.json"
    save_question_bank(bank, path)
    reloaded = load_question_bank(path)
    assert reloaded == bank
    assert bank_to_dict(reloaded) == bank_to_dict(bank)


def test_effective_params_applies_overrides():
    defaults = RetrievalParams()
    q = Question(q_id="q", text="t?", order=0, k_override=2, threshold_override=0.3)
    eff = effective_params(q, defaults)
    assert eff.k == 2
    assert eff.score_threshold == 0.3
    assert eff.fusion_weight == defaults.fusion_weight
    plain = Question(q_id="p", text="t?", order=1)
    assert effective_params(plain, defaults) == defaults
