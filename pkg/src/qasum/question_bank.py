"""Loading and validation of the SME-authored question bank.

A bank is a versioned JSON file: retrieval defaults plus an ordered list
of questions, each optionally overriding k, the score threshold, or the
note-type filter. Banks are immutable after load and safe to share.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .corpus import NOTE_TYPES
from .errors import IoError, ValidationError


@dataclass(frozen=True)
class RetrievalParams:
    k: int = 4
    fusion_weight: float = 0.5
    score_threshold: float = 0.6
    dedup_cosine: float = 0.95

    def validate(self, where: str = "params") -> None:
        if not (isinstance(self.k, int) and self.k >= 1):
            raise ValidationError(f"{where}.k: must be a positive integer, got {self.k!r}")
        for name in ("fusion_weight", "score_threshold", "dedup_cosine"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
                raise ValidationError(f"{where}.{name}: must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class Question:
    q_id: str
    text: str
    order: int
    k_override: int | None = None
    threshold_override: float | None = None
    note_type_filter: frozenset[str] | None = None


@dataclass(frozen=True)
class QuestionBank:
    name: str
    version: str
    defaults: RetrievalParams
    questions: tuple[Question, ...]


def effective_params(question: Question, defaults: RetrievalParams) -> RetrievalParams:
    """Apply a question's k/threshold overrides onto the bank defaults."""
    params = defaults
    if question.k_override is not None:
        params = replace(params, k=question.k_override)
    if question.threshold_override is not None:
        params = replace(params, score_threshold=question.threshold_override)
    return params


def load_question_bank(path: str | Path) -> QuestionBank:
    path = Path(path)
    try:
        raw = path.read_text("utf-8")
    except OSError as exc:
        raise IoError(f"cannot read question bank {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a JSON object")
    return bank_from_dict(data)


def bank_from_dict(data: dict) -> QuestionBank:
    name = data.get("name")
    version = data.get("version")
    if not isinstance(name, str) or not name:
        raise ValidationError("name: must be a nonempty string")
    if not isinstance(version, str) or not version:
        raise ValidationError("version: must be a nonempty string")

    defaults = RetrievalParams(**_check_keys(data.get("defaults", {}), "defaults"))
    defaults.validate("defaults")

    raw_questions = data.get("questions")
    if not isinstance(raw_questions, list) or not raw_questions:
        raise ValidationError("questions: must be a nonempty list")

    questions = []
    seen: set[str] = set()
    last_order = None
    for i, raw in enumerate(raw_questions):
        where = f"questions[{i}]"
        question = _question_from_dict(raw, where)
        if question.q_id in seen:
            raise ValidationError(f"{where}.q_id: duplicate q_id {question.q_id!r}")
        seen.add(question.q_id)
        if last_order is not None and question.order <= last_order:
            raise ValidationError(f"{where}.order: orders must be strictly increasing")
        last_order = question.order
        questions.append(question)
    return QuestionBank(name=name, version=version, defaults=defaults, questions=tuple(questions))


def _check_keys(raw: dict, where: str) -> dict:
    if not isinstance(raw, dict):
        raise ValidationError(f"{where}: must be a JSON object")
    allowed = {"k", "fusion_weight", "score_threshold", "dedup_cosine"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}")
    return raw


def _question_from_dict(raw, where: str) -> Question:
    if not isinstance(raw, dict):
        raise ValidationError(f"{where}: must be a JSON object")
    q_id = raw.get("q_id")
    text = raw.get("text")
    order = raw.get("order")
    if not isinstance(q_id, str) or not q_id:
        raise ValidationError(f"{where}.q_id: must be a nonempty string")
    if not isinstance(text, str) or not text.strip():
        raise ValidationError(f"{where}.text: must be a nonempty string")
    if not isinstance(order, int) or order < 0:
        raise ValidationError(f"{where}.order: must be a non-negative integer")

    k_override = raw.get("k")
    if k_override is not None and not (isinstance(k_override, int) and k_override >= 1):
        raise ValidationError(f"{where}.k: must be a positive integer, got {k_override!r}")
    threshold_override = raw.get("score_threshold")
    if threshold_override is not None and not (
        isinstance(threshold_override, (int, float)) and 0.0 <= threshold_override <= 1.0
    ):
        raise ValidationError(
            f"{where}.score_threshold: must be in [0, 1], got {threshold_override!r}"
        )
    note_type_filter = raw.get("note_type_filter")
    if note_type_filter is not None:
        if not isinstance(note_type_filter, list) or not note_type_filter:
            raise ValidationError(f"{where}.note_type_filter: must be a nonempty list")
        bad = [t for t in note_type_filter if t not in NOTE_TYPES]
        if bad:
            raise ValidationError(f"{where}.note_type_filter: unknown note types {bad}")
        note_type_filter = frozenset(note_type_filter)

    return Question(
        q_id=q_id,
        text=text,
        order=order,
        k_override=k_override,
        threshold_override=threshold_override,
        note_type_filter=note_type_filter,
    )


def bank_to_dict(bank: QuestionBank) -> dict:
    questions = []
    for q in bank.questions:
        raw: dict = {"q_id": q.q_id, "text": q.text, "order": q.order}
        if q.k_override is not None:
            raw["k"] = q.k_override
        if q.threshold_override is not None:
            raw["score_threshold"] = q.threshold_override
        if q.note_type_filter is not None:
            raw["note_type_filter"] = sorted(q.note_type_filter)
        questions.append(raw)
    return {
        "name": bank.name,
        "version": bank.version,
        "defaults": {
            "k": bank.defaults.k,
            "fusion_weight": bank.defaults.fusion_weight,
            "score_threshold": bank.defaults.score_threshold,
            "dedup_cosine": bank.defaults.dedup_cosine,
        },
        "questions": questions,
    }


def save_question_bank(bank: QuestionBank, path: str | Path) -> None:
    try:
        Path(path).write_text(json.dumps(bank_to_dict(bank), indent=2) + "\n", "utf-8")
    except OSError as exc:
        raise IoError(f"cannot write question bank to {path}: {exc}") from exc
