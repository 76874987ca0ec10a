"""Domain record types, canonical one-line serialization, and the append-only store.

Every pipeline stage persists its output as line-delimited JSON, one record per
line, so that runs can resume by rescanning what already exists. Records are
immutable values identified by content hash, never by position in a file.
"""

from __future__ import annotations

import enum
import hashlib
import json
import threading
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path
from typing import Iterator, Optional, Sequence

SCHEMA_VERSION = 1


def content_hash(parts: Sequence[str]) -> str:
    """SHA-256 hex digest over an ordered list of text fields.

    Each field is framed by its byte length before hashing, so ["a", "b"]
    and ["ab"] can never collide.
    """
    if not parts:
        raise ValueError("content_hash requires at least one field")
    h = hashlib.sha256()
    for part in parts:
        raw = part.encode("utf-8")
        h.update(len(raw).to_bytes(8, "big"))
        h.update(raw)
    return h.hexdigest()


def topic_key(topic: str) -> str:
    """Dedup key for a topic: trim, collapse internal whitespace, case-fold."""
    return " ".join(topic.split()).casefold()


class Verdict(str, enum.Enum):
    VALID = "VALID"
    INVALID = "INVALID"
    UNPARSEABLE = "UNPARSEABLE"


@dataclass(frozen=True)
class TopicRecord:
    """One (subject, topic) taxonomy leaf produced by stage 1."""

    subject: str
    topic: str
    normalized_key: str
    run_id: str

    def __post_init__(self) -> None:
        if not self.topic.strip():
            raise ValueError("topic must be non-empty after trimming")
        if self.normalized_key != topic_key(self.topic):
            raise ValueError("normalized_key must be derived from topic")

    @classmethod
    def create(cls, subject: str, topic: str, run_id: str) -> "TopicRecord":
        return cls(subject=subject, topic=topic, normalized_key=topic_key(topic), run_id=run_id)


@dataclass(frozen=True)
class ProblemDraft:
    """A generated (problem, reasoning, solution, answer) quadruple awaiting validation."""

    draft_id: str
    subject: str
    topic: str
    problem: str
    generator_reasoning: str
    generator_solution: str
    answer: str
    sample_index: int

    def __post_init__(self) -> None:
        if not self.problem.strip():
            raise ValueError("problem must be non-empty")
        if not self.answer.strip():
            raise ValueError("answer must be non-empty")
        if self.sample_index < 0:
            raise ValueError("sample_index must be >= 0")
        if self.draft_id != draft_identity(self.subject, self.topic, self.problem):
            raise ValueError("draft_id must be the content hash of subject+topic+problem")

    @classmethod
    def create(
        cls,
        subject: str,
        topic: str,
        problem: str,
        generator_reasoning: str,
        generator_solution: str,
        answer: str,
        sample_index: int,
    ) -> "ProblemDraft":
        return cls(
            draft_id=draft_identity(subject, topic, problem),
            subject=subject,
            topic=topic,
            problem=problem,
            generator_reasoning=generator_reasoning,
            generator_solution=generator_solution,
            answer=answer,
            sample_index=sample_index,
        )


def draft_identity(subject: str, topic: str, problem: str) -> str:
    return content_hash([subject, topic, problem])


@dataclass(frozen=True)
class VerifierVerdict:
    verifier_model: str
    verdict: Verdict
    reason: str


def compute_retained(verdicts: Sequence[VerifierVerdict]) -> bool:
    """Retention rule: at least two verdicts and every one of them VALID."""
    return len(verdicts) >= 2 and all(v.verdict is Verdict.VALID for v in verdicts)


@dataclass(frozen=True)
class ValidationReport:
    """Independent verifier verdicts for one draft, plus the retention decision."""

    draft_id: str
    verdicts: tuple[VerifierVerdict, ...]
    retained: bool

    def __post_init__(self) -> None:
        models = [v.verifier_model for v in self.verdicts]
        if len(set(models)) != len(models):
            raise ValueError("verifier models within one report must be pairwise distinct")
        if self.retained != compute_retained(self.verdicts):
            raise ValueError("stored retained flag must match recomputation from verdicts")

    @classmethod
    def from_verdicts(cls, draft_id: str, verdicts: Sequence[VerifierVerdict]) -> "ValidationReport":
        vs = tuple(verdicts)
        return cls(draft_id=draft_id, verdicts=vs, retained=compute_retained(vs))


@dataclass(frozen=True)
class TrajectoryRecord:
    """A long-form reasoning trajectory with its binary correctness label."""

    draft_id: str
    trajectory: str
    extracted_answer: Optional[str]
    correct: int
    verifier_confidence: int
    solver_model: str

    def __post_init__(self) -> None:
        if self.correct not in (0, 1):
            raise ValueError("correct must be 0 or 1")
        if not 0 <= self.verifier_confidence <= 100:
            raise ValueError("verifier_confidence must be in [0, 100]")


@dataclass(frozen=True)
class DatasetSample:
    """Final dataset tuple: subject, topic, problem, answer, trajectory, correctness."""

    subject: str
    topic: str
    problem: str
    answer: str
    trajectory: str
    correctness: int

    def __post_init__(self) -> None:
        if self.correctness not in (0, 1):
            raise ValueError("correctness must be 0 or 1")

    @property
    def draft_id(self) -> str:
        return draft_identity(self.subject, self.topic, self.problem)


Record = TopicRecord | ProblemDraft | ValidationReport | TrajectoryRecord | DatasetSample

_KIND_BY_TYPE: dict[type, str] = {
    TopicRecord: "topic",
    ProblemDraft: "problem_draft",
    ValidationReport: "validation_report",
    TrajectoryRecord: "trajectory",
    DatasetSample: "dataset_sample",
}
_TYPE_BY_KIND = {kind: tp for tp, kind in _KIND_BY_TYPE.items()}


def serialize_record(record: Record) -> str:
    """Serialize a record to one line of JSON. deserialize(serialize(x)) == x."""
    kind = _KIND_BY_TYPE.get(type(record))
    if kind is None:
        raise TypeError(f"not a domain record: {type(record).__name__}")
    payload: dict = {"kind": kind, "schema_version": SCHEMA_VERSION}
    for f in dataclass_fields(record):
        value = getattr(record, f.name)
        if isinstance(value, Verdict):
            value = value.value
        elif isinstance(value, tuple):
            value = [
                {"verifier_model": v.verifier_model, "verdict": v.verdict.value, "reason": v.reason}
                for v in value
            ]
        payload[f.name] = value
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def deserialize_record(line: str) -> Record:
    """Parse one serialized line back into its domain record."""
    payload = json.loads(line)
    kind = payload.pop("kind", None)
    version = payload.pop("schema_version", None)
    if kind not in _TYPE_BY_KIND:
        raise ValueError(f"unknown record kind: {kind!r}")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version: {version!r}")
    record_type = _TYPE_BY_KIND[kind]
    if record_type is ValidationReport:
        verdicts = tuple(
            VerifierVerdict(
                verifier_model=v["verifier_model"],
                verdict=Verdict(v["verdict"]),
                reason=v["reason"],
            )
            for v in payload["verdicts"]
        )
        return ValidationReport(draft_id=payload["draft_id"], verdicts=verdicts, retained=payload["retained"])
    return record_type(**payload)


class JsonlStore:
    """Append-only line store for one pipeline stage.

    Writes are serialized through a lock and flushed per record, so a commit
    is a full line or nothing. Reading rescans the file from the start.
    """

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()

    def exists(self) -> bool:
        return self.path.exists()

    def append(self, record: Record) -> None:
        line = serialize_record(record)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def append_many(self, records: Sequence[Record]) -> None:
        for record in records:
            self.append(record)

    def __iter__(self) -> Iterator[Record]:
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.strip()
                if raw:
                    yield deserialize_record(raw)

    def read_all(self) -> list[Record]:
        return list(self)
