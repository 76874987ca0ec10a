"""Stage 1: expand seed subjects into deduplicated fine-grained topic lists."""

from __future__ import annotations

import logging
from typing import Sequence

from .provider import CompletionClient, ModelRole, build_request
from .records import TopicRecord
from .templates import load_prompt, render

logger = logging.getLogger(__name__)


class EmptyExpansion(Exception):
    """All draws for a subject produced zero topics."""


def expand_subject(
    subject: str,
    draws: int,
    client: CompletionClient,
    role: ModelRole,
    run_id: str,
) -> list[TopicRecord]:
    """Ask the expander model for topic lists, one draw per sample_index.

    Each response is split on line breaks; lines are trimmed and empties
    dropped. Returns the raw per-line records, before deduplication.
    """
    if not subject.strip():
        raise ValueError("subject must be non-empty")
    if draws < 1:
        raise ValueError("draws must be >= 1")
    prompt = render(load_prompt("subject_expansion"), subject=subject)
    records: list[TopicRecord] = []
    for index in range(draws):
        response = client.complete(build_request(role, prompt, sample_index=index))
        for line in response.text.splitlines():
            topic = line.strip()
            if topic:
                records.append(TopicRecord.create(subject, topic, run_id))
    if not records:
        raise EmptyExpansion(f"no topics produced for subject {subject!r} in {draws} draw(s)")
    return records


def dedup_topics(records: Sequence[TopicRecord]) -> list[TopicRecord]:
    """Keep the first record per (subject, normalized_key), preserving order.

    Idempotent: reapplying to its own output changes nothing.
    """
    seen: set[tuple[str, str]] = set()
    unique: list[TopicRecord] = []
    for record in records:
        key = (record.subject, record.normalized_key)
        if key not in seen:
            seen.add(key)
            unique.append(record)
    return unique
