"""Stage 2: draft problems per topic and retain only those both verifiers accept.

A draft survives only when two independent verifier models both answer
VALID. Anything else — an INVALID verdict, an unparseable response, or a
provider failure — fails closed: the draft is not retained.
"""

from __future__ import annotations

import logging
from typing import Sequence

from .provider import CompletionClient, ModelRole, ProviderError, build_request
from .records import (
    ProblemDraft,
    TopicRecord,
    ValidationReport,
    Verdict,
    VerifierVerdict,
)
from .templates import load_prompt, render

logger = logging.getLogger(__name__)

SECTION_LABELS = ("Problem", "Reasoning", "Solution", "Answer")


class ParseError(Exception):
    """A model response did not follow its required output format."""

    def __init__(self, message: str, missing: Sequence[str] = ()):
        super().__init__(message)
        self.missing = tuple(missing)


def _find_label(text: str, token: str, start: int) -> int:
    """Index of the first line-start occurrence of token at or after start, else -1."""
    pos = start
    while True:
        idx = text.find(token, pos)
        if idx < 0:
            return -1
        if idx == 0 or text[idx - 1] == "\n":
            return idx
        pos = idx + 1


def parse_problem_sections(text: str) -> dict[str, str]:
    """Split a generator response into its four labeled section bodies.

    Labels match at line start, case-sensitively, colon-terminated, in the
    fixed order Problem / Reasoning / Solution / Answer. A label mentioned
    mid-line never splits a body. Raises ParseError naming absent labels.
    """
    found: list[tuple[str, int]] = []
    missing: list[str] = []
    cursor = 0
    for label in SECTION_LABELS:
        idx = _find_label(text, label + ":", cursor)
        if idx < 0:
            missing.append(label)
        else:
            found.append((label, idx))
            cursor = idx + len(label) + 1
    if missing:
        raise ParseError(f"missing section label(s): {', '.join(missing)}", missing=missing)
    bodies: dict[str, str] = {}
    for position, (label, idx) in enumerate(found):
        start = idx + len(label) + 1
        end = found[position + 1][1] if position + 1 < len(found) else len(text)
        bodies[label] = text[start:end].strip()
    return bodies


def generate_problem(
    topic: TopicRecord,
    sample_index: int,
    client: CompletionClient,
    role: ModelRole,
) -> ProblemDraft:
    """Draw one problem/answer draft for a topic from the generator model."""
    prompt = render(load_prompt("problem_generation"), topic=topic.topic)
    response = client.complete(build_request(role, prompt, sample_index=sample_index))
    sections = parse_problem_sections(response.text)
    return ProblemDraft.create(
        subject=topic.subject,
        topic=topic.topic,
        problem=sections["Problem"],
        generator_reasoning=sections["Reasoning"],
        generator_solution=sections["Solution"],
        answer=sections["Answer"],
        sample_index=sample_index,
    )


def parse_verdict(text: str) -> tuple[Verdict, str]:
    """Extract (verdict, reason) from a validator response.

    The first line starting with "Verdict:" decides (leading whitespace and
    any letter case tolerated); an unrecognized or absent verdict token is
    UNPARSEABLE with the full text as reason. UNPARSEABLE is a value, not an
    error.
    """
    verdict: Verdict | None = None
    for line in text.splitlines():
        stripped = line.strip()
        folded = stripped.casefold()
        if folded.startswith("verdict:"):
            token = stripped[len("verdict:") :].strip().casefold()
            if token == "valid":
                verdict = Verdict.VALID
            elif token == "invalid":
                verdict = Verdict.INVALID
            break
    if verdict is None:
        return Verdict.UNPARSEABLE, text

    reason = ""
    lines = text.splitlines()
    for i, line in enumerate(lines):
        stripped = line.strip()
        if stripped.casefold().startswith("reason:"):
            first = stripped[len("reason:") :].strip()
            rest = [first] + lines[i + 1 :]
            reason = "\n".join(rest).strip()
            break
    return verdict, reason


def validate_problem(
    draft: ProblemDraft,
    verifiers: Sequence[tuple[CompletionClient, ModelRole]],
) -> ValidationReport:
    """Ask both verifier models whether the draft is well-posed and correct.

    A provider failure for one verifier is recorded as that verifier's
    UNPARSEABLE verdict with the error text as reason, so the draft can
    never be silently retained.
    """
    if len(verifiers) != 2:
        raise ValueError("exactly two verifiers are required")
    if verifiers[0][1].model_id == verifiers[1][1].model_id:
        raise ValueError("verifier models must be distinct")
    prompt = render(
        load_prompt("problem_validator"),
        topic=draft.topic,
        problem=draft.problem,
        answer=draft.answer,
    )
    verdicts: list[VerifierVerdict] = []
    for client, role in verifiers:
        try:
            response = client.complete(build_request(role, prompt, sample_index=0))
            verdict, reason = parse_verdict(response.text)
        except ProviderError as exc:
            logger.warning("verifier %s failed for draft %s: %s", role.model_id, draft.draft_id, exc)
            verdict, reason = Verdict.UNPARSEABLE, str(exc)
        verdicts.append(VerifierVerdict(verifier_model=role.model_id, verdict=verdict, reason=reason))
    return ValidationReport.from_verdicts(draft.draft_id, verdicts)
