"""Stage 3: synthesize reasoning trajectories, label correctness, assemble the dataset.

Correctness labeling fails closed: a provider failure or an unparseable
judgment yields y=0, never an aborted batch and never a spurious y=1.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

from .genesis import ParseError
from .provider import CompletionClient, ModelRole, ProviderError, build_request
from .records import DatasetSample, ProblemDraft, TrajectoryRecord, ValidationReport
from .templates import load_prompt, render

logger = logging.getLogger(__name__)

JUDGMENT_LABELS = ("extracted_final_answer", "reasoning", "correct", "confidence")
DEFAULT_CONFIDENCE = 100


class EmptyTrajectory(Exception):
    """The solver model returned empty or whitespace-only text."""


class JoinError(Exception):
    """A stage store references a draft_id that does not exist."""


def synthesize_solution(
    draft: ProblemDraft,
    client: CompletionClient,
    role: ModelRole,
    sample_index: int = 0,
) -> str:
    """Produce one full reasoning trajectory for a retained draft, verbatim."""
    return _synthesize(draft.problem, client, role, sample_index)


def _synthesize(problem: str, client: CompletionClient, role: ModelRole, sample_index: int) -> str:
    # The chat turn itself is the wrapper; the user message carries the bare problem.
    prompt = render(load_prompt("solution_synthesis"), problem=problem)
    text = client.complete(build_request(role, prompt, sample_index=sample_index)).text
    if not text.strip():
        raise EmptyTrajectory("solver returned empty text")
    return text


def parse_correctness_judgment(text: str) -> tuple[Optional[str], int, int]:
    """Parse a correctness-verifier response into (extracted_answer, correct, confidence).

    Labels are matched at line start, case-insensitively. "correct" maps
    yes -> 1 and no -> 0; any other token is a ParseError the caller must
    treat as y=0. A literal extracted answer of "None" means absent. A
    missing confidence defaults to 100, the prompt-mandated fallback.
    """
    bodies: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in text.splitlines():
        stripped = line.strip()
        folded = stripped.casefold()
        matched = None
        for label in JUDGMENT_LABELS:
            if folded.startswith(label + ":"):
                matched = label
                break
        if matched is not None:
            if matched not in bodies:
                bodies[matched] = [stripped[len(matched) + 1 :].strip()]
                current = matched
            else:
                current = None
        elif current is not None:
            bodies[current].append(line)

    if "correct" not in bodies:
        raise ParseError("judgment has no correct: field", missing=("correct",))
    correct_token = "\n".join(bodies["correct"]).strip().casefold()
    if correct_token == "yes":
        correct = 1
    elif correct_token == "no":
        correct = 0
    else:
        raise ParseError(f"unmappable correct token: {correct_token!r}", missing=("correct",))

    extracted: Optional[str] = None
    if "extracted_final_answer" in bodies:
        value = "\n".join(bodies["extracted_final_answer"]).strip()
        extracted = None if value == "None" or not value else value

    confidence = DEFAULT_CONFIDENCE
    if "confidence" in bodies:
        raw = "\n".join(bodies["confidence"]).strip().rstrip("%").strip()
        try:
            confidence = min(100, max(0, int(raw)))
        except ValueError:
            confidence = DEFAULT_CONFIDENCE
    return extracted, correct, confidence


def verify_correctness(
    draft: ProblemDraft,
    trajectory: str,
    client: CompletionClient,
    role: ModelRole,
    solver_model: str,
) -> TrajectoryRecord:
    """Label a trajectory against the draft's reference answer. Fails closed to y=0."""
    return _verify(draft.draft_id, draft.problem, draft.answer, trajectory, client, role, solver_model)


def _verify(
    draft_id: str,
    problem: str,
    answer: str,
    trajectory: str,
    client: CompletionClient,
    role: ModelRole,
    solver_model: str,
) -> TrajectoryRecord:
    prompt = render(
        load_prompt("correctness_verifier"),
        question=problem,
        correct_answer=answer,
        predicted_solution=trajectory,
    )
    try:
        response = client.complete(build_request(role, prompt, sample_index=0))
        extracted, correct, confidence = parse_correctness_judgment(response.text)
    except (ProviderError, ParseError) as exc:
        logger.warning("correctness check failed closed (y=0) for draft %s: %s", draft_id, exc)
        extracted, correct, confidence = None, 0, DEFAULT_CONFIDENCE
    return TrajectoryRecord(
        draft_id=draft_id,
        trajectory=trajectory,
        extracted_answer=extracted,
        correct=correct,
        verifier_confidence=confidence,
        solver_model=solver_model,
    )


def assemble_dataset(
    drafts: Sequence[ProblemDraft],
    validations: Sequence[ValidationReport],
    trajectories: Sequence[TrajectoryRecord],
) -> list[DatasetSample]:
    """Join the stage stores on draft_id into final dataset samples.

    Emits one sample per retained draft that has a trajectory, in draft
    order. Trajectories or validations pointing at unknown drafts are a
    JoinError; a trajectory for a non-retained draft is dropped with a
    warning.
    """
    draft_by_id: dict[str, ProblemDraft] = {}
    for draft in drafts:
        draft_by_id.setdefault(draft.draft_id, draft)
    for report in validations:
        if report.draft_id not in draft_by_id:
            raise JoinError(f"validation references unknown draft {report.draft_id}")
    retained_ids = {r.draft_id for r in validations if r.retained}
    trajectory_by_id: dict[str, TrajectoryRecord] = {}
    for record in trajectories:
        if record.draft_id not in draft_by_id:
            raise JoinError(f"trajectory references unknown draft {record.draft_id}")
        if record.draft_id not in retained_ids:
            logger.warning("dropping trajectory for non-retained draft %s", record.draft_id)
            continue
        trajectory_by_id.setdefault(record.draft_id, record)

    samples: list[DatasetSample] = []
    for draft in draft_by_id.values():
        record = trajectory_by_id.get(draft.draft_id)
        if record is None:
            continue
        samples.append(
            DatasetSample(
                subject=draft.subject,
                topic=draft.topic,
                problem=draft.problem,
                answer=draft.answer,
                trajectory=record.trajectory,
                correctness=record.correct,
            )
        )
    return samples


def split_sft_rl(samples: Sequence[DatasetSample]) -> tuple[list[DatasetSample], list[DatasetSample]]:
    """Partition samples into (SFT-eligible y=1, RL-candidate y=0)."""
    sft = [s for s in samples if s.correctness == 1]
    rl = [s for s in samples if s.correctness == 0]
    return sft, rl


def curate_rl_pool(
    rl_candidates: Sequence[DatasetSample],
    trials: int,
    solver: tuple[CompletionClient, ModelRole],
    verifier: tuple[CompletionClient, ModelRole],
    max_in_flight: int = 1,
) -> list[DatasetSample]:
    """Keep candidates solvable within `trials` fresh attempts.

    Attempts for one candidate run sequentially (sample_index 1..trials, so
    a draw is never deduplicated against the stage-3 trajectory call) and
    stop at the first attempt judged correct. Provider failures count as
    failed attempts.
    """
    if trials < 0:
        raise ValueError("trials must be >= 0")
    solver_client, solver_role = solver
    verifier_client, verifier_role = verifier

    def solvable(sample: DatasetSample) -> bool:
        for attempt in range(1, trials + 1):
            try:
                trajectory = _synthesize(sample.problem, solver_client, solver_role, sample_index=attempt)
            except (ProviderError, EmptyTrajectory) as exc:
                logger.warning("rl attempt %d failed for %s: %s", attempt, sample.draft_id, exc)
                continue
            record = _verify(
                sample.draft_id,
                sample.problem,
                sample.answer,
                trajectory,
                verifier_client,
                verifier_role,
                solver_role.model_id,
            )
            if record.correct == 1:
                return True
        return False

    if trials == 0 or not rl_candidates:
        return []
    if max_in_flight <= 1 or len(rl_candidates) == 1:
        flags = [solvable(s) for s in rl_candidates]
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            flags = list(pool.map(solvable, rl_candidates))
    return [s for s, keep in zip(rl_candidates, flags) if keep]
