"""Resumable stage runners: each processes only what its output store lacks.

Every runner reads the predecessor store, computes the todo list in a
deterministic order, fans provider work out over a bounded pool, and appends
results back in input order, so a scripted run is byte-reproducible.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

from . import genesis, solver, taxonomy
from .config import ClientPool, RunConfig
from .provider import ProviderError
from .records import (
    DatasetSample,
    JsonlStore,
    ProblemDraft,
    TopicRecord,
    TrajectoryRecord,
    ValidationReport,
    draft_identity,
)

logger = logging.getLogger(__name__)

STORE_FILES = {
    "topics": "topics.jsonl",
    "drafts": "drafts.jsonl",
    "validations": "validations.jsonl",
    "trajectories": "trajectories.jsonl",
    "dataset": "dataset.jsonl",
    "rl_pool": "rl_pool.jsonl",
}


class MissingPredecessor(Exception):
    """A stage was started before its input stage produced output."""


@dataclass
class StageSummary:
    stage: str
    processed: int = 0
    skipped: int = 0
    failed: int = 0
    discarded: int = 0

    def line(self) -> str:
        return (
            f"{self.stage}: processed={self.processed} skipped={self.skipped} "
            f"failed={self.failed} discarded={self.discarded}"
        )


def store(config: RunConfig, name: str) -> JsonlStore:
    return JsonlStore(config.run_dir / STORE_FILES[name])


def _require(config: RunConfig, name: str) -> JsonlStore:
    s = store(config, name)
    if not s.exists():
        raise MissingPredecessor(f"{STORE_FILES[name]} not found in {config.run_dir}; run the prior stage first")
    return s


T = TypeVar("T")
R = TypeVar("R")


def _map_bounded(fn: Callable[[T], R], items: Sequence[T], max_in_flight: int) -> list[R]:
    """Apply fn over items with bounded concurrency, preserving input order."""
    if len(items) <= 1 or max_in_flight <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(fn, items))


def run_expand(config: RunConfig, pool: ClientPool) -> StageSummary:
    """Stage 1: expand each seed subject not yet present in topics.jsonl."""
    summary = StageSummary("expand")
    topics = store(config, "topics")
    done_subjects = {record.subject for record in topics}
    todo = [spec for spec in config.subjects if spec.name not in done_subjects]
    summary.skipped = len(config.subjects) - len(todo)
    client, role = pool.endpoint("expander")

    def one(spec):
        try:
            raw = taxonomy.expand_subject(spec.name, spec.draws, client, role, config.run_id)
            return taxonomy.dedup_topics(raw)
        except (ProviderError, taxonomy.EmptyExpansion) as exc:
            logger.error("expansion failed for subject %s: %s", spec.name, exc)
            return exc

    for result in _map_bounded(one, todo, config.max_in_flight):
        if isinstance(result, Exception):
            summary.failed += 1
        else:
            topics.append_many(result)
            summary.processed += 1
    return summary


def run_generate(config: RunConfig, pool: ClientPool) -> StageSummary:
    """Stage 2: draft problems for every (topic, sample index), then dual-validate.

    Drafts that fail section parsing are discarded (the pipeline's ill-posed
    branch); provider failures count as hard failures. Validation failures
    never raise: they become UNPARSEABLE verdicts and the draft is simply
    not retained.
    """
    summary = StageSummary("generate")
    topics = list(_require(config, "topics"))
    drafts = store(config, "drafts")
    validations = store(config, "validations")
    generator = pool.endpoint("generator")
    verifiers = [pool.endpoint("validator_a"), pool.endpoint("validator_b")]

    existing: list[ProblemDraft] = list(drafts)
    done_items = {(d.subject, d.topic, d.sample_index) for d in existing}
    known_ids = {d.draft_id for d in existing}
    todo = [
        (topic, index)
        for topic in topics
        for index in range(config.samples_per_topic)
        if (topic.subject, topic.topic, index) not in done_items
    ]
    summary.skipped = len(topics) * config.samples_per_topic - len(todo)

    def draft_one(item: tuple[TopicRecord, int]):
        topic, index = item
        try:
            return genesis.generate_problem(topic, index, *generator)
        except (genesis.ParseError, ValueError) as exc:
            logger.warning("discarding draft for (%s, %s, %d): %s", topic.subject, topic.topic, index, exc)
            return ("discard", exc)
        except ProviderError as exc:
            logger.error("generation failed for (%s, %s, %d): %s", topic.subject, topic.topic, index, exc)
            return ("fail", exc)

    new_drafts: list[ProblemDraft] = []
    for result in _map_bounded(draft_one, todo, config.max_in_flight):
        if isinstance(result, ProblemDraft):
            if result.draft_id in known_ids:
                logger.warning("duplicate draft content %s; keeping the first", result.draft_id)
                summary.discarded += 1
                continue
            known_ids.add(result.draft_id)
            drafts.append(result)
            new_drafts.append(result)
            summary.processed += 1
        elif result[0] == "discard":
            summary.discarded += 1
        else:
            summary.failed += 1

    validated = {report.draft_id for report in validations}
    pending = [d for d in existing + new_drafts if d.draft_id not in validated]
    reports = _map_bounded(lambda d: genesis.validate_problem(d, verifiers), pending, config.max_in_flight)
    validations.append_many(reports)
    return summary


def run_solve(config: RunConfig, pool: ClientPool) -> StageSummary:
    """Stage 3: one trajectory plus correctness label per retained draft."""
    summary = StageSummary("solve")
    drafts = list(_require(config, "drafts"))
    validations = list(_require(config, "validations"))
    trajectories = store(config, "trajectories")
    solver_ep = pool.endpoint("solver")
    verifier_ep = pool.endpoint("correctness_verifier")

    retained = {r.draft_id for r in validations if r.retained}
    done = {t.draft_id for t in trajectories}
    candidates = [d for d in drafts if d.draft_id in retained]
    todo = [d for d in candidates if d.draft_id not in done]
    summary.skipped = len(candidates) - len(todo)

    def one(draft: ProblemDraft):
        try:
            trajectory = solver.synthesize_solution(draft, *solver_ep)
        except (ProviderError, solver.EmptyTrajectory) as exc:
            logger.error("solution synthesis failed for draft %s: %s", draft.draft_id, exc)
            return exc
        return solver.verify_correctness(draft, trajectory, *verifier_ep, solver_model=solver_ep[1].model_id)

    for result in _map_bounded(one, todo, config.max_in_flight):
        if isinstance(result, TrajectoryRecord):
            trajectories.append(result)
            summary.processed += 1
        else:
            summary.failed += 1
    return summary


def run_assemble(config: RunConfig) -> StageSummary:
    """Join drafts, validations, and trajectories into dataset.jsonl."""
    summary = StageSummary("assemble")
    drafts = list(_require(config, "drafts"))
    validations = list(_require(config, "validations"))
    trajectories = list(_require(config, "trajectories"))
    dataset = store(config, "dataset")

    existing = {sample.draft_id for sample in dataset}
    for sample in solver.assemble_dataset(drafts, validations, trajectories):
        if sample.draft_id in existing:
            summary.skipped += 1
            continue
        dataset.append(sample)
        summary.processed += 1
    return summary


def run_rl_pool(config: RunConfig, pool: ClientPool) -> StageSummary:
    """Curate the RL problem pool from y=0 samples via repeated solve attempts."""
    summary = StageSummary("rl-pool")
    samples = list(_require(config, "dataset"))
    rl_store = store(config, "rl_pool")
    solver_ep = pool.endpoint("solver")
    verifier_ep = pool.endpoint("correctness_verifier")

    candidates = [s for s in samples if s.correctness == 0]
    done = {s.draft_id for s in rl_store}
    todo = [s for s in candidates if s.draft_id not in done]
    summary.skipped = len(candidates) - len(todo)

    kept = solver.curate_rl_pool(
        todo,
        trials=config.rl_trials,
        solver=solver_ep,
        verifier=verifier_ep,
        max_in_flight=config.max_in_flight,
    )
    rl_store.append_many(kept)
    summary.processed = len(todo)
    return summary
