"""Demo corpus semantics: failure-mode coverage, operation coverage, isolation."""

from __future__ import annotations

import functools
import json
from pathlib import Path

import pytest

import forge.genesis
import forge.records
import forge.solver
import forge.taxonomy
from forge.demo import (
    LONG_TRAJECTORY,
    RL_KEPT,
    build_demo_entries,
    build_demo_run,
    demo_roles,
    _generation_response,
)
from forge.genesis import parse_problem_sections
from forge.provider import build_request, request_digest
from forge.records import JsonlStore, Verdict
from forge.templates import load_prompt, render

GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    return build_demo_run(tmp_path_factory.mktemp("demo"))


def read_store(demo, name):
    return list(JsonlStore(demo.config.run_dir / f"{name}.jsonl"))


class TestDemoContent:
    def test_scale_and_subject_spread(self, demo):
        samples = read_store(demo, "dataset")
        assert len(samples) >= 20
        assert len({s.subject for s in samples}) >= 3
        assert {s.correctness for s in samples} == {0, 1}

    def test_every_validation_failure_mode_present(self, demo):
        reports = read_store(demo, "validations")
        patterns = {tuple(v.verdict for v in r.verdicts) for r in reports}
        assert (Verdict.VALID, Verdict.INVALID) in patterns
        assert (Verdict.UNPARSEABLE, Verdict.VALID) in patterns
        assert (Verdict.INVALID, Verdict.INVALID) in patterns
        retained = [r for r in reports if r.retained]
        assert all(all(v.verdict is Verdict.VALID for v in r.verdicts) for r in retained)

    def test_missing_section_draft_absent(self, demo):
        drafts = read_store(demo, "drafts")
        assert not any(d.topic == "Type Systems" and d.sample_index == 1 for d in drafts)
        assert any(d.topic == "Type Systems" and d.sample_index == 0 for d in drafts)

    def test_long_trajectory_preserved_unclipped(self, demo):
        samples = read_store(demo, "dataset")
        longest = max(samples, key=lambda s: len(s.trajectory.split()))
        assert (longest.subject, longest.topic) == LONG_TRAJECTORY[:2]
        assert len(longest.trajectory.split()) >= 10_000

    def test_fail_closed_judgment_labeled_zero(self, demo):
        records = read_store(demo, "trajectories")
        by_conf = [r for r in records if r.correct == 0 and r.extracted_answer is None]
        assert by_conf, "expected at least one fail-closed y=0 record"

    def test_rl_pool_keeps_only_solvable(self, demo):
        kept = read_store(demo, "rl_pool")
        assert {(s.subject, s.topic) for s in kept} == {key[:2] for key in RL_KEPT}
        assert all(s.correctness == 0 for s in kept)

    def test_provenance_every_sample_was_retained(self, demo):
        retained = {r.draft_id for r in read_store(demo, "validations") if r.retained}
        assert all(s.draft_id in retained for s in read_store(demo, "dataset"))


OPERATIONS = [
    (forge.taxonomy, "expand_subject"),
    (forge.taxonomy, "dedup_topics"),
    (forge.genesis, "generate_problem"),
    (forge.genesis, "parse_problem_sections"),
    (forge.genesis, "parse_verdict"),
    (forge.genesis, "validate_problem"),
    (forge.solver, "synthesize_solution"),
    (forge.solver, "parse_correctness_judgment"),
    (forge.solver, "verify_correctness"),
    (forge.solver, "assemble_dataset"),
    (forge.solver, "curate_rl_pool"),
    (forge.records, "serialize_record"),
    (forge.records, "deserialize_record"),
    (forge.records, "content_hash"),
]


def test_demo_exercises_every_operation(tmp_path, monkeypatch):
    counts = {}
    for module, name in OPERATIONS:
        original = getattr(module, name)
        counts[f"{module.__name__}.{name}"] = 0

        def spy(*args, _original=original, _key=f"{module.__name__}.{name}", **kwargs):
            counts[_key] += 1
            return _original(*args, **kwargs)

        monkeypatch.setattr(module, name, functools.wraps(original)(spy))
    build_demo_run(tmp_path)
    untouched = [key for key, count in counts.items() if count == 0]
    assert not untouched, f"operations never exercised by the demo: {untouched}"


def test_injected_failures_only_shrink_sft_set(tmp_path, monkeypatch):
    """Knocking out provider responses can never grow the y=1 set."""
    roles = demo_roles()
    victims = []
    # one stage-3 solver response, one correctness judgment, one validator verdict
    for subject, topic, index, role_name in [
        ("Computer Science", "Randomized Algorithms", 0, "solver"),
        ("Physics", "Statistical Mechanics", 1, "correctness_verifier"),
        ("Mathematics", "Graph Theory", 1, "validator_b"),
    ]:
        sections = parse_problem_sections(_generation_response(subject, topic, index))
        if role_name == "solver":
            victims.append(request_digest(build_request(roles["solver"], sections["Problem"], sample_index=0)))
        elif role_name == "validator_b":
            prompt = render(
                load_prompt("problem_validator"),
                topic=topic,
                problem=sections["Problem"],
                answer=sections["Answer"],
            )
            victims.append(request_digest(build_request(roles["validator_b"], prompt, sample_index=0)))
        else:
            golden_samples = [json.loads(line) for line in (GOLDEN / "dataset.jsonl").read_text().splitlines()]
            trajectory = next(s["trajectory"] for s in golden_samples if s["problem"] == sections["Problem"])
            prompt = render(
                load_prompt("correctness_verifier"),
                question=sections["Problem"],
                correct_answer=sections["Answer"],
                predicted_solution=trajectory,
            )
            victims.append(request_digest(build_request(roles["correctness_verifier"], prompt, sample_index=0)))

    entries = build_demo_entries()
    for digest in victims:
        assert digest in entries
        del entries[digest]
    monkeypatch.setattr(forge.demo, "build_demo_entries", lambda: entries)

    artifacts = build_demo_run(tmp_path)
    degraded_sft = {s.draft_id for s in read_store(artifacts, "dataset") if s.correctness == 1}
    golden_sft = {s.draft_id for s in JsonlStore(GOLDEN / "dataset.jsonl") if s.correctness == 1}
    assert degraded_sft < golden_sft  # three y=1 items lost, none gained
    assert len(golden_sft) - len(degraded_sft) == 3


def test_deleting_one_fixture_entry_fails_only_that_item(tmp_path, monkeypatch):
    key = ("Physics", "Fluid Dynamics", 0)
    sections = parse_problem_sections(_generation_response(*key))
    solver_role = demo_roles()["solver"]
    victim = request_digest(build_request(solver_role, sections["Problem"], sample_index=0))

    entries = build_demo_entries()
    assert victim in entries
    del entries[victim]
    monkeypatch.setattr(forge.demo, "build_demo_entries", lambda: entries)

    artifacts = build_demo_run(tmp_path)
    solve = next(s for s in artifacts.summaries if s.stage == "solve")
    assert solve.failed == 1
    assert solve.processed == 19

    produced = (artifacts.config.run_dir / "dataset.jsonl").read_text().splitlines()
    golden = (GOLDEN / "dataset.jsonl").read_text().splitlines()
    expected = [line for line in golden if json.loads(line)["problem"] != sections["Problem"]]
    assert produced == expected
