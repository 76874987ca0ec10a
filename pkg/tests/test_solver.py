"""Trajectory synthesis, correctness labeling, dataset assembly, RL curation."""

from __future__ import annotations

import pytest

from forge.genesis import ParseError
from forge.records import (
    DatasetSample,
    ProblemDraft,
    TrajectoryRecord,
    ValidationReport,
    Verdict,
    VerifierVerdict,
)
from forge.solver import (
    EmptyTrajectory,
    JoinError,
    assemble_dataset,
    curate_rl_pool,
    parse_correctness_judgment,
    split_sft_rl,
    synthesize_solution,
    verify_correctness,
)
from forge.templates import load_prompt, render

from helpers import make_role, script_entry, scripted_client

SOLVER = make_role("solver", "solver-x")
VERIFIER = make_role("correctness_verifier", "verifier-x")


def make_draft(problem="Evaluate the integral of x over [0, 2].", answer="2", suffix="") -> ProblemDraft:
    return ProblemDraft.create(
        subject="Mathematics",
        topic="Calculus" + suffix,
        problem=problem,
        generator_reasoning="r",
        generator_solution="s",
        answer=answer,
        sample_index=0,
    )


def judgment_prompt(draft, trajectory):
    return render(
        load_prompt("correctness_verifier"),
        question=draft.problem,
        correct_answer=draft.answer,
        predicted_solution=trajectory,
    )


class TestSynthesizeSolution:
    def test_verbatim_passthrough(self):
        draft = make_draft()
        text = "Okay, let us try... the area is \\boxed{2}"
        client, _ = scripted_client(dict([script_entry(SOLVER, draft.problem, 0, text)]))
        assert synthesize_solution(draft, client, SOLVER) == text

    def test_whitespace_only_is_empty_trajectory(self):
        draft = make_draft()
        client, _ = scripted_client(dict([script_entry(SOLVER, draft.problem, 0, "   \n\t")]))
        with pytest.raises(EmptyTrajectory):
            synthesize_solution(draft, client, SOLVER)

    def test_very_long_trajectory_not_truncated(self):
        draft = make_draft()
        text = " ".join(f"step{i}" for i in range(50_000))
        client, _ = scripted_client(dict([script_entry(SOLVER, draft.problem, 0, text)]))
        assert synthesize_solution(draft, client, SOLVER) == text


class TestParseCorrectnessJudgment:
    def test_full_judgment(self):
        text = "extracted_final_answer: 42\nreasoning: matches\ncorrect: yes\nconfidence: 95"
        assert parse_correctness_judgment(text) == ("42", 1, 95)

    def test_none_answer_and_default_confidence(self):
        text = "extracted_final_answer: None\nreasoning: nothing stated\ncorrect: no"
        assert parse_correctness_judgment(text) == (None, 0, 100)

    def test_unmappable_correct_token(self):
        with pytest.raises(ParseError) as excinfo:
            parse_correctness_judgment("correct: maybe")
        assert excinfo.value.missing == ("correct",)

    def test_missing_correct_field(self):
        with pytest.raises(ParseError):
            parse_correctness_judgment("extracted_final_answer: 7\nreasoning: fine")

    def test_labels_case_insensitive(self):
        assert parse_correctness_judgment("CORRECT: YES") == (None, 1, 100)

    def test_percent_sign_stripped(self):
        assert parse_correctness_judgment("correct: no\nconfidence: 88%")[2] == 88


class TestVerifyCorrectness:
    def test_yes_maps_to_one(self):
        draft = make_draft()
        trajectory = "the answer is \\boxed{2}"
        judgment = "extracted_final_answer: 2\nreasoning: match\ncorrect: yes\nconfidence: 90"
        client, _ = scripted_client(
            dict([script_entry(VERIFIER, judgment_prompt(draft, trajectory), 0, judgment)])
        )
        record = verify_correctness(draft, trajectory, client, VERIFIER, solver_model="solver-x")
        assert record.correct == 1
        assert record.extracted_answer == "2"
        assert record.verifier_confidence == 90
        assert record.solver_model == "solver-x"

    def test_no_maps_to_zero(self):
        draft = make_draft()
        trajectory = "the answer is \\boxed{3}"
        judgment = "extracted_final_answer: 3\nreasoning: differs\ncorrect: no\nconfidence: 90"
        client, _ = scripted_client(
            dict([script_entry(VERIFIER, judgment_prompt(draft, trajectory), 0, judgment)])
        )
        assert verify_correctness(draft, trajectory, client, VERIFIER, "solver-x").correct == 0

    def test_provider_failure_fails_closed(self):
        draft = make_draft()
        client, _ = scripted_client({})  # every call misses
        record = verify_correctness(draft, "some text", client, VERIFIER, "solver-x")
        assert record.correct == 0
        assert record.extracted_answer is None
        assert record.verifier_confidence == 100

    def test_malformed_judgment_fails_closed(self):
        draft = make_draft()
        trajectory = "text"
        client, _ = scripted_client(
            dict([script_entry(VERIFIER, judgment_prompt(draft, trajectory), 0, "correct: perhaps")])
        )
        assert verify_correctness(draft, trajectory, client, VERIFIER, "solver-x").correct == 0


def report_for(draft, retained: bool) -> ValidationReport:
    kind = Verdict.VALID if retained else Verdict.INVALID
    return ValidationReport.from_verdicts(
        draft.draft_id,
        (VerifierVerdict("a", Verdict.VALID, ""), VerifierVerdict("b", kind, "")),
    )


def trajectory_for(draft, correct: int) -> TrajectoryRecord:
    return TrajectoryRecord(
        draft_id=draft.draft_id,
        trajectory=f"work towards {draft.answer}",
        extracted_answer=draft.answer if correct else None,
        correct=correct,
        verifier_confidence=100,
        solver_model="solver-x",
    )


class TestAssembleDataset:
    def test_joins_and_flags(self):
        good = make_draft(suffix="-1")
        bad = make_draft(suffix="-2")
        samples = assemble_dataset(
            [good, bad],
            [report_for(good, True), report_for(bad, True)],
            [trajectory_for(good, 1), trajectory_for(bad, 0)],
        )
        sft, rl = split_sft_rl(samples)
        assert [s.topic for s in sft] == ["Calculus-1"]
        assert [s.topic for s in rl] == ["Calculus-2"]
        # y-partition covers everything with no overlap
        assert len(sft) + len(rl) == len(samples)

    def test_stray_trajectory_for_non_retained_draft_excluded(self, caplog):
        draft = make_draft()
        samples = assemble_dataset([draft], [report_for(draft, False)], [trajectory_for(draft, 1)])
        assert samples == []
        assert any("non-retained" in r.message for r in caplog.records)

    def test_retained_draft_without_trajectory_skipped(self):
        draft = make_draft()
        assert assemble_dataset([draft], [report_for(draft, True)], []) == []

    def test_dangling_trajectory_is_join_error(self):
        draft = make_draft()
        stray = trajectory_for(make_draft(suffix="-ghost"), 1)
        with pytest.raises(JoinError):
            assemble_dataset([draft], [report_for(draft, True)], [stray])

    def test_dangling_validation_is_join_error(self):
        draft = make_draft()
        ghost = report_for(make_draft(suffix="-ghost"), True)
        with pytest.raises(JoinError):
            assemble_dataset([draft], [ghost], [])


def candidate(i: int) -> DatasetSample:
    return DatasetSample(
        subject="Math",
        topic=f"Topic {i}",
        problem=f"Problem number {i}: compute the stable point.",
        answer=str(i),
        trajectory="a failed trajectory",
        correctness=0,
    )


def rl_entries(sample: DatasetSample, outcomes: list[str]) -> dict[str, str]:
    """Script attempts 1..len(outcomes); outcome is 'solve' or 'wrong'."""
    entries = {}
    for attempt, outcome in enumerate(outcomes, start=1):
        retry = f"attempt {attempt} on {sample.topic}"
        entries.update(dict([script_entry(SOLVER, sample.problem, attempt, retry)]))
        verdict = "yes" if outcome == "solve" else "no"
        judgment = f"extracted_final_answer: x\nreasoning: checked\ncorrect: {verdict}\nconfidence: 80"
        prompt = render(
            load_prompt("correctness_verifier"),
            question=sample.problem,
            correct_answer=sample.answer,
            predicted_solution=retry,
        )
        entries.update(dict([script_entry(VERIFIER, prompt, 0, judgment)]))
    return entries


class TestCurateRlPool:
    def test_early_stop_on_first_success(self):
        sample = candidate(1)
        client, provider = scripted_client(rl_entries(sample, ["solve"]))
        kept = curate_rl_pool([sample], 8, (client, SOLVER), (client, VERIFIER))
        assert kept == [sample]
        assert provider.calls == 2  # one synthesis + one judgment, then stop

    def test_failing_all_trials_dropped_with_exact_budget(self):
        sample = candidate(2)
        client, provider = scripted_client(rl_entries(sample, ["wrong"] * 8))
        kept = curate_rl_pool([sample], 8, (client, SOLVER), (client, VERIFIER))
        assert kept == []
        assert provider.calls == 16  # 8 syntheses + 8 judgments, never more

    def test_never_exceeds_trial_budget(self):
        sample = candidate(3)
        # 10 attempts scripted, but only 8 may be used
        client, provider = scripted_client(rl_entries(sample, ["wrong"] * 10))
        curate_rl_pool([sample], 8, (client, SOLVER), (client, VERIFIER))
        assert provider.calls == 16

    def test_zero_trials_empty_pool(self):
        client, provider = scripted_client({})
        assert curate_rl_pool([candidate(4)], 0, (client, SOLVER), (client, VERIFIER)) == []
        assert provider.calls == 0

    def test_provider_errors_count_as_failed_attempts(self):
        sample = candidate(5)
        # attempt 1 unscripted (EndpointError), attempt 2 solves
        entries = rl_entries(sample, ["wrong", "solve"])
        prompt_1 = script_entry(SOLVER, sample.problem, 1, "")[0]
        del entries[prompt_1]
        client, _ = scripted_client(entries)
        kept = curate_rl_pool([sample], 2, (client, SOLVER), (client, VERIFIER))
        assert kept == [sample]

    def test_keeps_exactly_items_with_a_scripted_success(self):
        solvable = candidate(6)
        hopeless = candidate(7)
        entries = {**rl_entries(solvable, ["wrong", "solve"]), **rl_entries(hopeless, ["wrong"] * 3)}
        client, _ = scripted_client(entries)
        kept = curate_rl_pool([hopeless, solvable], 3, (client, SOLVER), (client, VERIFIER))
        assert kept == [solvable]
