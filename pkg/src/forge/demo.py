"""Deterministic demo corpus: scripted fixtures that drive every pipeline stage.

The fixture entries are built by rendering exactly the prompts the stages
will render, so the scripted provider is exhaustive by construction. The
demo exercises each documented failure mode at least once: an INVALID
verdict, an UNPARSEABLE verdict, a generation missing a section, a
judgment that fails closed to y=0, and an empty solver response during
RL curation. One trajectory exceeds 10,000 words to pin the
no-truncation contract.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .config import ClientPool, RunConfig, SubjectSpec, _role_defaults
from .genesis import parse_problem_sections
from .provider import ModelRole, ScriptedProvider, build_request, request_digest, write_fixture
from .records import TopicRecord, content_hash
from .stages import (
    StageSummary,
    run_assemble,
    run_expand,
    run_generate,
    run_rl_pool,
    run_solve,
)
from .taxonomy import dedup_topics
from .templates import load_prompt, render

RUN_ID = "demo"
FIXTURE_NAME = "demo_fixture.json"
PROVIDER_SPEC = f"scripted:{FIXTURE_NAME}"

SUBJECT_DRAWS = (("Mathematics", 2), ("Physics", 1), ("Computer Science", 1))
SAMPLES_PER_TOPIC = 2
RL_TRIALS = 3
MAX_IN_FLIGHT = 4

EXPANSIONS = {
    ("Mathematics", 0): "Sieve Methods\nProbability Distributions\nGraph Theory\nRandom  Variables\n   \n",
    ("Mathematics", 1): "Graph  theory\nStochastic Processes\nRandom Variables\n",
    ("Physics", 0): "Topological Field Models\nFluid Dynamics\nStatistical Mechanics\n",
    ("Computer Science", 0): (
        "Randomized Algorithms\nType Systems\nDistributed Consensus\nInformation Retrieval\n"
    ),
}

# Draft-level failure plan, keyed by (subject, topic, sample_index).
MISSING_SECTION = {("Computer Science", "Type Systems", 1)}
INVALID_SECOND = {("Mathematics", "Stochastic Processes", 1)}
UNPARSEABLE_FIRST = {("Physics", "Fluid Dynamics", 1)}
INVALID_BOTH = {("Computer Science", "Distributed Consensus", 1)}
LOWERCASE_VERDICT = {("Mathematics", "Graph Theory", 0)}
LONG_TRAJECTORY = ("Mathematics", "Sieve Methods", 0)

# Stage-3 incorrect trajectories and the shape of their failing judgment.
INCORRECT = {
    ("Mathematics", "Probability Distributions", 1): "wrong_value",
    ("Mathematics", "Random  Variables", 0): "no_answer",
    ("Physics", "Topological Field Models", 1): "malformed_judgment",
    ("Physics", "Statistical Mechanics", 0): "wrong_value",
    ("Computer Science", "Randomized Algorithms", 1): "wrong_no_confidence",
    ("Computer Science", "Information Retrieval", 0): "wrong_value",
}
NO_CONFIDENCE_CORRECT = {
    ("Physics", "Topological Field Models", 0),
    ("Computer Science", "Randomized Algorithms", 0),
}

# RL curation outcomes per candidate, one token per attempt: solve | wrong | empty.
RL_PLAN = {
    ("Mathematics", "Probability Distributions", 1): ("solve",),
    ("Mathematics", "Random  Variables", 0): ("wrong", "wrong", "solve"),
    ("Physics", "Topological Field Models", 1): ("wrong", "solve"),
    ("Physics", "Statistical Mechanics", 0): ("wrong", "empty", "wrong"),
    ("Computer Science", "Randomized Algorithms", 1): ("wrong", "wrong", "wrong"),
    ("Computer Science", "Information Retrieval", 0): ("wrong", "wrong", "wrong"),
}
RL_KEPT = {
    ("Mathematics", "Probability Distributions", 1),
    ("Mathematics", "Random  Variables", 0),
    ("Physics", "Topological Field Models", 1),
}


def demo_roles() -> dict[str, ModelRole]:
    ids = {
        "expander": "expander-1",
        "generator": "generator-1",
        "validator_a": "validator-a-1",
        "validator_b": "validator-b-1",
        "solver": "solver-1",
        "correctness_verifier": "verifier-1",
        "judge": "judge-1",
    }
    return {
        name: ModelRole(name=name, model_id=model_id, **_role_defaults(name))
        for name, model_id in ids.items()
    }


def demo_config(base_dir: Path) -> RunConfig:
    roles = demo_roles()
    return RunConfig(
        run_dir=Path(base_dir) / "run",
        run_id=RUN_ID,
        subjects=[SubjectSpec(name=name, draws=draws) for name, draws in SUBJECT_DRAWS],
        samples_per_topic=SAMPLES_PER_TOPIC,
        roles=roles,
        providers={name: PROVIDER_SPEC for name in roles},
        max_in_flight=MAX_IN_FLIGHT,
        rl_trials=RL_TRIALS,
    )


def _params(subject: str, topic: str, index: int) -> tuple[int, int]:
    digest = int(content_hash([subject, topic, str(index)])[:8], 16)
    return 2 + digest % 5, 3 + (digest // 5) % 7


def _iterate(a: int, b: int, times: int) -> int:
    value = a
    for _ in range(times):
        value = a * value + b
    return value


def _generation_response(subject: str, topic: str, index: int) -> str:
    a, b = _params(subject, topic, index)
    times = index + 2
    value = _iterate(a, b, times)
    first = a * a + b
    problem = (
        f"Within the study of {topic}, define the map g(m) = {a}m + {b} on the integers "
        f"and let the seed be m0 = {a}. Apply g exactly {times} times starting from m0 "
        f"and report the resulting integer."
    )
    reasoning = (
        f"Each application of g multiplies the current value by {a} and adds {b}.\n"
        f"Starting from m0 = {a}, the first application gives g({a}) = {first}."
    )
    solution = (
        f"Iterating the affine map {times} times from {a} yields the chain ending at {value}.\n"
        f"No step involves division, so the result is an exact integer."
    )
    if (subject, topic, index) in MISSING_SECTION:
        return (
            f"Problem: {problem}\n"
            f"Reasoning: {reasoning}\n"
            f"Solution: {solution}\n"
            f"The final value is {value}."
        )
    return (
        f"Problem: {problem}\n"
        f"Reasoning: {reasoning}\n"
        f"Solution: {solution}\n"
        f"Answer: {value}"
    )


def _validator_responses(key: tuple[str, str, int]) -> tuple[str, str]:
    valid = "Verdict: VALID\nReason: well-posed with a single checkable answer."
    if key in INVALID_SECOND:
        return valid, "Verdict: INVALID\nReason: the stated answer does not match the recurrence."
    if key in UNPARSEABLE_FIRST:
        return (
            "This looks interesting but I am not able to commit to a decision here.",
            valid,
        )
    if key in INVALID_BOTH:
        invalid = "Verdict: INVALID\nReason: the problem understates its assumptions."
        return invalid, invalid
    if key in LOWERCASE_VERDICT:
        return valid, "verdict: valid\nreason: checks out after recomputation."
    return valid, valid


def _long_trajectory(value: int) -> str:
    parts = ["Okay, let us map out the computation in full detail before committing to an answer."]
    for step in range(1, 651):
        parts.append(
            f"Step {step}: the residue class {step % 7} contributes weight {step * step % 11} "
            f"to the running tally, leaving the partial sum at {step * (step + 3) % 97}."
        )
    parts.append(
        f"After consolidating every partial tally the count stabilizes, so the final answer is \\boxed{{{value}}}."
    )
    return "\n".join(parts)


def _trajectory_response(key: tuple[str, str, int], value: int) -> str:
    subject, topic, index = key
    if key == LONG_TRAJECTORY:
        return _long_trajectory(value)
    mode = INCORRECT.get(key)
    if mode == "no_answer":
        return (
            f"Okay, this concerns {topic}. I keep re-deriving the intermediate values and "
            "second-guessing the seed, and I cannot settle on a final value here."
        )
    if mode is not None:
        return (
            f"Okay, let us work through the iteration for {topic}. Chasing the chain of "
            f"applications I arrive at {value + 1}. The final answer is \\boxed{{{value + 1}}}."
        )
    return (
        f"Okay, let us work through the iteration for {topic} step by step. Applying the map "
        f"repeatedly from the seed gives the chain ending at {value}. "
        f"The final answer is \\boxed{{{value}}}."
    )


def _judgment_response(key: tuple[str, str, int], value: int) -> str:
    mode = INCORRECT.get(key)
    if mode == "wrong_value":
        return (
            f"extracted_final_answer: {value + 1}\n"
            "reasoning: The extracted value disagrees with the reference answer.\n"
            "correct: no\n"
            "confidence: 88"
        )
    if mode == "no_answer":
        return (
            "extracted_final_answer: None\n"
            "reasoning: The solution never commits to a final value.\n"
            "correct: no"
        )
    if mode == "malformed_judgment":
        return "correct: maybe"
    if mode == "wrong_no_confidence":
        return (
            f"extracted_final_answer: {value + 1}\n"
            "reasoning: The final values differ by one.\n"
            "correct: no"
        )
    if key in NO_CONFIDENCE_CORRECT:
        return (
            f"extracted_final_answer: {value}\n"
            "reasoning: The extracted value matches the reference answer exactly.\n"
            "correct: yes"
        )
    return (
        f"extracted_final_answer: {value}\n"
        "reasoning: The extracted value matches the reference answer exactly.\n"
        "correct: yes\n"
        "confidence: 96"
    )


def _rl_attempt_trajectory(key: tuple[str, str, int], attempt: int, outcome: str, value: int) -> str:
    if outcome == "empty":
        return "   \n  "
    if outcome == "solve":
        return (
            f"Fresh attempt {attempt}: rechecking each application of the map carefully this time, "
            f"the chain lands on {value}. The final answer is \\boxed{{{value}}}."
        )
    return (
        f"Fresh attempt {attempt}: rushing through the applications I land on {value + attempt + 1}. "
        f"The final answer is \\boxed{{{value + attempt + 1}}}."
    )


def _rl_judgment(outcome: str, attempt: int, value: int) -> str:
    if outcome == "solve":
        return (
            f"extracted_final_answer: {value}\n"
            "reasoning: The retry matches the reference answer.\n"
            "correct: yes\n"
            "confidence: 93"
        )
    return (
        f"extracted_final_answer: {value + attempt + 1}\n"
        "reasoning: The retry still disagrees with the reference answer.\n"
        "correct: no\n"
        "confidence: 91"
    )


def demo_topics() -> list[TopicRecord]:
    """The deduplicated topic list the demo expansion yields, in store order."""
    topics: list[TopicRecord] = []
    for subject, draws in SUBJECT_DRAWS:
        raw = []
        for draw in range(draws):
            for line in EXPANSIONS[(subject, draw)].splitlines():
                text = line.strip()
                if text:
                    raw.append(TopicRecord.create(subject, text, RUN_ID))
        topics.extend(dedup_topics(raw))
    return topics


def build_demo_entries() -> dict[str, str]:
    """Fixture map digest -> response covering every request the demo run makes."""
    roles = demo_roles()
    entries: dict[str, str] = {}

    def script(role: ModelRole, prompt: str, sample_index: int, response: str) -> None:
        entries[request_digest(build_request(role, prompt, sample_index=sample_index))] = response

    expansion_template = load_prompt("subject_expansion")
    for (subject, draw), response in EXPANSIONS.items():
        prompt = render(expansion_template, subject=subject)
        script(roles["expander"], prompt, draw, response)

    generation_template = load_prompt("problem_generation")
    validator_template = load_prompt("problem_validator")
    verifier_template = load_prompt("correctness_verifier")

    for topic in demo_topics():
        for index in range(SAMPLES_PER_TOPIC):
            key = (topic.subject, topic.topic, index)
            generation = _generation_response(*key)
            script(roles["generator"], render(generation_template, topic=topic.topic), index, generation)
            if key in MISSING_SECTION:
                continue

            sections = parse_problem_sections(generation)
            problem, answer = sections["Problem"], sections["Answer"]
            value = int(answer)
            validation_prompt = render(
                validator_template, topic=topic.topic, problem=problem, answer=answer
            )
            response_a, response_b = _validator_responses(key)
            script(roles["validator_a"], validation_prompt, 0, response_a)
            script(roles["validator_b"], validation_prompt, 0, response_b)
            if key in INVALID_SECOND or key in UNPARSEABLE_FIRST or key in INVALID_BOTH:
                continue

            trajectory = _trajectory_response(key, value)
            script(roles["solver"], problem, 0, trajectory)
            judgment_prompt = render(
                verifier_template,
                question=problem,
                correct_answer=answer,
                predicted_solution=trajectory,
            )
            script(roles["correctness_verifier"], judgment_prompt, 0, _judgment_response(key, value))

            for attempt_zero, outcome in enumerate(RL_PLAN.get(key, ())):
                attempt = attempt_zero + 1
                retry = _rl_attempt_trajectory(key, attempt, outcome, value)
                script(roles["solver"], problem, attempt, retry)
                if outcome == "empty":
                    continue
                retry_prompt = render(
                    verifier_template,
                    question=problem,
                    correct_answer=answer,
                    predicted_solution=retry,
                )
                script(roles["correctness_verifier"], retry_prompt, 0, _rl_judgment(outcome, attempt, value))
    return entries


@dataclass
class DemoArtifacts:
    config: RunConfig
    pool: ClientPool
    summaries: list[StageSummary]

    @property
    def scripted_provider(self) -> ScriptedProvider:
        provider = self.pool.providers[PROVIDER_SPEC]
        assert isinstance(provider, ScriptedProvider)
        return provider


def build_demo_run(base_dir: Path | str) -> DemoArtifacts:
    """Write the fixture under base_dir and run all five stages against it."""
    base_dir = Path(base_dir)
    base_dir.mkdir(parents=True, exist_ok=True)
    write_fixture(
        base_dir / FIXTURE_NAME,
        build_demo_entries(),
        description="Scripted demo corpus: three subjects, every stage, every failure mode.",
    )
    config = demo_config(base_dir)
    config.validate()
    config.run_dir.mkdir(parents=True, exist_ok=True)
    pool = ClientPool(config, base_dir)
    summaries = [
        run_expand(config, pool),
        run_generate(config, pool),
        run_solve(config, pool),
        run_assemble(config),
        run_rl_pool(config, pool),
    ]
    return DemoArtifacts(config=config, pool=pool, summaries=summaries)


def write_demo_assets(target_dir: Path | str) -> None:
    """Emit the standalone fixture and config files used by the CLI demo."""
    target_dir = Path(target_dir)
    target_dir.mkdir(parents=True, exist_ok=True)
    write_fixture(
        target_dir / FIXTURE_NAME,
        build_demo_entries(),
        description="Scripted demo corpus: three subjects, every stage, every failure mode.",
    )
    lines = [
        f'run_id = "{RUN_ID}"',
        'run_dir = "run"',
        "",
        "[pipeline]",
        f"samples_per_topic = {SAMPLES_PER_TOPIC}",
        f"max_in_flight = {MAX_IN_FLIGHT}",
        f"rl_trials = {RL_TRIALS}",
        "",
    ]
    for name, draws in SUBJECT_DRAWS:
        lines += ["[[subjects]]", f'name = "{name}"', f"draws = {draws}", ""]
    for name, role in demo_roles().items():
        lines += [
            f"[models.{name}]",
            f'model_id = "{role.model_id}"',
            f'provider = "{PROVIDER_SPEC}"',
            "",
        ]
    (target_dir / "demo_config.toml").write_text("\n".join(lines), encoding="utf-8")
