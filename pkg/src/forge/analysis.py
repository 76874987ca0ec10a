"""Measurement suite: corpus statistics, n-gram decontamination, pass@k, judging.

The decontamination score for gram size n is the mean, over training items,
of each item's maximum n-gram Jaccard similarity against any test item. The
inverted-index fast path must return bit-identical results to the quadratic
definition; both are kept so one can audit the other.
"""

from __future__ import annotations

import logging
import random
import re
import string
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

from .provider import CompletionClient, ModelRole, ProviderError, build_request
from .records import DatasetSample
from .solver import _verify
from .templates import load_prompt, render

logger = logging.getLogger(__name__)


class DomainError(ValueError):
    """An analysis operation was called outside its domain."""


class EmptyTrainSet(ValueError):
    """Contamination scoring needs at least one training item."""


# ---------------------------------------------------------------------------
# Corpus statistics


@dataclass(frozen=True)
class CorpusStats:
    num_problems: int
    num_subjects: int
    num_topics: int
    mean_prompt_words: float
    mean_solution_words: float


def word_count(text: str) -> int:
    """Number of whitespace-delimited words."""
    return len(text.split())


def corpus_stats(samples: Sequence[DatasetSample]) -> CorpusStats:
    """Counts and arithmetic-mean word lengths over a dataset. Empty input -> zeros."""
    if not samples:
        return CorpusStats(0, 0, 0, 0.0, 0.0)
    subjects = {s.subject for s in samples}
    topics = {(s.subject, s.topic) for s in samples}
    prompt_words = sum(word_count(s.problem) for s in samples)
    solution_words = sum(word_count(s.trajectory) for s in samples)
    n = len(samples)
    return CorpusStats(
        num_problems=n,
        num_subjects=len(subjects),
        num_topics=len(topics),
        mean_prompt_words=prompt_words / n,
        mean_solution_words=solution_words / n,
    )


def subject_distribution(samples: Sequence[DatasetSample]) -> dict[str, dict[str, int]]:
    """Per-subject problem and distinct-topic counts, sorted by subject name."""
    problems: dict[str, int] = defaultdict(int)
    topics: dict[str, set[str]] = defaultdict(set)
    for s in samples:
        problems[s.subject] += 1
        topics[s.subject].add(s.topic)
    return {
        subject: {"problems": problems[subject], "topics": len(topics[subject])}
        for subject in sorted(problems)
    }


# ---------------------------------------------------------------------------
# n-gram decontamination

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

# Recorded in every report so audits can compare settings.
TOKENIZER_SPEC = "casefold; strip ASCII punctuation; split on whitespace"

Tokenizer = Callable[[str], list[str]]


def tokenize(text: str) -> list[str]:
    """Default decontamination tokenizer (see TOKENIZER_SPEC)."""
    return text.casefold().translate(_PUNCT_TABLE).split()


def ngram_set(text: str, n: int, tokenizer: Tokenizer = tokenize) -> frozenset[tuple[str, ...]]:
    """Distinct n-token windows of a text; empty when the text has < n tokens."""
    if n < 1:
        raise DomainError("n must be >= 1")
    tokens = tokenizer(text)
    return frozenset(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def jaccard(a: frozenset, b: frozenset) -> float:
    """|a∩b| / |a∪b|, with the empty-vs-empty case defined as 0."""
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


@dataclass(frozen=True)
class ItemMatch:
    train_id: str
    best_test_id: Optional[str]
    jaccard: float


@dataclass(frozen=True)
class ContaminationReport:
    n: int
    per_item_max: tuple[ItemMatch, ...]
    score: float


def _prepare_ids(prefix: str, texts: Sequence[str], ids: Optional[Sequence[str]]) -> list[str]:
    if ids is None:
        return [f"{prefix}-{i}" for i in range(len(texts))]
    if len(ids) != len(texts):
        raise ValueError(f"{prefix} ids and texts differ in length")
    return list(ids)


def _finish_report(n: int, matches: list[ItemMatch]) -> ContaminationReport:
    score = sum(m.jaccard for m in matches) / len(matches)
    return ContaminationReport(n=n, per_item_max=tuple(matches), score=score)


def contamination_score_bruteforce(
    train_texts: Sequence[str],
    test_texts: Sequence[str],
    n: int,
    train_ids: Optional[Sequence[str]] = None,
    test_ids: Optional[Sequence[str]] = None,
    tokenizer: Tokenizer = tokenize,
) -> ContaminationReport:
    """Quadratic reference: every train item scored against every test item.

    Ties in the per-item maximum resolve to the earliest test item; a
    maximum of 0 reports no best match. Texts shorter than n tokens score 0
    but still count in the averaged denominator.
    """
    if not train_texts:
        raise EmptyTrainSet("train set must be non-empty")
    if n < 1:
        raise DomainError("n must be >= 1")
    t_ids = _prepare_ids("train", train_texts, train_ids)
    s_ids = _prepare_ids("test", test_texts, test_ids)
    test_grams = [ngram_set(text, n, tokenizer) for text in test_texts]

    matches: list[ItemMatch] = []
    for t_id, text in zip(t_ids, train_texts):
        grams = ngram_set(text, n, tokenizer)
        best_score = 0.0
        best_idx: Optional[int] = None
        for j, other in enumerate(test_grams):
            score = jaccard(grams, other)
            if score > best_score:
                best_score = score
                best_idx = j
        matches.append(
            ItemMatch(train_id=t_id, best_test_id=s_ids[best_idx] if best_idx is not None else None, jaccard=best_score)
        )
    return _finish_report(n, matches)


def contamination_score(
    train_texts: Sequence[str],
    test_texts: Sequence[str],
    n: int,
    train_ids: Optional[Sequence[str]] = None,
    test_ids: Optional[Sequence[str]] = None,
    tokenizer: Tokenizer = tokenize,
) -> ContaminationReport:
    """Accelerated scoring via an inverted n-gram index over the test set.

    Only test items sharing at least one n-gram with a train item are
    scored; a shared n-gram forces jaccard > 0, so skipped pairs cannot
    change any per-item maximum. Bit-identical to the quadratic reference.
    """
    if not train_texts:
        raise EmptyTrainSet("train set must be non-empty")
    if n < 1:
        raise DomainError("n must be >= 1")
    t_ids = _prepare_ids("train", train_texts, train_ids)
    s_ids = _prepare_ids("test", test_texts, test_ids)
    test_grams = [ngram_set(text, n, tokenizer) for text in test_texts]

    index: dict[tuple[str, ...], list[int]] = defaultdict(list)
    for j, grams in enumerate(test_grams):
        for gram in grams:
            index[gram].append(j)

    matches: list[ItemMatch] = []
    for t_id, text in zip(t_ids, train_texts):
        grams = ngram_set(text, n, tokenizer)
        candidates: set[int] = set()
        for gram in grams:
            candidates.update(index.get(gram, ()))
        best_score = 0.0
        best_idx: Optional[int] = None
        # Ascending candidate order keeps tie-breaking identical to brute force.
        for j in sorted(candidates):
            score = jaccard(grams, test_grams[j])
            if score > best_score:
                best_score = score
                best_idx = j
        matches.append(
            ItemMatch(train_id=t_id, best_test_id=s_ids[best_idx] if best_idx is not None else None, jaccard=best_score)
        )
    return _finish_report(n, matches)


# ---------------------------------------------------------------------------
# pass@k


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k estimate from n samples with c correct: 1 - C(n-c,k)/C(n,k).

    Evaluated as an exact rational product of the k factors (n-c-i)/(n-i),
    so no large factorial is ever formed and the single final rounding to
    float is correct.
    """
    if n < 1 or not 0 <= c <= n or not 1 <= k <= n:
        raise DomainError(f"invalid pass@k arguments: n={n}, c={c}, k={k}")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    miss = Fraction(1)
    for i in range(k):
        miss *= Fraction(n - c - i, n - i)
    return float(1 - miss)


# ---------------------------------------------------------------------------
# Difficulty harness


def difficulty_accuracy(
    problems: Sequence[DatasetSample],
    solver: tuple[CompletionClient, ModelRole],
    verifier: tuple[CompletionClient, ModelRole],
    attempts_per_problem: int,
    max_in_flight: int = 4,
) -> float:
    """Mean per-problem pass@1 (c/n) of a solver model over a problem set.

    Each problem gets `attempts_per_problem` independent draws; every failed
    call or failed judgment counts as an incorrect attempt.
    """
    if attempts_per_problem < 1:
        raise DomainError("attempts_per_problem must be >= 1")
    if not problems:
        return 0.0
    solver_client, solver_role = solver
    verifier_client, verifier_role = verifier

    requests = [
        build_request(solver_role, render(load_prompt("solution_synthesis"), problem=p.problem), sample_index=a)
        for p in problems
        for a in range(attempts_per_problem)
    ]
    responses = solver_client.complete_many(requests, max_in_flight=max_in_flight)

    total = 0.0
    cursor = 0
    for sample in problems:
        correct = 0
        for _ in range(attempts_per_problem):
            response = responses[cursor]
            cursor += 1
            if isinstance(response, ProviderError):
                logger.warning("solver attempt failed for %s: %s", sample.draft_id, response)
                continue
            if not response.text.strip():
                continue
            record = _verify(
                sample.draft_id,
                sample.problem,
                sample.answer,
                response.text,
                verifier_client,
                verifier_role,
                solver_role.model_id,
            )
            correct += record.correct
        total += correct / attempts_per_problem
    return total / len(problems)


# ---------------------------------------------------------------------------
# Blind triple ranking

_RANKING_RE = re.compile(r"^\s*RANKING:\s*([123])\s*>\s*([123])\s*>\s*([123])\s*$")


class BadRanking(Exception):
    """The judge output is not a permutation of the three presented positions."""


@dataclass(frozen=True)
class TrialScore:
    triple_id: str
    scores: Mapping[str, int]


@dataclass(frozen=True)
class JudgeOutcome:
    trials: tuple[TrialScore, ...]
    mean_score_by_source: dict[str, float]


def parse_ranking(text: str) -> tuple[int, int, int]:
    """Parse the judge's "RANKING: i > j > k" line into best-to-worst positions."""
    for line in text.splitlines():
        match = _RANKING_RE.match(line)
        if match:
            positions = tuple(int(g) for g in match.groups())
            if sorted(positions) != [1, 2, 3]:
                raise BadRanking(f"not a permutation of positions: {line.strip()!r}")
            return positions  # type: ignore[return-value]
    raise BadRanking("no RANKING line found")


def judge_triples(
    triples: Sequence[Mapping[str, str]],
    judge: tuple[CompletionClient, ModelRole],
    seed: int,
) -> JudgeOutcome:
    """Blind 3/2/1 quality scoring of problem triples, one problem per source.

    Presentation order is shuffled per triple with a generator seeded once
    (sources visited in sorted order before shuffling, so replays are
    exact). Trials whose ranking cannot be parsed as a permutation are
    discarded and excluded from the per-source means.
    """
    client, role = judge
    rng = random.Random(seed)
    trials: list[TrialScore] = []
    sums: dict[str, int] = defaultdict(int)
    counts: dict[str, int] = defaultdict(int)

    for i, triple in enumerate(triples):
        sources = sorted(triple)
        if len(sources) != 3:
            raise ValueError(f"triple {i} must have exactly three distinct sources")
        order = list(sources)
        rng.shuffle(order)
        triple_id = f"triple-{i:04d}"
        prompt = render(
            load_prompt("judge_ranking"),
            problem_1=triple[order[0]],
            problem_2=triple[order[1]],
            problem_3=triple[order[2]],
        )
        try:
            response = client.complete(build_request(role, prompt, sample_index=0))
            ranking = parse_ranking(response.text)
        except (ProviderError, BadRanking) as exc:
            logger.warning("discarding judge trial %s: %s", triple_id, exc)
            continue
        scores = {order[position - 1]: points for points, position in zip((3, 2, 1), ranking)}
        trials.append(TrialScore(triple_id=triple_id, scores=scores))
        for source, points in scores.items():
            sums[source] += points
            counts[source] += 1

    means = {source: sums[source] / counts[source] for source in sorted(counts)}
    return JudgeOutcome(trials=tuple(trials), mean_score_by_source=means)
