"""Report generation: stats, decontamination, pass@k, judging, dataset export."""

from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path
from typing import Optional, Sequence

from . import analysis
from .records import DatasetSample, deserialize_record, serialize_record

logger = logging.getLogger(__name__)

TOP_MATCHES = 20


class InputError(Exception):
    """An input file is missing or malformed."""

    def __init__(self, message: str, path: Optional[Path] = None):
        super().__init__(f"{message}: {path}" if path is not None else message)
        self.path = path


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise InputError("input file not found", path)
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rows.append(json.loads(raw))
            except json.JSONDecodeError as exc:
                raise InputError(f"line {lineno} is not valid JSON ({exc})", path)
    return rows


def read_dataset(path: Path) -> list[DatasetSample]:
    if not path.exists():
        raise InputError("dataset file not found", path)
    samples = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = deserialize_record(raw)
            except (ValueError, KeyError) as exc:
                raise InputError(f"line {lineno} is not a valid record ({exc})", path)
            if not isinstance(record, DatasetSample):
                raise InputError(f"line {lineno} is not a dataset sample", path)
            samples.append(record)
    return samples


def _texts_and_ids(path: Path, field: str) -> tuple[list[str], list[str]]:
    texts, ids = [], []
    for i, row in enumerate(_read_jsonl(path)):
        if field not in row:
            raise InputError(f"row {i} has no {field!r} field", path)
        texts.append(str(row[field]))
        ids.append(str(row.get("id", i)))
    return texts, ids


def stats_report(dataset_path: Path, out_path: Path) -> dict:
    samples = read_dataset(dataset_path)
    stats = analysis.corpus_stats(samples)
    payload = {
        "stats": dataclasses.asdict(stats),
        "subject_distribution": analysis.subject_distribution(samples),
    }
    _write_json(out_path, payload)
    return payload


def decontam_report(
    train_path: Path,
    test_path: Path,
    gram_sizes: Sequence[int],
    out_path: Path,
    train_field: str = "problem",
    test_field: str = "problem",
) -> dict:
    train_texts, train_ids = _texts_and_ids(train_path, train_field)
    test_texts, test_ids = _texts_and_ids(test_path, test_field)
    results = []
    for n in gram_sizes:
        report = analysis.contamination_score(train_texts, test_texts, n, train_ids, test_ids)
        ranked = sorted(
            range(len(report.per_item_max)),
            key=lambda i: (-report.per_item_max[i].jaccard, i),
        )[:TOP_MATCHES]
        results.append(
            {
                "n": n,
                "score": report.score,
                "num_train": len(train_texts),
                "num_test": len(test_texts),
                "top_matches": [dataclasses.asdict(report.per_item_max[i]) for i in ranked],
            }
        )
    payload = {"tokenizer": analysis.TOKENIZER_SPEC, "results": results}
    _write_json(out_path, payload)
    return payload


def passk_report(results_path: Path, k_values: Sequence[int], out_path: Path) -> dict:
    rows = _read_jsonl(results_path)
    per_problem = []
    sums = {k: 0.0 for k in k_values}
    for i, row in enumerate(rows):
        try:
            problem_id = str(row["problem_id"])
            n, c = int(row["n"]), int(row["c"])
        except (KeyError, TypeError, ValueError):
            raise InputError(f"row {i} must have problem_id, n, c", results_path)
        estimates = {}
        for k in k_values:
            try:
                estimates[str(k)] = analysis.pass_at_k(n, c, k)
            except analysis.DomainError as exc:
                raise InputError(f"row {i} ({problem_id}): {exc}", results_path)
        per_problem.append({"problem_id": problem_id, "n": n, "c": c, "pass_at_k": estimates})
        for k in k_values:
            sums[k] += estimates[str(k)]
    means = {str(k): (sums[k] / len(rows) if rows else 0.0) for k in k_values}
    payload = {"k_values": sorted(k_values), "mean_pass_at_k": means, "per_problem": per_problem}
    _write_json(out_path, payload)
    return payload


def judge_report(
    triples_path: Path,
    judge: tuple,
    seed: int,
    out_path: Path,
) -> dict:
    rows = _read_jsonl(triples_path)
    triples = []
    for i, row in enumerate(rows):
        entry = row.get("problems", row)
        if not isinstance(entry, dict) or len(entry) != 3:
            raise InputError(f"row {i} must map exactly three sources to problem texts", triples_path)
        triples.append({str(k): str(v) for k, v in entry.items()})
    outcome = analysis.judge_triples(triples, judge, seed)
    payload = {
        "seed": seed,
        "num_triples": len(triples),
        "accepted_trials": len(outcome.trials),
        "discarded_trials": len(triples) - len(outcome.trials),
        "mean_score_by_source": outcome.mean_score_by_source,
        "trials": [{"triple_id": t.triple_id, "scores": dict(sorted(t.scores.items()))} for t in outcome.trials],
    }
    _write_json(out_path, payload)
    return payload


def export_dataset(dataset_path: Path, rl_pool_path: Path, out_dir: Path) -> tuple[Path, Path]:
    """Split the assembled dataset into SFT (y=1) and RL (curated pool) files."""
    samples = read_dataset(dataset_path)
    if not rl_pool_path.exists():
        raise InputError("rl pool not found; run the rl-pool stage first", rl_pool_path)
    pool = read_dataset(rl_pool_path)

    out_dir.mkdir(parents=True, exist_ok=True)
    sft_path = out_dir / "dataset_sft.jsonl"
    rl_path = out_dir / "dataset_rl.jsonl"
    with sft_path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            if sample.correctness == 1:
                fh.write(serialize_record(sample) + "\n")
    with rl_path.open("w", encoding="utf-8") as fh:
        for sample in pool:
            row = {
                "kind": "rl_problem",
                "schema_version": 1,
                "subject": sample.subject,
                "topic": sample.topic,
                "problem": sample.problem,
                "answer": sample.answer,
            }
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n")
    return sft_path, rl_path
