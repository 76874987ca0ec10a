"""Command-line entry point: forge <stage|report> [...]."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

from . import __version__, reports, stages
from .config import ClientPool, ConfigError, RunConfig, load_config
from .records import JsonlStore
from .reports import InputError
from .solver import JoinError
from .stages import MissingPredecessor

logger = logging.getLogger(__name__)

STAGE_COMMANDS = ("expand", "generate", "solve", "assemble", "rl-pool")


class LockedRunDir(Exception):
    """Another process holds the run directory lock."""


@contextmanager
def run_dir_lock(run_dir: Path):
    """Exclusive lock so one process at a time writes a run directory."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lock_path = run_dir / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockedRunDir(f"{lock_path} exists; another run is active (delete it if stale)")
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        try:
            lock_path.unlink()
        except FileNotFoundError:
            pass


def write_manifest(config: RunConfig) -> None:
    """Record which models played which roles. Rewritten only when content changes."""
    payload = {
        "code_version": __version__,
        "run_id": config.run_id,
        "models": {
            name: {
                "model_id": role.model_id,
                "temperature": role.temperature,
                "top_p": role.top_p,
                "max_tokens": role.max_tokens,
                "provider": config.providers.get(name),
            }
            for name, role in sorted(config.roles.items())
        },
        "pipeline": {
            "subjects": [dataclasses.asdict(s) for s in config.subjects],
            "samples_per_topic": config.samples_per_topic,
            "max_in_flight": config.max_in_flight,
            "rl_trials": config.rl_trials,
        },
    }
    text = json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    path = config.run_dir / "manifest.json"
    if not path.exists() or path.read_text(encoding="utf-8") != text:
        path.write_text(text, encoding="utf-8")


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default="forge.toml", help="path to the run config (TOML)")
    parser.add_argument(
        "--provider",
        default=None,
        metavar="SPEC",
        help="override every role's provider, e.g. scripted:fixtures/demo_fixture.json",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"forge {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in STAGE_COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        _add_config_arg(p)

    p = sub.add_parser("stats", help="corpus statistics for a dataset file")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("decontam", help="n-gram contamination score between two corpora")
    p.add_argument("--train", required=True, type=Path)
    p.add_argument("--test", required=True, type=Path)
    p.add_argument("--n", action="append", type=int, default=None, help="gram size; repeatable")
    p.add_argument("--train-field", default="problem")
    p.add_argument("--test-field", default="problem")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("passk", help="unbiased pass@k over a (problem_id, n, c) results file")
    p.add_argument("--results", required=True, type=Path)
    p.add_argument("--k", action="append", type=int, default=None, help="k value; repeatable")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("judge", help="blind triple-ranking quality comparison")
    _add_config_arg(p)
    p.add_argument("--triples", required=True, type=Path)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("export", help="write dataset_sft.jsonl and dataset_rl.jsonl")
    p.add_argument("--run-dir", required=True, type=Path)
    p.add_argument("--out-dir", default=None, type=Path, help="defaults to the run directory")

    return parser


def _run_stage(name: str, args: argparse.Namespace) -> int:
    config = load_config(args.config)
    base_dir = Path(args.config).resolve().parent
    with run_dir_lock(config.run_dir):
        write_manifest(config)
        pool = ClientPool(config, base_dir, override_spec=args.provider)
        if name == "expand":
            summary = stages.run_expand(config, pool)
        elif name == "generate":
            summary = stages.run_generate(config, pool)
        elif name == "solve":
            summary = stages.run_solve(config, pool)
        elif name == "assemble":
            summary = stages.run_assemble(config)
        else:
            summary = stages.run_rl_pool(config, pool)
    print(summary.line())
    return 0 if summary.failed == 0 else 1


def _run_report(args: argparse.Namespace) -> int:
    if args.command == "stats":
        payload = reports.stats_report(args.dataset, args.out)
        stats = payload["stats"]
        print(
            f"stats: problems={stats['num_problems']} subjects={stats['num_subjects']} "
            f"topics={stats['num_topics']} -> {args.out}"
        )
    elif args.command == "decontam":
        gram_sizes = args.n or [8, 13]
        payload = reports.decontam_report(
            args.train, args.test, gram_sizes, args.out, args.train_field, args.test_field
        )
        for result in payload["results"]:
            print(f"decontam: n={result['n']} score={result['score']:.6g}")
    elif args.command == "passk":
        k_values = args.k or [1]
        payload = reports.passk_report(args.results, k_values, args.out)
        for k in payload["k_values"]:
            print(f"passk: k={k} mean={payload['mean_pass_at_k'][str(k)]:.6g}")
    elif args.command == "judge":
        config = load_config(args.config)
        base_dir = Path(args.config).resolve().parent
        with run_dir_lock(config.run_dir):  # the response cache lives under run_dir
            pool = ClientPool(config, base_dir, override_spec=args.provider)
            payload = reports.judge_report(args.triples, pool.endpoint("judge"), args.seed, args.out)
        print(
            f"judge: accepted={payload['accepted_trials']} discarded={payload['discarded_trials']} "
            f"means={payload['mean_score_by_source']}"
        )
    else:  # export
        run_dir = args.run_dir
        out_dir = args.out_dir or run_dir
        with run_dir_lock(run_dir):
            sft_path, rl_path = reports.export_dataset(
                run_dir / stages.STORE_FILES["dataset"],
                run_dir / stages.STORE_FILES["rl_pool"],
                out_dir,
            )
        sft_count = sum(1 for _ in JsonlStore(sft_path))
        print(f"export: sft={sft_path} ({sft_count} samples) rl={rl_path}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command in STAGE_COMMANDS:
            return _run_stage(args.command, args)
        return _run_report(args)
    except (ConfigError, MissingPredecessor, InputError, JoinError, LockedRunDir) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
