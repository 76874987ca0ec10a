"""Run configuration: one TOML file fully validated before any provider call."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .provider import (
    CompletionClient,
    HttpProvider,
    ModelRole,
    Provider,
    ResponseCache,
    ScriptedProvider,
)


class ConfigError(Exception):
    """The run configuration violates an invariant."""


ROLE_NAMES = (
    "expander",
    "generator",
    "validator_a",
    "validator_b",
    "solver",
    "correctness_verifier",
    "judge",
)

# Generation-side roles sample freely; evaluation-side roles use the fixed
# decoding configuration (temperature 0.6, top-p 0.95) by default.
_GENERATION_ROLES = {"expander", "generator", "validator_a", "validator_b"}
_ROLE_DEFAULTS = {
    "generation": {"temperature": 1.0, "top_p": 0.95, "max_tokens": 8192},
    "evaluation": {"temperature": 0.6, "top_p": 0.95, "max_tokens": 102400},
}

DEFAULT_SUBJECTS = (
    "Mathematics",
    "Physics",
    "Chemistry",
    "Biology",
    "Computer Science",
    "Engineering",
    "Economics",
    "Earth Science",
)


@dataclass(frozen=True)
class SubjectSpec:
    name: str
    draws: int = 1


@dataclass
class RunConfig:
    run_dir: Path
    run_id: str
    subjects: list[SubjectSpec]
    samples_per_topic: int
    roles: dict[str, ModelRole]
    providers: dict[str, str] = field(default_factory=dict)  # role -> provider spec
    max_in_flight: int = 4
    rl_trials: int = 8

    def validate(self) -> None:
        problems: list[str] = []
        if not self.subjects:
            problems.append("at least one subject is required")
        for spec in self.subjects:
            if not spec.name.strip():
                problems.append("subject names must be non-empty")
            if spec.draws < 1:
                problems.append(f"subject {spec.name!r}: draws must be >= 1")
        if self.samples_per_topic < 1:
            problems.append("samples_per_topic must be >= 1")
        if self.rl_trials < 0:
            problems.append("rl_trials must be >= 0")
        if self.max_in_flight < 1:
            problems.append("max_in_flight must be >= 1")
        for name in ROLE_NAMES:
            if name not in self.roles:
                problems.append(f"missing model role: {name}")
        a, b = self.roles.get("validator_a"), self.roles.get("validator_b")
        if a is not None and b is not None and a.model_id == b.model_id:
            problems.append("validator_a and validator_b must use distinct models")
        if problems:
            raise ConfigError("; ".join(problems))

    def model_ids(self) -> dict[str, str]:
        return {name: role.model_id for name, role in sorted(self.roles.items())}


def _role_defaults(name: str) -> dict:
    kind = "generation" if name in _GENERATION_ROLES else "evaluation"
    return _ROLE_DEFAULTS[kind]


def load_config(path: Path | str) -> RunConfig:
    """Parse and validate a forge.toml file. Raises ConfigError on any problem."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}")

    base = path.resolve().parent
    run_dir = Path(raw.get("run_dir", "run"))
    if not run_dir.is_absolute():
        run_dir = base / run_dir

    pipeline = raw.get("pipeline", {})
    subjects = [
        SubjectSpec(name=str(entry.get("name", "")), draws=int(entry.get("draws", 1)))
        for entry in raw.get("subjects", [{"name": name} for name in DEFAULT_SUBJECTS])
    ]

    roles: dict[str, ModelRole] = {}
    providers: dict[str, str] = {}
    models = raw.get("models", {})
    if not isinstance(models, dict):
        raise ConfigError("[models] must be a table of role tables")
    for name, entry in models.items():
        if name not in ROLE_NAMES:
            raise ConfigError(f"unknown model role in config: {name}")
        if not isinstance(entry, dict) or "model_id" not in entry:
            raise ConfigError(f"model role {name} needs a model_id")
        defaults = _role_defaults(name)
        roles[name] = ModelRole(
            name=name,
            model_id=str(entry["model_id"]),
            temperature=float(entry.get("temperature", defaults["temperature"])),
            top_p=float(entry.get("top_p", defaults["top_p"])),
            max_tokens=int(entry.get("max_tokens", defaults["max_tokens"])),
        )
        if "provider" in entry:
            providers[name] = str(entry["provider"])

    config = RunConfig(
        run_dir=run_dir,
        run_id=str(raw.get("run_id", run_dir.name)),
        subjects=subjects,
        samples_per_topic=int(pipeline.get("samples_per_topic", 1)),
        roles=roles,
        providers=providers,
        max_in_flight=int(pipeline.get("max_in_flight", 4)),
        rl_trials=int(pipeline.get("rl_trials", 8)),
    )
    config.validate()
    return config


def build_provider(spec: str, base_dir: Path) -> Provider:
    """Construct a provider from a spec string: scripted:<fixture> or http:<name>."""
    kind, _, argument = spec.partition(":")
    if kind == "scripted":
        fixture = Path(argument)
        if not fixture.is_absolute():
            fixture = base_dir / fixture
        return ScriptedProvider.from_file(fixture)
    if kind == "http":
        return HttpProvider(argument or "default")
    raise ConfigError(f"unknown provider spec: {spec!r}")


class ClientPool:
    """Per-role completion clients sharing one cache and one provider per spec."""

    def __init__(self, config: RunConfig, base_dir: Path, override_spec: Optional[str] = None):
        self._config = config
        self._base_dir = base_dir
        self._override = override_spec
        self._providers: dict[str, Provider] = {}
        self._clients: dict[str, CompletionClient] = {}
        self.cache = ResponseCache(config.run_dir / "cache")

    def _provider_for(self, role_name: str) -> Provider:
        spec = self._override or self._config.providers.get(role_name)
        if spec is None:
            raise ConfigError(f"no provider configured for role {role_name!r}")
        if spec not in self._providers:
            self._providers[spec] = build_provider(spec, self._base_dir)
        return self._providers[spec]

    def client(self, role_name: str) -> CompletionClient:
        if role_name not in self._clients:
            self._clients[role_name] = CompletionClient(self._provider_for(role_name), cache=self.cache)
        return self._clients[role_name]

    def endpoint(self, role_name: str) -> tuple[CompletionClient, ModelRole]:
        if role_name not in self._config.roles:
            raise ConfigError(f"missing model role: {role_name}")
        return self.client(role_name), self._config.roles[role_name]

    @property
    def providers(self) -> dict[str, Provider]:
        return dict(self._providers)
