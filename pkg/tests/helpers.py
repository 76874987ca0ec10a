"""Shared test helpers: scripted clients and canned model roles."""

from __future__ import annotations

from forge.provider import (
    CompletionClient,
    ModelRole,
    ResponseCache,
    ScriptedProvider,
    build_request,
    request_digest,
)


def make_role(name: str = "tester", model_id: str = "model-x") -> ModelRole:
    return ModelRole(name=name, model_id=model_id, temperature=0.6, top_p=0.95, max_tokens=4096)


def script_entry(role: ModelRole, prompt: str, sample_index: int, response: str) -> tuple[str, str]:
    """Fixture entry for the request the pipeline would build from this prompt."""
    return request_digest(build_request(role, prompt, sample_index=sample_index)), response


def scripted_client(
    entries: dict[str, str],
    cache_dir=None,
) -> tuple[CompletionClient, ScriptedProvider]:
    provider = ScriptedProvider(entries)
    cache = ResponseCache(cache_dir) if cache_dir is not None else None
    client = CompletionClient(provider, cache=cache, sleep=lambda _s: None)
    return client, provider
