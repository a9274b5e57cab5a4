"""Language-model backends behind one interface.

Two implementations: a live OpenAI-compatible chat-completions client and a
deterministic scripted backend keyed by (role, plan version, step id,
iteration).  ``Gateway`` wraps a backend, records every request (prompt
capture for tests), and provides structured-output parsing with a bounded
repair pipeline.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any

import httpx

log = logging.getLogger(__name__)

NO_SCRIPT_FALLBACK = "NO-SCRIPT"

_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_-]+)?\s*\n?(.*?)```", re.DOTALL)


class BackendError(Exception):
    """Unrecoverable backend failure."""


class ScenarioMissError(BackendError):
    """Strict scripted backend received a request with no scripted entry."""

    def __init__(self, key: tuple[str, int, str, int]):
        self.key = key
        super().__init__(f"no scripted response for key {key!r}")


class ParseFailure(BackendError):
    """Structured parse failed after the full repair pipeline."""

    def __init__(self, raw: str, diagnostics: list[str]):
        self.raw = raw
        self.diagnostics = diagnostics
        super().__init__("structured parse failed: " + "; ".join(diagnostics))


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant | tool
    content: str

    def __post_init__(self) -> None:
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class Caller:
    """Identifies who is asking; the scripted backend's lookup key."""

    role: str
    plan_version: int
    step_id: str
    iteration: int

    def key(self) -> tuple[str, int, str, int]:
        return (self.role, self.plan_version, self.step_id, self.iteration)


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    caller: Caller
    schema: dict[str, str] | None = None
    temperature: float = 0.0
    max_tokens: int = 2048

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")


class ScriptedBackend:
    """Pure deterministic backend: responses looked up by caller key.

    A scripted entry's response may be a single string or a list of strings;
    repeated hits on the same key (e.g. the corrective re-prompt of the repair
    pipeline) are served in list order, with the last entry repeated.
    """

    def __init__(self, entries: dict[tuple[str, int, str, int], str | list[str]],
                 strict: bool = True):
        self.entries = dict(entries)
        self.strict = strict
        self._hits: dict[tuple[str, int, str, int], int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ScriptedBackend":
        entries: dict[tuple[str, int, str, int], str | list[str]] = {}
        for e in doc["entries"]:
            key = (e["role"], int(e["plan_version"]), e["step_id"], int(e["iteration"]))
            if key in entries:
                raise ValueError(f"duplicate scenario key {key!r}")
            entries[key] = e["response"]
        return cls(entries, strict=doc.get("strict", True))

    def complete(self, request: CompletionRequest) -> str:
        key = request.caller.key()
        with self._lock:
            hit = self._hits.get(key, 0)
            self._hits[key] = hit + 1
        entry = self.entries.get(key)
        if entry is None:
            if self.strict:
                raise ScenarioMissError(key)
            return NO_SCRIPT_FALLBACK
        if isinstance(entry, list):
            return entry[min(hit, len(entry) - 1)]
        return entry


class LiveBackend:
    """OpenAI-compatible chat-completions client with bounded retries."""

    def __init__(self, base_url: str, model: str,
                 api_key_env: str = "PATHFINDER_API_KEY",
                 max_retries: int = 3, backoff_s: float = 0.5,
                 max_concurrency: int = 4,
                 transport: httpx.BaseTransport | None = None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = os.environ.get(api_key_env, "")
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._sem = threading.Semaphore(max_concurrency)
        self._client = httpx.Client(transport=transport, timeout=60.0)

    def complete(self, request: CompletionRequest) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                with self._sem:
                    resp = self._client.post(
                        f"{self.base_url}/chat/completions", json=payload, headers=headers
                    )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_exc = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (2 ** attempt))
        raise BackendError(f"live backend failed after {self.max_retries + 1} attempts") from last_exc


_KIND_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "array": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, dict),
}


def _check_schema(value: Any, schema: dict[str, str]) -> str | None:
    """Returns a violation description, or None when the value conforms.

    ``schema`` maps required field names to kinds (string/number/integer/
    boolean/array/object).  Missing required fields are never defaulted.
    """
    if not isinstance(value, dict):
        return f"expected object, got {type(value).__name__}"
    for name, kind in schema.items():
        if name not in value:
            return f"missing required field {name!r}"
        check = _KIND_CHECKS.get(kind)
        if check and not check(value[name]):
            return f"field {name!r} is not of kind {kind}"
    return None


def _first_balanced_braces(text: str) -> str | None:
    start = text.find("{")
    while start != -1:
        depth = 0
        in_str = False
        escape = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start:i + 1]
        start = text.find("{", start + 1)
    return None


@dataclass
class Gateway:
    """Backend wrapper that records requests and repairs structured output."""

    backend: Any
    requests: list[CompletionRequest] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            self.requests.append(request)
        return self.backend.complete(request)

    def call_count(self, role: str | None = None) -> int:
        with self._lock:
            if role is None:
                return len(self.requests)
            return sum(1 for r in self.requests if r.caller.role == role)

    def prompts_for(self, role: str) -> list[str]:
        """Concatenated message text of each recorded request for a role."""
        with self._lock:
            return [
                "\n".join(m.content for m in r.messages)
                for r in self.requests
                if r.caller.role == role
            ]

    def complete_structured(self, request: CompletionRequest) -> dict[str, Any]:
        """Complete and parse against ``request.schema`` with the repair pipeline."""
        text = self.complete(request)
        return self.parse_structured(text, request.schema or {}, request)

    def parse_structured(self, text: str, schema: dict[str, str],
                         request: CompletionRequest | None = None) -> dict[str, Any]:
        """Parse model text into a schema-conforming object.

        Repair stages, in order: direct parse; strip code fences; first
        balanced-brace region; one corrective re-prompt.  The first stage that
        yields a conforming object wins.
        """
        diagnostics: list[str] = []

        candidates = [("direct", text)]
        fenced = _FENCE_RE.search(text)
        if fenced:
            candidates.append(("fence-stripped", fenced.group(1).strip()))
        braced = _first_balanced_braces(text)
        if braced is not None:
            candidates.append(("balanced-braces", braced))

        for stage, candidate in candidates:
            parsed, why = self._try_parse(candidate, schema)
            if parsed is not None:
                return parsed
            diagnostics.append(f"{stage}: {why}")

        if request is not None:
            repair = CompletionRequest(
                messages=request.messages + (
                    ChatMessage("assistant", text or " "),
                    ChatMessage(
                        "user",
                        "Your previous reply was not valid JSON for the required "
                        f"schema ({', '.join(schema) or 'object'}). Reply with only "
                        "the JSON object.",
                    ),
                ),
                caller=request.caller,
                schema=schema,
                temperature=request.temperature,
                max_tokens=request.max_tokens,
            )
            retry_text = self.complete(repair)
            for extract in (retry_text, _first_balanced_braces(retry_text)):
                if extract is None:
                    continue
                parsed, why = self._try_parse(extract, schema)
                if parsed is not None:
                    return parsed
                diagnostics.append(f"re-prompt: {why}")
        else:
            diagnostics.append("re-prompt: unavailable (no request context)")

        raise ParseFailure(text, diagnostics)

    @staticmethod
    def _try_parse(candidate: str, schema: dict[str, str]) -> tuple[dict[str, Any] | None, str]:
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError as exc:
            return None, f"invalid JSON ({exc.msg} at pos {exc.pos})"
        violation = _check_schema(value, schema)
        if violation:
            return None, violation
        return value, ""
