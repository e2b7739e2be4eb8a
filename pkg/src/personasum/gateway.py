"""HTTP gateway to chat-completion endpoints.

One code path serves the teacher, student, and judge roles; they differ
only in endpoint, model id, and sampling settings. Responses are cached
on disk keyed by the full request content, so re-runs replay byte-identical
text without network traffic.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from personasum import PersonasumError
from personasum.prompts import ChatPrompt
from personasum.records import dump_line, write_atomic

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_NEW_TOKENS = 350

BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_CAP_S = 32.0

API_KEY_ENV = "LLM_API_KEY"


class GatewayError(PersonasumError):
    pass


class EndpointUnreachable(GatewayError):
    """Transport failures or 5xx responses that survived every retry."""


class GatewayTimeout(EndpointUnreachable):
    """The endpoint did not answer within timeout_s, on any attempt."""


class MalformedResponse(GatewayError):
    """The endpoint answered but no assistant text could be extracted."""


@dataclass
class CompletionConfig:
    endpoint_url: str
    model_id: str
    temperature: float = DEFAULT_TEMPERATURE
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    timeout_s: float = 60.0
    max_retries: int = 3
    role: str | None = None  # teacher/student/judge: selects the API key override

    def __post_init__(self):
        if not self.endpoint_url or not self.model_id:
            raise ValueError("endpoint_url and model_id are required")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be > 0")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def api_key(self) -> str | None:
        if self.role:
            key = os.environ.get(f"{API_KEY_ENV}_{self.role.upper()}")
            if key:
                return key
        return os.environ.get(API_KEY_ENV)


@dataclass
class CompletionResult:
    text: str
    prompt_hash: str
    from_cache: bool
    latency_ms: float
    attempt_count: int  # 0 when served from cache


def prompt_cache_key(prompt: ChatPrompt, config: CompletionConfig) -> str:
    payload = json.dumps(
        [prompt.system, prompt.user, config.model_id, config.temperature,
         config.max_new_tokens],
        sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def backoff_delay(attempt: int, base: float = BACKOFF_BASE_S,
                  factor: float = BACKOFF_FACTOR, cap: float = BACKOFF_CAP_S) -> float:
    """Delay before retry number `attempt` (1-based): base * factor^(attempt-1), capped."""
    return min(cap, base * factor ** (attempt - 1))


class Gateway:
    def __init__(
        self,
        cache_dir: str | Path | None = None,
        trace_path: str | Path | None = None,
        backoff_base_s: float = BACKOFF_BASE_S,
        backoff_cap_s: float = BACKOFF_CAP_S,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.trace_path = Path(trace_path) if trace_path else None
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self._sleep = sleep
        self._trace_lock = threading.Lock()
        self._session = requests.Session()

    # -- cache ---------------------------------------------------------

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{key}.json"

    def _cache_read(self, key: str) -> str | None:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        try:
            return json.loads(path.read_text("utf-8"))["text"]
        except (ValueError, KeyError):
            return None  # corrupt entry: treat as a miss and overwrite

    def _cache_write(self, key: str, text: str) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        write_atomic(path, json.dumps({"text": text}, ensure_ascii=False))

    # -- tracing -------------------------------------------------------

    def _trace(self, **fields) -> None:
        if self.trace_path is None:
            return
        with self._trace_lock:
            with open(self.trace_path, "a", encoding="utf-8") as fh:
                fh.write(dump_line(fields))
                fh.write("\n")

    # -- completion ----------------------------------------------------

    def complete(self, prompt: ChatPrompt, config: CompletionConfig) -> CompletionResult:
        """One completion, retried on transport/5xx failures with exponential backoff."""
        key = prompt_cache_key(prompt, config)
        cached = self._cache_read(key)
        if cached is not None:
            self._trace(event="complete", role=config.role, model_id=config.model_id,
                        prompt_hash=key, from_cache=True, attempt_count=0, latency_ms=0.0)
            return CompletionResult(text=cached, prompt_hash=key, from_cache=True,
                                    latency_ms=0.0, attempt_count=0)

        body = {
            "model": config.model_id,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": config.temperature,
            "max_tokens": config.max_new_tokens,
        }
        headers = {"Content-Type": "application/json"}
        api_key = config.api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        attempts_allowed = config.max_retries + 1
        attempt = 0
        started = time.monotonic()
        last_error: GatewayError | None = None
        while attempt < attempts_allowed:
            attempt += 1
            try:
                resp = self._session.post(config.endpoint_url, json=body,
                                          headers=headers, timeout=config.timeout_s)
            except requests.Timeout as exc:
                last_error = GatewayTimeout(
                    f"{config.endpoint_url}: timed out after {config.timeout_s}s "
                    f"(attempt {attempt}/{attempts_allowed})")
                last_error.__cause__ = exc
            except requests.RequestException as exc:
                last_error = EndpointUnreachable(
                    f"{config.endpoint_url}: {exc} (attempt {attempt}/{attempts_allowed})")
                last_error.__cause__ = exc
            else:
                if resp.status_code >= 500:
                    last_error = EndpointUnreachable(
                        f"{config.endpoint_url}: HTTP {resp.status_code} "
                        f"(attempt {attempt}/{attempts_allowed})")
                else:
                    text = self._extract_text(resp)
                    latency_ms = (time.monotonic() - started) * 1000.0
                    self._cache_write(key, text)
                    self._trace(event="complete", role=config.role,
                                model_id=config.model_id, prompt_hash=key,
                                from_cache=False, attempt_count=attempt,
                                latency_ms=round(latency_ms, 3), status=resp.status_code)
                    return CompletionResult(text=text, prompt_hash=key, from_cache=False,
                                            latency_ms=latency_ms, attempt_count=attempt)
            if attempt < attempts_allowed:
                self._sleep(backoff_delay(attempt, self.backoff_base_s,
                                          BACKOFF_FACTOR, self.backoff_cap_s))
        self._trace(event="complete", role=config.role, model_id=config.model_id,
                    prompt_hash=key, from_cache=False, attempt_count=attempt,
                    error=str(last_error))
        assert last_error is not None
        raise last_error

    def _extract_text(self, resp: requests.Response) -> str:
        if resp.status_code != 200:
            raise MalformedResponse(
                f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"no assistant text in response: {exc}") from exc
        if not isinstance(content, str):
            raise MalformedResponse("assistant content is not text")
        return content

    def complete_batch(
        self,
        prompts: Sequence[ChatPrompt],
        config: CompletionConfig,
        parallelism: int = 1,
    ) -> list[CompletionResult | GatewayError]:
        """Complete prompts with bounded concurrency, results in input order.

        Per-item failures land in their slot as the error instance instead
        of aborting the whole batch.
        """
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if not prompts:
            return []

        def one(prompt: ChatPrompt) -> CompletionResult | GatewayError:
            try:
                return self.complete(prompt, config)
            except GatewayError as exc:
                return exc

        if parallelism == 1:
            return [one(p) for p in prompts]
        with ThreadPoolExecutor(max_workers=min(parallelism, len(prompts))) as pool:
            return list(pool.map(one, prompts))


@dataclass
class SweepRow:
    temperature: float
    max_new_tokens: int
    texts: list[str]
    errors: int
    metrics: dict[str, float]

    def to_record(self) -> dict:
        return {"temperature": self.temperature, "max_new_tokens": self.max_new_tokens,
                "errors": self.errors, "metrics": self.metrics, "texts": self.texts}


def sweep(
    gateway: Gateway,
    prompts: Sequence[ChatPrompt],
    base_config: CompletionConfig,
    temperatures: Sequence[float],
    max_new_tokens_values: Sequence[int],
    evaluate: Callable[[list[str]], dict[str, float]] | None = None,
    parallelism: int = 1,
) -> list[SweepRow]:
    """Run the Cartesian grid of sampling settings over the prompt set.

    Each grid cell completes every prompt and, when given, applies the
    evaluation hook to the completion texts. Failed completions inside a
    cell are counted, not fatal.
    """
    if not prompts:
        raise ValueError("prompt set is empty")
    if not temperatures or not max_new_tokens_values:
        raise ValueError("grid axes must be non-empty")
    rows = []
    for temperature in temperatures:
        for max_new in max_new_tokens_values:
            config = CompletionConfig(
                endpoint_url=base_config.endpoint_url,
                model_id=base_config.model_id,
                temperature=temperature,
                max_new_tokens=max_new,
                timeout_s=base_config.timeout_s,
                max_retries=base_config.max_retries,
                role=base_config.role,
            )
            results = gateway.complete_batch(prompts, config, parallelism=parallelism)
            texts = [r.text for r in results if isinstance(r, CompletionResult)]
            errors = sum(1 for r in results if isinstance(r, GatewayError))
            metrics = evaluate(texts) if evaluate is not None else {}
            rows.append(SweepRow(temperature=temperature, max_new_tokens=max_new,
                                 texts=texts, errors=errors, metrics=metrics))
    return rows
