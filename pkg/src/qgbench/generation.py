"""Drive external text-generation endpoints over a corpus.

Outputs are cached content-addressed by (model, params, input digest): the
first sampled completion is frozen so downstream scoring stays reproducible
even at nonzero temperature. Transport failures are retried with backoff,
then folded into a Failed result; a batch never aborts because one record
failed.
"""

from __future__ import annotations

import json
import os
import threading
import time
import urllib.error
import urllib.request
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

from .corpus import QuadRecord, EmptyCorpus
from .errors import QGBenchError
from .ioutil import atomic_write_text, dump_ndjson, iter_ndjson, now_iso, read_json, sha256_text, write_json
from .prompts import (
    PromptSetting,
    RenderedInput,
    Side,
    flatten,
    render_instruction,
    render_segmented,
)

DEFAULT_API_KEY_ENV = "QGBENCH_API_KEY"


class GenerationError(QGBenchError):
    pass


class EndpointUnreachable(GenerationError):
    pass


class RateLimited(GenerationError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class MalformedResponse(GenerationError):
    pass


class UnknownRun(GenerationError):
    pass


@dataclass(frozen=True)
class GenParams:
    """Request sampling parameters. Unset penalties are omitted from the
    request body rather than sent as zero."""

    max_tokens: int = 50
    temperature: float = 0.7
    presence_penalty: float | None = None
    frequency_penalty: float | None = None

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def as_dict(self) -> dict:
        out: dict = {"max_tokens": self.max_tokens, "temperature": self.temperature}
        if self.presence_penalty is not None:
            out["presence_penalty"] = self.presence_penalty
        if self.frequency_penalty is not None:
            out["frequency_penalty"] = self.frequency_penalty
        return out


class GenStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


@dataclass(frozen=True)
class GenerationResult:
    record_id: str
    setting: PromptSetting
    model_id: str
    input_digest: str
    output_question: str
    status: GenStatus
    latency_ms: float
    failure_reason: str | None = None
    from_cache: bool = False

    @property
    def is_ok(self) -> bool:
        return self.status is GenStatus.OK

    def as_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "setting": self.setting.value,
            "model_id": self.model_id,
            "input_digest": self.input_digest,
            "output_question": self.output_question,
            "status": self.status.value,
            "latency_ms": self.latency_ms,
            "failure_reason": self.failure_reason,
            "from_cache": self.from_cache,
        }


@dataclass(frozen=True)
class GenerationRun:
    run_id: str
    model_id: str
    setting: PromptSetting
    params: GenParams
    results: tuple[GenerationResult, ...]
    created_at: str


class GenerationAdapter(Protocol):
    model_id: str

    def complete(self, prompt: str, params: GenParams) -> str: ...


class MockEchoAdapter:
    """Offline adapter with a fixed deterministic rule: answer
    "What is <first 5 context tokens>?" for any input. The context is
    recovered from the rendered input's own framing."""

    model_id = "mock-echo"

    def complete(self, prompt: str, params: GenParams) -> str:
        context = self._extract_context(prompt)
        head = " ".join(context.split()[:5])
        return f"What is {head}?"

    @staticmethod
    def _extract_context(prompt: str) -> str:
        if prompt.startswith("[CLS] "):
            body = prompt[len("[CLS] ") :]
            return body.split(" [SEP]", 1)[0]
        body = prompt
        if body.startswith("Given the context "):
            body = body[len("Given the context ") :]
        tail = body.rfind(", generate a Question")
        if tail != -1:
            body = body[:tail]
        for cue in (" and the long prompt ", " and the short prompt "):
            cut = body.rfind(cue)
            if cut != -1:
                body = body[:cut]
        return body


class FlakyAdapter:
    """Test adapter: fails on selected record indices (by call order) or
    always, with a configurable error."""

    def __init__(self, inner: GenerationAdapter, fail_on: set[int] = frozenset(), error=None):
        self.inner = inner
        self.model_id = inner.model_id
        self.fail_on = fail_on
        self.error = error or EndpointUnreachable("injected failure")
        self.calls = 0

    def complete(self, prompt: str, params: GenParams) -> str:
        call = self.calls
        self.calls += 1
        if call in self.fail_on:
            raise self.error
        return self.inner.complete(prompt, params)


class ChatCompletionsAdapter:
    """HTTP client for a chat-completions-style endpoint; the plain
    completions body shape is a config switch. The bearer token is read
    from an environment variable, never from config files."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        style: str = "chat",
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 60.0,
    ):
        if style not in ("chat", "completions"):
            raise ValueError(f"unknown endpoint style {style!r}")
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.style = style
        self.api_key_env = api_key_env
        self.timeout = timeout

    def _request(self, prompt: str, params: GenParams) -> tuple[str, dict]:
        body = {"model": self.model_id, **params.as_dict()}
        if self.style == "chat":
            body["messages"] = [{"role": "user", "content": prompt}]
            return f"{self.base_url}/chat/completions", body
        body["prompt"] = prompt
        return f"{self.base_url}/completions", body

    def complete(self, prompt: str, params: GenParams) -> str:
        url, body = self._request(prompt, params)
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        req = urllib.request.Request(
            url, data=json.dumps(body).encode("utf-8"), headers=headers, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code == 429:
                retry_after = exc.headers.get("Retry-After")
                raise RateLimited(
                    "rate limited by endpoint",
                    float(retry_after) if retry_after else None,
                ) from None
            raise EndpointUnreachable(f"HTTP {exc.code} from {url}") from None
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            raise EndpointUnreachable(f"cannot reach {url}: {exc}") from None
        except json.JSONDecodeError:
            raise MalformedResponse("response body is not JSON") from None
        try:
            choice = payload["choices"][0]
            text = choice["message"]["content"] if self.style == "chat" else choice["text"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("response has no completion text") from None
        if not isinstance(text, str):
            raise MalformedResponse("completion text is not a string")
        return text


# --- Caching -------------------------------------------------------------------


def input_digest(rendered: RenderedInput | str) -> str:
    text = rendered if isinstance(rendered, str) else flatten(rendered)
    return sha256_text(text)


def cache_key(model_id: str, params: GenParams, digest: str) -> str:
    canon = json.dumps(
        {"model": model_id, "params": params.as_dict(), "input": digest},
        sort_keys=True,
    )
    return sha256_text(canon)


class ResultCache:
    """Content-addressed completion store: one JSON file per key, written
    atomically. Concurrent writers of the same key are harmless because the
    payload is identical by construction."""

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> str:
        return os.path.join(self.directory, f"{key}.json")

    def get(self, key: str) -> dict | None:
        try:
            return read_json(self._path(key))
        except FileNotFoundError:
            return None

    def put(self, key: str, payload: dict) -> None:
        with self._lock:
            write_json(self._path(key), payload)


@dataclass
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 1.0
    sleep: Callable[[float], None] = time.sleep

    def delay(self, attempt: int) -> float:
        return self.base_delay * (2**attempt)


def _clean_output(text: str) -> str:
    """Endpoints often add chatter; keep the first line and drop wrapping
    quotes, since the gold side is a single question."""
    text = text.strip()
    if text:
        text = text.splitlines()[0].strip()
    for open_q, close_q in (('"', '"'), ("'", "'"), ("“", "”"), ("‘", "’")):
        if len(text) >= 2 and text.startswith(open_q) and text.endswith(close_q):
            text = text[1:-1].strip()
    return text


def generate(
    adapter: GenerationAdapter,
    rendered: RenderedInput,
    params: GenParams,
    *,
    cache: ResultCache | None = None,
    retry: RetryPolicy | None = None,
    record_id: str = "",
    setting: PromptSetting = PromptSetting.WITHOUT_PROMPT,
) -> GenerationResult:
    """One completion with caching and retries. A cache hit returns the
    frozen output without touching the adapter; transport errors exhaust the
    retry budget and then yield a Failed result rather than raising."""
    retry = retry or RetryPolicy()
    prompt = flatten(rendered)
    digest = input_digest(prompt)
    key = cache_key(adapter.model_id, params, digest)

    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return GenerationResult(
                record_id=record_id,
                setting=setting,
                model_id=adapter.model_id,
                input_digest=digest,
                output_question=hit["output_question"],
                status=GenStatus.OK,
                latency_ms=0.0,
                from_cache=True,
            )

    last_error: Exception | None = None
    for attempt in range(retry.attempts):
        start = time.monotonic()
        try:
            raw = adapter.complete(prompt, params)
        except RateLimited as exc:
            last_error = exc
            wait = exc.retry_after if exc.retry_after is not None else retry.delay(attempt)
            if attempt < retry.attempts - 1:
                retry.sleep(wait)
            continue
        except GenerationError as exc:
            last_error = exc
            if attempt < retry.attempts - 1:
                retry.sleep(retry.delay(attempt))
            continue
        latency = (time.monotonic() - start) * 1000.0
        output = _clean_output(raw)
        if not output:
            last_error = MalformedResponse("empty completion")
            if attempt < retry.attempts - 1:
                retry.sleep(retry.delay(attempt))
            continue
        if cache is not None:
            cache.put(
                key,
                {
                    "model_id": adapter.model_id,
                    "params": params.as_dict(),
                    "input_digest": digest,
                    "output_question": output,
                    "created_at": now_iso(),
                },
            )
        return GenerationResult(
            record_id=record_id,
            setting=setting,
            model_id=adapter.model_id,
            input_digest=digest,
            output_question=output,
            status=GenStatus.OK,
            latency_ms=latency,
        )

    return GenerationResult(
        record_id=record_id,
        setting=setting,
        model_id=adapter.model_id,
        input_digest=digest,
        output_question="",
        status=GenStatus.FAILED,
        latency_ms=0.0,
        failure_reason=str(last_error) if last_error else "unknown failure",
    )


def run_batch(
    adapter: GenerationAdapter,
    records: Sequence[QuadRecord],
    setting: PromptSetting,
    params: GenParams,
    *,
    parallelism: int = 1,
    cache: ResultCache | None = None,
    retry: RetryPolicy | None = None,
    input_kind: str = "instruction",
    run_id: str | None = None,
) -> GenerationRun:
    """Generate one result per record, preserving input order regardless of
    completion order. Partial failures are recorded, never dropped."""
    if not records:
        raise EmptyCorpus("cannot run a batch over an empty record list")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if input_kind not in ("instruction", "segmented"):
        raise ValueError(f"unknown input kind {input_kind!r}")

    def render(record: QuadRecord) -> RenderedInput:
        if input_kind == "instruction":
            return render_instruction(record, setting)
        return render_segmented(record, setting, Side.SOURCE)

    def one(record: QuadRecord) -> GenerationResult:
        return generate(
            adapter,
            render(record),
            params,
            cache=cache,
            retry=retry,
            record_id=record.id,
            setting=setting,
        )

    if parallelism == 1:
        results = [one(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, records))

    return GenerationRun(
        run_id=run_id or f"{time.strftime('%Y%m%dT%H%M%S')}-{uuid.uuid4().hex[:8]}",
        model_id=adapter.model_id,
        setting=setting,
        params=params,
        results=tuple(results),
        created_at=now_iso(),
    )


# --- Persistence -----------------------------------------------------------------

RESULTS_FILE = "results.ndjson"
MANIFEST_FILE = "manifest.json"


def save_run(
    run: GenerationRun,
    runs_dir: str,
    *,
    corpus_digest: str | None = None,
    split_seed: int | None = None,
) -> str:
    """Persist a run as a results file plus manifest; returns the run dir."""
    run_dir = os.path.join(runs_dir, run.run_id)
    os.makedirs(run_dir, exist_ok=True)
    atomic_write_text(
        os.path.join(run_dir, RESULTS_FILE),
        dump_ndjson(r.as_dict() for r in run.results),
    )
    ok = sum(1 for r in run.results if r.is_ok)
    write_json(
        os.path.join(run_dir, MANIFEST_FILE),
        {
            "run_id": run.run_id,
            "model_id": run.model_id,
            "setting": run.setting.value,
            "params": run.params.as_dict(),
            "created_at": run.created_at,
            "corpus_digest": corpus_digest,
            "split_seed": split_seed,
            "n_results": len(run.results),
            "n_ok": ok,
            "n_failed": len(run.results) - ok,
            "results_file": RESULTS_FILE,
        },
    )
    return run_dir


def load_run(runs_dir: str, run_id: str) -> GenerationRun:
    run_dir = os.path.join(runs_dir, run_id)
    manifest_path = os.path.join(run_dir, MANIFEST_FILE)
    if not os.path.exists(manifest_path):
        raise UnknownRun(f"no run {run_id!r} under {runs_dir}")
    manifest = read_json(manifest_path)
    results = []
    for row in iter_ndjson(os.path.join(run_dir, manifest["results_file"])):
        results.append(
            GenerationResult(
                record_id=row["record_id"],
                setting=PromptSetting(row["setting"]),
                model_id=row["model_id"],
                input_digest=row["input_digest"],
                output_question=row["output_question"],
                status=GenStatus(row["status"]),
                latency_ms=row["latency_ms"],
                failure_reason=row.get("failure_reason"),
                from_cache=row.get("from_cache", False),
            )
        )
    params = manifest["params"]
    return GenerationRun(
        run_id=manifest["run_id"],
        model_id=manifest["model_id"],
        setting=PromptSetting(manifest["setting"]),
        params=GenParams(
            max_tokens=params["max_tokens"],
            temperature=params["temperature"],
            presence_penalty=params.get("presence_penalty"),
            frequency_penalty=params.get("frequency_penalty"),
        ),
        results=tuple(results),
        created_at=manifest["created_at"],
    )


def list_runs(runs_dir: str) -> list[dict]:
    """Manifests of every run under runs_dir, sorted by run id."""
    manifests = []
    if not os.path.isdir(runs_dir):
        return manifests
    for name in sorted(os.listdir(runs_dir)):
        path = os.path.join(runs_dir, name, MANIFEST_FILE)
        if os.path.isfile(path):
            manifests.append(read_json(path))
    return manifests
