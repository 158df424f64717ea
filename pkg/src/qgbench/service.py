"""Annotation service: batch delivery, rating ingestion, agreement and
score retrieval over HTTP+JSON.

Rating writes are serialized through a single appender and fsynced before
the 201 goes out, so an acknowledged rating survives a crash. Batch
assignment is deterministic per rater until that rater submits something
new. The handler is a thin JSON shim over AnnotationService, which is
directly testable without sockets.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import agreement as agreement_mod
from . import generation, metrics
from .corpus import load_corpus
from .errors import QGBenchError
from .ioutil import read_json, sha256_text


class ServiceError(QGBenchError):
    pass


class UnknownTarget(ServiceError):
    pass


@dataclass
class ServiceConfig:
    corpus_path: str
    runs_dir: str
    ratings_path: str
    host: str = "127.0.0.1"
    port: int = 8080
    page_size: int = 20
    show_gold: bool = True
    shuffle_seed: int = 0
    static_dir: str | None = None
    # operator bookkeeping shared with the generate step; the service
    # itself never calls out to an endpoint
    endpoint_base_url: str | None = None
    models: list[str] | None = None

    @classmethod
    def from_file(cls, path: str) -> "ServiceConfig":
        raw = read_json(path)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ServiceError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**raw)


@dataclass(frozen=True)
class Target:
    target_id: str
    record_id: str
    run_id: str
    model_id: str
    setting: str
    context: str
    generated_question: str
    gold_question: str


def target_id(run_id: str, record_id: str) -> str:
    return f"{run_id}:{record_id}"


class RatingStore:
    """Append-only ndjson store. Replays existing records on open; appends
    are serialized and fsynced so an acknowledged write is durable."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._ratings: list[agreement_mod.RatingRecord] = []
        if os.path.exists(path):
            self._ratings = agreement_mod.load_ratings(path)
        else:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._file = open(path, "a", encoding="utf-8")

    def append(self, rating: agreement_mod.RatingRecord) -> None:
        line = json.dumps(rating.as_dict(), ensure_ascii=False) + "\n"
        with self._lock:
            self._file.write(line)
            self._file.flush()
            os.fsync(self._file.fileno())
            self._ratings.append(rating)

    def snapshot(self) -> list[agreement_mod.RatingRecord]:
        with self._lock:
            return list(self._ratings)

    def close(self) -> None:
        with self._lock:
            self._file.close()


class AnnotationService:
    """Application state behind the HTTP surface: targets built from the
    generation runs on disk, gold questions from the corpus, ratings from
    the append-only store."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        records = load_corpus(config.corpus_path)
        self._gold = {r.id: r.question for r in records}
        self._context = {r.id: r.context for r in records}
        self._targets: dict[str, Target] = {}
        self._runs: dict[str, generation.GenerationRun] = {}
        for manifest in generation.list_runs(config.runs_dir):
            run = generation.load_run(config.runs_dir, manifest["run_id"])
            self._runs[run.run_id] = run
            for result in run.results:
                if not result.is_ok:
                    continue
                tid = target_id(run.run_id, result.record_id)
                self._targets[tid] = Target(
                    target_id=tid,
                    record_id=result.record_id,
                    run_id=run.run_id,
                    model_id=run.model_id,
                    setting=run.setting.value,
                    context=self._context.get(result.record_id, ""),
                    generated_question=result.output_question,
                    gold_question=self._gold.get(result.record_id, ""),
                )
        self.store = RatingStore(config.ratings_path)
        self._score_cache: dict[str, metrics.ScoreReport] = {}
        self._score_lock = threading.Lock()

    # -- batches

    def _order_key(self, rater_id: str, tid: str) -> str:
        return sha256_text(f"{self.config.shuffle_seed}:{rater_id}:{tid}")

    def next_batch(self, rater_id: str) -> dict:
        rated = {
            r.target_id
            for r in self.store.snapshot()
            if r.rater_id == rater_id
        }
        remaining = [t for t in self._targets if t not in rated]
        remaining.sort(key=lambda t: self._order_key(rater_id, t))
        page = remaining[: self.config.page_size]
        items = []
        for tid in page:
            target = self._targets[tid]
            item = {
                "target_id": target.target_id,
                "context": target.context,
                "generated_question": target.generated_question,
                "setting": target.setting,
                "model_id": target.model_id,
            }
            if self.config.show_gold:
                item["gold_question"] = target.gold_question
            items.append(item)
        batch_id = sha256_text(rater_id + "|" + ",".join(page))[:12]
        return {
            "batch_id": batch_id,
            "rater_id": rater_id,
            "items": items,
            "remaining": len(remaining),
        }

    # -- ratings

    def submit_rating(self, payload: dict) -> dict:
        rating = agreement_mod.validate_rating(payload)
        if rating.target_id not in self._targets:
            raise UnknownTarget(f"unknown target {rating.target_id!r}")
        self.store.append(rating)
        return rating.as_dict()

    def agreement(self) -> dict:
        report = agreement_mod.kappa_per_criterion(self.store.snapshot())
        return report.as_dict()

    # -- runs & scores

    def run_manifests(self) -> list[dict]:
        return generation.list_runs(self.config.runs_dir)

    def scores(self, run_id: str) -> dict:
        if run_id not in self._runs:
            raise generation.UnknownRun(f"unknown run {run_id!r}")
        with self._score_lock:
            if run_id not in self._score_cache:
                self._score_cache[run_id] = metrics.evaluate_run(
                    self._runs[run_id], self._gold
                )
            return self._score_cache[run_id].as_dict()

    def target_meta(self) -> dict[str, tuple[str, str]]:
        return {t.target_id: (t.model_id, t.setting) for t in self._targets.values()}

    def close(self) -> None:
        self.store.close()


class _Handler(BaseHTTPRequestHandler):
    service: AnnotationService  # set by make_server

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _json(self, code: int, obj) -> None:
        body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_GET(self):
        url = urlparse(self.path)
        path = url.path
        if path == "/healthz":
            self._json(200, {"status": "ok"})
        elif path == "/api/batches/next":
            query = parse_qs(url.query)
            rater = (query.get("rater") or [""])[0]
            if not rater:
                self._json(400, {"error": "BadRequest", "detail": "rater query parameter required"})
                return
            self._json(200, self.service.next_batch(rater))
        elif path == "/api/agreement":
            try:
                self._json(200, self.service.agreement())
            except agreement_mod.UnevenCoverage as exc:
                self._json(409, {
                    "error": "UnevenCoverage",
                    "detail": str(exc),
                    "missing": [list(pair) for pair in exc.missing],
                })
            except agreement_mod.AgreementError as exc:
                self._json(409, {"error": type(exc).__name__, "detail": str(exc)})
        elif path == "/api/runs":
            self._json(200, self.service.run_manifests())
        elif path.startswith("/api/runs/") and path.endswith("/scores"):
            run_id = path[len("/api/runs/") : -len("/scores")]
            try:
                self._json(200, self.service.scores(run_id))
            except generation.UnknownRun as exc:
                self._json(404, {"error": "UnknownRun", "detail": str(exc)})
            except metrics.MetricsError as exc:
                self._json(409, {"error": type(exc).__name__, "detail": str(exc)})
        elif path.startswith("/api/"):
            self._json(404, {"error": "NotFound", "detail": path})
        else:
            self._static(path)

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/api/ratings":
            self._json(404, {"error": "NotFound", "detail": url.path})
            return
        length = int(self.headers.get("Content-Length") or 0)
        try:
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            self._json(400, {"error": "BadRequest", "detail": "body is not valid JSON"})
            return
        try:
            stored = self.service.submit_rating(payload)
        except agreement_mod.InvalidRating as exc:
            self._json(400, {"error": "InvalidRating", "detail": str(exc)})
            return
        except UnknownTarget as exc:
            self._json(404, {"error": "UnknownTarget", "detail": str(exc)})
            return
        self._json(201, stored)

    def _static(self, path: str) -> None:
        root = self.service.config.static_dir
        if not root:
            self._json(404, {"error": "NotFound", "detail": path})
            return
        rel = path.lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(root, rel))
        if not full.startswith(os.path.realpath(root) + os.sep) and full != os.path.realpath(root):
            self._json(404, {"error": "NotFound", "detail": path})
            return
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            self._json(404, {"error": "NotFound", "detail": path})
            return
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as f:
            body = f.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(config: ServiceConfig) -> tuple[ThreadingHTTPServer, AnnotationService]:
    """Build the server without starting it; port 0 picks an ephemeral port
    (handy for tests). Caller owns serve_forever/shutdown."""
    service = AnnotationService(config)
    handler = type("Handler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((config.host, config.port), handler)
    return server, service


def serve(config: ServiceConfig) -> None:
    server, service = make_server(config)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        service.close()
