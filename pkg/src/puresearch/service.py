"""HTTP service backing the labeling UI.

Read endpoints serve the store directly; the two mutating endpoints
(label append, rerank trigger) funnel through one lock, honoring the
store's single-writer contract. Static UI assets are served from an
optional directory.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from . import pipeline
from .corpus import CorpusStore, Label, LabelEntry
from .errors import NotFound, PureSearchError, UndefinedMetric, ValidationError
from .pipeline import PipelineParams
from .visual import sniff_content_type

log = logging.getLogger(__name__)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


class ServiceApp:
    """Endpoint logic, independent of the HTTP plumbing."""

    def __init__(self, store: CorpusStore, params: PipelineParams | None = None,
                 ui_dir: Path | str | None = None):
        self.store = store
        self.params = params or PipelineParams()
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.write_lock = threading.Lock()
        self._contexts: dict[str, pipeline.QueryContext] = {}

    # -- helpers ---------------------------------------------------------

    def _context(self, query_id: str) -> pipeline.QueryContext:
        if query_id not in self._contexts:
            self._contexts[query_id] = pipeline.build_query_context(
                self.store, query_id, self.params)
        return self._contexts[query_id]

    def _ranking_rows(self, query_id: str) -> dict[str, dict]:
        ranked = pipeline.load_ranking(self.store, query_id)
        return {item.image_id: {"new_rank": item.new_rank, "score": item.score}
                for item in ranked.items}

    # -- endpoints ---------------------------------------------------------

    def list_queries(self) -> list[dict]:
        out = []
        for query in self.store.queries():
            labels = self.store.effective_labels(query.id)
            out.append({
                "id": query.id,
                "text": query.text,
                "record_count": self.store.record_count(query.id),
                "labeled_count": len(labels),
            })
        return out

    def list_images(self, query_id: str, order: str, offset: int, limit: int) -> list[dict]:
        try:
            records = self.store.list_records(query_id)
        except NotFound as exc:
            raise ApiError(404, "unknown_query", str(exc)) from exc
        if order not in ("text", "reranked"):
            raise ApiError(400, "bad_order", f"order must be text or reranked, got {order!r}")

        ranking: dict[str, dict] = {}
        if order == "reranked":
            try:
                ranking = self._ranking_rows(query_id)
            except NotFound as exc:
                raise ApiError(409, "not_reranked", "no reranked list for this query yet") from exc
            records = sorted(records, key=lambda r: ranking[r.id]["new_rank"])
        labels = self.store.effective_labels(query_id)
        context = self._context(query_id)

        out = []
        for record in records[offset:offset + limit]:
            row = {
                "image_id": record.id,
                "original_rank": record.original_rank,
                "symbolic": bool(context.verdicts[record.id].symbolic),
                "width": record.width,
                "height": record.height,
            }
            if record.id in ranking:
                row["new_rank"] = ranking[record.id]["new_rank"]
                row["score"] = ranking[record.id]["score"]
            if record.id in labels:
                row["label"] = labels[record.id].value
            out.append(row)
        return out

    def image_content(self, image_id: str) -> tuple[bytes, str]:
        try:
            self.store.get_record(image_id)
            blob = self.store.read_blob(image_id)
        except NotFound as exc:
            raise ApiError(404, "unknown_image", str(exc)) from exc
        return blob, sniff_content_type(blob)

    def post_label(self, body: dict) -> None:
        for key in ("image_id", "query_id", "label"):
            if not isinstance(body.get(key), str) or not body[key]:
                raise ApiError(400, "bad_request", f"missing or invalid field {key!r}")
        try:
            label = Label(body["label"])
        except ValueError as exc:
            raise ApiError(400, "bad_label", f"label must be one of {[l.value for l in Label]}") from exc
        entry = LabelEntry(
            image_id=body["image_id"],
            query_id=body["query_id"],
            label=label,
            annotator=body.get("annotator", "ui"),
            timestamp=int(time.time()),
        )
        with self.write_lock:
            try:
                self.store.add_label(entry)
            except NotFound as exc:
                raise ApiError(404, "unknown_image", str(exc)) from exc

    def trigger_rerank(self, query_id: str) -> dict:
        try:
            self.store.get_query(query_id)
        except NotFound as exc:
            raise ApiError(404, "unknown_query", str(exc)) from exc
        started = time.monotonic()
        with self.write_lock:
            try:
                model = pipeline.train_model(self.store, self.params, contexts=self._contexts)
                pipeline.save_model(self.store, model)
            except PureSearchError:
                model = pipeline.load_or_default_model(self.store, self.params)
            ranked = pipeline.rerank_query(
                self.store, query_id, model, self.params, context=self._context(query_id))
            pipeline.save_ranking(self.store, ranked)
        return {
            "model_version": model.fingerprint(),
            "duration_ms": int((time.monotonic() - started) * 1000),
        }

    def eval_query(self, query_id: str) -> dict:
        try:
            self.store.get_query(query_id)
        except NotFound as exc:
            raise ApiError(404, "unknown_query", str(exc)) from exc
        try:
            ranked = pipeline.load_ranking(self.store, query_id)
        except NotFound:
            context = self._context(query_id)
            ranked = pipeline.rerank_query(
                self.store, query_id, pipeline.load_or_default_model(self.store, self.params),
                self.params, context=context)
        try:
            return pipeline.evaluate_query(self.store, query_id, ranked).to_dict()
        except UndefinedMetric as exc:
            raise ApiError(409, "unlabeled", str(exc)) from exc


_ROUTES = [
    ("GET", re.compile(r"^/api/queries$"), "get_queries"),
    ("GET", re.compile(r"^/api/queries/(?P<qid>[^/]+)/images$"), "get_images"),
    ("GET", re.compile(r"^/api/queries/(?P<qid>[^/]+)/eval$"), "get_eval"),
    ("GET", re.compile(r"^/api/images/(?P<iid>[^/]+)/content$"), "get_content"),
    ("POST", re.compile(r"^/api/labels$"), "post_labels"),
    ("POST", re.compile(r"^/api/queries/(?P<qid>[^/]+)/rerank$"), "post_rerank"),
]


class ApiHandler(BaseHTTPRequestHandler):
    server_version = "puresearch"

    @property
    def app(self) -> ServiceApp:
        return self.server.app  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, obj) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, err: ApiError) -> None:
        self._send_json(err.status, {"error": str(err), "code": err.code})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            obj = json.loads(raw.decode("utf-8")) if raw else {}
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ApiError(400, "bad_json", f"request body is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ApiError(400, "bad_json", "request body must be a JSON object")
        return obj

    def _dispatch(self, method: str) -> None:
        split = urlsplit(self.path)
        try:
            for verb, pattern, name in _ROUTES:
                match = pattern.match(split.path)
                if verb == method and match:
                    getattr(self, "_" + name)(match, parse_qs(split.query))
                    return
            if method == "GET" and self._serve_static(split.path):
                return
            raise ApiError(404, "not_found", f"no route for {method} {split.path}")
        except ApiError as err:
            self._send_error(err)
        except (ValidationError, PureSearchError) as exc:
            self._send_error(ApiError(500, "internal", str(exc)))
        except BrokenPipeError:
            pass

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    # -- route bodies -----------------------------------------------------

    def _get_queries(self, match, qs):
        self._send_json(200, self.app.list_queries())

    def _get_images(self, match, qs):
        order = (qs.get("order") or ["text"])[0]
        try:
            offset = int((qs.get("offset") or ["0"])[0])
            limit = int((qs.get("limit") or ["100"])[0])
        except ValueError as exc:
            raise ApiError(400, "bad_request", "offset and limit must be integers") from exc
        if offset < 0 or limit < 1:
            raise ApiError(400, "bad_request", "offset must be >= 0 and limit >= 1")
        self._send_json(200, self.app.list_images(match["qid"], order, offset, limit))

    def _get_eval(self, match, qs):
        self._send_json(200, self.app.eval_query(match["qid"]))

    def _get_content(self, match, qs):
        blob, content_type = self.app.image_content(match["iid"])
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def _post_labels(self, match, qs):
        self.app.post_label(self._read_body())
        self.send_response(204)
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _post_rerank(self, match, qs):
        self._send_json(200, self.app.trigger_rerank(match["qid"]))

    # -- static UI ----------------------------------------------------------

    def _serve_static(self, path: str) -> bool:
        if self.app.ui_dir is None:
            return False
        rel = path.lstrip("/") or "index.html"
        target = (self.app.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.app.ui_dir.resolve())) or not target.is_file():
            return False
        body = target.read_bytes()
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)
        return True


def make_server(store: CorpusStore, params: PipelineParams | None = None,
                host: str = "127.0.0.1", port: int = 8765,
                ui_dir: Path | str | None = None) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), ApiHandler)
    server.app = ServiceApp(store, params, ui_dir)  # type: ignore[attr-defined]
    return server


def serve(store: CorpusStore, params: PipelineParams | None = None,
          host: str = "127.0.0.1", port: int = 8765,
          ui_dir: Path | str | None = None) -> None:
    server = make_server(store, params, host, port, ui_dir)
    log.info("serving on http://%s:%d", host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
