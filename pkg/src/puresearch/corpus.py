"""Content-addressed corpus store for queries, image records, and labels.

Layout under one root directory:

    manifest.jsonl      one JSON object per line; {"kind": "query", ...} or
                        {"kind": "record", ...}; unknown fields on record
                        lines are preserved across read/write
    labels.jsonl        append-only label log, one LabelEntry per line,
                        last write wins
    blobs/<h2>/<hash>   verbatim image bytes addressed by sha256
    models/, rankings/, reports/, eval/   derived artifacts

Single writer, many readers: callers serialize mutations; everything
returned from read methods is immutable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import NotFound, ValidationError

FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs, dropping empty tokens."""
    return _TOKEN_RE.findall(text.lower())


def normalize_terms(text: str) -> tuple[str, ...]:
    """Tokenize and deduplicate preserving first-occurrence order. Idempotent."""
    return tuple(dict.fromkeys(tokenize(text)))


class Label(str, Enum):
    RELEVANT = "relevant"
    IRRELEVANT = "irrelevant"
    DIFFICULT = "difficult"


class Approach(str, Enum):
    """How a record entered the corpus."""

    WEB_SEARCH = "web_search"
    IMAGE_SEARCH_SEED = "image_search_seed"
    DIRECT_IMAGE_SEARCH = "direct_image_search"
    LOCAL_INGEST = "local_ingest"


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    terms: tuple[str, ...]

    @classmethod
    def from_text(cls, query_id: str, text: str) -> "Query":
        terms = normalize_terms(text)
        if not terms:
            raise ValidationError(f"query {query_id!r} has no usable terms: {text!r}")
        return cls(id=query_id, text=text, terms=terms)

    def to_dict(self) -> dict:
        return {"kind": "query", "id": self.id, "text": self.text, "terms": list(self.terms)}


@dataclass(frozen=True)
class ImageRecord:
    """One candidate image for one query.

    id is the sha256 hex digest of the image bytes; content_ref is the
    store-relative blob path derived from it.
    """

    id: str
    query_id: str
    image_url: str
    page_url: str | None
    filename: str
    alt_text: str
    surrounding_text: str
    page_title: str
    original_rank: int
    width: int
    height: int
    approach: Approach
    content_ref: str
    extra: dict = field(default_factory=dict, compare=False)

    _FIELDS = (
        "id", "query_id", "image_url", "page_url", "filename", "alt_text",
        "surrounding_text", "page_title", "original_rank", "width", "height",
        "approach", "content_ref",
    )

    def to_dict(self) -> dict:
        out = dict(self.extra)
        for name in self._FIELDS:
            value = getattr(self, name)
            out[name] = value.value if isinstance(value, Approach) else value
        out["kind"] = "record"
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ImageRecord":
        extra = {k: v for k, v in obj.items() if k not in cls._FIELDS and k != "kind"}
        try:
            return cls(
                id=obj["id"],
                query_id=obj["query_id"],
                image_url=obj["image_url"],
                page_url=obj.get("page_url"),
                filename=obj["filename"],
                alt_text=obj.get("alt_text", ""),
                surrounding_text=obj.get("surrounding_text", ""),
                page_title=obj.get("page_title", ""),
                original_rank=int(obj["original_rank"]),
                width=int(obj["width"]),
                height=int(obj["height"]),
                approach=Approach(obj["approach"]),
                content_ref=obj["content_ref"],
                extra=extra,
            )
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad record line: {exc}") from exc


@dataclass(frozen=True)
class LabelEntry:
    image_id: str
    query_id: str
    label: Label
    annotator: str
    timestamp: int

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "query_id": self.query_id,
            "label": self.label.value,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LabelEntry":
        try:
            return cls(
                image_id=obj["image_id"],
                query_id=obj["query_id"],
                label=Label(obj["label"]),
                annotator=obj.get("annotator", ""),
                timestamp=int(obj["timestamp"]),
            )
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad label line: {exc}") from exc


def make_label(image_id: str, query_id: str, label: Label | str, annotator: str = "cli") -> LabelEntry:
    return LabelEntry(image_id, query_id, Label(label), annotator, int(time.time()))


def content_id(blob: bytes) -> str:
    """sha256 hex digest: 64 lowercase hex chars, stable across runs."""
    return hashlib.sha256(blob).hexdigest()


def blob_ref(cid: str) -> str:
    return f"blobs/{cid[:2]}/{cid}"


class CorpusStore:
    """Directory-backed store; the single source of truth for the pipeline."""

    MANIFEST = "manifest.jsonl"
    LABELS = "labels.jsonl"

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._queries: dict[str, Query] = {}
        self._records: dict[tuple[str, str], ImageRecord] = {}
        self._by_query: dict[str, list[ImageRecord]] = {}
        self._rank_index: dict[tuple[str, int], str] = {}

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def create(cls, root: Path | str) -> "CorpusStore":
        store = cls(root)
        store.root.mkdir(parents=True, exist_ok=True)
        manifest = store.root / cls.MANIFEST
        if not manifest.exists():
            store._append(manifest, {"kind": "manifest", "format_version": FORMAT_VERSION})
        store._load()
        return store

    @classmethod
    def open(cls, root: Path | str) -> "CorpusStore":
        store = cls(root)
        if not (store.root / cls.MANIFEST).exists():
            raise NotFound(f"no store at {store.root}")
        store._load()
        return store

    def _load(self) -> None:
        for obj in self._read_jsonl(self.root / self.MANIFEST):
            kind = obj.get("kind")
            if kind == "manifest":
                if obj.get("format_version") != FORMAT_VERSION:
                    raise ValidationError(f"unsupported manifest version {obj.get('format_version')}")
            elif kind == "query":
                query = Query(id=obj["id"], text=obj["text"], terms=tuple(obj["terms"]))
                self._index_query(query)
            elif kind == "record":
                self._index_record(ImageRecord.from_dict(obj))
            else:
                raise ValidationError(f"unknown manifest line kind: {kind!r}")

    # -- queries -----------------------------------------------------------

    def add_query(self, query: Query) -> None:
        existing = self._queries.get(query.id)
        if existing is not None:
            if existing != query:
                raise ValidationError(f"query {query.id!r} already exists with different content")
            return
        self._index_query(query)
        self._append(self.root / self.MANIFEST, query.to_dict())

    def get_query(self, query_id: str) -> Query:
        try:
            return self._queries[query_id]
        except KeyError:
            raise NotFound(f"unknown query {query_id!r}") from None

    def queries(self) -> list[Query]:
        return list(self._queries.values())

    # -- records and blobs ---------------------------------------------------

    def put_record(self, record: ImageRecord, blob: bytes) -> str:
        """Store blob + record. Idempotent for an identical (blob, record) pair."""
        from .visual import decode_image  # local import: visual pulls in numpy/PIL

        if record.query_id not in self._queries:
            raise NotFound(f"unknown query {record.query_id!r}")
        pixels = decode_image(blob)
        height, width = pixels.shape[:2]
        if record.width != width or record.height != height:
            raise ValidationError(
                f"record says {record.width}x{record.height}, blob decodes to {width}x{height}"
            )
        cid = content_id(blob)
        if record.id and record.id != cid:
            raise ValidationError(f"record id {record.id} does not match blob hash {cid}")
        record = dataclasses.replace(record, id=cid, content_ref=blob_ref(cid))

        key = (record.query_id, cid)
        existing = self._records.get(key)
        if existing is not None:
            if existing != record:
                raise ValidationError(f"image {cid} already stored for {record.query_id!r} with different fields")
            return cid
        rank_owner = self._rank_index.get((record.query_id, record.original_rank))
        if rank_owner is not None and rank_owner != cid:
            raise ValidationError(
                f"rank {record.original_rank} already taken in query {record.query_id!r}"
            )

        blob_path = self.root / record.content_ref
        if not blob_path.exists():
            blob_path.parent.mkdir(parents=True, exist_ok=True)
            tmp = blob_path.with_name(blob_path.name + ".tmp")
            tmp.write_bytes(blob)
            os.replace(tmp, blob_path)
        self._index_record(record)
        self._append(self.root / self.MANIFEST, record.to_dict())
        return cid

    def list_records(self, query_id: str) -> list[ImageRecord]:
        if query_id not in self._queries:
            raise NotFound(f"unknown query {query_id!r}")
        return sorted(self._by_query.get(query_id, []), key=lambda r: r.original_rank)

    def get_record(self, image_id: str, query_id: str | None = None) -> ImageRecord:
        if query_id is not None:
            try:
                return self._records[(query_id, image_id)]
            except KeyError:
                raise NotFound(f"image {image_id} not in query {query_id!r}") from None
        for (_, iid), record in self._records.items():
            if iid == image_id:
                return record
        raise NotFound(f"unknown image {image_id}")

    def has_record(self, image_id: str, query_id: str) -> bool:
        return (query_id, image_id) in self._records

    def read_blob(self, image_id: str) -> bytes:
        path = self.root / blob_ref(image_id)
        if not path.exists():
            raise NotFound(f"no blob for {image_id}")
        return path.read_bytes()

    def record_count(self, query_id: str) -> int:
        return len(self._by_query.get(query_id, []))

    def manifest_summary(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "queries": [q.to_dict() for q in self.queries()],
            "record_count": {q.id: self.record_count(q.id) for q in self.queries()},
        }

    # -- labels --------------------------------------------------------------

    def add_label(self, entry: LabelEntry) -> None:
        if (entry.query_id, entry.image_id) not in self._records:
            raise NotFound(f"image {entry.image_id} not in query {entry.query_id!r}")
        self._append(self.root / self.LABELS, entry.to_dict())

    def label_log(self, query_id: str | None = None) -> list[LabelEntry]:
        path = self.root / self.LABELS
        if not path.exists():
            return []
        entries = [LabelEntry.from_dict(obj) for obj in self._read_jsonl(path)]
        if query_id is not None:
            entries = [e for e in entries if e.query_id == query_id]
        return entries

    def effective_labels(self, query_id: str) -> dict[str, Label]:
        """Replay the log; the last entry per image wins. Difficult included."""
        effective: dict[str, Label] = {}
        for entry in self.label_log(query_id):
            effective[entry.image_id] = entry.label
        return effective

    # -- derived-artifact helpers ---------------------------------------------

    def path_for(self, *parts: str) -> Path:
        path = self.root.joinpath(*parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def save_json(self, rel: str, obj) -> Path:
        path = self.path_for(rel)
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def load_json(self, rel: str):
        path = self.root / rel
        if not path.exists():
            raise NotFound(f"missing {rel}")
        return json.loads(path.read_text(encoding="utf-8"))

    def save_jsonl(self, rel: str, rows: Iterable[dict]) -> Path:
        path = self.path_for(rel)
        with path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        return path

    def load_jsonl(self, rel: str) -> list[dict]:
        path = self.root / rel
        if not path.exists():
            raise NotFound(f"missing {rel}")
        return list(self._read_jsonl(path))

    # -- internals -------------------------------------------------------------

    def _index_query(self, query: Query) -> None:
        self._queries[query.id] = query
        self._by_query.setdefault(query.id, [])

    def _index_record(self, record: ImageRecord) -> None:
        if record.query_id not in self._queries:
            raise ValidationError(f"record {record.id} references unknown query {record.query_id!r}")
        self._records[(record.query_id, record.id)] = record
        self._by_query.setdefault(record.query_id, []).append(record)
        self._rank_index[(record.query_id, record.original_rank)] = record.id

    @staticmethod
    def _append(path: Path, obj: dict) -> None:
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")

    @staticmethod
    def _read_jsonl(path: Path) -> Iterator[dict]:
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"{path.name}:{lineno}: bad JSON: {exc}") from exc
