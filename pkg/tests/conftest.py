"""Shared fixtures: tiny stores, images, and fixture directories."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from puresearch.corpus import Approach, CorpusStore, ImageRecord, Query, blob_ref, content_id
from puresearch.synth import encode_png, flat_color_image, noise_photo


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_record(query_id: str, blob: bytes, rank: int, **overrides) -> ImageRecord:
    """Record whose id/content_ref/dimensions match the blob."""
    from puresearch.visual import decode_image

    pixels = decode_image(blob)
    cid = content_id(blob)
    fields = dict(
        id=cid,
        query_id=query_id,
        image_url=f"http://example.test/images/img_{rank}.png",
        page_url=f"http://example.test/pages/{rank}.html",
        filename=f"img_{rank}.png",
        alt_text="",
        surrounding_text="",
        page_title="",
        original_rank=rank,
        width=pixels.shape[1],
        height=pixels.shape[0],
        approach=Approach.DIRECT_IMAGE_SEARCH,
        content_ref=blob_ref(cid),
    )
    fields.update(overrides)
    return ImageRecord(**fields)


def color_blob(color, width=8, height=8) -> bytes:
    return encode_png(flat_color_image(tuple(color), width=width, height=height))


@pytest.fixture
def store(tmp_path) -> CorpusStore:
    return CorpusStore.create(tmp_path / "store")


@pytest.fixture
def penguin_store(tmp_path, rng) -> CorpusStore:
    """Store with one 'penguin' query and 6 small records, ranks 1..6."""
    store = CorpusStore.create(tmp_path / "pstore")
    query = Query.from_text("penguin", "penguin")
    store.add_query(query)
    for rank in range(1, 7):
        blob = encode_png(noise_photo(rng, 16, 12))
        record = make_record("penguin", blob, rank)
        store.put_record(record, blob)
    return store


def write_fixture(root: Path, hits: list[dict], pages: dict[str, str] | None = None,
                  images: dict[str, bytes] | None = None) -> Path:
    """Lay out hits.jsonl / pages/ / images/ under root."""
    root.mkdir(parents=True, exist_ok=True)
    with (root / "hits.jsonl").open("w", encoding="utf-8") as fh:
        for hit in hits:
            fh.write(json.dumps(hit) + "\n")
    for rel, html in (pages or {}).items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(html, encoding="utf-8")
    for rel, blob in (images or {}).items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob)
    return root
