"""Synthetic images, fixtures, and planted-relevance corpora.

Used by the test suite and the synth-* CLI commands: noise "photos",
flat-color drawings, striped document images with a known skew, and a
store whose relevance structure is planted (relevant images share a
visual distribution and carry query-bearing metadata with a fixed
probability).
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .corpus import (
    Approach,
    CorpusStore,
    ImageRecord,
    LabelEntry,
    Label,
    Query,
    blob_ref,
    content_id,
)
from .visual import rotate_nn

BEARING_SURROUNDING = (
    "emperor penguin colony standing together on antarctic pack ice "
    "during the long winter night near the open water edge"
)
PLAIN_SURROUNDING = (
    "mountain landscape with a river valley old stone bridge autumn "
    "forest trail and distant snow covered peaks under moving clouds"
)


def encode_png(pixels: np.ndarray) -> bytes:
    arr = np.asarray(pixels, dtype=np.uint8)
    img = Image.fromarray(arr, mode="RGB" if arr.ndim == 3 else "L")
    buf = io.BytesIO()
    img.save(buf, format="PNG", compress_level=1)  # noise barely compresses anyway
    return buf.getvalue()


def flat_color_image(color: tuple[int, int, int], width: int = 120, height: int = 120) -> np.ndarray:
    return np.tile(np.array(color, dtype=np.uint8), (height, width, 1))


def noise_photo(rng: np.random.Generator, width: int, height: int,
                mean: float = 120.0, sigma: float = 30.0) -> np.ndarray:
    arr = rng.normal(mean, sigma, size=(height, width, 3))
    return np.clip(arr, 0, 255).astype(np.uint8)


def flat_drawing(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """2 to 5 flat-color regions: low entropy, few distinct colors."""
    palette = [20, 70, 120, 170, 220]
    background = tuple(int(palette[rng.integers(len(palette))]) for _ in range(3))
    img = Image.new("RGB", (width, height), background)
    draw = ImageDraw.Draw(img)
    for _ in range(int(rng.integers(1, 4))):
        color = tuple(int(palette[rng.integers(len(palette))]) for _ in range(3))
        x0, y0 = int(rng.integers(0, width - 20)), int(rng.integers(0, height - 20))
        x1 = int(rng.integers(x0 + 10, width))
        y1 = int(rng.integers(y0 + 10, height))
        if rng.random() < 0.5:
            draw.rectangle([x0, y0, x1, y1], fill=color)
        else:
            draw.ellipse([x0, y0, x1, y1], fill=color)
    return np.asarray(img, dtype=np.uint8)


def stripe_image(width: int = 220, height: int = 220, period: int = 16, thickness: int = 5) -> np.ndarray:
    """Horizontal dark stripes on white; the zero-skew document fixture."""
    rows = np.arange(height) % period < thickness
    img = np.full((height, width), 255, dtype=np.uint8)
    img[rows, :] = 40
    return img


def rotated_stripes(angle_deg: float, **kwargs) -> np.ndarray:
    """Stripe image rotated by a known ground-truth angle (white fill)."""
    return rotate_nn(stripe_image(**kwargs), angle_deg, fill=255)


def symbolic_benchmark(rng: np.random.Generator, per_class: int = 100,
                       width: int = 150, height: int = 150) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """(drawings, photos) corpus for the symbolic-filter accuracy check."""
    drawings = [flat_drawing(rng, width, height) for _ in range(per_class)]
    photos = [
        noise_photo(rng, width, height, mean=float(rng.uniform(90, 160)), sigma=float(rng.uniform(25, 45)))
        for _ in range(per_class)
    ]
    return drawings, photos


# -- planted-relevance corpus -----------------------------------------------------


def build_planted_store(root: Path | str, seed: int = 42, n_images: int = 200,
                        relevant_rate: float = 0.4, p_meta_relevant: float = 0.8,
                        p_meta_irrelevant: float = 0.1, query_text: str = "penguin",
                        top_block: int = 50) -> tuple[CorpusStore, dict[str, bool]]:
    """Store with one query and a planted ground truth.

    The first top_block ranks contain exactly round(top_block *
    relevant_rate) relevant images, so the baseline precision@top_block
    is pinned by construction. Returns (store, id -> is_relevant).
    """
    rng = np.random.default_rng(seed)
    n_relevant = round(n_images * relevant_rate)
    top_block = min(top_block, n_images)
    top_relevant = min(round(top_block * relevant_rate), n_relevant)

    top = [True] * top_relevant + [False] * (top_block - top_relevant)
    rest_relevant = n_relevant - top_relevant
    rest = [True] * rest_relevant + [False] * (n_images - top_block - rest_relevant)
    rng.shuffle(top)
    rng.shuffle(rest)
    flags = top + rest
    assert len(flags) == n_images

    store = CorpusStore.create(root)
    query_id = "-".join(query_text.split()) or "query"
    query = Query.from_text(query_id, query_text)
    store.add_query(query)

    truth: dict[str, bool] = {}
    for rank, is_relevant in enumerate(flags, start=1):
        if is_relevant:
            w = int(rng.integers(146, 161))
            h = int(rng.integers(146, 161))
            pixels = noise_photo(rng, w, h, mean=120 + rng.normal(0, 4), sigma=30 + rng.normal(0, 2))
        elif rng.random() < 0.3:
            w = int(rng.integers(128, 181))
            h = int(rng.integers(128, 181))
            pixels = flat_drawing(rng, w, h)
        else:
            w = int(rng.integers(128, 181))
            h = int(rng.integers(128, 181))
            pixels = noise_photo(rng, w, h, mean=70 + rng.normal(0, 10), sigma=9 + abs(rng.normal(0, 2)))
        blob = encode_png(pixels)
        cid = content_id(blob)
        while cid in truth:  # hash collision across generated images: nudge one pixel
            pixels = pixels.copy()
            pixels[0, 0, 0] ^= 1
            blob = encode_png(pixels)
            cid = content_id(blob)

        bearing = rng.random() < (p_meta_relevant if is_relevant else p_meta_irrelevant)
        if bearing:
            filename = f"penguin_{rank:04d}.png"
            alt = "emperor penguin on ice"
            surrounding = BEARING_SURROUNDING
            title = "Penguin photo gallery"
        else:
            filename = f"image_{rank:04d}.png"
            alt = "stock photo"
            surrounding = PLAIN_SURROUNDING
            title = "Photo archive"

        record = ImageRecord(
            id=cid,
            query_id=query.id,
            image_url=f"http://fixture.invalid/images/{filename}",
            page_url=f"http://fixture.invalid/pages/{rank:04d}.html",
            filename=filename,
            alt_text=alt,
            surrounding_text=surrounding,
            page_title=title,
            original_rank=rank,
            width=pixels.shape[1],
            height=pixels.shape[0],
            approach=Approach.DIRECT_IMAGE_SEARCH,
            content_ref=blob_ref(cid),
        )
        store.put_record(record, blob)
        truth[cid] = is_relevant
    return store, truth


def label_top_ranks(store: CorpusStore, query_id: str, truth: dict[str, bool],
                    count: int, annotator: str = "synth") -> int:
    """Label the first `count` records in text-rank order from the ground truth."""
    labeled = 0
    for record in store.list_records(query_id)[:count]:
        label = Label.RELEVANT if truth[record.id] else Label.IRRELEVANT
        store.add_label(LabelEntry(record.id, query_id, label, annotator, timestamp=0))
        labeled += 1
    return labeled
