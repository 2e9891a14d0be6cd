"""Binary textual/metadata features and the weighted textual score.

A bit is True iff every normalized query term occurs in the normalized
field text; the phrase bit additionally requires the terms contiguously
and in order. One tokenizer (corpus.tokenize) is shared everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import ImageRecord, Query, tokenize
from .errors import InvalidInput

BIT_NAMES = (
    "in_filename",
    "in_image_url",
    "in_alt",
    "in_surrounding",
    "in_title",
    "phrase_in_surrounding",
)


@dataclass(frozen=True)
class TextBits:
    in_filename: bool
    in_image_url: bool
    in_alt: bool
    in_surrounding: bool
    in_title: bool
    phrase_in_surrounding: bool

    def as_array(self) -> np.ndarray:
        return np.array([float(getattr(self, name)) for name in BIT_NAMES])

    def to_dict(self) -> dict:
        return {name: bool(getattr(self, name)) for name in BIT_NAMES}


def _contains_all(tokens: Sequence[str], terms: Sequence[str]) -> bool:
    token_set = set(tokens)
    return all(term in token_set for term in terms)


def _contains_phrase(tokens: Sequence[str], terms: Sequence[str]) -> bool:
    n = len(terms)
    if n == 0 or n > len(tokens):
        return False
    terms = list(terms)
    return any(list(tokens[i:i + n]) == terms for i in range(len(tokens) - n + 1))


def text_bits(record: ImageRecord, query: Query) -> TextBits:
    if not query.terms:
        raise InvalidInput("query has no terms")
    terms = query.terms
    surrounding = tokenize(record.surrounding_text)
    return TextBits(
        in_filename=_contains_all(tokenize(record.filename), terms),
        in_image_url=_contains_all(tokenize(record.image_url), terms),
        in_alt=_contains_all(tokenize(record.alt_text), terms),
        in_surrounding=_contains_all(surrounding, terms),
        in_title=_contains_all(tokenize(record.page_title), terms),
        phrase_in_surrounding=_contains_phrase(surrounding, terms),
    )


def textual_score(bits: TextBits, weights=None) -> float:
    """Dot product of the six bits with a weight vector (default all ones)."""
    w = np.ones(len(BIT_NAMES)) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (len(BIT_NAMES),):
        raise InvalidInput(f"expected {len(BIT_NAMES)} weights, got shape {w.shape}")
    return float(bits.as_array() @ w)
