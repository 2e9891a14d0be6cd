"""Candidate image acquisition through pluggable search providers.

Three download approaches over one SearchHit stream:

    web_search          fetch each hit's page and take every image on it
    image_search_seed   take the hit image, then every image on its origin page
    direct_image_search take only the hit images

A Fixture provider reads a directory of pre-saved listings, pages, and
images (hits.jsonl / pages/ / images/); a GenericHtml provider scrapes a
configured URL template over HTTP. Candidates below the minimum size are
discarded and duplicate bytes are merged, first discovery winning.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass
from enum import Enum
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterator
from urllib.parse import quote_plus, urljoin, urlsplit

import requests

from .corpus import Approach, ImageRecord, Query, blob_ref, content_id
from .errors import AcquisitionError, DecodeError, InvalidInput, MetadataNotFound
from .visual import decode_image

log = logging.getLogger(__name__)

MIN_IMAGE_SIDE = 120
DEFAULT_TEXT_WINDOW = 10
DEFAULT_USER_AGENT = "puresearch/0.1 (+image corpus builder)"


class ProviderKind(str, Enum):
    FIXTURE = "fixture"
    GENERIC_HTML = "generic_html"


@dataclass(frozen=True)
class SearchHit:
    image_url: str
    page_url: str | None
    snippet: str | None
    rank: int


@dataclass(frozen=True)
class ProviderConfig:
    kind: ProviderKind
    base: str  # fixture directory or URL template with {query}
    rate_limit: float = 1.0  # max requests per second (GenericHtml only)
    timeout: float = 10.0
    max_results: int = 1000
    user_agent: str = DEFAULT_USER_AGENT

    def __post_init__(self):
        if self.max_results < 1:
            raise InvalidInput("max_results must be >= 1")
        if self.rate_limit <= 0:
            raise InvalidInput("rate limit must be > 0")


def size_filter(width: int, height: int, min_size: int = MIN_IMAGE_SIDE) -> bool:
    """Keep iff both sides reach min_size; exactly min_size is kept."""
    return width >= min_size and height >= min_size


def filename_of(image_url: str) -> str:
    path = urlsplit(image_url).path
    return path.rsplit("/", 1)[-1]


# -- lenient HTML parsing -------------------------------------------------------


class _PageParser(HTMLParser):
    """Collects visible words, image tags with their text position, and the title."""

    _INVISIBLE = {"script", "style", "head", "title", "noscript"}

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.words: list[str] = []
        self.images: list[tuple[dict, int]] = []
        self.title_parts: list[str] = []
        self._suppress = 0
        self._in_title = False

    def handle_starttag(self, tag, attrs):
        if tag == "img":
            self.images.append((dict(attrs), len(self.words)))
        elif tag == "title":
            self._in_title = True
        elif tag in self._INVISIBLE:
            self._suppress += 1

    def handle_endtag(self, tag):
        if tag == "title":
            self._in_title = False
        elif tag in self._INVISIBLE and self._suppress > 0:
            self._suppress -= 1

    def handle_data(self, data):
        if self._in_title:
            self.title_parts.append(data)
        elif self._suppress == 0:
            self.words.extend(data.split())

    @property
    def title(self) -> str:
        return " ".join("".join(self.title_parts).split())


def parse_page(html: str) -> _PageParser:
    parser = _PageParser()
    parser.feed(html)
    parser.close()
    return parser


def _src_matches(src: str, image_url: str, base_url: str | None = None) -> bool:
    if not src or not image_url:
        return False
    if src == image_url:
        return True
    if base_url is not None and urljoin(base_url, src) == image_url:
        return True
    suffix = src if src.startswith("/") else "/" + src
    if image_url.endswith(suffix):
        return True
    return image_url == src.lstrip("/") or src.endswith("/" + image_url)


@dataclass(frozen=True)
class PageMetadata:
    alt_text: str
    surrounding_text: str
    page_title: str
    filename: str


def extract_metadata(html: str, image_url: str, window: int = DEFAULT_TEXT_WINDOW,
                     base_url: str | None = None) -> PageMetadata:
    """Metadata for one image referenced by a page.

    surrounding_text is the window of visible words before plus after the
    image tag; raises MetadataNotFound when no tag references image_url.
    base_url, when known, lets relative srcs match resolved URLs exactly.
    """
    parsed = parse_page(html)
    for attrs, position in parsed.images:
        if _src_matches(attrs.get("src", "") or "", image_url, base_url):
            before = parsed.words[max(0, position - window):position]
            after = parsed.words[position:position + window]
            return PageMetadata(
                alt_text=attrs.get("alt") or "",
                surrounding_text=" ".join(before + after),
                page_title=parsed.title,
                filename=filename_of(image_url),
            )
    raise MetadataNotFound(f"{image_url} not referenced in page")


def page_image_urls(html: str, page_url: str) -> list[str]:
    """src of every img tag, resolved against the page URL, document order."""
    urls = []
    for attrs, _ in parse_page(html).images:
        src = attrs.get("src") or ""
        if not src or src.startswith("data:"):
            continue
        urls.append(urljoin(page_url, src))
    return urls


# -- providers --------------------------------------------------------------------


def _url_key(url: str) -> str:
    return hashlib.sha256(url.encode("utf-8")).hexdigest()[:16]


class FixtureProvider:
    """Reads hits.jsonl, pages/, and images/ from a directory.

    URLs without a scheme are paths relative to the fixture root; http(s)
    URLs map to pages/<urlhash>.html and images/<urlhash>.
    """

    def __init__(self, config: ProviderConfig):
        self.base = Path(config.base)

    def search(self, query: Query) -> list[SearchHit]:
        hits_path = self.base / "hits.jsonl"
        if not hits_path.exists():
            raise AcquisitionError(f"fixture has no hits.jsonl: {self.base}")
        hits = []
        for line in hits_path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            hits.append(SearchHit(
                image_url=obj.get("image_url", ""),
                page_url=obj.get("page_url"),
                snippet=obj.get("snippet"),
                rank=int(obj["rank"]),
            ))
        _check_ranks(hits)
        return hits

    def _resolve(self, url: str, kind: str) -> Path:
        if urlsplit(url).scheme in ("http", "https"):
            name = _url_key(url) + (".html" if kind == "pages" else "")
            return self.base / kind / name
        return self.base / url

    def fetch_page(self, url: str) -> str | None:
        path = self._resolve(url, "pages")
        if not path.exists():
            log.warning("fixture page missing: %s", url)
            return None
        return path.read_text(encoding="utf-8", errors="replace")

    def fetch_image(self, url: str) -> bytes | None:
        path = self._resolve(url, "images")
        if not path.exists():
            log.warning("fixture image missing: %s", url)
            return None
        return path.read_bytes()


class GenericHtmlProvider:
    """Scrapes any URL template; every image on the result page is a hit."""

    def __init__(self, config: ProviderConfig):
        self.template = config.base
        self.timeout = config.timeout
        self.min_interval = 1.0 / config.rate_limit
        self.session = requests.Session()
        self.session.headers["User-Agent"] = config.user_agent
        self._last_request = 0.0

    def _get(self, url: str) -> requests.Response | None:
        wait = self.min_interval - (time.monotonic() - self._last_request)
        if wait > 0:
            time.sleep(wait)
        self._last_request = time.monotonic()
        try:
            response = self.session.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            log.warning("GET %s failed: %s", url, exc)
            return None
        if response.status_code != 200:
            log.warning("GET %s -> %s, skipping", url, response.status_code)
            return None
        return response

    def search(self, query: Query) -> list[SearchHit]:
        url = self.template.format(query=quote_plus(query.text))
        response = self._get(url)
        if response is None:
            raise AcquisitionError(f"search page unreachable: {url}")
        hits = []
        for rank, image_url in enumerate(page_image_urls(response.text, url), start=1):
            hits.append(SearchHit(image_url=image_url, page_url=url, snippet=None, rank=rank))
        return hits

    def fetch_page(self, url: str) -> str | None:
        response = self._get(url)
        return response.text if response is not None else None

    def fetch_image(self, url: str) -> bytes | None:
        response = self._get(url)
        return response.content if response is not None else None


def make_provider(config: ProviderConfig):
    if config.kind == ProviderKind.FIXTURE:
        return FixtureProvider(config)
    if config.kind == ProviderKind.GENERIC_HTML:
        return GenericHtmlProvider(config)
    raise InvalidInput(f"unknown provider kind {config.kind!r}")


def _check_ranks(hits: list[SearchHit]) -> None:
    ranks = sorted(hit.rank for hit in hits)
    if ranks != list(range(1, len(hits) + 1)):
        raise AcquisitionError("provider ranks are not contiguous from 1")


# -- acquisition ------------------------------------------------------------------


@dataclass(frozen=True)
class AcquiredImage:
    record: ImageRecord
    blob: bytes


def _candidates(provider, hits: list[SearchHit], approach: Approach,
                page_cache: dict) -> Iterator[tuple[str, str | None, str | None, str | None]]:
    """Yield (image_url, page_url, page_html, snippet) in discovery order."""

    def page(url: str | None) -> str | None:
        if not url:
            return None
        if url not in page_cache:
            page_cache[url] = provider.fetch_page(url)
        return page_cache[url]

    for hit in sorted(hits, key=lambda h: h.rank):
        if approach == Approach.WEB_SEARCH:
            if not hit.page_url:
                log.warning("web_search hit %d has no page_url, skipping", hit.rank)
                continue
            html = page(hit.page_url)
            if html is None:
                continue
            for url in page_image_urls(html, hit.page_url):
                yield url, hit.page_url, html, hit.snippet
        elif approach == Approach.IMAGE_SEARCH_SEED:
            html = page(hit.page_url)
            yield hit.image_url, hit.page_url, html, hit.snippet
            if html is not None and hit.page_url:
                for url in page_image_urls(html, hit.page_url):
                    if url != hit.image_url:
                        yield url, hit.page_url, html, hit.snippet
        elif approach == Approach.DIRECT_IMAGE_SEARCH:
            html = page(hit.page_url)
            yield hit.image_url, hit.page_url, html, hit.snippet
        else:
            raise InvalidInput(f"approach {approach!r} is not an acquisition approach")


def acquire(query: Query, approach: Approach, config: ProviderConfig,
            min_size: int = MIN_IMAGE_SIDE, window: int = DEFAULT_TEXT_WINDOW) -> list[AcquiredImage]:
    """Run one download approach; returns at most max_results deduplicated records."""
    if approach == Approach.LOCAL_INGEST:
        raise InvalidInput("local_ingest is not an acquisition approach")
    provider = make_provider(config)
    hits = provider.search(query)

    kept: list[AcquiredImage] = []
    seen_ids: set[str] = set()
    tried_urls: set[str] = set()
    page_cache: dict[str, str | None] = {}

    for image_url, page_url, html, snippet in _candidates(provider, hits, approach, page_cache):
        if len(kept) >= config.max_results:
            break
        if image_url in tried_urls:
            continue
        tried_urls.add(image_url)
        blob = provider.fetch_image(image_url)
        if blob is None:
            continue
        try:
            pixels = decode_image(blob)
        except DecodeError as exc:
            log.warning("skipping %s: %s", image_url, exc)
            continue
        height, width = pixels.shape[:2]
        if not size_filter(width, height, min_size):
            continue
        cid = content_id(blob)
        if cid in seen_ids:
            continue
        seen_ids.add(cid)

        alt_text, surrounding, title = "", snippet or "", ""
        if html is not None:
            try:
                meta = extract_metadata(html, image_url, window=window, base_url=page_url)
                alt_text, surrounding, title = meta.alt_text, meta.surrounding_text, meta.page_title
            except MetadataNotFound:
                pass
        record = ImageRecord(
            id=cid,
            query_id=query.id,
            image_url=image_url,
            page_url=page_url,
            filename=filename_of(image_url),
            alt_text=alt_text,
            surrounding_text=surrounding,
            page_title=title,
            original_rank=len(kept) + 1,
            width=width,
            height=height,
            approach=approach,
            content_ref=blob_ref(cid),
        )
        kept.append(AcquiredImage(record=record, blob=blob))
    return kept
