import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from puresearch.acquisition import (
    ProviderConfig,
    ProviderKind,
    _candidates,
    acquire,
    extract_metadata,
    filename_of,
    make_provider,
    page_image_urls,
    parse_page,
    size_filter,
)
from puresearch.corpus import Approach, Query
from puresearch.errors import AcquisitionError, InvalidInput, MetadataNotFound
from puresearch.synth import encode_png, flat_color_image, noise_photo

from conftest import write_fixture

QUERY = Query.from_text("penguin", "penguin")


def fixture_config(path, **kwargs) -> ProviderConfig:
    return ProviderConfig(kind=ProviderKind.FIXTURE, base=str(path), **kwargs)


def big_blob(color=(10, 20, 30), side=130):
    return encode_png(flat_color_image(color, width=side, height=side))


class TestSizeFilter:
    def test_boundaries(self):
        assert size_filter(119, 500) is False
        assert size_filter(120, 120) is True
        assert size_filter(1000, 50) is False
        assert size_filter(119, 120) is False
        assert size_filter(120, 119) is False

    def test_monotone(self, rng):
        for _ in range(200):
            w, h = int(rng.integers(1, 300)), int(rng.integers(1, 300))
            if size_filter(w, h):
                assert size_filter(w + 1, h)
                assert size_filter(w, h + 1)


class TestMetadata:
    def test_alt_and_filename(self):
        html = '<html><body><img src="x/penguin.jpg" alt="emperor penguin"></body></html>'
        meta = extract_metadata(html, "x/penguin.jpg")
        assert meta.alt_text == "emperor penguin"
        assert meta.filename == "penguin.jpg"

    def test_filename_strips_query_string(self):
        assert filename_of("http://a.test/dir/pic.png?size=large&x=1") == "pic.png"

    def test_word_window(self):
        before = " ".join(f"b{i}" for i in range(15))
        after = " ".join(f"a{i}" for i in range(15))
        html = f"<p>{before}</p><img src='pic.png'><p>{after}</p>"
        meta = extract_metadata(html, "pic.png", window=10)
        expected = " ".join([f"b{i}" for i in range(5, 15)] + [f"a{i}" for i in range(10)])
        assert meta.surrounding_text == expected

    def test_missing_image_raises(self):
        with pytest.raises(MetadataNotFound):
            extract_metadata("<html><img src='other.png'></html>", "pic.png")

    def test_title_and_invisible_text(self):
        html = ("<html><head><title>Penguin page</title>"
                "<script>var x = 'not words';</script></head>"
                "<body><style>.a{}</style>word1 <img src='p.png'> word2</body></html>")
        meta = extract_metadata(html, "p.png")
        assert meta.page_title == "Penguin page"
        assert meta.surrounding_text == "word1 word2"

    def test_relative_src_matches_absolute_url(self):
        html = '<img src="images/penguin.jpg" alt="p">'
        meta = extract_metadata(html, "http://site.test/images/penguin.jpg")
        assert meta.alt_text == "p"

    def test_tag_soup_tolerated(self):
        html = "<p>one two <img src='x.png' <b>three</b> four"
        parsed = parse_page(html)
        assert len(parsed.images) >= 0  # parse must simply not raise

    def test_page_image_urls_resolution(self):
        html = '<img src="../images/a.png"><img src="data:image/png;base64,xx"><img src="b.png">'
        urls = page_image_urls(html, "pages/p1.html")
        assert urls == ["images/a.png", "pages/b.png"]


class TestFixtureProvider:
    def test_direct_search_basic(self, tmp_path):
        blobs = {f"images/i{k}.png": big_blob((k, 0, 0)) for k in range(3)}
        hits = [{"image_url": f"images/i{k}.png", "rank": k + 1, "snippet": f"snippet {k}"}
                for k in range(3)]
        fixture = write_fixture(tmp_path / "fx", hits, images=blobs)
        acquired = acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, fixture_config(fixture))
        assert [a.record.original_rank for a in acquired] == [1, 2, 3]
        assert all(a.record.approach == Approach.DIRECT_IMAGE_SEARCH for a in acquired)
        assert acquired[0].record.surrounding_text == "snippet 0"
        assert acquired[0].record.filename == "i0.png"

    def test_empty_fixture(self, tmp_path):
        fixture = write_fixture(tmp_path / "fx", [])
        assert acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, fixture_config(fixture)) == []

    def test_missing_hits_file(self, tmp_path):
        with pytest.raises(AcquisitionError):
            acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, fixture_config(tmp_path / "nope"))

    def test_non_contiguous_ranks(self, tmp_path):
        hits = [{"image_url": "images/a.png", "rank": 1},
                {"image_url": "images/b.png", "rank": 3}]
        fixture = write_fixture(tmp_path / "fx", hits)
        with pytest.raises(AcquisitionError):
            acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, fixture_config(fixture))

    def test_seed_approach_counts(self, tmp_path):
        page = ("<html><title>Colony</title><body>wild penguin colony "
                + "".join(f'<img src="../images/extra{k}.png" alt="penguin {k}">' for k in range(3))
                + "</body></html>")
        images = {"images/seed.png": big_blob((9, 9, 9))}
        images.update({f"images/extra{k}.png": big_blob((k + 1, 2, 3)) for k in range(3)})
        hits = [{"image_url": "images/seed.png", "page_url": "pages/p.html", "rank": 1}]
        fixture = write_fixture(tmp_path / "fx", hits, pages={"pages/p.html": page}, images=images)

        provider = make_provider(fixture_config(fixture))
        found = list(_candidates(provider, provider.search(QUERY),
                                 Approach.IMAGE_SEARCH_SEED, {}))
        assert len(found) == 1 + 3  # seed + page images, before dedup

        acquired = acquire(QUERY, Approach.IMAGE_SEARCH_SEED, fixture_config(fixture))
        assert len(acquired) == 4
        assert acquired[1].record.alt_text == "penguin 0"
        assert acquired[1].record.page_title == "Colony"

    def test_web_search_uses_pages(self, tmp_path):
        page1 = '<html><body>one <img src="../images/a.png" alt="first"> two</body></html>'
        page2 = '<html><body>three <img src="../images/b.png" alt="second"></body></html>'
        hits = [{"image_url": "", "page_url": "pages/1.html", "rank": 1},
                {"image_url": "", "page_url": "pages/2.html", "rank": 2}]
        fixture = write_fixture(
            tmp_path / "fx", hits,
            pages={"pages/1.html": page1, "pages/2.html": page2},
            images={"images/a.png": big_blob((1, 1, 1)), "images/b.png": big_blob((2, 2, 2))})
        acquired = acquire(QUERY, Approach.WEB_SEARCH, fixture_config(fixture))
        assert [a.record.alt_text for a in acquired] == ["first", "second"]
        assert acquired[0].record.surrounding_text == "one two"

    def test_size_filter_applied(self, tmp_path):
        images = {
            "images/small.png": encode_png(flat_color_image((1, 1, 1), 119, 300)),
            "images/big.png": big_blob((2, 2, 2)),
        }
        hits = [{"image_url": "images/small.png", "rank": 1},
                {"image_url": "images/big.png", "rank": 2}]
        fixture = write_fixture(tmp_path / "fx", hits, images=images)
        acquired = acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, fixture_config(fixture))
        assert [a.record.filename for a in acquired] == ["big.png"]
        assert all(size_filter(a.record.width, a.record.height) for a in acquired)

    def test_duplicate_bytes_first_rank_wins(self, tmp_path):
        same = big_blob((5, 5, 5))
        images = {"images/a.png": same, "images/b.png": same, "images/c.png": big_blob((6, 6, 6))}
        hits = [{"image_url": f"images/{n}.png", "rank": i + 1}
                for i, n in enumerate(["a", "b", "c"])]
        fixture = write_fixture(tmp_path / "fx", hits, images=images)
        acquired = acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, fixture_config(fixture))
        assert [a.record.filename for a in acquired] == ["a.png", "c.png"]
        assert [a.record.original_rank for a in acquired] == [1, 2]

    def test_fetch_failures_skipped(self, tmp_path):
        hits = [{"image_url": "images/gone.png", "rank": 1},
                {"image_url": "images/ok.png", "rank": 2}]
        fixture = write_fixture(tmp_path / "fx", hits, images={"images/ok.png": big_blob()})
        acquired = acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, fixture_config(fixture))
        assert len(acquired) == 1

    def test_max_results_cap(self, tmp_path):
        n = 40
        images = {f"images/i{k}.png": big_blob(((k * 7) % 256, (k * 13) % 256, 9), side=120)
                  for k in range(n)}
        hits = [{"image_url": f"images/i{k}.png", "rank": k + 1} for k in range(n)]
        fixture = write_fixture(tmp_path / "fx", hits, images=images)
        acquired = acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH,
                           fixture_config(fixture, max_results=25))
        assert len(acquired) == 25
        assert [a.record.original_rank for a in acquired] == list(range(1, 26))

    def test_default_cap_1000_over_1200_hits(self, tmp_path):
        images = {
            f"images/i{k}.png": big_blob((k % 256, (k // 256) * 37 % 256, 77), side=120)
            for k in range(1200)
        }
        hits = [{"image_url": f"images/i{k}.png", "rank": k + 1} for k in range(1200)]
        fixture = write_fixture(tmp_path / "fx", hits, images=images)
        acquired = acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, fixture_config(fixture))
        assert len(acquired) == 1000
        assert acquired[-1].record.original_rank == 1000

    def test_deterministic_across_runs(self, tmp_path, rng):
        images = {f"images/i{k}.png": encode_png(noise_photo(rng, 130, 125)) for k in range(5)}
        hits = [{"image_url": f"images/i{k}.png", "rank": k + 1} for k in range(5)]
        fixture = write_fixture(tmp_path / "fx", hits, images=images)
        config = fixture_config(fixture)
        first = acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, config)
        second = acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, config)
        assert [a.record for a in first] == [a.record for a in second]
        assert [a.blob for a in first] == [a.blob for a in second]

    def test_local_ingest_rejected(self, tmp_path):
        fixture = write_fixture(tmp_path / "fx", [])
        with pytest.raises(InvalidInput):
            acquire(QUERY, Approach.LOCAL_INGEST, fixture_config(fixture))

    def test_provider_config_validation(self):
        with pytest.raises(InvalidInput):
            ProviderConfig(kind=ProviderKind.FIXTURE, base="x", max_results=0)
        with pytest.raises(InvalidInput):
            ProviderConfig(kind=ProviderKind.FIXTURE, base="x", rate_limit=0)


class _SiteHandler(BaseHTTPRequestHandler):
    routes: dict = {}

    def log_message(self, *args):
        pass

    def do_GET(self):
        entry = self.routes.get(self.path)
        if entry is None:
            self.send_response(404)
            self.end_headers()
            return
        content_type, body = entry
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@pytest.fixture
def tiny_site():
    blob_a = big_blob((3, 1, 4))
    blob_b = big_blob((1, 5, 9))
    small = encode_png(flat_color_image((2, 2, 2), 50, 50))
    listing = (b"<html><head><title>Results</title></head><body>"
               b"penguin pictures <img src='/img/a.png' alt='penguin a'>"
               b"more <img src='/img/b.png' alt='penguin b'>"
               b"small <img src='/img/small.png' alt='tiny'>"
               b"broken <img src='/img/missing.png'></body></html>")
    _SiteHandler.routes = {
        "/search?q=penguin": ("text/html", listing),
        "/img/a.png": ("image/png", blob_a),
        "/img/b.png": ("image/png", blob_b),
        "/img/small.png": ("image/png", small),
    }
    server = ThreadingHTTPServer(("127.0.0.1", 0), _SiteHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


class TestGenericHtmlProvider:
    def test_scrape_and_filter(self, tiny_site):
        config = ProviderConfig(
            kind=ProviderKind.GENERIC_HTML,
            base=tiny_site + "/search?q={query}",
            rate_limit=1000.0, timeout=5.0)
        acquired = acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, config)
        assert [a.record.alt_text for a in acquired] == ["penguin a", "penguin b"]
        assert acquired[0].record.page_title == "Results"
        assert "penguin" in acquired[0].record.surrounding_text

    def test_unreachable_search(self):
        config = ProviderConfig(
            kind=ProviderKind.GENERIC_HTML,
            base="http://127.0.0.1:1/search?q={query}",
            rate_limit=1000.0, timeout=0.3)
        with pytest.raises(AcquisitionError):
            acquire(QUERY, Approach.DIRECT_IMAGE_SEARCH, config)
