"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/environment error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Sequence

import click

from . import acquisition, pipeline, report, synth
from .acquisition import ProviderConfig, ProviderKind
from .config import PipelineConfig, load_config
from .corpus import Approach, CorpusStore, ImageRecord, Query, blob_ref, content_id
from .errors import DecodeError, PureSearchError, ValidationError
from .evaluation import precision_curve
from .reranker import RerankModel
from .visual import decode_image


def _open_store(config: PipelineConfig) -> CorpusStore:
    return CorpusStore.open(config.store)


def _query_ids(store: CorpusStore, query_id: str | None) -> list[str]:
    if query_id is not None:
        store.get_query(query_id)
        return [query_id]
    ids = [q.id for q in store.queries()]
    if not ids:
        raise ValidationError("store has no queries")
    return ids


def _slug(text: str) -> str:
    return "-".join(text.lower().split()) or "query"


@click.group()
@click.option("--store", type=str, default=None, help="Store directory (overrides config and env).")
@click.option("--config", "config_path", type=str, default=None, help="JSON config file.")
@click.pass_context
def cli(ctx, store, config_path):
    """Image search reranking: ingest, feature, train, rerank, evaluate, serve."""
    ctx.obj = load_config(config_path, store=store)


@cli.command()
@click.argument("query_text")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--query-id", default=None, help="Query id (defaults to a slug of the text).")
@click.pass_obj
def ingest(config: PipelineConfig, query_text, directory, query_id):
    """Ingest a local directory of images as one query's candidates."""
    store = CorpusStore.create(config.store)
    query = Query.from_text(query_id or _slug(query_text), query_text)
    store.add_query(query)
    stored = 0
    skipped = 0
    for path in sorted(Path(directory).iterdir()):
        if not path.is_file():
            continue
        blob = path.read_bytes()
        try:
            pixels = decode_image(blob)
        except DecodeError:
            skipped += 1
            continue
        height, width = pixels.shape[:2]
        if not acquisition.size_filter(width, height, config.min_size):
            skipped += 1
            continue
        cid = content_id(blob)
        if store.has_record(cid, query.id):
            continue
        record = ImageRecord(
            id=cid, query_id=query.id, image_url=path.resolve().as_uri(), page_url=None,
            filename=path.name, alt_text="", surrounding_text="", page_title="",
            original_rank=store.record_count(query.id) + 1,
            width=width, height=height, approach=Approach.LOCAL_INGEST,
            content_ref=blob_ref(cid),
        )
        store.put_record(record, blob)
        stored += 1
    if store.record_count(query.id) == 0:
        raise ValidationError(f"no images ingested from {directory}")
    click.echo(f"ingested {stored} images ({skipped} skipped) into query {query.id!r}")


@cli.command()
@click.argument("query_text")
@click.option("--provider", "provider_kind", type=click.Choice([k.value for k in ProviderKind]),
              default=None, help="Defaults to the config file's provider.kind.")
@click.option("--base", default=None, help="Fixture directory or URL template with {query}.")
@click.option("--approach", type=click.Choice(["web_search", "image_search_seed", "direct_image_search"]),
              default="direct_image_search", show_default=True)
@click.option("--max-results", type=int, default=None)
@click.option("--rate-limit", type=float, default=None)
@click.option("--timeout", type=float, default=None)
@click.option("--query-id", default=None)
@click.pass_obj
def crawl(config: PipelineConfig, query_text, provider_kind, base, approach,
          max_results, rate_limit, timeout, query_id):
    """Acquire candidate images for a query through a provider."""
    defaults = config.provider or {}
    provider_kind = provider_kind or defaults.get("kind")
    base = base or defaults.get("base")
    if not provider_kind or not base:
        raise click.UsageError("provider kind and base are required "
                               "(flags or the config file's provider object)")
    store = CorpusStore.create(config.store)
    query = Query.from_text(query_id or _slug(query_text), query_text)
    store.add_query(query)
    provider = ProviderConfig(
        kind=ProviderKind(provider_kind), base=base,
        rate_limit=rate_limit if rate_limit is not None else defaults.get("rate_limit", 1.0),
        timeout=timeout if timeout is not None else defaults.get("timeout", 10.0),
        max_results=max_results if max_results is not None else defaults.get("max_results", 1000),
    )
    acquired = acquisition.acquire(
        query, Approach(approach), provider,
        min_size=config.min_size, window=config.window)
    for item in acquired:
        store.put_record(item.record, item.blob)
    click.echo(f"acquired {len(acquired)} images for query {query.id!r}")


@cli.command()
@click.option("--query", "query_id", default=None, help="Restrict to one query.")
@click.pass_obj
def features(config: PipelineConfig, query_id):
    """Compute visual features and textual bits; write features.jsonl."""
    store = _open_store(config)
    for qid in _query_ids(store, query_id):
        records = store.list_records(qid)
        computed = pipeline.compute_visual(store, records)
        rows = pipeline.write_feature_dump(store, qid, records, computed)
        click.echo(f"{qid}: {len(rows)} feature rows")


@cli.command("filter")
@click.option("--query", "query_id", default=None)
@click.pass_obj
def filter_cmd(config: PipelineConfig, query_id):
    """Classify drawings/symbolic images; write verdicts.jsonl."""
    store = _open_store(config)
    for qid in _query_ids(store, query_id):
        context = pipeline.build_query_context(store, qid, config.params())
        rows = pipeline.write_verdicts(store, qid, context)
        symbolic = sum(1 for r in rows if r["symbolic"])
        click.echo(f"{qid}: {symbolic}/{len(rows)} symbolic")


@cli.command()
@click.option("--drop-unstable", is_flag=True,
              help="Exclude images whose pseudo-relevance class flips across reruns.")
@click.pass_obj
def train(config: PipelineConfig, drop_unstable):
    """Learn rerank weights from effective labels (difficult excluded)."""
    store = _open_store(config)
    params = config.params()
    exclude = None
    if drop_unstable:
        exclude = pipeline.unstable_ids(store, params)
        if exclude:
            click.echo(f"dropping {len(exclude)} unstable images from training")
    model = pipeline.train_model(store, params, exclude=exclude)
    pipeline.save_model(store, model)
    click.echo(f"model {model.fingerprint()} saved "
               f"(lambda={model.ridge_lambda}, {len(model.weights)} weights)")


@cli.command()
@click.option("--query", "query_id", default=None)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_obj
def rerank(config: PipelineConfig, query_id, model_path):
    """Rerank queries with the trained (or zero-weight default) model."""
    store = _open_store(config)
    params = config.params()
    model = RerankModel.load(model_path) if model_path else pipeline.load_or_default_model(store, params)
    for qid in _query_ids(store, query_id):
        context = pipeline.build_query_context(store, qid, params)
        ranked = pipeline.rerank_query(store, qid, model, params, context=context)
        pipeline.save_ranking(store, ranked)
        pipeline.save_cluster_dump(store, qid, context)
        click.echo(f"{qid}: reranked {len(ranked.items)} images -> {pipeline.ranking_file(qid)}")


@cli.command("eval")
@click.option("--query", "query_id", required=True)
@click.pass_obj
def eval_cmd(config: PipelineConfig, query_id):
    """Evaluate the current ranking against relevant labels."""
    store = _open_store(config)
    params = config.params()
    try:
        ranked = pipeline.load_ranking(store, query_id)
    except PureSearchError:
        ranked = pipeline.rerank_query(store, query_id, pipeline.load_or_default_model(store, params), params)
    eval_report = pipeline.evaluate_query(store, query_id, ranked)
    relevant = pipeline.relevant_ids(store, query_id)
    curve = precision_curve(ranked.ids(), relevant)

    store.save_json(f"eval/{query_id}.json", eval_report.to_dict())
    report.write_csv(store.path_for(f"eval/{query_id}_curve.csv"),
                     ["k", "precision"], curve)
    report.save_precision_curve_figure(
        store.path_for(f"eval/{query_id}_curve.png"),
        {"reranked": curve}, f"precision@k: {query_id}")
    click.echo(eval_report.to_text_table())


@cli.command()
@click.option("--folds", type=int, default=None)
@click.option("--repeats", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def cv(config: PipelineConfig, folds, repeats, seed):
    """Repeated stratified cross-validation over pooled labels."""
    updates = {k: v for k, v in {"folds": folds, "repeats": repeats, "seed": seed}.items()
               if v is not None}
    if updates:
        import dataclasses

        config = dataclasses.replace(config, **updates).validate()
    store = _open_store(config)
    cv_report, assignments, fold_rows, refs = pipeline.cross_validate_store(store, config.params())

    store.save_json("eval/cv_report.json", cv_report.to_dict())
    report.write_csv(
        store.path_for("eval/cv_folds.csv"),
        ["repeat", "fold", "query_id", "image_id"],
        [(a.repeat, a.fold, refs[a.row_index][0], refs[a.row_index][1]) for a in assignments])
    report.write_csv(
        store.path_for("eval/cv_metrics.csv"),
        ["repeat", "fold", "metric", "value"],
        [(r["repeat"], r["fold"], r["metric"], r["value"]) for r in fold_rows])
    report.save_metric_summary_figure(
        store.path_for("eval/cv_summary.png"), cv_report,
        f"{config.folds}-fold cv, {config.repeats} repeats")
    click.echo(cv_report.to_text_table())


@cli.command("report")
@click.option("--query", "query_id", required=True)
@click.pass_obj
def report_cmd(config: PipelineConfig, query_id):
    """Write the side-by-side HTML gallery plus rank-shift figure and CSV."""
    store = _open_store(config)
    params = config.params()
    context = pipeline.build_query_context(store, query_id, params)
    baseline = pipeline.rerank_query(store, query_id, RerankModel.zero(), params, context=context)
    try:
        reranked = pipeline.load_ranking(store, query_id)
    except PureSearchError:
        reranked = pipeline.rerank_query(
            store, query_id, pipeline.load_or_default_model(store, params), params, context=context)

    labels = store.effective_labels(query_id)
    records_by_id = {r.id: r for r in context.records}
    html_text = report.html_report(
        context.query, baseline, reranked, labels, context.verdicts, records_by_id,
        blob_href=lambda iid: "../" + records_by_id[iid].content_ref)
    html_path = store.path_for(f"reports/{query_id}.html")
    html_path.write_text(html_text, encoding="utf-8")
    report.save_rank_shift_figure(
        store.path_for(f"reports/{query_id}_rank_shift.png"), reranked,
        f"rank shift: {query_id}")
    report.write_csv(
        store.path_for(f"reports/{query_id}_ranks.csv"),
        ["image_id", "original_rank", "new_rank", "score", "label"],
        [(it.image_id, it.original_rank, it.new_rank, f"{it.score:.12g}",
          labels.get(it.image_id).value if it.image_id in labels else "")
         for it in reranked.items])
    click.echo(f"wrote {html_path}")


@cli.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--ui", "ui_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory of built UI assets to serve at /.")
@click.pass_obj
def serve(config: PipelineConfig, host, port, ui_dir):
    """Serve the labeling/reranking HTTP API (and optional UI assets)."""
    from .service import serve as run_server

    store = _open_store(config)
    run_server(store, config.params(),
               host=host or config.host, port=port or config.port, ui_dir=ui_dir)


@cli.command("synth-corpus")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--images", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--label-count", type=int, default=60, show_default=True,
              help="How many top-ranked images get ground-truth labels.")
@click.pass_obj
def synth_corpus(config: PipelineConfig, out_dir, images, seed, label_count):
    """Generate a synthetic planted-relevance store (for demos and tests)."""
    store, truth = synth.build_planted_store(out_dir, seed=seed, n_images=images)
    query_id = store.queries()[0].id
    labeled = synth.label_top_ranks(store, query_id, truth, label_count)
    store.save_jsonl("truth.jsonl", [
        {"image_id": iid, "relevant": flag} for iid, flag in truth.items()])
    click.echo(f"planted store at {out_dir}: {images} images, {labeled} labeled, "
               f"query {query_id!r}")


@cli.command("synth-fixture")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--images", type=int, default=30, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
def synth_fixture(out_dir, images, seed):
    """Generate a small fixture directory usable with `crawl --provider fixture`."""
    import numpy as np

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "pages").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    hits = []
    img_tags = []
    for i in range(1, images + 1):
        name = f"img_{i:03d}.png"
        blob = synth.encode_png(synth.noise_photo(rng, 140, 140))
        (out / "images" / name).write_bytes(blob)
        hits.append({"image_url": f"images/{name}", "page_url": "pages/listing.html",
                     "snippet": f"photo {i}", "rank": i})
        img_tags.append(f'<p>photo number {i} shown here</p><img src="../images/{name}" alt="photo {i}">')
    page = "<html><head><title>Listing</title></head><body>" + "".join(img_tags) + "</body></html>"
    (out / "pages" / "listing.html").write_text(page, encoding="utf-8")
    with (out / "hits.jsonl").open("w", encoding="utf-8") as fh:
        for hit in hits:
            fh.write(json.dumps(hit) + "\n")
    click.echo(f"fixture with {images} images at {out}")


def cli_run(argv: Sequence[str] | None = None) -> int:
    """Run the CLI; returns the exit code instead of raising SystemExit."""
    try:
        cli.main(args=list(argv) if argv is not None else None,
                 standalone_mode=False, prog_name="puresearch")
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except PureSearchError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


def main() -> None:
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
