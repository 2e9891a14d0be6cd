"""Pipeline orchestration: store -> features -> prototypes -> scores -> ranking.

Visual vectors are standardized within each query's candidate pool, so a
trained model (which only weighs the bounded meta features) transfers to
unseen queries unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kmeans, reranker, textual, visual
from .corpus import CorpusStore, ImageRecord, Label, Query
from .errors import InsufficientData, NoPrototypes, NotFound, UndefinedMetric
from .evaluation import EvalReport, evaluate_ranking
from .reranker import RankedList, RerankModel
from .visual import NaturalnessVerdict, SymbolicThresholds, VisualFeatures

FEATURES_FILE = "features.jsonl"
VERDICTS_FILE = "verdicts.jsonl"
MODEL_FILE = "models/rerank_model.json"


@dataclass(frozen=True)
class PipelineParams:
    min_size: int = 120
    window: int = 10
    prototypes: int = reranker.DEFAULT_PROTOTYPES
    pseudo_positives: int = reranker.DEFAULT_PSEUDO_POSITIVES
    k: int | None = None
    ridge_lambda: float = 1.0
    folds: int = 10
    repeats: int = 5
    seed: int = 42
    thresholds: SymbolicThresholds = field(default_factory=SymbolicThresholds)


@dataclass
class QueryContext:
    """Everything the reranker needs for one query, computed once."""

    query: Query
    records: list[ImageRecord]
    features: dict[str, VisualFeatures]
    verdicts: dict[str, NaturalnessVerdict]
    vectors: dict[str, np.ndarray]  # standardized visual vectors
    prototypes: list
    sigma: float
    cluster_rel: dict[str, float]
    meta: dict[str, np.ndarray]
    cluster_model: kmeans.ClusterModel | None = None


def compute_visual(store: CorpusStore, records: list[ImageRecord],
                   cache: dict[str, VisualFeatures] | None = None) -> dict[str, VisualFeatures]:
    out: dict[str, VisualFeatures] = {}
    for record in records:
        if cache is not None and record.id in cache:
            out[record.id] = cache[record.id]
        else:
            out[record.id] = visual.compute_features(visual.decode_image(store.read_blob(record.id)))
    return out


def load_feature_cache(store: CorpusStore, query_id: str) -> dict[str, VisualFeatures]:
    try:
        rows = store.load_jsonl(FEATURES_FILE)
    except NotFound:
        return {}
    return {
        row["image_id"]: VisualFeatures.from_dict(row)
        for row in rows
        if row.get("query_id") == query_id
    }


def write_feature_dump(store: CorpusStore, query_id: str, records: list[ImageRecord],
                       features: dict[str, VisualFeatures]) -> list[dict]:
    """features.jsonl rows: all visual fields plus the six textual bits."""
    query = store.get_query(query_id)
    rows = []
    for record in records:
        row = {"image_id": record.id, "query_id": query_id}
        row.update(features[record.id].to_dict())
        row.update(textual.text_bits(record, query).to_dict())
        rows.append(row)
    existing = []
    try:
        existing = [r for r in store.load_jsonl(FEATURES_FILE) if r.get("query_id") != query_id]
    except NotFound:
        pass
    store.save_jsonl(FEATURES_FILE, existing + rows)
    return rows


def build_query_context(store: CorpusStore, query_id: str, params: PipelineParams,
                        use_cache: bool = True) -> QueryContext:
    query = store.get_query(query_id)
    records = store.list_records(query_id)
    cache = load_feature_cache(store, query_id) if use_cache else None
    features = compute_visual(store, records, cache)
    verdicts = {iid: visual.classify_symbolic(f, params.thresholds) for iid, f in features.items()}

    ids = [r.id for r in records]
    raw = np.array([visual.prototype_vector(features[iid]) for iid in ids], dtype=np.float64)
    if len(ids) >= 2:
        standardized, _stats = kmeans.standardize(raw)
    else:
        standardized = raw
    vectors = {iid: standardized[i] for i, iid in enumerate(ids)}

    prototypes: list = []
    sigma = 1.0
    cluster_rel: dict[str, float] = {iid: 0.0 for iid in ids}
    cluster_model = None
    if records:
        symbolic_ids = {iid for iid, v in verdicts.items() if v.symbolic}
        try:
            prototypes = reranker.build_prototypes(records, vectors, symbolic_ids, params.prototypes)
            survivors = [r for r in records if r.id not in symbolic_ids]
        except NoPrototypes:
            prototypes = reranker.build_prototypes(records, vectors, set(), params.prototypes)
            survivors = list(records)
        sigma = reranker.median_pairwise_sigma(prototypes)
        top_ids = {r.id for r in survivors[: params.pseudo_positives]}
        k = params.k if params.k is not None else kmeans.default_k(len(ids))
        k = max(1, min(k, len(ids)))
        cluster_rel, cluster_model = reranker.pseudo_relevance_with_model(
            ids, standardized, top_ids, k=k, seed=params.seed)

    meta: dict[str, np.ndarray] = {}
    for record in records:
        bits = textual.text_bits(record, query)
        proto_max, proto_mean = reranker.prototype_scores(vectors[record.id], prototypes, sigma)
        meta[record.id] = reranker.meta_features(
            bits, proto_max, proto_mean, cluster_rel[record.id], verdicts[record.id])

    return QueryContext(
        query=query,
        records=records,
        features=features,
        verdicts=verdicts,
        vectors=vectors,
        prototypes=prototypes,
        sigma=sigma,
        cluster_rel=cluster_rel,
        meta=meta,
        cluster_model=cluster_model,
    )


# -- training and ranking -----------------------------------------------------------


def training_rows(store: CorpusStore, params: PipelineParams,
                  query_ids: list[str] | None = None,
                  contexts: dict[str, QueryContext] | None = None,
                  exclude: set[tuple[str, str]] | None = None,
                  ) -> tuple[np.ndarray, np.ndarray, list[tuple[str, str]]]:
    """Pooled (meta vector, +-1) rows from effective labels; difficult excluded."""
    if query_ids is None:
        query_ids = [q.id for q in store.queries()]
    rows: list[np.ndarray] = []
    signs: list[float] = []
    refs: list[tuple[str, str]] = []
    for qid in query_ids:
        labels = store.effective_labels(qid)
        if not labels:
            continue
        context = contexts[qid] if contexts and qid in contexts else build_query_context(store, qid, params)
        if contexts is not None:
            contexts[qid] = context
        for record in context.records:
            label = labels.get(record.id)
            if label is None or label == Label.DIFFICULT:
                continue
            if exclude and (qid, record.id) in exclude:
                continue
            rows.append(context.meta[record.id])
            signs.append(1.0 if label == Label.RELEVANT else -1.0)
            refs.append((qid, record.id))
    if not rows:
        raise InsufficientData("no labeled rows in store")
    return np.stack(rows), np.asarray(signs), refs


def unstable_ids(store: CorpusStore, params: PipelineParams,
                 runs: int = 5, majority: float = 0.8) -> set[tuple[str, str]]:
    """(query_id, image_id) pairs whose pseudo-relevance class flips across reruns."""
    flagged: set[tuple[str, str]] = set()
    for query in store.queries():
        if not store.effective_labels(query.id):
            continue
        context = build_query_context(store, query.id, params)
        if not context.records:
            continue
        ids = [r.id for r in context.records]
        matrix = np.stack([context.vectors[iid] for iid in ids])
        symbolic = {iid for iid, v in context.verdicts.items() if v.symbolic}
        survivors = [r for r in context.records if r.id not in symbolic] or context.records
        top_ids = {r.id for r in survivors[: params.pseudo_positives]}
        k = params.k if params.k is not None else kmeans.default_k(len(ids))
        _, eliminated = reranker.eliminate_intermediate(
            context.records, matrix, top_ids, k=max(1, min(k, len(ids))),
            seed=params.seed, runs=runs, majority=majority)
        flagged.update((query.id, iid) for iid in eliminated)
    return flagged


def train_model(store: CorpusStore, params: PipelineParams,
                contexts: dict[str, QueryContext] | None = None,
                exclude: set[tuple[str, str]] | None = None) -> RerankModel:
    features, signs, _ = training_rows(store, params, contexts=contexts, exclude=exclude)
    weights = reranker.learn_weights(features, signs, params.ridge_lambda)
    return RerankModel(
        weights=weights,
        ridge_lambda=params.ridge_lambda,
        prototype_count=params.prototypes,
        pseudo_positive_count=params.pseudo_positives,
        k=params.k,
        seed=params.seed,
    )


def rerank_query(store: CorpusStore, query_id: str, model: RerankModel,
                 params: PipelineParams, context: QueryContext | None = None) -> RankedList:
    context = context or build_query_context(store, query_id, params)
    return reranker.rerank(context.records, context.meta, model, query_id=query_id)


def ranking_file(query_id: str) -> str:
    return f"rankings/{query_id}.jsonl"


def save_ranking(store: CorpusStore, ranked: RankedList) -> None:
    store.save_jsonl(ranking_file(ranked.query_id), ranked.to_rows())


def save_cluster_dump(store: CorpusStore, query_id: str, context: QueryContext) -> None:
    """Audit dump of the pseudo-relevance clustering (centroids, k, seed, inertia)."""
    if context.cluster_model is not None:
        store.save_json(f"rankings/{query_id}_clusters.json", context.cluster_model.to_dict())


def load_ranking(store: CorpusStore, query_id: str) -> RankedList:
    return RankedList.from_rows(store.load_jsonl(ranking_file(query_id)))


def relevant_ids(store: CorpusStore, query_id: str) -> set:
    """Images whose effective label is relevant; difficult never counts."""
    return {
        iid for iid, label in store.effective_labels(query_id).items()
        if label == Label.RELEVANT
    }


def evaluate_query(store: CorpusStore, query_id: str, ranked: RankedList) -> EvalReport:
    relevant = relevant_ids(store, query_id)
    if not relevant:
        raise UndefinedMetric(f"query {query_id!r} has no relevant labels")
    return evaluate_ranking(ranked.ids(), relevant)


def cross_validate_store(store: CorpusStore, params: PipelineParams):
    """(report, fold assignments, fold metric rows, row refs) over pooled labels."""
    features, signs, refs = training_rows(store, params)
    row_ids = [f"{qid}:{iid}" for qid, iid in refs]
    report, assignments, fold_rows = reranker.cross_validate(
        features, signs, row_ids,
        folds=params.folds, repeats=params.repeats, seed=params.seed,
        ridge_lambda=params.ridge_lambda)
    return report, assignments, fold_rows, refs


def save_model(store: CorpusStore, model: RerankModel) -> None:
    model.save(store.path_for(MODEL_FILE))


def load_model(store: CorpusStore) -> RerankModel:
    path = store.root / MODEL_FILE
    if not path.exists():
        raise NotFound("no trained model in store")
    return RerankModel.load(path)


def load_or_default_model(store: CorpusStore, params: PipelineParams) -> RerankModel:
    try:
        return load_model(store)
    except NotFound:
        return RerankModel.zero(
            ridge_lambda=params.ridge_lambda,
            prototype_count=params.prototypes,
            pseudo_positive_count=params.pseudo_positives,
            k=params.k,
            seed=params.seed,
        )


def write_verdicts(store: CorpusStore, query_id: str, context: QueryContext) -> list[dict]:
    rows = [
        {
            "image_id": record.id,
            "query_id": query_id,
            "symbolic": context.verdicts[record.id].symbolic,
            "score": context.verdicts[record.id].score,
        }
        for record in context.records
    ]
    existing = []
    try:
        existing = [r for r in store.load_jsonl(VERDICTS_FILE) if r.get("query_id") != query_id]
    except NotFound:
        pass
    store.save_jsonl(VERDICTS_FILE, existing + rows)
    return rows
