import math

import numpy as np
import pytest

from puresearch.errors import InvalidInput, InvalidK, UndefinedMetric
from puresearch.evaluation import (
    EvalReport,
    MetricSummary,
    aggregate,
    average_precision,
    evaluate_ranking,
    precision_at_k,
    precision_at_recall,
    precision_curve,
    recall_at_k,
    summarize,
)


def precision_at_recall_oracle(ranked, relevant, r):
    """Linear scan: walk every prefix and report precision at the first
    prefix whose recall reaches r."""
    needed = math.ceil(r * len(relevant))
    for cut in range(1, len(ranked) + 1):
        hits = len([x for x in ranked[:cut] if x in relevant])
        if hits >= needed:
            return hits / cut
    return 0.0


def average_precision_oracle(ranked, relevant):
    total = 0.0
    for position, item in enumerate(ranked, start=1):
        if item in relevant:
            prefix_hits = len([x for x in ranked[:position] if x in relevant])
            total += prefix_hits / position
    return total / len(relevant)


class TestPrecisionAtK:
    def test_perfect_ranking(self):
        assert precision_at_k(["r1", "r2", "n1"], {"r1", "r2"}, 2) == 1.0

    def test_alternating(self):
        assert precision_at_k(["r", "n", "r2", "n2"], {"r", "r2"}, 4) == 0.5

    def test_no_relevant(self):
        assert precision_at_k(["a", "b"], set(), 2) == 0.0

    def test_k_out_of_range(self):
        with pytest.raises(InvalidK):
            precision_at_k(["a"], {"a"}, 2)
        with pytest.raises(InvalidK):
            precision_at_k(["a"], {"a"}, 0)

    def test_inverted_ranking_zero(self):
        ranked = [f"n{i}" for i in range(8)] + ["r1", "r2"]
        assert precision_at_k(ranked, {"r1", "r2"}, 8) == 0.0


class TestPrecisionAtRecall:
    def test_spec_example(self):
        # 10 relevant, second relevant found at rank 5 -> ceil(1.5)=2 needed -> 2/5
        relevant = {f"r{i}" for i in range(10)}
        ranked = ["r0", "n1", "n2", "n3", "r1"] + [f"n{i}" for i in range(4, 99)]
        assert precision_at_recall(ranked, relevant, 0.15) == pytest.approx(0.4)

    def test_perfect_ranking_any_r(self):
        relevant = {"a", "b", "c"}
        ranked = ["a", "b", "c", "x", "y"]
        for r in (0.05, 0.34, 0.5, 1.0):
            assert precision_at_recall(ranked, relevant, r) == 1.0

    def test_against_scan_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(5, 40))
            ranked = [f"d{i}" for i in range(n)]
            relevant = set(rng.choice(ranked, size=int(rng.integers(1, n)), replace=False))
            r = float(rng.uniform(0.05, 1.0))
            assert precision_at_recall(ranked, relevant, r) == pytest.approx(
                precision_at_recall_oracle(ranked, relevant, r), abs=1e-12)

    def test_never_reaches_recall(self):
        assert precision_at_recall(["n1", "n2"], {"r_missing"}, 0.5) == 0.0

    def test_empty_relevant_undefined(self):
        with pytest.raises(UndefinedMetric):
            precision_at_recall(["a"], set(), 0.15)

    def test_constant_within_target_bucket(self, rng):
        # raw precision depends on r only through ceil(r * |relevant|):
        # within one bucket the value is flat
        ranked = [f"d{i}" for i in range(30)]
        relevant = set(rng.choice(ranked, size=10, replace=False))
        grid = [0.005 * i for i in range(1, 201)]
        by_bucket = {}
        for r in grid:
            bucket = math.ceil(r * len(relevant))
            by_bucket.setdefault(bucket, set()).add(precision_at_recall(ranked, relevant, r))
        assert all(len(values) == 1 for values in by_bucket.values())

    def test_raw_not_interpolated(self):
        # relevant at ranks 1, 10, 11: the raw precision sawtooth rises
        # again at the third relevant item (no 11-point interpolation)
        ranked = ["r1"] + [f"n{i}" for i in range(8)] + ["r2", "r3"]
        relevant = {"r1", "r2", "r3"}
        assert precision_at_recall(ranked, relevant, 0.3) == pytest.approx(1.0)  # m=1
        assert precision_at_recall(ranked, relevant, 0.5) == pytest.approx(2 / 10)  # m=2
        assert precision_at_recall(ranked, relevant, 0.9) == pytest.approx(3 / 11)  # m=3


class TestAveragePrecision:
    def test_perfect(self):
        assert average_precision(["a", "b", "n"], {"a", "b"}) == 1.0

    def test_single_relevant_rank3(self):
        assert average_precision(["n1", "n2", "r"], {"r"}) == pytest.approx(1 / 3)

    def test_against_oracle(self, rng):
        for _ in range(30):
            ranked = [f"d{i}" for i in range(10)]
            relevant = set(rng.choice(ranked, size=int(rng.integers(1, 10)), replace=False))
            assert average_precision(ranked, relevant) == pytest.approx(
                average_precision_oracle(ranked, relevant), abs=1e-12)

    def test_tail_permutation_invariant(self, rng):
        ranked = ["r1", "n1", "r2", "n2", "n3", "n4"]
        relevant = {"r1", "r2"}
        base = average_precision(ranked, relevant)
        shuffled_tail = ranked[:3] + ["n4", "n2", "n3"]
        assert average_precision(shuffled_tail, relevant) == base

    def test_empty_relevant(self):
        with pytest.raises(UndefinedMetric):
            average_precision(["a"], set())

    def test_id_relabeling_invariance(self, rng):
        ranked = [f"d{i}" for i in range(12)]
        relevant = set(rng.choice(ranked, size=5, replace=False))
        mapping = {d: f"X_{d}" for d in ranked}
        renamed = [mapping[d] for d in ranked]
        renamed_rel = {mapping[d] for d in relevant}
        assert average_precision(renamed, renamed_rel) == average_precision(ranked, relevant)
        assert precision_at_k(renamed, renamed_rel, 6) == precision_at_k(ranked, relevant, 6)
        assert precision_at_recall(renamed, renamed_rel, 0.3) == precision_at_recall(ranked, relevant, 0.3)


class TestAggregate:
    def test_equal_values(self):
        assert aggregate([0.5, 0.5]) == (0.5, 0.0)

    def test_zero_one(self):
        mean, std = aggregate([0.0, 1.0])
        assert mean == 0.5
        assert std == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_against_fsum_oracle(self, rng):
        values = rng.uniform(0, 1, size=50).tolist()
        mean, std = aggregate(values)
        oracle_mean = math.fsum(values) / len(values)
        oracle_std = math.sqrt(math.fsum((v - oracle_mean) ** 2 for v in values) / (len(values) - 1))
        assert mean == pytest.approx(oracle_mean, abs=1e-12)
        assert std == pytest.approx(oracle_std, abs=1e-12)

    def test_single_value_no_std(self):
        assert aggregate([0.7]) == (0.7, None)

    def test_empty(self):
        with pytest.raises(InvalidInput):
            aggregate([])


class TestReport:
    def test_evaluate_ranking_clips_k_grid(self):
        ranked = [f"d{i}" for i in range(12)]
        report = evaluate_ranking(ranked, {"d0", "d3"})
        assert "precision_at_10" in report.metrics
        assert "precision_at_25" not in report.metrics
        assert report.metrics["average_precision"].n == 1

    def test_recall_at_k(self):
        assert recall_at_k(["r", "n", "r2", "n2"], {"r", "r2"}, 2) == 0.5

    def test_curve_matches_pointwise(self, rng):
        ranked = [f"d{i}" for i in range(15)]
        relevant = set(rng.choice(ranked, size=6, replace=False))
        curve = dict(precision_curve(ranked, relevant))
        for k in (1, 5, 15):
            assert curve[k] == precision_at_k(ranked, relevant, k)

    def test_text_table(self):
        report = EvalReport(
            metrics={"average_precision": MetricSummary(0.5, 0.1, 9)},
            folds=3, repeats=3, labeled_images=30)
        table = report.to_text_table()
        assert "average_precision" in table and "0.5000" in table

    def test_summarize_skips_empty(self):
        report = summarize({"a": [1.0, 0.5], "b": []}, folds=2, repeats=1, labeled_images=4)
        assert set(report.metrics) == {"a"}
