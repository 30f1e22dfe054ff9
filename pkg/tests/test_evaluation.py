import numpy as np
import pytest

from dialectvc.classifier import ClassifierModel
from dialectvc.core import Dataset, SplitPurityError, UtteranceRecord
from dialectvc.evaluation import (
    EvaluationError,
    domain_average,
    domain_report,
    evaluate,
    evaluate_by_domain,
    metrics_from_confusion,
    relative_delta,
    render_report,
)
from dialectvc.features import FeatureSequence


def feat(vec):
    return FeatureSequence(np.asarray(vec, dtype=np.float64)[None, :], 100.0, "synth")


def nearest_mean_model(labels, dim):
    """Model whose logits are driven by the first |labels| feature dims."""
    w1 = np.zeros((dim, dim))
    np.fill_diagonal(w1, 1.0)
    w2 = np.zeros((dim, len(labels)))
    for i in range(len(labels)):
        w2[i, i] = 10.0
    return ClassifierModel(w1, np.zeros(dim), w2, np.zeros(len(labels)), labels)


def balanced_dataset(labels, per_class, split="test", domain="radio", start=0):
    records = []
    feats = {}
    for i in range(per_class * len(labels)):
        label = labels[i % len(labels)]
        rid = f"e{start + i}"
        records.append(UtteranceRecord(rid, f"{rid}.ft", label, f"s{i}", domain, split))
        vec = np.zeros(8)
        vec[labels.index(label)] = 1.0
        feats[rid] = feat(vec)
    return Dataset(records, labels), feats


class TestMetrics:
    def test_perfect_predictions(self):
        labels = ("msa", "gulf")
        ds, feats = balanced_dataset(labels, per_class=5)
        metrics = evaluate(nearest_mean_model(labels, 8), ds, feats)
        assert metrics.accuracy == 1.0
        assert np.array_equal(metrics.confusion, np.diag([5, 5]))
        assert metrics.macro_precision == 1.0
        assert metrics.macro_recall == 1.0

    def test_hand_computed_two_class_confusion(self):
        metrics = metrics_from_confusion(np.array([[3, 1], [2, 4]]), ("a", "b"))
        assert metrics.accuracy == pytest.approx(0.7)
        assert metrics.macro_precision == pytest.approx((3 / 5 + 4 / 5) / 2)
        assert metrics.macro_recall == pytest.approx((3 / 4 + 4 / 6) / 2)
        assert metrics.macro_recall == pytest.approx(0.7083, abs=1e-4)

    def test_accuracy_equals_trace_ratio_property(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            k = int(rng.integers(2, 6))
            confusion = rng.integers(0, 20, size=(k, k))
            confusion[0, 0] += 1  # keep nonempty
            m = metrics_from_confusion(confusion, tuple(f"c{i}" for i in range(k)))
            assert m.accuracy == pytest.approx(np.trace(confusion) / confusion.sum())

    def test_macro_stats_skip_absent_classes(self):
        confusion = np.array([[4, 0, 0], [1, 3, 0], [0, 0, 0]])
        m = metrics_from_confusion(confusion, ("a", "b", "c"))
        assert m.macro_recall == pytest.approx((1.0 + 0.75) / 2)

    def test_random_model_on_balanced_data_is_chance_level(self):
        # 99% binomial interval around 0.2 at n=1000.
        labels = ("msa", "gulf", "levantine", "maghrebi", "egyptian")
        rng = np.random.default_rng(11)
        records, feats = [], {}
        for i in range(1000):
            rid = f"r{i}"
            records.append(
                UtteranceRecord(rid, f"{rid}.ft", labels[i % 5], f"s{i}", "radio", "test")
            )
            feats[rid] = feat(rng.normal(size=8))
        ds = Dataset(records, labels)
        model = ClassifierModel(
            rng.normal(scale=0.5, size=(8, 16)),
            rng.normal(scale=0.1, size=16),
            rng.normal(scale=0.5, size=(16, 5)),
            rng.normal(scale=0.1, size=5),
            labels,
        )
        metrics = evaluate(model, ds, feats)
        half_width = 2.576 * np.sqrt(0.2 * 0.8 / 1000)
        assert abs(metrics.accuracy - 0.2) <= half_width

    def test_purity_rejects_resynthesized_eval_records(self):
        labels = ("msa", "gulf")
        record = UtteranceRecord(
            "x0", "x0.ft", "msa", "v0", "radio", "test", "resynthesized", "v0"
        )
        ds = Dataset([record], labels)
        with pytest.raises(SplitPurityError, match="x0"):
            evaluate(nearest_mean_model(labels, 8), ds, {"x0": feat(np.zeros(8))})

    def test_purity_rejects_augmented_eval_records(self):
        labels = ("msa", "gulf")
        record = UtteranceRecord("x1", "x1.ft", "msa", "s", "radio", "test", "augmented:rir")
        ds = Dataset([record], labels)
        with pytest.raises(SplitPurityError, match="x1"):
            evaluate(nearest_mean_model(labels, 8), ds, {"x1": feat(np.zeros(8))})

    def test_empty_split_is_an_error(self):
        labels = ("msa", "gulf")
        ds, feats = balanced_dataset(labels, per_class=2, split="train")
        with pytest.raises(EvaluationError, match="test"):
            evaluate(nearest_mean_model(labels, 8), ds, feats, split="test")


class TestRelativeDelta:
    def test_headline_value(self):
        assert relative_delta(85.32, 75.94) == 12.35

    def test_identity_is_zero(self):
        assert relative_delta(64.2, 64.2) == 0.0

    def test_cross_domain_average_delta(self):
        value = relative_delta(80.73, 60.22)
        assert value == 34.06
        # Published value comes from unrounded per-run numbers.
        assert abs(value - 34.07) <= 0.02

    def test_nonpositive_baseline(self):
        with pytest.raises(EvaluationError, match="baseline"):
            relative_delta(10.0, 0.0)

    def test_antisymmetric_around_baseline(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            base = float(rng.uniform(10, 90))
            d = float(rng.uniform(0, 9))
            assert relative_delta(base + d, base) == -relative_delta(base - d, base)


class TestDomainAverage:
    def test_natural_speech_row(self):
        assert domain_average([67.63, 69.23, 54.12, 49.88]) == 60.22

    def test_four_voice_row(self):
        assert domain_average([87.86, 86.73, 77.85, 70.47]) == 80.73

    def test_single_domain(self):
        assert domain_average([42.5]) == 42.5

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        values = [round(float(v), 2) for v in rng.uniform(0, 100, size=6)]
        expected = domain_average(values)
        for _ in range(10):
            rng.shuffle(values)
            assert domain_average(values) == expected


class TestDomainReport:
    def _metrics(self, acc, n=10000):
        correct = int(round(acc * n))
        confusion = np.array([[correct, n - correct], [0, 0]])
        return metrics_from_confusion(confusion, ("a", "b"))

    def test_average_and_deltas_against_baseline(self):
        base = domain_report(
            {
                "radio": self._metrics(0.6763),
                "tedx": self._metrics(0.6923),
                "dramas": self._metrics(0.5412),
                "theater": self._metrics(0.4988),
            }
        )
        assert base.average_accuracy == 60.22
        cand = domain_report(
            {
                "radio": self._metrics(0.8786),
                "tedx": self._metrics(0.8673),
                "dramas": self._metrics(0.7785),
                "theater": self._metrics(0.7047),
            },
            baseline=base,
        )
        assert cand.average_accuracy == 80.73
        assert cand.deltas["average"] == 34.06

    def test_domain_mismatch(self):
        base = domain_report({"radio": self._metrics(0.5)})
        with pytest.raises(EvaluationError, match="mismatch"):
            domain_report({"tedx": self._metrics(0.5)}, baseline=base)

    def test_render_is_aligned_text(self):
        report = domain_report({"radio": self._metrics(0.5), "tedx": self._metrics(0.75)})
        text = render_report(report, title="smoke")
        assert "macro" in text
        assert "radio" in text and "average" in text

    def test_by_domain_evaluation(self):
        labels = ("msa", "gulf")
        ds_a, feats_a = balanced_dataset(labels, 3, domain="radio", start=0)
        ds_b, feats_b = balanced_dataset(labels, 3, domain="tedx", start=100)
        ds = Dataset(ds_a.records + ds_b.records, labels)
        feats = {**feats_a, **feats_b}
        per_domain = evaluate_by_domain(nearest_mean_model(labels, 8), ds, feats)
        assert set(per_domain) == {"radio", "tedx"}
        assert all(m.accuracy == 1.0 for m in per_domain.values())
