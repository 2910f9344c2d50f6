import math
from functools import partial

import numpy as np
import pytest

from feature_encoding import fit_normalizer
from neural_network import NetworkConfig, init_network, predict_batch
from pdt_metrics import (
    EVALUATION_COLUMNS, accuracy_pdt, evaluate, evaluation_frame, format_percentage, score,
)


class TestAccuracyPdt:

    def test_perfect(self):
        assert accuracy_pdt([30], [30]) == 1.0

    def test_tolerance_is_inclusive(self):
        assert accuracy_pdt([40], [30]) == 1.0
        assert accuracy_pdt([40.5], [30]) == 0.0

    def test_two_of_three(self):
        assert accuracy_pdt([10, 25, 60], [12, 40, 55]) == pytest.approx(2 / 3)

    def test_matches_naive_loop(self, rng):
        predictions = rng.uniform(0, 100, size=1000)
        labels = rng.uniform(0, 100, size=1000)
        hits = sum(1 for p, y in zip(predictions, labels) if abs(p - y) <= 10)
        assert accuracy_pdt(predictions, labels) == hits / 1000

    def test_permutation_invariant(self, rng):
        predictions = rng.uniform(0, 100, size=50)
        labels = rng.uniform(0, 100, size=50)
        order = rng.permutation(50)
        assert accuracy_pdt(predictions[order], labels[order]) == accuracy_pdt(predictions, labels)

    def test_monotone_in_tolerance(self, rng):
        predictions = rng.uniform(0, 100, size=200)
        labels = rng.uniform(0, 100, size=200)
        scores = [accuracy_pdt(predictions, labels, tolerance=t) for t in (1, 5, 10, 20, 50)]
        assert scores == sorted(scores)

    def test_empty(self):
        with pytest.raises(ValueError):
            accuracy_pdt([], [])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy_pdt([1, 2], [1])

    def test_non_positive_tolerance(self):
        with pytest.raises(ValueError):
            accuracy_pdt([1], [1], tolerance=0)


class TestScore:

    def test_error_metrics(self):
        result = score([20, 50], [30, 40], set_name="validation", row_indices=[7, 3])
        assert result.accuracy_pdt == 1.0
        assert result.mae == 10.0
        assert result.rmse == pytest.approx(math.sqrt(100.0))
        assert result.n == 2

    def test_mixed_errors(self):
        result = score([0, 20], [10, 40])
        assert result.mae == 15.0
        assert result.rmse == pytest.approx(math.sqrt((100 + 400) / 2))
        assert result.accuracy_pdt == 0.5

    def test_table(self):
        result = score([20, 55], [30, 40], set_name="test", row_indices=[4, 9])
        assert list(result.table.columns) == EVALUATION_COLUMNS
        assert result.table["row_index"].tolist() == [4, 9]
        assert result.table["hit"].tolist() == [1, 0]
        assert result.table["abs_error_sec"].tolist() == [10.0, 15.0]

    def test_summary(self):
        summary = score([20, 55], [30, 40], set_name="test").summary()
        assert summary.startswith("test: accuracy_PDT 50.00%")
        assert "(n=2)" in summary


class TestEvaluate:

    def test_matches_predict_batch(self, rng):
        raw = rng.uniform(0, 10, size=(15, 3))
        labels = rng.uniform(0, 100, size=15)
        normalizer = fit_normalizer(raw)
        net = init_network(NetworkConfig(input_dim=3, hidden_layers=(4,), seed=2))
        result = evaluate(partial(predict_batch, net, normalizer), raw, labels, set_name="train")
        expected = predict_batch(net, normalizer, raw)
        assert result.accuracy_pdt == accuracy_pdt(expected, labels)
        np.testing.assert_array_equal(result.table["prediction_sec"].to_numpy(), expected)

    def test_any_predictor_callable(self):
        raw = np.array([[1.0, 0.0], [4.0, 0.0], [9.0, 0.0]])
        result = evaluate(lambda rows: rows[:, 0] * 10.0, raw, [10.0, 25.0, 90.0], row_indices=[5, 6, 7])
        assert result.accuracy_pdt == pytest.approx(2 / 3)
        assert result.table["prediction_sec"].tolist() == [10.0, 40.0, 90.0]

    def test_empty_set(self):
        with pytest.raises(ValueError, match="validation"):
            evaluate(lambda rows: rows[:, 0], np.empty((0, 3)), [], set_name="validation")


class TestFormatting:

    def test_evaluation_frame_stacks_sets(self):
        frame = evaluation_frame([score([10], [12], "train"), score([50, 60], [40, 90], "test")])
        assert frame["set"].tolist() == ["train", "test", "test"]
        assert list(frame.columns) == EVALUATION_COLUMNS

    def test_empty_frame(self):
        assert list(evaluation_frame([]).columns) == EVALUATION_COLUMNS

    @pytest.mark.parametrize("fraction,text", [(0.856, "85.60"), (1.0, "100.00"), (0.0, "0.00"), (2 / 3, "66.67")])
    def test_format_percentage(self, fraction, text):
        assert format_percentage(fraction) == text
