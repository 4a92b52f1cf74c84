import math
import os
from pathlib import Path

import pytest

import synloc

FIXTURES = Path(os.environ.get("SYNLOC_FIXTURE_DIR", Path(__file__).resolve().parents[1] / "fixtures"))


def test_welch_t_by_hand():
    # Means 2 and 5, both variances 1.
    assert synloc.welch_t([1, 2, 3], [4, 5, 6]) == pytest.approx(-3 / math.sqrt(2 / 3), rel=1e-15)
    assert synloc.welch_t([1, 1, 1], [2, 2]) is None
    with pytest.raises(synloc.DataError):
        synloc.welch_t([1], [1, 2])


def test_counts_and_baseline():
    assert synloc.target_count(9216, 0.01) == 92
    assert synloc.target_count(36864, 0.05) == 1843
    assert synloc.expected_random_overlap(10000, 100, 2) == pytest.approx(1.0)
    with pytest.raises(synloc.ConfigError):
        synloc.target_count(10, 1.5)


def test_least_squares_exact_line():
    slope, intercept, r = synloc.least_squares([0, 1, 2, 3], [1, 3, 5, 7])
    assert slope == pytest.approx(2.0)
    assert intercept == pytest.approx(1.0)
    assert r == pytest.approx(1.0)
    with pytest.raises(synloc.NumericError):
        synloc.least_squares([1, 1, 1], [1, 2, 3])


def test_fixture_model_localizes():
    bench = synloc.load_benchmark(FIXTURES / "blimp_toy")
    assert len(bench.phenomena) == 11
    model = synloc.LanguageModel.load(FIXTURES / "tiny_gpt2" / "model.safetensors", FIXTURES / "tokenizer")
    assert model.n_layers * model.hidden == 1024
    assert model.sentence_logprob("The cat sleeps.") < 0
    units = model.localize(bench, "transitive", fraction=0.01)
    assert len(units) == 10
    assert all(a["t"] >= b["t"] for a, b in zip(units, units[1:]))


def test_cli_entry_point(tmp_path):
    assert synloc.run_cli(["verify", str(tmp_path / "missing")]) == 2
