import numpy as np
import pytest

from causalprobe import (
    CausalGraph,
    EvaluationConfig,
    MetricsReport,
    correctness_index,
    entropy,
    faithfulness_index,
    mutual_information,
    stability,
)

CFG = EvaluationConfig()


def g(labels, edges):
    return CausalGraph(list(labels), {e: 1.0 for e in edges})


def test_correctness_exact_match():
    truth = g("abc", [(0, 1), (1, 2), (0, 2)])
    predicted = [truth.copy() for _ in range(6)]
    assert correctness_index(predicted, truth) == 1.0


def test_correctness_partial():
    truth = g("abc", [(0, 1), (1, 2), (0, 2)])
    pred = g("abc", [(0, 1), (1, 2), (2, 1)])  # 2 correct + 1 extra of 3
    assert correctness_index([pred], truth) == pytest.approx(1 / 3)


def test_correctness_reversed_edge():
    truth = g("ab", [(0, 1)])
    pred = g("ab", [(1, 0)])
    assert correctness_index([pred], truth) == -1.0


def test_correctness_zero_edge_truth_rejected():
    truth = g("ab", [])
    with pytest.raises(ValueError, match="zero edges"):
        correctness_index([g("ab", [])], truth)


def test_correctness_averages_over_runs():
    truth = g("ab", [(0, 1)])
    runs = [g("ab", [(0, 1)]), g("ab", [])]
    assert correctness_index(runs, truth) == pytest.approx(0.5)


def test_stability_identical_explanations():
    sets = [[np.array([1.0, 2.0])] * 4 for _ in range(3)]
    assert stability(sets) == 0.0


def test_stability_alternating_coordinate():
    # one of four coordinates alternates +-1 across Q=2 -> variance 1 on it
    sets = [[np.array([1.0, 0, 0, 0]), np.array([-1.0, 0, 0, 0])]]
    assert stability(sets) == pytest.approx(-0.25)


def test_stability_single_repetition_flagged():
    with pytest.warns(RuntimeWarning, match="Q = 1"):
        assert stability([[np.array([3.0, 4.0])]]) == 0.0


def test_stability_always_nonpositive():
    rng = np.random.default_rng(0)
    sets = [[rng.normal(size=5) for _ in range(4)] for _ in range(3)]
    assert stability(sets) <= 0.0


def test_entropy_constant_column_is_zero():
    assert entropy(np.full(100, 3.7), CFG) == 0.0


def test_entropy_uniform_symbols():
    # 2^4 equiprobable symbols, ties share bins -> exactly 4 bits
    x = np.repeat(np.arange(16.0), 64)
    assert entropy(x, CFG) == pytest.approx(4.0)


def test_entropy_equal_frequency_binning_of_continuous():
    # rank binning gives near-uniform bin counts for continuous data
    rng = np.random.default_rng(1)
    h = entropy(rng.normal(size=100_000), CFG)
    assert abs(h - np.log2(CFG.mi_bins)) < 0.01


def test_mi_identical_discrete_variables():
    x = np.repeat(np.arange(4.0), 2500)
    assert mutual_information(x, x, CFG) == pytest.approx(2.0)


def test_mi_independent_small():
    rng = np.random.default_rng(2)
    x = rng.normal(size=10_000)
    y = rng.normal(size=10_000)
    assert mutual_information(x, y, CFG) < 0.05


def test_mi_gaussian_analytic():
    rng = np.random.default_rng(3)
    n = 100_000
    rho = 0.9
    x = rng.normal(size=n)
    y = rho * x + np.sqrt(1 - rho**2) * rng.normal(size=n)
    est_nats = mutual_information(x, y, CFG) * np.log(2)
    analytic = -0.5 * np.log(1 - rho**2)
    assert abs(est_nats - analytic) / analytic < 0.10


def test_mi_symmetry_exact():
    rng = np.random.default_rng(4)
    x = rng.normal(size=2000)
    y = 0.5 * x + rng.normal(size=2000)
    assert abs(mutual_information(x, y, CFG) - mutual_information(y, x, CFG)) < 1e-12


def test_mi_monotone_transform_invariance_exact():
    rng = np.random.default_rng(5)
    x = rng.normal(size=3000)
    y = x + rng.normal(size=3000)
    base = mutual_information(x, y, CFG)
    transformed = mutual_information(np.exp(x), y**3, CFG)
    assert transformed == base
    assert faithfulness_index(np.exp(x), y**3, CFG) == faithfulness_index(x, y, CFG)


def test_mi_requires_matched_rows_and_enough_samples():
    with pytest.raises(ValueError, match="rows"):
        mutual_information(np.zeros(10), np.zeros(11), CFG)
    with pytest.raises(ValueError, match="bins"):
        mutual_information(np.zeros(4), np.zeros(4), CFG)


def test_faithfulness_deterministic_bijection():
    rng = np.random.default_rng(6)
    x = rng.normal(size=5000)
    y = np.exp(x)  # strictly monotone map of the latents
    assert faithfulness_index(x, y, CFG) == pytest.approx(1.0)


def test_faithfulness_independent_near_zero():
    rng = np.random.default_rng(7)
    x = rng.normal(size=10_000)
    y = rng.permutation(x)
    assert faithfulness_index(x, y, CFG) < 0.05


def test_faithfulness_bounded():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(4000, 2))
    y = x @ np.array([[1.0, 0.2], [0.3, 0.9]]) + 0.1 * rng.normal(size=(4000, 2))
    val = faithfulness_index(x, y, CFG)
    assert 0.0 <= val <= 1.0


def test_faithfulness_zero_entropy_rejected():
    with pytest.raises(ValueError, match="zero entropy"):
        faithfulness_index(np.ones(1000), np.arange(1000.0), CFG)


def test_high_dimensional_reduction_path():
    # 3+3 columns at 16 bins needs 16^6 rows for a joint histogram, so the
    # pairwise-average reduction kicks in and stays bounded
    rng = np.random.default_rng(9)
    x = rng.normal(size=(500, 3))
    y = x + 0.1 * rng.normal(size=(500, 3))
    mi = mutual_information(x, y, CFG)
    assert np.isfinite(mi) and mi >= 0.0
    val = faithfulness_index(x, y, CFG)
    assert 0.0 <= val <= 1.0


def test_evaluation_config_validation():
    with pytest.raises(ValueError):
        EvaluationConfig(p_subsets=0)
    with pytest.raises(ValueError):
        EvaluationConfig(mi_bins=1)
    with pytest.raises(ValueError):
        EvaluationConfig(noise_std=-0.1)


def test_metrics_report_field_invariants():
    ok = MetricsReport(
        correctness_index=0.9, stability=-0.02, faithfulness_index=0.97, details={}
    )
    doc = ok.to_json_dict()
    assert doc["faithfulness_index"] == 0.97
    with pytest.raises(ValueError):
        MetricsReport(correctness_index=1.2, stability=0.0, faithfulness_index=0.5, details={})
    with pytest.raises(ValueError):
        MetricsReport(correctness_index=None, stability=0.1, faithfulness_index=0.5, details={})
    with pytest.raises(ValueError):
        MetricsReport(correctness_index=None, stability=0.0, faithfulness_index=1.5, details={})
