import numpy as np
import pytest
from scipy import stats

from nnvp.schemas import SplitPlan, TaxonomyRule
from nnvp.services.evaluation import (
    BASELINE,
    OnlineCurves,
    batch_metrics,
    brier_score,
    reliability,
    reliability_binning,
    run_batch,
    run_online_nn,
    run_online_vp,
    run_online_vp_many,
    two_sided_pvalue,
)
from nnvp.services.mlp import one_hot


# --- CURVES ---

def test_curves_accumulate_steps():
    curves = OnlineCurves.from_steps("V1", [1, 0, 1], [0.1, 0.2, 0.3], [0.9, 0.9, 0.9])

    assert curves.errors.tolist() == [1, 1, 2]
    np.testing.assert_allclose(curves.lower, [0.1, 0.3, 0.6])
    np.testing.assert_allclose(curves.upper, [0.9, 1.8, 2.7])
    assert curves.contained() is True
    assert curves.containment_fraction() == pytest.approx(2 / 3)


def test_curves_frame_columns():
    venn = OnlineCurves.from_steps("V1", [0, 1], [0.1, 0.1], [0.2, 0.2]).to_frame()
    baseline = OnlineCurves.from_steps(BASELINE, [0, 1], error_probs=[0.1, 0.2]).to_frame()

    assert list(venn.columns) == ["n", "E_n", "LEP_n", "UEP_n"]
    assert list(baseline.columns) == ["n", "E_n", "EP_n"]
    assert venn["n"].tolist() == [1, 2]


def test_within_tolerance_allows_two_sqrt_n():
    # 4 steps: slack 2 * sqrt(4) = 4
    curves = OnlineCurves.from_steps("V2", [1, 1, 1, 1], [0, 0, 0, 0], [0, 0, 0, 0])

    assert curves.contained() is False
    assert curves.within_tolerance() is True


def test_baseline_summary_has_p_value():
    summary = OnlineCurves.from_steps(BASELINE, [1, 1, 0, 1], error_probs=[0.1, 0.2, 0.1, 0.1]).summary()

    assert summary.ep == pytest.approx(0.5)
    assert summary.p_value is not None
    assert summary.lep is None and summary.contained is None


# --- P-VALUE ---

@pytest.mark.parametrize("q", [0.5, 0.3])
@pytest.mark.parametrize("n", [100, 500])
def test_pvalue_close_to_exact_binomial(q, n):
    probs = np.full(n, q)
    mean = n * q
    sd = np.sqrt(n * q * (1 - q))
    for errors in np.unique(np.round(mean + sd * np.array([-3, -2, -1, 0, 1, 2, 3])).astype(int)):
        exact = min(1.0, 2 * min(stats.binom.cdf(errors, n, q), stats.binom.sf(errors - 1, n, q)))
        assert two_sided_pvalue(int(errors), probs).p_value == pytest.approx(exact, abs=0.02)


def test_pvalue_rejects_rarely_when_calibrated():
    rng = np.random.default_rng(31)
    probs = rng.uniform(0.05, 0.6, size=200)
    rejections = sum(
        two_sided_pvalue(int(np.sum(rng.random(200) < probs)), probs).p_value < 0.01
        for _ in range(1000)
    )
    assert rejections <= 30


def test_pvalue_detects_underestimated_errors():
    probs = np.full(300, 0.1)
    assert two_sided_pvalue(60, probs).p_value < 1e-6


def test_pvalue_zero_variance_is_flagged():
    assert two_sided_pvalue(0, [0.0, 0.0]) == (1.0, True)
    assert two_sided_pvalue(1, [0.0, 0.0]) == (0.0, True)
    assert two_sided_pvalue(2, [1.0, 1.0]).p_value == 1.0


def test_pvalue_capped_at_one():
    assert two_sided_pvalue(5, np.full(10, 0.5)).p_value == 1.0


# --- BATCH METRICS ---

def test_reliability_binning_matches_recount():
    rng = np.random.default_rng(8)
    O = rng.dirichlet(np.ones(3), size=40)
    T = one_hot(rng.integers(0, 3, size=40), 3)
    K = 10

    counts = np.zeros(K)
    hits = np.zeros(K)
    for o_row, t_row in zip(O, T):
        for o, t in zip(o_row, t_row):
            k = sum(j / K <= o for j in range(1, K))
            counts[k] += 1
            hits[k] += t
    expected = sum(
        counts[k] * ((k + 0.5) / K - hits[k] / counts[k]) ** 2 for k in range(K) if counts[k]
    ) / 40

    binning = reliability_binning(O, T, K)
    assert binning.counts.tolist() == counts.tolist()
    assert binning.reliability == pytest.approx(expected, abs=1e-12)


def test_reliability_output_of_one_goes_to_last_bin():
    binning = reliability_binning(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]), 4)

    assert binning.counts.tolist() == [1, 0, 0, 1]


def test_reliability_boundary_values_open_their_bin():
    binning = reliability_binning(np.array([[0.57, 0.43], [0.29, 0.71]]), np.array([[1.0, 0.0], [0.0, 1.0]]), 100)

    assert np.flatnonzero(binning.counts).tolist() == [29, 43, 57, 71]


def test_reliability_is_zero_for_perfect_calibration():
    # outputs at the bin midpoint, frequency equal to it
    O = np.array([[0.25, 0.75]] * 4)
    T = np.array([[1, 0], [0, 1], [0, 1], [0, 1]], dtype=float)

    assert reliability(O, T, 2) == pytest.approx(0.0)


def test_brier_score():
    probs = np.array([[1.0, 0.0], [0.5, 0.5]])
    targets = one_hot(np.array([0, 1]), 2)

    assert brier_score(probs, targets) == pytest.approx(0.25)


def test_batch_metrics_perfect_predictions():
    labels = np.array([0, 1, 2, 1])
    m = batch_metrics("NN", one_hot(labels, 3), labels, bins=100)

    assert m.accuracy == 1.0
    assert m.brier == 0.0
    assert m.cross_entropy == pytest.approx(0.0)
    assert m.reliability == pytest.approx((4 + 8) * 0.005 ** 2 / 4)


# --- RUNNERS ---

def test_online_vp_run(small_blobs, fast_config):
    curves = run_online_vp(small_blobs, TaxonomyRule(kind="v1"), fast_config, initial_size=15)

    assert curves.num_steps == 5
    assert np.all(np.diff(curves.errors) >= 0)
    assert np.all(curves.lower <= curves.upper)
    assert np.all(np.diff(curves.lower) >= -1e-12)


def test_online_vp_many_matches_single_runs(small_blobs, fast_config):
    rules = [TaxonomyRule(kind="v1"), TaxonomyRule(kind="v3")]
    shared = run_online_vp_many(small_blobs, rules, fast_config, initial_size=16, limit=2)
    single = run_online_vp(small_blobs, rules[1], fast_config, initial_size=16, limit=2)

    np.testing.assert_array_equal(shared[rules[1].kind].errors, single.errors)
    np.testing.assert_array_equal(shared[rules[1].kind].upper, single.upper)


def test_online_nn_run_is_deterministic(blobs, fast_config):
    first = run_online_nn(blobs, fast_config, initial_size=52)
    second = run_online_nn(blobs, fast_config, initial_size=52)

    assert first.num_steps == 8
    np.testing.assert_array_equal(first.expected, second.expected)
    assert np.all((first.step_error_probs >= 0) & (first.step_error_probs <= 1))


def test_batch_run_rows(small_blobs, fast_config):
    steps = []
    plan = SplitPlan(seed=1, test_fraction=0.1, num_repeats=2)
    report = run_batch(small_blobs, [TaxonomyRule(kind="v1")], fast_config, plan, bins=10, on_step=steps.append)

    assert [m.method for m in report.metrics] == ["NN", "V1"]
    assert report.test_examples == 4
    assert len(steps) == 4
    assert report.metrics[1].mean_diameter is not None
    assert 0 <= report.row("V1").accuracy <= 1
    assert list(report.to_frame()["method"]) == ["NN", "V1"]


def test_pvalue_far_tail_for_fair_coin():
    probs = np.full(100, 0.5)

    assert two_sided_pvalue(50, probs).p_value == pytest.approx(1.0)
    assert two_sided_pvalue(80, probs).p_value < 1e-8


def test_brier_single_example():
    assert brier_score(np.array([[0.8, 0.2]]), one_hot(np.array([0]), 2)) == pytest.approx(0.08)


def test_reliability_single_bin():
    assert reliability(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]]), 1) == 0.0


def test_uniform_network_accumulates_one_minus_one_over_c():
    c = 4
    curves = OnlineCurves.from_steps(BASELINE, [1, 0, 1, 1, 0], error_probs=[1 - 1 / c] * 5)

    np.testing.assert_allclose(curves.expected, np.arange(1, 6) * (1 - 1 / c))
