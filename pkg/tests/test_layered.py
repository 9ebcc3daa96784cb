import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strata_shap.core import InvalidIndexError, ShapleyError
from strata_shap.exact import exact_all, exact_value, layer_means
from strata_shap.experiments import gen_synthetic
from strata_shap.games import AdditiveGame, BoundedRandomGame, GloveGame, MeanGame, TabularGame
from strata_shap.layered import (
    LayeredEvaluationError,
    _rng,
    build_plan,
    data_touch_bound,
    draw_query,
    estimate_from_samples,
    evaluate_queries,
    expected_touch_fraction,
    group_estimate,
    layer_counts,
    layered_estimate,
    layered_estimate_all,
    load_samples,
    sample_layer,
    save_samples,
)
from strata_shap.models import LogisticValue


# ---------------------------------------------------------------- plan


def test_plan_reference_values():
    plan = build_plan(100, 0.05, 0.05, 1.0)
    assert plan.m[0] == pytest.approx(200 * math.log(4000), rel=1e-12)
    assert plan.m[0] == pytest.approx(1658.8, abs=0.05)
    assert plan.m[9] == pytest.approx(16.588, abs=1e-3)
    assert plan.mode(1) == "exhaustive" and plan.layer_size(1) == 99
    assert plan.mode(2) == "poisson"
    assert plan.m.sum() <= plan.sample_bound
    assert plan.sample_bound == pytest.approx(200 * math.log(4000) * math.pi**2 / 6, rel=1e-12)
    assert plan.sample_bound == pytest.approx(2728.8, abs=0.5)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(2, 60),
    st.floats(0.01, 2.0),
    st.floats(0.001, 0.9),
    st.floats(0.1, 5.0),
)
def test_plan_invariants(n, alpha, beta, c):
    plan = build_plan(n, alpha, beta, c)
    k = np.arange(1, n)
    expected = c**2 / (2 * alpha**2 * k**2) * math.log(2 * n / beta)
    assert np.allclose(plan.m, expected, rtol=1e-12, atol=0)
    w = np.array([math.comb(n - 1, int(j)) for j in k], dtype=float)
    assert np.array_equal(plan.exhaustive, plan.m >= w)
    assert np.allclose(plan.p, np.minimum(plan.m / w, 1.0), rtol=1e-9)
    assert plan.m.sum() <= plan.sample_bound


@pytest.mark.parametrize("args", [(1, 0.1, 0.1, 1), (5, 0, 0.1, 1), (5, 0.1, 1.0, 1), (5, 0.1, 0.1, 0), (2.5, 0.1, 0.1, 1)])
def test_plan_domain(args):
    with pytest.raises(ShapleyError):
        build_plan(*args)


def test_plan_to_dict_is_plain():
    doc = build_plan(10, 0.1, 0.1, 1.0).to_dict(limit=3)
    assert len(doc["layers"]) == 3 and doc["layers"][0]["mode"] == "exhaustive"


# ---------------------------------------------------------------- sampling


def test_exhaustive_layer_lists_every_coalition():
    plan = build_plan(8, 0.05, 0.05, 1.0)
    drawn = sample_layer(plan, 3, 2, np.random.default_rng(0))
    assert len(drawn) == len(set(drawn)) == math.comb(7, 3)
    assert all(2 not in c for c in drawn)


def test_poisson_layer_never_contains_point():
    plan = build_plan(50, 0.3, 0.1, 1.0)
    rng = np.random.default_rng(1)
    for i in (0, 17, 49):
        drawn = sample_layer(plan, 10, i, rng, count=300)
        assert all(i not in c and len(set(c)) == 10 and list(c) == sorted(c) for c in drawn)


def _alpha_for(m_target, n, k, beta=0.05, c=1.0):
    return c * math.sqrt(math.log(2 * n / beta) / (2 * m_target * k**2))


def test_tiny_budget_layer_is_usually_empty():
    n, k = 60, 30
    plan = build_plan(n, _alpha_for(0.01, n, k), 0.05, 1.0)
    assert plan.m[k - 1] == pytest.approx(0.01, rel=1e-9) and plan.mode(k) == "poisson"
    empty = sum(not sample_layer(plan, k, 0, _rng(s, 9)) for s in range(10_000))
    p = math.exp(-0.01)
    assert abs(empty / 10_000 - p) < 4 * math.sqrt(p * (1 - p) / 10_000)


def test_middle_layer_nonempty_rate():
    # m_50 at n=100, alpha=beta=0.05, c=1 is 1658.8 / 2500 = 0.6635
    plan = build_plan(100, 0.05, 0.05, 1.0)
    m50 = 200 * math.log(4000) / 2500
    assert plan.m[49] == pytest.approx(m50, rel=1e-12)
    hits = sum(bool(sample_layer(plan, 50, 0, _rng(s, 9))) for s in range(10_000))
    q = 1 - math.exp(-m50)
    assert abs(hits / 10_000 - q) < 4 * math.sqrt(q * (1 - q) / 10_000)


def test_negligible_layers_stay_unsampled():
    plan = build_plan(100, 50.0, 0.05, 1.0)
    tiny = plan.m < 1e-6
    assert tiny.sum() > 0 and plan.m[tiny].sum() < 1e-4
    hits = sum(bool(layer_counts(plan, _rng(s, 0, 0))[tiny].any()) for s in range(100_000))
    assert hits / 100_000 < 1e-4


def test_layer_counts_respect_modes():
    plan = build_plan(12, 0.2, 0.1, 1.0)
    counts = layer_counts(plan, np.random.default_rng(0))
    for j in np.flatnonzero(plan.exhaustive):
        assert counts[j] == math.comb(11, j + 1)


# ---------------------------------------------------------------- estimation


def test_glove_all_exhaustive_is_exact():
    est = layered_estimate_all(GloveGame(3, left={0}), 0.05, 0.05, 1.0)
    assert est.plan.exhaustive.all()
    assert np.allclose(est.values, [2 / 3, 1 / 6, 1 / 6], atol=1e-15)


def test_exhaustive_plan_equals_exact_minus_empty_layer():
    v = TabularGame.random(6, seed=5)
    est = layered_estimate_all(v, 0.01, 0.05, 1.0)
    for i in range(6):
        means = layer_means(v, i)
        assert est.values[i] == pytest.approx(means[1:].sum() / 6, abs=1e-12)


def test_additive_within_alpha():
    # unit marginals need the game's own c = n - 1; the skipped empty layer costs 1/n
    n, alpha, beta = 20, 0.2, 0.1
    v = AdditiveGame(n, cache=False)
    assert v.marginal_bound == n - 1
    ok = [abs(layered_estimate(v, s % n, alpha, beta, seed=s).value - 1) <= alpha for s in range(40)]
    assert np.mean(ok) >= 1 - beta


def test_layer_estimates_unbiased():
    v = TabularGame.random(7, seed=11)
    i = 3
    plan = build_plan(7, 3.0, 0.2, 1.0)
    assert (~plan.exhaustive).sum() >= 4
    truth = layer_means(v, i)[1:]
    runs = 6000
    samples = [draw_query(plan, i, s) for s in range(runs)]
    layer_est = np.array([r[1] for r in evaluate_queries(v, samples)])
    mean, sd = layer_est.mean(axis=0), layer_est.std(axis=0)
    assert np.all(np.abs(mean - truth) <= 4.5 * sd / math.sqrt(runs) + 1e-12)


def test_logistic_game_against_oracle():
    data = gen_synthetic(72, 3, seed=4)
    v = LogisticValue(data.subset(range(12)), 0.05, data.subset(range(12, 72)))
    exact = exact_all(v).values
    ok = 0
    for s in range(200):
        i = s % 12
        ok += abs(layered_estimate(v, i, 0.2, 0.1, 1.0, seed=s).value - exact[i]) < 0.2
    assert ok / 200 >= 0.9


def test_point_draws_independent_of_batch():
    v = BoundedRandomGame(15, seed=0)
    together = layered_estimate_all(v, 0.3, 0.1, 1.0, seed=4)
    alone = layered_estimate(v, 6, 0.3, 0.1, 1.0, seed=4)
    assert together.values[6] == alone.value


def test_instrumentation():
    v = MeanGame(40, cache=True)
    est = layered_estimate(v, 5, 0.3, 0.1, 1.0, seed=2)
    assert est.method == "layered"
    assert 5 not in est.points_touched
    assert est.metadata["coalitions_sampled"][0] > 0
    assert est.evaluations_used == v.evaluations
    assert est.metadata["touch_bound"] == data_touch_bound(40, 0.3, 0.1, 1.0)


def test_invalid_point():
    with pytest.raises(InvalidIndexError):
        layered_estimate(MeanGame(5), 5, 0.3, 0.1, 1.0)


def test_value_function_failure_is_wrapped():
    data = gen_synthetic(30, 3, seed=1)
    v = LogisticValue(data.subset(range(10)), 1e-4, data.subset(range(10, 30)), tol=1e-15, max_iter=1)
    with pytest.raises(LayeredEvaluationError) as info:
        layered_estimate(v, 0, 0.3, 0.1, 1.0)
    assert "did not converge" in str(info.value)


def test_default_c_comes_from_value_function():
    v = BoundedRandomGame(8, seed=1)
    assert layered_estimate(v, 0, 0.3, 0.1).metadata["c"] == v.marginal_bound == 1.0


# ---------------------------------------------------------------- data touch


def test_touch_bound_examples():
    assert data_touch_bound(10**6, 0.05, 0.05, 1.0) == pytest.approx(
        math.log(1e6) / 5000 * math.log(2e6 / 0.05), rel=1e-12
    )
    assert data_touch_bound(10**6, 0.05, 0.05, 1.0) == pytest.approx(0.0484, abs=1e-4)
    raw = 200 * math.log(100) / 100 * math.log(4000)
    assert raw == pytest.approx(76.4, abs=0.05)
    assert data_touch_bound(100, 0.05, 0.05, 1.0) == 1.0
    assert data_touch_bound(1000, 1e9, 0.05, 1.0) < 1e-15


def test_expected_touch_fraction_matches_simulation():
    plan = build_plan(3000, 0.3, 0.05, 1.0)
    assert not plan.exhaustive.any()
    fractions = [draw_query(plan, 0, s).touched().size / 2999 for s in range(400)]
    sd = np.std(fractions) / math.sqrt(400)
    assert abs(np.mean(fractions) - expected_touch_fraction(plan)) < 4 * sd


# ---------------------------------------------------------------- groups


def test_group_of_everyone_additive():
    n, alpha = 40, 0.05
    total = group_estimate(AdditiveGame(n), range(n), alpha, 0.05, 1.0, seed=1)
    assert abs(total - n) <= n * alpha


def test_singleton_group_equals_single_query():
    v = BoundedRandomGame(20, seed=2)
    assert group_estimate(v, [7], 0.2, 0.1, 1.0, seed=3) == layered_estimate(v, 7, 0.2, 0.1, 1.0, seed=3).value


def test_group_against_oracle():
    alpha, beta = 0.2, 0.1
    ok = 0
    for s in range(200):
        v = BoundedRandomGame(10, seed=1000 + s)
        group = [s % 10, (s + 3) % 10, (s + 7) % 10]
        truth = sum(exact_value(v, i) for i in group)
        ok += abs(group_estimate(v, group, alpha, beta, 1.0, seed=s) - truth) < 3 * alpha
    assert ok / 200 >= 1 - beta


def test_group_plan_uses_group_size():
    est = layered_estimate_all(MeanGame(30), 0.2, 0.1, 1.0, points=[1, 2, 3], group_size=3)
    assert est.plan.m[0] == pytest.approx(1 / (2 * 0.04) * math.log(2 * 30 * 3 / 0.1))
    with pytest.raises(ShapleyError):
        group_estimate(MeanGame(5), [], 0.2, 0.1)


# ---------------------------------------------------------------- core sets


def test_core_set_round_trip(tmp_path):
    v = BoundedRandomGame(25, seed=3)
    est = layered_estimate_all(v, 0.3, 0.1, 1.0, seed=5, points=[1, 4], keep_samples=True)
    path = tmp_path / "core.json"
    save_samples(path, est)
    samples = load_samples(path)
    again = estimate_from_samples(BoundedRandomGame(25, seed=3), samples)
    assert np.array_equal(again.values, est.values)
    other = estimate_from_samples(BoundedRandomGame(25, seed=4), samples)
    assert not np.array_equal(other.values, est.values)
    with pytest.raises(ShapleyError):
        estimate_from_samples(BoundedRandomGame(24, seed=3), samples)


def test_save_requires_samples(tmp_path):
    est = layered_estimate(MeanGame(5), 0, 0.3, 0.1, 1.0)
    with pytest.raises(ShapleyError):
        save_samples(tmp_path / "x.json", est)
