import math

import numpy as np
import pytest

from strata_shap.core import InvalidIndexError, ShapleyError
from strata_shap.exact import exact_all
from strata_shap.games import AdditiveGame, GloveGame, MeanGame, TabularGame
from strata_shap.monte_carlo import mc_estimate, mc_estimate_all, mc_sample_size


def test_sample_size_examples():
    assert mc_sample_size(0.05, 0.05, 1.0) == 738
    assert mc_sample_size(1.0, 2 / math.e**2, 1.0) == 1
    # c = 2 scales the unrounded size by 4: 4 * 737.78 = 2951.1, so 2952 after the ceiling
    raw = 4 * math.log(40) / (2 * 0.05**2)
    assert mc_sample_size(0.05, 0.05, 2.0) == math.ceil(raw) == 2952


@pytest.mark.parametrize("args", [(0, 0.1, 1), (0.1, 0, 1), (0.1, 1, 1), (0.1, 0.1, -1)])
def test_sample_size_domain(args):
    with pytest.raises(ShapleyError):
        mc_sample_size(*args)


@pytest.mark.parametrize("m", [1, 7, 100])
def test_additive_is_exact(m):
    v = AdditiveGame(9)
    assert mc_estimate(v, 4, m, seed=m).value == 1.0
    assert np.all(mc_estimate_all(v, m, seed=m).values == 1.0)


def test_glove_converges():
    est = mc_estimate(GloveGame(3, left={0}), 0, 10_000, seed=0)
    assert abs(est.value - 2 / 3) < 0.02


def test_all_points_unbiased_on_random_game():
    v = TabularGame.random(5, seed=8)
    exact = exact_all(v).values
    est = mc_estimate_all(v, 4000, seed=1).values
    # four-sigma band; per-permutation gains have sd at most 2 max|v|
    tol = 4 * 2 * np.abs(v.table).max() / math.sqrt(4000)
    assert np.all(np.abs(est - exact) < tol)
    # efficiency holds per permutation, hence exactly for the average
    assert est.sum() == pytest.approx(v.table[-1] - v.table[0], abs=1e-10)


def test_touches_almost_everything():
    fractions = [mc_estimate(MeanGame(100), i, 100, seed=i).touched_fraction for i in range(5)]
    assert min(fractions) >= 0.95


def test_deterministic_and_instrumented():
    v = MeanGame(30, cache=True)
    a = mc_estimate(v, 2, 50, seed=3)
    b = mc_estimate(MeanGame(30, cache=True), 2, 50, seed=3)
    assert a.value == b.value
    assert a.method == "monte-carlo" and a.metadata["permutations"] == 50
    assert 0 < a.evaluations_used <= 100


def test_errors():
    with pytest.raises(ShapleyError):
        mc_estimate(AdditiveGame(3), 0, 0)
    with pytest.raises(InvalidIndexError):
        mc_estimate(AdditiveGame(3), 3, 5)
