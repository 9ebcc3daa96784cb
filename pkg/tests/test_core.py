import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strata_shap.core import (
    Dataset,
    DatasetError,
    IndexInCoalitionError,
    InvalidIndexError,
    ShapleyError,
    ShapleyEstimate,
    make_coalition,
    marginal_gain,
    marginal_gains,
    with_member,
)
from strata_shap.games import AdditiveGame, BoundedRandomGame, MeanGame, TabularGame, UnanimityGame
from strata_shap.models import ThresholdERMValue


# ---------------------------------------------------------------- Dataset


def test_dataset_rejects_bad_labels_and_values():
    with pytest.raises(DatasetError):
        Dataset(np.zeros((3, 2)), [0, 1, 2])
    with pytest.raises(DatasetError):
        Dataset([[0.0], [np.nan]], [0, 1])
    with pytest.raises(DatasetError):
        Dataset(np.zeros((3, 2)), [0, 1])


def test_dataset_is_read_only():
    data = Dataset(np.eye(3), [0, 1, 0])
    with pytest.raises(ValueError):
        data.X[0, 0] = 5.0


def test_normalized_lands_in_unit_cube():
    rng = np.random.default_rng(0)
    data = Dataset(rng.normal(size=(50, 4)) * 10, rng.integers(0, 2, 50)).normalized()
    assert data.X.min() >= 0.0 and data.X.max() <= 1.0
    assert np.allclose(data.X.min(axis=0), 0.0) and np.allclose(data.X.max(axis=0), 1.0)


def test_normalized_with_training_extremes_clips():
    data = Dataset([[0.0], [5.0], [-5.0]], [0, 1, 0])
    out = data.normalized(lo=[0.0], hi=[1.0])
    assert out.X[:, 0].tolist() == [0.0, 1.0, 0.0]


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    data = Dataset(rng.random((7, 3)), rng.integers(0, 2, 7))
    for header in (False, True):
        path = tmp_path / f"d{header}.csv"
        data.to_csv(path, header=header)
        back = Dataset.from_csv(path, header=header)
        assert np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y)


@pytest.mark.parametrize(
    "text",
    ["", "1,2,0\n3,1\n", "1,a,0\n", "0.5,0.7\n0.1,2\n", "5\n6\n"],
)
def test_csv_malformed(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DatasetError):
        Dataset.from_csv(path)


# ---------------------------------------------------------------- coalitions


def test_make_coalition_validates():
    assert make_coalition([3, 1], 5) == (1, 3)
    with pytest.raises(ShapleyError):
        make_coalition([1, 1], 5)
    with pytest.raises(InvalidIndexError):
        make_coalition([5], 5)
    with pytest.raises(InvalidIndexError):
        make_coalition([-1], 5)


@given(st.sets(st.integers(0, 40)), st.integers(0, 40))
def test_with_member_keeps_canonical_form(members, i):
    members.discard(i)
    c = tuple(sorted(members))
    out = with_member(c, i)
    assert out == tuple(sorted(members | {i}))


# ---------------------------------------------------------------- marginal gains


def test_additive_marginal_is_one():
    assert marginal_gain(AdditiveGame(3), (1, 2), 0) == 1.0


def test_unanimity_completing_grand_coalition():
    assert marginal_gain(UnanimityGame(3), (1, 2), 0) == 1.0
    assert marginal_gain(UnanimityGame(3), (1,), 0) == 0.0


def test_erm01_toy_marginal_within_half():
    data = Dataset([[0.1], [0.2], [0.8], [0.9]], [0, 0, 1, 1])
    v = ThresholdERMValue(data)
    for C in itertools.combinations(range(4), 2):
        for i in set(range(4)) - set(C):
            assert abs(marginal_gain(v, C, i)) <= 0.5


def test_marginal_gain_errors():
    v = AdditiveGame(4)
    with pytest.raises(IndexInCoalitionError):
        marginal_gain(v, (0, 1), 1)
    with pytest.raises(InvalidIndexError):
        marginal_gain(v, (0,), 4)


def test_cache_counters():
    v = MeanGame(5, cache=True)
    v.evaluate_many([(0,), (0,), (1, 2)])
    assert (v.requests, v.evaluations, v.hits) == (3, 2, 1)
    v.evaluate((2, 1))
    assert (v.requests, v.evaluations, v.hits) == (4, 2, 2)
    v.reset_counters()
    assert v.requests == v.evaluations == v.hits == 0


def test_uncached_counts_every_request():
    v = MeanGame(5)
    v.evaluate_many([(0,), (0,)])
    assert v.evaluations == 2 and v.hits == 0


def test_baseline_filter_zeroes_gains():
    v = AdditiveGame(4, weights=[1.0, -3.0, 2.0, 5.0], baseline_filter=0.0)
    gains, n_filtered = marginal_gains(v, [(1,), (2,), ()], 0)
    assert gains.tolist() == [0.0, 1.0, 1.0]
    assert n_filtered == 1
    assert marginal_gain(v, (1,), 0) == 0.0


@pytest.mark.parametrize(
    "game",
    [
        BoundedRandomGame(7, seed=3),
        TabularGame.random(6, seed=4),
        ThresholdERMValue(Dataset(np.round(np.random.default_rng(5).random((7, 1)), 1), [0, 1, 1, 0, 1, 0, 0])),
    ],
)
def test_declared_marginal_bound_holds(game):
    n = game.n
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for k in range(1, n):
            coalitions = list(itertools.combinations(others, k))
            gains, _ = marginal_gains(game, coalitions, i)
            assert np.all(np.abs(gains) <= game.marginal_bound / k + 1e-12)


# ---------------------------------------------------------------- estimates


def test_estimate_validation():
    with pytest.raises(ShapleyError):
        ShapleyEstimate([1.0], [0], "magic", n=2)
    with pytest.raises(ShapleyError):
        ShapleyEstimate([1.0], [0], "exact", evaluations_used=-1, n=2)
    with pytest.raises(ShapleyError):
        ShapleyEstimate([1.0], [0], "exact", points_touched=[2], n=2)


def test_estimate_touched_fraction_and_json():
    est = ShapleyEstimate([0.5], [0], "layered", 3, points_touched=[1, 2], n=5, metadata={"a": np.float64(1.5)})
    assert est.value == 0.5
    assert est.touched_fraction == 0.5
    doc = json.loads(json.dumps(est.to_dict()))
    assert doc["metadata"]["a"] == 1.5 and doc["points_touched"] == 2
    many = ShapleyEstimate([0.5, 0.1], [0, 1], "layered", n=5)
    with pytest.raises(ShapleyError):
        many.value
