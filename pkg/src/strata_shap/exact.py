"""Shapley values by full enumeration of coalitions (small games only)."""

import itertools
import math

import numpy as np

from .core import InvalidIndexError, ShapleyError, ShapleyEstimate, marginal_gains

DEFAULT_CAP = 15


class EnumerationCapError(ShapleyError):
    pass


def _check(v, cap):
    if v.n > cap:
        raise EnumerationCapError(
            f"exact enumeration limited to n <= {cap} (got n={v.n}); "
            "use the monte-carlo or layered estimators instead"
        )


def layer_means(v, i):
    """Mean marginal gain of ``i`` over each coalition size ``0..n-1``.

    Coalitions of a size are visited in lexicographic order and summed with
    ``math.fsum`` so results do not depend on accumulation order.
    """
    others = [j for j in range(v.n) if j != i]
    means = np.empty(v.n)
    for k in range(v.n):
        layer = list(itertools.combinations(others, k))
        gains, _ = marginal_gains(v, layer, i)
        means[k] = math.fsum(gains) / len(layer)
    return means


def exact_value(v, i, cap=DEFAULT_CAP):
    """``phi_i = (1/n) sum_k mean_{|C|=k, i not in C} v_i(C)``."""
    _check(v, cap)
    if not 0 <= i < v.n:
        raise InvalidIndexError(f"point {i} outside [0, {v.n})")
    return math.fsum(layer_means(v, i)) / v.n


def exact_all(v, cap=DEFAULT_CAP):
    """Exact values of every player; coalition values are shared through the cache."""
    _check(v, cap)
    before = v.evaluations
    values = np.array([math.fsum(layer_means(v, i)) / v.n for i in range(v.n)])
    return ShapleyEstimate(
        values=values,
        points=np.arange(v.n),
        method="exact",
        evaluations_used=v.evaluations - before,
        points_touched=np.arange(v.n),
        n=v.n,
    )


def permutation_shapley(v):
    """Independent oracle: average marginal over all ``n!`` orderings."""
    n = v.n
    totals = np.zeros(n)
    count = 0
    for perm in itertools.permutations(range(n)):
        prefix = ()
        prev = v.evaluate(())
        for p in perm:
            prefix = tuple(sorted(prefix + (p,)))
            cur = v.evaluate(prefix)
            totals[p] += cur - prev
            prev = cur
        count += 1
    return totals / count
