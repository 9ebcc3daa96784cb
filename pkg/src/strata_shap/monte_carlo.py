"""Permutation-sampling Shapley baseline."""

import math

import numpy as np

from .core import InvalidIndexError, ShapleyError, ShapleyEstimate, marginal_gains

_CHUNK = 64


def mc_sample_size(alpha, beta, c):
    """Permutations needed for an (alpha, beta) guarantee when ``|v_i| <= c``."""
    if not alpha > 0 or not c > 0:
        raise ShapleyError("alpha and c must be positive")
    if not 0 < beta < 1:
        raise ShapleyError("beta must lie in (0, 1)")
    raw = math.log(2.0 / beta) * c**2 / (2.0 * alpha**2)
    # absorb rounding noise such as 1.0000000000000002
    return max(1, math.ceil(raw - 1e-9 * raw))


def mc_estimate(v, i, m, seed=0):
    """Average marginal gain of ``i`` over its predecessors in ``m`` random orders."""
    if m < 1:
        raise ShapleyError("need at least one permutation")
    if not 0 <= i < v.n:
        raise InvalidIndexError(f"point {i} outside [0, {v.n})")
    rng = np.random.default_rng([int(seed), int(i)])
    touched = np.zeros(v.n, dtype=bool)
    before = v.evaluations
    total = 0.0
    filtered = 0
    for start in range(0, m, _CHUNK):
        coalitions = []
        for _ in range(min(_CHUNK, m - start)):
            perm = rng.permutation(v.n)
            prefix = np.sort(perm[: int(np.flatnonzero(perm == i)[0])])
            touched[prefix] = True
            coalitions.append(tuple(prefix.tolist()))
        gains, nf = marginal_gains(v, coalitions, i)
        total += float(np.sum(gains))
        filtered += nf
    return ShapleyEstimate(
        values=[total / m],
        points=[i],
        method="monte-carlo",
        evaluations_used=v.evaluations - before,
        points_touched=np.flatnonzero(touched),
        n=v.n,
        metadata={"permutations": int(m), "seed": int(seed), "filtered": filtered},
    )


def mc_estimate_all(v, m, seed=0):
    """Every player's value from the same ``m`` permutations (one prefix chain each)."""
    if m < 1:
        raise ShapleyError("need at least one permutation")
    rng = np.random.default_rng([int(seed), v.n])
    totals = np.zeros(v.n)
    before = v.evaluations
    for _ in range(m):
        perm = rng.permutation(v.n)
        chain = [tuple(sorted(perm[:j].tolist())) for j in range(v.n + 1)]
        values = v.evaluate_many(chain)
        gains = np.diff(values)
        gains[v.filtered(values[:-1])] = 0.0
        totals[perm] += gains
    return ShapleyEstimate(
        values=totals / m,
        points=np.arange(v.n),
        method="monte-carlo",
        evaluations_used=v.evaluations - before,
        points_touched=np.arange(v.n),
        n=v.n,
        metadata={"permutations": int(m), "seed": int(seed)},
    )
