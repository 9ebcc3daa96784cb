"""Closed-form and synthetic games used as oracles and cheap test loads."""

import itertools

import numpy as np

from .core import ValueFunction


class AdditiveGame(ValueFunction):
    """``v(C) = sum of per-player weights`` (unit weights give ``|C|``)."""

    value_kind = "additive"

    def __init__(self, n, weights=None, **kwargs):
        self.weights = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        scale = float(np.max(np.abs(self.weights))) if n else 1.0
        super().__init__(n, max(n - 1, 1) * max(scale, 1e-12), **kwargs)

    def _value(self, coalition):
        return float(self.weights[list(coalition)].sum()) if coalition else 0.0


class GloveGame(ValueFunction):
    """Value is the number of matched left/right pairs in the coalition."""

    value_kind = "glove"

    def __init__(self, n, left, **kwargs):
        self.left = frozenset(int(p) for p in left)
        super().__init__(n, max(n - 1, 1), **kwargs)

    def _value(self, coalition):
        lefts = sum(1 for p in coalition if p in self.left)
        return float(min(lefts, len(coalition) - lefts))


class UnanimityGame(ValueFunction):
    """``v(C) = 1`` iff the carrier (default: everyone) is inside ``C``."""

    value_kind = "unanimity"

    def __init__(self, n, carrier=None, **kwargs):
        self.carrier = frozenset(range(n) if carrier is None else carrier)
        super().__init__(n, max(n - 1, 1), **kwargs)

    def _value(self, coalition):
        return 1.0 if self.carrier <= set(coalition) else 0.0


class TabularGame(ValueFunction):
    """Arbitrary game stored as one value per bitmask (bit ``j`` = player ``j``)."""

    value_kind = "tabular"

    def __init__(self, n, table, **kwargs):
        self.table = np.asarray(table, dtype=np.float64)
        if self.table.shape != (1 << n,):
            raise ValueError(f"table needs 2**{n} entries")
        super().__init__(n, max(self.tight_bound(), 1e-12), **kwargs)

    def tight_bound(self):
        """Smallest ``c`` with ``|v(C+i) - v(C)| <= c/|C|`` over nonempty ``C``."""
        n = len(self.table).bit_length() - 1
        masks = np.arange(1, 1 << n)
        sizes = np.array([bin(m).count("1") for m in masks])
        best = 0.0
        for i in range(n):
            out = masks[(masks >> i) & 1 == 0]
            gains = np.abs(self.table[out | 1 << i] - self.table[out])
            if gains.size:
                best = max(best, float(np.max(sizes[out - 1] * gains)))
        return best

    def _value(self, coalition):
        mask = 0
        for p in coalition:
            mask |= 1 << p
        return float(self.table[mask])

    def combine(self, other, a=1.0, b=1.0):
        return TabularGame(self.n, a * self.table + b * other.table)

    @classmethod
    def random(cls, n, seed, null_players=(), symmetric_pair=None):
        """Random table; optional null players and a pair of symmetric players."""
        rng = np.random.default_rng(seed)
        table = rng.normal(size=1 << n)
        table[0] = rng.normal()
        null = list(null_players)
        if null:
            # copy each value from the same mask with null players removed
            strip = ~sum(1 << j for j in null)
            table = table[np.arange(1 << n) & strip]
        if symmetric_pair is not None:
            a, b = symmetric_pair
            masks = np.arange(1 << n)
            has_a = (masks >> a) & 1
            has_b = (masks >> b) & 1
            swapped = masks ^ ((has_a ^ has_b) * ((1 << a) | (1 << b)))
            table = np.minimum(table, table[swapped])
        return cls(n, table)


class BoundedRandomGame(ValueFunction):
    """Random non-additive game whose marginals obey ``|v_i(C)| <= 1/(|C|+1)``.

    ``v(C) = (mean_{j in C} a_j + max_{j in C} b_j / |C|) / 2`` with
    ``a, b ~ U[0, 1]`` and ``v(∅) = 0``, so ``c = 1``.
    """

    value_kind = "bounded-random"

    def __init__(self, n, seed, **kwargs):
        rng = np.random.default_rng(seed)
        self.a = rng.random(n)
        self.b = rng.random(n)
        super().__init__(n, 1.0, **kwargs)

    def _value(self, coalition):
        if not coalition:
            return 0.0
        idx = list(coalition)
        k = len(idx)
        return 0.5 * (self.a[idx].mean() + self.b[idx].max() / k)


class MeanGame(ValueFunction):
    """``v(C)`` = mean weight over ``C`` (0 when empty); ``c = 1`` for weights in [0, 1].

    Cheap enough for large-n data-access measurements; caching is off by
    default because coalitions there rarely repeat.
    """

    value_kind = "mean"

    def __init__(self, n, seed=0, cache=False, **kwargs):
        self.weights = np.random.default_rng(seed).random(n)
        super().__init__(n, 1.0, cache=cache, **kwargs)

    def _value(self, coalition):
        if not coalition:
            return 0.0
        return float(self.weights[np.fromiter(coalition, np.int64, len(coalition))].mean())


def all_coalitions(players, k):
    """Lexicographic size-``k`` coalitions of ``players`` (sorted input)."""
    return list(itertools.combinations(players, k))
