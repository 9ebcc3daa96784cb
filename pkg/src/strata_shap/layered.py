"""Layered (size-stratified) Shapley estimation.

Coalitions not containing the queried point are grouped by size ``k``.
Layer ``k`` receives an expected ``m_k = c^2 ln(2n/beta) / (2 alpha^2 k^2)``
samples, so small coalitions dominate and large ones are visited rarely.

Sampling each of the ``w_k = C(n-1, k)`` coalitions independently with
probability ``p_k = m_k / w_k`` is not feasible for large ``w_k``. Instead
``K ~ Poisson(m_k)`` coalitions are drawn uniformly with replacement and the
layer mean is estimated as ``sum v_i(C) / m_k``, which has the same
expectation as ``sum v_i(C) / (p_k w_k)``. Layers with ``m_k >= w_k`` are
enumerated and contribute their exact mean.
"""

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import InvalidIndexError, ShapleyError, ShapleyEstimate, with_member
from .kernels import draw_subsets

SCHEMA = "strata-shap/1"
# layers below this size get exact binomials instead of gammaln estimates
_EXACT_COMB_LIMIT = 1e7


class LayeredEvaluationError(ShapleyError):
    pass


def _check_params(n, alpha, beta, c):
    if int(n) != n or n < 2:
        raise ShapleyError(f"n must be an integer >= 2, got {n}")
    if not alpha > 0:
        raise ShapleyError(f"alpha must be positive, got {alpha}")
    if not 0 < beta < 1:
        raise ShapleyError(f"beta must lie in (0, 1), got {beta}")
    if not c > 0:
        raise ShapleyError(f"c must be positive, got {c}")


@dataclass(frozen=True, eq=False)
class LayerPlan:
    """Per-layer sampling budget for ``k = 1..n-1`` (arrays indexed by ``k - 1``)."""

    n: int
    alpha: float
    beta: float
    c: float
    group_size: int
    k: np.ndarray
    m: np.ndarray
    log_w: np.ndarray
    p: np.ndarray
    exhaustive: np.ndarray

    @property
    def log_factor(self):
        return math.log(2.0 * self.n * self.group_size / self.beta)

    @property
    def sample_bound(self):
        """``c^2 / (2 alpha^2) * ln(2n/beta) * pi^2 / 6``."""
        return self.c**2 / (2.0 * self.alpha**2) * self.log_factor * math.pi**2 / 6.0

    @property
    def expected_coalitions(self):
        """Expected number of coalitions a query draws (exhaustive layers count ``w_k``)."""
        # only exhaustive layers contribute w_k, and those have w_k <= m_k
        return float(np.where(self.exhaustive, np.exp(np.minimum(self.log_w, np.log(self.m))), self.m).sum())

    def mode(self, k):
        return "exhaustive" if self.exhaustive[k - 1] else "poisson"

    def layer_size(self, k):
        return math.comb(self.n - 1, k)

    def rows(self, limit=None):
        ks = self.k if limit is None else self.k[:limit]
        return [
            {
                "k": int(k),
                "m_k": float(self.m[k - 1]),
                "log10_w_k": float(self.log_w[k - 1] / math.log(10.0)),
                "p_k": float(self.p[k - 1]),
                "mode": self.mode(int(k)),
            }
            for k in ks
        ]

    def to_dict(self, limit=None):
        return {
            "n": self.n,
            "alpha": self.alpha,
            "beta": self.beta,
            "c": self.c,
            "group_size": self.group_size,
            "sample_bound": self.sample_bound,
            "expected_coalitions": self.expected_coalitions,
            "layers": self.rows(limit),
        }


def build_plan(n, alpha, beta, c, group_size=1):
    """Budget ``m_k = c^2 ln(2 n w / beta) / (2 alpha^2 k^2)`` for every layer.

    ``group_size`` (``w``) splits the failure probability across the members
    of a group query; it is 1 for a single point.
    """
    _check_params(n, alpha, beta, c)
    n = int(n)
    if group_size < 1:
        raise ShapleyError("group_size must be >= 1")
    k = np.arange(1, n, dtype=np.int64)
    kf = k.astype(np.float64)
    m = c**2 / (2.0 * alpha**2 * kf**2) * math.log(2.0 * n * group_size / beta)
    log_w = gammaln(n) - gammaln(kf + 1.0) - gammaln(n - kf)
    exhaustive = np.log(m) >= log_w - 1e-6
    for j in np.flatnonzero(exhaustive):
        # settle borderline cases with the exact binomial
        if log_w[j] < math.log(_EXACT_COMB_LIMIT):
            exhaustive[j] = m[j] >= math.comb(n - 1, int(k[j]))
    p = np.exp(np.minimum(np.log(m) - log_w, 0.0))
    return LayerPlan(n, float(alpha), float(beta), float(c), int(group_size), k, m, log_w, p, exhaustive)


def data_touch_bound(n, alpha, beta, c):
    """Upper bound on the chance a given other point is read by one query, capped at 1."""
    _check_params(n, alpha, beta, c)
    bound = c**2 * math.log(n) / (2.0 * alpha**2 * n) * math.log(2.0 * n / beta)
    return min(bound, 1.0)


def expected_touch_fraction(plan):
    """Expected share of the other points read by one query under ``plan``.

    A Poisson layer touches a fixed point through ``Poisson(m_k k / (n-1))``
    coalitions; exhaustive layers touch everything.
    """
    if plan.exhaustive.any():
        return 1.0
    rate = float(np.sum(plan.m * plan.k) / (plan.n - 1))
    return 1.0 - math.exp(-rate)


# ---------------------------------------------------------------- sampling


def _rng(seed, *path):
    return np.random.default_rng([int(seed), *[int(p) for p in path]])


def layer_counts(plan, rng):
    """Coalition counts per layer: ``w_k`` for exhaustive layers, ``Poisson(m_k)`` otherwise."""
    counts = np.zeros(plan.n - 1, dtype=np.int64)
    poisson = ~plan.exhaustive
    counts[poisson] = rng.poisson(plan.m[poisson])
    for j in np.flatnonzero(plan.exhaustive):
        counts[j] = plan.layer_size(int(plan.k[j]))
    return counts


def sample_layer(plan, k, i, rng, count=None):
    """Coalitions of size ``k`` drawn from ``N \\ {i}``.

    Exhaustive layers return every coalition in lexicographic order; Poisson
    layers draw ``count`` (default ``Poisson(m_k)``) uniform coalitions.
    """
    n = plan.n
    if not 1 <= k <= n - 1:
        raise ShapleyError(f"layer {k} outside 1..{n - 1}")
    if not 0 <= i < n:
        raise InvalidIndexError(f"point {i} outside [0, {n})")
    if plan.exhaustive[k - 1]:
        others = [j for j in range(n) if j != i]
        return list(itertools.combinations(others, k))
    if count is None:
        count = int(rng.poisson(plan.m[k - 1]))
    if count == 0:
        return []
    pool = draw_subsets(n - 1, k, count, rng)
    pool += pool >= i  # skip the queried point
    pool.sort(axis=1)
    return [tuple(row) for row in pool.tolist()]


@dataclass
class QuerySample:
    """The coalitions drawn for one query; reusable as a core set."""

    point: int
    coalitions: list
    layer: np.ndarray  # k of each coalition
    plan: LayerPlan
    seed: int = None

    def touched(self):
        mask = np.zeros(self.plan.n, dtype=bool)
        for c in self.coalitions:
            mask[list(c)] = True
        mask[self.point] = False
        return np.flatnonzero(mask)

    def to_dict(self):
        layers = {}
        for c, k in zip(self.coalitions, self.layer.tolist()):
            layers.setdefault(k, []).append(list(c))
        return {
            "point": self.point,
            "seed": self.seed,
            "layers": [
                {"k": k, "mode": self.plan.mode(k), "m_k": float(self.plan.m[k - 1]), "coalitions": cs}
                for k, cs in sorted(layers.items())
            ],
        }


def draw_query(plan, i, seed):
    """All coalitions for point ``i``: one sub-seed for counts, one per sampled layer."""
    counts = layer_counts(plan, _rng(seed, i, 0))
    coalitions = []
    layer = []
    for j in np.flatnonzero(counts):
        k = int(plan.k[j])
        drawn = sample_layer(plan, k, i, _rng(seed, i, 1, k), count=int(counts[j]))
        coalitions.extend(drawn)
        layer.extend([k] * len(drawn))
    return QuerySample(int(i), coalitions, np.asarray(layer, dtype=np.int64), plan, seed)


def _combine(plan, sample, gains):
    """``(1/n) sum_k est_k``; exhaustive layers average, Poisson layers divide by ``m_k``."""
    n = plan.n
    sums = np.bincount(sample.layer - 1, weights=gains, minlength=n - 1) if gains.size else np.zeros(n - 1)
    denom = plan.m.copy()
    ex = np.flatnonzero(plan.exhaustive)
    denom[ex] = np.exp(plan.log_w[ex])
    for j in ex:
        if plan.log_w[j] < math.log(_EXACT_COMB_LIMIT):
            denom[j] = plan.layer_size(int(plan.k[j]))
    layer_est = sums / denom
    return float(layer_est.sum() / n), layer_est


def evaluate_queries(v, samples):
    """Evaluate every sampled coalition of several queries in one batch.

    Returns one ``(phi_hat, layer_estimates, n_filtered)`` tuple per query.
    """
    bases, tops, bounds = [], [], [0]
    for s in samples:
        bases.extend(s.coalitions)
        tops.extend(with_member(c, s.point) for c in s.coalitions)
        bounds.append(len(bases))
    values = v.evaluate_many(bases + tops)
    base, top = values[: len(bases)], values[len(bases):]
    gains = top - base
    mask = v.filtered(base)
    gains[mask] = 0.0
    out = []
    for s, lo, hi in zip(samples, bounds[:-1], bounds[1:]):
        phi, layer_est = _combine(s.plan, s, gains[lo:hi])
        out.append((phi, layer_est, int(mask[lo:hi].sum())))
    return out


# ---------------------------------------------------------------- estimators


def _resolve_c(v, c):
    return v.marginal_bound if c is None else float(c)


def layered_estimate_all(v, alpha, beta, c=None, seed=0, points=None, keep_samples=False, group_size=1):
    """Layered estimates for ``points`` (default: every player).

    ``c`` defaults to the value function's declared marginal bound. Each
    point's draws depend only on ``(seed, point)``, so a point's estimate
    does not change with the other points queried alongside it.
    """
    c = _resolve_c(v, c)
    plan = build_plan(v.n, alpha, beta, c, group_size)
    points = np.arange(v.n) if points is None else np.atleast_1d(np.asarray(points, dtype=np.int64))
    for i in points:
        if not 0 <= i < v.n:
            raise InvalidIndexError(f"point {i} outside [0, {v.n})")
    samples = [draw_query(plan, int(i), seed) for i in points]
    before = v.evaluations
    try:
        results = evaluate_queries(v, samples)
    except ShapleyError as exc:
        raise LayeredEvaluationError(f"value function failed on a sampled coalition: {exc}") from exc
    touched = np.zeros(v.n, dtype=bool)
    for s in samples:
        touched[s.touched()] = True
    metadata = {
        "alpha": float(alpha),
        "beta": float(beta),
        "c": c,
        "seed": int(seed),
        "coalitions_sampled": [len(s.coalitions) for s in samples],
        "filtered": [r[2] for r in results],
        "expected_coalitions": plan.expected_coalitions,
        "sample_bound": plan.sample_bound,
        "touch_bound": data_touch_bound(v.n, alpha, beta, c),
        "per_point_touched": [int(s.touched().size) for s in samples],
    }
    est = ShapleyEstimate(
        values=np.array([r[0] for r in results]),
        points=points,
        method="layered",
        evaluations_used=v.evaluations - before,
        points_touched=np.flatnonzero(touched),
        n=v.n,
        metadata=metadata,
    )
    est.layer_estimates = [r[1] for r in results]
    est.samples = samples if keep_samples else None
    est.plan = plan
    return est


def layered_estimate(v, i, alpha, beta, c=None, seed=0, keep_samples=False):
    """Layered estimate of a single point's value."""
    return layered_estimate_all(v, alpha, beta, c, seed, points=[i], keep_samples=keep_samples)


def group_estimate(v, group, alpha, beta, c=None, seed=0):
    """Summed value of ``group``; each member gets failure budget ``beta / w``."""
    group = sorted({int(g) for g in group})
    if not group:
        raise ShapleyError("group must be nonempty")
    if len(group) > v.n:
        raise ShapleyError("group larger than the player set")
    est = layered_estimate_all(v, alpha, beta, c, seed, points=group, group_size=len(group))
    return float(est.values.sum())


# ---------------------------------------------------------------- core sets


def save_samples(path, estimate):
    """Persist the coalitions drawn by a ``keep_samples=True`` estimate as JSON."""
    if getattr(estimate, "samples", None) is None:
        raise ShapleyError("estimate was produced without keep_samples=True")
    plan = estimate.plan
    doc = {
        "schema": SCHEMA,
        "kind": "layered-samples",
        "n": plan.n,
        "alpha": plan.alpha,
        "beta": plan.beta,
        "c": plan.c,
        "group_size": plan.group_size,
        "queries": [s.to_dict() for s in estimate.samples],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_samples(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != SCHEMA or doc.get("kind") != "layered-samples":
        raise ShapleyError(f"{path}: not a layered sample file")
    plan = build_plan(doc["n"], doc["alpha"], doc["beta"], doc["c"], doc.get("group_size", 1))
    samples = []
    for q in doc["queries"]:
        coalitions, layer = [], []
        for entry in q["layers"]:
            for c in entry["coalitions"]:
                coalitions.append(tuple(c))
                layer.append(entry["k"])
        samples.append(QuerySample(q["point"], coalitions, np.asarray(layer, dtype=np.int64), plan, q.get("seed")))
    return samples


def estimate_from_samples(v, samples):
    """Re-answer stored queries with ``v`` without drawing new coalitions."""
    if not samples:
        raise ShapleyError("no stored queries")
    plan = samples[0].plan
    if v.n != plan.n:
        raise ShapleyError(f"samples were drawn for n={plan.n}, value function has n={v.n}")
    before = v.evaluations
    results = evaluate_queries(v, samples)
    touched = np.zeros(v.n, dtype=bool)
    for s in samples:
        touched[s.touched()] = True
    return ShapleyEstimate(
        values=np.array([r[0] for r in results]),
        points=np.array([s.point for s in samples]),
        method="layered",
        evaluations_used=v.evaluations - before,
        points_touched=np.flatnonzero(touched),
        n=v.n,
        metadata={"reused_samples": True, "coalitions_sampled": [len(s.coalitions) for s in samples]},
    )
