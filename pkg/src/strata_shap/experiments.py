"""Synthetic-data valuation experiments: removal curves, rank agreement, data access."""

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .core import Dataset, ShapleyError
from .dp import PrivacyParams, private_layered_all
from .games import MeanGame
from .layered import build_plan, data_touch_bound, expected_touch_fraction, layered_estimate_all
from .models import LOG2, LogisticValue, heldout_accuracy, train_logreg
from .monte_carlo import mc_estimate, mc_estimate_all, mc_sample_size

DEFAULT_FRACTIONS = tuple(round(0.05 * j, 2) for j in range(11))
ORDERS = ("highest-first", "lowest-first", "random")


@dataclass
class ExperimentConfig:
    """Defaults match the reference protocol: eps=1, alpha=beta=0.05, lambda=1, |D|=100.

    ``lam_convention`` says how ``lam`` is read. ``"mean"`` passes it straight
    to the trainer (``mean loss + lam ||w||^2``). ``"sklearn"`` treats it as
    an inverse ``C`` for a summed loss, i.e. ``lam / (2 n_train)`` in the
    trainer's units.
    """

    n_train: int = 100
    n_heldout: int = 500
    n_test: int = 1000
    d: int = 50
    label_noise: float = 0.1
    alpha: float = 0.05
    beta: float = 0.05
    c: float = 1.0
    epsilon: float = 1.0
    lam: float = 1.0
    lam_convention: str = "sklearn"
    baseline_filter: bool = True
    runs: int = 5
    random_orders: int = 5
    fractions: tuple = DEFAULT_FRACTIONS
    method: str = "layered"
    seed: int = 0

    def __post_init__(self):
        if self.lam_convention not in ("mean", "sklearn"):
            raise ShapleyError(f"unknown lambda convention {self.lam_convention!r}")
        if self.method not in ("layered", "layered-private", "mc"):
            raise ShapleyError(f"unknown method {self.method!r}")
        self.fractions = tuple(float(f) for f in self.fractions)

    @property
    def effective_lam(self):
        if self.lam_convention == "sklearn":
            return self.lam / (2.0 * self.n_train)
        return self.lam


# ---------------------------------------------------------------- data


def gen_synthetic(n, d=50, seed=0, noise=0.1, rule_seed=None):
    """Gaussian features, labels from a random hyperplane with ``noise`` flips, scaled to [0, 1]."""
    if n < 2 or d < 1:
        raise ShapleyError("need n >= 2 and d >= 1")
    rng = np.random.default_rng([int(seed), 0])
    rule = np.random.default_rng([int(seed if rule_seed is None else rule_seed), 1]).normal(size=d)
    X = rng.normal(size=(n, d))
    y = (X @ rule > 0).astype(np.int64)
    flip = rng.random(n) < noise
    y[flip] = 1 - y[flip]
    return Dataset(X, y).normalized()


def synthetic_splits(cfg, seed):
    """Train/heldout/test splits sharing one labelling rule and one scaling."""
    total = cfg.n_train + cfg.n_heldout + cfg.n_test
    data = gen_synthetic(total, cfg.d, seed, cfg.label_noise)
    a, b = cfg.n_train, cfg.n_train + cfg.n_heldout
    return data.subset(range(a)), data.subset(range(a, b)), data.subset(range(b, total))


# ---------------------------------------------------------------- rank statistics


def spearman(a, b):
    """Pearson correlation of average ranks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapleyError("spearman needs two vectors of equal length")
    if a.size < 2:
        raise ShapleyError("spearman needs at least two observations")
    ra, rb = rankdata(a), rankdata(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if denom == 0.0:
        raise ShapleyError("correlation undefined for a constant vector")
    return float(np.clip(ra @ rb / denom, -1.0, 1.0))


# ---------------------------------------------------------------- removal curves


@dataclass
class RemovalCurve:
    order: str
    fractions: np.ndarray
    accuracies: np.ndarray
    method: str
    seed: int = 0

    def __post_init__(self):
        self.fractions = np.asarray(self.fractions, dtype=np.float64)
        self.accuracies = np.asarray(self.accuracies, dtype=np.float64)
        if self.order not in ORDERS:
            raise ShapleyError(f"unknown removal order {self.order!r}")
        if self.fractions.shape != self.accuracies.shape:
            raise ShapleyError("fractions and accuracies differ in length")
        if self.fractions[0] != 0.0 or np.any(np.diff(self.fractions) <= 0):
            raise ShapleyError("fractions must start at 0 and increase strictly")
        if np.any((self.accuracies < 0) | (self.accuracies > 1)):
            raise ShapleyError("accuracies must lie in [0, 1]")

    def at(self, fraction):
        j = int(np.flatnonzero(np.isclose(self.fractions, fraction))[0])
        return float(self.accuracies[j])

    def rows(self):
        return [
            {"fraction": float(f), "accuracy": float(a), "method": self.method, "order": self.order, "seed": self.seed}
            for f, a in zip(self.fractions, self.accuracies)
        ]


def removal_order(values, order, seed=0):
    """Indices in removal order; ties break toward the lower index."""
    values = np.asarray(values, dtype=np.float64)
    if order == "highest-first":
        return np.lexsort((np.arange(values.size), -values))
    if order == "lowest-first":
        return np.lexsort((np.arange(values.size), values))
    if order == "random":
        return np.random.default_rng([int(seed), 7]).permutation(values.size)
    raise ShapleyError(f"unknown removal order {order!r}")


def removal_curve(values, train, test, order, lam, fractions=DEFAULT_FRACTIONS, seed=0, method="layered"):
    """Test accuracy after dropping growing prefixes of the ranked points and retraining."""
    values = np.asarray(values, dtype=np.float64)
    if values.size != train.n:
        raise ShapleyError(f"{values.size} values for {train.n} training points")
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.size < 2:
        raise ShapleyError("a removal curve needs at least two steps")
    ranked = removal_order(values, order, seed)
    accs = []
    for f in fractions:
        cut = int(round(f * train.n))
        if cut >= train.n:
            raise ShapleyError("removal fraction leaves no training points")
        keep = np.sort(ranked[cut:])
        model = train_logreg(train.subset(keep), lam)
        accs.append(heldout_accuracy(model, test))
    return RemovalCurve(order, fractions, np.array(accs), method, seed)


def random_baseline(train, test, lam, fractions=DEFAULT_FRACTIONS, orders=5, seed=0):
    """Mean of ``orders`` random-removal curves."""
    curves = [
        removal_curve(np.zeros(train.n), train, test, "random", lam, fractions, seed=seed * 1000 + r, method="random")
        for r in range(orders)
    ]
    return RemovalCurve("random", curves[0].fractions, np.mean([c.accuracies for c in curves], axis=0), "random", seed)


# ---------------------------------------------------------------- protocols


def value_function(cfg, train, heldout):
    return LogisticValue(
        train,
        cfg.effective_lam,
        heldout,
        baseline_filter=-LOG2 if cfg.baseline_filter else None,
    )


def value_training_points(cfg, seed):
    """Value every training point of one synthetic draw with ``cfg.method``."""
    train, heldout, test = synthetic_splits(cfg, seed)
    v = value_function(cfg, train, heldout)
    if cfg.method == "mc":
        est = mc_estimate_all(v, mc_sample_size(cfg.alpha, cfg.beta, cfg.c), seed)
    elif cfg.method == "layered":
        est = layered_estimate_all(v, cfg.alpha, cfg.beta, cfg.c, seed)
    else:
        params = PrivacyParams.for_value_function(v, cfg.alpha, cfg.beta, cfg.c, cfg.epsilon)
        est = private_layered_all(v, cfg.alpha, cfg.beta, params, cfg.c, seed)
    return est, (train, heldout, test)


def removal_experiment(cfg, seed):
    """Highest-first, lowest-first and averaged random curves for one run."""
    est, (train, _, test) = value_training_points(cfg, seed)
    lam = cfg.effective_lam
    curves = [
        removal_curve(est.values, train, test, order, lam, cfg.fractions, seed, cfg.method)
        for order in ("highest-first", "lowest-first")
    ]
    curves.append(random_baseline(train, test, lam, cfg.fractions, cfg.random_orders, seed))
    return curves, est


def rank_correlation_run(cfg, seed):
    """Spearman rho between private and non-private layered values of one run."""
    train, heldout, _ = synthetic_splits(cfg, seed)
    v = value_function(cfg, train, heldout)
    params = PrivacyParams.for_value_function(v, cfg.alpha, cfg.beta, cfg.c, cfg.epsilon)
    est = private_layered_all(v, cfg.alpha, cfg.beta, params, cfg.c, seed)
    return {
        "seed": int(seed),
        "rho": spearman(est.values, est.non_private),
        "value_spread": float(np.std(est.non_private)),
        "privacy": params.record(),
    }


def touch_stats(n, alpha, beta, c=1.0, seed=0, queries=1, with_mc=True):
    """Share of other points read per query, layered versus permutation sampling."""
    v = MeanGame(n, seed)
    points = np.random.default_rng([int(seed), 3]).choice(n, size=queries, replace=False)
    layered = []
    mc = []
    for i in points:
        est = layered_estimate_all(v, alpha, beta, c, seed, points=[int(i)])
        layered.append(est.touched_fraction)
        if with_mc:
            m = mc_sample_size(alpha, beta, c)
            mc.append(mc_estimate(v, int(i), m, seed).touched_fraction)
    plan = build_plan(n, alpha, beta, c)
    out = {
        "n": int(n),
        "alpha": alpha,
        "beta": beta,
        "c": c,
        "queries": int(queries),
        "layered_touched_fraction": float(np.mean(layered)),
        "layered_expected_fraction": expected_touch_fraction(plan),
        "touch_bound": data_touch_bound(n, alpha, beta, c),
        "expected_coalitions": plan.expected_coalitions,
    }
    if with_mc:
        out["mc_permutations"] = mc_sample_size(alpha, beta, c)
        out["mc_touched_fraction"] = float(np.mean(mc))
    return out


# ---------------------------------------------------------------- output


def write_curves_csv(path, curves):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["fraction", "accuracy", "method", "order", "seed"])
        writer.writeheader()
        for curve in curves:
            for row in curve.rows():
                row = dict(row)
                row["fraction"] = f"{row['fraction']:.4f}"
                row["accuracy"] = f"{row['accuracy']:.6f}"
                writer.writerow(row)


def config_record(cfg):
    rec = asdict(cfg)
    rec["fractions"] = list(cfg.fractions)
    rec["effective_lam"] = cfg.effective_lam
    return rec
