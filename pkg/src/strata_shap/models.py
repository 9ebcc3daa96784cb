"""Trainers whose losses define data value functions.

* L2-regularized logistic regression, uniformly stable with
  ``gamma_k = L^2 kappa^2 / (2 lam k)``. The objective is the average
  log loss plus ``lam * ||w||^2`` with the bias folded into ``w`` as a
  constant feature, so ``kappa^2 = d + 1`` on data scaled to ``[0, 1]^d``.
* Exact 0-1 loss minimization over 1-D threshold classifiers.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import DatasetError, ShapleyError, ValueFunction

LOG2 = math.log(2.0)
PROB_CLIP = 1e-15


class ConvergenceError(ShapleyError):
    """Newton solve hit its iteration cap before the gradient tolerance."""

    def __init__(self, grad_norm, iterations):
        super().__init__(
            f"logistic regression did not converge in {iterations} iterations "
            f"(final gradient norm {grad_norm:.3e})"
        )
        self.grad_norm = grad_norm
        self.iterations = iterations


@dataclass(frozen=True)
class StabilityCertificate:
    """Uniform-stability constants of a regularized learner."""

    L: float
    kappa: float
    lam: float

    def __post_init__(self):
        if not (self.L > 0 and self.kappa > 0 and self.lam > 0):
            raise ValueError("stability constants must be positive")

    def gamma(self, k):
        """Stability bound for a training set of size ``k``."""
        return self.L**2 * self.kappa**2 / (2.0 * self.lam * np.asarray(k, dtype=np.float64))

    @property
    def marginal_bound(self):
        return self.L**2 * self.kappa**2 / (2.0 * self.lam)

    def matches(self, L, kappa, lam, rtol=1e-9):
        return all(math.isclose(a, b, rel_tol=rtol) for a, b in ((self.L, L), (self.kappa, kappa), (self.lam, lam)))


@dataclass(frozen=True, eq=False)
class LogRegModel:
    """Weights over ``[features, 1]``; ``prior`` is set for single-class fits."""

    weights: np.ndarray
    lam: float
    lipschitz_L: float = 1.0
    kernel_bound_kappa: float = 1.0
    prior: float = None
    iterations: int = 0
    grad_norm: float = 0.0

    @property
    def certificate(self):
        return StabilityCertificate(self.lipschitz_L, self.kernel_bound_kappa, self.lam)

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.weights[:-1] + self.weights[-1]

    def predict_proba(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.prior is not None:
            return np.full(X.shape[0], self.prior)
        return 1.0 / (1.0 + np.exp(-self.decision_function(X)))

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(np.int64)


def train_logreg(train, lam, tol=1e-6, max_iter=10_000):
    """Minimize average log loss + ``lam * ||w||^2`` by damped Newton.

    Single-class data yields the prior predictor (constant probability equal
    to the observed class frequency).
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if train.n < 1:
        raise DatasetError("cannot train on an empty coalition")
    kappa = math.sqrt(train.d + 1)
    if np.all(train.y == train.y[0]):
        return LogRegModel(np.zeros(train.d + 1), lam, 1.0, kappa, prior=float(train.y[0]))
    w, iters, gnorm = kernels.fit_logreg(kernels.add_bias(train.X), train.y, lam, tol, max_iter)
    if gnorm > tol:
        raise ConvergenceError(gnorm, iters)
    return LogRegModel(w, lam, 1.0, kappa, iterations=iters, grad_norm=gnorm)


def logloss(model, data):
    if data.n < 1:
        raise DatasetError("heldout set is empty")
    p = np.clip(model.predict_proba(data.X), PROB_CLIP, 1.0 - PROB_CLIP)
    y = data.y
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def heldout_value(model, heldout):
    """Negative average log loss on ``heldout``."""
    return -logloss(model, heldout)


def heldout_accuracy(model, heldout):
    if heldout.n < 1:
        raise DatasetError("heldout set is empty")
    return float(np.mean(model.predict(heldout.X) == heldout.y))


def erm01_optimal_loss(data):
    """Smallest 0-1 training loss over 1-D threshold classifiers (both orientations).

    Thresholds sit before, between and after the sorted points, giving
    ``2 (m + 1)`` hypotheses; positions between tied inputs are not
    realizable and are skipped.
    """
    if data.d != 1:
        raise DatasetError(f"threshold classifiers need 1-D inputs, got d={data.d}")
    order = np.argsort(data.X[:, 0], kind="stable")
    x = data.X[order, 0]
    y = data.y[order]
    m = x.size
    ones_left = np.concatenate([[0], np.cumsum(y)])
    ones_right = ones_left[-1] - ones_left
    # predict 1 to the right of the cut; the flipped orientation errs on the rest
    errors = ones_left + (m - np.arange(m + 1) - ones_right)
    valid = np.ones(m + 1, dtype=bool)
    valid[1:m] = x[1:] != x[:-1]
    errors = errors[valid]
    best = min(errors.min(), (m - errors).min())
    return best / m


def erm01_brute_force(data):
    """Reference: try every threshold at midpoints and beyond the ends."""
    x = data.X[:, 0]
    y = data.y
    cuts = np.unique(x)
    thresholds = [cuts[0] - 1.0] + [(a + b) / 2 for a, b in zip(cuts[:-1], cuts[1:])] + [cuts[-1] + 1.0]
    best = math.inf
    for t, sign in itertools.product(thresholds, (1, -1)):
        pred = (sign * (x - t) > 0).astype(int)
        best = min(best, np.mean(pred != y))
    return float(best)


class LogisticValue(ValueFunction):
    """``v(C)`` = negative log loss of the logistic model trained on ``C``.

    With ``heldout`` the loss is measured there (negative-heldout-loss);
    otherwise on ``C`` itself (negative-training-loss). Coalitions that
    cannot be trained (empty or single-class) take the uninformed baseline
    ``-ln 2``, which is also ``v(∅)``.
    """

    def __init__(self, train, lam=1.0, heldout=None, *, tol=1e-6, max_iter=10_000, **kwargs):
        self.train = train
        self.heldout = heldout
        self.lam = float(lam)
        self.tol = tol
        self.max_iter = max_iter
        self.value_kind = "negative-training-loss" if heldout is None else "negative-heldout-loss"
        self.certificate = StabilityCertificate(1.0, math.sqrt(train.d + 1), self.lam)
        self._Xb = kernels.add_bias(train.X)
        self._y = train.y.astype(np.float64)
        if heldout is not None:
            if heldout.d != train.d:
                raise DatasetError("heldout and train dimensions differ")
            self._Xh = kernels.add_bias(heldout.X)
            self._yh = heldout.y.astype(np.float64)
        else:
            self._Xh = self._yh = None
        super().__init__(train.n, self.certificate.marginal_bound, **kwargs)

    @property
    def baseline(self):
        return -LOG2

    def _value(self, coalition):
        return float(self._value_batch([coalition])[0])

    def _value_batch(self, coalitions):
        out = np.full(len(coalitions), self.baseline)
        sizes = np.fromiter((len(c) for c in coalitions), np.int64, len(coalitions))
        live = np.flatnonzero(sizes > 0)
        if live.size == 0:
            return out
        flat = np.fromiter(
            itertools.chain.from_iterable(coalitions[j] for j in live), np.int64, int(sizes[live].sum())
        )
        offsets = np.concatenate([[0], np.cumsum(sizes[live])])
        positives = np.add.reduceat(self._y[flat], offsets[:-1])
        trainable = (positives > 0) & (positives < sizes[live])
        if not trainable.any():
            return out
        keep = live[trainable]
        blocks = [flat[offsets[j]:offsets[j + 1]] for j in np.flatnonzero(trainable)]
        sub_flat = np.concatenate(blocks)
        sub_off = np.concatenate([[0], np.cumsum(sizes[keep])])
        _, iters, gnorm, train_loss, held_loss, _ = kernels.fit_logreg_batch(
            self._Xb, self._y, sub_flat, sub_off, self.lam, self.tol, self.max_iter, self._Xh, self._yh
        )
        bad = gnorm > self.tol
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            raise ConvergenceError(float(gnorm[j]), int(iters[j]))
        out[keep] = -(held_loss if self._Xh is not None else train_loss)
        return out


class ThresholdERMValue(ValueFunction):
    """``v(C) = -min 0-1 loss`` of 1-D thresholds on ``C``; ``v(∅) = -1/2``."""

    value_kind = "negative-training-loss"

    def __init__(self, data, **kwargs):
        if data.d != 1:
            raise DatasetError("threshold game needs 1-D data")
        self.data = data
        super().__init__(data.n, 1.0, **kwargs)

    def _value(self, coalition):
        if not coalition:
            return -0.5
        return -erm01_optimal_loss(self.data.subset(list(coalition)))
