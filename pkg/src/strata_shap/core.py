"""Shared vocabulary: datasets, coalitions, value functions and estimates."""

import bisect
import csv
import threading
from dataclasses import dataclass, field

import numpy as np


class ShapleyError(Exception):
    """Base class for estimator errors."""


class IndexInCoalitionError(ShapleyError, ValueError):
    pass


class InvalidIndexError(ShapleyError, IndexError):
    pass


class DatasetError(ShapleyError, ValueError):
    pass


# ---------------------------------------------------------------- datasets


@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary-labelled points. ``X`` has shape (n, d), ``y`` holds 0/1."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] < 1:
            raise DatasetError(f"features must be an (n, d) matrix with d >= 1, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DatasetError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if X.shape[0] < 1:
            raise DatasetError("dataset is empty")
        if not np.all(np.isin(y, (0, 1))):
            raise DatasetError("labels must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features must be finite")
        X.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def __len__(self):
        return self.n

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx])

    def normalized(self, lo=None, hi=None):
        """Min-max scale every feature into [0, 1].

        ``lo``/``hi`` default to this dataset's column extremes; pass the
        training split's extremes to scale a heldout split consistently
        (values are clipped into [0, 1]).
        """
        lo = self.X.min(axis=0) if lo is None else np.asarray(lo, float)
        hi = self.X.max(axis=0) if hi is None else np.asarray(hi, float)
        span = np.where(hi > lo, hi - lo, 1.0)
        return Dataset(np.clip((self.X - lo) / span, 0.0, 1.0), self.y)

    @classmethod
    def from_csv(cls, path, header=False):
        """Feature columns followed by a final 0/1 label column."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if header:
            rows = rows[1:]
        if not rows:
            raise DatasetError(f"{path}: no data rows")
        width = len(rows[0])
        if width < 2 or any(len(r) != width for r in rows):
            raise DatasetError(f"{path}: rows must share a width of at least 2 columns")
        try:
            table = np.array([[float(c) for c in r] for r in rows])
        except ValueError as exc:
            raise DatasetError(f"{path}: non-numeric cell ({exc})") from None
        labels = table[:, -1]
        if not np.all(np.isin(labels, (0.0, 1.0))):
            raise DatasetError(f"{path}: final column must hold integer labels 0/1")
        return cls(table[:, :-1], labels.astype(np.int64))

    def to_csv(self, path, header=False):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if header:
                writer.writerow([f"x{j}" for j in range(self.d)] + ["label"])
            for row, label in zip(self.X, self.y):
                writer.writerow([repr(float(v)) for v in row] + [int(label)])


# ---------------------------------------------------------------- coalitions


def make_coalition(members, n):
    """Canonical coalition: sorted tuple of distinct indices in ``[0, n)``."""
    coalition = tuple(sorted(int(m) for m in members))
    if len(set(coalition)) != len(coalition):
        raise ShapleyError(f"duplicate indices in coalition {coalition}")
    if coalition and (coalition[0] < 0 or coalition[-1] >= n):
        raise InvalidIndexError(f"coalition {coalition} has indices outside [0, {n})")
    return coalition


def with_member(coalition, i):
    """``coalition ∪ {i}`` for a canonical coalition not containing ``i``."""
    pos = bisect.bisect_left(coalition, i)
    return coalition[:pos] + (i,) + coalition[pos:]


# ---------------------------------------------------------------- value functions


class ValueFunction:
    """A cooperative game ``v: 2^N -> R`` over players ``0..n-1``.

    Subclasses implement :meth:`_value` (one canonical coalition) and may
    override :meth:`_value_batch` for vectorized evaluation. Values are
    memoized per coalition unless ``cache=False``; the counters record
    requests, cache hits and genuine evaluations.

    ``marginal_bound`` is the constant ``c`` with ``|v(C+i) - v(C)| <= c/|C|``
    for nonempty ``C``. ``baseline_filter``, when set, zeroes the marginal
    gain over any coalition whose own value falls below it.
    """

    value_kind = "custom"
    certificate = None

    def __init__(self, n, marginal_bound, *, cache=True, baseline_filter=None):
        if n < 1:
            raise ShapleyError("a game needs at least one player")
        if not marginal_bound > 0:
            raise ShapleyError("marginal_bound must be positive")
        self.n = int(n)
        self.marginal_bound = float(marginal_bound)
        self.baseline_filter = baseline_filter
        self._cache = {} if cache else None
        self._lock = threading.Lock()
        self.requests = 0
        self.hits = 0
        self.evaluations = 0

    def _value(self, coalition):
        raise NotImplementedError

    def _value_batch(self, coalitions):
        return np.array([self._value(c) for c in coalitions], dtype=np.float64)

    def reset_counters(self):
        with self._lock:
            self.requests = self.hits = self.evaluations = 0

    def clear_cache(self):
        if self._cache is not None:
            self._cache.clear()

    def __call__(self, coalition):
        return self.evaluate(coalition)

    def evaluate(self, coalition):
        return float(self.evaluate_many([make_coalition(coalition, self.n)])[0])

    def evaluate_many(self, coalitions):
        """Values for a list of canonical coalitions (sorted tuples)."""
        out = np.empty(len(coalitions), dtype=np.float64)
        if self._cache is None:
            out[:] = self._value_batch(list(coalitions))
            with self._lock:
                self.requests += len(coalitions)
                self.evaluations += len(coalitions)
            return out
        cache = self._cache
        pending = {}
        positions = []
        for pos, c in enumerate(coalitions):
            val = cache.get(c)
            if val is None:
                if c in pending:
                    pending[c].append(pos)
                else:
                    pending[c] = [pos]
            else:
                out[pos] = val
        if pending:
            keys = list(pending)
            values = self._value_batch(keys)
            for c, val in zip(keys, values):
                val = float(val)
                cache[c] = val
                out[pending[c]] = val
            positions = keys
        with self._lock:
            self.requests += len(coalitions)
            self.evaluations += len(positions)
            self.hits += len(coalitions) - len(positions)
        return out

    def filtered(self, base_values):
        """Mask of coalitions excluded by ``baseline_filter``."""
        if self.baseline_filter is None:
            return np.zeros(len(base_values), dtype=bool)
        return np.asarray(base_values) < self.baseline_filter


def marginal_gain(v, coalition, i):
    """``v(C ∪ {i}) - v(C)``, or 0 when ``C`` is excluded by the baseline filter."""
    i = int(i)
    if not 0 <= i < v.n:
        raise InvalidIndexError(f"point {i} outside [0, {v.n})")
    coalition = make_coalition(coalition, v.n)
    if i in coalition:
        raise IndexInCoalitionError(f"point {i} already belongs to {coalition}")
    base, grown = v.evaluate_many([coalition, with_member(coalition, i)])
    if v.filtered([base])[0]:
        return 0.0
    return float(grown - base)


def marginal_gains(v, coalitions, i):
    """Vectorized :func:`marginal_gain` over canonical coalitions lacking ``i``.

    Returns ``(gains, n_filtered)``.
    """
    grown = [with_member(c, i) for c in coalitions]
    values = v.evaluate_many(list(coalitions) + grown)
    base, top = values[: len(coalitions)], values[len(coalitions):]
    gains = top - base
    mask = v.filtered(base)
    gains[mask] = 0.0
    return gains, int(mask.sum())


# ---------------------------------------------------------------- estimates


@dataclass
class ShapleyEstimate:
    """Values for the queried points plus how they were obtained."""

    values: np.ndarray
    points: np.ndarray
    method: str
    evaluations_used: int = 0
    points_touched: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    n: int = 0
    metadata: dict = field(default_factory=dict)

    METHODS = ("exact", "monte-carlo", "layered", "layered-private")

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        self.points = np.atleast_1d(np.asarray(self.points, dtype=np.int64))
        self.points_touched = np.asarray(self.points_touched, dtype=np.int64)
        if self.method not in self.METHODS:
            raise ShapleyError(f"unknown method tag {self.method!r}")
        if self.evaluations_used < 0:
            raise ShapleyError("evaluations_used must be non-negative")
        if self.points_touched.size and (
            self.points_touched.min() < 0 or self.points_touched.max() >= self.n
        ):
            raise ShapleyError("points_touched outside [0, n)")

    @property
    def value(self):
        if self.values.size != 1:
            raise ShapleyError("estimate holds more than one point")
        return float(self.values[0])

    @property
    def touched_fraction(self):
        """Share of the other ``n - 1`` points read while answering the query."""
        others = self.n - 1 if self.points.size == 1 else self.n
        return self.points_touched.size / max(others, 1)

    def to_dict(self):
        return {
            "method": self.method,
            "n": int(self.n),
            "points": [int(p) for p in self.points],
            "values": [float(v) for v in self.values],
            "evaluations_used": int(self.evaluations_used),
            "points_touched": int(self.points_touched.size),
            "touched_fraction": float(self.touched_fraction),
            "metadata": _jsonable(self.metadata),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
