"""Finite distributions on {0, ..., N} and the divergences built on them.

Every vector in this module is indexed by a number of children, so entry ``i``
of a distribution is the probability of having ``i`` children.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

__all__ = [
    "Distribution",
    "TransformFn",
    "Counts",
    "mean",
    "kl",
    "bhattacharyya",
    "bias",
    "special_law",
    "f_star",
    "l1_distance",
    "as_distribution",
    "as_transform",
]

SUM_TOL = 1e-9


class Distribution:
    """Immutable probability vector on {0, ..., N}.

    The input is checked to sum to one within ``1e-9`` and renormalized once,
    so ``probs.sum()`` is 1 up to rounding afterwards.
    """

    __slots__ = ("_probs",)

    def __init__(self, probs):
        arr = np.array(probs, dtype=float).ravel()
        if arr.size < 2:
            raise ValueError("a distribution needs at least two entries (N >= 1)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("distribution entries must be finite")
        if np.any(arr < 0):
            raise ValueError(f"negative probability in {arr.tolist()}")
        total = arr.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {float(total)!r}, not 1")
        arr = arr / total
        arr.setflags(write=False)
        self._probs = arr

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def n_max(self) -> int:
        """Largest number of children N."""
        return self._probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self._probs > 0)

    def __len__(self) -> int:
        return self._probs.size

    def __getitem__(self, i):
        return self._probs[i]

    def __iter__(self):
        return iter(self._probs.tolist())

    def __array__(self, dtype=None, copy=None):
        return self._probs if dtype is None else self._probs.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Distribution):
            return NotImplemented
        return np.array_equal(self._probs, other._probs)

    def __hash__(self):
        return hash(self._probs.tobytes())

    def __repr__(self):
        vals = ", ".join(f"{v:.6g}" for v in self._probs)
        return f"Distribution([{vals}])"

    def tolist(self) -> list[float]:
        return self._probs.tolist()


class TransformFn:
    """Nonnegative weights ``f(0..N)`` with ``f(0) = 0``.

    In strict mode every ``f(k)`` with ``k >= 1`` must be positive.  Estimated
    transforms are built with ``strict=False`` since they may vanish (or be
    infinite where the normal law has no mass).
    """

    __slots__ = ("_weights", "strict")

    def __init__(self, weights, strict: bool = True):
        arr = np.array(weights, dtype=float).ravel()
        if arr.size < 2:
            raise ValueError("a transform needs at least two entries (N >= 1)")
        if np.any(np.isnan(arr)) or np.any(arr < 0):
            raise ValueError(f"transform weights must be nonnegative, got {arr.tolist()}")
        if arr[0] != 0:
            raise ValueError("f(0) must be 0 so that special nodes always have children")
        if strict:
            if not np.all(np.isfinite(arr)):
                raise ValueError("strict transform weights must be finite")
            if np.any(arr[1:] <= 0):
                raise ValueError("strict transform requires f(k) > 0 for every k >= 1")
        arr.setflags(write=False)
        self._weights = arr
        self.strict = strict

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def n_max(self) -> int:
        return self._weights.size - 1

    def __len__(self) -> int:
        return self._weights.size

    def __getitem__(self, i):
        return self._weights[i]

    def __array__(self, dtype=None, copy=None):
        return self._weights if dtype is None else self._weights.astype(dtype)

    def __repr__(self):
        vals = ", ".join(f"{v:.6g}" for v in self._weights)
        return f"TransformFn([{vals}], strict={self.strict})"

    def tolist(self) -> list[float]:
        return self._weights.tolist()

    def normalized(self) -> np.ndarray:
        """Weights rescaled to sum to one."""
        total = self._weights.sum()
        if not np.isfinite(total) or total <= 0:
            raise ValueError("cannot normalize a transform with zero or infinite mass")
        return self._weights / total


class Counts:
    """Integer occurrence counts of children numbers.

    Empirical measures are kept as exact counts; ``to_distribution`` divides
    by the total only when a float vector is needed.
    """

    __slots__ = ("_counts",)

    def __init__(self, counts):
        arr = np.array(counts, dtype=np.int64).ravel()
        if np.any(arr < 0):
            raise ValueError("counts must be nonnegative")
        arr.setflags(write=False)
        self._counts = arr

    @classmethod
    def from_values(cls, values, n_max: int) -> "Counts":
        values = np.asarray(values, dtype=np.int64)
        if values.size and (values.min() < 0 or values.max() > n_max):
            raise ValueError(f"children counts outside {{0..{n_max}}}")
        return cls(np.bincount(values, minlength=n_max + 1))

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    @property
    def total(self) -> int:
        return int(self._counts.sum())

    def __len__(self) -> int:
        return self._counts.size

    def __getitem__(self, i):
        return self._counts[i]

    def __eq__(self, other):
        if not isinstance(other, Counts):
            return NotImplemented
        return np.array_equal(self._counts, other._counts)

    def __repr__(self):
        return f"Counts({self._counts.tolist()})"

    def to_distribution(self) -> Distribution:
        if self.total == 0:
            raise ValueError("empty counts have no empirical distribution")
        return Distribution(self._counts / self.total)


DistLike = Union[Distribution, Counts, np.ndarray, list, tuple]


def as_distribution(p: DistLike) -> Distribution:
    if isinstance(p, Distribution):
        return p
    if isinstance(p, Counts):
        return p.to_distribution()
    return Distribution(p)


def as_transform(f, strict: bool = True) -> TransformFn:
    if isinstance(f, TransformFn):
        return f
    return TransformFn(f, strict=strict)


def _check_same_length(p, q):
    if len(p) != len(q):
        raise ValueError(f"length mismatch: {len(p)} vs {len(q)}")


def mean(p: DistLike) -> float:
    """Mean number of children."""
    probs = as_distribution(p).probs
    return float(np.dot(np.arange(probs.size), probs))


def kl(p: DistLike, q: DistLike) -> float:
    """Kullback-Leibler divergence KL(p || q) in nats.

    Returns ``inf`` when ``p`` puts mass where ``q`` has none.
    """
    p = as_distribution(p).probs
    q = as_distribution(q).probs
    _check_same_length(p, q)
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    val = float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    # rounding can give tiny negatives for p == q
    return max(val, 0.0)


def bhattacharyya(p: DistLike, q: DistLike) -> float:
    """Bhattacharyya divergence ``-2 log sum sqrt(p_i q_i)``."""
    p = as_distribution(p).probs
    q = as_distribution(q).probs
    _check_same_length(p, q)
    bc = float(np.sum(np.sqrt(p * q)))
    if bc <= 0:
        return math.inf
    return max(-2.0 * math.log(min(bc, 1.0)), 0.0)


def bias(p: DistLike) -> Distribution:
    """Size-biased law ``i p(i) / m(p)``."""
    probs = as_distribution(p).probs
    m = mean(probs)
    if m <= 0:
        raise ValueError("degenerate distribution: mean is zero, bias undefined")
    return Distribution(np.arange(probs.size) * probs / m)


def special_law(mu: DistLike, f) -> Distribution:
    """Birth law of special nodes, proportional to ``f(k) mu(k)``."""
    mu = as_distribution(mu).probs
    w = np.asarray(f, dtype=float)
    _check_same_length(mu, w)
    prod = w * mu
    total = prod.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("sum f(l) mu(l) must be positive and finite")
    return Distribution(prod / total)


def f_star(mu: DistLike, f) -> TransformFn:
    """Rescaling of ``f`` with ``sum mu(i) f(i) = 1``."""
    mu = as_distribution(mu).probs
    w = np.asarray(f, dtype=float)
    _check_same_length(mu, w)
    total = float(np.dot(w, mu))
    if not np.isfinite(total) or total <= 0:
        raise ValueError("sum mu(i) f(i) must be positive and finite")
    strict = f.strict if isinstance(f, TransformFn) else False
    return TransformFn(w / total, strict=strict)


def l1_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _check_same_length(p, q)
    return float(np.abs(p - q).sum())
