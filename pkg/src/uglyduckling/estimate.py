"""Ugly Duckling estimation of the birth laws and of the spine.

Pipeline on a tree observed up to generation ``h``:

1. ``mu_hat``: empirical children-count law over all observed nodes.
2. ``ugly_duckling``: the candidate branch whose empirical measure is the
   farthest (in KL) from the size-biased ``mu_hat``.
3. ``mu_star``: empirical law with the selected branch removed.
4. ``f_hat`` and ``nu_hat``: the transform and special law implied by the
   selected branch.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .prob import (
    Counts,
    Distribution,
    TransformFn,
    as_distribution,
    bias,
    f_star,
    l1_distance,
    mean,
)
from .spine import Candidate, SpineReport, identify
from .tree import ObservedTree

__all__ = [
    "DataQualityWarning",
    "EstimateBundle",
    "mu_hat",
    "candidate_divergences",
    "ugly_duckling",
    "mu_star",
    "f_hat",
    "nu_hat",
    "loglik_gw",
    "loglik_kesten",
    "loglik_sst",
    "spine_overlap",
    "normalized_f_error",
    "f_star_error",
    "estimate",
]


class DataQualityWarning(UserWarning):
    """An estimate had to drop entries that the data cannot support."""


def _n_max(obs: ObservedTree, n_max: int | None) -> int:
    return int(obs.children_counts().max()) if n_max is None else int(n_max)


def mu_hat(obs: ObservedTree, n_max: int | None = None) -> Distribution:
    """Empirical law of the children counts of all observed nodes."""
    return Counts.from_values(obs.children_counts(), _n_max(obs, n_max)).to_distribution()


def candidate_divergences(counts, mu: Distribution) -> np.ndarray:
    """KL(candidate measure || bias(mu)) for each row of ``counts``."""
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    if mean(mu) <= 0:
        raise ValueError("degenerate distribution: mean of mu_hat is zero")
    ref = bias(mu).probs
    if counts.shape[1] != ref.size:
        raise ValueError("candidate counts and mu_hat have different lengths")
    s = counts / counts.sum(axis=1, keepdims=True)
    pos = s > 0
    outside = (pos & (ref == 0)).any(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pos, s * np.log(np.where(pos, s, 1.0) / np.where(ref > 0, ref, 1.0)), 0.0)
    out = terms.sum(axis=1)
    out[outside] = math.inf
    return out


def ugly_duckling(source, mu_hat_: Distribution) -> Candidate:
    """Candidate with the largest divergence from the size-biased ``mu_hat``.

    ``source`` is an :class:`ObservedTree` or an existing :class:`SpineReport`.
    Ties (including several infinite divergences) go to the first candidate
    in birth order.
    """
    mu_hat_ = as_distribution(mu_hat_)
    report = source if isinstance(source, SpineReport) else identify(source, n_max=mu_hat_.n_max)
    if report.leaves.size == 0:
        raise ValueError("no candidate spine: the tree dies out before generation h")
    div = candidate_divergences(report.counts, mu_hat_)
    best = int(np.argmax(div))
    return report.candidates[best]


def mu_star(obs: ObservedTree, spine_hat: Candidate, n_max: int | None = None) -> Distribution:
    """Empirical law of the observed nodes outside the selected branch."""
    n_max = len(spine_hat.counts) - 1 if n_max is None else n_max
    if obs.n_observed <= obs.h:
        raise ValueError("no normal nodes: the observed tree is a single branch")
    total = Counts.from_values(obs.children_counts(), n_max).counts
    rest = total - spine_hat.counts.counts
    return Counts(rest).to_distribution()


def f_hat(obs: ObservedTree, spine_hat: Candidate, mu_star_: Distribution) -> TransformFn:
    """Maximum-likelihood transform given the selected branch.

    ``f(i) = (branch count of i) / (mu_star(i) h)``; zero where the branch
    never has ``i`` children, infinite (with a warning) where the branch has
    ``i`` children but no other observed node does.
    """
    s = spine_hat.counts.counts.astype(float)
    h = spine_hat.counts.total
    if h != obs.h:
        raise ValueError(f"selected branch has {h} nodes, expected h={obs.h}")
    ms = as_distribution(mu_star_).probs
    out = np.zeros_like(s)
    pos = s > 0
    unsupported = pos & (ms == 0)
    ok = pos & ~unsupported
    out[ok] = s[ok] / (ms[ok] * h)
    out[unsupported] = math.inf
    out[0] = 0.0
    if unsupported.any():
        warnings.warn(
            f"f_hat is infinite at {np.flatnonzero(unsupported).tolist()}: "
            "no observed normal node has that many children",
            DataQualityWarning,
            stacklevel=2,
        )
    return TransformFn(out, strict=False)


def nu_hat(mu_star_: Distribution, f_hat_: TransformFn) -> Distribution:
    """Special law estimate, proportional to ``f_hat * mu_star``.

    Infinite entries of ``f_hat`` are left out.
    """
    ms = as_distribution(mu_star_).probs
    w = np.asarray(f_hat_, dtype=float)
    finite = np.isfinite(w)
    prod = np.where(finite, w, 0.0) * ms
    total = prod.sum()
    if total <= 0:
        raise ValueError("f_hat * mu_star has zero mass")
    return Distribution(prod / total)


def _spine_ids(spine) -> np.ndarray:
    if isinstance(spine, Candidate):
        return np.asarray(spine.path(), dtype=np.int64)
    return np.asarray(spine, dtype=np.int64)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def loglik_gw(obs: ObservedTree, mu) -> float:
    mu = as_distribution(mu).probs
    c = obs.children_counts()
    if c.max() >= mu.size:
        raise ValueError("observed children counts exceed N")
    return float(_log(mu[c]).sum())


def loglik_sst(obs: ObservedTree, spine, mu, f) -> float:
    """Log-likelihood of a spinal-structured tree given its spine."""
    mu_p = as_distribution(mu).probs
    w = np.asarray(f, dtype=float)
    ids = _spine_ids(spine)
    if ids.size != obs.h:
        raise ValueError(f"spine has {ids.size} nodes, expected h={obs.h}")
    norm = float(np.dot(w, mu_p))
    if norm <= 0:
        return -math.inf
    spine_counts = obs.tree.n_children[ids]
    return loglik_gw(obs, mu_p) + float(_log(w[spine_counts]).sum()) - obs.h * math.log(norm)


def loglik_kesten(obs: ObservedTree, spine, mu) -> float:
    """Log-likelihood of Kesten's tree, the ``f(k) = k`` case."""
    mu_p = as_distribution(mu).probs
    ids = _spine_ids(spine)
    spine_counts = obs.tree.n_children[ids]
    return (
        loglik_gw(obs, mu_p)
        + float(_log(spine_counts.astype(float)).sum())
        - obs.h * math.log(mean(mu_p))
    )


def spine_overlap(true_spine, spine_hat) -> int:
    """Number of nodes shared by the true and estimated spines."""
    a = _spine_ids(true_spine)
    b = _spine_ids(spine_hat)
    if a.size != b.size:
        raise ValueError(f"spine lengths differ: {a.size} vs {b.size}")
    return int(np.intersect1d(a, b).size)


def _finite_pair(f_est, f_ref):
    est = np.asarray(f_est, dtype=float)
    ref = np.asarray(f_ref, dtype=float)
    keep = np.isfinite(est)
    return est[keep], ref[keep]


def normalized_f_error(f_est, f_true) -> float:
    """L1 error after rescaling both transforms to sum to one.

    Infinite entries of the estimate are dropped from both vectors first.
    """
    est, ref = _finite_pair(f_est, f_true)
    if est.sum() <= 0 or ref.sum() <= 0:
        return math.nan
    return l1_distance(est / est.sum(), ref / ref.sum())


def f_star_error(f_est, mu, f_true) -> float:
    """L1 distance between the estimate and ``f`` rescaled so that ``sum mu f = 1``."""
    est, ref = _finite_pair(f_est, f_star(mu, f_true))
    return l1_distance(est, ref)


@dataclass
class EstimateBundle:
    h: int
    mu_hat: Distribution
    spine_hat: Candidate
    mu_star: Distribution
    f_hat: TransformFn
    nu_hat: Distribution
    k_h: int
    n_candidates: int
    tree_size: int
    overlap: int | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def vec(x):
            return [v if math.isfinite(v) else "inf" for v in np.asarray(x, dtype=float).tolist()]

        return {
            "h": self.h,
            "seed": self.seed,
            "tree_size": self.tree_size,
            "k_h": self.k_h,
            "n_candidates": self.n_candidates,
            "mu_hat": vec(self.mu_hat),
            "spine_hat": self.spine_hat.path(),
            "spine_hat_counts": self.spine_hat.counts.counts.tolist(),
            "mu_star": vec(self.mu_star),
            "f_hat": vec(self.f_hat),
            "nu_hat": vec(self.nu_hat),
            "overlap": self.overlap,
            **self.extra,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def estimate(
    obs: ObservedTree,
    n_max: int | None = None,
    seed: int | None = None,
    report: SpineReport | None = None,
) -> EstimateBundle:
    """Run the whole pipeline; ``overlap`` is filled when true labels exist."""
    n_max = _n_max(obs, n_max)
    if report is None:
        report = identify(obs, n_max=n_max)
    mh = mu_hat(obs, n_max)
    sh = ugly_duckling(report, mh)
    ms = mu_star(obs, sh, n_max)
    fh = f_hat(obs, sh, ms)
    nh = nu_hat(ms, fh)
    truth = obs.true_spine()
    overlap = spine_overlap(truth, sh) if truth.size == obs.h else None
    return EstimateBundle(
        h=obs.h,
        mu_hat=mh,
        spine_hat=sh,
        mu_star=ms,
        f_hat=fh,
        nu_hat=nh,
        k_h=report.k_h,
        n_candidates=int(report.leaves.size),
        tree_size=obs.n_observed,
        overlap=overlap,
        seed=seed,
    )
