"""Algorithmic spine identification and the set of candidate spines.

A node whose observed subtree dies out before generation ``h`` cannot be
special (special nodes have infinitely many descendants).  Starting from the
root, a special node with a single surviving child passes the special type to
that child.  Everything else stays undecided and every surviving lineage that
reaches generation ``h - 1`` is a candidate spine.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .prob import Counts
from .tree import ObservedTree, Tree

__all__ = [
    "Status",
    "Candidate",
    "SpineReport",
    "truncated_heights",
    "observed_height",
    "identify",
    "candidates_with_measures",
]


class Status(enum.IntEnum):
    UNKNOWN = 0
    NORMAL = 1
    SPECIAL = 2

    @property
    def label(self) -> str:
        return {0: "Unknown", 1: "IdentifiedNormal", 2: "IdentifiedSpecial"}[int(self)]


def truncated_heights(obs: ObservedTree) -> np.ndarray:
    """Observed height of every node with depth ``<= h``.

    Equals ``min(height of T[v], h - depth(v))``; depth-``h`` placeholders get 0.
    """
    t, h = obs.tree, obs.h
    gs = t.gen_start
    ht = np.zeros(int(gs[h + 1]), dtype=np.int64)
    for d in range(h - 1, -1, -1):
        lo, hi = int(gs[d]), int(gs[d + 1])
        has = t.n_children[lo:hi] > 0
        if not has.any():
            continue
        nxt = ht[int(gs[d + 1]) : int(gs[d + 2])]
        offsets = t.child_start[lo:hi][has] - gs[d + 1]
        block = ht[lo:hi]
        block[has] = 1 + np.maximum.reduceat(nxt, offsets)
    return ht


def observed_height(obs: ObservedTree, v: int) -> int:
    if not obs.is_observed(v):
        raise ValueError(f"node {v} is not observed at h={obs.h}")
    return int(truncated_heights(obs)[v])


@dataclass(frozen=True)
class Candidate:
    """A root-to-generation-(h-1) branch and its children-count occurrences."""

    leaf: int
    counts: Counts
    tree: Tree = field(repr=False, compare=False)

    @property
    def h(self) -> int:
        return self.counts.total

    def path(self) -> list[int]:
        return self.tree.path_to_root(self.leaf)

    def measure(self):
        return self.counts.to_distribution()


@dataclass
class SpineReport:
    """Outcome of :func:`identify` on one observed tree.

    ``leaves`` and ``counts`` hold the candidate set in birth order; ``counts``
    has one row per candidate (occurrences of each children number along the
    branch, summing to ``h``).
    """

    obs: ObservedTree
    status: np.ndarray
    identified: np.ndarray
    leaves: np.ndarray
    counts: np.ndarray

    @property
    def h(self) -> int:
        return self.obs.h

    @property
    def identified_prefix_len(self) -> int:
        """K_h, the number of nodes identified as special."""
        return int(self.identified.size)

    k_h = identified_prefix_len

    @cached_property
    def candidates(self) -> list[Candidate]:
        return [
            Candidate(int(leaf), Counts(row), self.obs.tree)
            for leaf, row in zip(self.leaves, self.counts)
        ]

    def status_of(self, v: int) -> Status:
        return Status(int(self.status[v]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["node_id", "depth", "status"])
        depths = self.obs.depths()
        for v, (d, s) in enumerate(zip(depths.tolist(), self.status.tolist())):
            writer.writerow([v, d, Status(s).label])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _surviving(obs: ObservedTree, ht: np.ndarray) -> np.ndarray:
    n = obs.n_observed
    return ht[:n] + obs.tree.depth[:n] >= obs.h


def candidates_with_measures(
    obs: ObservedTree, n_max: int | None = None, alive: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Candidate leaves and their count vectors, in birth order.

    Counts are pushed down the surviving lineages one generation at a time,
    so each surviving node is visited once.
    """
    t, h = obs.tree, obs.h
    if n_max is None:
        n_max = int(obs.children_counts().max())
    if alive is None:
        alive = _surviving(obs, truncated_heights(obs))
    k = n_max + 1
    gs = t.gen_start
    if not alive[0]:
        return np.empty(0, dtype=np.int64), np.empty((0, k), dtype=np.int64)
    if int(t.n_children[: obs.n_observed].max()) > n_max:
        raise ValueError(f"observed children counts exceed N={n_max}")

    ids = np.array([0], dtype=np.int64)
    counts = np.zeros((1, k), dtype=np.int64)
    counts[0, t.n_children[0]] = 1
    for d in range(1, h):
        lo, hi = int(gs[d]), int(gs[d + 1])
        nxt = lo + np.flatnonzero(alive[lo:hi])
        # row of each surviving parent in the previous generation
        rows = np.searchsorted(ids, t.parent[nxt])
        counts = counts[rows].copy()
        counts[np.arange(nxt.size), t.n_children[nxt]] += 1
        ids = nxt
    return ids, counts


def identify(obs: ObservedTree, n_max: int | None = None) -> SpineReport:
    """Mark provably normal and provably special nodes.

    The root is special by definition of the model unless its whole observed
    subtree dies before generation ``h`` (then the tree has no spine and every
    node is normal).
    """
    t, h = obs.tree, obs.h
    ht = truncated_heights(obs)
    alive = _surviving(obs, ht)
    status = np.where(alive, Status.UNKNOWN, Status.NORMAL).astype(np.int8)

    identified = []
    if alive[0]:
        v = 0
        identified.append(v)
        while t.depth[v] + 1 < h:
            kids = t.children(v)
            surv = np.flatnonzero(alive[kids.start : kids.stop])
            if surv.size != 1:
                break
            v = kids.start + int(surv[0])
            identified.append(v)
        status[identified] = Status.SPECIAL

    leaves, counts = candidates_with_measures(obs, n_max=n_max, alive=alive)
    return SpineReport(
        obs=obs,
        status=status,
        identified=np.array(identified, dtype=np.int64),
        leaves=leaves,
        counts=counts,
    )
