"""Arena trees, seeded simulation of Galton-Watson and spinal-structured trees.

Nodes live in flat numpy arrays in breadth-first order: generation ``d``
occupies the index range ``gen_start[d]:gen_start[d + 1]`` and the children
of a node are contiguous, in birth order.  Within one generation this order
coincides with depth-first (birth-order) visit order, which is what makes
downstream argmax tie-breaks deterministic.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .prob import Distribution, TransformFn, as_distribution, as_transform, special_law

__all__ = [
    "Tree",
    "ObservedTree",
    "NodeBudgetExceeded",
    "DEFAULT_NODE_BUDGET",
    "make_rng",
    "replicate_seed",
    "simulate_gw",
    "simulate_sst",
    "observe",
]

DEFAULT_NODE_BUDGET = 10**8

NORMAL = "Normal"
SPECIAL = "Special"


class NodeBudgetExceeded(RuntimeError):
    """Raised when a simulation would exceed its node budget."""


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def replicate_seed(master_seed: int, replicate: int) -> np.random.SeedSequence:
    """Independent, individually reproducible stream for one replicate."""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(replicate),))


class Tree:
    """Rooted tree (or forest of ``n_roots`` trees) stored as an arena."""

    def __init__(self, n_children, special=None, generated_to=None, n_roots: int = 1):
        counts = np.array(n_children, dtype=np.int64).ravel()
        n = counts.size
        if n_roots < 1 or n_roots > n:
            raise ValueError("need at least one root")
        if np.any(counts < 0):
            raise ValueError("negative children count")
        if counts.sum() != n - n_roots:
            raise ValueError(
                f"children counts sum to {counts.sum()} but the arena has {n - n_roots} non-root nodes"
            )
        child_start = n_roots + np.concatenate(([0], np.cumsum(counts)[:-1]))
        parent = np.full(n, -1, dtype=np.int64)
        parent[n_roots:] = np.repeat(np.arange(n, dtype=np.int64), counts)

        gen_start = [0, n_roots]
        while gen_start[-1] < n:
            lo, hi = gen_start[-2], gen_start[-1]
            nxt = hi + int(counts[lo:hi].sum())
            if nxt == hi:
                break
            gen_start.append(nxt)
        height = len(gen_start) - 2
        depth = np.empty(n, dtype=np.int64)
        for d in range(height + 1):
            depth[gen_start[d] : gen_start[d + 1]] = d

        if generated_to is None:
            generated_to = height
        if generated_to < height:
            raise ValueError("generated_to is below the tree height")
        gen_start.extend([n] * (generated_to - height))

        if special is None:
            special = np.zeros(n, dtype=bool)
        special = np.array(special, dtype=bool).ravel()
        if special.size != n:
            raise ValueError("special labels do not match the number of nodes")

        for arr in (counts, child_start, parent, depth, special):
            arr.setflags(write=False)
        self.n_children = counts
        self.child_start = child_start
        self.parent = parent
        self.depth = depth
        self.special = special
        self.gen_start = np.array(gen_start, dtype=np.int64)
        self.gen_start.setflags(write=False)
        self.generated_to = int(generated_to)
        self.n_roots = int(n_roots)

    @classmethod
    def from_children_counts(cls, counts, special=None, generated_to=None, n_roots=1) -> "Tree":
        """Build from children counts listed in breadth-first order."""
        return cls(counts, special=special, generated_to=generated_to, n_roots=n_roots)

    @classmethod
    def from_parents(cls, parents, special=None, generated_to=None) -> "Tree":
        """Build from a parent array; ids must already be in breadth-first order."""
        parents = np.asarray(parents, dtype=np.int64).ravel()
        roots = np.flatnonzero(parents < 0)
        n_roots = roots.size
        if n_roots == 0 or not np.array_equal(roots, np.arange(n_roots)):
            raise ValueError("roots must be the first node ids")
        rest = parents[n_roots:]
        ids = np.arange(n_roots, parents.size)
        if np.any(rest >= ids) or np.any(np.diff(rest) < 0):
            raise ValueError("node ids are not in breadth-first birth order")
        counts = np.bincount(rest, minlength=parents.size)
        return cls(counts, special=special, generated_to=generated_to, n_roots=n_roots)

    # ------------------------------------------------------------------ access

    @property
    def size(self) -> int:
        return self.n_children.size

    @property
    def root(self) -> int:
        return 0

    @property
    def height(self) -> int:
        return int(self.depth[-1])

    @property
    def n_max(self) -> int:
        return int(self.n_children.max()) if self.size else 0

    def __len__(self) -> int:
        return self.size

    def children(self, v: int) -> range:
        start = int(self.child_start[v])
        return range(start, start + int(self.n_children[v]))

    def nodes_at_depth(self, d: int) -> range:
        if d < 0 or d > self.generated_to:
            return range(0)
        return range(int(self.gen_start[d]), int(self.gen_start[d + 1]))

    def path_to_root(self, v: int) -> list[int]:
        """Node ids from the root down to ``v``."""
        path = []
        while v >= 0:
            path.append(int(v))
            v = int(self.parent[v])
        return path[::-1]

    def true_spine(self) -> np.ndarray:
        """Special node ids ordered by depth."""
        ids = np.flatnonzero(self.special)
        return ids[np.argsort(self.depth[ids], kind="stable")]

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return (
            self.generated_to == other.generated_to
            and self.n_roots == other.n_roots
            and np.array_equal(self.n_children, other.n_children)
            and np.array_equal(self.special, other.special)
        )

    def __repr__(self):
        return f"Tree(size={self.size}, height={self.height}, generated_to={self.generated_to})"

    # ---------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        nodes = [
            {"id": i, "parent": int(p), "type": SPECIAL if s else NORMAL}
            for i, (p, s) in enumerate(zip(self.parent.tolist(), self.special.tolist()))
        ]
        return {"generated_to": self.generated_to, "nodes": nodes}

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        nodes = sorted(data["nodes"], key=lambda rec: rec["id"])
        if [rec["id"] for rec in nodes] != list(range(len(nodes))):
            raise ValueError("node ids must be 0..n-1")
        parents = [rec["parent"] if rec["parent"] is not None else -1 for rec in nodes]
        special = [_parse_type(rec.get("type", NORMAL)) for rec in nodes]
        return cls.from_parents(parents, special=special, generated_to=data.get("generated_to"))

    def to_json(self, path=None, **extra) -> str:
        data = self.to_dict()
        data.update(extra)
        text = json.dumps(data)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "Tree":
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            source = Path(source).read_text()
        return cls.from_dict(json.loads(source))

    def to_records(self, path=None) -> str:
        """Flat record form: one ``id,parent,depth,children,type`` line per node."""
        buf = io.StringIO()
        buf.write(f"# generated_to={self.generated_to}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "parent", "depth", "children", "type"])
        for i in range(self.size):
            writer.writerow(
                [
                    i,
                    int(self.parent[i]),
                    int(self.depth[i]),
                    int(self.n_children[i]),
                    SPECIAL if self.special[i] else NORMAL,
                ]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_records(cls, source) -> "Tree":
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            source = Path(source).read_text()
        lines = source.splitlines()
        generated_to = None
        if lines and lines[0].startswith("#"):
            key, _, val = lines[0][1:].strip().partition("=")
            if key.strip() == "generated_to":
                generated_to = int(val)
            lines = lines[1:]
        rows = list(csv.DictReader(lines))
        rows.sort(key=lambda r: int(r["id"]))
        counts = [int(r["children"]) for r in rows]
        special = [_parse_type(r["type"]) for r in rows]
        n_roots = sum(1 for r in rows if int(r["parent"]) < 0)
        tree = cls(counts, special=special, generated_to=generated_to, n_roots=n_roots)
        parents = np.array([int(r["parent"]) for r in rows])
        depths = np.array([int(r["depth"]) for r in rows])
        if not (np.array_equal(parents, tree.parent) and np.array_equal(depths, tree.depth)):
            raise ValueError("records are inconsistent with breadth-first birth order")
        return tree


def _parse_type(label) -> bool:
    if isinstance(label, bool):
        return label
    label = str(label).strip().lower()
    if label == "special":
        return True
    if label == "normal":
        return False
    raise ValueError(f"unknown node type {label!r}")


@dataclass(frozen=True)
class ObservedTree:
    """A tree seen up to generation ``h``.

    Nodes with depth ``< h`` are observed (their children counts are data);
    depth-``h`` nodes are known to exist but nothing else about them is.
    Because the arena is breadth-first, observed nodes are exactly the
    prefix ``0 .. n_observed - 1``.
    """

    tree: Tree
    h: int

    def __post_init__(self):
        if not 1 <= self.h <= self.tree.generated_to:
            raise ValueError(
                f"observation horizon h={self.h} outside 1..{self.tree.generated_to}"
            )

    @property
    def n_observed(self) -> int:
        return int(self.tree.gen_start[self.h])

    def __len__(self) -> int:
        return self.n_observed

    def is_observed(self, v: int) -> bool:
        return 0 <= v < self.n_observed

    def children_counts(self) -> np.ndarray:
        """Children counts of the observed nodes, in arena order."""
        return self.tree.n_children[: self.n_observed]

    def depths(self) -> np.ndarray:
        return self.tree.depth[: self.n_observed]

    def n_children(self, v: int) -> int:
        if not self.is_observed(v):
            raise ValueError(f"node {v} is not observed at h={self.h}")
        return int(self.tree.n_children[v])

    def true_spine(self) -> np.ndarray:
        """The first ``h`` special nodes (ground truth, when simulated)."""
        spine = self.tree.true_spine()
        return spine[self.tree.depth[spine] < self.h]


def observe(t: Tree, h: int) -> ObservedTree:
    return ObservedTree(t, int(h))


# ---------------------------------------------------------------- simulation


def _check_budget(total: int, budget: int):
    if total > budget:
        raise NodeBudgetExceeded(f"simulation exceeded the node budget of {budget} nodes")


def simulate_gw(
    mu,
    depth_cap: int,
    seed=None,
    n_roots: int = 1,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> Tree:
    """Galton-Watson tree (or forest of ``n_roots`` i.i.d. trees) up to ``depth_cap``.

    Nodes at depth ``depth_cap`` are leaves by construction.
    """
    if depth_cap < 0:
        raise ValueError("depth_cap must be nonnegative")
    mu = as_distribution(mu)
    rng = make_rng(seed)
    k = mu.n_max + 1
    blocks = []
    width = n_roots
    total = n_roots
    _check_budget(total, node_budget)
    for _ in range(depth_cap):
        if width == 0:
            break
        c = rng.choice(k, size=width, p=mu.probs)
        blocks.append(c)
        width = int(c.sum())
        total += width
        _check_budget(total, node_budget)
    blocks.append(np.zeros(width, dtype=np.int64))
    counts = np.concatenate(blocks)
    return Tree(counts, generated_to=depth_cap, n_roots=n_roots)


def simulate_sst(
    mu,
    f,
    h_max: int,
    seed=None,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> Tree:
    """Spinal-structured tree simulated until generation ``h_max + 1``.

    Spine nodes at depths ``0..h_max`` reproduce with the special law, every
    other node with ``mu``; the special child is picked uniformly among the
    children of a special node.  Depth ``h_max + 1`` nodes are leaves by
    construction so any horizon ``h <= h_max + 1`` is fully determined.
    """
    if h_max < 1:
        raise ValueError("h_max must be at least 1")
    mu = as_distribution(mu)
    f = as_transform(f, strict=False)
    nu = special_law(mu, f)
    if nu.probs[0] > 0:
        raise ValueError("special nodes must always have children (f(0) = 0)")
    rng = make_rng(seed)
    k = mu.n_max + 1
    cap = h_max + 1

    blocks = []
    special_ids = [0]
    gen_lo, width = 0, 1
    spine = 0
    total = 1
    for _ in range(cap):
        c = rng.choice(k, size=width, p=mu.probs)
        s = int(rng.choice(k, p=nu.probs))
        c[spine - gen_lo] = s
        blocks.append(c)
        first_child = gen_lo + width + int(c[: spine - gen_lo].sum())
        spine = first_child + int(rng.integers(s))
        special_ids.append(spine)
        gen_lo += width
        width = int(c.sum())
        total += width
        _check_budget(total, node_budget)
    blocks.append(np.zeros(width, dtype=np.int64))
    counts = np.concatenate(blocks)
    special = np.zeros(counts.size, dtype=bool)
    special[special_ids] = True
    return Tree(counts, special=special, generated_to=cap)
