"""Graph data model, on-disk bundles, component extraction, synthetic graphs, splits.

A graph bundle is a directory of plain CSV files plus one JSON metadata file:

    edges.csv      one "src,dst" pair per line, 0-based integers
    features.csv   n lines of f comma-separated reals; line k is node k
    labels.csv     n lines, one integer class per line
    meta.json      {"n": int, "f": int, "c": int, "name": str}

Graphs are stored directed. Undirected datasets are expected to list both
directions explicitly; no symmetrization is applied on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


class BundleError(Exception):
    """A graph bundle directory is missing files or internally inconsistent."""


@dataclass(frozen=True)
class Graph:
    """Directed graph with dense node features and integer class labels.

    Edges are parallel (src, dst) arrays in CSR order (sorted by src then
    dst) with no duplicate pairs. Instances are immutable and safe to share.
    """

    n: int
    edge_src: np.ndarray
    edge_dst: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph must have at least one node")
        if self.edge_src.shape != self.edge_dst.shape:
            raise ValueError("edge_src and edge_dst must have equal length")
        if self.num_edges and (
            self.edge_src.min() < 0
            or self.edge_src.max() >= self.n
            or self.edge_dst.min() < 0
            or self.edge_dst.max() >= self.n
        ):
            raise ValueError("edge endpoint out of range [0, n)")
        key = self.edge_src.astype(np.int64) * self.n + self.edge_dst
        if np.unique(key).size != key.size:
            raise ValueError("duplicate directed edges")
        if self.features.shape[0] != self.n:
            raise ValueError("features must have exactly n rows")
        if self.labels.shape[0] != self.n:
            raise ValueError("labels must have exactly n entries")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label out of range [0, c)")

    @property
    def num_edges(self) -> int:
        return int(self.edge_src.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def adjacency(self) -> csr_matrix:
        """Binary adjacency matrix, shape (n, n)."""
        data = np.ones(self.num_edges)
        return csr_matrix((data, (self.edge_src, self.edge_dst)), shape=(self.n, self.n))

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_src, minlength=self.n)


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/val/test node masks for semi-supervised classification."""

    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    per_class: int | None
    seed: int

    def __post_init__(self):
        n = self.train_mask.shape[0]
        if self.val_mask.shape[0] != n or self.test_mask.shape[0] != n:
            raise ValueError("masks must share one length")
        overlap = (
            (self.train_mask & self.val_mask)
            | (self.train_mask & self.test_mask)
            | (self.val_mask & self.test_mask)
        )
        if overlap.any():
            raise ValueError("masks must be pairwise disjoint")


def _canonical_edges(src, dst, dedup=False):
    """Sort edges into CSR order; optionally drop duplicate pairs."""
    src = np.asarray(src, dtype=np.int64).ravel()
    dst = np.asarray(dst, dtype=np.int64).ravel()
    if dedup and src.size:
        pairs = np.unique(np.stack([src, dst], axis=1), axis=0)
        return pairs[:, 0], pairs[:, 1]
    order = np.lexsort((dst, src))
    return src[order], dst[order]


def build_graph(n, src, dst, features, labels, num_classes, name="", dedup=False) -> Graph:
    """Construct a Graph with edges canonicalized to CSR order."""
    src, dst = _canonical_edges(src, dst, dedup=dedup)
    return Graph(
        n=int(n),
        edge_src=src,
        edge_dst=dst,
        features=np.asarray(features, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        num_classes=int(num_classes),
        name=name,
    )


def load_bundle(path) -> Graph:
    """Read a graph bundle directory. Duplicate edges are dropped.

    Raises BundleError on missing files, out-of-range indices, or row-count
    mismatches between the files and meta.json.
    """
    path = Path(path)
    names = ["edges.csv", "features.csv", "labels.csv", "meta.json"]
    for name in names:
        if not (path / name).is_file():
            raise BundleError(f"bundle {path} is missing {name}")
    with open(path / "meta.json") as fh:
        meta = json.load(fh)
    for field in ("n", "f", "c"):
        if field not in meta:
            raise BundleError(f"meta.json lacks required field {field!r}")
    n, f, c = int(meta["n"]), int(meta["f"]), int(meta["c"])

    raw = np.loadtxt(path / "edges.csv", delimiter=",", dtype=np.int64, ndmin=2)
    if raw.size == 0:
        raw = raw.reshape(0, 2)
    if raw.shape[1] != 2:
        raise BundleError("edges.csv must have two columns")
    features = np.loadtxt(path / "features.csv", delimiter=",", dtype=np.float64, ndmin=2)
    labels = np.loadtxt(path / "labels.csv", delimiter=",", dtype=np.int64, ndmin=1)

    if features.shape != (n, f):
        raise BundleError(
            f"features.csv has shape {features.shape}, meta.json declares ({n}, {f})"
        )
    if labels.shape[0] != n:
        raise BundleError(f"labels.csv has {labels.shape[0]} rows, meta.json declares {n}")
    if raw.size and (raw.min() < 0 or raw.max() >= n):
        raise BundleError("edges.csv refers to a node outside [0, n)")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise BundleError("labels.csv holds a class outside [0, c)")

    return build_graph(
        n, raw[:, 0], raw[:, 1], features, labels, c, name=str(meta.get("name", "")), dedup=True
    )


def save_bundle(g: Graph, path) -> None:
    """Write a Graph as a bundle directory (inverse of load_bundle)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "edges.csv", "w") as fh:
        for s, t in zip(g.edge_src, g.edge_dst):
            fh.write(f"{s},{t}\n")
    # %.17g keeps float64 values exact across a save/load round trip
    np.savetxt(path / "features.csv", g.features, delimiter=",", fmt="%.17g")
    np.savetxt(path / "labels.csv", g.labels, fmt="%d")
    meta = {"n": g.n, "f": g.num_features, "c": g.num_classes, "name": g.name}
    with open(path / "meta.json", "w") as fh:
        json.dump(meta, fh)
        fh.write("\n")


def largest_connected_component(g: Graph):
    """Induced subgraph on the largest weakly-connected component.

    Returns (subgraph, kept) where kept[new_index] = old_index, so labels and
    masks computed on the original graph can be realigned explicitly.
    """
    n_comp, comp = connected_components(g.adjacency(), directed=True, connection="weak")
    sizes = np.bincount(comp, minlength=n_comp)
    kept = np.flatnonzero(comp == sizes.argmax())
    if kept.size == g.n:
        return g, kept
    new_index = np.full(g.n, -1, dtype=np.int64)
    new_index[kept] = np.arange(kept.size)
    keep_edge = (new_index[g.edge_src] >= 0) & (new_index[g.edge_dst] >= 0)
    sub = build_graph(
        kept.size,
        new_index[g.edge_src[keep_edge]],
        new_index[g.edge_dst[keep_edge]],
        g.features[kept],
        g.labels[kept],
        g.num_classes,
        name=g.name,
    )
    return sub, kept


def generate_synthetic(kind, n, f, seed, p=None) -> Graph:
    """Deterministic test graphs: ring, complete, or Erdos-Renyi(p).

    Features are standard normal draws; labels alternate over two classes.
    Ring and complete graphs carry both edge directions.
    """
    if n < 2:
        raise ValueError("synthetic graphs need n >= 2")
    rng = np.random.default_rng(seed)
    if kind == "ring":
        heads = np.arange(n)
        tails = (heads + 1) % n
        src = np.concatenate([heads, tails])
        dst = np.concatenate([tails, heads])
    elif kind == "complete":
        src, dst = np.nonzero(~np.eye(n, dtype=bool))
    elif kind == "erdos_renyi":
        if p is None or not 0.0 <= p <= 1.0:
            raise ValueError("erdos_renyi needs edge probability p in [0, 1]")
        upper = np.triu(rng.random((n, n)) < p, k=1)
        i, j = np.nonzero(upper)
        src = np.concatenate([i, j])
        dst = np.concatenate([j, i])
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    features = rng.standard_normal((n, f))
    labels = np.arange(n) % 2
    return build_graph(
        n, src, dst, features, labels, 2, name=f"synthetic-{kind}-{n}", dedup=True
    )


def make_split(g: Graph, per_class, val, seed) -> SplitSpec:
    """Uniform label split: per_class train nodes per class, val from the rest.

    A class with fewer than per_class nodes contributes all of them. Raises
    if some class in [0, c) has no nodes at all.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    train = np.zeros(g.n, dtype=bool)
    for cls in range(g.num_classes):
        members = np.flatnonzero(g.labels == cls)
        if members.size == 0:
            raise ValueError(f"class {cls} has no nodes")
        chosen = rng.choice(members, size=min(per_class, members.size), replace=False)
        train[chosen] = True
    rest = np.flatnonzero(~train)
    val_mask = np.zeros(g.n, dtype=bool)
    if val > 0 and rest.size:
        val_mask[rng.choice(rest, size=min(val, rest.size), replace=False)] = True
    test_mask = ~(train | val_mask)
    return SplitSpec(
        train_mask=train, val_mask=val_mask, test_mask=test_mask,
        per_class=per_class, seed=seed,
    )
