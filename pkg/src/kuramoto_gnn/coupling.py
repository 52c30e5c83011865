"""Row-stochastic coupling matrices over a graph's edge support.

The interaction weights between oscillators live on the graph edges (plus a
self-loop per node so every softmax row is nonempty). Attention weights are
multi-head scaled dot products of projected initial features, normalized per
row; they are computed once from the initial state and stay frozen while the
dynamics run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix


@dataclass(frozen=True)
class AttentionParams:
    """Per-head key/query projections, shape (heads, d_k, d) each.

    scale_power controls the logit divisor d_k ** scale_power: 1.0 divides by
    d_k itself, 0.5 gives the familiar sqrt(d_k) variant.
    """

    w_key: np.ndarray
    w_query: np.ndarray
    scale_power: float = 1.0

    def __post_init__(self):
        if self.w_key.shape != self.w_query.shape:
            raise ValueError("key and query projections must share one shape")
        if self.w_key.ndim != 3:
            raise ValueError("projections must have shape (heads, d_k, d)")
        if self.d_k < 1:
            raise ValueError("d_k must be >= 1")

    @property
    def heads(self) -> int:
        return self.w_key.shape[0]

    @property
    def d_k(self) -> int:
        return self.w_key.shape[1]

    @property
    def dim(self) -> int:
        return self.w_key.shape[2]


def attention_support(g, with_self_loops=True):
    """Sorted, deduplicated (rows, cols) support: graph out-edges + self-loops."""
    src, dst = g.edge_src, g.edge_dst
    if with_self_loops:
        loop = np.arange(g.n, dtype=np.int64)
        src = np.concatenate([src, loop])
        dst = np.concatenate([dst, loop])
    pairs = np.unique(np.stack([src, dst], axis=1), axis=0)
    return pairs[:, 0], pairs[:, 1]


def _support_indptr(rows, n):
    counts = np.bincount(rows, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr


def segment_softmax(values, indptr):
    """Softmax within each CSR row segment, with per-row max subtraction.

    Every segment must be nonempty.
    """
    starts = indptr[:-1]
    if np.any(indptr[1:] == starts):
        raise ValueError("softmax over an empty support row")
    row_of = np.repeat(np.arange(len(starts)), np.diff(indptr))
    shifted = values - np.maximum.reduceat(values, starts)[row_of]
    e = np.exp(shifted)
    return e / np.add.reduceat(e, starts)[row_of]


def compute_attention(x0, params: AttentionParams, g) -> csr_matrix:
    """Multi-head dot-product attention weights on the edge support.

    Per head, the logit for support pair (i, j) is
    (W_K x_i) . (W_Q x_j) / d_k**scale_power; each row is softmax-normalized
    over its support, and the final matrix averages the heads. The result is
    right-stochastic by construction.
    """
    a, _ = compute_attention_cached(x0, params, g)
    return a


def compute_attention_cached(x0, params: AttentionParams, g):
    """compute_attention plus the intermediates a backward pass needs.

    Returns (matrix, cache) where cache holds the support arrays, per-head
    softmax probabilities, and the projected keys/queries.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[1] != params.dim:
        raise ValueError(
            f"state has {x0.shape[-1] if x0.ndim else 0} columns, projections expect {params.dim}"
        )
    if x0.shape[0] != g.n:
        raise ValueError("state row count differs from node count")
    rows, cols = attention_support(g, with_self_loops=True)
    indptr = _support_indptr(rows, g.n)
    scale = float(params.d_k) ** params.scale_power

    keys = np.einsum("hkd,nd->hnk", params.w_key, x0)
    queries = np.einsum("hkd,nd->hnk", params.w_query, x0)
    head_probs = np.empty((params.heads, rows.size))
    for h in range(params.heads):
        logits = np.einsum("ek,ek->e", keys[h, rows], queries[h, cols]) / scale
        head_probs[h] = segment_softmax(logits, indptr)
    values = head_probs.mean(axis=0)

    a = csr_matrix((values, (rows, cols)), shape=(g.n, g.n))
    cache = {
        "rows": rows,
        "cols": cols,
        "indptr": indptr,
        "head_probs": head_probs,
        "keys": keys,
        "queries": queries,
        "scale": scale,
    }
    return a, cache


def uniform_coupling(g, with_self_loops=True) -> csr_matrix:
    """Each row spreads weight 1/deg uniformly over its support entries.

    On a complete graph without self-loops this is the classic mean-field
    weighting (every neighbor gets 1/(n-1)).
    """
    rows, cols = attention_support(g, with_self_loops=with_self_loops)
    deg = np.bincount(rows, minlength=g.n)
    if np.any(deg == 0):
        raise ValueError("node without support entries; add self-loops or edges")
    values = 1.0 / deg[rows]
    return csr_matrix((values, (rows, cols)), shape=(g.n, g.n))


def row_stochastic_check(a, tol=1e-9) -> bool:
    """True iff every row sums to 1 within tol and entries are >= -tol."""
    a = csr_matrix(a)
    sums = np.asarray(a.sum(axis=1)).ravel()
    if np.any(np.abs(sums - 1.0) > tol):
        return False
    return a.nnz == 0 or a.data.min() >= -tol


def coupling_to_csv(a, path) -> None:
    """Dump a sparse coupling matrix as 'row,col,value' triples."""
    a = a.tocoo()
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for i, j, v in zip(a.row, a.col, a.data):
            fh.write(f"{i},{j},{v:.17g}\n")


def coupling_from_csv(path, n) -> csr_matrix:
    triples = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if triples.size == 0:
        return csr_matrix((n, n))
    return csr_matrix(
        (triples[:, 2], (triples[:, 0].astype(np.int64), triples[:, 1].astype(np.int64))),
        shape=(n, n),
    )
