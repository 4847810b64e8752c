"""Workload summarization: k-means over query embeddings, elbow-chosen K,
and one nearest-to-centroid witness query per cluster.

k-means runs 10 seeded k-means++ restarts of Lloyd's algorithm and keeps the
best SSE; assignment ties go to the lowest cluster id, and an emptied
cluster is reseeded to the point farthest from its own centroid. At small
instance sizes this reliably reaches the exhaustive-partition optimum, which
the test suite checks against a brute-force oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmbedError, QuercError
from .workload import LabeledQuery, WorkloadLog

DEFAULT_EPSILON = 0.05
DEFAULT_RESTARTS = 10
MAX_LLOYD_ITERATIONS = 300


class SummarizeError(QuercError):
    pass


def _as_matrix(vectors) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("vectors must form an (n, d) matrix")
    if not np.isfinite(x).all():
        raise ValueError("vectors contain non-finite values")
    return x


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    sse: float
    iterations: int


def _kmeanspp_init(x: np.ndarray, k: int, rng) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            cdf = np.cumsum(d2 / total)
            cdf[-1] = 1.0
            idx = int(np.searchsorted(cdf, rng.random(), side="right"))
        else:  # all remaining points coincide with chosen centroids
            idx = int(rng.integers(n))
        centroids[j] = x[idx]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int) -> KMeansResult:
    n, _ = x.shape
    k = centroids.shape[0]
    prev = None
    prev_sse = np.inf
    assignments = np.zeros(n, dtype=np.int64)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assignments = np.argmin(d2, axis=1)  # ties resolve to the lowest id
        counts = np.bincount(assignments, minlength=k)
        empties = np.nonzero(counts == 0)[0]
        if empties.size:
            own = d2[np.arange(n), assignments].copy()
            for e in empties:
                far = int(np.argmax(own))
                centroids[e] = x[far]
                assignments[far] = e
                own[far] = -np.inf
        if prev is not None and np.array_equal(assignments, prev):
            break
        prev = assignments.copy()
        for j in range(k):
            members = x[assignments == j]
            if members.shape[0]:
                centroids[j] = members.mean(axis=0)
        sse_now = float(((x - centroids[assignments]) ** 2).sum())
        # stall break: with more centroids than distinct points the repair
        # keeps reshuffling zero-cost duplicates forever
        if sse_now >= prev_sse * (1.0 - 1e-12):
            break
        prev_sse = sse_now
    sse = float(((x - centroids[assignments]) ** 2).sum())
    return KMeansResult(centroids=centroids, assignments=assignments, sse=sse, iterations=iterations)


def kmeans(
    vectors,
    k: int,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = MAX_LLOYD_ITERATIONS,
) -> KMeansResult:
    """Restart-best k-means; deterministic per seed."""
    x = _as_matrix(vectors)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    best: KMeansResult | None = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        result = _lloyd(x, _kmeanspp_init(x, k, rng), max_iter)
        if best is None or result.sse < best.sse:
            best = result
    assert best is not None
    return best


def choose_k(vectors, k_max: int, epsilon: float = DEFAULT_EPSILON, seed: int = 0):
    """Elbow rule: smallest k whose SSE improvement to k+1, measured against
    the curve's overall scale SSE(1), falls below epsilon; k_max if none
    qualifies; an exact-fit SSE of 0 short-circuits. Returns (k, sse_curve).

    Improvements are normalized by SSE(1) rather than SSE(k): the marginal
    gain of splitting a coherent cluster is a roughly constant *fraction* of
    its remaining SSE, so an SSE(k)-relative rule would never detect the
    plateau of the curve's rate of change.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1)")
    x = _as_matrix(vectors)
    n = x.shape[0]
    if n < 2:
        return 1, [(1, 0.0)]
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    k_max = min(k_max, n)
    curve: list[tuple[int, float]] = []
    zero_tol = 0.0
    for k in range(1, k_max + 1):
        sse = kmeans(x, k, seed=seed).sse
        curve.append((k, sse))
        if k == 1:
            zero_tol = sse * 1e-12  # duplicates leave ~ulp-sized residual SSE
        if sse <= zero_tol:
            return k, curve
    scale = curve[0][1]
    for (k, sse), (_, sse_next) in zip(curve, curve[1:]):
        if (sse - sse_next) / scale < epsilon:
            return k, curve
    return k_max, curve


@dataclass(frozen=True)
class WorkloadSummary:
    """The chosen witness subset plus clustering diagnostics.

    witnesses are (query index into the source log, query), one per cluster,
    in ascending index order; assignments maps embedded query indices to
    cluster ids; failures lists queries that could not be embedded.
    """

    witnesses: tuple[tuple[int, LabeledQuery], ...]
    k: int
    assignments: dict[int, int]
    sse_curve: tuple[tuple[int, float], ...]
    cluster_sizes: tuple[int, ...]
    epsilon: float
    failures: tuple[tuple[int, str], ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "epsilon": self.epsilon,
            "sse_curve": [[k, sse] for k, sse in self.sse_curve],
            "witnesses": [
                {"index": idx, "query_text": rec.query_text} for idx, rec in self.witnesses
            ],
            "cluster_sizes": list(self.cluster_sizes),
            "failures": [[idx, reason] for idx, reason in self.failures],
        }


def default_k_max(n: int) -> int:
    return max(2, min(int(np.sqrt(n)), 50))


def summarize(
    log: WorkloadLog,
    embedder,
    *,
    k: int | None = None,
    k_max: int | None = None,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
    l2_normalize: bool = False,
) -> WorkloadSummary:
    """Embed every query, cluster, and pick per-cluster witness queries.

    The witness is the cluster member nearest its centroid (Euclidean),
    ties to the lowest query index. Queries the embedder rejects are
    excluded from clustering and reported in the summary.
    """
    if len(log) == 0:
        raise SummarizeError("cannot summarize an empty workload")
    vectors = []
    kept_indices = []
    failures = []
    for idx, rec in enumerate(log):
        try:
            vectors.append(np.asarray(embedder.embed_text(rec.query_text), dtype=np.float64))
        except (EmbedError, ValueError) as exc:
            failures.append((idx, str(exc)))
            continue
        kept_indices.append(idx)
    if not vectors:
        raise SummarizeError("no query in the workload could be embedded")
    x = np.vstack(vectors)
    if l2_normalize:
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        x = np.where(norms > 0, x / np.where(norms == 0, 1.0, norms), x)

    n = x.shape[0]
    if k is not None:
        if not 1 <= k <= n:
            raise SummarizeError(f"k must be in [1, {n}], got {k}")
        chosen_k = k
        result = kmeans(x, chosen_k, seed=seed)
        curve = [(chosen_k, result.sse)]
    else:
        chosen_k, curve = choose_k(x, k_max if k_max is not None else default_k_max(n), epsilon, seed)
        result = kmeans(x, chosen_k, seed=seed)

    witnesses = []
    sizes = []
    for cluster in range(chosen_k):
        members = np.nonzero(result.assignments == cluster)[0]
        sizes.append(int(members.size))
        if members.size == 0:
            continue
        dists = ((x[members] - result.centroids[cluster]) ** 2).sum(axis=1)
        best = members[int(np.argmin(dists))]  # members ascend, so ties pick the lowest index
        orig = kept_indices[best]
        witnesses.append((orig, log[orig]))
    witnesses.sort(key=lambda item: item[0])

    return WorkloadSummary(
        witnesses=tuple(witnesses),
        k=chosen_k,
        assignments={kept_indices[i]: int(result.assignments[i]) for i in range(n)},
        sse_curve=tuple((int(k_), float(s)) for k_, s in curve),
        cluster_sizes=tuple(sizes),
        epsilon=epsilon,
        failures=tuple(failures),
    )


def write_summary(summary: WorkloadSummary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_witness_sql(summary: WorkloadSummary, path) -> None:
    """Plain-SQL witness file, one query per line, for external advisors."""
    with open(path, "w", encoding="utf-8") as fh:
        for _, rec in summary.witnesses:
            fh.write(" ".join(rec.query_text.split()))
            fh.write("\n")
