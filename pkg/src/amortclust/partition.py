"""
Hard partitions from affinity matrices (spectral clustering, Louvain) and
from feature vectors (K-means, PAM K-medoids, Ward), plus the WCSS elbow.

Ties (equal distances, equal modularity gains) resolve to the lowest
index, and every returned labeling is canonical: cluster ids follow first
appearance, starting at 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import linkage

from .scenarios import canonical_labels

SPECTRAL_RESTARTS = 50
KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-9


@dataclass
class Partition:
    labels: np.ndarray

    def __post_init__(self):
        self.labels = canonical_labels(np.asarray(self.labels, dtype=np.int64))

    @property
    def K(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def n(self) -> int:
        return self.labels.size


def _as_points(points):
    X = getattr(points, "values", points)
    return np.atleast_2d(np.asarray(X, dtype=float))


def _check_k(K, n):
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")


# ----------------------------------------------------------------- K-means

def _sq_dists(X, C):
    # X (n, d), C (R, K, d) -> (R, n, K)
    return ((X[None, :, None, :] - C[:, None, :, :]) ** 2).sum(-1)


def _kmeanspp(X, K, R, rng):
    n = X.shape[0]
    idx = np.empty((R, K), dtype=np.int64)
    idx[:, 0] = rng.integers(n, size=R)
    closest = ((X[None, :, :] - X[idx[:, 0]][:, None, :]) ** 2).sum(-1)  # (R, n)
    for k in range(1, K):
        total = closest.sum(axis=1, keepdims=True)
        u = rng.random((R, 1)) * total
        cum = np.cumsum(closest, axis=1)
        pick = (cum <= u).sum(axis=1)
        # all-zero rows (duplicates exhausted): fall back to a uniform index
        degenerate = total[:, 0] <= 0
        pick[degenerate] = rng.integers(n, size=degenerate.sum())
        idx[:, k] = np.minimum(pick, n - 1)
        d_new = ((X[None, :, :] - X[idx[:, k]][:, None, :]) ** 2).sum(-1)
        closest = np.minimum(closest, d_new)
    return X[idx]  # (R, K, d)


def _repair_empty(labels, D, K):
    # an empty cluster takes the point farthest from its own center,
    # never emptying a singleton
    counts = np.bincount(labels, minlength=K)
    rows = np.arange(labels.size)
    while np.any(counts == 0):
        own = np.where(counts[labels] > 1, D[rows, labels], -1.0)
        far = int(np.argmax(own))
        empty = int(np.flatnonzero(counts == 0)[0])
        counts[labels[far]] -= 1
        labels[far] = empty
        counts[empty] += 1


def _means(X, labels, K):
    R, n = labels.shape
    onehot = np.zeros((R, n, K))
    np.put_along_axis(onehot, labels[:, :, None], 1.0, axis=2)
    sizes = onehot.sum(axis=1)
    return np.einsum("rnk,nd->rkd", onehot, X) / np.maximum(sizes, 1.0)[:, :, None]


def _wcss(X, labels, C):
    return ((X[None, :, :] - np.take_along_axis(C, labels[:, :, None], axis=1)) ** 2).sum((1, 2))


def lloyd(X, centers, max_iter: int = KMEANS_MAX_ITER, tol: float = KMEANS_TOL):
    """Lloyd iterations for a stack of restarts.

    Parameters
    ----------
    X : (n, d) array
    centers : (R, K, d) array of initial centers

    Returns
    -------
    labels : (R, n) int array
    centers : (R, K, d) array
    wcss : (R,) array
    history : list of (R,) arrays, WCSS after each iteration
    """
    X = np.asarray(X, dtype=float)
    C = np.array(centers, dtype=float, copy=True)
    R, K, _ = C.shape
    labels = np.zeros((R, X.shape[0]), dtype=np.int64)
    wcss = np.full(R, np.inf)
    active = np.ones(R, dtype=bool)
    history = []
    for it in range(max_iter):
        D = _sq_dists(X, C[active])
        new = D.argmin(axis=2)
        for r in np.flatnonzero(np.array([np.unique(row).size < K for row in new])):
            _repair_empty(new[r], D[r], K)
        changed = np.any(new != labels[active], axis=1) | (it == 0)
        labels[active] = new
        C[active] = _means(X, new, K)
        w = _wcss(X, new, C[active])
        prev = wcss[active]
        wcss[active] = w
        history.append(wcss.copy())
        converged = ~changed | (np.abs(prev - w) <= tol * np.abs(prev)) | (w == 0)
        idx = np.flatnonzero(active)
        active[idx[converged]] = False
        if not active.any():
            break
    return labels, C, wcss, history


def kmeans(points, K: int, restarts: int = 200, rng: np.random.Generator | None = None,
           max_iter: int = KMEANS_MAX_ITER, return_wcss: bool = False):
    """Best-of-``restarts`` Lloyd K-means with K-means++ seeding.

    Returns the partition with minimal within-cluster sum of squares
    (lowest restart index on ties); with ``return_wcss`` also that WCSS.
    """
    X = _as_points(points)
    n = X.shape[0]
    _check_k(K, n)
    rng = rng if rng is not None else np.random.default_rng(0)
    if K == 1:
        part = Partition(np.zeros(n, dtype=np.int64))
        wcss = float(((X - X.mean(0)) ** 2).sum())
        return (part, wcss) if return_wcss else part
    labels, _, wcss, _ = lloyd(X, _kmeanspp(X, K, restarts, rng), max_iter)
    best = int(np.argmin(wcss))
    part = Partition(labels[best])
    return (part, float(wcss[best])) if return_wcss else part


def wcss_of(points, labels) -> float:
    X = _as_points(points)
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        block = X[labels == c]
        total += float(((block - block.mean(0)) ** 2).sum())
    return total


# --------------------------------------------------------------- K-medoids

def _pam_cost(D, medoids):
    return float(D[:, medoids].min(axis=1).sum())


def kmedoids(points, K: int, rng: np.random.Generator | None = None, return_trace: bool = False):
    """PAM (BUILD then SWAP) on Euclidean distances.

    SWAP applies the single best improving (medoid, non-medoid) exchange
    per iteration until none lowers the total distance.  ``rng`` is
    accepted for interface symmetry; PAM is deterministic.
    """
    X = _as_points(points)
    n = X.shape[0]
    _check_k(K, n)
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    medoids = [int(np.argmin(D.sum(axis=0)))]
    nearest = D[:, medoids[0]].copy()
    for _ in range(1, K):
        gain = np.maximum(nearest[:, None] - D, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        c = int(np.argmax(gain))
        medoids.append(c)
        nearest = np.minimum(nearest, D[:, c])
    cost = _pam_cost(D, medoids)
    trace = [cost]
    while True:
        best_cost, best_swap = cost, None
        is_medoid = np.zeros(n, dtype=bool)
        is_medoid[medoids] = True
        for pos in range(K):
            others = medoids[:pos] + medoids[pos + 1:]
            base = D[:, others].min(axis=1) if others else np.full(n, np.inf)
            cand = np.minimum(base[:, None], D).sum(axis=0)
            cand[is_medoid] = np.inf
            o = int(np.argmin(cand))
            # relative guard keeps float noise from cycling
            if cand[o] < best_cost - 1e-12 * max(best_cost, 1.0):
                best_cost, best_swap = float(cand[o]), (pos, o)
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        cost = best_cost
        trace.append(cost)
    labels = D[:, medoids].argmin(axis=1)
    part = Partition(labels)
    if return_trace:
        return part, np.array(medoids), trace
    return part


# -------------------------------------------------------------------- Ward

def ward_linkage(points) -> np.ndarray:
    """SciPy linkage matrix using the Lance-Williams Ward update."""
    return linkage(_as_points(points), method="ward")


def cut_linkage(Z: np.ndarray, K: int) -> np.ndarray:
    """Labels after replaying the first ``n - K`` merges of linkage ``Z``."""
    n = Z.shape[0] + 1
    _check_k(K, n)
    parent = list(range(2 * n - 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for step in range(n - K):
        a, b = int(Z[step, 0]), int(Z[step, 1])
        new = n + step
        parent[find(a)] = new
        parent[find(b)] = new
    return canonical_labels([find(i) for i in range(n)])


def ward_hierarchical(points, K: int) -> Partition:
    X = _as_points(points)
    _check_k(K, X.shape[0])
    if X.shape[0] == 1:
        return Partition(np.zeros(1, dtype=np.int64))
    return Partition(cut_linkage(ward_linkage(X), K))


# ---------------------------------------------------------------- spectral

def spectral_embedding(A, K: int) -> np.ndarray:
    """Row-normalized eigenvectors of the K smallest eigenvalues of I - D^-1/2 A D^-1/2."""
    A = np.asarray(A, dtype=float)
    deg = A.sum(axis=1)
    with np.errstate(divide="ignore"):
        inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    L = np.eye(A.shape[0]) - inv_sqrt[:, None] * A * inv_sqrt[None, :]
    L = 0.5 * (L + L.T)
    _, vecs = np.linalg.eigh(L)
    U = vecs[:, :K]
    norms = np.linalg.norm(U, axis=1, keepdims=True)
    return np.divide(U, norms, out=np.zeros_like(U), where=norms > 0)


def spectral_cluster(A, K: int, rng: np.random.Generator | None = None,
                     restarts: int = SPECTRAL_RESTARTS) -> Partition:
    """Normalized spectral clustering of an affinity matrix into ``K`` groups."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    _check_k(K, n)
    if K == 1:
        return Partition(np.zeros(n, dtype=np.int64))
    rng = rng if rng is not None else np.random.default_rng(0)
    return kmeans(spectral_embedding(A, K), K, restarts=restarts, rng=rng)


# ----------------------------------------------------------------- Louvain

def modularity(A, labels, resolution: float = 1.0) -> float:
    """Weighted Newman modularity of ``labels`` on the graph with weights A (diagonal ignored)."""
    W = np.array(A, dtype=float)
    np.fill_diagonal(W, 0.0)
    return _modularity(W, np.asarray(labels), resolution)


def _modularity(W, labels, resolution):
    m2 = W.sum()
    if m2 <= 0:
        return 0.0
    k = W.sum(axis=1)
    q = 0.0
    for c in np.unique(labels):
        mask = labels == c
        q += W[np.ix_(mask, mask)].sum() - resolution * k[mask].sum() ** 2 / m2
    return float(q / m2)


def _local_moves(W, rng, resolution):
    n = W.shape[0]
    comm = np.arange(n)
    k = W.sum(axis=1)
    self_w = np.diag(W).copy()
    tot = k.copy()
    m2 = W.sum()
    moved_any = False
    while True:
        moved = False
        for i in rng.permutation(n):
            old = comm[i]
            tot[old] -= k[i]
            links = np.bincount(comm, weights=W[i], minlength=n)
            links[old] -= self_w[i]
            gains = links - resolution * k[i] * tot / m2
            best = old
            best_gain = gains[old]
            # candidate communities: those i is linked to
            cand = np.flatnonzero(links > 0)
            if cand.size:
                c = cand[np.argmax(gains[cand])]  # lowest index among equal maxima
                if gains[c] > best_gain + 1e-12 * max(abs(best_gain), 1.0):
                    best = c
            comm[i] = best
            tot[best] += k[i]
            if best != old:
                moved = moved_any = True
        if not moved:
            break
    return canonical_labels(comm), moved_any


def louvain(A, rng: np.random.Generator | None = None, resolution: float = 1.0) -> Partition:
    """Louvain community detection on the weighted graph of off-diagonal affinities.

    Alternates local moving (nodes visited in a seeded random order each
    sweep) with aggregation of communities into super-nodes until a pass
    changes nothing.  The number of communities is inferred.
    """
    W = np.array(A, dtype=float)
    n = W.shape[0]
    if n <= 1:
        return Partition(np.zeros(n, dtype=np.int64))
    np.fill_diagonal(W, 0.0)
    if W.sum() <= 0:
        return Partition(np.arange(n))
    rng = rng if rng is not None else np.random.default_rng(0)
    membership = np.arange(n)
    G = W
    while True:
        comm, moved = _local_moves(G, rng, resolution)
        if not moved:
            break
        membership = comm[membership]
        K = int(comm.max()) + 1
        P = np.zeros((G.shape[0], K))
        P[np.arange(G.shape[0]), comm] = 1.0
        G = P.T @ G @ P
        if K == 1:
            break
    return Partition(membership)


# ------------------------------------------------------------------- elbow

def elbow_wcss(points, K_max: int = 8, rng: np.random.Generator | None = None,
               restarts: int = 50, rule: str = "largest_drop") -> tuple[np.ndarray, int]:
    """WCSS of K-means for K = 1..K_max and a suggested K.

    ``rule="largest_drop"`` suggests the K ending the largest decrease
    WCSS(K-1) - WCSS(K).  ``rule="knee"`` suggests the K whose WCSS lies
    farthest below the chord joining the curve's endpoints, which finds the
    bend even when the largest single drop comes earlier.
    """
    X = _as_points(points)
    if K_max < 2:
        raise ValueError("K_max must be >= 2 to compute a drop")
    _check_k(K_max, X.shape[0])
    rng = rng if rng is not None else np.random.default_rng(0)
    wcss = np.array([kmeans(X, K, restarts=restarts, rng=rng, return_wcss=True)[1]
                     for K in range(1, K_max + 1)])
    if rule == "largest_drop":
        drops = wcss[:-1] - wcss[1:]  # drops[j] : K=j+1 -> K=j+2
        return wcss, int(np.argmax(drops)) + 2
    if rule == "knee":
        if K_max == 2:
            return wcss, 2
        chord = np.linspace(wcss[0], wcss[-1], K_max)
        gap = chord - wcss
        return wcss, int(np.argmax(gap[1:-1])) + 2
    raise ValueError(f"unknown elbow rule {rule!r}")
