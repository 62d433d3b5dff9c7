"""Clustering, KNN scoring and synthetic data for band selection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d


@dataclass
class LabeledDataset:
    """HSI cube with a per-pixel label map (0 = unlabeled, 1..C = classes)."""

    tensor: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.labels.shape != self.tensor.shape[:2]:
            raise ValueError(
                f"label map {self.labels.shape} does not match spatial dims {self.tensor.shape[:2]}"
            )


@dataclass(frozen=True)
class SynthSpec:
    dims: tuple[int, int, int] = (24, 24, 40)
    n_clusters: int = 5
    tubal_rank: int = 3
    sparse_frac: float = 0.02
    sparse_mag: float = 1e-2
    noise_sigma: float = 0.0
    seed: int = 0
    band_jitter: float = 0.05
    amplitude: float = 2e-3
    baseline_spread: float = 0.5
    smooth_width: int = 5

    def __post_init__(self):
        n1, n2, n3 = self.dims
        if not 1 <= self.n_clusters <= n3:
            raise ValueError("n_clusters must be in [1, n3]")
        if not 1 <= self.tubal_rank <= min(n1, n2):
            raise ValueError("tubal_rank must be in [1, min(n1, n2)]")
        if not 0 <= self.sparse_frac < 1:
            raise ValueError("sparse_frac must be in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


@dataclass
class Planted:
    band_cluster: np.ndarray  # cluster id (0-based) of each band
    sparse_support: np.ndarray  # boolean mask, tensor shaped
    low_rank: np.ndarray
    sparse: np.ndarray


# --- clustering -------------------------------------------------------------


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining mass is zero: any unused point will do
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(unused[0]) if unused.size else chosen[0]
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(points, points[[nxt]])[:, 0])
    return points[chosen].astype(np.float64, copy=True)


def _fill_empty(points, assign, centroids, k):
    """Move the point farthest from its centroid into each empty cluster."""
    for c in range(k):
        if np.any(assign == c):
            continue
        counts = np.bincount(assign, minlength=k)
        d2 = np.sum((points - centroids[assign]) ** 2, axis=1)
        d2[counts[assign] < 2] = -1.0
        i = int(np.argmax(d2))
        assign[i] = c
    return assign


def _lloyd(points, centroids, max_iter, tol):
    k = centroids.shape[0]
    history = []
    for _ in range(max_iter):
        assign = np.argmin(_sq_dists(points, centroids), axis=1)
        assign = _fill_empty(points, assign, centroids, k)
        new = np.stack([points[assign == c].mean(axis=0) for c in range(k)])
        history.append(float(np.sum((points - new[assign]) ** 2)))
        shift = np.linalg.norm(new - centroids)
        scale = max(np.linalg.norm(centroids), np.finfo(float).tiny)
        centroids = new
        if shift / scale < tol:
            break
    return assign, centroids, history


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    n_init: int = 10,
    max_iter: int = 300,
    tol: float = 1e-6,
    return_history: bool = False,
):
    """Seeded k-means (k-means++ seeding, Lloyd iterations).

    Runs ``n_init`` seedings from one ``seed`` and keeps the lowest
    within-cluster sum of squares. Returns ``(assignments, centroids)``;
    with ``return_history`` the per-iteration inertia of the kept run is
    appended.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        start = _kmeanspp(points, k, rng)
        assign, centroids, history = _lloyd(points, start, max_iter, tol)
        if best is None or history[-1] < best[2][-1]:
            best = (assign, centroids, history)
    assign, centroids, history = best
    if return_history:
        return assign, centroids, history
    return assign, centroids


# --- classification ---------------------------------------------------------


def knn_classify(train_x, train_y, test_x, n_neighbors: int = 3, chunk: int = 512) -> np.ndarray:
    """Majority vote among the ``n_neighbors`` nearest training points
    (Euclidean). Vote ties go to the smallest label.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    test_x = np.asarray(test_x, dtype=np.float64)
    train_y = np.asarray(train_y)
    if train_x.ndim == 1:
        train_x = train_x[:, None]
    if test_x.ndim == 1:
        test_x = test_x[:, None]
    if train_x.shape[0] == 0:
        raise ValueError("empty training set")
    kk = min(n_neighbors, train_x.shape[0])
    classes, y_idx = np.unique(train_y, return_inverse=True)
    out = np.empty(test_x.shape[0], dtype=train_y.dtype)
    for start in range(0, test_x.shape[0], chunk):
        d = _sq_dists(test_x[start:start + chunk], train_x)
        if kk < d.shape[1]:
            nn = np.argpartition(d, kk - 1, axis=1)[:, :kk]
        else:
            nn = np.broadcast_to(np.arange(kk), (d.shape[0], kk))
        votes = np.zeros((d.shape[0], classes.size), dtype=np.intp)
        np.add.at(votes, (np.arange(d.shape[0])[:, None], y_idx[nn]), 1)
        # argmax returns the first maximum, i.e. the smallest label
        out[start:start + chunk] = classes[np.argmax(votes, axis=1)]
    return out


def overall_accuracy(pred, truth) -> float:
    """Fraction of labeled pixels (truth != 0) predicted correctly."""
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    labeled = truth != 0
    if not labeled.any():
        return math.nan
    return float(np.mean(pred[labeled] == truth[labeled]))


def train_test_split(labels, train_frac: float = 0.9, seed: int = 0):
    """Stratified split of the labeled pixels (flat indices).

    Each class sends ``ceil(train_frac * n_c)`` random pixels to training
    and the rest to testing. Classes with fewer than two pixels go entirely
    to training.
    """
    if not 0 < train_frac < 1:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    labels = np.asarray(labels).ravel()
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(labels[labels != 0]):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            warnings.warn(f"class {c} has {idx.size} sample; using it for training only")
            train.append(idx)
            continue
        idx = rng.permutation(idx)
        n_train = math.ceil(train_frac * idx.size)
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.intp)
    return cat(train), cat(test)


def oa_repeats(ds: LabeledDataset, q, repeats: int = 50, train_frac: float = 0.9, seed: int = 0,
               n_neighbors: int = 3) -> np.ndarray:
    """Overall accuracy of KNN on bands ``q`` for each repeat (split seed ``seed + r``)."""
    q = np.asarray(q, dtype=np.intp)
    n3 = ds.tensor.shape[2]
    if q.size == 0 or q.min() < 0 or q.max() >= n3:
        raise ValueError("band subset empty or out of range")
    features = ds.tensor[:, :, q].reshape(-1, q.size)
    labels = ds.labels.ravel()
    scores = np.empty(repeats)
    for r in range(repeats):
        tr, te = train_test_split(labels, train_frac, seed + r)
        pred = knn_classify(features[tr], labels[tr], features[te], n_neighbors)
        scores[r] = overall_accuracy(pred, labels[te])
    return scores


def score_band_subset(ds: LabeledDataset, q, repeats: int = 50, train_frac: float = 0.9,
                      seed: int = 0, n_neighbors: int = 3) -> float:
    return float(np.mean(oa_repeats(ds, q, repeats, train_frac, seed, n_neighbors)))


# --- synthetic data ---------------------------------------------------------


def _smooth_basis(rng, n, r, width):
    """``n x r`` basis, RMS-one columns; the first column is constant."""
    m = rng.standard_normal((n, r))
    m = uniform_filter1d(m, size=min(width, n), axis=0, mode="wrap")
    m[:, 0] = 1.0
    q, _ = np.linalg.qr(m)
    return q * math.sqrt(n) * np.sign(q[0, 0])


def synth(spec: SynthSpec) -> tuple[LabeledDataset, Planted]:
    """Planted cube ``Y = B + S + noise``.

    ``B`` has tubal rank ``spec.tubal_rank``: every band is ``U M V^T``
    for smooth bases ``U``, ``V`` shared by all bands, whose first columns
    are constant. Each latent cluster has its own core ``M_c``, with the
    ``(0, 0)`` entry holding a distinct per-cluster baseline level. Bands
    form contiguous spectral blocks of near-even length and jitter their
    cluster core. Pixel labels are the cluster whose spatially varying
    pattern is largest at that pixel.
    """
    n1, n2, n3 = spec.dims
    r, nc = spec.tubal_rank, spec.n_clusters
    rng = np.random.default_rng(spec.seed)
    u = _smooth_basis(rng, n1, r, spec.smooth_width)
    v = _smooth_basis(rng, n2, r, spec.smooth_width)
    cores = rng.standard_normal((nc, r, r)) / r
    cores[:, 0, 0] = 0.0
    patterns = np.einsum("ia,cab,jb->ijc", u, cores, v)
    levels = rng.permutation(np.linspace(-1.0, 1.0, nc)) * spec.baseline_spread
    cores[:, 0, 0] = levels

    # near-even spectral blocks with jittered boundaries; every block keeps
    # at least half its nominal width
    width = n3 / nc
    jitter = int(width // 4)
    cuts = np.round(width * np.arange(1, nc)).astype(int)
    if jitter:
        cuts = cuts + rng.integers(-jitter, jitter + 1, size=nc - 1)
    band_cluster = np.zeros(n3, dtype=np.intp)
    for cut in cuts:
        band_cluster[cut:] += 1

    band_cores = cores[band_cluster] + spec.band_jitter * rng.standard_normal((n3, r, r)) / r
    low_rank = spec.amplitude * np.einsum("ia,kab,jb->ijk", u, band_cores, v)

    n_sparse = int(round(spec.sparse_frac * low_rank.size))
    flat = rng.choice(low_rank.size, size=n_sparse, replace=False)
    support = np.zeros(low_rank.size, dtype=bool)
    support[flat] = True
    support = support.reshape(low_rank.shape)
    sparse = np.zeros(low_rank.shape)
    sparse[support] = spec.sparse_mag * rng.choice([-1.0, 1.0], size=n_sparse)

    y = low_rank + sparse
    if spec.noise_sigma > 0:
        y = y + spec.noise_sigma * rng.standard_normal(y.shape)

    labels = (np.argmax(patterns, axis=2) + 1).astype(np.int64)
    return LabeledDataset(y, labels), Planted(band_cluster, support, low_rank, sparse)


def add_noise(x: np.ndarray, sigma: float, seed: int = 0) -> np.ndarray:
    """``x`` plus seeded Gaussian noise of standard deviation ``sigma``."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return np.array(x, dtype=np.float64, copy=True)
    return x + sigma * np.random.default_rng(seed).standard_normal(np.shape(x))
