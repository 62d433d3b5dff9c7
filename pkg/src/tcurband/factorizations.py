"""t-SVD, facewise pseudoinverse and t-CUR decomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tcurband.tensor import ShapeError, fro_norm, tprod


class NumericalError(RuntimeError):
    """A numerical kernel failed (SVD non-convergence, non-finite iterate)."""


@dataclass(frozen=True)
class TSvdFactors:
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


@dataclass
class TCurFactors:
    """Sampled factors of ``y``: ``c = y[:, J]``, ``u = y[I][:, J]``, ``r = y[I]``.

    Index sets are zero-based integer arrays.
    """

    c: np.ndarray
    u: np.ndarray
    r: np.ndarray
    row_idx: np.ndarray
    col_idx: np.ndarray


def _half_faces(a: np.ndarray) -> np.ndarray:
    # faces 0..n3//2 of the mode-3 DFT, stacked first
    return np.moveaxis(np.fft.rfft(a, axis=2), 2, 0)


def _from_half_faces(f: np.ndarray, n3: int) -> np.ndarray:
    return np.fft.irfft(np.moveaxis(f, 0, 2), n=n3, axis=2)


def tsvd(a: np.ndarray) -> TSvdFactors:
    """Full t-SVD ``a = u * s * v^T``.

    Each Fourier face is factorized with a dense SVD; faces past the
    midpoint are conjugates of earlier ones, so only half are computed and
    the factors come back real.
    """
    n1, n2, n3 = a.shape
    fa = _half_faces(a)
    m = fa.shape[0]
    fu = np.zeros((m, n1, n1), dtype=complex)
    fs = np.zeros((m, n1, n2), dtype=complex)
    fv = np.zeros((m, n2, n2), dtype=complex)
    d = min(n1, n2)
    for k in range(m):
        face = fa[k]
        # the DC face and the Nyquist face are real; keep their SVD real
        if k == 0 or 2 * k == n3:
            face = face.real
        try:
            uk, sk, vhk = np.linalg.svd(face)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD failed on Fourier face {k}") from exc
        fu[k] = uk
        fs[k, np.arange(d), np.arange(d)] = sk
        fv[k] = vhk.conj().T
    return TSvdFactors(
        u=_from_half_faces(fu, n3),
        s=_from_half_faces(fs, n3),
        v=_from_half_faces(fv, n3),
    )


def tsvd_rank(a: np.ndarray, tol: float | None = None) -> int:
    """Tubal rank: number of diagonal entries of the core's first slice above ``tol``.

    The first frontal slice of the core is the mean of the per-face
    singular values, so no full factorization is needed. ``tol`` defaults
    to ``1e-10 * ||a||_F``.
    """
    if tol is None:
        tol = 1e-10 * fro_norm(a)
    fa = np.moveaxis(np.fft.fft(a, axis=2), 2, 0)
    sv = np.linalg.svd(fa, compute_uv=False)
    first = sv.mean(axis=0)
    return int(np.count_nonzero(np.abs(first) > tol))


def tpinv(a: np.ndarray, rcond: float | None = None, rank: int | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse, computed face by face in the Fourier domain.

    Singular values below ``rcond * sigma_max`` of a face are treated as
    zero; ``rcond`` defaults to ``max(face dims) * eps``. With ``rank``
    only the leading ``rank`` singular triplets of each face are inverted.
    """
    n1, n2, n3 = a.shape
    if rcond is None:
        rcond = max(n1, n2) * np.finfo(np.float64).eps
    fa = _half_faces(a)
    if not fa.size:
        return np.zeros((n2, n1, n3))
    if rank is None:
        return _from_half_faces(np.linalg.pinv(fa, rcond=rcond), n3)
    u, s, vh = np.linalg.svd(fa, full_matrices=False)
    keep = s > rcond * s[:, :1]
    keep[:, rank:] = False
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    pinv = np.conj(np.swapaxes(vh, 1, 2)) @ (s_inv[..., None] * np.conj(np.swapaxes(u, 1, 2)))
    return _from_half_faces(pinv, n3)


def sample_indices(n: int, count: int, seed: int) -> np.ndarray:
    """First ``count`` entries of a Mersenne-Twister permutation of ``range(n)``."""
    if not 1 <= count <= n:
        raise ValueError(f"count must be in [1, {n}], got {count}")
    rng = np.random.RandomState(seed)
    return rng.permutation(n)[:count]


def sample_rows_cols(n1: int, n2: int, s_r: int, s_c: int, seed: int):
    """Row and column index sets drawn from one seeded stream (rows first)."""
    if not 1 <= s_r <= n1:
        raise ValueError(f"s_r must be in [1, {n1}], got {s_r}")
    if not 1 <= s_c <= n2:
        raise ValueError(f"s_c must be in [1, {n2}], got {s_c}")
    rng = np.random.RandomState(seed)
    return rng.permutation(n1)[:s_r], rng.permutation(n2)[:s_c]


def _check_index_set(idx, n: int, name: str) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.intp).ravel()
    if idx.size == 0:
        raise ValueError(f"{name} is empty")
    if idx.min() < 0 or idx.max() >= n:
        raise IndexError(f"{name} out of range [0, {n})")
    if np.unique(idx).size != idx.size:
        raise ValueError(f"{name} contains duplicates")
    return idx


def tcur_sample(y: np.ndarray, i_set, j_set) -> TCurFactors:
    """Slice the lateral/horizontal samples ``C``, ``U``, ``R`` out of ``y``."""
    n1, n2, _ = y.shape
    i_set = _check_index_set(i_set, n1, "row index set")
    j_set = _check_index_set(j_set, n2, "column index set")
    return TCurFactors(
        c=y[:, j_set, :].copy(),
        u=y[np.ix_(i_set, j_set)].copy(),
        r=y[i_set, :, :].copy(),
        row_idx=i_set,
        col_idx=j_set,
    )


def tcur_reconstruct(f: TCurFactors, rcond: float | None = None, rank: int | None = None) -> np.ndarray:
    """``C * U^+ * R``; ``rank`` truncates the pseudoinverse (see :func:`tpinv`)."""
    return tprod(tprod(f.c, tpinv(f.u, rcond, rank)), f.r)


def tcur(y: np.ndarray, s_r: int, s_c: int, seed: int = 1) -> tuple[TCurFactors, np.ndarray]:
    """Sample ``s_r`` rows and ``s_c`` columns of ``y`` and reconstruct."""
    rows, cols = sample_rows_cols(y.shape[0], y.shape[1], s_r, s_c, seed)
    f = tcur_sample(y, rows, cols)
    return f, tcur_reconstruct(f)


__all__ = [
    "NumericalError",
    "ShapeError",
    "TCurFactors",
    "TSvdFactors",
    "sample_indices",
    "sample_rows_cols",
    "tcur",
    "tcur_reconstruct",
    "tcur_sample",
    "tpinv",
    "tsvd",
    "tsvd_rank",
]
