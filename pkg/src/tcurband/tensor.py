"""Third-order tensors and the t-product algebra.

A tensor is an ``ndarray`` of shape ``(n1, n2, n3)``. The t-product is
evaluated facewise after a DFT along the third axis; the block-circulant
route (``bcirc``/``unfold``/``fold``) is kept as a reference path.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor dimensions are not conformable."""


def as_tensor3(a, name: str = "tensor") -> np.ndarray:
    """Validate and return ``a`` as a finite float64 third-order array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be third-order, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def unfold(a: np.ndarray) -> np.ndarray:
    """Stack the frontal slices vertically into an ``(n1*n3, n2)`` matrix."""
    n1, n2, n3 = a.shape
    return np.transpose(a, (2, 0, 1)).reshape(n3 * n1, n2)


def fold(m: np.ndarray, n3: int) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    m = np.asarray(m)
    if m.ndim != 2 or n3 < 1 or m.shape[0] % n3:
        raise ShapeError(f"cannot fold {m.shape} into {n3} frontal slices")
    n1 = m.shape[0] // n3
    return np.transpose(m.reshape(n3, n1, m.shape[1]), (1, 2, 0))


def bcirc(a: np.ndarray) -> np.ndarray:
    """Block-circulant matrix whose block ``(r, c)`` is slice ``(r - c) mod n3``."""
    n1, n2, n3 = a.shape
    out = np.empty((n1 * n3, n2 * n3), dtype=a.dtype)
    for r in range(n3):
        for c in range(n3):
            out[r * n1:(r + 1) * n1, c * n2:(c + 1) * n2] = a[:, :, (r - c) % n3]
    return out


def fft_mode3(a: np.ndarray) -> np.ndarray:
    """Unnormalized DFT along the third axis."""
    return np.fft.fft(a, axis=2)


def ifft_mode3(f: np.ndarray, real: bool = True) -> np.ndarray:
    """Inverse of :func:`fft_mode3` (scaled by ``1/n3``).

    With ``real=True`` the imaginary residue is dropped.
    """
    out = np.fft.ifft(f, axis=2)
    return out.real.copy() if real else out


def _faces(f: np.ndarray) -> np.ndarray:
    # (n1, n2, n3) -> (n3, n1, n2) so numpy's stacked linalg sees one face per entry
    return np.moveaxis(f, 2, 0)


def _unfaces(f: np.ndarray) -> np.ndarray:
    return np.moveaxis(f, 0, 2)


def tprod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """t-product ``a * b`` of an ``n1 x n2 x n3`` and an ``n2 x l x n3`` tensor.

    Computed as facewise complex matrix products in the Fourier domain.
    Only the first ``n3 // 2 + 1`` faces are multiplied; the remaining
    faces follow from conjugate symmetry of real inputs.
    """
    if a.ndim != 3 or b.ndim != 3:
        raise ShapeError("t-product needs third-order operands")
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(f"t-product shape mismatch: {a.shape} * {b.shape}")
    n3 = a.shape[2]
    fa = _faces(np.fft.rfft(a, axis=2))
    fb = _faces(np.fft.rfft(b, axis=2))
    return np.fft.irfft(_unfaces(fa @ fb), n=n3, axis=2)


def tprod_bcirc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Reference t-product ``fold(bcirc(a) @ unfold(b))``."""
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(f"t-product shape mismatch: {a.shape} * {b.shape}")
    return fold(bcirc(a) @ unfold(b), a.shape[2])


def ttranspose(a: np.ndarray) -> np.ndarray:
    """Tensor transpose: transpose each slice and reverse slices 2..n3."""
    at = np.transpose(a, (1, 0, 2))
    return np.concatenate([at[:, :, :1], at[:, :, :0:-1]], axis=2)


def identity(n: int, n3: int) -> np.ndarray:
    """Identity tensor: first frontal slice ``I_n``, all others zero."""
    out = np.zeros((n, n, n3))
    out[:, :, 0] = np.eye(n)
    return out


def fro_norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(a))))


def linf_norm(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def is_f_diagonal(a: np.ndarray, tol: float = 1e-10) -> bool:
    """True if the off-diagonal mass of every frontal slice is at most ``tol``."""
    n1, n2, _ = a.shape
    mask = ~np.eye(n1, n2, dtype=bool)
    return fro_norm(a[mask]) <= tol


def is_orthogonal(a: np.ndarray, tol: float = 1e-10) -> bool:
    """True if ``a^T * a`` and ``a * a^T`` both equal the identity tensor within ``tol``."""
    n1, n2, n3 = a.shape
    if n1 != n2:
        raise ShapeError("orthogonality needs square frontal slices")
    j = identity(n1, n3)
    at = ttranspose(a)
    return fro_norm(tprod(at, a) - j) <= tol and fro_norm(tprod(a, at) - j) <= tol
