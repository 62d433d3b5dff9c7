"""Periodic difference operators, the G3DTV functional and its proximal maps."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

SUPPORTED_P = (1, 2, 3, 4)


class GradStack(NamedTuple):
    """One tensor per axis, e.g. the three forward differences of ``x``."""

    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray


def _axis(axis: int) -> int:
    if axis not in (1, 2, 3):
        raise ValueError(f"axis must be 1, 2 or 3, got {axis}")
    return axis - 1


def grad(x: np.ndarray, axis: int) -> np.ndarray:
    """Forward difference along ``axis`` (1-based) with periodic wraparound."""
    ax = _axis(axis)
    return np.roll(x, -1, axis=ax) - x


def div(y: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of :func:`grad`: ``y[i-1] - y[i]`` with periodic wraparound."""
    ax = _axis(axis)
    return np.roll(y, 1, axis=ax) - y


def grad_stack(x: np.ndarray) -> GradStack:
    return GradStack(grad(x, 1), grad(x, 2), grad(x, 3))


def g3dtv(x: np.ndarray, p: int = 2) -> float:
    """Sum over the three axes of ``||grad(x, i)||_1 ** p``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(sum(np.sum(np.abs(grad(x, i))) ** p for i in (1, 2, 3)))


def prox_l1(z: np.ndarray, t: float) -> np.ndarray:
    """Soft thresholding ``sign(z) * max(|z| - t, 0)``."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _active_radius(total: float, m: int, t: float, p: int) -> float:
    """Positive root of ``s + m*t*p*s**(p-1) = total``."""
    c = m * t * p
    if p == 2:
        return total / (1.0 + c)
    if p == 3:
        # c*s^2 + s - total = 0, cancellation-free form of the quadratic root
        return 2.0 * total / (1.0 + np.sqrt(1.0 + 4.0 * c * total))

    def h(s):
        return s + c * s ** (p - 1) - total

    return brentq(h, 0.0, total, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)


def l1p_threshold(z: np.ndarray, t: float, p: int) -> float:
    """Shrinkage level ``theta`` such that ``prox_l1p(z) = prox_l1(z, theta)``.

    The minimizer of ``0.5*||x - z||^2 + t*||x||_1**p`` is a soft
    threshold at ``theta = t*p*s**(p-1)``, where ``s = ||x||_1`` solves
    ``s = sum(max(|z_i| - t*p*s**(p-1), 0))``. The left side minus the
    right side is increasing in ``s``; evaluating it at every breakpoint
    ``theta = |z|_(m)`` of the sorted magnitudes identifies the active
    set, on which the equation is a polynomial in ``s``.
    """
    if p == 1:
        return float(t)
    a = np.sort(np.abs(np.ravel(z)))[::-1]
    if t == 0 or a.size == 0 or a[0] == 0:
        return 0.0
    csum = np.cumsum(a)
    m_idx = np.arange(1, a.size + 1)
    # tiny t overflows to inf, which correctly marks the breakpoint active
    with np.errstate(over="ignore", divide="ignore"):
        s_break = (a / (t * p)) ** (1.0 / (p - 1))
    h_break = s_break - (csum - m_idx * a)
    m = int(np.count_nonzero(h_break >= 0))
    # a[0] > 0 always gives h_break[0] = s_break[0] > 0, so m >= 1
    s = _active_radius(float(csum[m - 1]), m, t, p)
    return float(t * p * s ** (p - 1))


def prox_l1p(z: np.ndarray, t: float, p: int = 2) -> np.ndarray:
    """Proximal map of ``t * ||.||_1 ** p`` over the whole array ``z``.

    The penalty couples all entries through the overall l1 norm; see
    :func:`l1p_threshold`.
    """
    if p not in SUPPORTED_P:
        raise ValueError(f"p must be one of {SUPPORTED_P}, got {p}")
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    z = np.asarray(z, dtype=np.float64)
    return prox_l1(z, l1p_threshold(z, t, p))


def l1p_objective(x: np.ndarray, z: np.ndarray, t: float, p: int) -> float:
    return float(0.5 * np.sum((x - z) ** 2) + t * np.sum(np.abs(x)) ** p)
