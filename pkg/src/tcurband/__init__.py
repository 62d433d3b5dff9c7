"""Hyperspectral band selection with tensor CUR decomposition and
generalized 3D total variation.

Tensors are plain ``numpy.ndarray`` objects of shape ``(n1, n2, n3)``;
frontal slices are ``a[:, :, k]`` and tubes are ``a[i, j, :]``.
"""

from tcurband.tensor import (
    ShapeError,
    bcirc,
    fft_mode3,
    fold,
    fro_norm,
    identity,
    ifft_mode3,
    is_f_diagonal,
    is_orthogonal,
    linf_norm,
    tprod,
    ttranspose,
    unfold,
)
from tcurband.factorizations import (
    NumericalError,
    TCurFactors,
    TSvdFactors,
    sample_indices,
    tcur_reconstruct,
    tcur_sample,
    tpinv,
    tsvd,
    tsvd_rank,
)
from tcurband.regularizers import GradStack, div, g3dtv, grad, prox_l1, prox_l1p
from tcurband.admm import (
    AdmmParams,
    AdmmResult,
    AdmmState,
    BandSelectionResult,
    PRESETS,
    band_selection,
    run_admm,
    select_bands,
)

__version__ = "0.1.0"
