"""Dense linear-algebra substrate."""

from .factor import (
    as_matrix,
    as_square,
    as_vector,
    check_symmetric,
    cho_solve,
    cholesky,
    cond_estimate,
    eigh,
    householder_qr,
    inv,
    jacobi_eigh,
    lstsq,
    numerical_rank,
    solve,
    solve_triangular,
    spd_inv,
    svd,
    symmetrize,
)
from .kron import commutation, kron, symkron, symmetrizer, unvec, vec
from .mmio import MatrixMarketError, read_matrix, read_vector, write_matrix
from .random import random_haar_orthogonal, random_test_matrix
from .spd import (
    MAX_CONDITION,
    SpdMatrix,
    check_psd,
    is_spd,
    m_inner,
    m_norm,
    pinv_psd,
    polar_decompose,
    pseudo_solve,
)

__all__ = [
    "MAX_CONDITION",
    "MatrixMarketError",
    "SpdMatrix",
    "as_matrix",
    "as_square",
    "as_vector",
    "check_psd",
    "check_symmetric",
    "cho_solve",
    "cholesky",
    "commutation",
    "cond_estimate",
    "eigh",
    "householder_qr",
    "inv",
    "is_spd",
    "jacobi_eigh",
    "kron",
    "lstsq",
    "m_inner",
    "m_norm",
    "numerical_rank",
    "pinv_psd",
    "polar_decompose",
    "pseudo_solve",
    "random_haar_orthogonal",
    "random_test_matrix",
    "read_matrix",
    "read_vector",
    "solve",
    "solve_triangular",
    "spd_inv",
    "svd",
    "symkron",
    "symmetrize",
    "symmetrizer",
    "unvec",
    "vec",
    "write_matrix",
]
