"""Dense symmetric linear algebra kernels.

Every routine takes and returns plain ``numpy`` arrays. Tolerances are
scale-aware so the same checks hold from 2x2 toy matrices up to the
few-thousand dimensional ensembles used in the Monte Carlo studies.
"""

import numpy as np

from .errors import NoConvergence, NotPositiveDefinite, NotSymmetric


def sym_tol(A):
    return 1e-9 * (1.0 + float(np.max(np.abs(A), initial=0.0)))


def eig_tol(values):
    values = np.asarray(values)
    return 1e-9 * values.size * float(np.max(np.abs(values), initial=0.0))


def pd_tol(A):
    return 1e-12 * float(np.trace(A)) / A.shape[0]


def as_symmetric(A, tol=None):
    """Validate that ``A`` is square and symmetric and return its symmetric part.

    The stored result is exactly symmetric, ``(A + A.T) / 2``.

    Raises
    ------
    NotSymmetric
        If ``A`` is not square or ``max|A - A.T|`` exceeds ``tol``
        (default ``1e-9 * (1 + max|A|)``).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise NotSymmetric(f"expected a non-empty square matrix, got shape {A.shape}")
    tol = sym_tol(A) if tol is None else tol
    defect = float(np.max(np.abs(A - A.T)))
    if defect > tol:
        raise NotSymmetric(f"asymmetry {defect:.3e} exceeds tolerance {tol:.3e}")
    return 0.5 * (A + A.T)


def cholesky(A):
    """Lower-triangular ``L`` with ``L @ L.T == A``.

    Raises NotPositiveDefinite when LAPACK fails or any pivot ``L[i, i]**2``
    falls at or below ``1e-12 * trace(A) / dim``.
    """
    A = as_symmetric(A)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(L) ** 2
    tol = pd_tol(A)
    if np.any(pivots <= tol):
        raise NotPositiveDefinite(
            f"pivot {pivots.min():.3e} at or below tolerance {tol:.3e}"
        )
    return L


def sym_eig(A):
    """Eigendecomposition of a symmetric matrix.

    Returns
    -------
    values : ndarray, shape (d,)
        Eigenvalues sorted non-increasing.
    vectors : ndarray, shape (d, d)
        Orthogonal matrix whose columns are the matching eigenvectors.
    """
    A = as_symmetric(A)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from None
    return w[::-1].copy(), V[:, ::-1].copy()


def sym_eigvals(A):
    """Eigenvalues only, sorted non-increasing (cheaper than :func:`sym_eig`)."""
    A = as_symmetric(A)
    try:
        w = np.linalg.eigvalsh(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from None
    return w[::-1].copy()


def _spectral_function(w, V, fw):
    B = (V * fw) @ V.T
    return 0.5 * (B + B.T)


def psd_sqrt(A):
    """Symmetric PSD square root.

    Eigenvalues within ``eig_tol`` below zero are clamped to zero; anything
    more negative raises NotPositiveDefinite.
    """
    w, V = sym_eig(A)
    tol = eig_tol(w)
    if w.size and w[-1] < -tol:
        raise NotPositiveDefinite(f"eigenvalue {w[-1]:.3e} below -{tol:.3e}")
    return _spectral_function(w, V, np.sqrt(np.clip(w, 0.0, None)))


def psd_inv_sqrt(A):
    """Symmetric inverse square root ``B`` of an SPD matrix, ``B @ A @ B == I``."""
    A = as_symmetric(A)
    w, V = sym_eig(A)
    tol = pd_tol(A)
    if w[-1] <= tol:
        raise NotPositiveDefinite(
            f"smallest eigenvalue {w[-1]:.3e} at or below tolerance {tol:.3e}"
        )
    return _spectral_function(w, V, 1.0 / np.sqrt(w))


def trace_power(A, k):
    """``tr(A**k)`` by matrix multiplication.

    Block off-diagonal inputs keep exact zeros on the diagonal of every odd
    power, so the result is structurally 0 there.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"trace_power needs a square matrix, got {A.shape}")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if k == 1:
        return float(np.trace(A))
    return float(np.trace(np.linalg.matrix_power(A, int(k))))
