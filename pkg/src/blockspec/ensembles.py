"""Gaussian block ensembles and the matrices built from them.

A sample consists of two independent standard normal matrices ``X``
(``p x (n-1)``) and ``Y`` (``q x (n-1)``). Their Gram blocks form the
``(p+q) x (p+q)`` covariance whose block-rescaled version
``S0^{-1/2} S S0^{-1/2}`` is the object whose spectrum is studied.

Random streams
--------------
Each matrix is drawn from its own Philox (counter-based) generator keyed
by ``SeedSequence(seed, spawn_key=(replicate_id, tag))`` with ``tag = 0``
for ``X`` and ``1`` for ``Y``. Normals come from numpy's ziggurat
``Generator.standard_normal`` and fill the matrix in C (row-major) order.
Replicates therefore never share a stream and can run in any order.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import cho_solve

from .errors import ConfigError, DegenerateData, NotPositiveDefinite
from .linalg import as_symmetric, cholesky, psd_inv_sqrt, sym_eigvals

X_TAG = 0
Y_TAG = 1


@dataclass(frozen=True)
class Dims:
    """Sample size ``n`` and block sizes ``p``, ``q``.

    ``p + q < n - 1`` keeps both Gram blocks and the Fisher denominator
    invertible almost surely.
    """

    n: int
    p: int
    q: int = None

    def __post_init__(self):
        if self.q is None:
            object.__setattr__(self, "q", self.p)
        for name in ("n", "p", "q"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.n < 4:
            raise ConfigError(f"n must be at least 4, got {self.n}")
        if self.p < 1 or self.q < 1:
            raise ConfigError(f"block sizes must be positive, got p={self.p}, q={self.q}")
        if self.p + self.q >= self.n - 1:
            raise ConfigError(
                f"need p + q < n - 1, got p={self.p}, q={self.q}, n={self.n}"
            )

    @property
    def d(self):
        return self.p + self.q

    @property
    def s(self):
        return Fraction(self.q, self.p)

    @property
    def t(self):
        return Fraction(self.q, self.n - 1 - self.p)

    @property
    def alpha(self):
        return Fraction(self.n - 1 - self.p, self.p)

    @property
    def c(self):
        return Fraction(self.d, self.n)

    @property
    def balanced(self):
        return self.p == self.q


@dataclass(frozen=True)
class GaussianBlockSample:
    dims: Dims
    X: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    seed: int = 0
    replicate_id: int = 0

    def __post_init__(self):
        m = self.dims.n - 1
        if self.X.shape != (self.dims.p, m) or self.Y.shape != (self.dims.q, m):
            raise ConfigError(
                f"sample shapes {self.X.shape}, {self.Y.shape} do not match {self.dims}"
            )


@dataclass(frozen=True)
class BlockCovariance:
    """Blocks of ``[[S1, Psi], [Psi.T, S2]]``."""

    S1: np.ndarray = field(repr=False)
    S2: np.ndarray = field(repr=False)
    Psi: np.ndarray = field(repr=False)

    @property
    def p(self):
        return self.S1.shape[0]

    @property
    def q(self):
        return self.S2.shape[0]

    def full(self):
        return np.block([[self.S1, self.Psi], [self.Psi.T, self.S2]])

    def block_diagonal(self):
        return np.block(
            [
                [self.S1, np.zeros_like(self.Psi)],
                [np.zeros_like(self.Psi.T), self.S2],
            ]
        )


def stream(seed, replicate_id, tag):
    """Generator for one matrix of one replicate."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate_id), int(tag)))
    return np.random.Generator(np.random.Philox(ss))


def sample(dims, seed, replicate_id=0):
    """Draw ``X`` and ``Y`` with i.i.d. N(0, 1) entries, reproducibly."""
    m = dims.n - 1
    X = stream(seed, replicate_id, X_TAG).standard_normal((dims.p, m))
    Y = stream(seed, replicate_id, Y_TAG).standard_normal((dims.q, m))
    return GaussianBlockSample(dims, X, Y, seed=int(seed), replicate_id=int(replicate_id))


def gram_blocks(smp):
    X, Y = smp.X, smp.Y
    return BlockCovariance(S1=X @ X.T, S2=Y @ Y.T, Psi=X @ Y.T)


def upsilon(bc):
    """Whitened cross block ``S1^{-1/2} Psi S2^{-1/2}``; its singular values are
    the sample canonical correlations."""
    return psd_inv_sqrt(bc.S1) @ bc.Psi @ psd_inv_sqrt(bc.S2)


def rescaled_sym(bc):
    """The symmetric block-rescaled matrix ``[[I, U], [U.T, I]]`` with ``U = upsilon(bc)``.

    It is similar to ``S S0^{-1}`` and so carries the same spectrum.
    """
    U = upsilon(bc)
    R = np.block([[np.eye(bc.p), U], [U.T, np.eye(bc.q)]])
    return as_symmetric(R)


def _solve_spd(S, B):
    """``S^{-1} B`` through a validated Cholesky factor."""
    L = cholesky(S)
    return cho_solve((L, True), B)


def coupling_blocks(bc):
    """``B1 = Psi S2^{-1}`` (p x q) and ``B2 = Psi.T S1^{-1}`` (q x p)."""
    B1 = _solve_spd(bc.S2, bc.Psi.T).T
    B2 = _solve_spd(bc.S1, bc.Psi).T
    return B1, B2


def offdiag_C(bc):
    """``C`` in ``S S0^{-1} = I + C``: zero diagonal blocks, ``B1`` and ``B2`` off it."""
    B1, B2 = coupling_blocks(bc)
    p, q = bc.p, bc.q
    return np.block([[np.zeros((p, p)), B1], [B2, np.zeros((q, q))]])


def b1b2(bc):
    """``Psi S2^{-1} Psi.T S1^{-1}`` (p x p, not symmetric)."""
    B1, B2 = coupling_blocks(bc)
    return B1 @ B2


def projector(M):
    """Orthogonal projector ``M.T (M M.T)^{-1} M`` onto the row space of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    try:
        P = M.T @ _solve_spd(M @ M.T, M)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(f"M M^T is singular: {exc}") from None
    return as_symmetric(P, tol=1e-8 * (1.0 + np.max(np.abs(P))))


def fisher_matrix(smp):
    """Symmetrized Fisher matrix of a sample.

    With ``G = Y P_X Y.T / p`` and ``W = Y (I - P_X) Y.T / (n-1-p)`` the Fisher
    matrix is ``G W^{-1}``; the returned ``W^{-1/2} G W^{-1/2}`` is
    symmetric and shares its spectrum.
    """
    dims = smp.dims
    Y = smp.Y
    P = projector(smp.X)
    G = Y @ P @ Y.T / dims.p
    W = Y @ (np.eye(dims.n - 1) - P) @ Y.T / (dims.n - 1 - dims.p)
    W = as_symmetric(W, tol=1e-8 * (1.0 + np.max(np.abs(W))))
    scale = float(np.max(sym_eigvals(Y @ Y.T))) / (dims.n - 1 - dims.p)
    smallest = float(sym_eigvals(W)[-1])
    if smallest <= 1e-10 * scale:
        raise NotPositiveDefinite(
            f"Fisher denominator is singular (smallest eigenvalue {smallest:.3e})"
        )
    Wm = psd_inv_sqrt(W)
    return as_symmetric(Wm @ G @ Wm, tol=1e-8 * (1.0 + np.max(np.abs(G))))


def fisher_ratio_eigvals(F_sym, alpha):
    """Eigenvalues of ``F (F + alpha I)^{-1}``, non-increasing."""
    f = sym_eigvals(F_sym)
    return f / (f + float(alpha))


def centered_covariance(Z, p):
    """Block covariance ``(1/n) sum_k (z_k - zbar)(z_k - zbar).T`` of a ``d x n`` data matrix.

    Rows of ``Z`` are coordinates and columns observations; the first ``p``
    rows form the first block.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ConfigError(f"data must be a 2-d array, got shape {Z.shape}")
    d, n = Z.shape
    if n < 2:
        raise ConfigError(f"need at least two observations, got {n}")
    if not 1 <= p < d:
        raise ConfigError(f"split index p={p} must satisfy 1 <= p < d={d}")
    Zc = Z - Z.mean(axis=1, keepdims=True)
    S = Zc @ Zc.T / n
    bc = BlockCovariance(S1=S[:p, :p], S2=S[p:, p:], Psi=S[:p, p:])
    for name, block in (("first", bc.S1), ("second", bc.S2)):
        if not np.any(block):
            raise DegenerateData(f"{name} diagonal block is identically zero")
        try:
            cholesky(block)
        except NotPositiveDefinite as exc:
            raise DegenerateData(f"{name} diagonal block is singular: {exc}") from None
    return bc
