"""Dependence functionals of a block-standardized covariance.

``bures_sq`` uses the usual fidelity form of the squared Bures-Wasserstein
distance, ``tr A + tr B - 2 tr (A^{1/2} B A^{1/2})^{1/2}``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .ensembles import BlockCovariance, upsilon
from .errors import ConfigError
from .linalg import as_symmetric, psd_sqrt

SUP_CONSTANT = 2.0 - math.sqrt(2.0)


@dataclass(frozen=True)
class StandardizedMatrix:
    """``R = [[I_p, U], [U.T, I_q]]`` built from a cross block ``U``."""

    Upsilon: np.ndarray = field(repr=False)

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.Upsilon, dtype=float))
        if U.ndim != 2:
            raise ConfigError(f"Upsilon must be a matrix, got shape {U.shape}")
        smax = float(np.linalg.norm(U, 2)) if U.size else 0.0
        if smax > 1.0 + 1e-8:
            raise ConfigError(f"largest singular value {smax:.6f} exceeds 1; R is not PSD")
        object.__setattr__(self, "Upsilon", U)

    @property
    def p(self):
        return self.Upsilon.shape[0]

    @property
    def q(self):
        return self.Upsilon.shape[1]

    @property
    def R(self):
        U = self.Upsilon
        return np.block([[np.eye(self.p), U], [U.T, np.eye(self.q)]])

    @classmethod
    def from_covariance(cls, bc):
        """Standardize a population or sample :class:`BlockCovariance`."""
        return cls(upsilon(bc))

    @classmethod
    def from_full(cls, Sigma, p):
        Sigma = as_symmetric(Sigma)
        return cls.from_covariance(
            BlockCovariance(S1=Sigma[:p, :p], S2=Sigma[p:, p:], Psi=Sigma[:p, p:])
        )


def bures_sq(A, B):
    A = as_symmetric(A)
    B = as_symmetric(B)
    if A.shape != B.shape:
        raise ConfigError(f"shape mismatch {A.shape} vs {B.shape}")
    rA = psd_sqrt(A)
    cross = psd_sqrt(rA @ B @ rA)
    return float(np.trace(A) + np.trace(B) - 2.0 * np.trace(cross))


def dep_coefficient(sm, denominator_doubled=False):
    """Squared Bures distance of ``R`` to the identity over ``(2 - sqrt 2) min(p, q)``.

    With ``denominator_doubled`` the denominator is ``2 (2 - sqrt 2) min(p, q)``,
    which maps the fully correlated ``p = q = 1`` case to 1 rather than 2.
    """
    if not np.any(sm.Upsilon):
        return 0.0
    num = bures_sq(sm.R, np.eye(sm.p + sm.q))
    den = SUP_CONSTANT * min(sm.p, sm.q)
    if denominator_doubled:
        den *= 2.0
    return num / den


def adjusted_rv(sm):
    """``(1/p) tr(U U.T)``, ``p`` being the first block size."""
    return float(np.sum(sm.Upsilon**2)) / sm.p


def adjusted_rv_from_blocks(bc):
    """``(1/p) tr(Psi S2^{-1} Psi.T S1^{-1})`` without forming the whitened block."""
    left = np.linalg.solve(bc.S2, bc.Psi.T)  # S2^{-1} Psi.T
    right = np.linalg.solve(bc.S1, bc.Psi)  # S1^{-1} Psi
    return float(np.sum(left.T * right)) / bc.p
