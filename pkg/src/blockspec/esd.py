"""Empirical spectral distributions and distances to analytic laws."""

from dataclasses import dataclass, field

import numpy as np

from .linalg import sym_eigvals


@dataclass(frozen=True)
class ESD:
    """Uniform measure on the eigenvalues of a matrix, stored sorted ascending."""

    eigenvalues: np.ndarray = field(repr=False)

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float).ravel())
        if ev.size < 1:
            raise ValueError("an ESD needs at least one eigenvalue")
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def dim(self):
        return self.eigenvalues.size

    @classmethod
    def from_matrix(cls, A):
        return cls(sym_eigvals(A))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])


@dataclass
class FitReport:
    law: str
    params: dict
    ks: float
    w1: float
    moment_gaps: list  # (k, empirical, analytic, |gap|)

    def max_moment_gap(self):
        return max((g[3] for g in self.moment_gaps), default=0.0)

    def to_dict(self):
        return {
            "law": self.law,
            "params": dict(self.params),
            "ks": self.ks,
            "w1": self.w1,
            "moment_gaps": [
                {"k": k, "empirical": e, "analytic": a, "gap": g}
                for k, e, a, g in self.moment_gaps
            ],
        }


def esd_moment(e, k):
    """``(1/dim) sum_i lambda_i^k``."""
    if int(k) != k or k < 0:
        raise ValueError(f"k must be a nonnegative integer, got {k!r}")
    return float(np.mean(e.eigenvalues ** int(k)))


def esd_moments(e, kmax):
    return [esd_moment(e, k) for k in range(kmax + 1)]


def ks_distance(e, cdf):
    """Kolmogorov-Smirnov distance ``sup_x |F_hat(x) - cdf(x)|``.

    The sup is taken over the jump points, comparing ``cdf`` with the
    empirical cdf just before and at each eigenvalue. Tied eigenvalues are
    handled by using the first and last occurrence of each value.
    """
    ev = e.eigenvalues
    n = ev.size
    values, first = np.unique(ev, return_index=True)
    last = np.append(first[1:], n)
    F = np.asarray(cdf(values), dtype=float)
    below = first / n
    at = last / n
    return float(max(np.max(np.abs(at - F)), np.max(np.abs(below - F))))


def w1_distance(e, quantile):
    """Wasserstein-1 distance via order-statistics coupling at midpoints ``(i - 1/2)/dim``."""
    n = e.dim
    u = (np.arange(1, n + 1) - 0.5) / n
    return float(np.mean(np.abs(e.eigenvalues - np.asarray(quantile(u), dtype=float))))


def histogram(e, bins, range=None):
    """Density-normalized equal-width histogram over ``range`` (default ``[min, max]``)."""
    if int(bins) != bins or bins < 1:
        raise ValueError(f"bins must be a positive integer, got {bins!r}")
    ev = e.eigenvalues
    if range is None:
        lo, hi = float(ev[0]), float(ev[-1])
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        range = (lo, hi)
    # eigenvalues a hair outside a fixed range still belong to the end bins
    ev = np.clip(ev, range[0], range[1])
    counts, edges = np.histogram(ev, bins=int(bins), range=range)
    densities = counts / (e.dim * np.diff(edges))
    return Histogram(edges=edges, counts=counts, densities=densities)


def fit_report(e, law, kmax):
    if kmax < 1:
        raise ValueError(f"kmax must be >= 1, got {kmax}")
    gaps = []
    for k in range(1, kmax + 1):
        emp = esd_moment(e, k)
        ana = float(law.moment(k))
        gaps.append((k, emp, ana, abs(emp - ana)))
    return FitReport(
        law=law.name,
        params=law.params(),
        ks=ks_distance(e, law.cdf),
        w1=w1_distance(e, law.quantile),
        moment_gaps=gaps,
    )
