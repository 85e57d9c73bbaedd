"""Analytic spectral laws and moment formulas.

Three law objects share a small duck-typed interface (``pdf``, ``cdf``,
``quantile``, ``moment``, ``support``, ``params``) so the goodness-of-fit
code in :mod:`blockspec.esd` can treat them uniformly:

* :class:`ArcsineLaw` on ``[0, 2]``, the limit for ``2p/n -> 1``;
* :class:`FisherLSD`, the limiting spectral distribution of a Fisher matrix;
* :class:`KestenMcKay`, the degree-``m`` Kesten-McKay law under an affine
  map ``x = u + v*y``, used to explore ratios ``2p/n -> c < 1``.

The remaining functions are the moment functional ``I_k`` of the Fisher law
(by quadrature, by the multinomial closed form at ``s = 1``, and its
``t -> 1`` limit) together with exact rational identities linking the
block-rescaled moments to the arcsine moments.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.optimize import minimize_scalar

from .errors import ConfigError, FitFailure, QuadratureFailure

EXACT_K_MAX = 25
QUAD_FAIL_TOL = 1e-6
_TABLE_POINTS = 20001


def _integrate(f, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200):
    value, err = quad(f, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit)
    if not np.isfinite(value) or err > QUAD_FAIL_TOL:
        raise QuadratureFailure(f"quadrature error estimate {err:.2e} on [{lo}, {hi}]")
    return value


def _check_order(k, minimum=0):
    if isinstance(k, bool) or int(k) != k or k < minimum:
        raise ValueError(f"moment order must be an integer >= {minimum}, got {k!r}")
    return int(k)


# -- exact combinatorics ---------------------------------------------------


def arcsine_moment_exact(k):
    """``C(2k, k) / 2**k`` as a Fraction (equal to ``2^k G(k+1/2) / (sqrt(pi) G(k+1))``)."""
    k = _check_order(k)
    return Fraction(math.comb(2 * k, k), 2**k)


def ik_limit_exact(k):
    k = _check_order(k)
    return Fraction(math.comb(2 * k, k), 4**k)


def block_moment_limit_exact(k):
    """``sum_eta C(k, 2 eta) C(2 eta, eta) / 4**eta`` as a Fraction."""
    k = _check_order(k)
    return sum(
        (Fraction(math.comb(k, 2 * e) * math.comb(2 * e, e), 4**e) for e in range(k // 2 + 1)),
        Fraction(0),
    )


def identity_check(k):
    """Evaluate both sides of the binomial-sum / Gamma-ratio identity exactly.

    The right-hand side ``2^k (k - 1/2)! / (sqrt(pi) k!)`` is reduced to
    ``2^k (2k)! / (4^k (k!)^2)`` through ``Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!)``.

    Returns
    -------
    (lhs, rhs, equal) : (Fraction, Fraction, bool)
    """
    k = _check_order(k)
    lhs = block_moment_limit_exact(k)
    rhs = Fraction(2**k * math.factorial(2 * k), 4**k * math.factorial(k) ** 2)
    return lhs, rhs, lhs == rhs


def _log_gamma_ratio_moment(k):
    return math.exp(
        k * math.log(2.0) + math.lgamma(k + 0.5) - 0.5 * math.log(math.pi) - math.lgamma(k + 1)
    )


def arcsine_moment(k):
    k = _check_order(k)
    if k <= EXACT_K_MAX:
        return float(arcsine_moment_exact(k))
    return _log_gamma_ratio_moment(k)


def block_moment_limit(k):
    """Limit of ``(1/2p) tr((S S0^{-1})^k)`` as ``2p/n -> 1``."""
    return float(block_moment_limit_exact(k))


def ik_limit(k):
    """``lim_{t->1} I_k = C(2k, k) / 4**k`` at ``s = 1``."""
    k = _check_order(k, 1)
    if k <= EXACT_K_MAX:
        return float(ik_limit_exact(k))
    return math.exp(math.lgamma(2 * k + 1) - 2 * math.lgamma(k + 1) - 2 * k * math.log(2.0))


# -- arcsine law -------------------------------------------------------------


def arcsine_pdf(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 2.0)
    xs = np.where(inside, x, 1.0)
    out = np.where(inside, 1.0 / (np.pi * np.sqrt(xs * (2.0 - xs))), 0.0)
    return out[()] if out.ndim == 0 else out


def arcsine_cdf(x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 2.0)
    out = (2.0 / np.pi) * np.arcsin(np.sqrt(x / 2.0))
    return out[()] if out.ndim == 0 else out


def arcsine_quantile(u):
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    out = 2.0 * np.sin(0.5 * np.pi * u) ** 2
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class ArcsineLaw:
    name = "arcsine"
    support = (0.0, 2.0)

    def pdf(self, x):
        return arcsine_pdf(x)

    def cdf(self, x):
        return arcsine_cdf(x)

    def quantile(self, u):
        return arcsine_quantile(u)

    def moment(self, k):
        return arcsine_moment(k)

    def params(self):
        return {}


# -- Fisher LSD ----------------------------------------------------------------


@dataclass(frozen=True)
class FisherLSD:
    """Limiting spectral law of ``S1 S2^{-1}`` with dimension-to-dof ratios ``s`` and ``t``.

    For ``s > 1`` the law also has an atom of mass ``1 - 1/s`` at zero,
    which ``pdf`` does not include.
    """

    s: float
    t: float
    name = "fisher"

    def __post_init__(self):
        if not self.s > 0:
            raise ConfigError(f"s must be positive, got {self.s}")
        if not 0 < self.t < 1:
            raise ConfigError(f"t must lie in (0, 1), got {self.t}")

    @property
    def h(self):
        return math.sqrt(self.s + self.t - self.s * self.t)

    @property
    def a(self):
        return (1 - self.h) ** 2 / (1 - self.t) ** 2

    @property
    def b(self):
        return (1 + self.h) ** 2 / (1 - self.t) ** 2

    @property
    def support(self):
        return (self.a, self.b)

    @property
    def atom_at_zero(self):
        return max(0.0, 1.0 - 1.0 / self.s)

    def params(self):
        return {"s": self.s, "t": self.t}

    def pdf(self, x):
        return fisher_pdf(self, x)

    def _weight(self, theta):
        # density times dx under x = a + (b - a) sin^2(theta); the square-root
        # endpoint factor cancels exactly
        a, b, s, t = self.a, self.b, self.s, self.t
        sn2 = np.sin(theta) ** 2
        cs2 = np.cos(theta) ** 2
        x = a + (b - a) * sn2
        if a > 0:
            return (1 - t) * (b - a) ** 2 * 2 * sn2 * cs2 / (2 * np.pi * x * (s + t * x))
        # a == 0: x = b sin^2 so sin^2 / x = 1 / b
        return (1 - t) * b * 2 * cs2 / (2 * np.pi * (s + t * x))

    def transformed_integral(self, g):
        """``int g(x) p_{s,t}(x) dx`` over the continuous part."""
        a, b = self.a, self.b
        return _integrate(
            lambda th: g(a + (b - a) * math.sin(th) ** 2) * self._weight(th), 0.0, 0.5 * math.pi
        )

    def moment(self, k):
        k = _check_order(k)
        if k == 0:
            return 1.0
        return self.transformed_integral(lambda x: x**k)

    @lru_cache(maxsize=None)
    def _table(self):
        theta = np.linspace(0.0, 0.5 * np.pi, _TABLE_POINTS)
        w = self._weight(theta)
        G = cumulative_simpson(w, x=theta, initial=0.0)
        G *= (1.0 - self.atom_at_zero) / G[-1]
        return self.a + (self.b - self.a) * np.sin(theta) ** 2, G + self.atom_at_zero

    def cdf(self, x):
        xs, G = self._table()
        x = np.asarray(x, dtype=float)
        out = np.where(x < 0.0, 0.0, np.interp(x, xs, G, left=self.atom_at_zero, right=1.0))
        return out[()] if out.ndim == 0 else out

    def quantile(self, u):
        xs, G = self._table()
        u = np.asarray(u, dtype=float)
        out = np.where(u <= self.atom_at_zero, 0.0, np.interp(u, G, xs))
        return out[()] if out.ndim == 0 else out


def fisher_pdf(law, x):
    x = np.asarray(x, dtype=float)
    a, b, s, t = law.a, law.b, law.s, law.t
    inside = (x >= a) & (x <= b) & (x > 0)
    xs = np.where(inside, x, 0.5 * (a + b))
    val = (1 - t) / (2 * np.pi * xs * (s + t * xs)) * np.sqrt(np.clip((b - xs) * (xs - a), 0, None))
    out = np.where(inside, val, 0.0)
    return out[()] if out.ndim == 0 else out


def ik_quadrature(law, k):
    """``I_k = int (x / (x + s/t))^k dF_{s,t}(x)`` by adaptive quadrature.

    The atom at zero (``s > 1``) contributes nothing for ``k >= 1``.
    """
    k = _check_order(k, 1)
    shift = law.s / law.t
    return law.transformed_integral(lambda x: (x / (x + shift)) ** k)


def ik_closed(t, k):
    """Closed form of ``I_k`` at ``s = 1`` (``h = 1``) from the residue at ``z = -t``.

    Sums over ``j1 + j2 + j3 + j4 = k`` with ``j2 <= 2``; all binomials exact.
    """
    k = _check_order(k, 1)
    if not 0 < t < 1:
        raise ValueError(f"t must lie in (0, 1), got {t}")
    total = 0.0
    for j1 in range(k + 1):
        for j2 in range(min(2, k - j1) + 1):
            for j4 in range(k - j1 - j2 + 1):
                j3 = k - j1 - j2 - j4
                coef = math.comb(2 * k, j1) * math.comb(2, j2) * math.comb(k + j4, j4)
                sign = -1 if (j4 - j2 + 1) % 2 else 1
                total += (
                    sign
                    * coef
                    * (1 - t) ** (k - j1 - j4)
                    * (1 + t) ** (1 - j2 - k - j4)
                    * t ** (k + j4 - j3)
                )
    return -(1 - t) / (2 * t) - total / (2 * t)


def ik_first_moments(s, t):
    """Closed forms ``(I_1, I_2)`` valid for every ``(s, t)``."""
    return t / (s + t), t**2 * (s**2 + s + t) / (s + t) ** 3


# -- Kesten-McKay --------------------------------------------------------------


@dataclass(frozen=True)
class KestenMcKay:
    """Kesten-McKay law of degree ``m`` pushed through ``x = u + v*y``.

    The base density ``m sqrt(4(m-1) - y^2) / (2 pi (m^2 - y^2))`` is a
    probability density only for ``m >= 2`` (its mass is ``m - 1`` below),
    so smaller degrees are rejected. ``m = 2`` is the arcsine law on
    ``[-2, 2]``; ``m -> inf`` approaches the semicircle.
    """

    m: float
    u: float = 0.0
    v: float = 1.0
    name = "kesten-mckay"

    def __post_init__(self):
        if not (np.isfinite(self.m) and self.m >= 2.0):
            raise ConfigError(f"Kesten-McKay degree must be >= 2, got {self.m}")
        if not self.v > 0:
            raise ConfigError(f"scale v must be positive, got {self.v}")

    @property
    def radius(self):
        return 2.0 * math.sqrt(self.m - 1.0)

    @property
    def support(self):
        r = self.v * self.radius
        return (self.u - r, self.u + r)

    def params(self):
        return {"m": self.m, "u": self.u, "v": self.v}

    def pdf(self, x):
        return km_pdf(self, x)

    def _angle_weight(self, phi):
        # base density times dy under y = R cos(phi); m^2 - y^2 = (m-2)^2 + R^2 sin^2
        m, R = self.m, self.radius
        sn2 = np.sin(phi) ** 2
        if m == 2.0:
            ratio = np.full_like(np.asarray(phi, dtype=float), 1.0 / R**2)
        else:
            ratio = sn2 / ((m - 2.0) ** 2 + R**2 * sn2)
        return m * R**2 * ratio / (2.0 * np.pi)

    def base_moment(self, k):
        """``E[Y^k]`` for the unmapped law, by quadrature."""
        k = _check_order(k)
        if k % 2:
            return 0.0
        R = self.radius
        return _integrate(lambda ph: (R * math.cos(ph)) ** k * self._angle_weight(ph), 0.0, math.pi)

    def moment(self, k):
        k = _check_order(k)
        return sum(
            math.comb(k, j) * self.u ** (k - j) * self.v**j * self.base_moment(j)
            for j in range(0, k + 1, 2)
        )

    @lru_cache(maxsize=None)
    def _table(self):
        phi = np.linspace(0.0, np.pi, _TABLE_POINTS)
        G = cumulative_simpson(self._angle_weight(phi), x=phi, initial=0.0)
        G /= G[-1]
        # P(Y <= R cos(phi)) = 1 - G(phi); reverse so both axes increase
        y = self.radius * np.cos(phi[::-1])
        return self.u + self.v * y, 1.0 - G[::-1]

    def cdf(self, x):
        xs, F = self._table()
        out = np.interp(np.asarray(x, dtype=float), xs, F, left=0.0, right=1.0)
        return out[()] if np.ndim(out) == 0 else out

    def quantile(self, u):
        xs, F = self._table()
        out = np.interp(np.clip(np.asarray(u, dtype=float), 0.0, 1.0), F, xs)
        return out[()] if np.ndim(out) == 0 else out


def km_pdf(fam, x):
    x = np.asarray(x, dtype=float)
    m, R = fam.m, fam.radius
    y = (x - fam.u) / fam.v
    inside = np.abs(y) <= R
    ys = np.where(inside, y, 0.0)
    val = m * np.sqrt(np.clip(R * R - ys * ys, 0.0, None)) / (2.0 * np.pi * (m * m - ys * ys))
    out = np.where(inside, val / fam.v, 0.0)
    return out[()] if out.ndim == 0 else out


KM_DEGREE_BOUNDS = (2.0, 64.0)


def km_fit(moments):
    """Fit a :class:`KestenMcKay` law to raw moments ``[1, m1, m2, m3, m4, ...]``.

    Location and scale match the mean and variance exactly. The degree
    minimizes the squared gap in the third and fourth raw moments over
    ``m`` in ``[2, 64]``, using the base moments ``E Y^2 = m`` and
    ``E Y^4 = m (2m - 1)``.

    Raises
    ------
    FitFailure
        If fewer than five moments are given, ``moments[0] != 1``, or the
        implied variance is not positive.
    """
    mom = np.asarray(moments, dtype=float)
    if mom.ndim != 1 or mom.size < 5:
        raise FitFailure(f"need raw moments up to order 4, got {mom.size} values")
    if not np.all(np.isfinite(mom[:5])):
        raise FitFailure("non-finite moments")
    if abs(mom[0] - 1.0) > 1e-9:
        raise FitFailure(f"moments[0] must be 1, got {mom[0]}")
    mean = mom[1]
    var = mom[2] - mean**2
    if not var > 1e-12 * max(1.0, mom[2]):
        raise FitFailure(f"variance {var:.3e} is not positive")

    def fitted(m):
        u, v2 = mean, var / m
        m3 = u**3 + 3 * u * v2 * m
        m4 = u**4 + 6 * u**2 * v2 * m + v2**2 * m * (2 * m - 1)
        return m3, m4

    def objective(m):
        m3, m4 = fitted(m)
        return (m3 - mom[3]) ** 2 + (m4 - mom[4]) ** 2

    res = minimize_scalar(objective, bounds=KM_DEGREE_BOUNDS, method="bounded",
                          options={"xatol": 1e-10})
    m = float(res.x)
    # the bounded search never lands exactly on an endpoint
    for edge in KM_DEGREE_BOUNDS:
        if objective(edge) <= objective(m):
            m = edge
    return KestenMcKay(m=m, u=float(mean), v=float(math.sqrt(var / m)))
