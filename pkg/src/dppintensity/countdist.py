"""Exact distributions of point counts and Poisson-approximation bounds.

For a DPP the number of points in a set is a sum of independent
Bernoulli variables with the spectral eigenvalues as success
probabilities.  This module computes that Poisson-Binomial law exactly,
compares it to the Poisson law with the same nominal mean, and evaluates
the constants and conditions that control the comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .sampler import SpectralModel

__all__ = [
    "CountPmf",
    "ApproxConstants",
    "BoundReport",
    "poisson_pmf",
    "poisson_binomial_pmf",
    "default_m_max",
    "omega",
    "approx_constants",
    "check_condition_amed",
    "d0_d1_check",
    "jittered_median",
    "s_n_diagnostic",
]

SQRT_E_M1 = math.sqrt(math.e) - 1.0


@dataclass(frozen=True)
class CountPmf:
    """Probabilities of ``m = 0..m_max`` plus the mass beyond ``m_max``."""

    probs: np.ndarray
    tail: float

    @property
    def m_max(self) -> int:
        return self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probs.size)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def variance(self) -> float:
        m = self.support
        mu = self.mean()
        return float(np.dot((m - mu) ** 2, self.probs))

    def mode(self) -> int:
        return int(np.argmax(self.probs))

    def __getitem__(self, m):
        return self.probs[m]


def default_m_max(mean: float, variance: float) -> int:
    return int(math.ceil(mean + 12.0 * math.sqrt(max(variance, 1.0))))


def poisson_pmf(theta: float, m_max: int | None = None) -> CountPmf:
    """Poisson(``theta``) probabilities, computed in log space."""
    if not theta > 0:
        raise ValueError("theta must be positive")
    if m_max is None:
        m_max = default_m_max(theta, theta)
    m = np.arange(m_max + 1)
    logp = m * math.log(theta) - theta - special.gammaln(m + 1.0)
    return CountPmf(np.exp(logp), float(stats.poisson.sf(m_max, theta)))


def poisson_binomial_pmf(probs, m_max: int | None = None) -> CountPmf:
    """Exact law of a sum of independent Bernoulli(``probs``) variables.

    Uses the ``O(len(probs) * m_max)`` convolution recurrence.  Each update
    is a convex combination, so the recurrence cannot overflow; mass pushed
    past ``m_max`` is accumulated into ``tail``.
    """
    p = np.asarray(probs, dtype=float).ravel()
    if np.any(p < 0) or np.any(p >= 1):
        raise ValueError("probabilities must lie in [0, 1)")
    if m_max is None:
        m_max = default_m_max(p.sum(), float(np.sum(p * (1 - p))))
    # modes with negligible weight only shift mass by at most their sum
    p = p[p > 0]
    pmf = np.zeros(m_max + 1)
    pmf[0] = 1.0
    tail = 0.0
    top = 0
    for q in np.sort(p)[::-1]:
        tail += pmf[m_max] * q
        hi = min(top + 1, m_max)
        pmf[1 : hi + 1] = pmf[1 : hi + 1] * (1.0 - q) + pmf[:hi] * q
        pmf[0] *= 1.0 - q
        top = hi
    return CountPmf(pmf, float(tail))


def omega(m, ell: float):
    """``((m - ell)**2 - m) / ell**2``."""
    if not ell > 0:
        raise ValueError("ell must be positive")
    m = np.asarray(m, dtype=float)
    out = ((m - ell) ** 2 - m) / ell**2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ApproxConstants:
    lam: float
    C0: float
    kappa0: float
    kappa1: float


def approx_constants(lam: float, C0: float) -> ApproxConstants:
    """Constants of the Poisson approximation for a DPP with ``int C^2 = C0``."""
    if not lam > 0:
        raise ValueError("intensity must be positive")
    if C0 < 0 or C0 >= lam:
        raise ValueError(f"need 0 <= C0 < lam, got C0={C0}, lam={lam}")
    gap = lam - C0
    k0 = math.sqrt(3.0) * SQRT_E_M1 * C0 * math.sqrt(lam) / gap**2
    k1 = 0.5 * math.sqrt(15.0) * SQRT_E_M1 * C0**2 * math.sqrt(lam) / gap**3
    return ApproxConstants(lam=lam, C0=C0, kappa0=k0, kappa1=k1)


def check_condition_amed(lam: float, C0: float) -> tuple[float, bool]:
    """Sufficient condition for a positive density at the jittered median.

    Returns the value of the max-expression and whether it is positive.
    """
    k = approx_constants(lam, C0)
    base = (2.0 * math.pi * lam) ** -0.5
    value = max(base - k.kappa0, base * (1.0 + C0 / (2.0 * lam)) - k.kappa1)
    return value, value > 0


@dataclass(frozen=True)
class BoundReport:
    S_volume: float
    kappa0: float
    kappa1: float
    sup_d0: float
    bound_d0: float
    bound_ok: bool
    sup_d1: float
    residual: float

    def to_dict(self) -> dict:
        return {
            "S_volume": self.S_volume,
            "kappa0": self.kappa0,
            "sup_d0": self.sup_d0,
            "bound_d0": self.bound_d0,
            "bound_ok": self.bound_ok,
            "kappa1": self.kappa1,
            "sup_d1": self.sup_d1,
            "residual": self.residual,
        }


def d0_d1_check(model: SpectralModel, lam: float, C0: float, slack: float = 0.0,
                complete_tail: bool = True) -> BoundReport:
    """Compare the exact count law of ``model`` with Poisson(``lam |S|``).

    ``sup_d0`` is checked against ``kappa0 / sqrt|S|`` (plus ``slack`` for
    truncation error).  The second-order bound involves a constant that is
    not known explicitly, so only the residual
    ``|S| (sup_d1 - kappa1 / sqrt|S|)`` is reported.

    The eigenvalues of the full (untruncated) expansion sum to ``lam |S|``.
    With ``complete_tail`` the mass ``lam |S| - sum(beta)`` dropped by the
    frequency cutoff is restored as an independent Poisson term; the modes
    it stands for are all tiny, so by Le Cam's inequality this changes the
    law by at most ``2 * max(beta_tail) * missing`` in total variation.
    """
    vol = model.window.volume
    k = approx_constants(lam, C0)
    ell = lam * vol
    m_max = default_m_max(max(ell, model.total), max(ell, model.variance))
    exact = poisson_binomial_pmf(model.eigenvalues, m_max)
    missing = ell - model.total
    if complete_tail and missing > 0:
        extra = poisson_pmf(missing, m_max)
        exact = CountPmf(np.convolve(exact.probs, extra.probs)[: m_max + 1], exact.tail)
    ref = poisson_pmf(ell, m_max)
    m = exact.support
    d0 = exact.probs - ref.probs
    d1 = exact.probs - ref.probs * (1.0 - vol * omega(m, ell) * C0 / 2.0)
    sup_d0 = float(np.max(np.abs(d0)))
    sup_d1 = float(np.max(np.abs(d1)))
    bound = k.kappa0 / math.sqrt(vol)
    return BoundReport(
        S_volume=vol,
        kappa0=k.kappa0,
        kappa1=k.kappa1,
        sup_d0=sup_d0,
        bound_d0=bound,
        bound_ok=sup_d0 <= bound + slack,
        sup_d1=sup_d1,
        residual=vol * (sup_d1 - k.kappa1 / math.sqrt(vol)),
    )


def jittered_median(pmf: CountPmf) -> float:
    """Median of ``N + U`` with ``U ~ U(0, 1)`` independent of ``N ~ pmf``.

    The cdf of ``N + U`` interpolates the cdf of ``N`` linearly between
    integers, so the median is found in closed form.
    """
    cdf = pmf.cdf()
    m = int(np.searchsorted(cdf, 0.5))
    below = cdf[m - 1] if m > 0 else 0.0
    return m + (0.5 - below) / pmf.probs[m]


def s_n_diagnostic(model: SpectralModel, c_n: float | None = None) -> float:
    """``sqrt(c_n) P(N = floor(Me_Z))`` for a model built on one cell."""
    if c_n is None:
        c_n = model.window.volume
    pmf = poisson_binomial_pmf(model.eigenvalues)
    me = jittered_median(pmf)
    return math.sqrt(c_n) * float(pmf.probs[int(math.floor(me))])
