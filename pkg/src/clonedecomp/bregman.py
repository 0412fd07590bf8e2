"""Binomial Bregman geometry, the penalized objective and the IBP prior.

The solver only ever needs :func:`objective_q`; the canonical-form and
divergence helpers exist so the asymptotic construction can be checked
numerically (pmf factorisation, variance scaling, gamma/beta coupling).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, xlogy

from .core import (DomainError, GenotypeMatrix, Mode, ModelConfig, ReadCountMatrix,
                   WeightMatrix, check_dimensions, expected_vaf)


def binom_kernel(n, N, p):
    """Negative binomial log-likelihood without the combinatorial term.

    ``-n log p - (N - n) log(1 - p)``, elementwise.  ``p`` must already be
    clamped into the open unit interval.
    """
    n = np.asarray(n, dtype=float)
    N = np.asarray(N, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)) or np.any(~(p < 1)):
        raise DomainError("p must lie strictly inside (0, 1)")
    out = -xlogy(n, p) - xlogy(N - n, 1.0 - p)
    return out if out.ndim else float(out)


def clamp_probability(p, eps: float):
    return np.clip(p, eps, 1.0 - eps)


def cell_kernels(counts: ReadCountMatrix, Z: GenotypeMatrix, W: WeightMatrix,
                 cfg: ModelConfig) -> np.ndarray:
    check_dimensions(counts, Z, W)
    p = clamp_probability(expected_vaf(Z, W, cfg.p0), cfg.p_clamp_eps)
    return binom_kernel(counts.n, counts.N, p)


def objective_q(counts: ReadCountMatrix, Z: GenotypeMatrix, W: WeightMatrix,
                cfg: ModelConfig) -> float:
    """Penalized objective: summed binomial kernels plus ``C * lambda_sq``."""
    return float(cell_kernels(counts, Z, W, cfg).sum() + Z.C * cfg.lambda_sq)


def phi(x, N):
    """Convex generator of the binomial divergence, with ``0 log 0 = 0``."""
    x = np.asarray(x, dtype=float)
    N = np.asarray(N, dtype=float)
    return xlogy(x, x / N) + xlogy(N - x, (N - x) / N)


def bregman_divergence(n, mu, N):
    """``phi(n) - phi(mu) - (n - mu) * phi'(mu)`` for the binomial generator."""
    n = np.asarray(n, dtype=float)
    mu = np.asarray(mu, dtype=float)
    N = np.asarray(N, dtype=float)
    if np.any(~(mu > 0)) or np.any(~(mu < N)):
        raise DomainError("mu must lie strictly inside (0, N)")
    if np.any(n < 0) or np.any(n > N):
        raise DomainError("n must lie in [0, N]")
    grad = np.log(mu) - np.log(N - mu)
    d = phi(n, N) - phi(mu, N) - (n - mu) * grad
    # rounding can leave a tiny negative value at n == mu
    d = np.maximum(d, 0.0)
    return d if d.ndim else float(d)


def log_binom_coeff(n, N):
    return gammaln(np.asarray(N) + 1.0) - gammaln(np.asarray(n) + 1.0) - gammaln(
        np.asarray(N) - np.asarray(n) + 1.0)


def binom_pmf_via_bregman(n, N, p):
    """Binomial pmf assembled as ``exp(-d_phi(n, N p)) * f_phi(n)``.

    ``f_phi(n) = exp(phi(n) - h1(n))`` with ``h1(n) = -log C(N, n)``.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)) or np.any(~(p < 1)):
        raise DomainError("p must lie strictly inside (0, 1)")
    n = np.asarray(n, dtype=float)
    N = np.asarray(N, dtype=float)
    h1 = -log_binom_coeff(n, N)
    out = np.exp(-bregman_divergence(n, N * p, N) + phi(n, N) - h1)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class CanonicalBinomial:
    """Binomial(N, p) written with natural parameter ``eta = logit(p)``."""

    N: int
    eta: float

    def psi(self) -> float:
        return self.N * float(np.logaddexp(0.0, self.eta))

    @property
    def mean(self) -> float:
        return self.N * float(expit(self.eta))

    @property
    def variance(self) -> float:
        s = float(expit(self.eta))
        return self.N * s * (1.0 - s)

    def log_pmf(self, n):
        h1 = -log_binom_coeff(n, self.N)
        return np.asarray(n) * self.eta - self.psi() - h1


def scaled_moments(eta: float, N: int, beta: float) -> tuple[float, float]:
    """Mean and variance of the power-scaled binomial.

    Scaling replaces ``eta`` by ``beta * eta`` and ``psi`` by
    ``beta * psi(. / beta)``; derivatives are taken in the scaled parameter.
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    eta_tilde = beta * eta
    s = float(expit(eta_tilde / beta))
    mean = N * s
    variance = beta * (N * s * (1.0 - s)) / beta**2
    return mean, variance


@dataclass(frozen=True)
class ScalingConfig:
    beta: float
    gamma: float

    @classmethod
    def coupled(cls, beta: float, lambda_sq: float) -> "ScalingConfig":
        """IBP mass that vanishes as the variance shrinks: ``exp(-beta lambda^2)``."""
        return cls(beta=beta, gamma=math.exp(-beta * lambda_sq))


def harmonic(S: int) -> float:
    return float(np.sum(1.0 / np.arange(1, S + 1)))


def log_ibp_prior(Z: GenotypeMatrix, gamma: float, pi=None) -> float:
    """Log density of the IBP over feature matrices with unordered columns.

    Subclone genotypes need per-column heterozygosity probabilities ``pi``;
    a column counts an SNV when its entry is nonzero.
    """
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    z = Z.entries
    S, C = z.shape
    m = (z > 0).sum(axis=0)
    if np.any(m == 0):
        raise DomainError("all-zero feature column has zero IBP density")
    out = C * math.log(gamma) - gamma * harmonic(S) - math.lgamma(C + 1)
    out += float(np.sum(gammaln(S - m + 1) + gammaln(m) - gammaln(S + 1)))
    if Z.mode is Mode.SUBCLONE:
        if pi is None:
            raise DomainError("subclone prior needs per-column pi values")
        pi = np.asarray(pi, dtype=float)
        if pi.shape != (C,) or np.any(~(pi > 0)) or np.any(~(pi < 1)):
            raise DomainError("pi must hold one value in (0, 1) per column")
        m1 = (z == 1).sum(axis=0)
        out += float(np.sum(m1 * np.log(pi) + (m - m1) * np.log1p(-pi)))
    return out
