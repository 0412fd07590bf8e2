"""Posterior agreement probabilities for a point estimate, with C held fixed.

The chain starts at the estimate and alternates a Gibbs sweep over genotype
entries with a Metropolis-Hastings update of each weight row.  For each
entry it reports the fraction of draws that agree with the estimate.

The fixed-C prior on genotypes is flat: independent fair coins for
haplotypes; for subclones, zero versus nonzero is a fair coin and a nonzero
entry is 1 with probability ``pi[c]`` (or uniform over {0, 1, 2} without
``pi``).  Weight rows get a ``Dirichlet(a0, a, ..., a)`` prior.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import gammaln, xlogy

from .core import DomainError, Mode, ModelConfig, ReadCountMatrix, Solution, check_dimensions
from .solver import stream_rng

START_NUDGE = 1e-4


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 1000
    burn_in: int = 0
    a0: float = 1.0
    a: float = 1.0
    mh_step_concentration: float = 100.0
    rng_seed: int = 0
    update_weights: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")
        if not (self.a0 > 0 and self.a > 0):
            raise ValueError("Dirichlet prior parameters must be positive")
        if not self.mh_step_concentration > 0:
            raise ValueError("mh_step_concentration must be positive")


@dataclass(frozen=True)
class UncertaintyMatrix:
    p_bar: np.ndarray
    # fraction of proposed weight moves that were accepted
    acceptance_rate: float = float("nan")

    def __post_init__(self):
        p = np.array(self.p_bar, dtype=float, copy=True)
        if p.ndim != 2 or np.any(p < 0) or np.any(p > 1):
            raise DomainError("p_bar must be a matrix of values in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p_bar", p)


def genotype_log_prior(mode: Mode, C: int, pi=None) -> np.ndarray:
    """C x (max_entry + 1) table of log prior weights for one entry."""
    if mode is Mode.HAPLOTYPE:
        return np.full((C, 2), np.log(0.5))
    if pi is None:
        return np.full((C, 3), -np.log(3.0))
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (C,) or np.any(~(pi > 0)) or np.any(~(pi < 1)):
        raise DomainError("pi must hold one value in (0, 1) per column")
    return np.log(0.5) + np.column_stack([np.zeros(C), np.log(pi), np.log1p(-pi)])


@njit(cache=True)
def _loglik_row(n, N, P, s, eps):
    out = 0.0
    for t in range(P.shape[1]):
        p = min(max(P[s, t], eps), 1.0 - eps)
        out += n[s, t] * np.log(p) + (N[s, t] - n[s, t]) * np.log1p(-p)
    return out


@njit(cache=True)
def _gibbs_sweep(n, N, Z, W, P, log_prior, scale, eps, u):
    """One systematic-scan Gibbs pass over all entries; updates Z and P in place."""
    S, C = Z.shape
    T = W.shape[0]
    V = log_prior.shape[1]
    logp = np.empty(V)
    for s in range(S):
        for c in range(C):
            cur = Z[s, c]
            for v in range(V):
                for t in range(T):
                    P[s, t] += scale * (v - cur) * W[t, c + 1]
                logp[v] = log_prior[c, v] + _loglik_row(n, N, P, s, eps)
                for t in range(T):
                    P[s, t] -= scale * (v - cur) * W[t, c + 1]
            m = logp.max()
            total = 0.0
            for v in range(V):
                logp[v] = np.exp(logp[v] - m)
                total += logp[v]
            x = u[s, c] * total
            new = V - 1
            acc = 0.0
            for v in range(V):
                acc += logp[v]
                if x < acc:
                    new = v
                    break
            if new != cur:
                for t in range(T):
                    P[s, t] += scale * (new - cur) * W[t, c + 1]
                Z[s, c] = new


def _log_dirichlet(x: np.ndarray, alpha: np.ndarray) -> float:
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum() + np.sum(xlogy(alpha - 1.0, x)))


class ConditionalSampler:
    """Markov chain over ``(Z, W)`` with the number of features fixed."""

    def __init__(self, counts: ReadCountMatrix, Z: np.ndarray, W: np.ndarray,
                 model: ModelConfig, cfg: McmcConfig, pi=None):
        self.n = np.ascontiguousarray(counts.n, dtype=np.int64)
        self.N = np.ascontiguousarray(counts.N, dtype=np.int64)
        self.Z = np.array(Z, dtype=np.int64)
        # a row with exact zeros has zero reverse-proposal density and could
        # never move, so the chain starts a hair inside the simplex
        W = np.array(W, dtype=float)
        if cfg.update_weights:
            W = (W + START_NUDGE) / (1.0 + START_NUDGE * W.shape[1])
        self.W = W
        self.model = model
        self.cfg = cfg
        self.scale = model.mode.scale
        self.eps = model.p_clamp_eps
        self.log_prior = genotype_log_prior(model.mode, self.Z.shape[1], pi)
        C = self.Z.shape[1]
        self.prior_alpha = np.concatenate([[cfg.a0], np.full(C, cfg.a)])
        self.rng = stream_rng(cfg.rng_seed, "mcmc")
        self.proposed = 0
        self.accepted = 0
        self._refresh()

    def _refresh(self):
        self.P = model_vaf(self.Z, self.W, self.model.p0, self.scale)

    def _col_loglik(self, t: int, p: np.ndarray) -> float:
        p = np.clip(p, self.eps, 1.0 - self.eps)
        n, N = self.n[:, t], self.N[:, t]
        return float(np.sum(n * np.log(p) + (N - n) * np.log1p(-p)))

    def _proposal_alpha(self, w: np.ndarray) -> np.ndarray:
        # the unit offset keeps every concentration >= 1 when w has exact zeros
        return 1.0 + self.cfg.mh_step_concentration * w

    def gibbs_sweep(self):
        u = self.rng.random(self.Z.shape)
        _gibbs_sweep(self.n, self.N, self.Z, self.W, self.P, self.log_prior,
                     self.scale, self.eps, u)

    def mh_sweep(self):
        for t in range(self.W.shape[0]):
            w = self.W[t]
            alpha_fwd = self._proposal_alpha(w)
            prop = self.rng.dirichlet(alpha_fwd)
            log_u = np.log(self.rng.random())
            self.proposed += 1
            if np.any(prop <= 0):
                continue
            p_new = self.model.p0 * prop[0] + self.scale * (self.Z @ prop[1:])
            ratio = (self._col_loglik(t, p_new) - self._col_loglik(t, self.P[:, t])
                     + _log_dirichlet(prop, self.prior_alpha)
                     - _log_dirichlet(w, self.prior_alpha)
                     + _log_dirichlet(w, self._proposal_alpha(prop))
                     - _log_dirichlet(prop, alpha_fwd))
            if log_u < ratio:
                self.W[t] = prop
                self.P[:, t] = p_new
                self.accepted += 1

    def step(self):
        self.gibbs_sweep()
        if self.cfg.update_weights:
            self.mh_sweep()


def model_vaf(Z: np.ndarray, W: np.ndarray, p0: float, scale: float) -> np.ndarray:
    return p0 * W[:, 0][None, :] + scale * (Z @ W[:, 1:].T)


def conditional_mcmc(counts: ReadCountMatrix, solution: Solution, cfg: McmcConfig,
                     model: ModelConfig, pi=None) -> UncertaintyMatrix:
    """Agreement frequencies ``p_bar[s, c] = P(z_sc == z_hat_sc | data, C_hat)``."""
    if solution.C_hat == 0:
        raise DomainError("the solution has no features to assess")
    check_dimensions(counts, solution.Z_hat, solution.W_hat)
    if solution.Z_hat.mode is not model.mode:
        raise DomainError("solution and model disagree on the genotype mode")
    z_hat = np.asarray(solution.Z_hat.entries, dtype=np.int64)
    chain = ConditionalSampler(counts, z_hat, solution.W_hat.w, model, cfg, pi)
    agree = np.zeros(z_hat.shape)
    kept = 0
    for it in range(cfg.iterations):
        chain.step()
        if it >= cfg.burn_in:
            agree += chain.Z == z_hat
            kept += 1
    rate = chain.accepted / chain.proposed if chain.proposed else float("nan")
    return UncertaintyMatrix(agree / kept, rate)
