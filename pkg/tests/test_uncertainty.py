import itertools

import numpy as np
import pytest
from scipy.integrate import quad

from clonedecomp.core import (DomainError, GenotypeMatrix, Mode, ModelConfig, ReadCountMatrix,
                              Solution, WeightMatrix)
from clonedecomp.uncertainty import (ConditionalSampler, McmcConfig, UncertaintyMatrix,
                                     conditional_mcmc)


def _solution(Z, W, mode=Mode.HAPLOTYPE):
    Zm, Wm = GenotypeMatrix(Z, mode), WeightMatrix(W)
    return Solution(Zm.C, Zm, Wm, 0.0, 0, 0)


def exact_marginal(counts, Z_hat, W, model, s, c):
    """P(z_sc = z_hat_sc) for fixed weights, by enumerating every genotype matrix."""
    S, C = Z_hat.shape
    vals = range(model.mode.max_entry + 1)
    logw, agree = [], []
    for flat in itertools.product(vals, repeat=S * C):
        Z = np.array(flat).reshape(S, C)
        p = model.p0 * W[:, 0][None, :] + model.mode.scale * Z @ W[:, 1:].T
        p = np.clip(p, model.p_clamp_eps, 1 - model.p_clamp_eps)
        logw.append(float(np.sum(counts.n * np.log(p) + (counts.N - counts.n) * np.log1p(-p))))
        agree.append(Z[s, c] == Z_hat[s, c])
    logw = np.array(logw)
    w = np.exp(logw - logw.max())
    return float(w[np.array(agree)].sum() / w.sum())


def ambiguous_toy():
    # p0 = 1/2 makes p(z=0) = w0/2 and p(z=1) = 1 - w0/2 mirror images, and
    # n = N/2 on SNV 1 gives both values the same likelihood
    counts = ReadCountMatrix([[10], [18]], [[20], [20]])
    model = ModelConfig(p0=0.5)
    W = np.array([[0.4, 0.6]])
    Z = np.array([[1], [1]])
    return counts, model, Z, W


def test_ambiguous_entry_matches_enumeration():
    counts, model, Z, W = ambiguous_toy()
    exact = exact_marginal(counts, Z, W, model, 0, 0)
    assert exact == pytest.approx(0.5, abs=1e-12)
    cfg = McmcConfig(iterations=10000, rng_seed=3, update_weights=False)
    res = conditional_mcmc(counts, _solution(Z, W), cfg, model)
    assert abs(res.p_bar[0, 0] - exact) < 0.05
    assert res.p_bar[1, 0] == pytest.approx(exact_marginal(counts, Z, W, model, 1, 0), abs=0.02)


def test_gibbs_matches_enumeration_two_features():
    # shallow depth keeps the single-site chain mixing quickly
    model = ModelConfig(p0=0.05)
    W = np.array([[0.3, 0.45, 0.25], [0.2, 0.2, 0.6]])
    Z = np.array([[1, 0], [0, 1], [1, 1]])
    counts = ReadCountMatrix([[1, 1], [2, 0], [2, 3]], np.full((3, 2), 3))
    cfg = McmcConfig(iterations=20000, rng_seed=1, update_weights=False)
    res = conditional_mcmc(counts, _solution(Z, W), cfg, model)
    for s in range(3):
        for c in range(2):
            assert res.p_bar[s, c] == pytest.approx(
                exact_marginal(counts, Z, W, model, s, c), abs=0.03)


def test_subclone_gibbs_matches_enumeration():
    model = ModelConfig(p0=0.05, mode="subclone")
    W = np.array([[0.2, 0.8]])
    Z = np.array([[1], [2]])
    counts = ReadCountMatrix([[7], [12]], [[20], [20]])
    cfg = McmcConfig(iterations=20000, rng_seed=2, update_weights=False)
    res = conditional_mcmc(counts, _solution(Z, W, Mode.SUBCLONE), cfg, model)
    for s in range(2):
        assert res.p_bar[s, 0] == pytest.approx(
            exact_marginal(counts, Z, W, model, s, 0), abs=0.02)


def test_mh_weights_target_posterior():
    # one SNV, one sample, z fixed at 1: the posterior of w1 is
    # Beta(a, a0) prior times the binomial likelihood at p = p0 w0 + w1
    counts = ReadCountMatrix([[6]], [[10]])
    model = ModelConfig(p0=0.1)
    cfg = McmcConfig(iterations=1, rng_seed=4, a0=2.0, a=1.5, mh_step_concentration=20)
    chain = ConditionalSampler(counts, np.array([[1]]), np.array([[0.5, 0.5]]), model, cfg)
    chain.log_prior = np.array([[-np.inf, 0.0]])  # pin z = 1
    draws = []
    for it in range(40000):
        chain.mh_sweep()
        if it >= 1000:
            draws.append(chain.W[0, 1])

    def dens(x):
        p = 0.1 * (1 - x) + x
        return (1 - x) ** (cfg.a0 - 1) * x ** (cfg.a - 1) * p ** 6 * (1 - p) ** 4

    Z0 = quad(dens, 0, 1)[0]
    mean = quad(lambda x: x * dens(x), 0, 1)[0] / Z0
    draws = np.array(draws)
    # thinned batches give an honest standard error under autocorrelation
    batches = draws[: len(draws) // 50 * 50].reshape(50, -1).mean(axis=1)
    se = batches.std(ddof=1) / np.sqrt(50)
    assert abs(draws.mean() - mean) < 4 * se + 2e-3
    assert 0.05 < chain.accepted / chain.proposed < 0.95


def test_chain_invariance_from_perturbed_start():
    rng = np.random.default_rng(8)
    model = ModelConfig(p0=0.02)
    Z = np.array([[1, 0], [1, 1], [0, 1], [0, 0]])
    W = np.array([[0.2, 0.5, 0.3], [0.3, 0.3, 0.4]])
    N = np.full((4, 2), 8)
    p = 0.02 * W[:, 0][None, :] + Z @ W[:, 1:].T
    counts = ReadCountMatrix(rng.binomial(N, p), N)
    cfg = McmcConfig(iterations=10000, rng_seed=1)
    a = conditional_mcmc(counts, _solution(Z, W), cfg, model)
    Zp = Z.copy()
    Zp[0, 0] = 0
    chain = ConditionalSampler(counts, Zp, W, model, McmcConfig(iterations=10000, rng_seed=2))
    agree = np.zeros(Z.shape)
    for _ in range(10000):
        chain.step()
        agree += chain.Z == Z
    assert np.all(np.abs(a.p_bar - agree / 10000) < 0.05)


def test_errors_and_ranges():
    counts, model, Z, W = ambiguous_toy()
    with pytest.raises(DomainError):
        conditional_mcmc(counts, _solution(np.zeros((2, 0)), np.ones((1, 1))), McmcConfig(),
                         model)
    with pytest.raises(ValueError):
        McmcConfig(iterations=0)
    with pytest.raises(ValueError):
        McmcConfig(iterations=5, burn_in=5)
    res = conditional_mcmc(counts, _solution(Z, W), McmcConfig(iterations=50, burn_in=10),
                           model)
    assert np.all((res.p_bar >= 0) & (res.p_bar <= 1))
    with pytest.raises(DomainError):
        UncertaintyMatrix(np.array([[1.5]]))


def test_deterministic_given_seed():
    counts, model, Z, W = ambiguous_toy()
    cfg = McmcConfig(iterations=300, rng_seed=9)
    a = conditional_mcmc(counts, _solution(Z, W), cfg, model)
    b = conditional_mcmc(counts, _solution(Z, W), cfg, model)
    assert np.array_equal(a.p_bar, b.p_bar)
