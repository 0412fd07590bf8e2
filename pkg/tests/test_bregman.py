import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from clonedecomp.bregman import (CanonicalBinomial, ScalingConfig, binom_kernel,
                                 binom_pmf_via_bregman, bregman_divergence, harmonic,
                                 log_ibp_prior, objective_q, phi, scaled_moments)
from clonedecomp.core import (DomainError, GenotypeMatrix, Mode, ModelConfig, ReadCountMatrix,
                              WeightMatrix)


def test_kernel_values():
    assert binom_kernel(1, 2, 0.5) == pytest.approx(1.3862943611198906, abs=1e-12)
    assert binom_kernel(1, 2, 0.25) == pytest.approx(1.6739764335716716, abs=1e-12)
    p = np.array([0.3, 0.1, 0.01])
    assert np.allclose(binom_kernel(0, 50, p), -50 * np.log1p(-p))
    assert np.all(np.diff(binom_kernel(0, 50, p)) < 0)


def test_kernel_domain():
    for p in (0.0, 1.0, -0.1, float("nan")):
        with pytest.raises(DomainError):
            binom_kernel(1, 2, p)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 60), st.data())
def test_kernel_at_least_entropy_bound(N, data):
    n = data.draw(st.integers(0, N))
    p = data.draw(st.floats(1e-6, 1 - 1e-6))
    phat = min(max(n / N, 1e-12), 1 - 1e-12)
    assert binom_kernel(n, N, p) >= binom_kernel(n, N, phat) - 1e-9


def test_objective_single_cell():
    counts = ReadCountMatrix([[1]], [[2]])
    # p0 w0 + w1 = 0.5 exactly with w = (0, 1) and z = 0.5 is impossible, so force p via p0
    Z = GenotypeMatrix([[0]])
    W = WeightMatrix([[1.0, 0.0]])
    cfg = ModelConfig(p0=0.5, lambda_sq=2.0)
    assert objective_q(counts, Z, W, cfg) == pytest.approx(1.3862943611198906 + 2.0, abs=1e-12)


def test_objective_empty_feature_set():
    counts = ReadCountMatrix([[1, 0], [3, 2]], [[10, 5], [10, 8]])
    Z = GenotypeMatrix.empty(2)
    W = WeightMatrix(np.ones((2, 1)))
    cfg = ModelConfig(p0=0.05, lambda_sq=8.0)
    expect = binom_kernel(counts.n, counts.N, np.full((2, 2), 0.05)).sum()
    assert objective_q(counts, Z, W, cfg) == pytest.approx(expect, rel=1e-14)


def test_objective_clamps_subclone_overflow():
    counts = ReadCountMatrix([[5]], [[5]])
    Z = GenotypeMatrix([[2, 2]], Mode.SUBCLONE)
    W = WeightMatrix([[0.0, 0.5, 0.5]])
    cfg = ModelConfig(mode="subclone", p_clamp_eps=1e-6)
    assert np.isfinite(objective_q(counts, Z, W, cfg))


def test_divergence_examples():
    assert bregman_divergence(0.5, 0.5, 2) == pytest.approx(0.0, abs=1e-15)
    assert bregman_divergence(1, 0.5, 2) == pytest.approx(0.2876820724517809, abs=1e-12)
    assert bregman_divergence(2, 1.0, 2) == pytest.approx(1.3862943611198906, abs=1e-12)
    assert phi(1, 2) == pytest.approx(-1.3862943611198906)
    assert phi(0.5, 2) == pytest.approx(0.5 * math.log(0.25) + 1.5 * math.log(0.75))


def test_divergence_domain():
    with pytest.raises(DomainError):
        bregman_divergence(1, 0, 2)
    with pytest.raises(DomainError):
        bregman_divergence(1, 2, 2)
    with pytest.raises(DomainError):
        bregman_divergence(3, 1, 2)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 40), st.data())
def test_kernel_minus_entropy_is_divergence(N, data):
    n = data.draw(st.integers(0, N))
    p = data.draw(st.floats(0.001, 0.999))
    lhs = binom_kernel(n, N, p) - (0.0 if n in (0, N) else binom_kernel(n, N, n / N))
    assert lhs == pytest.approx(bregman_divergence(n, N * p, N), rel=1e-9, abs=1e-9)


def test_divergence_strictly_convex_and_positive():
    N, mu = 10, 3.7
    x = np.linspace(0.05, 9.95, 400)
    d = bregman_divergence(x, mu, N)
    assert np.all(np.diff(d, 2) > 0)
    assert np.all(d[np.abs(x - mu) > 1e-6] > 0)


def test_pmf_examples():
    assert binom_pmf_via_bregman(1, 2, 0.25) == pytest.approx(0.375, rel=1e-12)
    assert binom_pmf_via_bregman(0, 5, 0.3) == pytest.approx(0.16807, rel=1e-12)
    assert math.exp(-0.2876820724517809) * 0.5 == pytest.approx(0.375)
    # at the mean the divergence vanishes and only f_phi is left
    n, N = 3, 7
    f_phi = math.exp(phi(n, N) + math.log(math.comb(N, n)))
    assert binom_pmf_via_bregman(n, N, n / N) == pytest.approx(f_phi, rel=1e-12)


def test_pmf_grid_against_scipy():
    p = np.round(np.arange(0.05, 0.951, 0.05), 2)
    for N in range(1, 21):
        n = np.arange(N + 1)[:, None]
        got = binom_pmf_via_bregman(n, N, p[None, :])
        want = binom.pmf(n, N, p[None, :])
        assert np.max(np.abs(got - want) / want) < 1e-12


def test_canonical_moments():
    cb = CanonicalBinomial(4, math.log(3))
    assert cb.mean == pytest.approx(3.0)
    assert cb.variance == pytest.approx(0.75)
    assert 0 < cb.variance <= cb.N / 4
    # log pmf in canonical form agrees with the direct pmf
    for n in range(5):
        assert math.exp(cb.log_pmf(n)) == pytest.approx(binom.pmf(n, 4, 0.75), rel=1e-12)


def test_scaled_moment_examples():
    assert scaled_moments(0.0, 2, 1.0) == pytest.approx((1.0, 0.5))
    assert scaled_moments(0.0, 2, 100.0) == pytest.approx((1.0, 0.005))
    assert scaled_moments(math.log(3), 4, 2.0) == pytest.approx((3.0, 0.375))
    with pytest.raises(DomainError):
        scaled_moments(0.0, 2, 0.0)


def test_gamma_beta_coupling():
    sc = ScalingConfig.coupled(3.0, 2.5)
    assert sc.gamma == pytest.approx(math.exp(-7.5), rel=1e-12)


def test_ibp_closed_forms():
    g = 0.7
    assert log_ibp_prior(GenotypeMatrix.empty(5), g) == pytest.approx(-g * harmonic(5))
    assert log_ibp_prior(GenotypeMatrix([[1]]), 0.5) == pytest.approx(math.log(0.5) - 0.5)
    assert log_ibp_prior(GenotypeMatrix([[1], [1]]), 1.0) == pytest.approx(-1.5 - math.log(2))
    with pytest.raises(DomainError):
        log_ibp_prior(GenotypeMatrix([[1, 0], [1, 0]]), 1.0)


def test_ibp_subclone_pi_terms():
    Z = GenotypeMatrix([[1], [2], [0]], Mode.SUBCLONE)
    base = log_ibp_prior(GenotypeMatrix([[1], [1], [0]]), 1.0)
    got = log_ibp_prior(Z, 1.0, pi=[0.7])
    assert got == pytest.approx(base + math.log(0.7) + math.log(0.3))
    with pytest.raises(DomainError):
        log_ibp_prior(Z, 1.0)


def _sample_ibp(rng, S, gamma):
    """Buffet construction followed by a uniformly random column order."""
    cols = []
    for s in range(1, S + 1):
        for col in cols:
            col.append(int(rng.random() < sum(col) / s))
        for _ in range(rng.poisson(gamma / s)):
            cols.append([0] * (s - 1) + [1])
    order = rng.permutation(len(cols))
    return tuple(tuple(cols[k]) for k in order)


def test_ibp_density_matches_buffet_frequencies():
    rng = np.random.default_rng(7)
    S, gamma, draws = 3, 1.0, 60000
    counts = {}
    for _ in range(draws):
        key = _sample_ibp(rng, S, gamma)
        counts[key] = counts.get(key, 0) + 1
    targets = [((),), (((1, 1, 1),)), ((1, 0, 0), (0, 1, 1)), ((1, 1, 0), (1, 0, 0))]
    for cols in targets:
        cols = tuple(c for c in cols if c)
        Z = (GenotypeMatrix(np.array(cols, dtype=int).T) if cols
             else GenotypeMatrix.empty(S))
        expect = math.exp(log_ibp_prior(Z, gamma))
        freq = counts.get(cols, 0) / draws
        se = math.sqrt(expect * (1 - expect) / draws)
        assert abs(freq - expect) < 4 * se + 1e-4, (cols, freq, expect)
