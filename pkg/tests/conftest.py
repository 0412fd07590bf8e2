import numpy as np
import pytest

from clonedecomp.core import GenotypeMatrix, Mode, ReadCountMatrix, WeightMatrix


def random_instance(rng, S, T, C, mode=Mode.HAPLOTYPE, depth=(5, 40)):
    """Counts drawn from a random genotype/weight pair."""
    Z = rng.integers(0, mode.max_entry + 1, size=(S, C))
    W = rng.dirichlet(np.ones(C + 1), size=T)
    p = 0.01 * W[:, 0][None, :] + mode.scale * Z @ W[:, 1:].T
    N = rng.integers(depth[0], depth[1] + 1, size=(S, T))
    n = rng.binomial(N, np.clip(p, 0, 1))
    return (ReadCountMatrix(n, N), GenotypeMatrix(Z, mode), WeightMatrix(W))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
