"""Synthetic nested-haplotype and subclone data sets with known truth."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import GenotypeMatrix, Mode, ReadCountMatrix, WeightMatrix, expected_vaf
from .solver import stream_rng

# haplotype c carries the first BLOCK_ENDS[c] SNVs of an 80-SNV panel
BLOCK_ENDS = (10, 25, 40, 60)
REFERENCE_S = 80
WEIGHT_CONCENTRATION = (1.0, 5.0, 6.0, 10.0)
BACKGROUND_CONCENTRATION = 0.2


@dataclass(frozen=True)
class SimTruth:
    Z_true: GenotypeMatrix
    W_true: WeightMatrix
    p0: float
    N_depth: int
    seed: int


@dataclass(frozen=True)
class ColumnMatch:
    matched: bool
    permutation: tuple[tuple[int, int], ...]
    hamming: int
    unmatched_est: tuple[int, ...]
    unmatched_true: tuple[int, ...]


def block_ends(S: int) -> list[int]:
    if S == REFERENCE_S:
        return list(BLOCK_ENDS)
    return [min(S, max(1, int(round(b * S / REFERENCE_S)))) for b in BLOCK_ENDS]


def nested_haplotypes(S: int) -> np.ndarray:
    ends = block_ends(S)
    Z = np.zeros((S, len(ends)), dtype=np.int8)
    for c, e in enumerate(ends):
        Z[:e, c] = 1
    return Z


def _weights(rng: np.random.Generator, T: int) -> np.ndarray:
    W = np.empty((T, len(WEIGHT_CONCENTRATION) + 1))
    base = np.array(WEIGHT_CONCENTRATION)
    for t in range(T):
        alpha = np.concatenate([[BACKGROUND_CONCENTRATION], rng.permutation(base)])
        W[t] = rng.dirichlet(alpha)
    # Dirichlet draws can underflow to exact zeros; the simplex tolerance is what matters
    return W / W.sum(axis=1, keepdims=True)


def _counts(rng, Zm: GenotypeMatrix, Wm: WeightMatrix, p0: float, depth: int):
    p = expected_vaf(Zm, Wm, p0)
    N = np.full(p.shape, depth, dtype=np.int64)
    n = rng.binomial(N, p)
    S, T = p.shape
    return ReadCountMatrix(n, N, tuple(f"snv{i + 1}" for i in range(S)),
                           tuple(f"sample{j + 1}" for j in range(T)))


def simulate_haplotype(seed: int, S: int = 80, T: int = 25, depth: int = 50,
                       p0: float = 0.01) -> tuple[ReadCountMatrix, SimTruth]:
    """Four nested haplotypes over the first 10/25/40/60 SNVs (scaled for other S).

    Each sample mixes background and haplotypes with
    ``Dirichlet(0.2, permutation of (1, 5, 6, 10))`` proportions.
    """
    rng = stream_rng(seed, "sim", "haplotype")
    Zm = GenotypeMatrix(nested_haplotypes(S), Mode.HAPLOTYPE)
    Wm = WeightMatrix(_weights(rng, T))
    counts = _counts(rng, Zm, Wm, p0, depth)
    return counts, SimTruth(Zm, Wm, p0, depth, seed)


def simulate_subclone(seed: int, S: int = 80, T: int = 25, depth: int = 50,
                      p0: float = 0.01, het_prob: float = 0.7) -> tuple[ReadCountMatrix, SimTruth]:
    """Nested structure lifted to allele counts: each carried SNV is 1 w.p. ``het_prob``, else 2."""
    rng = stream_rng(seed, "sim", "subclone")
    Z = nested_haplotypes(S)
    lift = np.where(rng.random(Z.shape) < het_prob, 1, 2).astype(np.int8)
    Zm = GenotypeMatrix(Z * lift, Mode.SUBCLONE)
    Wm = WeightMatrix(_weights(rng, T))
    counts = _counts(rng, Zm, Wm, p0, depth)
    return counts, SimTruth(Zm, Wm, p0, depth, seed)


def match_columns(Z_est: GenotypeMatrix, Z_true: GenotypeMatrix) -> ColumnMatch:
    """Column assignment minimising total Hamming distance between the matched pairs."""
    a = np.asarray(Z_est.entries, dtype=np.int64)
    b = np.asarray(Z_true.entries, dtype=np.int64)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"SNV counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[1] == 0 or b.shape[1] == 0:
        return ColumnMatch(a.shape[1] == b.shape[1], (), 0,
                           tuple(range(a.shape[1])), tuple(range(b.shape[1])))
    cost = (a[:, :, None] != b[:, None, :]).sum(axis=0)
    rows, cols = linear_sum_assignment(cost)
    ham = int(cost[rows, cols].sum())
    perm = tuple((int(r), int(c)) for r, c in zip(rows, cols))
    un_est = tuple(sorted(set(range(a.shape[1])) - set(rows.tolist())))
    un_true = tuple(sorted(set(range(b.shape[1])) - set(cols.tolist())))
    return ColumnMatch(a.shape[1] == b.shape[1] and ham == 0, perm, ham, un_est, un_true)
