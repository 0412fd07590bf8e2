"""Domain types and the expected-VAF decomposition.

All matrices follow one indexing convention: SNVs are rows of the count and
genotype matrices, samples are rows of the weight matrix, and weight column 0
is the background haplotype.  Genotype column ``c`` (0-based) maps to weight
column ``c + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

SIMPLEX_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when matrix shapes disagree; ``axis`` names the offending axis."""

    def __init__(self, axis: str, message: str):
        super().__init__(f"{axis}: {message}")
        self.axis = axis


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a function."""


class Mode(str, Enum):
    HAPLOTYPE = "haplotype"
    SUBCLONE = "subclone"

    @property
    def max_entry(self) -> int:
        return 1 if self is Mode.HAPLOTYPE else 2

    @property
    def scale(self) -> float:
        # subclone genotypes count alleles, so each copy carries half the weight
        return 1.0 if self is Mode.HAPLOTYPE else 0.5


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ReadCountMatrix:
    """Variant read counts ``n`` and total read counts ``N`` (SNV x sample)."""

    n: np.ndarray
    N: np.ndarray
    snv_labels: tuple[str, ...] = ()
    sample_labels: tuple[str, ...] = ()

    def __post_init__(self):
        n = np.asarray(self.n)
        N = np.asarray(self.N)
        if n.ndim != 2 or n.shape[0] < 1 or n.shape[1] < 1:
            raise DimensionError("snv", f"n must be a non-empty 2-d matrix, got shape {n.shape}")
        if N.shape != n.shape:
            raise DimensionError("sample" if N.shape[:1] == n.shape[:1] else "snv",
                                 f"n has shape {n.shape} but N has shape {N.shape}")
        if not (np.all(np.equal(np.mod(n, 1), 0)) and np.all(np.equal(np.mod(N, 1), 0))):
            raise DomainError("read counts must be integers")
        n = n.astype(np.int64)
        N = N.astype(np.int64)
        if np.any(N < 1):
            raise DomainError("total read counts N must be positive")
        if np.any(n < 0) or np.any(n > N):
            raise DomainError("variant counts must satisfy 0 <= n <= N")
        S, T = n.shape
        snv = tuple(self.snv_labels) or tuple(f"snv{i + 1}" for i in range(S))
        smp = tuple(self.sample_labels) or tuple(f"sample{j + 1}" for j in range(T))
        if len(snv) != S:
            raise DimensionError("snv", f"{len(snv)} labels for {S} SNVs")
        if len(smp) != T:
            raise DimensionError("sample", f"{len(smp)} labels for {T} samples")
        object.__setattr__(self, "n", _frozen(n))
        object.__setattr__(self, "N", _frozen(N))
        object.__setattr__(self, "snv_labels", tuple(str(x) for x in snv))
        object.__setattr__(self, "sample_labels", tuple(str(x) for x in smp))

    @property
    def S(self) -> int:
        return self.n.shape[0]

    @property
    def T(self) -> int:
        return self.n.shape[1]

    def permute_snvs(self, order: Sequence[int]) -> "ReadCountMatrix":
        order = np.asarray(order)
        return ReadCountMatrix(self.n[order], self.N[order],
                               tuple(self.snv_labels[i] for i in order), self.sample_labels)


@dataclass(frozen=True)
class GenotypeMatrix:
    """Latent S x C genotype calls: binary for haplotypes, {0,1,2} for subclones."""

    entries: np.ndarray
    mode: Mode = Mode.HAPLOTYPE

    def __post_init__(self):
        mode = Mode(self.mode)
        z = np.asarray(self.entries)
        if z.ndim != 2:
            raise DimensionError("feature", f"genotype matrix must be 2-d, got shape {z.shape}")
        if z.size and not np.all(np.equal(np.mod(z, 1), 0)):
            raise DomainError("genotype entries must be integers")
        z = z.astype(np.int8)
        if z.size and (z.min() < 0 or z.max() > mode.max_entry):
            raise DomainError(f"{mode.value} genotype entries must lie in 0..{mode.max_entry}")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "entries", _frozen(z))

    @property
    def S(self) -> int:
        return self.entries.shape[0]

    @property
    def C(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def empty(cls, S: int, mode: Mode = Mode.HAPLOTYPE) -> "GenotypeMatrix":
        return cls(np.zeros((S, 0), dtype=np.int8), mode)


@dataclass(frozen=True)
class WeightMatrix:
    """Per-sample mixture proportions, T x (C+1), background in column 0."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[1] < 1:
            raise DimensionError("feature", f"weights must be T x (C+1), got shape {w.shape}")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise DomainError("weights must be finite and nonnegative")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise DomainError("each weight row must sum to 1")
        object.__setattr__(self, "w", _frozen(w))

    @property
    def T(self) -> int:
        return self.w.shape[0]

    @property
    def C(self) -> int:
        return self.w.shape[1] - 1


@dataclass(frozen=True)
class ModelConfig:
    p0: float = 0.01
    lambda_sq: float = 8.0
    mode: Mode = Mode.HAPLOTYPE
    p_clamp_eps: float = 1e-6
    c_max_enumerate: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0 < self.p0 < 1:
            raise DomainError("p0 must lie in (0, 1)")
        if not self.lambda_sq > 0:
            raise DomainError("lambda_sq must be positive")
        if not 0 < self.p_clamp_eps < 0.5:
            raise DomainError("p_clamp_eps must lie in (0, 0.5)")
        if self.c_max_enumerate is None:
            object.__setattr__(self, "c_max_enumerate",
                               15 if self.mode is Mode.HAPLOTYPE else 9)
        elif self.c_max_enumerate < 1:
            raise DomainError("c_max_enumerate must be a positive integer")


@dataclass(frozen=True)
class Solution:
    C_hat: int
    Z_hat: GenotypeMatrix
    W_hat: WeightMatrix
    q_value: float
    iterations: int
    seed: int
    q_trace: tuple[float, ...] = field(default=())
    converged: bool = True


def expected_vaf(Z: GenotypeMatrix, W: WeightMatrix, p0: float) -> np.ndarray:
    """Expected variant allele fraction for every SNV and sample (S x T).

    ``p[s, t] = w[t, 0] * p0 + scale * sum_c w[t, c] * z[s, c]`` with
    ``scale = 1`` for haplotypes and ``1/2`` for subclones.
    """
    if W.C != Z.C:
        raise DimensionError("feature", f"genotypes have {Z.C} columns but weights have "
                                        f"{W.C} feature columns (plus background)")
    z = Z.entries.astype(float)
    p = p0 * W.w[:, 0][None, :] + Z.mode.scale * (z @ W.w[:, 1:].T)
    return np.clip(p, 0.0, 1.0)


def check_dimensions(counts: ReadCountMatrix, Z: GenotypeMatrix, W: WeightMatrix) -> None:
    if Z.S != counts.S:
        raise DimensionError("snv", f"counts have {counts.S} SNVs but genotypes have {Z.S}")
    if W.T != counts.T:
        raise DimensionError("sample", f"counts have {counts.T} samples but weights have {W.T}")
    if W.C != Z.C:
        raise DimensionError("feature", f"genotypes have {Z.C} columns but weights have {W.C}")
