"""Coordinate-descent MAP search for feature allocations (FL-means).

One sweep runs three blocks in order:

1. every genotype row is replaced by its best value for the current weights
   (exact enumeration, or cyclic single-entry descent for wide matrices);
2. every weight row is re-solved on the simplex for the current genotypes;
3. each SNV in turn proposes a new feature that contains only itself; the
   proposal is kept if the re-optimised objective drops by more than the
   tolerance after paying the per-feature penalty.

Empty feature columns are dropped whenever that lowers the objective.  All
randomness is keyed by ``(seed, stream, SNV label)`` so permuting the input
rows permutes the solution rather than changing it.
"""
from __future__ import annotations

import hashlib
import itertools
import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .bregman import objective_q
from .core import (GenotypeMatrix, ModelConfig, ReadCountMatrix, Solution,
                   WeightMatrix, check_dimensions)

log = logging.getLogger(__name__)

W_INNER_MAX_ITER = 200
# relative rounding margin when comparing birth gain bounds with the penalty
BOUND_SLACK = 1e-9


class BirthSchedule(str, Enum):
    ONE_RANDOM_PER_SWEEP = "one_random_per_sweep"
    FULL_PERMUTATION_PER_SWEEP = "full_permutation_per_sweep"


@dataclass(frozen=True)
class SolverConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    max_sweeps: int = 500
    q_tol: float = 1e-10
    w_step_tol: float = 1e-8
    birth_schedule: BirthSchedule = BirthSchedule.FULL_PERMUTATION_PER_SWEEP
    rng_seed: int = 0
    w_max_iter: int = W_INNER_MAX_ITER

    def __post_init__(self):
        object.__setattr__(self, "birth_schedule", BirthSchedule(self.birth_schedule))
        if not self.q_tol > 0:
            raise ValueError("q_tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if not self.w_step_tol > 0:
            raise ValueError("w_step_tol must be positive")


@dataclass(frozen=True)
class RestartEnsemble:
    solutions: tuple[Solution, ...]
    c_histogram: dict[int, int]
    best: int

    @property
    def best_solution(self) -> Solution:
        return self.solutions[self.best]


class WRowResult(NamedTuple):
    w: np.ndarray
    value: float
    converged: bool


class BirthResult(NamedTuple):
    accepted: bool
    Z: GenotypeMatrix
    W: WeightMatrix


# ---------------------------------------------------------------------------
# seeding

def stream_key(seed: int, stream: str, *parts) -> int:
    """Stable 64-bit key for a named random sub-stream."""
    text = "|".join([str(int(seed)), stream, *map(str, parts)])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def stream_rng(seed: int, stream: str, *parts) -> np.random.Generator:
    return np.random.default_rng(stream_key(seed, stream, *parts))


def label_keys(seed: int, stream: str, labels: Sequence[str], *parts) -> np.ndarray:
    return np.array([stream_key(seed, stream, *parts, lab) for lab in labels], dtype=np.uint64)


def restart_seed(base_seed: int, index: int) -> int:
    return stream_key(base_seed, "restart", index)


# ---------------------------------------------------------------------------
# array-level building blocks

class _Problem:
    """Read-only data shared by every step of one solve."""

    def __init__(self, counts: ReadCountMatrix, model: ModelConfig):
        self.counts = counts
        self.n = np.ascontiguousarray(counts.n, dtype=np.int64)
        self.N = np.ascontiguousarray(counts.N, dtype=np.int64)
        self.model = model
        self.mode = model.mode
        self.p0 = float(model.p0)
        self.scale = model.mode.scale
        self.eps = float(model.p_clamp_eps)
        self.lam = float(model.lambda_sq)

    def fit(self, Z, W) -> float:
        return K.fit_value(Z, self.n, self.N, W, self.p0, self.scale, self.eps)

    def q(self, Z, W) -> float:
        return self.fit(Z, W) + Z.shape[1] * self.lam

    def solve_w(self, Z, W, tol, max_iter):
        rows, _, n, N = compress_rows(Z, self.n, self.N)
        return K.solve_w_all_newton(rows, n, N, W, self.p0, self.scale, self.eps,
                                    tol, max_iter)

    def z_step(self, Z, W):
        C = Z.shape[1]
        if C == 0:
            return Z.copy()
        if C <= self.model.c_max_enumerate:
            cand = candidate_rows(C, self.mode.max_entry)
            return K.z_step_enumerate(self.n, self.N, W, cand, self.p0, self.scale, self.eps)
        return K.z_step_coordinate(self.n, self.N, W, Z, self.mode.max_entry,
                                   self.p0, self.scale, self.eps, 100)


@lru_cache(maxsize=64)
def candidate_rows(C: int, max_entry: int) -> np.ndarray:
    """All rows over ``{0..max_entry}^C`` in lexicographic order."""
    rows = np.array(list(itertools.product(range(max_entry + 1), repeat=C)), dtype=np.int8)
    rows.setflags(write=False)
    return rows.reshape(-1, C)


def compress_rows(Z, n, N):
    """Merge SNVs that share a genotype row.

    For fixed genotypes the weight objective only sees each SNV through its
    row and its counts, and the kernel is linear in the counts, so SNVs with
    equal rows act as one SNV with summed counts.  Returns the distinct rows
    (sorted), the row index of every SNV, and the summed counts.
    """
    rows, inv = np.unique(Z, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    nP = np.zeros((rows.shape[0], n.shape[1]), dtype=np.int64)
    NP = np.zeros_like(nP)
    np.add.at(nP, inv, n)
    np.add.at(NP, inv, N)
    return np.ascontiguousarray(rows, dtype=np.int8), inv, nP, NP


def _prune_arrays(Z, W):
    keep = np.flatnonzero(Z.any(axis=0))
    if keep.size == Z.shape[1]:
        return Z, W
    drop = np.setdiff1d(np.arange(Z.shape[1]), keep)
    W2 = np.empty((W.shape[0], keep.size + 1))
    W2[:, 0] = W[:, 0] + W[:, drop + 1].sum(axis=1)
    W2[:, 1:] = W[:, keep + 1]
    return np.ascontiguousarray(Z[:, keep]), W2


# ---------------------------------------------------------------------------
# public single-step operations

def _arrays(Z: GenotypeMatrix, W: WeightMatrix):
    # the domain types hold read-only arrays; the solver works on private copies
    return (np.array(Z.entries, dtype=np.int8, order="C"),
            np.array(W.w, dtype=np.float64, order="C"))


def optimize_z_row(s: int, counts: ReadCountMatrix, Z: GenotypeMatrix, W: WeightMatrix,
                   cfg: ModelConfig) -> np.ndarray:
    """Best genotype row for SNV ``s`` given the weights."""
    check_dimensions(counts, Z, W)
    z, w = _arrays(Z, W)
    sl = slice(s, s + 1)
    row_counts = ReadCountMatrix(counts.n[sl], counts.N[sl])
    return _Problem(row_counts, cfg).z_step(z[sl], w)[0]


def optimize_w_row(t: int, counts: ReadCountMatrix, Z: GenotypeMatrix, W: WeightMatrix,
                   cfg: ModelConfig, tol: float = 1e-8,
                   max_iter: int = W_INNER_MAX_ITER) -> WRowResult:
    """Re-solve the simplex weights of sample ``t`` for fixed genotypes."""
    check_dimensions(counts, Z, W)
    z, w = _arrays(Z, W)
    A = K.design_matrix(z, cfg.p0, cfg.mode.scale)
    n = np.ascontiguousarray(counts.n[:, t], dtype=np.int64)
    N = np.ascontiguousarray(counts.N[:, t], dtype=np.int64)
    row, f, ok = K.solve_w_row_newton(A, n, N, w[t].copy(), cfg.p_clamp_eps, tol, max_iter)
    if not ok:
        log.warning("weight row %d stopped at the iteration cap", t)
    return WRowResult(row, f, ok)


def prune_empty_features(Z: GenotypeMatrix, W: WeightMatrix) -> tuple[GenotypeMatrix, WeightMatrix]:
    """Drop all-zero genotype columns, moving their weight to the background."""
    z, w = _arrays(Z, W)
    z2, w2 = _prune_arrays(z, w)
    if z2 is z:
        return Z, W
    return GenotypeMatrix(z2, Z.mode), WeightMatrix(w2)


def attempt_birth(s: int, counts: ReadCountMatrix, Z: GenotypeMatrix, W: WeightMatrix,
                  cfg: ModelConfig, q_tol: float = 1e-10, w_step_tol: float = 1e-8,
                  max_iter: int = W_INNER_MAX_ITER) -> BirthResult:
    """Propose a new feature holding only SNV ``s``; keep it if Q drops."""
    check_dimensions(counts, Z, W)
    prob = _Problem(counts, cfg)
    z, w = _arrays(Z, W)
    q = prob.q(z, w)
    z2, w2, q2 = _propose_birth(prob, z, w, s, w_step_tol, max_iter)
    if q2 < q - q_tol * max(1.0, abs(q)):
        return BirthResult(True, GenotypeMatrix(z2, Z.mode), WeightMatrix(w2))
    return BirthResult(False, Z, W)


def _extend(Z, W, s):
    """``[Z | e_s]`` and ``[W | 0]``."""
    S, C = Z.shape
    Z2 = np.zeros((S, C + 1), dtype=np.int8)
    Z2[:, :C] = Z
    Z2[s, C] = 1
    W2 = np.zeros((W.shape[0], C + 2))
    W2[:, :C + 1] = W
    return Z2, W2


def _propose_birth(prob: _Problem, Z, W, s, tol, max_iter):
    Z2, W2 = _extend(Z, W, s)
    W2, _ = prob.solve_w(Z2, W2, tol, max_iter)
    return Z2, W2, prob.q(Z2, W2)


# ---------------------------------------------------------------------------
# the sweep loop

def _initial_state(prob: _Problem, seed: int):
    S, T = prob.n.shape
    keys = label_keys(seed, "init-z", prob.counts.snv_labels)
    # top bit of a uniform 64-bit key is a fair coin
    Z = (keys >> np.uint64(63)).astype(np.int8).reshape(S, 1)
    W = stream_rng(seed, "init-w").dirichlet(np.ones(2), size=T)
    return np.ascontiguousarray(Z), np.ascontiguousarray(W)


def _birth_order(prob: _Problem, seed: int, sweep: int, schedule: BirthSchedule):
    keys = label_keys(seed, "birth", prob.counts.snv_labels, sweep)
    order = np.argsort(keys, kind="stable")
    if schedule is BirthSchedule.ONE_RANDOM_PER_SWEEP:
        return order[:1]
    return order


class _Births:
    """Birth phase of one sweep.

    Every proposal is judged on its fully re-solved weights, but the
    re-solve is abandoned as soon as convexity bounds show the remaining
    samples cannot make up the penalty, so rejections stay exact.
    """

    def __init__(self, prob: _Problem, cfg: SolverConfig):
        self.prob = prob
        self.cfg = cfg

    def run(self, Z, W, q, order):
        prob, cfg = self.prob, self.cfg
        accepted = 0
        bounds = None
        for s in order:
            if bounds is None:
                A = K.design_matrix(Z, prob.p0, prob.scale)
                bounds = K.birth_gain_bounds(A, prob.n, prob.N, W, prob.eps, prob.scale)
                rows, inv, nP, NP = compress_rows(Z, prob.n, prob.N)
                AP = K.design_matrix(rows, prob.p0, prob.scale)
            # the bounds are exact up to rounding; keep a margin for it
            need = prob.lam - BOUND_SLACK * max(1.0, abs(q))
            if bounds[s].sum() < need:
                continue
            A2, n2, N2 = _split_row(AP, nP, NP, inv[s], prob.n[s], prob.N[s], prob.scale)
            W2 = np.zeros((W.shape[0], W.shape[1] + 1))
            W2[:, :-1] = W
            W2, finished = K.solve_birth(A2, n2, N2, W2, bounds[s], need, prob.eps,
                                         cfg.w_step_tol, cfg.w_max_iter)
            if not finished:
                continue
            Z2, _ = _extend(Z, W, s)
            q2 = prob.q(Z2, W2)
            if q2 < q - cfg.q_tol * max(1.0, abs(q)):
                Z, W, q = Z2, W2, q2
                accepted += 1
                bounds = None
        return Z, W, q, accepted


def _split_row(AP, nP, NP, g, n_s, N_s, scale):
    """Compressed design for a singleton feature at one SNV of row group ``g``.

    The SNV leaves its group and becomes its own row, the only one with the
    new feature.
    """
    P, d = AP.shape
    A2 = np.zeros((P + 1, d + 1))
    A2[:P, :d] = AP
    A2[P, :d] = AP[g]
    A2[P, d] = scale
    n2 = np.empty((P + 1, nP.shape[1]), dtype=np.int64)
    N2 = np.empty_like(n2)
    n2[:P], N2[:P] = nP, NP
    n2[g] -= n_s
    N2[g] -= N_s
    n2[P], N2[P] = n_s, N_s
    return A2, n2, N2


def _solve_arrays(prob: _Problem, cfg: SolverConfig, seed: int, Z, W):
    births = _Births(prob, cfg)
    q = prob.q(Z, W)
    trace = [q]
    converged = False
    sweeps = 0
    for sweep in range(1, cfg.max_sweeps + 1):
        sweeps = sweep
        q_start = q
        z_changed = False

        Zn = prob.z_step(Z, W)
        if not np.array_equal(Zn, Z):
            qn = prob.q(Zn, W)
            if qn <= q:
                Z, q, z_changed = Zn, qn, True

        if Z.shape[1] and not Z.any(axis=0).all():
            Zp, Wp = _prune_arrays(Z, W)
            Wp, _ = prob.solve_w(Zp, Wp, cfg.w_step_tol, cfg.w_max_iter)
            qp = prob.q(Zp, Wp)
            if qp <= q:
                Z, W, q, z_changed = Zp, Wp, qp, True

        Wn, _ = prob.solve_w(Z, W, cfg.w_step_tol, cfg.w_max_iter)
        qn = prob.q(Z, Wn)
        if qn <= q:
            W, q = Wn, qn

        order = _birth_order(prob, seed, sweep, cfg.birth_schedule)
        Z, W, q, n_births = births.run(Z, W, q, order)

        trace.append(q)
        if (not z_changed and n_births == 0
                and q_start - q <= cfg.q_tol * max(1.0, abs(q_start))):
            converged = True
            break
    return Z, W, q, trace, sweeps, converged


def fl_means_solve(counts: ReadCountMatrix, cfg: SolverConfig, seed: int | None = None,
                   init: tuple[GenotypeMatrix, WeightMatrix] | None = None) -> Solution:
    """One seeded run of the coordinate-descent search."""
    seed = cfg.rng_seed if seed is None else int(seed)
    prob = _Problem(counts, cfg.model)
    if init is None:
        Z, W = _initial_state(prob, seed)
    else:
        check_dimensions(counts, *init)
        Z, W = _arrays(*init)
    Z, W, q, trace, sweeps, converged = _solve_arrays(prob, cfg, seed, Z, W)
    if not converged:
        log.warning("seed %d: stopped after %d sweeps without converging", seed, sweeps)
    # weights come out of the projection already normalised to rounding level
    Zm = GenotypeMatrix(Z, cfg.model.mode)
    Wm = WeightMatrix(W)
    return Solution(C_hat=Z.shape[1], Z_hat=Zm, W_hat=Wm,
                    q_value=objective_q(counts, Zm, Wm, cfg.model),
                    iterations=sweeps, seed=seed, q_trace=tuple(trace), converged=converged)


# ---------------------------------------------------------------------------
# restarts

def _solve_one(args):
    counts, cfg, index = args
    return fl_means_solve(counts, cfg, seed=restart_seed(cfg.rng_seed, index))


def multi_restart(counts: ReadCountMatrix, cfg: SolverConfig, n_restarts: int,
                  parallelism: int = 1) -> RestartEnsemble:
    """Independent seeded runs; the result does not depend on ``parallelism``."""
    if n_restarts < 1:
        raise ValueError("n_restarts must be at least 1")
    jobs = [(counts, cfg, i) for i in range(n_restarts)]
    if parallelism > 1 and n_restarts > 1:
        with ProcessPoolExecutor(max_workers=min(parallelism, n_restarts)) as pool:
            chunk = max(1, n_restarts // (4 * parallelism))
            solutions = tuple(pool.map(_solve_one, jobs, chunksize=chunk))
    else:
        solutions = tuple(map(_solve_one, jobs))
    qs = [sol.q_value for sol in solutions]
    best = int(np.argmin(qs))
    hist = dict(sorted(Counter(sol.C_hat for sol in solutions).items()))
    return RestartEnsemble(solutions=solutions, c_histogram=hist, best=best)


def default_threads() -> int:
    env = os.environ.get("CLONEDECOMP_THREADS")
    return max(1, int(env)) if env else 1


# ---------------------------------------------------------------------------
# certification

@dataclass
class LocalOptimalityReport:
    improving_flips: list = field(default_factory=list)
    improving_w_rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.improving_flips and not self.improving_w_rows


def local_optimality_scan(counts: ReadCountMatrix, solution: Solution, cfg: SolverConfig,
                          q_tol: float | None = None) -> LocalOptimalityReport:
    """Check that no single genotype change and no weight-row re-solve helps."""
    q_tol = cfg.q_tol if q_tol is None else q_tol
    prob = _Problem(counts, cfg.model)
    Z, W = _arrays(solution.Z_hat, solution.W_hat)
    q = prob.q(Z, W)
    thresh = q_tol * max(1.0, abs(q))
    report = LocalOptimalityReport()
    S, C = Z.shape
    for s in range(S):
        for c in range(C):
            keep = Z[s, c]
            for v in range(prob.mode.max_entry + 1):
                if v == keep:
                    continue
                Z[s, c] = v
                qv = prob.q(Z, W)
                if qv < q - thresh:
                    report.improving_flips.append((s, c, v, q - qv))
            Z[s, c] = keep
    A = K.design_matrix(Z, prob.p0, prob.scale)
    for t in range(W.shape[0]):
        f0 = K.row_value(A, prob.n[:, t].copy(), prob.N[:, t].copy(), W[t].copy(), prob.eps)
        _, f1, _ = K.solve_w_row_newton(A, prob.n[:, t].copy(), prob.N[:, t].copy(), W[t].copy(),
                                 prob.eps, cfg.w_step_tol, cfg.w_max_iter)
        if f1 < f0 - thresh:
            report.improving_w_rows.append((t, f0 - f1))
    return report
