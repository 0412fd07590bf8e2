"""Independent global minimizer for tiny haplotype instances.

Written against the objective's definition only (numpy/scipy, no package
code): every genotype matrix with at most two feature columns is scored on a
simplex grid per sample, and the best few are polished with SLSQP.
"""
import itertools

import numpy as np
from scipy.optimize import minimize
from scipy.special import xlogy

EPS = 1e-6


def kernel(n, N, p):
    p = np.clip(p, EPS, 1 - EPS)
    return -xlogy(n, p) - xlogy(N - n, 1 - p)


def saturated(n, N):
    """Sum of per-cell minima; no model can fit below this."""
    return float(kernel(n, N, n / N).sum())


def simplex_grid(dim, h):
    k = round(1 / h)
    pts = [c for c in itertools.product(range(k + 1), repeat=dim - 1) if sum(c) <= k]
    g = np.array(pts, dtype=float)
    return np.column_stack([k - g.sum(axis=1), g]) / k


def _fit(n, N, Z, w_rows, p0):
    p = p0 * w_rows[:, 0][None, :] + Z @ w_rows[:, 1:].T
    return float(kernel(n, N, p).sum())


def _polish(n, N, Z, p0, start):
    """Minimize each sample's fit over the simplex from a starting weight row."""
    T, total, rows = n.shape[1], 0.0, []
    for t in range(T):
        f = lambda w: float(kernel(n[:, t], N[:, t], p0 * w[0] + Z @ w[1:]).sum())
        res = minimize(f, start[t], method="SLSQP", bounds=[(0, 1)] * len(start[t]),
                       constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1}],
                       options={"ftol": 1e-14, "maxiter": 500})
        w = np.clip(res.x, 0, None)
        w /= w.sum()
        best = min(f(w), f(start[t]))
        total += best
        rows.append(w if f(w) <= f(start[t]) else start[t])
    return total, np.array(rows)


def fit_minima(n, N, p0, h=1e-3, polish_top=6):
    """Best grid and polished fits for C = 0, 1, 2.

    Returns ``{C: (grid_fit, polished_fit)}``; the polished value is a
    continuous minimum over the candidates the grid ranks highest.
    """
    S, T = n.shape
    out = {}
    for C in (0, 1, 2):
        grid = simplex_grid(C + 1, h)
        patterns = list(itertools.product((0, 1), repeat=C))
        # K[t][s, r, g]: cell cost when SNV s uses row pattern r at grid point g
        K = []
        for t in range(T):
            vaf = np.array([p0 * grid[:, 0] + grid[:, 1:] @ np.array(r, dtype=float)
                            for r in patterns])
            K.append(kernel(n[:, t][:, None, None], N[:, t][:, None, None], vaf[None]))
        scored = []
        for assign in itertools.product(range(len(patterns)), repeat=S):
            Z = np.array([patterns[r] for r in assign], dtype=float).reshape(S, C)
            val, argw = 0.0, []
            for t in range(T):
                tot = K[t][np.arange(S), list(assign)].sum(axis=0)
                g = int(np.argmin(tot))
                val += float(tot[g])
                argw.append(grid[g])
            scored.append((val, Z, np.array(argw)))
        scored.sort(key=lambda x: x[0])
        grid_best = scored[0][0]
        polished = min(_polish(n, N, Z, p0, w)[0] for _, Z, w in scored[:polish_top])
        out[C] = (grid_best, min(polished, grid_best))
    return out
