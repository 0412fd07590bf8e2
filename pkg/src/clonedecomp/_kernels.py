"""Compiled inner loops for the coordinate-descent solver.

Every function here works on plain arrays:
``n, N`` are S x T int64, ``Z`` is S x C int8, ``W`` is T x (C+1) float64.
The vaf of a cell is always accumulated in the same order (background first,
then features left to right) so that equal states give bit-equal objectives.
"""
import math

import numpy as np
from numba import njit

ARMIJO = 1e-4
ALPHA_MIN = 1e-12
ALPHA_MAX = 1e12
SPG_RESCUE_ITER = 30
KKT_RTOL = 1e-7


@njit(cache=True)
def _clamp(p, eps):
    if p < eps:
        return eps
    if p > 1.0 - eps:
        return 1.0 - eps
    return p


@njit(cache=True)
def project_simplex(y, out):
    """Euclidean projection of ``y`` onto the probability simplex (sort based)."""
    d = y.shape[0]
    u = np.sort(y)[::-1]
    css = 0.0
    theta = 0.0
    for i in range(d):
        css += u[i]
        t = (css - 1.0) / (i + 1)
        if u[i] - t > 0:
            theta = t
    total = 0.0
    for i in range(d):
        v = y[i] - theta
        out[i] = v if v > 0 else 0.0
        total += out[i]
    # renormalise away accumulated rounding
    for i in range(d):
        out[i] /= total


@njit(cache=True)
def design_matrix(Z, p0, scale):
    S, C = Z.shape
    A = np.empty((S, C + 1))
    for s in range(S):
        A[s, 0] = p0
        for c in range(C):
            A[s, c + 1] = scale * Z[s, c]
    return A


@njit(cache=True)
def row_value_grad(A, n, N, w, eps, grad):
    """Objective of one sample's weight row and its (pseudo-)gradient."""
    S, d = A.shape
    f = 0.0
    for c in range(d):
        grad[c] = 0.0
    for s in range(S):
        p = A[s, 0] * w[0]
        for c in range(1, d):
            p += A[s, c] * w[c]
        pc = _clamp(p, eps)
        ns = n[s]
        ms = N[s] - ns
        if ns > 0:
            f -= ns * math.log(pc)
        if ms > 0:
            f -= ms * math.log(1.0 - pc)
        dk = -ns / pc + ms / (1.0 - pc)
        for c in range(d):
            grad[c] += dk * A[s, c]
    return f


@njit(cache=True)
def row_value(A, n, N, w, eps):
    S, d = A.shape
    f = 0.0
    for s in range(S):
        p = A[s, 0] * w[0]
        for c in range(1, d):
            p += A[s, c] * w[c]
        pc = _clamp(p, eps)
        if n[s] > 0:
            f -= n[s] * math.log(pc)
        if N[s] - n[s] > 0:
            f -= (N[s] - n[s]) * math.log(1.0 - pc)
    return f


@njit(cache=True)
def solve_w_row(A, n, N, w0, eps, tol, max_iter):
    """Spectral projected gradient with Armijo backtracking on the simplex.

    Returns ``(w, f, converged)``; the objective never increases from ``w0``.
    """
    d = A.shape[1]
    w = np.empty(d)
    project_simplex(w0, w)
    f_start = row_value(A, n, N, w0, eps)
    g = np.empty(d)
    f = row_value_grad(A, n, N, w, eps, g)
    if f > f_start:
        # projecting a slightly infeasible start must not cost objective
        w[:] = w0
        f = row_value_grad(A, n, N, w, eps, g)
    if d == 1:
        return w, f, True
    y = np.empty(d)
    wt = np.empty(d)
    wn = np.empty(d)
    gn = np.empty(d)
    # first step: unit projected-gradient displacement scaled to the simplex
    gmax = 0.0
    for c in range(d):
        if abs(g[c]) > gmax:
            gmax = abs(g[c])
    alpha = 1.0 / gmax if gmax > 0 else 1.0
    converged = False
    for it in range(max_iter):
        for c in range(d):
            y[c] = w[c] - alpha * g[c]
        project_simplex(y, wt)
        dmax = 0.0
        gd = 0.0
        for c in range(d):
            dc = wt[c] - w[c]
            if abs(dc) > dmax:
                dmax = abs(dc)
            gd += g[c] * dc
        if dmax <= tol or gd >= 0.0:
            converged = True
            break
        lam = 1.0
        accepted = False
        for _ in range(60):
            for c in range(d):
                wn[c] = w[c] + lam * (wt[c] - w[c])
            fn = row_value_grad(A, n, N, wn, eps, gn)
            if fn <= f + ARMIJO * lam * gd and fn < f:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            # no representable decrease along the projected direction
            converged = lam * dmax <= tol
            break
        sy = 0.0
        ss = 0.0
        for c in range(d):
            sc = wn[c] - w[c]
            ss += sc * sc
            sy += sc * (gn[c] - g[c])
        alpha = ss / sy if sy > 0 else ALPHA_MAX
        if alpha < ALPHA_MIN:
            alpha = ALPHA_MIN
        elif alpha > ALPHA_MAX:
            alpha = ALPHA_MAX
        w[:] = wn
        g[:] = gn
        f = fn
    return w, f, converged


@njit(cache=True)
def solve_w_all(Z, n, N, W, p0, scale, eps, tol, max_iter):
    """Re-solve every weight row for fixed genotypes.  Returns (W, all_converged)."""
    A = design_matrix(Z, p0, scale)
    T = W.shape[0]
    out = np.empty_like(W)
    ok = True
    for t in range(T):
        w, f, conv = solve_w_row(A, n[:, t], N[:, t], W[t].copy(), eps, tol, max_iter)
        out[t] = w
        ok = ok and conv
    return out, ok


@njit(cache=True)
def cell_vaf(Z, W, s, t, p0, scale):
    p = W[t, 0] * p0
    for c in range(Z.shape[1]):
        p += scale * Z[s, c] * W[t, c + 1]
    return p


@njit(cache=True)
def fit_value(Z, n, N, W, p0, scale, eps):
    """Summed binomial kernels (no penalty), SNV-major summation order."""
    S, T = n.shape
    f = 0.0
    for s in range(S):
        for t in range(T):
            pc = _clamp(cell_vaf(Z, W, s, t, p0, scale), eps)
            if n[s, t] > 0:
                f -= n[s, t] * math.log(pc)
            if N[s, t] - n[s, t] > 0:
                f -= (N[s, t] - n[s, t]) * math.log(1.0 - pc)
    return f


@njit(cache=True)
def birth_gain_bounds(A, n, N, W, eps, new_entry):
    """Upper bounds on what a singleton feature at SNV ``s`` can gain in sample ``t``.

    Both bounds use convexity of each sample's objective at the current
    weights ``w`` (extended by a zero for the new feature): the Frank-Wolfe
    gap of the extended problem, and row ``s``'s distance from its saturated
    fit plus the Frank-Wolfe gap of the remaining rows.  Returns an S x T
    matrix holding the smaller of the two.
    """
    S, d = A.shape
    T = W.shape[0]
    D = np.empty((S, T))
    gap = np.empty((S, T))
    G = np.zeros((d, T))
    nu = np.zeros(T)
    for t in range(T):
        for s in range(S):
            p = 0.0
            for c in range(d):
                p += A[s, c] * W[t, c]
            pc = _clamp(p, eps)
            ph = _clamp(n[s, t] / N[s, t], eps)
            ns = n[s, t]
            ms = N[s, t] - ns
            D[s, t] = -ns / pc + ms / (1.0 - pc)
            g = 0.0
            if ns > 0:
                g += ns * (math.log(ph) - math.log(pc))
            if ms > 0:
                g += ms * (math.log(1.0 - ph) - math.log(1.0 - pc))
            gap[s, t] = max(g, 0.0)
            for c in range(d):
                G[c, t] += A[s, c] * D[s, t]
        for c in range(d):
            nu[t] += G[c, t] * W[t, c]
    out = np.empty((S, T))
    for s in range(S):
        for t in range(T):
            fw = max(0.0, nu[t] - new_entry * D[s, t])
            lin = 0.0
            gmin = 0.0  # the new coordinate has zero gradient for the other rows
            for c in range(d):
                go = G[c, t] - A[s, c] * D[s, t]
                lin += go * W[t, c]
                gmin = min(gmin, go)
            out[s, t] = min(fw, gap[s, t] + max(lin - gmin, 0.0))
    return out


@njit(cache=True)
def solve_birth(A, n, N, W, bounds, need, eps, tol, max_iter):
    """Re-solve every weight row for a proposal, stopping once it cannot pay off.

    Samples are solved in order of decreasing ``bounds``; when the gain
    achieved so far plus the bounds still outstanding falls below ``need``
    the proposal is abandoned and ``(W, False)`` is returned unfinished.
    """
    T = W.shape[0]
    order = np.argsort(-bounds)
    remaining = 0.0
    for t in range(T):
        remaining += bounds[t]
    out = W.copy()
    done = np.zeros(T, dtype=np.bool_)
    gained = 0.0
    for k in range(T):
        if gained + remaining < need:
            return out, False
        t = order[k]
        remaining -= bounds[t]
        if bounds[t] <= 0.0:
            continue
        f0 = row_value(A, n[:, t], N[:, t], W[t], eps)
        w, f1, _ = solve_w_row_newton(A, n[:, t], N[:, t], W[t].copy(), eps, tol, max_iter)
        out[t] = w
        done[t] = True
        gained += f0 - f1
    if gained + remaining < need:
        return out, False
    for t in range(T):
        if not done[t]:
            w, _, _ = solve_w_row_newton(A, n[:, t], N[:, t], W[t].copy(), eps, tol, max_iter)
            out[t] = w
    return out, True


@njit(cache=True)
def candidate_logs(cand, W, p0, scale, eps):
    K, C = cand.shape
    T = W.shape[0]
    lp = np.empty((K, T))
    lq = np.empty((K, T))
    for k in range(K):
        for t in range(T):
            p = W[t, 0] * p0
            for c in range(C):
                p += scale * cand[k, c] * W[t, c + 1]
            pc = _clamp(p, eps)
            lp[k, t] = math.log(pc)
            lq[k, t] = math.log(1.0 - pc)
    return lp, lq


@njit(cache=True)
def z_step_enumerate(n, N, W, cand, p0, scale, eps):
    """Best row per SNV over all candidate rows; first (lexicographic) wins ties."""
    S, T = n.shape
    K, C = cand.shape
    lp, lq = candidate_logs(cand, W, p0, scale, eps)
    out = np.empty((S, C), dtype=np.int8)
    for s in range(S):
        best = np.inf
        bk = 0
        for k in range(K):
            v = 0.0
            for t in range(T):
                if n[s, t] > 0:
                    v -= n[s, t] * lp[k, t]
                if N[s, t] - n[s, t] > 0:
                    v -= (N[s, t] - n[s, t]) * lq[k, t]
            if v < best:
                best = v
                bk = k
        for c in range(C):
            out[s, c] = cand[bk, c]
    return out


@njit(cache=True)
def _row_cost(row, n, N, W, s, p0, scale, eps):
    T = W.shape[0]
    v = 0.0
    for t in range(T):
        p = W[t, 0] * p0
        for c in range(row.shape[0]):
            p += scale * row[c] * W[t, c + 1]
        pc = _clamp(p, eps)
        if n[s, t] > 0:
            v -= n[s, t] * math.log(pc)
        if N[s, t] - n[s, t] > 0:
            v -= (N[s, t] - n[s, t]) * math.log(1.0 - pc)
    return v


@njit(cache=True)
def z_step_coordinate(n, N, W, Z, max_entry, p0, scale, eps, max_passes):
    """Cyclic single-entry descent per row until no entry change helps."""
    S, C = Z.shape
    out = Z.copy()
    row = np.empty(C, dtype=np.int8)
    for s in range(S):
        row[:] = out[s]
        cur = _row_cost(row, n, N, W, s, p0, scale, eps)
        for _ in range(max_passes):
            changed = False
            for c in range(C):
                keep = row[c]
                best_v = keep
                best = cur
                for v in range(max_entry + 1):
                    if v == keep:
                        continue
                    row[c] = v
                    val = _row_cost(row, n, N, W, s, p0, scale, eps)
                    if val < best or (val == best and v < best_v):
                        best = val
                        best_v = v
                row[c] = best_v
                if best_v != keep:
                    changed = True
                    cur = best
            if not changed:
                break
        out[s] = row
    return out


@njit(cache=True)
def row_value_grad_hess(A, n, N, w, eps, grad, H):
    S, d = A.shape
    f = 0.0
    for c in range(d):
        grad[c] = 0.0
        for e in range(d):
            H[c, e] = 0.0
    for s in range(S):
        p = A[s, 0] * w[0]
        for c in range(1, d):
            p += A[s, c] * w[c]
        pc = _clamp(p, eps)
        ns = n[s]
        ms = N[s] - ns
        if ns > 0:
            f -= ns * math.log(pc)
        if ms > 0:
            f -= ms * math.log(1.0 - pc)
        d1 = -ns / pc + ms / (1.0 - pc)
        d2 = ns / (pc * pc) + ms / ((1.0 - pc) * (1.0 - pc))
        for c in range(d):
            a = A[s, c]
            if a == 0.0:
                continue
            grad[c] += d1 * a
            for e in range(c, d):
                H[c, e] += d2 * a * A[s, e]
    for c in range(d):
        for e in range(c):
            H[c, e] = H[e, c]
    return f


@njit(cache=True)
def _newton_direction(H, g, free, delta):
    """Equality-constrained Newton step on the free coordinates (sum of step = 0)."""
    d = g.shape[0]
    idx = np.empty(d, dtype=np.int64)
    k = 0
    for c in range(d):
        delta[c] = 0.0
        if free[c]:
            idx[k] = c
            k += 1
    if k <= 1:
        return
    Hf = np.empty((k, k))
    rhs = np.empty((k, 2))
    diag = 0.0
    for i in range(k):
        for j in range(k):
            Hf[i, j] = H[idx[i], idx[j]]
        if Hf[i, i] > diag:
            diag = Hf[i, i]
        rhs[i, 0] = g[idx[i]]
        rhs[i, 1] = 1.0
    # ridge keeps duplicated or empty columns solvable
    ridge = 1e-12 * diag + 1e-300
    for i in range(k):
        Hf[i, i] += ridge
    sol = np.linalg.solve(Hf, rhs)
    sx = 0.0
    sy = 0.0
    for i in range(k):
        sx += sol[i, 0]
        sy += sol[i, 1]
    nu = sx / sy
    for i in range(k):
        delta[idx[i]] = -(sol[i, 0] - nu * sol[i, 1])


@njit(cache=True)
def solve_w_row_newton(A, n, N, w0, eps, tol, max_iter):
    """Active-set Newton method for one weight row on the simplex.

    Returns ``(w, f, converged)``; the objective never increases from ``w0``.
    """
    d = A.shape[1]
    w = w0.copy()
    g = np.empty(d)
    H = np.empty((d, d))
    f = row_value_grad_hess(A, n, N, w, eps, g, H)
    if d == 1:
        return w, f, True
    free = np.empty(d, dtype=np.bool_)
    delta = np.empty(d)
    wn = np.empty(d)
    converged = False
    for it in range(max_iter):
        nu = 0.0
        for c in range(d):
            free[c] = w[c] > 0.0
            if free[c]:
                nu += w[c] * g[c]
        gscale = 0.0
        for c in range(d):
            if abs(g[c]) > gscale:
                gscale = abs(g[c])
        gtol = 1e-12 * (gscale + 1.0)
        for c in range(d):
            if not free[c] and g[c] < nu - gtol:
                free[c] = True
        # coordinates sitting at zero that the step would push negative stay bound
        for _ in range(d):
            _newton_direction(H, g, free, delta)
            dropped = False
            for c in range(d):
                if free[c] and w[c] <= 0.0 and delta[c] < 0.0:
                    free[c] = False
                    dropped = True
            if not dropped:
                break
        dmax = 0.0
        gd = 0.0
        for c in range(d):
            if abs(delta[c]) > dmax:
                dmax = abs(delta[c])
            gd += g[c] * delta[c]
        if dmax <= tol:
            gmin = np.inf
            gmaxf = -np.inf
            for c in range(d):
                if free[c]:
                    gmin = min(gmin, g[c])
                    gmaxf = max(gmaxf, g[c])
            if gmaxf - gmin <= KKT_RTOL * (abs(nu) + 1.0):
                converged = True
                break
            ws, fs, _ = solve_w_row(A, n, N, w, eps, tol, SPG_RESCUE_ITER)
            if not fs < f - 1e-15 * abs(f):
                converged = True
                break
            w[:] = ws
            f = row_value_grad_hess(A, n, N, w, eps, g, H)
            continue
        tmax = 1.0
        block = -1
        for c in range(d):
            if delta[c] < 0.0 and -w[c] / delta[c] < tmax:
                tmax = -w[c] / delta[c]
                block = c
        step = tmax
        accepted = False
        for _ in range(60):
            for c in range(d):
                wn[c] = w[c] + step * delta[c]
                if wn[c] < 0.0:
                    wn[c] = 0.0
            if step == tmax and block >= 0:
                wn[block] = 0.0
            total = 0.0
            for c in range(d):
                total += wn[c]
            for c in range(d):
                wn[c] /= total
            fn = row_value(A, n, N, wn, eps)
            if fn <= f + ARMIJO * step * gd and fn < f:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # curvature at clamped cells can make the Newton model useless;
            # a few gradient steps get back to where it is informative
            ws, fs, _ = solve_w_row(A, n, N, w, eps, tol, SPG_RESCUE_ITER)
            if not fs < f - 1e-15 * abs(f):
                converged = step * dmax <= tol
                break
            wn[:] = ws
        w[:] = wn
        f = row_value_grad_hess(A, n, N, w, eps, g, H)
    return w, f, converged


@njit(cache=True)
def solve_w_all_newton(Z, n, N, W, p0, scale, eps, tol, max_iter):
    A = design_matrix(Z, p0, scale)
    T = W.shape[0]
    out = np.empty_like(W)
    ok = True
    for t in range(T):
        w, f, conv = solve_w_row_newton(A, n[:, t], N[:, t], W[t].copy(), eps, tol, max_iter)
        out[t] = w
        ok = ok and conv
    return out, ok
