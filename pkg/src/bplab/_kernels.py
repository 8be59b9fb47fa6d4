"""Compiled inner loops: deficiency iteration and exact aggregated sampling.

Laws arrive packed as flat arrays (see ``OffspringLaw.pack``).  A packed
law row has width W; column j holds either a univariate component
``(kinds[j], pars[j])`` or, for tables, column j of the support matrix.

Sums of ``c`` i.i.d. offspring vectors are drawn exactly from their
closed-form laws (Poisson(c*lam), Binomial(c, p), NegBinomial(c, p), a
multinomial split of a table), so the cost of a generation does not grow
with its size.  Above ``pop_cap`` a count is advanced by its conditional
mean instead and the replicate is flagged as capped.
"""
from __future__ import annotations

import math
from collections import namedtuple

import numpy as np
from numba import njit

DETERMINISTIC = 0
BERNOULLI = 1
POISSON = 2
GEOMETRIC = 3
LINEAR_FRACTIONAL = 4

# A stack of L laws padded to a common width W and support size Kmax.
LawPack = namedtuple("LawPack", "kinds pars istab sup prob nsup means")
# Environment: stack of state laws of width N+1 plus cumulative weights.
# sigma > 0 switches to the log-normal family built on state 0.
EnvPack = namedtuple("EnvPack", "laws cumw sigma")

NEG_SATURATED = -50.0  # -expm1(-50) == 1.0 exactly in double precision


# ---------------------------------------------------------------------------
# deficiency 1 - h(1 - q)
# ---------------------------------------------------------------------------


@njit(cache=True)
def component_deficiency(kind, par, q):
    if q <= 0.0:
        return 0.0
    if kind == DETERMINISTIC:
        if par == 0.0:
            return 0.0
        if q >= 1.0:
            return 1.0
        return -math.expm1(par * math.log1p(-q))
    if kind == BERNOULLI:
        return par * q
    if kind == POISSON:
        return -math.expm1(-par * q)
    if kind == GEOMETRIC:
        return par * q / (1.0 + par * q)
    return q / (1.0 + par * q)


@njit(cache=True)
def law_deficiency(kinds, pars, istab, sup, prob, nsup, q):
    width = q.shape[0]
    if istab:
        total = 0.0
        for k in range(nsup):
            acc = 0.0
            for j in range(width):
                c = sup[k, j]
                if c > 0:
                    if q[j] >= 1.0:
                        acc = -np.inf
                        break
                    acc += c * math.log1p(-q[j])
            total += prob[k] * (-math.expm1(acc))
        return total
    acc = 0.0
    for j in range(width):
        g = component_deficiency(kinds[j], pars[j], q[j])
        if g >= 1.0:
            return 1.0
        acc += math.log1p(-g)
    return -math.expm1(acc)


@njit(cache=True)
def _step(lp, q, out):
    for i in range(q.shape[0]):
        out[i] = law_deficiency(
            lp.kinds[i], lp.pars[i], lp.istab[i], lp.sup[i], lp.prob[i], lp.nsup[i], q
        )


@njit(cache=True)
def iterate_final(lp, q0, n):
    q = q0.copy()
    nxt = np.empty_like(q)
    for _ in range(n):
        _step(lp, q, nxt)
        q, nxt = nxt, q
    return q


@njit(cache=True)
def iterate_path(lp, q0, n):
    """Rows m = 0..n hold Q_m (deficiency after m steps)."""
    path = np.empty((n + 1, q0.shape[0]))
    path[0] = q0
    for m in range(n):
        _step(lp, path[m], path[m + 1])
    return path


@njit(cache=True)
def moment_recursion(M, b1, n):
    """Mean powers M^n and second factorial moment tables b(n).

    b(m+1)_ikl = sum_j M_ij b(m)_jkl + sum_{j,j'} b1_ijj' M^m_jk M^m_j'l.
    """
    N = M.shape[0]
    mn = np.eye(N)
    bn = np.zeros((N, N, N))
    for _ in range(n):
        nb = np.zeros((N, N, N))
        for i in range(N):
            for k in range(N):
                for l in range(N):
                    acc = 0.0
                    for j in range(N):
                        acc += M[i, j] * bn[j, k, l]
                        for jj in range(N):
                            acc += b1[i, j, jj] * mn[j, k] * mn[jj, l]
                    nb[i, k, l] = acc
        bn = nb
        mn = M @ mn
    return mn, bn


# ---------------------------------------------------------------------------
# exact aggregated sampling
# ---------------------------------------------------------------------------


@njit(cache=True)
def _component_sum(gen, kind, par, c):
    """Sum of c i.i.d. draws of a univariate component (c an integer >= 1)."""
    if kind == DETERMINISTIC:
        return par * c
    if kind == BERNOULLI:
        if par <= 0.0:
            return 0.0
        if par >= 1.0:
            return float(c)
        return float(gen.binomial(c, par))
    if kind == POISSON:
        if par <= 0.0:
            return 0.0
        return float(gen.poisson(par * c))
    if kind == GEOMETRIC:
        if par <= 0.0:
            return 0.0
        return float(gen.negative_binomial(c, 1.0 / (1.0 + par)))
    # linear fractional: Binomial(c, 1/(1+b)) non-zero individuals, each 1 + Geom0
    p = 1.0 / (1.0 + par)
    nz = gen.binomial(c, p)
    if nz == 0:
        return 0.0
    return float(nz) + float(gen.negative_binomial(nz, p))


@njit(cache=True)
def offspring_sum(gen, lp, i, count, pars_row, pop_cap, out):
    """Add the children of ``count`` individuals following law ``i`` to ``out``.

    Returns True when the count exceeded ``pop_cap`` and the mean was used.
    ``pars_row`` overrides ``lp.pars[i]`` (needed for parametric environments).
    """
    if count <= 0.0:
        return False
    width = out.shape[0]
    if count > pop_cap:
        if lp.istab[i]:
            for j in range(width):
                out[j] += count * lp.means[i, j]
        else:
            for j in range(width):
                # every product component's mean is its parameter, except LF (mean 1)
                if lp.kinds[i, j] == LINEAR_FRACTIONAL:
                    out[j] += count
                else:
                    out[j] += count * pars_row[j]
        return True
    c = np.int64(count)
    if lp.istab[i]:
        remaining = c
        rem_p = 1.0
        n = lp.nsup[i]
        for k in range(n):
            if remaining == 0:
                break
            p = lp.prob[i, k]
            if k == n - 1 or p >= rem_p:
                nk = remaining
            elif p <= 0.0:
                nk = 0
            else:
                nk = gen.binomial(remaining, p / rem_p)
            rem_p -= p
            remaining -= nk
            if nk > 0:
                for j in range(width):
                    out[j] += nk * lp.sup[i, k, j]
        return False
    for j in range(width):
        kind = lp.kinds[i, j]
        if kind == DETERMINISTIC and pars_row[j] == 0.0:
            continue
        out[j] += _component_sum(gen, kind, pars_row[j], c)
    return False


@njit(cache=True)
def draw_state(gen, env, pars_row):
    """Pick the generation's environment; fill ``pars_row`` and return the state index."""
    if env.sigma > 0.0:
        z = gen.standard_normal()
        pars_row[:] = env.laws.pars[0]
        pars_row[0] = math.exp(env.sigma * z)
        return 0
    u = gen.random()
    s = 0
    n = env.cumw.shape[0]
    while s < n - 1 and u >= env.cumw[s]:
        s += 1
    pars_row[:] = env.laws.pars[s]
    return s


@njit(cache=True)
def type0_step(gen, env, x, pop_cap, out, pars_row):
    """One type-0 generation: out[0] = X_n, out[1:] = Y_n.  Returns capped flag."""
    out[:] = 0.0
    s = draw_state(gen, env, pars_row)
    return offspring_sum(gen, env.laws, s, x, pars_row, pop_cap, out)


# ---------------------------------------------------------------------------
# type-0 simulation
# ---------------------------------------------------------------------------


@njit(cache=True)
def type0_path(gen, env, horizon, pop_cap):
    """Single trajectory up to min(T, horizon).

    Returns (X[0..len], Y[0..len] with Y[0] = 0, length, capped).
    """
    N = env.laws.kinds.shape[1] - 1
    X = np.zeros(horizon + 1)
    Y = np.zeros((horizon + 1, N))
    X[0] = 1.0
    out = np.zeros(N + 1)
    pars_row = np.zeros(N + 1)
    capped = False
    length = 0
    x = 1.0
    for k in range(1, horizon + 1):
        if x <= 0.0:
            break
        if type0_step(gen, env, x, pop_cap, out, pars_row):
            capped = True
        x = out[0]
        X[k] = x
        for j in range(N):
            Y[k, j] = out[j + 1]
        length = k
    return X[: length + 1].copy(), Y[: length + 1].copy(), length, capped


@njit(cache=True)
def type0_functionals_block(gen, env, reps, horizon, pop_cap, stop_at):
    """Path functionals for ``reps`` trajectories.

    Columns of the result: 0 generations simulated, 1 status (0 extinct,
    1 censored at horizon, 2 stopped because every tracked functional
    exceeded ``stop_at``), 2 S, 3 A, 4 L, 5 B, 6 capped, then L_j and B_j
    for j = 1..N.
    """
    N = env.laws.kinds.shape[1] - 1
    res = np.zeros((reps, 7 + 2 * N))
    out = np.zeros(N + 1)
    pars_row = np.zeros(N + 1)
    for r in range(reps):
        x = 1.0
        S = 0.0
        A = 0.0
        L = 0.0
        B = 0.0
        capped = False
        Lj = res[r, 7 : 7 + N]
        Bj = res[r, 7 + N : 7 + 2 * N]
        k = 0
        status = 1
        while k < horizon:
            S += x
            if x > A:
                A = x
            if type0_step(gen, env, x, pop_cap, out, pars_row):
                capped = True
            k += 1
            norm = 0.0
            for j in range(N):
                y = out[j + 1]
                Lj[j] += y
                if y > Bj[j]:
                    Bj[j] = y
                norm += y
            L += norm
            if norm > B:
                B = norm
            x = out[0]
            if x <= 0.0:
                status = 0
                break
            if S > stop_at and A > stop_at and B > stop_at and Lj[0] > stop_at and Bj[0] > stop_at:
                status = 2
                break
        res[r, 0] = k
        res[r, 1] = status
        res[r, 2] = S
        res[r, 3] = A
        res[r, 4] = L
        res[r, 5] = B
        res[r, 6] = 1.0 if capped else 0.0
    return res


@njit(cache=True)
def hybrid_block(gen, env, reps, horizons, offsets, log_h, pop_cap):
    """Accumulate v_q = 1 - exp(R(n_q; s_q)) over ``reps`` trajectories.

    ``log_h[offsets[q] + m, i]`` = log H_m^{(i)}(s_q) for m = 0..n_q.
    Returns (mean of v, sum (v - mean)(v - mean)^T, capped count,
    generations simulated), accumulated with Welford's update.
    """
    N = env.laws.kinds.shape[1] - 1
    nq = horizons.shape[0]
    n_max = 0
    for q in range(nq):
        if horizons[q] > n_max:
            n_max = horizons[q]
    mean = np.zeros(nq)
    comom = np.zeros((nq, nq))
    R = np.zeros(nq)
    v = np.zeros(nq)
    delta = np.zeros(nq)
    count = 0
    out = np.zeros(N + 1)
    pars_row = np.zeros(N + 1)
    n_capped = 0
    gens = 0
    for _ in range(reps):
        R[:] = 0.0
        x = 1.0
        k = 0
        capped = False
        while k < n_max and x > 0.0:
            if type0_step(gen, env, x, pop_cap, out, pars_row):
                capped = True
            k += 1
            live = False
            for q in range(nq):
                nqk = horizons[q]
                if k > nqk or R[q] <= NEG_SATURATED:
                    continue
                row = offsets[q] + nqk - k
                acc = R[q]
                for i in range(N):
                    y = out[i + 1]
                    if y > 0.0:
                        acc += y * log_h[row, i]
                R[q] = acc
                if k < nqk and acc > NEG_SATURATED:
                    live = True
            x = out[0]
            if not live:
                break
        gens += k
        if capped:
            n_capped += 1
        count += 1
        for q in range(nq):
            v[q] = -math.expm1(R[q])
            delta[q] = v[q] - mean[q]
            mean[q] += delta[q] / count
        for a in range(nq):
            for b in range(nq):
                comom[a, b] += delta[a] * (v[b] - mean[b])
    return mean, comom, n_capped, gens


# ---------------------------------------------------------------------------
# full (N+1)-type simulation and constant-environment simulation
# ---------------------------------------------------------------------------


@njit(cache=True)
def _types_step(gen, lp, z, pop_cap, nxt):
    """Advance types 1..N one generation; ``nxt`` must hold the immigrants."""
    capped = False
    for i in range(z.shape[0]):
        if z[i] > 0.0:
            if offspring_sum(gen, lp, i, z[i], lp.pars[i], pop_cap, nxt):
                capped = True
    return capped


@njit(cache=True)
def full_block(gen0, gen1, env, lp, reps, n, pop_cap):
    """(X_n, Z_n, capped) for ``reps`` replicates started from (1, 0)."""
    N = lp.kinds.shape[0]
    X = np.zeros(reps)
    Z = np.zeros((reps, N))
    capped = np.zeros(reps)
    out = np.zeros(N + 1)
    pars_row = np.zeros(N + 1)
    nxt = np.zeros(N)
    for r in range(reps):
        x = 1.0
        z = Z[r]
        cap = False
        for _ in range(n):
            for j in range(N):
                nxt[j] = 0.0
            if x > 0.0:
                if type0_step(gen0, env, x, pop_cap, out, pars_row):
                    cap = True
                x = out[0]
                for j in range(N):
                    nxt[j] = out[j + 1]
            if _types_step(gen1, lp, z, pop_cap, nxt):
                cap = True
            for j in range(N):
                z[j] = nxt[j]
        X[r] = x
        capped[r] = 1.0 if cap else 0.0
    return X, Z, capped


@njit(cache=True)
def constant_block(gen, lp, reps, n, start, pop_cap):
    """Z_n for ``reps`` constant-environment replicates started from e_start."""
    N = lp.kinds.shape[0]
    Z = np.zeros((reps, N))
    nxt = np.zeros(N)
    for r in range(reps):
        z = Z[r]
        z[start] = 1.0
        for _ in range(n):
            for j in range(N):
                nxt[j] = 0.0
            _types_step(gen, lp, z, pop_cap, nxt)
            for j in range(N):
                z[j] = nxt[j]
    return Z
