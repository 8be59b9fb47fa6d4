"""Exhaustive enumeration of small processes with finite-support laws.

These are slow reference computations used to cross-check the iterative
and Monte Carlo code paths.  Probabilities are propagated exactly over all
reachable population vectors; nothing is sampled.
"""
from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np

from bplab.laws import Bernoulli, Deterministic, ExplicitTable, IndependentProduct, OffspringLaw
from bplab.model import ConstantEnvModel, RandomEnvModel

Pmf = dict  # tuple of counts -> probability


def finite_table(law: OffspringLaw) -> Pmf:
    """The law as a finite pmf; products of Deterministic/Bernoulli components qualify."""
    if isinstance(law, ExplicitTable):
        out: Pmf = defaultdict(float)
        for k, p in zip(law.support, law.probs):
            out[tuple(int(v) for v in k)] += float(p)
        return dict(out)
    if isinstance(law, IndependentProduct):
        axes = []
        for c in law.components:
            if isinstance(c, Deterministic):
                axes.append([(int(c.k), 1.0)])
            elif isinstance(c, Bernoulli):
                axes.append([(0, 1.0 - c.p), (1, c.p)])
            else:
                raise ValueError(f"{type(c).__name__} has infinite support")
        out = {}
        for combo in itertools.product(*axes):
            key = tuple(v for v, _ in combo)
            out[key] = out.get(key, 0.0) + float(np.prod([p for _, p in combo]))
        return out
    raise TypeError(f"unsupported law {law!r}")


def _convolve(a: Pmf, b: Pmf) -> Pmf:
    out: Pmf = defaultdict(float)
    for ka, pa in a.items():
        for kb, pb in b.items():
            out[tuple(x + y for x, y in zip(ka, kb))] += pa * pb
    return dict(out)


class _Powers:
    """Memoized convolution powers of one pmf."""

    def __init__(self, pmf: Pmf, width: int):
        self.base = pmf
        self.cache = {0: {(0,) * width: 1.0}}

    def __call__(self, k: int) -> Pmf:
        if k not in self.cache:
            self.cache[k] = _convolve(self(k - 1), self.base)
        return self.cache[k]


def _pad(pmf: Pmf, width: int, offset: int) -> Pmf:
    out = {}
    for k, p in pmf.items():
        v = [0] * width
        v[offset : offset + len(k)] = k
        out[tuple(v)] = out.get(tuple(v), 0.0) + p
    return out


def _type_powers(model: ConstantEnvModel, width: int, offset: int) -> list:
    return [_Powers(_pad(finite_table(law), width, offset + i), width) for i, law in enumerate(model.laws)]


def constant_pmf(model: ConstantEnvModel, n: int, start: int) -> Pmf:
    """Law of Z_n given Z_0 = e_start (0-based type index)."""
    N = model.N
    powers = _type_powers(model, N, 0)
    state = {tuple(int(j == start) for j in range(N)): 1.0}
    for _ in range(n):
        nxt: Pmf = defaultdict(float)
        for z, p in state.items():
            dist = {(0,) * N: 1.0}
            for i, c in enumerate(z):
                if c:
                    dist = _convolve(dist, powers[i](c))
            for k, q in dist.items():
                nxt[k] += p * q
        state = dict(nxt)
    return state


def full_pmf(model: RandomEnvModel, n: int) -> Pmf:
    """Law of (X_n, Z_n) from (1, 0) for a finite mixture with finite laws."""
    if model.is_family:
        raise ValueError("only finite mixtures can be enumerated")
    N = model.N
    width = N + 1
    type_powers = _type_powers(model.constant, width, 1)
    env_powers = [_Powers(_pad(finite_table(st.law0), width, 0), width) for st in model.states]
    state = {(1,) + (0,) * N: 1.0}
    for _ in range(n):
        nxt: Pmf = defaultdict(float)
        for z, p in state.items():
            types = {(0,) * width: 1.0}
            for i, c in enumerate(z[1:]):
                if c:
                    types = _convolve(types, type_powers[i](c))
            for w, pw in zip(model.weights, env_powers):
                dist = _convolve(pw(z[0]), types)
                for k, q in dist.items():
                    nxt[k] += p * w * q
        state = dict(nxt)
    return state


# ---------------------------------------------------------------------------
# functionals of an enumerated pmf
# ---------------------------------------------------------------------------


def deficiency_from_pmf(pmf: Pmf, s) -> float:
    """1 - E[s^Z]."""
    s = np.asarray(s, dtype=float)
    total = sum(p * float(np.prod(s ** np.array(k))) for k, p in pmf.items())
    return 1.0 - total


def moments_from_pmf(pmf: Pmf) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and second factorial moment matrix."""
    keys = np.array(list(pmf), dtype=float)
    probs = np.array(list(pmf.values()))
    mean = probs @ keys
    second = np.einsum("r,rk,rl->kl", probs, keys, keys) - np.diag(mean)
    return mean, second


def nonzero_probability(pmf: Pmf, coords=None) -> float:
    """P(some selected coordinate is positive)."""
    total = 0.0
    for k, p in pmf.items():
        sel = k if coords is None else [k[c] for c in coords]
        if any(sel):
            total += p
    return total


def constant_tables(model: ConstantEnvModel, n: int) -> dict:
    """Q_n(0), m(n) and b(n) for every start type, by enumeration."""
    N = model.N
    Q = np.zeros(N)
    M = np.zeros((N, N))
    B = np.zeros((N, N, N))
    for i in range(N):
        pmf = constant_pmf(model, n, i)
        Q[i] = nonzero_probability(pmf)
        M[i], B[i] = moments_from_pmf(pmf)
    return {"Q": Q, "M": M, "B": B}
