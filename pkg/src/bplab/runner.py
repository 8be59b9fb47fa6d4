"""Dispatch of experiment kinds to the estimators and analysis helpers."""
from __future__ import annotations

import logging
import math

import numpy as np

from bplab import acceptance, analysis, estimators, gf
from bplab.config import ExperimentConfig
from bplab.envsim import EXTINCT, simulate_type0_batch, write_trajectory_dump
from bplab.report import ResultTable

log = logging.getLogger(__name__)

DEGRADED_CAPPED_FRACTION = 1e-3


def _boundary_safe(fn, *args):
    try:
        return fn(*args)
    except (analysis.BoundaryRegimeError, ValueError):
        return None


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    if cfg.report is not None:
        for line in cfg.report.lines():
            log.info(line)
    table = ResultTable(metadata={"seed": cfg.seed, "kind": cfg.kind})
    handler = {
        "exact-survival": _exact_survival,
        "moments": _moments,
        "sandwich": _sandwich,
        "regimes": _regimes,
        "simulate": _simulate,
        "hybrid": _hybrid,
        "yaglom": _yaglom,
        "tails": _tails,
        "verify-all": _verify_all,
    }[cfg.kind]
    handler(cfg, table)
    return table


def is_degraded(table: ResultTable) -> bool:
    return table.max_capped_fraction() > DEGRADED_CAPPED_FRACTION


# ---------------------------------------------------------------------------
# exact kinds
# ---------------------------------------------------------------------------


def _exact_survival(cfg, table):
    m = cfg.model
    path = gf.survival_path(m.constant, max(cfg.horizons))
    for n in cfg.horizons:
        for i in range(m.N):
            table.add("exact-survival", m.id, {"n": n, "type": i + 1}, float(path[n, i]))


def _moments(cfg, table):
    m = cfg.model
    N = m.N
    for n in cfg.horizons:
        t = gf.moment_tables(m.constant, n)
        for i in range(N):
            for l in range(i, N):
                table.add("mean", m.id, {"n": n, "i": i + 1, "l": l + 1}, float(t.mean[i, l]),
                          diagnostics=_normalized(t.mean[i, l], n, l - i))
            for k in range(i, N):
                for l in range(k, N):
                    e = k + l - 2 * i + 1
                    table.add("second", m.id, {"n": n, "i": i + 1, "k": k + 1, "l": l + 1}, float(t.second[i, k, l]),
                              diagnostics=_normalized(t.second[i, k, l], n, e))


def _normalized(value, n, e) -> str:
    return f"normalized by n^{e}: {value / n ** e:.12g}" if n > 0 else ""


def _sandwich(cfg, table):
    m = cfg.model
    grid = [np.asarray(cfg.s)] if cfg.s is not None else acceptance.AcceptanceSuite.s_grid(m.N)
    for n in cfg.horizons:
        for s in grid:
            r = gf.sandwich_check(m.constant, n, s, rtol=acceptance.SANDWICH_RTOL)
            margin = float(min(r.lower_margin.min(), r.upper_margin.min()))
            table.add("sandwich", m.id, {"n": n, "s": [float(x) for x in s]}, margin,
                      verdict="pass" if r.holds else "fail", diagnostics="smallest margin over start types")


def _regimes(cfg, table):
    m = cfg.model
    ns = sorted(cfg.horizons)
    for t in cfg.t_grid:
        try:
            gamma = analysis.regime_exponent(*t)
        except analysis.BoundaryRegimeError as exc:
            table.add("regimes", m.id, {"t": t}, None, verdict="undefined", diagnostics=str(exc))
            continue
        ys = [gf.iterate_deficiency(m.constant, n, q0=estimators.yaglom_deficiency(n, t)).q[0] for n in ns]
        v = analysis.envelope_check(ns, ys, gamma, 10.0)
        table.add("regimes", m.id, {"t": t, "gamma": gamma}, v.max_min_ratio,
                  verdict="pass" if v.passed else "fail", diagnostics="max/min of y_n n^gamma, threshold 10")


# ---------------------------------------------------------------------------
# Monte Carlo kinds
# ---------------------------------------------------------------------------


def _simulate(cfg, table):
    m = cfg.model
    horizon = max(cfg.horizons)
    batch = simulate_type0_batch(m.env, cfg.reps, horizon, cfg.seed, cfg.pop_cap, workers=cfg.workers)
    if cfg.dump:
        write_trajectory_dump(batch, cfg.dump)
    for n in cfg.horizons:
        alive = batch.alive_after(n)
        p = float(alive.mean())
        se = math.sqrt(p * (1 - p) / cfg.reps)
        table.add("type0-survival", m.id, {"n": n}, p, se, cfg.reps, batch.capped_fraction,
                  diagnostics=f"P(X_n > 0) sqrt(n) = {p * math.sqrt(n):.12g}")
    ext = batch.status == EXTINCT
    table.add("type0-extinct-by-horizon", m.id, {"horizon": horizon}, float(ext.mean()), None, cfg.reps,
              batch.capped_fraction)


def _hybrid(cfg, table):
    m = cfg.model
    q0 = np.ones(m.N) if cfg.s is None else 1.0 - np.asarray(cfg.s)
    queries = [estimators.Query.make(n, m.N, q0=q0) for n in cfg.horizons]
    sample = estimators.hybrid_sample(m.env, queries, cfg.reps, cfg.seed, cfg.workers, cfg.pop_cap)
    s = [float(x) for x in (1.0 - q0)]
    for j, n in enumerate(cfg.horizons):
        e = sample.estimate(j)
        table.add("hybrid", m.id, {"n": n, "s": s}, e.value, e.std_error, e.reps, e.capped_fraction,
                  diagnostics=f"value log n = {e.value * math.log(n):.12g}" if n > 1 else "")


def _yaglom(cfg, table):
    m = cfg.model
    if cfg.mode == "direct":
        for n in cfg.horizons:
            ests = estimators.conditional_yaglom_cdf(m.env, n, cfg.t_grid, cfg.condition, cfg.reps, cfg.seed,
                                                     cfg.workers, cfg.pop_cap, mode="direct")
            for t, e in zip(cfg.t_grid, ests):
                table.add("yaglom-direct", m.id, {"n": n, "t": t, "condition": cfg.condition}, e.value,
                          e.std_error, e.reps, e.capped_fraction, diagnostics=_limit_note(cfg, t))
        return
    sw = estimators.yaglom_sweep(m.env, cfg.horizons, cfg.t_grid, cfg.condition, cfg.reps, cfg.seed,
                                 cfg.workers, cfg.pop_cap)
    for i, n in enumerate(cfg.horizons):
        for j, t in enumerate(cfg.t_grid):
            e = sw.estimate(i, j)
            table.add("yaglom", m.id, {"n": n, "t": t, "condition": cfg.condition}, e.value, e.std_error,
                      e.reps, e.capped_fraction, diagnostics=_limit_note(cfg, t))


def _limit_note(cfg, t) -> str:
    if cfg.condition == "type1":
        lim = _boundary_safe(analysis.limit_cdf_G, t)
    elif len(t) == 2:
        lim = _boundary_safe(analysis.limit_cdf_A, *t)
    else:
        lim = None
    return "" if lim is None else f"limit {lim:.12g}"


def _tails(cfg, table):
    m = cfg.model
    horizon = max(cfg.horizons) * 10 if cfg.horizons else 10**7
    batch = simulate_type0_batch(m.env, cfg.reps, horizon, cfg.seed, cfg.pop_cap, cfg.stop_at, cfg.workers)
    xs = np.asarray(cfg.x_grid if cfg.x_grid else acceptance.TAIL_X)
    if xs.max() >= cfg.stop_at:
        raise ValueError("x_grid must stay below stop_at")
    cols = [("S_T", batch.S), ("A_T", batch.A), ("L_T", batch.L), ("B_T", batch.B)]
    cols += [(f"L_T{j + 1}", batch.L_j[:, j]) for j in range(m.N)]
    for name, arr in cols:
        p = [float(np.mean(arr > x)) for x in xs]
        pl = analysis.plateau_estimate(np.column_stack([xs, p]))
        table.add("tail-plateau", m.id, {"functional": name}, pl.value, None, batch.reps, batch.capped_fraction,
                  diagnostics=f"max/min {pl.dispersion:.12g}")
    lams = np.asarray(cfg.lambda_grid if cfg.lambda_grid else acceptance.LAPLACE_LAMBDA)
    lap = np.array([np.mean(-np.expm1(-lam * batch.L)) * math.log(1 / lam) for lam in lams])
    table.add("laplace-plateau", m.id, {"functional": "L_T"}, float(lap.mean()), None, batch.reps,
              batch.capped_fraction, diagnostics=f"max/min {lap.max() / lap.min():.12g}")
    for n, e in zip(cfg.horizons, estimators.corollary_F(m.env, cfg.horizons, batch)):
        scaled = e.value * math.log(n) / 2 ** (m.N - 1)
        table.add("corollary-F", m.id, {"n": n}, e.value, e.std_error, e.reps, e.capped_fraction,
                  diagnostics=f"F log n / 2^(N-1) = {scaled:.12g}")


def _verify_all(cfg, table):
    suite = acceptance.AcceptanceSuite(cfg.seed, cfg.scale, cfg.workers)
    for row in acceptance.to_table(suite.run()).rows:
        table.rows.append(row)
