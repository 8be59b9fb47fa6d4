"""The acceptance suite: thirteen numbered checks with fixed tolerances.

Each check returns a :class:`CriterionResult`.  ``scale`` multiplies every
Monte Carlo replicate count (1.0 is the full suite); tolerances never change
with the scale.  Runtimes are logged but never written into results, so the
output is a function of (seed, scale) alone.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from bplab import analysis, estimators, gf, models, oracles, report
from bplab.envsim import simulate_constant_batch, simulate_type0_batch
from bplab.model import single_type_lf

log = logging.getLogger(__name__)

TITLES = {
    1: "linear-fractional exactness",
    2: "brute-force equivalence",
    3: "survival exponents",
    4: "moment exponents",
    5: "sandwich bounds",
    6: "two-type regimes",
    7: "hybrid correctness and variance reduction",
    8: "type-0 survival ~ c/sqrt(n)",
    9: "K0 plateaus",
    10: "survival plateau F(n) log n / 2^(N-1)",
    11: "conditional limit N=1",
    12: "conditional limit table N=2",
    13: "determinism",
}

SANDWICH_RTOL = 1e-13  # rounding slack where the lower bound is attained exactly
YAGLOM_NS = (10**3, 10**4, 10**5, 10**6)
TAIL_X = np.logspace(2, 6, 9)
LAPLACE_LAMBDA = np.logspace(-2, -6, 5)


@dataclass
class CriterionResult:
    number: int
    passed: bool
    value: float | None
    detail: str
    params: dict = field(default_factory=dict)
    std_error: float | None = None
    reps: int | None = None
    capped_fraction: float | None = None

    @property
    def title(self) -> str:
        return TITLES[self.number]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d} ({self.title}): {self.detail}"


def _g(v: float) -> str:
    return format(float(v), ".4g")


def _warm_up() -> None:
    # compile (or load cached) kernels so timed sections measure iteration only
    gf.iterate_deficiency(single_type_lf(1.0), 2, q0=np.ones(1))


class AcceptanceSuite:
    def __init__(self, seed: int = 20240601, scale: float = 1.0, workers: int = 1):
        if not scale > 0:
            raise ValueError("scale must be positive")
        self.seed = int(seed)
        self.scale = float(scale)
        self.workers = int(workers)

    # -- helpers -----------------------------------------------------------

    def reps(self, full: int, floor: int = 2000) -> int:
        return max(min(floor, full), int(round(full * self.scale)))

    def seed_for(self, number: int, part: int = 0) -> int:
        return int(np.random.SeedSequence([self.seed, number, part]).generate_state(1)[0])

    def run(self, numbers=None) -> list[CriterionResult]:
        numbers = sorted(TITLES) if numbers is None else list(numbers)
        out = []
        for k in numbers:
            t0 = time.perf_counter()
            res = getattr(self, f"criterion_{k}")()
            log.info("%s  [%.1f s]", res.line(), time.perf_counter() - t0)
            out.append(res)
        return out

    # -- 1 -----------------------------------------------------------------

    def criterion_1(self) -> CriterionResult:
        _warm_up()
        n_max = 10**6
        worst, slowest = 0.0, 0.0
        n = np.arange(n_max + 1, dtype=float)
        for b in (0.5, 1.0, 2.0):
            model = single_type_lf(b)
            t0 = time.perf_counter()
            path = gf.survival_path(model, n_max)[:, 0]
            slowest = max(slowest, time.perf_counter() - t0)
            exact = 1.0 / (1.0 + b * n)
            worst = max(worst, float(np.max(np.abs(path - exact) / exact)))
        fast = slowest < 1.0
        ok = worst <= 1e-10 and fast
        log.info("criterion 1 slowest sweep %.3f s", slowest)
        return CriterionResult(
            1, ok, worst,
            f"max relative error {_g(worst)} (<= 1e-10) over n <= 1e6, b in (0.5, 1, 2); "
            f"each sweep under 1 s: {fast}",
            {"n_max": n_max},
        )

    # -- 2 -----------------------------------------------------------------

    def criterion_2(self) -> CriterionResult:
        spec = models.load("tables_n3")
        model = spec.constant
        N = model.N
        worst = 0.0
        for n in range(0, 5):
            exact = oracles.constant_tables(model, n)
            q = gf.iterate_deficiency(model, n, q0=np.ones(N)).q
            m = gf.mean_power(model, n)
            b = gf.second_moment_table(model, n)
            for got, want in ((q, exact["Q"]), (m, exact["M"]), (b, exact["B"])):
                worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want)))))
        reps = self.reps(10**6)
        max_z = 0.0
        for n in range(1, 5):
            for i in range(N):
                Z = simulate_constant_batch(model, n, i, reps, self.seed_for(2, 10 * n + i), workers=self.workers)
                p_hat = float(np.mean(np.any(Z > 0, axis=1)))
                p = oracles.nonzero_probability(oracles.constant_pmf(model, n, i))
                se = math.sqrt(max(p * (1 - p), 1e-300) / reps)
                max_z = max(max_z, abs(p_hat - p) / se)
        ok = worst <= 1e-12 and max_z <= 3.0
        return CriterionResult(
            2, ok, worst,
            f"{spec.id}: max deviation from enumeration {_g(worst)} (<= 1e-12) for n <= 4; "
            f"direct MC of P(Z_n != 0) max |z| {_g(max_z)} (<= 3)",
            {"model": spec.id}, reps=reps,
        )

    # -- 3 -----------------------------------------------------------------

    def criterion_3(self) -> CriterionResult:
        _warm_up()
        grid = np.unique(np.logspace(4, 6, 21).round().astype(int))
        worst, parts, fast = 0.0, [], True
        for name in ("mixed_n2", "tables_n3"):
            model = models.load(name).constant
            t0 = time.perf_counter()
            path = gf.survival_path(model, 10**6)
            fast &= time.perf_counter() - t0 < 10.0
            for i in range(model.N):
                fit = analysis.fit_log_slope(np.column_stack([grid, path[grid, i]]))
                target = -(2.0 ** -(model.N - 1 - i))
                worst = max(worst, abs(fit.slope - target))
                parts.append(f"{name}[{i + 1}] {fit.slope:.4f} vs {target:g}")
        ok = worst <= 0.05 and fast
        return CriterionResult(3, ok, worst, "; ".join(parts) + f"; max error {_g(worst)} (<= 0.05); runtime ok: {fast}")

    # -- 4 -----------------------------------------------------------------

    def criterion_4(self) -> CriterionResult:
        n1, n2 = 10**4, 2 * 10**4
        worst, where = 0.0, ""
        for name in models.NAMES:
            model = models.load(name).constant
            N = model.N
            t1, t2 = gf.moment_tables(model, n1), gf.moment_tables(model, n2)
            for i, l in itertools.product(range(N), repeat=2):
                if l < i or t1.mean[i, l] == 0:
                    continue
                a = t1.mean[i, l] / n1 ** (l - i)
                b = t2.mean[i, l] / n2 ** (l - i)
                d = abs(b / a - 1)
                if d > worst:
                    worst, where = d, f"{name} m_{i + 1}{l + 1}"
            for i, k, l in itertools.product(range(N), repeat=3):
                if k < i or l < i or t1.second[i, k, l] == 0:
                    continue
                e = k + l - 2 * i + 1
                a = t1.second[i, k, l] / n1**e
                b = t2.second[i, k, l] / n2**e
                d = abs(b / a - 1)
                if d > worst:
                    worst, where = d, f"{name} b_{i + 1}{k + 1}{l + 1}"
        ok = worst < 0.02
        return CriterionResult(4, ok, worst, f"largest normalized change {_g(worst)} at {where} (< 0.02)")

    # -- 5 -----------------------------------------------------------------

    @staticmethod
    def s_grid(N: int) -> list:
        dims = {1: [100], 2: [10, 10], 3: [5, 5, 4]}.get(N)
        if dims is None:
            raise ValueError("grid defined for N <= 3")
        axes = [np.linspace(0.0, 1.0, d) for d in dims]
        return [np.array(p) for p in itertools.product(*axes)]

    def criterion_5(self) -> CriterionResult:
        violations, checked, worst = 0, 0, math.inf
        for name in models.NAMES:
            model = models.load(name).constant
            for n in (1, 10, 100):
                for s in self.s_grid(model.N):
                    r = gf.sandwich_check(model, n, s, rtol=SANDWICH_RTOL)
                    checked += 1
                    violations += not r.holds
                    worst = min(worst, float(r.lower_margin.min()), float(r.upper_margin.min()))
        return CriterionResult(
            5, violations == 0, float(violations),
            f"{violations} violations in {checked} (model, n, s) cases; smallest margin {_g(worst)} "
            f"(rounding slack {SANDWICH_RTOL:g} x M)",
        )

    # -- 6 -----------------------------------------------------------------

    def criterion_6(self) -> CriterionResult:
        model = models.load("mixed_n2").constant
        ns = np.unique(np.logspace(3, 6, 7).round().astype(int))
        parts, ok, worst = [], True, 0.0
        for t in ((5.0, 0.5), (5.0, 1.5), (0.5, 3.0), (2.0, 3.0)):
            ys = [gf.iterate_deficiency(model, int(n), q0=estimators.yaglom_deficiency(n, t)).q[0] for n in ns]
            v = analysis.envelope_check(ns, ys, analysis.regime_exponent(*t), 10.0, label=str(t))
            ok &= v.passed
            worst = max(worst, v.max_min_ratio)
            parts.append(f"t={t}: gamma {v.gamma:g}, max/min {_g(v.max_min_ratio)}")
        return CriterionResult(6, ok, worst, "; ".join(parts) + " (<= 10)", {"model": "mixed_n2"})

    # -- 7 -----------------------------------------------------------------

    def criterion_7(self) -> CriterionResult:
        env = models.load("two_point_env").env
        reps = self.reps(10**5)
        h = estimators.hybrid_nonextinction(env, 64, reps, self.seed_for(7, 0), self.workers)
        d = estimators.direct_nonextinction(env, 64, reps, self.seed_for(7, 1), workers=self.workers)
        comb = math.hypot(h.std_error, d.std_error)
        z = abs(h.value - d.value) / comb
        ok = z <= 3.0 and h.std_error <= d.std_error
        return CriterionResult(
            7, ok, h.value,
            f"hybrid {_g(h.value)} +- {_g(h.std_error)}, direct {_g(d.value)} +- {_g(d.std_error)}; "
            f"|diff| = {_g(z)} combined SE (<= 3); SE ratio {_g(h.std_error / d.std_error)} (<= 1)",
            {"model": "two_point_env", "n": 64}, h.std_error, reps, max(h.capped_fraction, d.capped_fraction),
        )

    # -- 8 -----------------------------------------------------------------

    def criterion_8(self) -> CriterionResult:
        env = models.load("two_point_env").env
        ns = (100, 400, 1600, 6400)
        reps = self.reps(10**6)
        batch = simulate_type0_batch(env, reps, max(ns), self.seed_for(8), workers=self.workers)
        scaled = [float(batch.alive_after(n).mean()) * math.sqrt(n) for n in ns]
        mm = max(scaled) / min(scaled)
        return CriterionResult(
            8, mm <= 1.6, mm,
            "P(X_n > 0) sqrt(n) = " + ", ".join(_g(v) for v in scaled) + f"; max/min {_g(mm)} (<= 1.6)",
            {"model": "two_point_env"}, reps=reps, capped_fraction=batch.capped_fraction,
        )

    # -- 9, 10 -------------------------------------------------------------

    @cached_property
    def tails_batch(self):
        env = models.load("two_point_env").env
        return simulate_type0_batch(
            env, self.reps(10**6), 10**7, self.seed_for(9), stop_at=1e8, workers=self.workers
        )

    @cached_property
    def plateaus(self) -> dict:
        b = self.tails_batch
        out = {}
        for name, arr in (("S", b.S), ("A", b.A), ("L", b.L), ("L1", b.L_j[:, 0])):
            p = [float(np.mean(arr > x)) for x in TAIL_X]
            out[name] = analysis.plateau_estimate(np.column_stack([TAIL_X, p]))
        return out

    @property
    def k0_hat(self) -> float:
        return float(np.mean([p.value for p in self.plateaus.values()]))

    def criterion_9(self) -> CriterionResult:
        b = self.tails_batch
        pl = self.plateaus
        names = list(pl)
        worst, pair = 1.0, ""
        for a, c in itertools.combinations(names, 2):
            r = max(pl[a].value, pl[c].value) / min(pl[a].value, pl[c].value)
            if r > worst:
                worst, pair = r, f"{a}/{c}"
        lap = np.array([np.mean(-np.expm1(-lam * b.L)) * math.log(1 / lam) for lam in LAPLACE_LAMBDA])
        lap_mm = float(lap.max() / lap.min())
        ok = worst <= 1.25 and lap_mm <= 1.5
        detail = (
            "plateaus " + ", ".join(f"{k} {_g(v.value)}" for k, v in pl.items())
            + f"; largest pairwise ratio {_g(worst)} ({pair}, <= 1.25); "
            f"Laplace plateau max/min {_g(lap_mm)} (<= 1.5); K0-hat {_g(self.k0_hat)}; "
            f"open trajectories {int(np.sum(b.status != 0))}"
        )
        return CriterionResult(
            9, ok, worst, detail, {"model": "two_point_env"}, reps=b.reps, capped_fraction=b.capped_fraction
        )

    def criterion_10(self) -> CriterionResult:
        env = models.load("two_point_env").env
        b = self.tails_batch
        ns = YAGLOM_NS
        F = estimators.corollary_F(env, ns, b)
        scaled = [e.value * math.log(n) / 2 ** (env.N - 1) for e, n in zip(F, ns)]
        mm = max(scaled) / min(scaled)
        rel = abs(scaled[-1] / self.k0_hat - 1)
        ok = mm <= 1.35 and rel <= 0.35
        return CriterionResult(
            10, ok, scaled[-1],
            "F(n) log n / 2 = " + ", ".join(_g(v) for v in scaled)
            + f"; max/min {_g(mm)} (<= 1.35); final vs K0-hat {_g(self.k0_hat)}: {_g(rel)} (<= 0.35)",
            {"model": "two_point_env"}, F[-1].std_error, b.reps, b.capped_fraction,
        )

    # -- 11, 12 ------------------------------------------------------------

    def criterion_11(self) -> CriterionResult:
        env = models.load("two_point_env_n1").env
        reps = self.reps(10**6)
        sw = estimators.yaglom_sweep(env, YAGLOM_NS, [[2.0]], "type1", reps, self.seed_for(11), self.workers)
        target = analysis.limit_cdf_G([2.0])
        vals = [sw.estimate(i, 0) for i in range(len(YAGLOM_NS))]
        steps_ok = []
        for i in range(1, len(vals)):
            st = sw.step(i, 0)
            toward = abs(vals[i].value - target) <= abs(vals[i - 1].value - target)
            steps_ok.append(bool(toward or abs(st.value) <= 2 * st.std_error))
        final = abs(vals[-1].value - target)
        ok = all(steps_ok) and final <= 0.15
        return CriterionResult(
            11, ok, vals[-1].value,
            "G_n(2) = " + ", ".join(f"{_g(v.value)}+-{_g(v.std_error)}" for v in vals)
            + f"; steps toward {target:g} or within 2 SE: {steps_ok}; final error {_g(final)} (<= 0.15)",
            {"model": "two_point_env_n1", "t": 2.0}, vals[-1].std_error, reps, sw.sample.capped_fraction,
        )

    def criterion_12(self) -> CriterionResult:
        env = models.load("two_point_env").env
        reps = self.reps(10**6)
        ts = [(0.5, 1.5), (0.5, 5.0), (3.0, 5.0)]
        sw = estimators.yaglom_sweep(env, YAGLOM_NS, ts, "any", reps, self.seed_for(12), self.workers)
        target = analysis.limit_cdf_A(0.5, 5.0)
        series = [sw.estimate(i, 1) for i in range(len(YAGLOM_NS))]
        steps_ok = []
        for i in range(1, len(series)):
            st = sw.step(i, 1)
            toward = abs(series[i].value - target) <= abs(series[i - 1].value - target)
            steps_ok.append(bool(toward or abs(st.value) <= 2 * st.std_error))
        final = abs(series[-1].value - target)
        last = [sw.estimate(len(YAGLOM_NS) - 1, j).value for j in range(3)]
        ordered = last[0] < last[1] < last[2]
        ok = all(steps_ok) and final <= 0.15 and ordered
        limits = [analysis.limit_cdf_A(*t) for t in ts]
        return CriterionResult(
            12, ok, series[-1].value,
            "A_n(0.5,5) = " + ", ".join(f"{_g(v.value)}+-{_g(v.std_error)}" for v in series)
            + f"; steps toward {target:g} or within 2 SE: {steps_ok}; final error {_g(final)} (<= 0.15); "
            f"at n=1e6 A(0.5,1.5) {_g(last[0])} < A(0.5,5) {_g(last[1])} < A(3,5) {_g(last[2])}: {ordered}; "
            f"limits {', '.join(_g(v) for v in limits)}",
            {"model": "two_point_env", "t": "(0.5,5)"}, series[-1].std_error, reps, sw.sample.capped_fraction,
        )

    # -- 13 ----------------------------------------------------------------

    def criterion_13(self) -> CriterionResult:
        """Byte comparison of a reduced run of the Monte Carlo checks, 1 vs 8 workers."""
        texts = []
        for w in (1, 8):
            sub = AcceptanceSuite(self.seed, scale=min(self.scale, 1.0) * 0.01, workers=w)
            rows = sub.run([7, 8, 11])
            texts.append(report.render(to_table(rows, "determinism-probe")))
        same = texts[0] == texts[1]
        return CriterionResult(13, same, float(same), f"reduced Monte Carlo checks byte-identical for workers 1 and 8: {same}")


def to_table(results, model_label: str = "suite") -> report.ResultTable:
    table = report.ResultTable()
    for r in results:
        params = {"criterion": r.number, **{k: v for k, v in r.params.items() if k != "model"}}
        table.add(
            f"criterion-{r.number}", str(r.params.get("model", model_label)), params, r.value, r.std_error,
            r.reps, r.capped_fraction, "pass" if r.passed else "fail", r.detail,
        )
    return table
