"""Verification suites: each returns pass/fail plus human-readable lines.

The suites are sized to run in seconds to a couple of minutes; the heavier
acceptance runs live in the test-suite and reuse the measuring helpers here.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ridepool import rng as rngmod
from ridepool.data import TinyParams, generate_tiny
from ridepool.grouping import (
    GroupCatalog,
    GroupType,
    count_group_types,
    enumerate_group_types,
    expected_group_count,
    h_factor,
)
from ridepool.lp import build_lp, solve_lp
from ridepool.model import Instance, make_instance
from ridepool.offline import expected_offline_optimal
from ridepool.policies import AdapBatch, AdapShare, AdaptiveTables, estimate_tables, gamma_fixed_point
from ridepool.simulator import run_episode


@dataclass
class SuiteResult:
    name: str
    passed: bool
    lines: list[str] = field(default_factory=list)
    seconds: float = 0.0

    def __str__(self) -> str:
        head = f"[{'PASS' if self.passed else 'FAIL'}] {self.name} ({self.seconds:.2f}s)"
        return "\n".join([head] + [f"    {line}" for line in self.lines])


# -- gamma -----------------------------------------------------------------


def suite_gamma() -> SuiteResult:
    lines = []
    g2 = gamma_fixed_point(2).gamma
    ok2 = abs(g2 - 0.31767) <= 1e-5
    lines.append(f"gamma(2) = {g2:.8f} (target 0.31767 +- 1e-5): {'ok' if ok2 else 'FAIL'}")
    g1 = gamma_fixed_point(1).gamma
    closed = (3 - math.sqrt(5)) / 2
    ok1 = abs(g1 - closed) <= 1e-10
    lines.append(f"gamma(1) = {g1:.12f} vs (3-sqrt5)/2 = {closed:.12f}: {'ok' if ok1 else 'FAIL'}")
    vals = [gamma_fixed_point(k).gamma for k in range(1, 11)]
    mono = all(a > b for a, b in zip(vals, vals[1:]))
    lines.append(f"strictly decreasing for kappa=1..10: {'ok' if mono else 'FAIL'}")
    return SuiteResult("gamma", ok1 and ok2 and mono, lines)


# -- combinatorics ---------------------------------------------------------


def monte_carlo_group_count(g: GroupType, probs, b: int, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Mean and standard error of the number of formable copies of ``g``
    in ``samples`` random batches (product of binomial coefficients)."""
    counts = rng.multinomial(b, probs, size=samples)
    val = np.ones(samples)
    for v, n in g.multiplicities.items():
        c = counts[:, v].astype(float)
        term = np.ones(samples)
        for i in range(n):
            term *= c - i
        val *= term / math.factorial(n)
    return float(val.mean()), float(val.std(ddof=1) / math.sqrt(samples))


def random_group_cases(n: int, seed: int) -> list[tuple[GroupType, np.ndarray, int]]:
    gen = rngmod.stream(seed, 0, 0, rngmod.GENERATOR)
    out = []
    for _ in range(n):
        V = int(gen.integers(1, 5))
        kappa = int(gen.integers(1, 4))
        b = int(gen.integers(kappa + 1, kappa + 5))
        groups = enumerate_group_types(V, kappa)
        g = groups[int(gen.integers(len(groups)))]
        p = gen.dirichlet(np.ones(V))
        out.append((g, p, b))
    return out


def suite_combinatorics(mc_cases: int = 6, mc_samples: int = 100_000, seed: int = 0) -> SuiteResult:
    lines = []
    ok = True
    bad = [(n, k) for n in range(1, 13) for k in range(1, 5) if count_group_types(n, k) != len(enumerate_group_types(n, k))]
    ok &= not bad
    lines.append(f"count == enumeration for n<=12, kappa<=4: {'ok' if not bad else f'FAIL {bad}'}")
    trip = all(
        h_factor(GroupType((0,)), b) == b
        and h_factor(GroupType((0, 1)), b) == b * (b - 1)
        and h_factor(GroupType((0, 0)), b) == b * (b - 1) // 2
        for b in range(3, 7)
    )
    ok &= trip
    lines.append(f"h reproduces (b, b(b-1), b(b-1)/2) for b=3..6: {'ok' if trip else 'FAIL'}")
    gen = rngmod.stream(seed, 0, 1, rngmod.ESTIMATOR)
    worst = 0.0
    for g, p, b in random_group_cases(mc_cases, seed):
        exact = expected_group_count(g, p, b)
        mean, se = monte_carlo_group_count(g, p, b, mc_samples, gen)
        if se > 0:
            z = abs(mean - exact) / se
        else:  # a single type: the count is deterministic
            z = 0.0 if math.isclose(mean, exact, rel_tol=1e-12) else math.inf
        worst = max(worst, z)
        ok &= z <= 3
    lines.append(f"q matches Monte Carlo on {mc_cases} cases ({mc_samples} batches): worst |z| = {worst:.2f}")
    return SuiteResult("combinatorics", ok, lines)


# -- upper bound -----------------------------------------------------------


def upper_bound_gap(inst: Instance) -> tuple[float, float]:
    """(LP optimum, exact expected offline optimum)."""
    sol = solve_lp(build_lp(inst))
    return sol.objective, expected_offline_optimal(inst)


def suite_upper_bound(instances: int = 20, seed: int = 0, tol: float = 1e-6) -> SuiteResult:
    params = TinyParams()
    worst = math.inf
    fails = []
    for k in range(instances):
        inst = generate_tiny(params, seed, k)
        lp, off = upper_bound_gap(inst)
        worst = min(worst, lp - off)
        if lp < off - tol:
            fails.append((k, lp, off))
    lines = [f"{instances} tiny instances, min(LP - E[OPT]) = {worst:.3g}"]
    lines += [f"instance {k}: LP {lp:.9g} < E[OPT] {off:.9g}" for k, lp, off in fails]
    return SuiteResult("upper-bound", not fails, lines)


# -- match rate and table bounds --------------------------------------------


def match_rate_instance(kappa: int) -> Instance:
    """Fixed tiny instance used by the match-rate and table-bound checks."""
    if kappa == 1:
        probs = [[0.6, 0.4], [0.5, 0.5], [0.3, 0.7]]
        b = [2, 2, 2]
    elif kappa == 2:
        probs = [[0.6, 0.4], [0.5, 0.5], [0.3, 0.7]]
        b = [3, 3, 3]
    else:
        raise ValueError("fixed instances exist for kappa 1 and 2")
    cat = GroupCatalog.full(2, kappa)
    U, G, T = 2, len(cat), 3
    gen = rngmod.stream(20240, kappa, 0, rngmod.GENERATOR)
    w = np.round(gen.uniform(1.0, 3.0, size=(U, G, T)), 2)
    occ = gen.integers(1, 3, size=(U, G, T))
    return make_instance(kappa=kappa, batch_sizes=b, probs=probs, weights=w, occupancy=occ, catalog=cat,
                         metadata={"generator": "match-rate", "kappa": kappa})


@dataclass
class MatchRateResult:
    target: np.ndarray  # gamma * x, (U, G, T)
    freq: np.ndarray
    stderr: np.ndarray
    episodes: int
    clamp_rate: float
    tables: AdaptiveTables

    @property
    def z(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.target > 0, (self.freq - self.target) / self.stderr, 0.0)

    @property
    def cells(self) -> int:
        return int((self.target > 0).sum())


def measure_match_rate(
    inst: Instance,
    policy: str,
    gamma: float,
    episodes: int,
    samples: int,
    seed: int = 0,
    mode: str = "auto",
) -> MatchRateResult:
    """Simulate an adaptive policy and count per-round (resource, group) matches."""
    sol = solve_lp(build_lp(inst))
    tables = estimate_tables(inst, sol, gamma, samples, seed, mode)
    pol = AdapBatch(inst, sol, tables.beta, gamma) if policy == "adapbatch" else AdapShare(inst, sol, tables, gamma)
    hits = np.zeros(inst.weights.shape)
    for r in range(episodes):
        res = run_episode(inst, pol, seed, 0, r, check=False)
        for e in res.trace.events:
            hits[e.resource, e.group, e.t] += 1
    target = gamma * sol.values
    freq = hits / episodes
    se = np.sqrt(np.maximum(target * (1 - target), 1e-300) / episodes)
    return MatchRateResult(target, freq, se, episodes, pol.telemetry.clamp_rate, tables)


def table_bound_violations(tables: AdaptiveTables, inst: Instance, gamma: float) -> tuple[int, int, int, int]:
    """Cells below ``1 - gamma`` (beta) and ``(1-gamma)^kappa prod p^n`` (P),
    each allowed three standard errors. Returns (beta_bad, beta_cells, P_bad, P_cells)."""
    b = tables.beta
    ns = b.num_steps
    beta_bad = beta_cells = 0
    for t in range(inst.T):
        v = b.values[t, : ns[t]]
        se = b.stderr[t, : ns[t]]
        beta_cells += v.size
        beta_bad += int((v < 1 - gamma - 3 * se).sum())
    a = tables.avail
    p_bad = p_cells = 0
    lo_factor = (1 - gamma) ** inst.kappa
    for t in range(inst.T):
        for s in range(ns[t]):
            for g in range(inst.num_groups):
                tp = a.type_prob[t, s, g]
                if tp <= 0 or a.counts[t, s, g] == 0:
                    continue
                p_cells += 1
                if a.values[t, s, g] < lo_factor * tp - 3 * a.stderr[t, s, g]:
                    p_bad += 1
    return beta_bad, beta_cells, p_bad, p_cells


def suite_match_rate(episodes: int = 20_000, samples: int = 10_000, seed: int = 0, gamma: float | None = None) -> SuiteResult:
    lines = []
    ok = True
    for kappa, policy in ((1, "adapbatch"), (2, "adapshare")):
        g = gamma if gamma is not None else (0.5 if policy == "adapbatch" else gamma_fixed_point(kappa).gamma)
        inst = match_rate_instance(kappa)
        res = measure_match_rate(inst, policy, g, episodes, samples, seed)
        worst = float(np.abs(res.z).max())
        clamp = res.clamp_rate
        good = worst <= 3 and clamp < 1e-3
        ok &= good
        lines.append(
            f"{policy} (kappa={kappa}, gamma={g:.5f}): {res.cells} cells, worst |z| = {worst:.2f}, "
            f"ClampActivated rate = {clamp:.4%}"
        )
    return SuiteResult("match-rate", ok, lines)


def suite_bounds(samples: int = 10_000, seed: int = 0) -> SuiteResult:
    lines = []
    ok = True
    for kappa in (1, 2):
        inst = match_rate_instance(kappa)
        g = gamma_fixed_point(kappa).gamma
        sol = solve_lp(build_lp(inst))
        tables = estimate_tables(inst, sol, g, samples, seed)
        bb, bc, pb, pc = table_bound_violations(tables, inst, g)
        ok &= bb == 0 and pb == 0
        lines.append(f"kappa={kappa}: beta below 1-gamma in {bb}/{bc} cells, P below bound in {pb}/{pc} cells")
    return SuiteResult("bounds", ok, lines)


SUITES: dict[str, Callable[[], SuiteResult]] = {
    "gamma": suite_gamma,
    "combinatorics": suite_combinatorics,
    "upper-bound": suite_upper_bound,
    "match-rate": suite_match_rate,
    "bounds": suite_bounds,
}


def run_suite(name: str, **kwargs) -> SuiteResult:
    t0 = time.perf_counter()
    res = SUITES[name](**kwargs)
    res.seconds = time.perf_counter() - t0
    return res
