"""Adaptive LP-guided policies and the Monte Carlo tables they rely on.

Both policies attenuate the LP's assignment probabilities by ``gamma`` and
divide by the estimated chance that the resource (``beta``) and the group
(``P``) are still available at the current step, so that every (resource,
group) pair ends up matched with probability ``gamma * x`` per round.

The tables are estimated by running a population of simulated episodes in
lockstep: at every (round, step) the population's current state yields the
estimates, and the population then acts on them. Later rounds therefore see
the behaviour induced by the earlier estimates (forward bootstrapping).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ridepool import rng as rngmod
from ridepool.grouping import canonical_visit, lattice_steps, step_type_probability
from ridepool.model import Instance
from ridepool.policies.base import Assignment, InconsistentState, Policy, RoundContext, Telemetry, sample_rule

MODES = ("marginal", "joint")


def _lp_values(x, inst: Instance) -> np.ndarray:
    x = getattr(x, "values", x)
    x = np.asarray(x, dtype=float)
    if x.shape != inst.weights.shape:
        raise ValueError(f"LP values have shape {x.shape}, expected {inst.weights.shape}")
    return x


def resolve_mode(mode: str, kappa: int) -> str:
    """``auto`` means marginal for unit capacity and joint otherwise."""
    if mode == "auto":
        return "marginal" if kappa == 1 else "joint"
    if mode not in MODES:
        raise ValueError(f"unknown availability mode {mode!r}")
    return mode


@dataclass
class BetaTable:
    """``values[t, s, u]``: probability resource ``u`` is idle at step ``s`` of round ``t``.

    ``joint[t, s, g, u]`` (joint mode only) is the same probability
    conditioned on a group of type ``g`` being available at that step.
    """

    values: np.ndarray
    stderr: np.ndarray
    samples: int
    joint: np.ndarray | None = None
    joint_stderr: np.ndarray | None = None
    joint_counts: np.ndarray | None = None
    num_steps: np.ndarray | None = None  # active steps per round

    def at(self, t: int, s: int, u) -> np.ndarray:
        return self.values[t, s, u]


@dataclass
class GroupAvailTable:
    """``values[t, s, g]``: probability the step offers an available group of type ``g``.

    It factors as the exact probability that the step's labels carry ``g``
    (``type_prob``) times the estimated fraction of those still unconsumed.
    ``counts`` is the number of sampled episodes that carried ``g``.
    """

    values: np.ndarray
    stderr: np.ndarray
    type_prob: np.ndarray
    counts: np.ndarray
    samples: int


@dataclass
class AdaptiveTables:
    beta: BetaTable
    avail: GroupAvailTable
    gamma: float
    mode: str
    samples: int
    seed: int
    telemetry: Telemetry = field(default_factory=Telemetry)


def step_tables(inst: Instance) -> tuple[list[tuple[tuple[int, ...], ...]], np.ndarray]:
    """Active lattice steps per round and exact type probabilities ``[t, s, g]``."""
    cat = inst.catalog
    steps = [lattice_steps(int(b), inst.kappa) for b in inst.batch_sizes]
    S = max(len(s) for s in steps)
    tp = np.zeros((inst.T, S, len(cat)))
    by_size: dict[int, list[int]] = {}
    for gi, g in enumerate(cat):
        by_size.setdefault(g.size, []).append(gi)
    for t, st in enumerate(steps):
        p = inst.probs[t]
        for s, L in enumerate(st):
            for gi in by_size.get(len(L), []):
                tp[t, s, gi] = step_type_probability(cat[gi], L, p)
    return steps, tp


def estimate_tables(
    inst: Instance,
    lp,
    gamma: float,
    samples: int = 10_000,
    seed: int = 0,
    mode: str = "auto",
    instance: int = 0,
) -> AdaptiveTables:
    """Estimate ``beta`` and ``P`` for the adaptive share policy by lockstep simulation."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    mode = resolve_mode(mode, inst.kappa)
    x = _lp_values(lp, inst)
    gamma = float(gamma)
    gen = rngmod.stream(seed, instance, 0, rngmod.ESTIMATOR)
    cat = inst.catalog
    U, G, T, V = inst.num_resources, len(cat), inst.T, inst.num_types
    h = inst.h_groups()
    steps, tp = step_tables(inst)
    S = tp.shape[1]
    N = samples

    beta = np.full((T, S, U), np.nan)
    beta_se = np.full((T, S, U), np.nan)
    P = np.zeros((T, S, G))
    P_se = np.zeros((T, S, G))
    counts = np.zeros((T, S, G), dtype=np.int64)
    joint = joint_se = joint_n = None
    if mode == "joint":
        joint = np.full((T, S, G, U), np.nan)
        joint_se = np.full((T, S, G, U), np.nan)
        joint_n = np.zeros((T, S, G), dtype=np.int64)
    tele = Telemetry()
    busy_until = np.zeros((N, U), dtype=np.int64)
    occ = inst.occupancy
    lookups = {k: cat.member_lookup(k) for k in range(1, inst.kappa + 1)}

    for t in range(T):
        b = int(inst.batch_sizes[t])
        cdf = np.cumsum(inst.probs[t])
        cdf[-1] = 1.0
        types = np.searchsorted(cdf, gen.random((N, b)), side="right").astype(np.int64)
        types = np.minimum(types, V - 1)
        consumed = np.zeros((N, b), dtype=bool)
        idle = busy_until <= t
        for s, L in enumerate(steps[t]):
            k = len(L)
            tl = types[:, list(L)]
            canon = np.ones(N, dtype=bool)
            for a in range(k - 1):
                lt = tl[:, a] < tl[:, a + 1]
                if L[a] < L[a + 1]:
                    lt |= tl[:, a] == tl[:, a + 1]
                canon &= lt
            free = ~consumed[:, list(L)].any(axis=1)
            code = np.zeros(N, dtype=np.int64)
            for a in range(k):
                code = code * V + np.sort(tl, axis=1)[:, a]
            g_of = lookups[k][code]
            g_of = np.where(canon, g_of, -1)
            ok = free & (g_of >= 0)

            bm = idle.mean(axis=0)
            beta[t, s] = bm
            beta_se[t, s] = np.sqrt(bm * (1 - bm) / N)
            n_c = np.bincount(g_of[g_of >= 0], minlength=G)
            n_ok = np.bincount(g_of[ok], minlength=G)
            counts[t, s] = n_c
            with np.errstate(invalid="ignore", divide="ignore"):
                frac = np.where(n_c > 0, n_ok / np.maximum(n_c, 1), 1.0)
            P[t, s] = tp[t, s] * frac
            P_se[t, s] = np.where(n_c > 0, tp[t, s] * np.sqrt(frac * (1 - frac) / np.maximum(n_c, 1)), np.nan)
            if mode == "joint":
                joint_n[t, s] = n_ok
                gsel = g_of[ok]
                for u in range(U):
                    hits = np.bincount(gsel, weights=idle[ok, u].astype(float), minlength=G)
                    with np.errstate(invalid="ignore", divide="ignore"):
                        jb = np.where(n_ok > 0, hits / np.maximum(n_ok, 1), bm[u])
                    joint[t, s, :, u] = jb
                    joint_se[t, s, :, u] = np.where(n_ok > 0, np.sqrt(jb * (1 - jb) / np.maximum(n_ok, 1)), np.nan)

            idx = np.flatnonzero(ok)
            if idx.size == 0:
                continue
            gs = g_of[idx]
            xg = x[:, gs, t].T  # (n, U)
            live = idle[idx] & (xg > 0)
            has = live.any(axis=1)
            idx, gs, xg, live = idx[has], gs[has], xg[has], live[has]
            if idx.size == 0:
                continue
            bt = joint[t, s][gs] if mode == "joint" else np.broadcast_to(beta[t, s], xg.shape)
            denom = (h[gs, t] * P[t, s, gs])[:, None] * bt
            with np.errstate(invalid="ignore", divide="ignore"):
                rates = np.where(live, np.where(denom > 0, xg * gamma / np.where(denom > 0, denom, 1.0), 1.0), 0.0)
            total = rates.sum(axis=1)
            tele.samples += idx.size
            tele.clamps += int((total > 1.0).sum())
            tele.max_rule = max(tele.max_rule, float(total.max()))
            over = total > 1.0
            rates[over] /= total[over, None]
            cum = np.cumsum(rates, axis=1)
            uni = gen.random(idx.size)
            pick = cum > uni[:, None]
            hit = pick.any(axis=1)
            chosen_u = np.argmax(pick, axis=1)
            idx, gs, chosen_u = idx[hit], gs[hit], chosen_u[hit]
            if idx.size == 0:
                continue
            idle[idx, chosen_u] = False
            for lab in L:
                consumed[idx, lab] = True
            if occ.is_constant:
                dur = occ.constants[chosen_u, gs, t]
            else:
                dur = np.array([occ.draw(int(u), int(g), t, gen) for u, g in zip(chosen_u, gs)])
            busy_until[idx, chosen_u] = t + dur

    num_steps = np.array([len(s) for s in steps])
    beta_t = BetaTable(beta, beta_se, N, joint, joint_se, joint_n, num_steps)
    avail = GroupAvailTable(P, P_se, tp, counts, N)
    return AdaptiveTables(beta_t, avail, gamma, mode, N, seed, tele)


def estimate_beta(inst: Instance, lp, gamma: float, samples: int = 10_000, seed: int = 0, mode: str = "auto") -> BetaTable:
    return estimate_tables(inst, lp, gamma, samples, seed, mode).beta


def estimate_group_avail(
    inst: Instance, lp, gamma: float, samples: int = 10_000, seed: int = 0, mode: str = "auto"
) -> GroupAvailTable:
    return estimate_tables(inst, lp, gamma, samples, seed, mode).avail


def _rates(xs: np.ndarray, gamma: float, denom: np.ndarray) -> np.ndarray:
    out = np.empty_like(xs)
    for k in range(xs.size):
        out[k] = xs[k] * gamma / denom[k] if denom[k] > 0 else 1.0
    return out


class AdapShare(Policy):
    """Adaptive policy over the step lattice of each round (any capacity).

    A step looks at the group formed by its labels; the group is processed
    only at its canonical visit and only if none of its vertices is consumed.
    Each idle resource ``u`` is then tried with probability
    ``x[u, g, t] * gamma / (h[g, t] * P[t, s, g] * beta[u])``.
    """

    name = "adapshare"
    uses_lp = True

    def __init__(self, inst: Instance, lp, tables: AdaptiveTables, gamma: float | None = None):
        super().__init__()
        self.inst = inst
        self.x = _lp_values(lp, inst)
        self.tables = tables
        self.gamma = float(tables.gamma if gamma is None else gamma)
        self.h = inst.h_groups()
        self.steps = [lattice_steps(int(b), inst.kappa) for b in inst.batch_sizes]

    def run_round(self, ctx: RoundContext) -> list[Assignment]:
        t = ctx.t
        inst = self.inst
        b = len(ctx.batch)
        if b != inst.batch_sizes[t]:
            raise InconsistentState(f"batch of {b} at t={t}, tables built for {inst.batch_sizes[t]}")
        beta = self.tables.beta
        P = self.tables.avail.values
        joint = self.tables.mode == "joint"
        out = []
        for s, L in enumerate(self.steps[t]):
            if len(L) > 1 and not canonical_visit(L, ctx.batch):
                continue
            if any(ctx.consumed[i] for i in L):
                continue
            g = inst.catalog.index([ctx.batch[i] for i in L])
            if g < 0:
                continue
            us = np.flatnonzero(ctx.idle & (self.x[:, g, t] > 0))
            if us.size == 0:
                continue
            bt = beta.joint[t, s, g, us] if joint else beta.values[t, s, us]
            denom = (self.h[g, t] * P[t, s, g]) * bt
            rates = _rates(self.x[us, g, t], self.gamma, denom)
            k, _ = sample_rule(rates, ctx.rng.random())
            self.telemetry.record(float(rates.sum()))
            if k >= 0:
                out.append(ctx.take(int(us[k]), g, L, s))
        return out


class AdapBatch(Policy):
    """Adaptive policy for unit capacity: vertices are processed in label order
    and resource ``u`` is tried with probability ``x[u, v, t] * gamma / (q[v, t] * beta[u])``."""

    name = "adapbatch"
    uses_lp = True

    def __init__(self, inst: Instance, lp, beta: BetaTable, gamma: float = 0.5):
        super().__init__()
        if inst.kappa != 1:
            raise ValueError("AdapBatch is for unit capacity")
        self.inst = inst
        self.x = _lp_values(lp, inst)
        self.beta = beta
        self.gamma = float(gamma)
        self.q = inst.q_vertices()

    def run_round(self, ctx: RoundContext) -> list[Assignment]:
        t = ctx.t
        out = []
        for i, v in enumerate(ctx.batch):
            if ctx.consumed[i]:
                raise InconsistentState(f"vertex {i} consumed before its step")
            g = self.inst.catalog.singleton(v)
            us = np.flatnonzero(ctx.idle & (self.x[:, g, t] > 0))
            if us.size == 0:
                continue
            denom = self.q[v, t] * self.beta.values[t, i, us]
            rates = _rates(self.x[us, g, t], self.gamma, denom)
            k, _ = sample_rule(rates, ctx.rng.random())
            self.telemetry.record(float(rates.sum()))
            if k >= 0:
                out.append(ctx.take(int(us[k]), g, (i,), i))
        return out
