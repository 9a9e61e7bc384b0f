"""LP-guided heuristics and myopic baselines.

The two LP-guided rules are non-adaptive: they read the LP solution
directly, without correcting for availability, and carry no guarantee.
"""

from __future__ import annotations

import itertools

import numpy as np

from ridepool.model import Instance
from ridepool.offline import greedy_matching_ilp
from ridepool.policies.adaptive import _lp_values
from ridepool.policies.base import Assignment, Policy, RoundContext, sample_rule


class _LpGuided(Policy):
    """Visit idle resources in random order; each samples one formable group
    with probability given by ``ratio[u, g, t]`` over the candidates."""

    uses_lp = True
    renormalize = False

    def __init__(self, inst: Instance, lp):
        super().__init__()
        self.inst = inst
        self.x = _lp_values(lp, inst)
        self.ratio = self._ratios(inst, self.x)

    @staticmethod
    def _ratios(inst: Instance, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def run_round(self, ctx: RoundContext) -> list[Assignment]:
        t = ctx.t
        cat = self.inst.catalog
        out = []
        order = ctx.rng.permutation(np.flatnonzero(ctx.idle))
        counts = ctx.counts()
        for u in order:
            u = int(u)
            ok = np.flatnonzero(cat.formable_mask(counts) & (self.x[u, :, t] > 0))
            if ok.size == 0:
                continue
            r = self.ratio[u, ok, t]
            if self.renormalize:
                r = r / r.sum()
            k, _ = sample_rule(r, ctx.rng.random())
            if not self.renormalize:
                self.telemetry.record(float(r.sum()))
            if k < 0:
                continue
            g = int(ok[k])
            out.append(ctx.take(u, g, ctx.labels_for(g)))
            counts -= cat.membership[g]
        return out


class Opera1(_LpGuided):
    """Ratio ``x[u, g, t] / q[g, t]``; leftover mass means no assignment."""

    name = "opera1"

    @staticmethod
    def _ratios(inst: Instance, x: np.ndarray) -> np.ndarray:
        q = inst.q_groups()
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(q[None] > 0, x / np.where(q > 0, q, 1.0)[None], 0.0)


class Opera2(_LpGuided):
    """Ratio ``x[u, g, t] / sum_u' x[u', g, t]``, renormalized over candidates."""

    name = "opera2"
    renormalize = True

    @staticmethod
    def _ratios(inst: Instance, x: np.ndarray) -> np.ndarray:
        tot = x.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, x / np.where(tot > 0, tot, 1.0), 0.0)


class RandomPolicy(Policy):
    """Shuffle the realized concrete groups; give each one that is still
    formable to a uniformly random idle resource that values it."""

    name = "random"

    def __init__(self, inst: Instance):
        super().__init__()
        self.inst = inst

    def run_round(self, ctx: RoundContext) -> list[Assignment]:
        cat = self.inst.catalog
        W = self.inst.weights[:, :, ctx.t]
        b = len(ctx.batch)
        concrete = []
        for k in range(1, self.inst.kappa + 1):
            for labels in itertools.combinations(range(b), k):
                g = cat.index([ctx.batch[i] for i in labels])
                if g >= 0:
                    concrete.append((labels, g))
        out = []
        for j in ctx.rng.permutation(len(concrete)):
            labels, g = concrete[j]
            if any(ctx.consumed[i] for i in labels):
                continue
            us = np.flatnonzero(ctx.idle & (W[:, g] > 0))
            if us.size == 0:
                continue
            u = int(us[ctx.rng.integers(us.size)])
            out.append(ctx.take(u, g, labels))
        return out


class GreedyPolicy(Policy):
    """Myopic: solve the round's maximum-weight assignment exactly."""

    name = "greedy"

    def __init__(self, inst: Instance):
        super().__init__()
        self.inst = inst

    def run_round(self, ctx: RoundContext) -> list[Assignment]:
        avail = np.flatnonzero(ctx.idle)
        res = greedy_matching_ilp(avail, ctx.counts(), self.inst.weights[:, :, ctx.t], self.inst.catalog)
        if not res.exact:
            self.telemetry.fallbacks += 1
        return [ctx.take(u, g, ctx.labels_for(g)) for u, g in res.pairs]


class EpsGreedy(Policy):
    """Each round, Greedy with probability ``epsilon``, otherwise Opera1.

    The coin comes from its own stream so the two branches see exactly the
    randomness they would see when run alone.
    """

    name = "eps-greedy"
    uses_lp = True

    def __init__(self, inst: Instance, lp, epsilon: float):
        super().__init__()
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        self.epsilon = float(epsilon)
        self.greedy = GreedyPolicy(inst)
        self.opera = Opera1(inst, lp)
        self.telemetry = self.opera.telemetry

    def run_round(self, ctx: RoundContext) -> list[Assignment]:
        if ctx.coin is None:
            raise ValueError("eps-greedy needs a coin stream")
        if ctx.coin.random() < self.epsilon:
            out = self.greedy.run_round(ctx)
            self.telemetry.fallbacks = self.greedy.telemetry.fallbacks
            return out
        return self.opera.run_round(ctx)
