"""Exact offline optima: per-realization search, its expectation, and the
per-round assignment problem solved by the Greedy baseline."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ridepool.grouping import GroupCatalog
from ridepool.model import Instance

NODE_LIMIT = 10**6
SEQUENCE_LIMIT = 10**5


class SizeLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Realization:
    """Realized arrivals (per-round type lists) and optionally realized
    occupancy durations ``(U, G, T)``; constants of the instance otherwise."""

    arrivals: tuple[tuple[int, ...], ...]
    occupancy: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def of(cls, arrivals: Sequence[Sequence[int]], occupancy: np.ndarray | None = None) -> "Realization":
        return cls(tuple(tuple(int(v) for v in r) for r in arrivals), occupancy)

    def counts(self, num_types: int) -> np.ndarray:
        out = np.zeros((len(self.arrivals), num_types), dtype=np.int64)
        for t, row in enumerate(self.arrivals):
            for v in row:
                out[t, v] += 1
        return out


def _durations(inst: Instance, real: Realization) -> np.ndarray:
    if real.occupancy is not None:
        occ = np.asarray(real.occupancy, dtype=np.int64)
        if occ.shape != inst.occupancy.shape:
            raise ValueError("realized occupancy has the wrong shape")
        return occ
    if not inst.occupancy.is_constant:
        raise ValueError("random occupancy needs a realized occupancy array")
    return inst.occupancy.constants


def offline_optimal_fixed(
    inst: Instance, real: Realization, node_limit: int = NODE_LIMIT
) -> tuple[float, list[tuple[int, int, int]]]:
    """Best total weight with hindsight, by depth-first branch and bound.

    Decision points are (round, resource) pairs in order. Each point either
    assigns an idle resource one group formable from the round's remaining
    vertices or leaves it idle. The bound adds, for every remaining point,
    the best weight over groups formable from that round's full batch.
    Returns the value and the assignment as ``(t, u, g)`` triples.
    """
    T, U = inst.T, inst.num_resources
    if len(real.arrivals) != T:
        raise ValueError(f"realization has {len(real.arrivals)} rounds, instance has {T}")
    cat = inst.catalog
    N = cat.membership
    counts = real.counts(inst.num_types)
    occ = _durations(inst, real)
    W = inst.weights

    # per (t, u): candidate groups by decreasing weight, and the best weight
    cands: list[list[list[int]]] = []
    best = np.zeros(T * U)
    for t in range(T):
        ok = cat.formable_mask(counts[t])
        per_u = []
        for u in range(U):
            gs = [g for g in np.flatnonzero(ok) if W[u, g, t] > 0]
            gs.sort(key=lambda g: (-W[u, g, t], g))
            per_u.append(gs)
            if gs:
                best[t * U + u] = W[u, gs[0], t]
        cands.append(per_u)
    suffix = np.concatenate([np.cumsum(best[::-1])[::-1], [0.0]])

    busy_until = np.zeros(U, dtype=np.int64)
    remaining = counts.copy()
    chosen: list[tuple[int, int, int]] = []
    best_val = 0.0
    best_plan: list[tuple[int, int, int]] = []
    nodes = 0

    def dfs(k: int, value: float) -> None:
        nonlocal best_val, best_plan, nodes
        nodes += 1
        if nodes > node_limit:
            raise SizeLimitExceeded(f"offline search exceeded {node_limit} nodes")
        if value > best_val + 1e-12:
            best_val = value
            best_plan = list(chosen)
        if k == T * U or value + suffix[k] <= best_val + 1e-12:
            return
        t, u = divmod(k, U)
        if busy_until[u] <= t:
            for g in cands[t][u]:
                need = N[g]
                if np.any(remaining[t] < need):
                    continue
                remaining[t] -= need
                saved = busy_until[u]
                busy_until[u] = t + occ[u, g, t]
                chosen.append((t, u, int(g)))
                dfs(k + 1, value + W[u, g, t])
                chosen.pop()
                busy_until[u] = saved
                remaining[t] += need
        dfs(k + 1, value)

    dfs(0, 0.0)
    return float(best_val), best_plan


def _compositions(b: int, V: int):
    """All count vectors of ``b`` arrivals over ``V`` types."""
    for combo in itertools.combinations_with_replacement(range(V), b):
        counts = [0] * V
        for v in combo:
            counts[v] += 1
        yield tuple(counts)


def _multinomial_prob(counts: Sequence[int], p: np.ndarray) -> float:
    n = sum(counts)
    coef = math.factorial(n)
    prob = 1.0
    for c, pv in zip(counts, p):
        coef //= math.factorial(c)
        if c:
            prob *= float(pv) ** c
    return coef * prob


def count_sequences(inst: Instance) -> int:
    return math.prod(math.comb(int(b) + inst.num_types - 1, inst.num_types - 1) for b in inst.batch_sizes)


def expected_offline_optimal(
    inst: Instance, limit: int = SEQUENCE_LIMIT, node_limit: int = NODE_LIMIT
) -> float:
    """Exact expectation of the offline optimum over all arrival outcomes.

    Outcomes are enumerated per round as type-count vectors weighted by
    their multinomial probability (the optimum depends only on counts).
    Needs constant occupancy.
    """
    if not inst.occupancy.is_constant:
        raise ValueError("expected offline optimum needs constant occupancy")
    n = count_sequences(inst)
    if n > limit:
        raise SizeLimitExceeded(f"{n} arrival outcomes exceed the limit of {limit}")
    per_round = []
    for t, b in enumerate(inst.batch_sizes):
        opts = []
        for c in _compositions(int(b), inst.num_types):
            pr = _multinomial_prob(c, inst.probs[t])
            if pr > 0:
                opts.append((c, pr))
        per_round.append(opts)
    total = 0.0
    for combo in itertools.product(*per_round):
        pr = math.prod(p for _, p in combo)
        arrivals = [[v for v, k in enumerate(c) for _ in range(k)] for c, _ in combo]
        val, _ = offline_optimal_fixed(inst, Realization.of(arrivals), node_limit)
        total += pr * val
    return total


# -- per-round assignment (Greedy) ----------------------------------------


@dataclass
class RoundMatching:
    pairs: list[tuple[int, int]]  # (resource, group)
    value: float
    exact: bool = True


def _packings(cat: GroupCatalog, counts: tuple[int, ...], limit: int) -> list[tuple[int, ...]]:
    """Maximal multisets of groups that fit in the vertex ``counts``."""
    cache = cat.__dict__.setdefault("_packing_cache", {})
    hit = cache.get(counts)
    if hit is not None:
        return hit
    N = cat.membership
    G = len(cat)
    out: set[tuple[int, ...]] = set()
    steps = 0
    rem = np.array(counts, dtype=np.int64)
    stack: list[int] = []

    def rec(start: int) -> None:
        nonlocal steps
        steps += 1
        if steps > limit:
            raise SizeLimitExceeded(f"more than {limit} packings")
        for g in range(start, G):
            if np.all(N[g] <= rem):
                rem[:] -= N[g]
                stack.append(g)
                rec(g)
                stack.pop()
                rem[:] += N[g]
        if not np.any(np.all(N <= rem, axis=1)):  # nothing more fits
            out.add(tuple(stack))

    rec(0)
    res = sorted(out)
    if len(cache) > 200_000:
        cache.clear()
    cache[counts] = res
    return res


def greedy_matching_ilp(
    available: Sequence[int],
    counts: Sequence[int],
    weights: np.ndarray,
    catalog: GroupCatalog,
    mode: str = "auto",
    limit: int = NODE_LIMIT,
) -> RoundMatching:
    """Maximum-weight assignment of idle resources to disjoint groups for one round.

    ``weights`` is ``(U, G)`` for the current round. Each maximal packing of
    the realized vertices into groups is scored by an optimal resource to
    group assignment; the best packing wins. In ``auto`` mode an oversized
    search falls back to a best-first heuristic and reports ``exact=False``;
    in ``exact`` mode it raises :class:`SizeLimitExceeded`.
    """
    avail = list(available)
    counts = tuple(int(c) for c in counts)
    if not avail or sum(counts) == 0:
        return RoundMatching([], 0.0)
    Wa = np.asarray(weights, dtype=float)[avail]
    if len(avail) == 1:
        ok = np.flatnonzero(catalog.formable_mask(np.array(counts)))
        if ok.size == 0:
            return RoundMatching([], 0.0)
        g = int(ok[np.argmax(Wa[0, ok])])
        if Wa[0, g] <= 0:
            return RoundMatching([], 0.0)
        return RoundMatching([(avail[0], g)], float(Wa[0, g]))
    try:
        packs = _packings(catalog, counts, limit)
    except SizeLimitExceeded:
        if mode == "exact":
            raise
        return _best_first(avail, counts, Wa, catalog)
    best = RoundMatching([], 0.0)
    for pack in packs:
        if not pack:
            continue
        M = Wa[:, list(pack)]
        r, c = linear_sum_assignment(M, maximize=True)
        val = float(M[r, c].sum())
        if val > best.value + 1e-12:
            pairs = [(avail[i], int(pack[j])) for i, j in zip(r, c) if M[i, j] > 0]
            best = RoundMatching(sorted(pairs), val)
    return best


def _best_first(avail: list[int], counts: tuple[int, ...], Wa: np.ndarray, cat: GroupCatalog) -> RoundMatching:
    rem = np.array(counts, dtype=np.int64)
    free = set(range(len(avail)))
    pairs, value = [], 0.0
    while free:
        ok = np.flatnonzero(cat.formable_mask(rem))
        if ok.size == 0:
            break
        rows = sorted(free)
        sub = Wa[np.ix_(rows, ok)]
        i, j = np.unravel_index(int(np.argmax(sub)), sub.shape)
        if sub[i, j] <= 0:
            break
        g = int(ok[j])
        pairs.append((avail[rows[i]], g))
        value += float(sub[i, j])
        rem -= cat.membership[g]
        free.discard(rows[i])
    return RoundMatching(sorted(pairs), value, exact=False)
