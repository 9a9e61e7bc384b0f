from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridepool.data import TinyParams, generate_tiny
from ridepool.grouping import GroupCatalog, formable_count
from ridepool.lp import build_lp, solve_lp
from ridepool.model import make_instance
from ridepool.offline import (
    Realization,
    SizeLimitExceeded,
    expected_offline_optimal,
    greedy_matching_ilp,
    offline_optimal_fixed,
)
from ridepool.policies import GreedyPolicy, RandomPolicy
from ridepool.simulator import sample_arrivals, run_episode
from ridepool import rng as rngmod


def brute_force(inst, arrivals):
    """Exhaustive search over every per-round assignment, written independently
    of the branch and bound: each resource picks a group or nothing."""
    U, G, T = inst.weights.shape
    cat = inst.catalog
    occ = inst.occupancy.constants
    best = 0.0

    def rec(t, busy, val):
        nonlocal best
        if t == T:
            best = max(best, val)
            return
        counts = np.bincount(np.asarray(arrivals[t], dtype=int), minlength=inst.num_types)
        idle = [u for u in range(U) if busy[u] <= t]
        for choice in itertools.product(range(-1, G), repeat=len(idle)):
            used = np.zeros(inst.num_types, dtype=int)
            for g in choice:
                if g >= 0:
                    used += cat.membership[g]
            if np.any(used > counts):
                continue
            nb = list(busy)
            v = val
            for u, g in zip(idle, choice):
                if g >= 0:
                    nb[u] = t + occ[u, g, t]
                    v += inst.weights[u, g, t]
            rec(t + 1, nb, v)

    rec(0, [0] * U, 0.0)
    return best


def pair_instance():
    cat = GroupCatalog.full(1, 2)
    w = np.zeros((1, 2, 1))
    w[0, cat.index((0,)), 0] = 1.0
    w[0, cat.index((0, 0)), 0] = 2.0
    return make_instance(kappa=2, batch_sizes=[2], probs=[[1.0]], weights=w, occupancy=1, catalog=cat, relax_batch_assumption=True)


def test_fixed_examples():
    assert offline_optimal_fixed(pair_instance(), Realization.of([[0, 0]]))[0] == 2.0
    inst = make_instance(kappa=1, batch_sizes=[1, 1], probs=[[1.0], [1.0]], weights=np.ones((1, 1, 2)), occupancy=2)
    val, assign = offline_optimal_fixed(inst, Realization.of([[0], [0]]))
    assert val == 1.0 and len(assign) == 1
    assert offline_optimal_fixed(pair_instance(), Realization.of([[]]))[0] == 0.0


def test_expected_examples():
    inst = pair_instance()
    assert expected_offline_optimal(inst) == offline_optimal_fixed(inst, Realization.of([[0, 0]]))[0]
    w = np.zeros((1, 2, 1))
    w[0, 0, 0] = 2.0
    inst = make_instance(kappa=1, batch_sizes=[1], probs=[[0.5, 0.5]], weights=w, occupancy=1)
    assert expected_offline_optimal(inst) == pytest.approx(1.0)


def test_expected_needs_constant_occupancy_and_small_size():
    inst = generate_tiny(TinyParams(max_types=2, max_batch=2, max_rounds=3), 0)
    with pytest.raises(SizeLimitExceeded):
        expected_offline_optimal(inst, limit=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_branch_and_bound_matches_brute_force(seed):
    inst = generate_tiny(TinyParams(), seed)
    arrivals = sample_arrivals(inst, rngmod.stream(seed, 0, 0, rngmod.ARRIVALS))
    val, assign = offline_optimal_fixed(inst, Realization.of(arrivals))
    assert val == pytest.approx(brute_force(inst, arrivals), abs=1e-9)
    assert sum(inst.weights[u, g, t] for t, u, g in assign) == pytest.approx(val)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_lp_bounds_expected_offline_optimum(seed):
    inst = generate_tiny(TinyParams(), seed)
    assert solve_lp(build_lp(inst)).objective >= expected_offline_optimal(inst) - 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_offline_dominates_policies_per_run(seed):
    inst = generate_tiny(TinyParams(max_resources=2, max_rounds=3), seed)
    for pol in (GreedyPolicy(inst), RandomPolicy(inst)):
        res = run_episode(inst, pol, seed=seed)
        opt, _ = offline_optimal_fixed(inst, Realization.of(res.trace.arrivals))
        assert res.reward <= opt + 1e-9


def test_greedy_examples():
    cat = GroupCatalog.full(2, 2)
    W = np.zeros((2, len(cat)))
    g1, g2 = cat.index((0, 1)), cat.index((0,))
    W[:, g1] = 3.0
    W[:, g2] = 2.0
    # one type-0 vertex and one type-1 vertex: g1 and g2 share the type-0 vertex
    m = greedy_matching_ilp([0, 1], [1, 1], W, cat)
    assert m.value == 3.0 and [g for _, g in m.pairs] == [g1]
    # two type-0 vertices and one type-1: both fit
    m = greedy_matching_ilp([0, 1], [2, 1], W, cat)
    assert m.value == 5.0 and sorted(g for _, g in m.pairs) == sorted([g1, g2])
    assert greedy_matching_ilp([], [2, 1], W, cat).value == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_greedy_is_the_one_round_offline_optimum(seed):
    inst = generate_tiny(TinyParams(max_resources=3, max_types=2, max_rounds=1, max_batch=4), seed)
    arrivals = sample_arrivals(inst, rngmod.stream(seed, 0, 0, rngmod.ARRIVALS))
    counts = np.bincount(arrivals[0], minlength=inst.num_types)
    m = greedy_matching_ilp(range(inst.num_resources), counts, inst.weights[:, :, 0], inst.catalog, mode="exact")
    assert m.value == pytest.approx(offline_optimal_fixed(inst, Realization.of(arrivals))[0])
    used = np.zeros(inst.num_types, dtype=int)
    for _, g in m.pairs:
        used += inst.catalog.membership[g]
    assert np.all(used <= counts)


def test_greedy_fallback_flags_inexact():
    cat = GroupCatalog.full(3, 2)
    W = np.ones((3, len(cat)))
    m = greedy_matching_ilp([0, 1, 2], [3, 3, 3], W, cat, limit=1)
    assert not m.exact and m.value > 0
    with pytest.raises(SizeLimitExceeded):
        greedy_matching_ilp([0, 1, 2], [3, 3, 3], W, cat, mode="exact", limit=1)


def test_formable_count():
    from ridepool.grouping import GroupType

    assert formable_count(GroupType((0, 0, 1)), [3, 2]) == 6
