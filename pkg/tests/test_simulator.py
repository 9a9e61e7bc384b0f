from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridepool import rng as rngmod
from ridepool.data import TinyParams, generate_tiny
from ridepool.lp import build_lp, solve_lp
from ridepool.policies import Assignment, GreedyPolicy, Opera2, Policy, RandomPolicy, gamma_fixed_point
from ridepool.simulator import (
    ExperimentConfig,
    InvariantViolation,
    PolicySpec,
    Trace,
    replay,
    run_episode,
    run_experiment,
    sample_batch,
)
from ridepool.verify import match_rate_instance

from conftest import small_instance


def test_degenerate_row_gives_constant_batch():
    gen = rngmod.stream(0)
    assert sample_batch([1.0, 0.0], 3, gen) == (0, 0, 0)


def test_type_frequencies_match_probabilities():
    p = np.array([0.2, 0.5, 0.3])
    gen = rngmod.stream(1)
    counts = np.zeros(3)
    for _ in range(1000):
        counts += np.bincount(sample_batch(p, 1000, gen), minlength=3)
    n = counts.sum()
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) <= 3 * se)


def test_label_orders_uniform():
    gen = rngmod.stream(2)
    orders = {perm: 0 for perm in itertools.permutations(range(3))}
    n = 0
    for _ in range(60_000):
        b = sample_batch([1 / 3] * 3, 3, gen)
        if len(set(b)) == 3:
            orders[b] += 1
            n += 1
    se = math.sqrt((1 / 6) * (5 / 6) / n)
    assert all(abs(c / n - 1 / 6) <= 3 * se for c in orders.values())


def test_zero_weights_zero_reward():
    inst = small_instance(weight=0.0)
    assert run_episode(inst, RandomPolicy(inst)).reward == 0.0
    assert run_episode(inst, GreedyPolicy(inst)).reward == 0.0


def test_occupancy_spanning_horizon_allows_one_assignment():
    inst = small_instance(U=1, T=4, occ=4)
    for pol in (RandomPolicy(inst), GreedyPolicy(inst)):
        for r in range(10):
            assert len(run_episode(inst, pol, 0, 0, r).trace.events) <= 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_replay_and_conservation(seed):
    inst = generate_tiny(TinyParams(max_resources=3, max_batch=3), seed)
    lp = solve_lp(build_lp(inst))
    for pol in (RandomPolicy(inst), GreedyPolicy(inst), Opera2(inst, lp)):
        res = run_episode(inst, pol, seed)
        assert res.reward == sum(e.weight for e in res.trace.events)
        assert replay(inst, res.trace) == res.reward
        again = Trace.from_json(res.trace.to_json())
        assert again == res.trace
        # no resource in two overlapping assignments
        for u in range(inst.num_resources):
            spans = sorted((e.t, e.t + e.duration) for e in res.trace.events if e.resource == u)
            assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))


class _DoubleBooker(Policy):
    name = "bad"

    def run_round(self, ctx):
        return [Assignment(0, 0, (0,)), Assignment(1, 0, (0,))]


def test_illegal_rounds_are_caught():
    inst = small_instance(U=2, V=1, T=2, b=2, probs=np.ones((2, 1)))
    with pytest.raises(InvariantViolation) as exc:
        run_episode(inst, _DoubleBooker())
    assert exc.value.round == 0


def test_replay_rejects_tampered_weight():
    inst = small_instance()
    res = run_episode(inst, GreedyPolicy(inst))
    ev = res.trace.events[0]
    res.trace.events[0] = type(ev)(ev.t, ev.step, ev.resource, ev.group, ev.labels, ev.weight + 1, ev.duration)
    with pytest.raises(InvariantViolation):
        replay(inst, res.trace)


def test_experiment_is_deterministic_and_keeps_partial_results():
    inst = generate_tiny(TinyParams(max_kappa=2, max_batch=2), 4)
    specs = [PolicySpec("random"), PolicySpec("greedy"), PolicySpec("opera1"), PolicySpec("adapbatch")]
    cfg = ExperimentConfig(specs, runs=20, seed=3)
    a = run_experiment(cfg, [inst])
    b = run_experiment(cfg, [inst])
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    rows = {r.policy: r for r in a.rows}
    if inst.kappa != 1:
        assert rows["adapbatch"].error  # unit-capacity policy on a pooled instance
    assert not rows["greedy"].error and rows["greedy"].runs == 20


def test_parallel_workers_match_serial():
    inst = generate_tiny(TinyParams(), 8)
    specs = [PolicySpec("random"), PolicySpec("opera2")]
    serial = run_experiment(ExperimentConfig(specs, runs=12, seed=1, workers=1), [inst])
    par = run_experiment(ExperimentConfig(specs, runs=12, seed=1, workers=2), [inst])
    assert serial.to_csv() == par.to_csv()


def test_empirical_ratio_of_share_policy():
    """Mean reward over the LP bound sits at or above gamma and never above 1."""
    inst = match_rate_instance(2)
    cfg = ExperimentConfig([PolicySpec("adapshare")], runs=20_000, seed=0)
    rep = run_experiment(cfg, [inst])
    row = rep.rows[0]
    se = row.stderr / row.lp_bound
    assert row.cr_lp >= gamma_fixed_point(2).gamma - 3 * se
    assert row.cr_lp <= 1 + 3 * se
    assert row.clamp_rate < 1e-3
