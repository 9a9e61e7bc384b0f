from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridepool import rng as rngmod
from ridepool.data import TinyParams, generate_tiny
from ridepool.grouping import GroupCatalog
from ridepool.lp import LpSolution, build_lp, solve_lp
from ridepool.model import make_instance
from ridepool.policies import (
    AdapBatch,
    AdapShare,
    EpsGreedy,
    GreedyPolicy,
    Opera1,
    Opera2,
    RandomPolicy,
    RoundContext,
    estimate_tables,
    gamma_fixed_point,
    sample_rule,
)
from ridepool.policies.adaptive import _rates
from ridepool.simulator import run_episode
from ridepool.verify import match_rate_instance, table_bound_violations


def fixed_lp(inst, x):
    x = np.asarray(x, dtype=float)
    return LpSolution(x.ravel(), float((inst.weights * x).sum()), "optimal", 0, "fixed", x.shape)


# -- gamma -----------------------------------------------------------------


def newton_root(kappa):
    g = 0.3
    for _ in range(100):
        f = g - (1 - g) ** (kappa + 1)
        d = 1 + (kappa + 1) * (1 - g) ** kappa
        g -= f / d
    return g


def test_gamma_values():
    assert gamma_fixed_point(2).gamma == pytest.approx(0.31767, abs=1e-5)
    assert gamma_fixed_point(1).gamma == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-10)
    assert gamma_fixed_point(3).gamma == pytest.approx(0.27551, abs=1e-5)


@pytest.mark.parametrize("kappa", range(1, 11))
def test_gamma_matches_newton_and_solves_the_equation(kappa):
    g = gamma_fixed_point(kappa)
    assert abs(g.residual) <= 1e-10
    assert g.gamma == pytest.approx(newton_root(kappa), abs=1e-11)


def test_gamma_decreasing():
    vals = [gamma_fixed_point(k).gamma for k in range(1, 11)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


# -- the sampling rule -----------------------------------------------------


def test_sample_rule_basics():
    assert sample_rule(np.zeros(3), 0.0) == (-1, False)
    assert sample_rule(np.array([0.2, 0.3]), 0.1) == (0, False)
    assert sample_rule(np.array([0.2, 0.3]), 0.4) == (1, False)
    assert sample_rule(np.array([0.2, 0.3]), 0.6) == (-1, False)
    k, clamped = sample_rule(np.array([1.0, 1.0]), 0.75)
    assert k == 1 and clamped
    # a full distribution whose float sum lands one ulp short of 1 still picks
    short = np.array([0.5, np.nextafter(0.5, 0.0)])
    assert sample_rule(short, float(short.sum()))[0] == 1


def test_batch_rule_hand_value():
    # gamma 0.5, x 0.4, q = b p = 1, beta 0.8
    r = _rates(np.array([0.4]), 0.5, np.array([1.0 * 0.8]))
    assert r[0] == pytest.approx(0.25)
    u = np.random.default_rng(0).random(1_000_000)
    hits = np.array([sample_rule(r, x)[0] == 0 for x in u[:200_000]])
    se = math.sqrt(0.25 * 0.75 / hits.size)
    assert abs(hits.mean() - 0.25) <= 3 * se


def test_zero_lp_never_assigns():
    inst = generate_tiny(TinyParams(max_kappa=1), 1)
    x = np.zeros(inst.weights.shape)
    tables = estimate_tables(inst, fixed_lp(inst, x), 0.5, 200)
    assert np.all(tables.beta.values[~np.isnan(tables.beta.values)] == 1.0)
    for pol in (AdapBatch(inst, fixed_lp(inst, x), tables.beta, 0.5), Opera1(inst, fixed_lp(inst, x)), Opera2(inst, fixed_lp(inst, x))):
        for r in range(20):
            assert run_episode(inst, pol, 0, 0, r).trace.events == []


# -- estimator tables -------------------------------------------------------


@pytest.mark.parametrize("kappa", [1, 2])
def test_first_step_tables_are_exact(kappa):
    inst = match_rate_instance(kappa)
    lp = solve_lp(build_lp(inst))
    tab = estimate_tables(inst, lp, gamma_fixed_point(kappa).gamma, 2000)
    assert np.all(tab.beta.values[0, 0] == 1.0)
    p = inst.probs[0]
    for gi, g in enumerate(inst.catalog):
        # the first step looks at label 0 alone: only singletons can appear
        expected = p[g.members[0]] if g.size == 1 else 0.0
        assert tab.avail.values[0, 0, gi] == expected


def test_group_probability_zero_when_member_never_arrives():
    cat = GroupCatalog.full(2, 2)
    inst = make_instance(kappa=2, batch_sizes=[3, 3], probs=[[1.0, 0.0], [0.5, 0.5]],
                         weights=np.ones((1, len(cat), 2)), occupancy=1, catalog=cat)
    lp = solve_lp(build_lp(inst))
    tab = estimate_tables(inst, lp, gamma_fixed_point(2).gamma, 500)
    for gi, g in enumerate(cat):
        if 1 in g.members:
            assert np.all(tab.avail.values[0, :, gi] == 0.0)


@pytest.mark.parametrize("kappa", [1, 2])
def test_table_bounds_hold(kappa):
    inst = match_rate_instance(kappa)
    g = gamma_fixed_point(kappa).gamma
    tab = estimate_tables(inst, solve_lp(build_lp(inst)), g, 5000)
    bb, bc, pb, pc = table_bound_violations(tab, inst, g)
    assert bc > 0 and pc > 0
    assert bb == 0 and pb == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_beta_non_increasing_along_steps(seed):
    inst = generate_tiny(TinyParams(max_resources=2, max_batch=3), seed)
    lp = solve_lp(build_lp(inst))
    tab = estimate_tables(inst, lp, gamma_fixed_point(inst.kappa).gamma, 300, seed, mode="marginal")
    for t in range(inst.T):
        v = tab.beta.values[t, : tab.beta.num_steps[t]]
        assert np.all(np.diff(v, axis=0) <= 1e-12)
        assert np.all((v >= 0) & (v <= 1))


def test_estimator_is_reproducible():
    inst = match_rate_instance(2)
    lp = solve_lp(build_lp(inst))
    a = estimate_tables(inst, lp, 0.3, 500, seed=3)
    b = estimate_tables(inst, lp, 0.3, 500, seed=3)
    assert np.array_equal(a.beta.joint, b.beta.joint, equal_nan=True)
    assert np.array_equal(a.avail.values, b.avail.values)


# -- adaptive share --------------------------------------------------------


def test_share_rule_at_first_step_equals_gamma():
    """beta = P-fraction = 1 at the first step, x = h * prod p: the rule is gamma."""
    inst = match_rate_instance(2)
    g = gamma_fixed_point(2).gamma
    h = inst.h_groups()
    tab = estimate_tables(inst, solve_lp(build_lp(inst)), g, 100)
    gi = inst.catalog.singleton(0)
    x = h[gi, 0] * tab.avail.type_prob[0, 0, gi]
    denom = h[gi, 0] * tab.avail.values[0, 0, gi] * tab.beta.values[0, 0, 0]
    assert _rates(np.array([x]), g, np.array([denom]))[0] == pytest.approx(g)


def test_share_skips_groups_with_consumed_members():
    inst = match_rate_instance(2)
    lp = solve_lp(build_lp(inst))
    tab = estimate_tables(inst, lp, 0.3, 200)
    pol = AdapShare(inst, lp, tab)
    for r in range(200):
        res = run_episode(inst, pol, 5, 0, r)  # legality checked every round
        for t in range(inst.T):
            labs = [l for e in res.trace.events if e.t == t for l in e.labels]
            assert len(labs) == len(set(labs))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_unit_capacity_share_equals_batch(seed):
    inst = generate_tiny(TinyParams(max_kappa=1, max_batch=3), seed)
    lp = solve_lp(build_lp(inst))
    tab = estimate_tables(inst, lp, 0.5, 300, seed, mode="marginal")
    share = AdapShare(inst, lp, tab, 0.5)
    batch = AdapBatch(inst, lp, tab.beta, 0.5)
    for r in range(5):
        a = run_episode(inst, share, seed, 0, r).trace
        b = run_episode(inst, batch, seed, 0, r).trace
        assert a.events == b.events


# -- heuristics ------------------------------------------------------------


def single_candidate_instance():
    cat = GroupCatalog.full(1, 1)
    return make_instance(kappa=1, batch_sizes=[1], probs=[[1.0]], weights=np.ones((1, 1, 1)), occupancy=1, catalog=cat)


def test_opera1_assigns_surely_when_x_equals_q():
    inst = single_candidate_instance()
    pol = Opera1(inst, fixed_lp(inst, np.ones((1, 1, 1))))
    assert all(len(run_episode(inst, pol, 0, 0, r).trace.events) == 1 for r in range(50))


def test_equal_ratios_split_evenly():
    cat = GroupCatalog.full(2, 1)
    inst = make_instance(kappa=1, batch_sizes=[2], probs=[[0.5, 0.5]], weights=np.ones((1, 2, 1)), occupancy=1, catalog=cat)
    x = np.full((1, 2, 1), 0.5)
    pol = Opera2(inst, fixed_lp(inst, x))
    n = 100_000
    gen = rngmod.stream(0, 0, 0, rngmod.POLICY)
    picks = np.zeros(2)
    for _ in range(n):
        ctx = RoundContext(inst, 0, (0, 1), np.array([True]), gen)
        (a,) = pol.run_round(ctx)
        picks[a.group] += 1
    se = math.sqrt(0.25 / n)
    assert abs(picks[0] / n - 0.5) <= 3 * se


def test_random_single_candidate_always_assigns():
    inst = single_candidate_instance()
    pol = RandomPolicy(inst)
    assert all(len(run_episode(inst, pol, 1, 0, r).trace.events) == 1 for r in range(50))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_eps_greedy_extremes(seed):
    inst = generate_tiny(TinyParams(), seed)
    lp = solve_lp(build_lp(inst))
    for r in range(3):
        g = run_episode(inst, GreedyPolicy(inst), seed, 0, r).trace.events
        e1 = run_episode(inst, EpsGreedy(inst, lp, 1.0), seed, 0, r).trace.events
        o = run_episode(inst, Opera1(inst, lp), seed, 0, r).trace.events
        e0 = run_episode(inst, EpsGreedy(inst, lp, 0.0), seed, 0, r).trace.events
        assert g == e1 and o == e0


def test_eps_range_checked():
    inst = single_candidate_instance()
    with pytest.raises(ValueError):
        EpsGreedy(inst, fixed_lp(inst, np.ones((1, 1, 1))), 1.5)


def test_mis_specified_gamma_triggers_clamps():
    from ridepool.verify import measure_match_rate

    res = measure_match_rate(match_rate_instance(2), "adapshare", 0.5, 2000, 2000)
    assert res.clamp_rate > 0
