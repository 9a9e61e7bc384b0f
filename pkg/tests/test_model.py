from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridepool.data import TinyParams, generate_tiny
from ridepool.model import Instance, OccupancyDistribution, OccupancyModel, make_instance, validate_instance

from conftest import small_instance


def test_well_formed_instance_passes(two_by_two):
    rep = validate_instance(two_by_two)
    assert rep.ok, str(rep)


def test_probabilities_not_summing_to_one_fail():
    inst = small_instance(probs=[[0.5, 0.4], [0.5, 0.5], [0.5, 0.5]])
    rep = validate_instance(inst)
    assert not rep.ok
    assert any("arrival probabilities do not sum to 1 at t=0" in e for e in rep.errors)


def test_batch_not_exceeding_capacity_fails_unless_relaxed():
    inst = small_instance(kappa=2, b=[3, 2, 3])
    rep = validate_instance(inst)
    assert any("b^t > kappa" in e and "t=1" in e for e in rep.errors)
    assert validate_instance(small_instance(kappa=2, b=[3, 2, 3], relax=True)).ok


def test_negative_weight_and_zero_occupancy_fail():
    inst = small_instance(weight=-1.0)
    assert any("weights" in e for e in validate_instance(inst).errors)
    inst = small_instance(occ=0)
    assert any("occupancy constants" in e for e in validate_instance(inst).errors)


def test_occupancy_distribution_checks():
    bad = OccupancyDistribution((0, 2), (0.5, 0.4))
    probs = bad.problems()
    assert any(">= 1" in e for e in probs) and any("sum to 1" in e for e in probs)
    d = OccupancyDistribution((1, 3), (0.25, 0.75))
    assert d.survival(0) == 1.0 and d.survival(1) == 0.75 and d.survival(3) == 0.0


def test_round_trip_with_categorical_occupancy(tmp_path):
    inst = small_instance()
    occ = OccupancyModel(np.where(np.ones(inst.weights.shape, bool), 1, 1), {(0, 1, 2): OccupancyDistribution((1, 2), (0.5, 0.5))})
    consts = np.array(occ.constants)
    consts[0, 1, 2] = 0
    occ = OccupancyModel(consts, occ.dists)
    inst = make_instance(kappa=1, batch_sizes=inst.batch_sizes, probs=inst.probs, weights=inst.weights, occupancy=occ)
    assert validate_instance(inst).ok
    text = inst.to_json()
    again = Instance.from_json(text)
    assert again.to_json() == text
    assert again.occupancy == inst.occupancy
    inst.save(tmp_path / "i.json")
    assert Instance.load(tmp_path / "i.json").to_json() == text


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_generated_tiny_instances_round_trip_and_validate(seed):
    inst = generate_tiny(TinyParams(), seed)
    assert validate_instance(inst).ok
    text = inst.to_json()
    assert Instance.from_json(text).to_json() == text


def test_arrays_are_read_only(two_by_two):
    with pytest.raises(ValueError):
        two_by_two.weights[0, 0, 0] = 5.0


def test_q_vertices_is_batch_times_probability(two_by_two):
    q = two_by_two.q_vertices()
    assert q.shape == (2, 3)
    assert np.allclose(q, 1.0)


def test_occupancy_means():
    occ = OccupancyModel(np.array([[[0, 2]]]), {(0, 0, 0): OccupancyDistribution((1, 3), (0.5, 0.5))})
    assert np.allclose(occ.means(), [[[2.0, 2.0]]])
