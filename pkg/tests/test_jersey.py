import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pitchstream.jersey import (
    NumberEstimate,
    NumberVote,
    ValueOutOfRange,
    add_number_observation,
    infer_track_number,
)


def vote_from(obs):
    vote = NumberVote()
    for value, conf in obs:
        add_number_observation(vote, value, conf)
    return vote


def test_fresh_observation_accumulates():
    vote = vote_from([(10, 0.9)])
    assert vote.weights == {10: 0.9}
    assert vote.observation_count == 1
    vote.add(10, 0.4)
    assert vote.weights[10] == pytest.approx(1.3)
    assert vote.observation_count == 2


def test_value_out_of_range():
    vote = NumberVote()
    with pytest.raises(ValueOutOfRange):
        vote.add(100, 0.5)
    with pytest.raises(ValueOutOfRange):
        vote.add(-1, 0.5)
    with pytest.raises(ValueOutOfRange):
        vote.add(5, 1.5)


def test_weighted_vote_example():
    est = infer_track_number(vote_from([(10, 0.9), (10, 0.8), (7, 0.3)]))
    assert est.value == 10
    assert est.confidence == pytest.approx(1.7 / 2.0)
    assert est.observation_count == 3


def test_single_observation_below_min_obs():
    est = infer_track_number(vote_from([(23, 0.5)]))
    assert est == NumberEstimate(None, 0.0, 1)


def test_low_confidence_is_unknown():
    # three-way split: top share 0.4 < 0.5 floor
    est = infer_track_number(vote_from([(1, 0.4), (2, 0.3), (3, 0.3)]))
    assert est.value is None


def test_tie_breaks_to_lower_number():
    est = infer_track_number(vote_from([(9, 0.5), (4, 0.5), (9, 0.5), (4, 0.5)]), confidence_floor=0.0)
    assert est.value == 4


def test_reset_clears_state():
    vote = vote_from([(10, 0.9), (10, 0.9), (10, 0.9)])
    vote.reset()
    assert infer_track_number(vote) == NumberEstimate(None, 0.0, 0)


obs_lists = st.lists(
    st.tuples(st.integers(0, 99), st.floats(0.01, 1.0)), min_size=3, max_size=30
)


@settings(max_examples=200, deadline=None)
@given(obs_lists, st.floats(0.1, 1.0))
def test_value_invariant_under_confidence_scaling(obs, scale):
    a = infer_track_number(vote_from(obs))
    b = infer_track_number(vote_from([(v, c * scale) for v, c in obs]))
    assert a.value == b.value
    assert a.confidence == pytest.approx(b.confidence)


@settings(max_examples=200, deadline=None)
@given(obs_lists, st.randoms(use_true_random=False))
def test_permutation_invariance(obs, rnd):
    a = infer_track_number(vote_from(obs))
    shuffled = list(obs)
    rnd.shuffle(shuffled)
    b = infer_track_number(vote_from(shuffled))
    assert a.value == b.value
    assert a.confidence == pytest.approx(b.confidence)


@settings(max_examples=200, deadline=None)
@given(obs_lists)
def test_confidence_in_unit_interval(obs):
    est = infer_track_number(vote_from(obs))
    assert 0.0 <= est.confidence <= 1.0


def test_confidence_monotone_in_top_weight():
    obs = [(10, 0.6), (10, 0.6), (7, 0.4)]
    vote = vote_from(obs)
    before = infer_track_number(vote).confidence
    vote.add(10, 0.5)
    after = infer_track_number(vote).confidence
    assert after > before


def test_seeded_corruption_recovers_true_number():
    # 70% correct reads over 50-observation tracks always recover the number
    rng = np.random.default_rng(0)
    for true in rng.integers(0, 100, size=20):
        vote = NumberVote()
        for _ in range(50):
            if rng.random() < 0.7:
                vote.add(int(true), float(rng.uniform(0.6, 1.0)))
            else:
                vote.add(int(rng.integers(0, 100)), float(rng.uniform(0.1, 0.5)))
        assert infer_track_number(vote).value == int(true)
