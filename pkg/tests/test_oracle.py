import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwre.environment import assoc_walk, make_env_model, sample_env_seq
from brwre.errors import CapacityError, DomainError
from brwre.estimators import naive_samples
from brwre.offspring import make_offspring_law
from brwre.oracle import annealed_hit_prob_small, oracle_curve, quenched_hit_prob
from brwre.systems import constant_env, env_a as make_env_a, fair_step


def test_hand_recursion(fair):
    model = make_env_model([(1.0, make_offspring_law([(0, 0.4), (2, 0.6)]))], _check_subcritical=False)
    seq = sample_env_seq(model, 1, 1, seed=0)
    r = quenched_hit_prob(seq, fair, 1, 1)
    assert r.value == pytest.approx(0.45, abs=1e-15)
    assert r.grid == (0, 1)


def test_zero_horizon(env_a, fair):
    seq = sample_env_seq(env_a, 1, 1, seed=0)
    r = quenched_hit_prob(seq, fair, 4, 0)
    assert (r.value, r.error_bound) == (0.0, 1.0)


def test_errors(env_a, fair):
    seq = sample_env_seq(env_a, 1, 1, seed=0)
    with pytest.raises(DomainError):
        quenched_hit_prob(seq, fair, 0, 5)
    with pytest.raises(CapacityError):
        quenched_hit_prob(seq, fair, 2, 500, cell_budget=1000)
    with pytest.raises(CapacityError):
        annealed_hit_prob_small(env_a, fair, 2, 40)
    with pytest.raises(DomainError):
        annealed_hit_prob_small(env_a, fair, 2, 5, mode="bogus")


def test_certificate(env_a, fair):
    seq = sample_env_seq(env_a, 1, 60, seed=7)
    r = quenched_hit_prob(seq, fair, 3, 60)
    assert r.error_bound == pytest.approx(np.exp(assoc_walk(seq, 0, 60).min()), abs=1e-15)
    assert r.survival_bound <= r.error_bound + 1e-15
    # a longer horizon stays inside the certified interval
    longer = quenched_hit_prob(seq, fair, 3, 120)
    assert r.value <= longer.value <= r.value + r.survival_bound + 1e-15


def test_constant_env_annealed_equals_quenched(fair):
    model = constant_env(0.4)
    seq = sample_env_seq(model, 1, 10, seed=0)
    q = quenched_hit_prob(seq, fair, 2, 10)
    a = annealed_hit_prob_small(model, fair, 2, 10)
    assert a.value == pytest.approx(q.value, abs=1e-15)


def test_average_matches_enumerate(env_a, fair):
    exact = annealed_hit_prob_small(env_a, fair, 2, 12)
    avg = annealed_hit_prob_small(env_a, fair, 2, 12, mode="average", n_env=10**4, seed=1)
    assert abs(avg.value - exact.value) <= 4 * avg.stderr
    assert exact.survival_bound <= exact.error_bound


def test_quenched_vs_naive_t60(env_a, fair):
    seq = sample_env_seq(env_a, 1, 500, seed=0)
    r = quenched_hit_prob(seq, fair, 3, 60)
    M, _, status = naive_samples(seq, fair, 3, 10**6, seed=11)
    hit = (M >= 3).mean()
    se = np.sqrt(hit * (1 - hit) / len(M))
    assert np.all(status == 0)
    assert abs(hit - r.value) <= 3 * se + r.error_bound


def test_quenched_vs_naive_five_sequences(env_a, fair):
    for env_seed in range(5):
        seq = sample_env_seq(env_a, 1, 500, seed=100 + env_seed)
        M, _, status = naive_samples(seq, fair, 0, 2 * 10**5, seed=env_seed, stop_at_x=False)
        assert np.all(status == 0)
        for x in range(1, 5):
            r = quenched_hit_prob(seq, fair, x, 40)
            hit = (M >= x).mean()
            se = np.sqrt(hit * (1 - hit) / len(M))
            assert abs(hit - r.value) <= 3 * se + r.error_bound


def test_curve_meets_relative_bound(env_a, fair):
    seq = sample_env_seq(env_a, 1, 1, seed=0)
    curve = oracle_curve(seq, fair, [5, 10], rel_bound=1e-3)
    for x, r in curve:
        assert r.error_bound < 1e-3 * r.value
    assert curve[1][1].value < curve[0][1].value


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(2, 40))
def test_monotone_in_level_and_horizon(seed, x, T):
    env, step = make_env_model([(0.5, make_offspring_law([(0, 0.7), (2, 0.3)])),
                                (0.5, make_offspring_law([(0, 0.2), (3, 0.8)]))], _check_subcritical=False), fair_step()
    seq = sample_env_seq(env, 1, T + 5, seed=seed)
    base = quenched_hit_prob(seq, step, x, T)
    assert 0.0 <= base.value <= 1.0
    assert quenched_hit_prob(seq, step, x + 1, T).value <= base.value + 1e-15
    assert quenched_hit_prob(seq, step, x, T + 5).value >= base.value - 1e-15


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4))
def test_annealed_monotone(x):
    env, step = make_env_a(), fair_step()
    v = [annealed_hit_prob_small(env, step, x, T).value for T in (4, 6, 8)]
    assert v[0] <= v[1] + 1e-15 <= v[2] + 2e-15
    assert annealed_hit_prob_small(env, step, x + 1, 8).value <= v[2] + 1e-15
