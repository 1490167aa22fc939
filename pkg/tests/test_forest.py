import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from brwre.environment import make_env_model, sample_env_seq
from brwre.errors import Inconclusive, TraceUnavailable
from brwre.estimators import naive_samples
from brwre.forest import Caps, additive_martingale, naive_indicator, optional_line_weight, simulate_tree
from brwre.offspring import make_offspring_law
from brwre.systems import binary_state


def _line_env():
    return make_env_model([(1.0, make_offspring_law([(1, 1.0)]))], _check_subcritical=False)


def test_single_line_of_descent(fair, rng):
    seq = sample_env_seq(_line_env(), 1, 1, seed=0)
    stats_ = simulate_tree(seq, fair, Caps(max_gen=200), rng, retain_trace=True)
    assert stats_.truncated
    assert stats_.pop_by_gen == [1] * 201
    pos = stats_.trace.positions
    assert np.all(np.abs(np.diff(pos)) == 1)
    assert stats_.max_disp_by_gen[1:] == pos[1:].tolist()
    assert stats_.max_disp == max(0, pos.max())


def test_tree_invariants(env_a, fair, rng):
    seq = sample_env_seq(env_a, 1, 500, seed=1)
    for _ in range(200):
        s = simulate_tree(seq, fair, rng=rng)
        assert s.pop_by_gen[0] == 1
        assert s.max_disp == max(s.max_disp_by_gen) and s.max_disp >= 0
        if s.extinct_at is not None:
            assert s.pop_by_gen[s.extinct_at :] == [0] * (len(s.pop_by_gen) - s.extinct_at)
            assert len(s.max_disp_by_gen) == s.extinct_at
        assert s.particles_total == sum(s.pop_by_gen)


def test_extinction_by_generation_30(env_a, fair):
    seq = sample_env_seq(env_a, 1, 500, seed=0)
    _, ext, status = naive_samples(seq, fair, 0, 10**5, seed=3, stop_at_x=False)
    assert np.all(status == 0)
    assert np.mean((ext >= 0) & (ext <= 30)) >= 0.99


def test_first_generation_matches_law(fair, rng):
    law = make_offspring_law([(0, 0.3), (1, 0.2), (2, 0.4), (4, 0.1)])
    model = make_env_model([(1.0, law)], _check_subcritical=False)
    seq = sample_env_seq(model, 1, 1, seed=0)
    caps = Caps(max_gen=1)
    z1 = np.array([simulate_tree(seq, fair, caps, rng).pop_by_gen[1] for _ in range(10**5)])
    observed = np.array([(z1 == c).sum() for c in law.counts])
    assert observed.sum() == 10**5
    assert stats.chisquare(observed, law.probs * 10**5).pvalue > 0.001


def test_martingales_small(env_a, fair, rng):
    seq = sample_env_seq(env_a, 1, 500, seed=2)
    w5, wl = [], []
    for _ in range(20000):
        s = simulate_tree(seq, fair, rng=rng, retain_trace=True)
        w5.append(additive_martingale(s, fair, 0.4, 5))
        wl.append(optional_line_weight(s, fair, 0.4, 3))
    for w in (np.array(w5), np.array(wl)):
        assert abs(w.mean() - 1) <= 4 * w.std(ddof=1) / np.sqrt(len(w))


def test_martingale_edge_cases(env_a, fair, rng):
    seq = sample_env_seq(env_a, 1, 500, seed=2)
    s = simulate_tree(seq, fair, rng=rng, retain_trace=True)
    assert additive_martingale(s, fair, 0.4, 0) == 1.0
    assert optional_line_weight(s, fair, 0.4, 0) == 1.0
    dead = make_env_model([(1.0, make_offspring_law([(0, 0.99), (1, 0.01)]))])
    d = simulate_tree(sample_env_seq(dead, 1, 1, seed=0), fair, rng=np.random.default_rng(0), retain_trace=True)
    assert d.extinct_at == 1 and d.max_disp == 0
    assert additive_martingale(d, fair, 0.4, 3) == 0.0
    assert optional_line_weight(d, fair, 0.4, 1) == 0.0
    assert naive_indicator(d, 1) == 0
    bare = simulate_tree(seq, fair, rng=rng)
    with pytest.raises(TraceUnavailable):
        additive_martingale(bare, fair, 0.4, 1)
    with pytest.raises(TraceUnavailable):
        optional_line_weight(bare, fair, 0.4, 1)


def test_first_crossing_sits_at_level(env_a, fair, rng):
    seq = sample_env_seq(env_a, 1, 500, seed=4)
    seen = 0
    for _ in range(2000):
        s = simulate_tree(seq, fair, rng=rng, retain_trace=True)
        tr = s.trace
        on_line = (tr.positions >= 2) & (tr.ancestor_max < 2)
        assert np.all(tr.positions[on_line] == 2)
        seen += on_line.any()
        assert (optional_line_weight(s, fair, 0.3, 2) > 0) == (s.max_disp >= 2)
    assert seen > 0


def test_truncation_warning(fair, rng):
    seq = sample_env_seq(_line_env(), 1, 1, seed=0)
    s = simulate_tree(seq, fair, Caps(max_gen=5), rng, retain_trace=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        optional_line_weight(s, fair, 0.4, 50)
    assert any("lower bound" in str(w.message) for w in caught)
    with pytest.raises(Inconclusive):
        naive_indicator(s, 50)


def test_population_cap(fair, rng):
    model = make_env_model([(1.0, binary_state(1.0))], _check_subcritical=False)
    s = simulate_tree(sample_env_seq(model, 1, 1, seed=0), fair, Caps(max_gen=100, max_particles=1000), rng)
    assert s.truncated and s.extinct_at is None


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 6), st.integers(0, 6))
def test_indicator_monotone_in_level(seed, x1, x2):
    from brwre.systems import env_c, fair_step

    seq = sample_env_seq(env_c(), 1, 500, seed=seed)
    s = simulate_tree(seq, fair_step(), rng=np.random.default_rng(seed))
    lo, hi = sorted((x1, x2))
    assert naive_indicator(s, hi) <= naive_indicator(s, lo)
    assert naive_indicator(s, 0) == 1
