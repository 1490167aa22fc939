import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwre.errors import BadPmf, CapacityError, DomainError, MeanNotZero, SupportAbovePlusOne, TrivialLaw
from brwre.steps import (
    first_passage_pmf,
    kappa,
    lambda_s,
    lambda_s_derivs,
    make_step_law,
    step_law_from_json,
    tilt_step,
    tilted_first_passage,
)


@st.composite
def skip_free_laws(draw):
    """Zero-mean laws on {-d, ..., 1} built by matching the mean with the +1 mass."""
    d = draw(st.integers(1, 4))
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=d + 1, max_size=d + 1)))
    down = w[:d] / w.sum()
    zero = w[d] / w.sum()
    neg = sum((k + 1) * down[k] for k in range(d))
    up = neg
    total = up + down.sum() + zero
    entries = [(1, up / total), (0, zero / total)] + [(-(k + 1), down[k] / total) for k in range(d)]
    return make_step_law(entries)


def test_fair_log_laplace(fair):
    for lam in (0.0, 0.3, 1.0, -0.7, 2.5):
        assert lambda_s(fair, lam) == pytest.approx(math.log(math.cosh(lam)), abs=1e-14)
        assert lambda_s_derivs(fair, lam)[0] == pytest.approx(math.tanh(lam), abs=1e-14)


def test_lazy_log_laplace(lazy):
    assert lambda_s(lazy, 1.0) == pytest.approx(0.24024, abs=5e-5)
    assert lambda_s(lazy, 1.0) == pytest.approx(math.log(0.5 + 0.5 * math.cosh(1.0)), abs=1e-14)


def test_kappa(fair):
    assert kappa(fair, 0.16425) == pytest.approx(0.58897, abs=5e-5)
    assert kappa(fair, 0.16425) == pytest.approx(math.acosh(math.exp(0.16425)), abs=1e-12)
    with pytest.raises(DomainError):
        kappa(fair, 0.0)
    with pytest.raises(DomainError):
        kappa(fair, -1.0)


def test_tilt(fair):
    t = tilt_step(fair, 0.4)
    up = dict(t.pmf)[1]
    assert up == pytest.approx(math.exp(0.4) / (2 * math.cosh(0.4)), abs=1e-15)
    assert t.mean == pytest.approx(math.tanh(0.4), abs=1e-15)


def test_validation():
    with pytest.raises(SupportAbovePlusOne):
        make_step_law([(2, 1 / 3), (-1, 2 / 3)])
    with pytest.raises(MeanNotZero):
        make_step_law([(1, 0.6), (-1, 0.4)])
    with pytest.raises(TrivialLaw):
        make_step_law([(0, 1.0)])
    with pytest.raises(BadPmf):
        make_step_law([(1, 0.5), (-1, 0.6)])
    with pytest.raises(BadPmf):
        make_step_law([(0.5, 0.5), (-0.5, 0.5)])
    # zero mean without +1 mass forces a trivial or nonzero-mean law
    with pytest.raises((TrivialLaw, MeanNotZero)):
        make_step_law([(0, 0.5), (-1, 0.5)])


def test_first_passage_fair(fair):
    q = first_passage_pmf(fair, 1, 5)
    assert q[0] == 0
    assert q[1] == pytest.approx(0.5, abs=1e-15)
    assert q[2] == pytest.approx(0.0, abs=1e-15)
    assert q[3] == pytest.approx(0.125, abs=1e-15)
    # Catalan numbers: P(tau_1 = 2k+1) = C_k / 2^(2k+1)
    for k in range(3):
        assert q[2 * k + 1] == pytest.approx(math.comb(2 * k, k) / (k + 1) / 2 ** (2 * k + 1), abs=1e-15)


def test_first_passage_lazy(lazy):
    q = first_passage_pmf(lazy, 1, 3)
    assert q[1] == pytest.approx(0.25, abs=1e-15)
    assert q[2] == pytest.approx(0.5 * 0.25, abs=1e-15)


def test_first_passage_errors(fair):
    with pytest.raises(DomainError):
        first_passage_pmf(fair, 0, 10)
    with pytest.raises(DomainError):
        first_passage_pmf(fair, 5, 3)
    with pytest.raises(CapacityError):
        first_passage_pmf(fair, 1, 2000, cell_budget=1000)


def test_tilted_first_passage_mass(fair):
    q = tilted_first_passage(fair, 0.4672, 3, 400)
    assert q.sum() >= 0.999
    assert q.sum() <= 1 + 1e-12


def test_json_roundtrip(lazy):
    assert step_law_from_json(lazy.to_json()).pmf == lazy.pmf


@settings(max_examples=50, deadline=None)
@given(skip_free_laws(), st.floats(0.01, 3.0))
def test_kappa_roundtrip(law, delta):
    lam = kappa(law, delta)
    assert lam > 0
    assert lambda_s(law, lam) == pytest.approx(delta, rel=1e-10, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(skip_free_laws(), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0), st.floats(0.0, 1.0))
def test_log_laplace_convex(law, a, b, t):
    mid = lambda_s(law, t * a + (1 - t) * b)
    assert mid <= t * lambda_s(law, a) + (1 - t) * lambda_s(law, b) + 1e-12


@settings(max_examples=50, deadline=None)
@given(skip_free_laws(), st.floats(-2.0, 2.0))
def test_derivative_matches_difference(law, lam):
    h = 1e-6
    num = (lambda_s(law, lam + h) - lambda_s(law, lam - h)) / (2 * h)
    d1, d2 = lambda_s_derivs(law, lam)
    assert num == pytest.approx(d1, abs=1e-6)
    assert d2 >= 0
    assert lambda_s(law, 0.0) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(skip_free_laws(), st.integers(1, 4))
def test_first_passage_is_subprobability(law, x):
    q = first_passage_pmf(law, x, 60)
    assert np.all(q >= 0)
    assert q[:x].sum() == 0
    assert q.sum() <= 1 + 1e-12


@settings(max_examples=30, deadline=None)
@given(skip_free_laws(), st.floats(0.2, 1.5))
def test_tilted_walk_drifts_up(law, lam):
    assert tilt_step(law, lam).mean > 0
