import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwre.asymptotics import classify
from brwre.errors import DegenerateFit, DomainError, MixedTargets, NotClassIII
from brwre.estimators import (
    Estimate,
    Moments,
    diagnostic_sqrt_decay,
    estimate_class1,
    estimate_class3,
    estimate_naive,
    estimate_spine,
    fit_rate,
    merge,
    plateau_ratios,
)
from brwre.oracle import annealed_hit_prob_small

LAM1 = math.acosh(1 / 0.9)


def overlap(a: Estimate, b: Estimate) -> bool:
    return a.ci95[0] <= b.ci95[1] and b.ci95[0] <= a.ci95[1]


@pytest.fixture(scope="module")
def oracle_x2():
    from brwre.systems import env_a, fair_step

    return annealed_hit_prob_small(env_a(), fair_step(), 2, 18)


def test_level_zero(env_a, fair):
    e = estimate_naive(env_a, fair, 0, 100, seed=0)
    assert (e.mean, e.stderr) == (1.0, 0.0)


def test_naive_vs_oracle(env_a, fair, oracle_x2):
    e = estimate_naive(env_a, fair, 2, 2 * 10**5, seed=1)
    assert abs(e.mean - oracle_x2.value) <= 3 * e.stderr + oracle_x2.survival_bound
    assert e.ci95 == pytest.approx((e.mean - 1.96 * e.stderr, e.mean + 1.96 * e.stderr))


def test_spine_vs_oracle(env_a, fair, oracle_x2):
    e = estimate_spine(env_a, fair, 2, LAM1, 40000, seed=2)
    assert abs(e.mean - oracle_x2.value) <= 3 * e.stderr + oracle_x2.survival_bound


def test_zero_hits_rule_of_three(env_a, fair):
    e = estimate_naive(env_a, fair, 40, 500, seed=0)
    assert e.zero_hits and e.mean == 0.0 and e.ci95 == (0.0, 3.0 / 500)


def test_lambda_invariance(env_a, fair):
    ests = [estimate_spine(env_a, fair, 3, lam, 20000, seed=3) for lam in (0.3, LAM1, 0.8)]
    naive = estimate_naive(env_a, fair, 3, 2 * 10**5, seed=3)
    for a in ests + [naive]:
        for b in ests + [naive]:
            assert overlap(a, b)
    with pytest.raises(DomainError):
        estimate_spine(env_a, fair, 3, 0.0, 10, seed=0)


def test_class1_rescale(env_a, fair):
    c1 = estimate_class1(env_a, fair, 5, 20000, seed=4)
    assert c1.log_scale == pytest.approx(LAM1 * 5, abs=1e-12)
    assert 0 < c1.mean <= 1
    sp = estimate_spine(env_a, fair, 5, LAM1, 20000, seed=4).rescaled(LAM1 * 5)
    assert overlap(c1, sp)
    back = c1.as_probability()
    assert back.mean == pytest.approx(c1.mean * math.exp(-LAM1 * 5), rel=1e-12)


def test_class3_rescale(env_a, env_c, fair):
    rep = classify(env_c, fair)
    c3 = estimate_class3(env_c, fair, 4, 20000, seed=5)
    assert c3.rho == pytest.approx(rep.rho_star) and c3.log_scale == pytest.approx(rep.exp_rate * 4)
    sp = estimate_spine(env_c, fair, 4, rep.lambda_rho_star, 40000, seed=5).rescaled(rep.exp_rate * 4)
    assert overlap(c3, sp)
    with pytest.raises(NotClassIII):
        estimate_class3(env_a, fair, 4, 10, 0)


def test_class3_at_one_reduces_to_class1(env_a, fair):
    c3 = estimate_class3(env_a, fair, 4, 20000, seed=6, rho=1.0)
    c1 = estimate_class1(env_a, fair, 4, 20000, seed=6)
    assert c3.log_scale == pytest.approx(c1.log_scale, rel=1e-12)
    assert overlap(c3, c1)


def test_unbiasedness_chain_env_c(env_c, fair):
    rep = classify(env_c, fair)
    for x in (2, 3):
        naive = estimate_naive(env_c, fair, x, 10**5, seed=7)
        spine = estimate_spine(env_c, fair, x, 0.5, 20000, seed=7)
        c3 = estimate_class3(env_c, fair, x, 20000, seed=7).as_probability()
        assert overlap(naive, spine) and overlap(naive, c3) and overlap(spine, c3)
        assert rep.exp_rate > 0


def test_variance_ordering(env_a, fair):
    n = 20000
    c1 = estimate_class1(env_a, fair, 8, n, seed=8)
    naive = estimate_naive(env_a, fair, 8, n, seed=8)
    assert c1.stderr * math.exp(-c1.log_scale) < naive.stderr


def test_merge_identities(env_a, fair):
    full = estimate_spine(env_a, fair, 2, 0.5, 4000, seed=9)
    halves = [estimate_spine(env_a, fair, 2, 0.5, 2000, seed=9, first_block=b) for b in (0, 1)]
    m = merge(halves)
    assert m.n == full.n
    assert m.mean == pytest.approx(full.mean, rel=1e-12)
    assert m.stderr == pytest.approx(full.stderr, rel=1e-10)
    assert merge(halves[::-1]).mean == pytest.approx(m.mean, rel=1e-12)
    assert m.stderr < halves[0].stderr
    with pytest.raises(MixedTargets):
        merge([halves[0], estimate_spine(env_a, fair, 3, 0.5, 100, seed=9)])


def test_worker_count_invariance(env_a, fair):
    a = estimate_class1(env_a, fair, 3, 5000, seed=10, workers=1)
    b = estimate_class1(env_a, fair, 3, 5000, seed=10, workers=2)
    assert a.to_row() == b.to_row()


def test_fit_exact_recovery():
    xs = np.arange(5, 30)
    f = fit_rate([(x, math.exp(-0.5 * x)) for x in xs])
    assert f.exp_rate == pytest.approx(0.5, abs=1e-6) and f.poly_power == pytest.approx(0.0, abs=1e-6)
    f = fit_rate([(x, x**-0.5 * math.exp(-0.4672 * x)) for x in xs])
    assert f.exp_rate == pytest.approx(0.4672, abs=1e-6) and f.poly_power == pytest.approx(0.5, abs=1e-6)
    assert f.residual < 1e-9
    assert f.diff_rate == pytest.approx((math.log(xs[-1] / xs[0]) * 0.5 + 0.4672 * (xs[-1] - xs[0])) / (xs[-1] - xs[0]))


def test_fit_errors():
    with pytest.raises(DegenerateFit):
        fit_rate([(1, 0.5), (2, 0.2), (3, 0.1)])
    with pytest.raises(DegenerateFit):
        fit_rate([(1, 0.5), (2, 0.2), (3, 0.0), (4, 0.01)])
    with pytest.raises(DegenerateFit):
        fit_rate([(2, 0.5), (2, 0.4), (2, 0.3), (2, 0.2)])


def test_gaussian_diagnostic():
    curve = dict(diagnostic_sqrt_decay(None, None, 10**5, 64, seed=1, mode="gaussian"))
    # Sparre Andersen: P(S_1..S_x <= 0) = C(2x, x) / 4^x for symmetric continuous steps
    for x in (1, 16, 64):
        p = math.comb(2 * x, x) / 4**x
        se = math.sqrt(x * p * (1 - p) / 10**5)
        assert abs(curve[x] - math.sqrt(x) * p) <= 4 * se


def test_diagnostic_first_point(env_a, fair):
    curve = diagnostic_sqrt_decay(env_a, fair, 4000, 4, seed=2)
    assert curve[0][0] == 1 and 0 < curve[0][1] < 1
    values = [v / math.sqrt(x) for x, v in curve]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_diagnostic_class1_does_not_plateau(env_a, fair):
    curve = diagnostic_sqrt_decay(env_a, fair, 20000, 64, seed=3)
    ratios = dict(plateau_ratios(curve, x_min=16))
    assert ratios[16] > 1.8


def test_moments_of_logs():
    rng = np.random.default_rng(0)
    logs = rng.normal(-300, 2, size=1000)
    m = Moments.of_logs(logs)
    ref = Moments.of(np.exp(logs + 300))
    assert m.mean == pytest.approx(ref.mean * math.exp(-300), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60), st.integers(1, 59))
def test_moment_merge_matches_direct(values, cut):
    values = np.array(values)
    cut = min(cut, len(values) - 1)
    merged = Moments.of(values[:cut]).merge(Moments.of(values[cut:]))
    direct = Moments.of(values)
    assert merged.n == direct.n
    assert merged.mean == pytest.approx(direct.mean, rel=1e-9, abs=1e-9)
    assert merged.m2 == pytest.approx(direct.m2, rel=1e-9, abs=1e-6)
