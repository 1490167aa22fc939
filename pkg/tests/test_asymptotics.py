import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwre import systems
from brwre.asymptotics import alpha, classify, lambda_rho, lambda_zero, theta, theta_root
from brwre.environment import lambda_e, lambda_e_prime, make_env_model
from brwre.errors import DomainError, NoSignChange


def test_alpha_env_a(env_a):
    a = alpha(env_a)
    assert lambda_e(env_a, a) == pytest.approx(0.0, abs=1e-13)
    # direct solve of 0.5 (0.6^r + 1.2^r) = 1
    assert 0.5 * (0.6**a + 1.2**a) == pytest.approx(1.0, abs=1e-13)
    assert a == pytest.approx(3.25560, abs=5e-5)


def test_alpha_infinite():
    assert math.isinf(alpha(systems.constant_env(0.3)))


def test_lambda_zero(env_a, fair):
    assert lambda_zero(env_a, fair) == pytest.approx(math.acosh(math.exp(-env_a.a)), abs=1e-12)


def test_lambda_rho_edges(env_a, fair):
    a = alpha(env_a)
    assert lambda_rho(env_a, fair, a) == pytest.approx(0.0, abs=1e-6)
    assert lambda_rho(env_a, fair, 1.0) == pytest.approx(math.acosh(1 / 0.9), abs=1e-12)
    with pytest.raises(DomainError):
        lambda_rho(env_a, fair, a + 0.1)
    with pytest.raises(DomainError):
        lambda_rho(env_a, fair, 0.0)


def test_theta_at_alpha(env_a, fair):
    a = alpha(env_a)
    assert theta(env_a, fair, a) == pytest.approx(lambda_e_prime(env_a, a), abs=1e-6)
    assert lambda_e_prime(env_a, a) > 0


def test_theta_near_zero(env_a, fair):
    lam0 = lambda_zero(env_a, fair)
    assert theta(env_a, fair, 1e-7) == pytest.approx(-lam0 * math.tanh(lam0), abs=1e-5)


def test_monotone_on_grid(env_a, env_c, fair):
    for model in (env_a, env_c):
        a = min(alpha(model), 5.0)
        grid = np.linspace(0.01, a, 60)
        lams = [lambda_rho(model, fair, r) for r in grid]
        thetas = [theta(model, fair, r) for r in grid]
        assert np.all(np.diff(lams) <= 1e-12)
        assert np.all(np.diff(thetas) >= -1e-12)


def test_theta_root(env_a, env_c, fair):
    with pytest.raises(NoSignChange):
        theta_root(env_a, fair)
    r = theta_root(env_c, fair)
    assert 0 < r < 1
    assert theta(env_c, fair, r) == pytest.approx(0.0, abs=1e-10)


def test_classes(env_a, env_c, fair, lazy):
    rep = classify(env_a, fair)
    assert rep.class_label == "I"
    assert rep.exp_rate == pytest.approx(math.acosh(1 / 0.9), abs=1e-12)
    assert rep.poly_power == 0.0
    assert classify(systems.constant_env(0.3), fair).class_label == "I"
    rep_c = classify(env_c, fair)
    assert rep_c.class_label == "III"
    assert rep_c.exp_rate == pytest.approx(rep_c.rho_star * rep_c.lambda_rho_star, abs=1e-15)
    assert rep_c.poly_is_bound
    env_b = systems.env_b(systems.solve_env_b())
    rep_b = classify(env_b, fair)
    assert rep_b.class_label == "II" and rep_b.poly_power == 0.5
    assert classify(env_a, lazy).class_label in {"I", "II", "III"}
    assert len(rep.theta_table) == 11
    assert "class" in rep.table() and rep.to_dict()["class_label"] == "I"


def test_env_b_parameter(fair):
    t = systems.solve_env_b()
    assert abs(theta(systems.env_b(t), fair, 1.0)) <= 1e-12
    for s in (0.1, 0.5, 0.9):
        assert lambda_e(systems.env_b(s), 1.0) == pytest.approx(math.log(0.9), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.2), st.floats(0.55, 0.95), st.floats(0.3, 0.8))
def test_classification_consistent(p_lo, p_hi, w):
    model = make_env_model([(w, systems.binary_state(p_lo)), (1 - w, systems.binary_state(p_hi))],
                           _check_subcritical=False)
    if model.a >= 0:
        return
    fair = systems.fair_step()
    rep = classify(model, fair, table_points=5)
    a = alpha(model)
    if rep.class_label == "I":
        assert a > 1 and rep.theta1 < 0
    elif rep.class_label == "III":
        assert 0 < rep.rho_star <= min(a, 1.0) + 1e-12
        assert rep.exp_rate <= lambda_zero(model, fair) + 1e-9
    # the rate never exceeds the one-particle bound
    assert rep.exp_rate <= lambda_zero(model, fair) + 1e-9
