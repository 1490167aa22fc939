"""Reference systems used by the tests, the self-test and the examples in the README."""
from __future__ import annotations

from scipy.optimize import brentq

from .asymptotics import theta
from .environment import EnvModel, make_env_model
from .offspring import make_offspring_law
from .steps import StepLaw, make_step_law


def fair_step() -> StepLaw:
    return make_step_law([(1, 0.5), (-1, 0.5)])


def lazy_step() -> StepLaw:
    return make_step_law([(1, 0.25), (0, 0.5), (-1, 0.25)])


def binary_state(p2: float):
    """Offspring law putting mass ``p2`` on two children and the rest on none."""
    return make_offspring_law([(0, 1.0 - p2), (2, p2)])


def env_a() -> EnvModel:
    """Means 0.6 and 1.2 with equal weight: class I with the fair walk."""
    return make_env_model([(0.5, binary_state(0.3)), (0.5, binary_state(0.6))])


def env_c() -> EnvModel:
    """Means 0.2 and 1.6 with equal weight: class III with the fair walk."""
    return make_env_model([(0.5, binary_state(0.1)), (0.5, binary_state(0.8))])


def env_b(t: float) -> EnvModel:
    """Pmf-wise linear interpolation between the states of :func:`env_a` and :func:`env_c`.

    The sum of the two means stays 1.8 for every ``t``, so ``Lambda_e(1)`` and
    ``lambda_1`` do not depend on ``t``.
    """
    lo = 0.3 * (1 - t) + 0.1 * t
    hi = 0.6 * (1 - t) + 0.8 * t
    return make_env_model([(0.5, binary_state(lo)), (0.5, binary_state(hi))])


def solve_env_b(step: StepLaw | None = None) -> float:
    """Interpolation parameter at which ``theta(1) = 0``."""
    step = fair_step() if step is None else step
    return brentq(lambda t: theta(env_b(t), step, 1.0), 0.0, 1.0, xtol=1e-15, rtol=1e-15)


def constant_env(p2: float) -> EnvModel:
    return make_env_model([(1.0, binary_state(p2))])


__all__ = [
    "fair_step", "lazy_step", "binary_state", "env_a", "env_b", "env_c",
    "solve_env_b", "constant_env",
]
