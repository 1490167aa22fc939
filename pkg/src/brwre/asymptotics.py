"""Decay rates and tail-regime classification of the maximal displacement."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .environment import EnvModel, lambda_e, lambda_e_prime
from .errors import DomainError, NoSignChange
from .steps import StepLaw, kappa, lambda_s, lambda_s_derivs

THETA_TOL = 1e-9
RHO_EPS = 1e-9


def alpha(model: EnvModel) -> float:
    """``sup{rho : Lambda_e(rho) <= 0}``; ``math.inf`` when no state is supercritical."""
    if np.max(model.means) <= 1.0:
        return math.inf
    hi = 1.0
    while lambda_e(model, hi) <= 0:
        hi *= 2.0
    # Lambda_e is convex with negative slope at 0: the root lies right of its minimizer.
    lo = brentq(lambda r: lambda_e_prime(model, r), 0.0, hi, xtol=1e-15)
    root = brentq(lambda r: lambda_e(model, r), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return float(root)


def lambda_zero(model: EnvModel, step: StepLaw) -> float:
    return kappa(step, -model.a)


def lambda_rho(model: EnvModel, step: StepLaw, rho: float, alpha_: float | None = None) -> float:
    """Tilt ``lam`` solving ``Lambda_e(rho) + rho * Lambda_s(lam) = 0``."""
    alpha_ = alpha(model) if alpha_ is None else alpha_
    if not (0 < rho <= alpha_ * (1 + 1e-12)):
        raise DomainError(f"rho={rho} outside (0, alpha={alpha_}]")
    delta = -lambda_e(model, rho) / rho
    if delta <= 0:
        return 0.0
    return kappa(step, delta)


def theta(model: EnvModel, step: StepLaw, rho: float, alpha_: float | None = None) -> float:
    lam = lambda_rho(model, step, rho, alpha_)
    d1, _ = lambda_s_derivs(step, lam)
    return lambda_e_prime(model, rho) + lambda_s(step, lam) - lam * d1


def theta_root(model: EnvModel, step: StepLaw, upper: float | None = None) -> float:
    """Unique zero of the increasing drift functional on ``(0, upper]``.

    ``upper`` defaults to ``min(alpha, 1)``, the interval relevant for the
    third class.
    """
    alpha_ = alpha(model)
    upper = min(alpha_, 1.0) if upper is None else min(upper, alpha_)
    f_hi = theta(model, step, upper, alpha_)
    if abs(f_hi) <= 1e-12:
        return float(upper)
    f_lo = theta(model, step, RHO_EPS, alpha_)
    if not (f_lo < 0 < f_hi):
        raise NoSignChange(f"theta({RHO_EPS})={f_lo:.6g}, theta({upper})={f_hi:.6g}")
    return float(
        brentq(lambda r: theta(model, step, r, alpha_), RHO_EPS, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    )


@dataclass
class ClassificationReport:
    a: float
    alpha: float
    lambda0: float
    class_label: str
    exp_rate: float
    poly_power: float
    poly_is_bound: bool
    lambda1: float | None = None
    theta1: float | None = None
    rho_star: float | None = None
    lambda_rho_star: float | None = None
    theta_table: list = field(default_factory=list)

    @property
    def alpha_is_infinite(self) -> bool:
        return math.isinf(self.alpha)

    @property
    def predicted(self) -> tuple[float, float, bool]:
        return self.exp_rate, self.poly_power, self.poly_is_bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out["alpha"] = "inf" if self.alpha_is_infinite else self.alpha
        return out

    def table(self) -> str:
        rows = [
            ("class", self.class_label),
            ("a", self.a),
            ("alpha", self.alpha),
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("theta(1)", self.theta1),
            ("rho*", self.rho_star),
            ("lambda_rho*", self.lambda_rho_star),
            ("exp_rate", self.exp_rate),
            ("poly_power", f"{self.poly_power}{' (bound)' if self.poly_is_bound else ''}"),
        ]
        lines = []
        for name, value in rows:
            if value is None:
                continue
            text = f"{value:.10g}" if isinstance(value, float) else str(value)
            lines.append(f"{name:>12}  {text}")
        return "\n".join(lines)


def classify(model: EnvModel, step: StepLaw, table_points: int = 11) -> ClassificationReport:
    alpha_ = alpha(model)
    lam0 = lambda_zero(model, step)
    report = ClassificationReport(
        a=model.a, alpha=alpha_, lambda0=lam0, class_label="", exp_rate=math.nan,
        poly_power=math.nan, poly_is_bound=False,
    )
    if alpha_ >= 1.0:
        report.lambda1 = lambda_rho(model, step, 1.0, alpha_)
        report.theta1 = theta(model, step, 1.0, alpha_)
    if alpha_ > 1.0 and report.theta1 < -THETA_TOL:
        report.class_label = "I"
        report.exp_rate, report.poly_power = report.lambda1, 0.0
    elif alpha_ > 1.0 and abs(report.theta1) <= THETA_TOL:
        report.class_label = "II"
        report.exp_rate, report.poly_power = report.lambda1, 0.5
    else:
        report.class_label = "III"
        rho = theta_root(model, step)
        report.rho_star = rho
        report.lambda_rho_star = lambda_rho(model, step, rho, alpha_)
        report.exp_rate = rho * report.lambda_rho_star
        report.poly_power, report.poly_is_bound = 1.5, True
    top = min(alpha_, 5.0)
    for r in np.linspace(top / table_points, top, table_points):
        report.theta_table.append((float(r), theta(model, step, float(r), alpha_)))
    return report
