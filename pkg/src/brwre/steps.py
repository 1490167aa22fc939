"""Upward skip-free step laws: log-Laplace transform, tilting, first passage."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import (
    BadPmf,
    CapacityError,
    DomainError,
    MeanNotZero,
    MissingUpStep,
    SupportAbovePlusOne,
    TrivialLaw,
)

PMF_SUM_TOL = 1e-9
MEAN_TOL = 1e-12
ROOT_TOL = 1e-12
DP_CELL_BUDGET = 10**8


def log_mgf(values: np.ndarray, probs: np.ndarray, t: float) -> float:
    """``log sum p_i exp(t v_i)``, accurate both near ``t = 0`` and for large ``t``."""
    z = t * values
    if np.max(np.abs(z)) < 0.5:
        return float(np.log1p(np.dot(probs, np.expm1(z))))
    zmax = np.max(z)
    return float(zmax + np.log(np.dot(probs, np.exp(z - zmax))))


def tilted_probs(values: np.ndarray, probs: np.ndarray, t: float) -> np.ndarray:
    z = t * values
    w = probs * np.exp(z - np.max(z))
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class StepLaw:
    values: np.ndarray
    probs: np.ndarray

    @property
    def min_step(self) -> int:
        return int(self.values[0])

    @property
    def has_plus_one(self) -> bool:
        return bool(self.values[-1] == 1)

    @property
    def p_up(self) -> float:
        return float(self.probs[-1]) if self.has_plus_one else 0.0

    @property
    def pmf(self) -> list[tuple[int, float]]:
        return [(int(y), float(p)) for y, p in zip(self.values, self.probs)]

    @property
    def variance(self) -> float:
        return float(np.dot(self.values**2, self.probs))

    def to_json(self) -> dict:
        return {"pmf": [[y, p] for y, p in self.pmf]}

    def __repr__(self) -> str:
        return f"StepLaw(pmf={self.pmf})"


@dataclass(frozen=True, eq=False)
class TiltedStepLaw:
    """The one-step law ``p_y exp(lam*y - Lambda_s(lam))``."""

    base: StepLaw
    lam: float
    probs: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.base.values

    @property
    def pmf(self) -> list[tuple[int, float]]:
        return [(int(y), float(p)) for y, p in zip(self.values, self.probs)]

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))


def make_step_law(entries: Iterable[Sequence[float]]) -> StepLaw:
    entries = list(entries)
    if not entries:
        raise BadPmf("empty pmf")
    values = np.array([e[0] for e in entries])
    probs = np.array([e[1] for e in entries], dtype=float)
    if not np.all(np.equal(np.mod(values, 1), 0)):
        raise BadPmf("steps must be integers")
    values = values.astype(np.int64)
    if len(np.unique(values)) != len(values):
        raise BadPmf("duplicate displacements")
    if np.any(~np.isfinite(probs)) or np.any(probs < 0):
        raise BadPmf("negative or non-finite probability")
    if abs(probs.sum() - 1.0) > PMF_SUM_TOL:
        raise BadPmf(f"probabilities sum to {probs.sum()!r}")
    keep = probs > 0
    values, probs = values[keep], probs[keep] / probs[keep].sum()
    order = np.argsort(values)
    values, probs = values[order], probs[order]
    if values[-1] > 1:
        raise SupportAbovePlusOne(f"step {int(values[-1])} exceeds +1")
    if len(values) < 2:
        raise TrivialLaw("step law must have at least two support points")
    mean = float(np.dot(values, probs))
    if abs(mean) > MEAN_TOL:
        raise MeanNotZero(f"step mean is {mean!r}")
    if values[-1] != 1:
        raise MissingUpStep("no mass at +1: positive levels are unreachable")
    values.setflags(write=False)
    probs.setflags(write=False)
    return StepLaw(values=values, probs=probs)


def lambda_s(law: StepLaw, lam: float) -> float:
    """Log-Laplace transform of the step law."""
    return log_mgf(law.values, law.probs, lam)


def lambda_s_derivs(law: StepLaw, lam: float) -> tuple[float, float]:
    """Exact first and second derivative (tilted mean and variance)."""
    p = tilted_probs(law.values, law.probs, lam)
    first = float(np.dot(law.values, p))
    second = float(np.dot((law.values - first) ** 2, p))
    return first, second


def kappa(law: StepLaw, delta: float) -> float:
    """Inverse of ``lambda_s`` on the positive half-line."""
    if not delta > 0:
        raise DomainError(f"kappa needs delta > 0, got {delta}")
    # Lambda_s(lam) >= lam + log p_{+1}, so this upper end is always a bracket.
    hi = delta - np.log(law.p_up) + 1.0
    f = lambda t: lambda_s(law, t) - delta  # noqa: E731
    lam = brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    for _ in range(3):
        d1, _ = lambda_s_derivs(law, lam)
        resid = f(lam)
        if abs(resid) <= 0.25 * ROOT_TOL or d1 <= 0:
            break
        lam -= resid / d1
    return float(lam)


def tilt_step(law: StepLaw, lam: float) -> TiltedStepLaw:
    p = tilted_probs(law.values, law.probs, lam)
    p.setflags(write=False)
    return TiltedStepLaw(base=law, lam=float(lam), probs=p)


def first_passage_pmf(law: StepLaw, x: int, n_max: int, cell_budget: int = DP_CELL_BUDGET) -> np.ndarray:
    """``Q(tau_x = n)`` for ``n = 0..n_max`` under the untilted walk.

    Positions are tracked on ``[x - n_max*|min_step|, x-1]``; anything lower
    can no longer climb to ``x`` within the horizon.
    """
    if x < 1 or n_max < x:
        raise DomainError("need x >= 1 and n_max >= x")
    lo = x - n_max * abs(law.min_step)
    width = x - lo
    if width * n_max > cell_budget:
        raise CapacityError(f"first-passage grid {width}x{n_max} exceeds budget {cell_budget}")
    dist = np.zeros(width)
    dist[0 - lo] = 1.0
    out = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        new = np.zeros(width)
        hit = 0.0
        for y, p in zip(law.values, law.probs):
            if y == 1:
                hit = p * dist[-1]
                new[1:] += p * dist[:-1]
            elif y >= 0:
                new += p * dist
            else:
                new[: width + y] += p * dist[-y:]
        out[n] = hit
        dist = new
    return out


def tilted_first_passage(law: StepLaw, lam: float, x: int, n_max: int, cell_budget: int = DP_CELL_BUDGET) -> np.ndarray:
    """``Q_lam(tau_x = n) = Q(tau_x = n) exp(lam*x - n*Lambda_s(lam))``."""
    base = first_passage_pmf(law, x, n_max, cell_budget)
    n = np.arange(n_max + 1)
    return base * np.exp(lam * x - n * lambda_s(law, lam))


def step_law_from_json(obj: dict) -> StepLaw:
    return make_step_law(obj["pmf"])
