"""Estimator-style wrappers around the classification and the Monte Carlo schemes."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .asymptotics import classify
from .estimators import (
    estimate_class1,
    estimate_class3,
    estimate_naive,
    estimate_spine,
    fit_rate,
)
from .spine import SubtreeCaps


def _levels(X) -> np.ndarray:
    X = check_array(np.asarray(X).reshape(-1, 1) if np.ndim(X) == 1 else X, dtype=np.float64)
    if X.shape[1] != 1:
        raise ValueError("levels must be a single column")
    levels = X[:, 0]
    if np.any(levels != np.round(levels)) or np.any(levels < 1):
        raise ValueError("levels must be positive integers")
    return levels.astype(int)


class TailProbabilityEstimator(BaseEstimator):
    """Estimate ``P(M >= x)`` for one system.

    ``fit`` classifies the system and picks the importance-sampling scheme
    suited to its class when ``scheme="auto"``; ``predict`` runs it level by
    level.
    """

    def __init__(self, env=None, step=None, scheme="auto", n_replicates=10000, seed=0, lam=None,
                 workers=1, max_gen=400):
        self.env = env
        self.step = step
        self.scheme = scheme
        self.n_replicates = n_replicates
        self.seed = seed
        self.lam = lam
        self.workers = workers
        self.max_gen = max_gen

    def fit(self, X=None, y=None):
        if self.env is None or self.step is None:
            raise ValueError("env and step are required")
        self.report_ = classify(self.env, self.step)
        scheme = self.scheme
        if scheme == "auto":
            scheme = "class3" if self.report_.class_label == "III" else "class1"
        self.scheme_ = scheme
        self.exp_rate_ = self.report_.exp_rate
        return self

    def _estimate(self, x: int):
        caps = SubtreeCaps(max_gen=self.max_gen)
        kw = dict(n=self.n_replicates, seed=self.seed, workers=self.workers)
        if self.scheme_ == "naive":
            return estimate_naive(self.env, self.step, x, **kw)
        if self.scheme_ == "spine":
            lam = self.lam if self.lam is not None else (self.report_.lambda1 or self.report_.lambda0)
            return estimate_spine(self.env, self.step, x, lam, caps=caps, **kw)
        if self.scheme_ == "class1":
            return estimate_class1(self.env, self.step, x, caps=caps, **kw)
        if self.scheme_ == "class3":
            return estimate_class3(self.env, self.step, x, caps=caps, **kw)
        raise ValueError(f"unknown scheme {self.scheme_!r}")

    def estimates(self, X) -> list:
        check_is_fitted(self, "report_")
        return [self._estimate(int(x)) for x in _levels(X)]

    def predict(self, X) -> np.ndarray:
        return np.array([e.as_probability().mean for e in self.estimates(X)])


class TailRateRegressor(RegressorMixin, BaseEstimator):
    """Fit ``p(x) = exp(c) x**(-power) exp(-rate x)`` to positive tail values."""

    def fit(self, X, y):
        X, y = check_X_y(np.asarray(X).reshape(-1, 1) if np.ndim(X) == 1 else X, y, dtype=np.float64)
        self.fit_ = fit_rate(zip(X[:, 0], y))
        self.exp_rate_ = self.fit_.exp_rate
        self.poly_power_ = self.fit_.poly_power
        self.intercept_ = self.fit_.intercept
        self.n_features_in_ = 1
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "fit_")
        x = check_array(np.asarray(X).reshape(-1, 1) if np.ndim(X) == 1 else X, dtype=np.float64)[:, 0]
        return np.exp(self.intercept_ - self.exp_rate_ * x - self.poly_power_ * np.log(x))
