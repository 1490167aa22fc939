"""I.i.d. random environments built from finitely many offspring states."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

from .errors import BadWeights, DomainError, NotSubcritical, OutOfWindow
from .offspring import OffspringLaw, make_offspring_law

WEIGHT_TOL = 1e-9

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def counter_uniforms(seed: int, index) -> np.ndarray:
    """Uniforms in [0, 1) that are a pure function of ``(seed, index)``."""
    idx = np.atleast_1d(np.asarray(index, dtype=np.int64)).view(np.uint64)
    key = _mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    z = _mix64(key + (idx + np.uint64(1)) * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True, eq=False)
class EnvModel:
    """Finite mixture ``sum_i w_i delta_{F_i}`` over offspring laws.

    ``tilt`` records the exponent when the model was obtained from
    :func:`tilt_env`; such models skip the subcriticality check.
    """

    weights: np.ndarray
    laws: tuple
    tilt: float | None = None

    means: np.ndarray = field(init=False)
    logs: np.ndarray = field(init=False)
    etas: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "means", np.array([law.mean_ for law in self.laws]))
        object.__setattr__(self, "logs", np.log(self.means))
        object.__setattr__(self, "etas", np.array([law.eta for law in self.laws]))

    @property
    def n_states(self) -> int:
        return len(self.laws)

    @property
    def a(self) -> float:
        """Mean of ``X = log(mean offspring)``."""
        return float(np.dot(self.weights, self.logs))

    @property
    def var_x(self) -> float:
        return float(np.dot(self.weights, (self.logs - self.a) ** 2))

    @property
    def cum_weights(self) -> np.ndarray:
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        return cum

    def to_json(self) -> dict:
        return {
            "states": [
                {"weight": float(w), "pmf": law.to_json()["pmf"]}
                for w, law in zip(self.weights, self.laws)
            ]
        }

    def __repr__(self) -> str:
        return f"EnvModel(weights={np.round(self.weights, 6).tolist()}, means={np.round(self.means, 6).tolist()})"


def make_env_model(states: Iterable[tuple[float, OffspringLaw]], _check_subcritical: bool = True) -> EnvModel:
    states = list(states)
    if not states:
        raise BadWeights("no environment states")
    weights = np.array([float(w) for w, _ in states])
    if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
        raise BadWeights("state weights must be positive")
    if abs(weights.sum() - 1.0) > WEIGHT_TOL:
        raise BadWeights(f"state weights sum to {weights.sum()!r}")
    weights = weights / weights.sum()
    model = EnvModel(weights=weights, laws=tuple(law for _, law in states))
    if _check_subcritical and not model.a < 0:
        raise NotSubcritical(f"E[log mean] = {model.a} is not negative")
    return model


def lambda_e(model: EnvModel, rho: float) -> float:
    """``log E[exp(rho X)]`` in closed form."""
    z = rho * model.logs
    if np.max(np.abs(z)) < 0.5:
        return float(np.log1p(np.dot(model.weights, np.expm1(z))))
    return float(logsumexp(z, b=model.weights))


def lambda_e_prime(model: EnvModel, rho: float) -> float:
    w = _tilted_weights(model, rho)
    return float(np.dot(w, model.logs))


def lambda_e_second(model: EnvModel, rho: float) -> float:
    w = _tilted_weights(model, rho)
    mean = np.dot(w, model.logs)
    return float(np.dot(w, (model.logs - mean) ** 2))


def _tilted_weights(model: EnvModel, rho: float) -> np.ndarray:
    z = np.log(model.weights) + rho * model.logs
    w = np.exp(z - z.max())
    return w / w.sum()


def tilt_env(model: EnvModel, rho: float) -> EnvModel:
    """State weights ``w_i m_i**rho`` renormalized; used on nonpositive indices."""
    if not rho > 0:
        raise DomainError(f"tilt needs rho > 0, got {rho}")
    return EnvModel(weights=_tilted_weights(model, rho), laws=model.laws, tilt=float(rho))


class EnvSequence:
    """Two-sided realization of the environment, generated per index.

    The state at absolute index ``k`` depends only on ``(seed, k)``, so
    windows can grow in either direction and always agree on their overlap.
    ``offset`` implements the shift ``(T_k xi)(l) = xi(k + l)``.
    """

    def __init__(self, model: EnvModel, seed: int, lo: int = 0, hi: int = 0, offset: int = 0):
        self.model = model
        self.seed = int(seed)
        self.offset = int(offset)
        self._lock = threading.Lock()
        self.lo, self.hi = int(lo), int(hi)
        self._states = self._generate(self.lo, self.hi)

    @property
    def origin_index(self) -> int:
        return self.offset

    def _generate(self, lo: int, hi: int) -> np.ndarray:
        if hi < lo:
            return np.zeros(0, dtype=np.int64)
        u = counter_uniforms(self.seed, np.arange(lo, hi + 1) + self.offset)
        return np.searchsorted(self.model.cum_weights, u, side="right").astype(np.int64)

    def extend(self, lo: int, hi: int) -> None:
        with self._lock:
            new_lo, new_hi = min(lo, self.lo), max(hi, self.hi)
            if (new_lo, new_hi) == (self.lo, self.hi):
                return
            left = self._generate(new_lo, self.lo - 1)
            right = self._generate(self.hi + 1, new_hi)
            self._states = np.concatenate([left, self._states, right])
            self.lo, self.hi = new_lo, new_hi

    def covers(self, lo: int, hi: int) -> bool:
        return self.lo <= lo and hi <= self.hi

    def states(self, lo: int | None = None, hi: int | None = None) -> np.ndarray:
        lo = self.lo if lo is None else lo
        hi = self.hi if hi is None else hi
        if not self.covers(lo, hi):
            raise OutOfWindow(f"[{lo}, {hi}] not inside window [{self.lo}, {self.hi}]")
        return self._states[lo - self.lo : hi - self.lo + 1].copy()

    def state(self, k: int) -> int:
        return int(self.states(k, k)[0])

    def law(self, k: int) -> OffspringLaw:
        return self.model.laws[self.state(k)]

    def log_means(self, lo: int, hi: int) -> np.ndarray:
        return self.model.logs[self.states(lo, hi)]

    def shifted(self, k: int) -> "EnvSequence":
        return EnvSequence(self.model, self.seed, self.lo - k, self.hi - k, offset=self.offset + k)

    def cut(self, k: int) -> "EnvSequence":
        """Positive-index view ``(F_{k+1}, F_{k+2}, ...)`` re-indexed from 1."""
        view = self.shifted(k)
        if view.lo < 1:
            view = EnvSequence(self.model, self.seed, 1, max(view.hi, 1), offset=view.offset)
        return view

    def __repr__(self) -> str:
        return f"EnvSequence(seed={self.seed}, window=[{self.lo}, {self.hi}], offset={self.offset})"


def sample_env_seq(model: EnvModel, lo: int, hi: int, seed: int) -> EnvSequence:
    if hi < lo:
        raise DomainError("need lo <= hi")
    return EnvSequence(model, seed, lo, hi)


def assoc_walk(seq: EnvSequence, lo: int, hi: int) -> np.ndarray:
    """Associated walk ``S_k`` for ``k = lo..hi`` anchored at ``S_0 = 0``."""
    need_lo, need_hi = min(lo, 0) + 1, max(hi, 0)
    if need_lo <= need_hi and not seq.covers(need_lo, need_hi):
        raise OutOfWindow(f"walk on [{lo}, {hi}] needs X on [{need_lo}, {need_hi}]")
    ks = np.arange(lo, hi + 1)
    out = np.zeros(len(ks))
    if hi > 0:
        pos = np.concatenate([[0.0], np.cumsum(seq.log_means(1, hi))])
        mask = ks >= 0
        out[mask] = pos[ks[mask]]
    if lo < 0:
        xs = seq.log_means(lo + 1, 0)
        # S_k = -(X_{k+1} + ... + X_0)
        neg = -np.cumsum(xs[::-1])[::-1]
        mask = ks < 0
        out[mask] = neg[ks[mask] - lo]
    return out


def env_model_from_json(obj: dict) -> EnvModel:
    return make_env_model(
        (float(s["weight"]), make_offspring_law(s["pmf"])) for s in obj["states"]
    )
