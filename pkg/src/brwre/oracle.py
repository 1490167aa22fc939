"""Exact hitting probabilities by backward recursion over a finite horizon."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .environment import EnvModel, EnvSequence, assoc_walk
from .errors import CapacityError, DomainError
from .steps import DP_CELL_BUDGET, StepLaw

ENUM_SEQ_BUDGET = 1 << 22
ENUM_CHUNK = 1 << 15


@dataclass(frozen=True)
class OracleResult:
    """``value`` is ``P(M >= x)`` restricted to generations ``<= horizon``.

    The true probability lies in ``[value, value + error_bound]``.
    ``survival_bound`` is the sharper certificate ``P(Z_T > 0)``; ``stderr``
    is nonzero only for sampled environments.
    """

    value: float
    horizon: int
    error_bound: float
    grid: tuple
    survival_bound: float = 1.0
    stderr: float = 0.0


def _escape_tables(model: EnvModel):
    """Per state, the map ``v -> 1 - GF(1 - v)`` evaluated without cancellation."""
    tables = []
    for law in model.laws:
        keep = law.counts > 0
        tables.append((law.counts[keep].astype(float), law.probs[keep]))
    return tables


def _escape(tables, states: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row ``r`` of ``v`` is pushed through the law of state ``states[r]``."""
    out = np.zeros_like(v)
    with np.errstate(divide="ignore"):
        lv = np.log1p(-np.minimum(v, 1.0))
    for s, (c, p) in enumerate(tables):
        rows = states == s
        if not rows.any():
            continue
        sub = lv[rows]
        out[rows] = (-np.expm1(sub[..., None] * c) * p).sum(axis=-1)
    return out


def _hit_batch(model: EnvModel, step: StepLaw, x: int, states: np.ndarray):
    """Backward recursion for a batch of sequences; ``states[r, k-1]`` is the state of ``F_k``.

    Returns ``(value, survival)`` arrays.
    """
    n_seq, T = states.shape
    tables = _escape_tables(model)
    # column j of u is level x - T + j; levels below x - (T - k) stay at 0
    u = np.zeros((n_seq, T + 1))
    lo_pad = abs(step.min_step) + 1
    u_pad = np.zeros((n_seq, lo_pad + T + 2))
    surv = np.ones(n_seq)
    for k in range(T - 1, -1, -1):
        u_pad[:, lo_pad : lo_pad + T] = u[:, :T]
        u_pad[:, lo_pad + T :] = 1.0
        first = T - (T - k)
        cols = np.arange(first, T)
        v = np.zeros((n_seq, len(cols)))
        for h, p in zip(step.values, step.probs):
            v += p * u_pad[:, lo_pad + cols + h]
        new = np.zeros((n_seq, T + 1))
        new[:, first:T] = _escape(tables, states[:, k], v)
        u = new
        surv = _escape(tables, states[:, k], surv[:, None])[:, 0]
    value = u[:, T - x] if x <= T else np.zeros(n_seq)
    return value, surv


def _check_cells(cells: int, budget: int):
    if cells > budget:
        raise CapacityError(f"recursion needs {cells} cells, budget {budget}")


def quenched_hit_prob(seq: EnvSequence, step: StepLaw, x: int, T: int,
                      cell_budget: int = DP_CELL_BUDGET) -> OracleResult:
    if x < 1:
        raise DomainError("x must be a positive integer")
    if T < 0:
        raise DomainError("horizon must be nonnegative")
    if T == 0:
        return OracleResult(value=0.0, horizon=0, error_bound=1.0, grid=(x, x), survival_bound=1.0)
    _check_cells(T * T, cell_budget)
    seq.extend(1, T)
    states = seq.states(1, T)[None, :]
    value, surv = _hit_batch(seq.model, step, x, states)
    S = assoc_walk(seq, 0, T)
    return OracleResult(
        value=float(value[0]), horizon=T, error_bound=float(np.exp(S.min())),
        grid=(x - T, x), survival_bound=float(surv[0]),
    )


def _min_walk(model: EnvModel, states: np.ndarray) -> np.ndarray:
    S = np.cumsum(model.logs[states], axis=1)
    return np.minimum(S.min(axis=1), 0.0)


def annealed_hit_prob_small(model: EnvModel, step: StepLaw, x: int, T: int, mode: str = "enumerate",
                            n_env: int | None = None, seed: int = 0,
                            cell_budget: int = DP_CELL_BUDGET) -> OracleResult:
    """Average of quenched values over environments.

    ``enumerate`` sums over every state sequence of length ``T`` and is exact;
    its ``error_bound`` is the probability-weighted mean of the per-sequence
    certificates. ``average`` uses ``n_env`` sampled sequences and adds the
    Monte Carlo standard error to the bound.
    """
    if x < 1:
        raise DomainError("x must be a positive integer")
    if T == 0:
        return OracleResult(value=0.0, horizon=0, error_bound=1.0, grid=(x, x))
    n_states = model.n_states
    if mode == "enumerate":
        n_seq = n_states**T
        if n_seq > ENUM_SEQ_BUDGET:
            raise CapacityError(f"{n_states}^{T} sequences exceed enumeration budget {ENUM_SEQ_BUDGET}")
        _check_cells(n_seq * T * T, cell_budget * 64)
        value = bound = surv = 0.0
        logw = np.log(model.weights)
        it = itertools.product(range(n_states), repeat=T)
        while True:
            chunk = np.array(list(itertools.islice(it, ENUM_CHUNK)), dtype=np.int64)
            if chunk.size == 0:
                break
            p = np.exp(logw[chunk].sum(axis=1))
            v, s = _hit_batch(model, step, x, chunk)
            value += float(np.dot(p, v))
            surv += float(np.dot(p, s))
            bound += float(np.dot(p, np.exp(_min_walk(model, chunk))))
        return OracleResult(value=value, horizon=T, error_bound=bound, grid=(x - T, x), survival_bound=surv)
    if mode == "average":
        if not n_env or n_env < 2:
            raise DomainError("average mode needs n_env >= 2")
        _check_cells(T * T, cell_budget)
        rng = np.random.default_rng(seed)
        states = np.searchsorted(model.cum_weights, rng.random((n_env, T)), side="right").astype(np.int64)
        vals, survs, bounds = [], [], []
        for lo in range(0, n_env, ENUM_CHUNK):
            sub = states[lo : lo + ENUM_CHUNK]
            v, s = _hit_batch(model, step, x, sub)
            vals.append(v)
            survs.append(s)
            bounds.append(np.exp(_min_walk(model, sub)))
        v = np.concatenate(vals)
        se = float(v.std(ddof=1) / np.sqrt(n_env))
        return OracleResult(
            value=float(v.mean()), horizon=T, error_bound=float(np.concatenate(bounds).mean()) + se,
            grid=(x - T, x), survival_bound=float(np.concatenate(survs).mean()) + se, stderr=se,
        )
    raise DomainError(f"unknown mode {mode!r}")


def oracle_curve(seq: EnvSequence, step: StepLaw, xs, rel_bound: float = 1e-3,
                 cell_budget: int = DP_CELL_BUDGET) -> list:
    """Quenched values for each level, doubling the horizon until ``error_bound < rel_bound * value``."""
    out = []
    for x in xs:
        T = max(4 * int(x), 20)
        while True:
            r = quenched_hit_prob(seq, step, int(x), T, cell_budget)
            if r.value > 0 and r.error_bound < rel_bound * r.value:
                break
            T *= 2
        out.append((int(x), r))
    return out
