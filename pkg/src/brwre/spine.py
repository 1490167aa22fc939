"""Spine constructions and the coupled pair ``(R_x, B_x)``.

``P(M >= x) = E[exp(R_x) B_x]`` where ``R_x`` is a random walk indexed by
the level and ``B_x`` a correction in ``(0, 1]`` collecting the weight of
every particle that reaches the level off the spine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._packing import pack_env, pack_step
from .asymptotics import alpha, lambda_rho, lambda_zero
from .environment import EnvModel, EnvSequence, assoc_walk, tilt_env
from .errors import AlphaTooSmall, DomainError, RunawayError
from .steps import StepLaw, lambda_s, tilt_step

EXCURSION_CAP = 10**7
MEASURES = ("forward_quenched", "annealed_base", "tilted_rho1", "tilted_rho")
# Offsets keep the two halves of a run's environment on unrelated streams.
_ENV_STREAM = 0x5EED_E1F0


@dataclass(frozen=True)
class SubtreeCaps:
    """Caps for the side subtrees.

    ``max_count`` bounds the number of live particles; subtrees are simulated
    as counts per level, so it guards integer range rather than memory.
    """

    max_gen: int = 400
    max_count: int = 10**15


@dataclass(frozen=True)
class Excursion:
    steps: np.ndarray
    length: int


def _tilt_arrays(step: StepLaw, lam: float):
    vals, _ = pack_step(step)
    return vals, np.ascontiguousarray(tilt_step(step, lam).probs)


def sample_excursion(step: StepLaw, lam: float, rng, cap: int = EXCURSION_CAP) -> Excursion:
    """Reversed, recentred excursion of the ``lam``-tilted walk up to level +1."""
    if not lam > 0:
        raise DomainError("excursions need lam > 0")
    vals, tp = _tilt_arrays(step, lam)
    th, buf = K.tilted_excursion(rng, tp, vals, cap, np.zeros(64, dtype=np.int64))
    if th < 0:
        raise RunawayError(f"excursion longer than {cap} steps")
    eps = buf[th::-1] - 1
    return Excursion(steps=eps, length=int(th))


def build_trajectory(excursions, x: int) -> tuple[np.ndarray, int]:
    """Path over indices ``-T_x..0`` (``path[i]`` is the level at index ``i - T_x``)."""
    if len(excursions) < x:
        raise DomainError(f"need {x} excursions, got {len(excursions)}")
    pieces = [np.zeros(1, dtype=np.int64)]
    for m, exc in enumerate(excursions[:x], start=1):
        pieces.append(exc.steps[1:] - (m - 1))
    Y = np.concatenate(pieces)
    return Y[::-1].copy(), len(Y) - 1


def sample_trajectory_lengths(step: StepLaw, lam: float, x: int, n: int, rng,
                              cap: int = EXCURSION_CAP) -> np.ndarray:
    """``n`` draws of ``T_x`` built from ``x`` concatenated excursions."""
    if not lam > 0:
        raise DomainError("excursions need lam > 0")
    vals, tp = _tilt_arrays(step, lam)
    out = np.empty(n, dtype=np.int64)
    K.excursion_lengths(rng, n, int(x), tp, vals, cap, out)
    if (out < 0).any():
        raise RunawayError(f"excursion longer than {cap} steps")
    return out


def sample_passage_times(step: StepLaw, lam: float, x: int, n: int, rng, cap: int = EXCURSION_CAP) -> np.ndarray:
    """``n`` first passage times of level ``x`` by the ``lam``-tilted walk started at 0."""
    if not lam > 0:
        raise DomainError("passage times need lam > 0")
    vals, tp = _tilt_arrays(step, lam)
    out = np.empty(n, dtype=np.int64)
    K.passage_times(rng, n, int(x), tp, vals, cap, out)
    if (out < 0).any():
        raise RunawayError(f"walk did not reach {x} within {cap} steps")
    return out


def _phi_window(seq: EnvSequence, k: int, max_gen: int):
    """Environment slots ``k..k+max_gen`` with the walk re-anchored at ``k``."""
    seq.extend(k + 1, k + max_gen)
    env = np.empty(max_gen + 1, dtype=np.int64)
    env[0] = -1
    env[1:] = seq.states(k + 1, k + max_gen)
    S = np.concatenate([[0.0], np.cumsum(seq.model.logs[env[1:]])])
    return env, S


def _subtree_log_phi(rng, packed, st_vals, st_probs, env, S, y_k, lam, lam_s, caps):
    span = len(env)
    ymin = y_k + (span + 1) * int(st_vals[0]) - 1
    A, status, _ = K.absorb_counts(
        rng, 0, np.array([0], dtype=np.int64), np.array([y_k], dtype=np.int64), span, env, S, span,
        False, packed.weights, len(packed.weights), packed.logm,
        packed.off_vals, packed.off_probs, packed.off_n, packed.sb_vals, packed.sb_probs, packed.sb_n,
        st_vals, st_probs, ymin, caps.max_count)
    return K.log_absorbed_weight(A, 0, S, lam_s) - lam * y_k, status != K.OK


def sample_phi_subtree(seq: EnvSequence, step: StepLaw, lam: float, k: int, y_k: int,
                       caps: SubtreeCaps = SubtreeCaps(), rng=None) -> tuple[float, bool]:
    """Absorbed weight at level 0 of the side subtree rooted at ``(k, y_k)``.

    The root leaves ``D - 1`` children with ``D`` size-biased from
    ``F_{k+1}``; a truncated value is a lower bound.
    """
    if y_k >= 0:
        raise DomainError("subtree roots must sit below level 0")
    rng = np.random.default_rng() if rng is None else rng
    env, S = _phi_window(seq, k, caps.max_gen)
    st_vals, st_probs = pack_step(step)
    lphi, trunc = _subtree_log_phi(rng, pack_env(seq.model), st_vals, st_probs, env, S, int(y_k), lam,
                                   lambda_s(step, lam), caps)
    return float(math.exp(lphi)), bool(trunc)


def sample_phi_batch(seq: EnvSequence, step: StepLaw, lam: float, k: int, y_k: int, n: int,
                     caps: SubtreeCaps = SubtreeCaps(), rng=None) -> tuple[np.ndarray, int]:
    """``n`` independent draws of the subtree weight for one root; returns values and truncation count."""
    if y_k >= 0:
        raise DomainError("subtree roots must sit below level 0")
    rng = np.random.default_rng() if rng is None else rng
    env, S = _phi_window(seq, k, caps.max_gen)
    st_vals, st_probs = pack_step(step)
    packed = pack_env(seq.model)
    ls = lambda_s(step, lam)
    out = np.empty(n)
    n_trunc = 0
    for i in range(n):
        lphi, trunc = _subtree_log_phi(rng, packed, st_vals, st_probs, env, S, int(y_k), lam, ls, caps)
        out[i] = math.exp(lphi)
        n_trunc += trunc
    return out, n_trunc


@dataclass
class CouplingRun:
    """One sample of ``(R_x, B_x)`` with everything needed to recompute it.

    Arrays indexed by ``i`` refer to time ``i - T_x``: ``path`` and ``J``
    cover ``-T_x..0``, ``phi_values`` covers ``-T_x..-1``. ``env_states`` and
    ``S`` cover ``-T_x..window_hi`` (slot 0 carries no state).
    """

    x: int
    measure_tag: str
    lambda_used: float
    T_x: int
    R_x: float
    B_x: float
    phi_values: np.ndarray
    truncated_subtrees: int
    seed: int
    rho: float | None = None
    path: np.ndarray = field(default=None, repr=False)
    env_states: np.ndarray = field(default=None, repr=False)
    S: np.ndarray = field(default=None, repr=False)
    J: np.ndarray = field(default=None, repr=False)

    def recompute_B(self) -> float:
        terms = self.J[:-1] + np.log(np.where(self.phi_values > 0, self.phi_values, 1.0))
        terms = terms[self.phi_values > 0]
        if terms.size == 0:
            return 1.0
        return float(math.exp(-np.logaddexp(0.0, np.logaddexp.reduce(terms))))

    def weight(self) -> float:
        """The unbiased summand for ``P(M >= x)`` under the measure of the run's tag."""
        return float(math.exp(self.R_x) * self.B_x)


def resolve_lambda(model: EnvModel, step: StepLaw, measure_tag: str, rho: float | None = None,
                   lam: float | None = None) -> tuple[float, float | None]:
    """Tilt parameter (and environment exponent) used by each measure."""
    if measure_tag not in MEASURES:
        raise DomainError(f"unknown measure {measure_tag!r}")
    if measure_tag == "forward_quenched":
        return (lambda_zero(model, step) if lam is None else float(lam)), None
    a_ = alpha(model)
    if measure_tag == "annealed_base":
        if lam is not None:
            return float(lam), None
        if a_ < 1:
            raise AlphaTooSmall(f"lambda_1 needs alpha >= 1, alpha={a_:.6g}")
        return lambda_rho(model, step, 1.0, a_), None
    if measure_tag == "tilted_rho1":
        if a_ <= 1:
            raise AlphaTooSmall(f"tilted measure at rho=1 needs alpha > 1, alpha={a_:.6g}")
        return lambda_rho(model, step, 1.0, a_), 1.0
    if rho is None:
        raise DomainError("tilted_rho needs rho")
    return lambda_rho(model, step, rho, a_), float(rho)


def sample_coupling_run(model: EnvModel, step: StepLaw, x: int, measure_tag: str, rho: float | None = None,
                        caps: SubtreeCaps = SubtreeCaps(), seed: int = 0, lam: float | None = None,
                        seq: EnvSequence | None = None) -> CouplingRun:
    """Sample one coupling run, keeping the path, environment and every subtree weight.

    ``forward_quenched`` follows the spine forward in the fixed environment
    ``seq`` (built from ``seed`` when omitted); the other tags build the path
    backward from excursions with the environment on ``(-T_x, 0]`` drawn from
    the base or tilted model and the positive indices from the base model.
    """
    if x < 1:
        raise DomainError("x must be a positive integer")
    lam, env_rho = resolve_lambda(model, step, measure_tag, rho, lam)
    if not lam > 0:
        raise DomainError("the spine needs lam > 0")
    rng = np.random.default_rng(seed)
    ls = lambda_s(step, lam)
    vals, tp = _tilt_arrays(step, lam)
    if measure_tag == "forward_quenched":
        seq = EnvSequence(model, seed ^ _ENV_STREAM) if seq is None else seq
        V = K.forward_tilted_path(rng, x, tp, vals, EXCURSION_CAP)
        if V.shape[0] == 0:
            raise RunawayError("spine did not reach x within the step cap")
        T = len(V) - 1
        path = V - x
        seq.extend(1, T + caps.max_gen)
        fwd_states = seq.states(1, T + caps.max_gen)
        env_states = np.concatenate([[-1], fwd_states])
        S_fwd = assoc_walk(seq, 0, T + caps.max_gen)
        S = S_fwd - S_fwd[T]
    else:
        excursions = [sample_excursion(step, lam, rng) for _ in range(x)]
        path, T = build_trajectory(excursions, x)
        neg_model = model if env_rho is None else tilt_env(model, env_rho)
        neg = EnvSequence(neg_model, seed ^ _ENV_STREAM, -T + 1, 0)
        pos = EnvSequence(model, seed ^ _ENV_STREAM, 1, caps.max_gen)
        env_states = np.concatenate([[-1], neg.states(), pos.states()])
        logm = model.logs[env_states[1:]]
        S = np.empty(len(env_states))
        S[T] = 0.0
        S[:T] = -np.cumsum(logm[:T][::-1])[::-1]
        S[T + 1 :] = np.cumsum(logm[T:])
    packed = pack_env(model)
    st_vals, st_probs = pack_step(step)
    times = np.arange(-T, 1)
    J = -S[: T + 1] - times * ls + lam * path
    phi = np.zeros(T)
    n_trunc = 0
    for i in range(T):
        env = env_states[i : i + caps.max_gen + 1].copy()
        env[0] = -1
        Sk = S[i : i + caps.max_gen + 1] - S[i]
        lphi, trunc = _subtree_log_phi(rng, packed, st_vals, st_probs, env, Sk, int(path[i]), lam, ls, caps)
        phi[i] = math.exp(lphi)
        n_trunc += trunc
    run = CouplingRun(
        x=x, measure_tag=measure_tag, lambda_used=float(lam), T_x=int(T), R_x=float(J[0]), B_x=1.0,
        phi_values=phi, truncated_subtrees=int(n_trunc), seed=int(seed), rho=env_rho,
        path=path, env_states=env_states, S=S, J=J,
    )
    run.B_x = run.recompute_B()
    return run
