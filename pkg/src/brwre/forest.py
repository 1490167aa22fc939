"""Direct simulation of the branching random walk and its martingales."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._packing import pack_env, pack_step
from .environment import EnvSequence, assoc_walk
from .errors import Inconclusive, TraceUnavailable, TruncationWarning
from .steps import StepLaw, lambda_s


@dataclass(frozen=True)
class Caps:
    max_gen: int = 500
    max_particles: int = 10**7


@dataclass
class Trace:
    """Positions of every particle, generation by generation.

    ``ancestor_max[i]`` is the highest position among the strict ancestors
    of particle ``i`` (very negative for the root).
    """

    positions: np.ndarray
    ancestor_max: np.ndarray
    gen_start: np.ndarray
    S: np.ndarray

    def generation(self, n: int) -> np.ndarray:
        return self.positions[self.gen_start[n] : self.gen_start[n + 1]]

    def generation_of(self) -> np.ndarray:
        counts = np.diff(self.gen_start)
        return np.repeat(np.arange(len(counts)), counts)


@dataclass
class TreeStats:
    max_disp: int
    max_disp_by_gen: list
    pop_by_gen: list
    extinct_at: int | None
    truncated: bool
    particles_total: int
    trace: Trace | None = field(default=None, repr=False)

    @property
    def generations(self) -> int:
        """Last generation that was simulated."""
        return len(self.pop_by_gen) - 1


def simulate_tree(seq: EnvSequence, step: StepLaw, caps: Caps = Caps(), rng=None,
                  retain_trace: bool = False) -> TreeStats:
    """Simulate one tree in the environment ``seq`` started by a particle at 0."""
    rng = np.random.default_rng() if rng is None else rng
    seq.extend(1, caps.max_gen)
    states = seq.states(1, caps.max_gen)
    env = pack_env(seq.model)
    st_vals, st_probs = pack_step(step)
    status, ext, g, pop, gmax, pos, pmax, gstart = K.simulate_tree(
        rng, states, False, env.weights, len(env.weights), env.off_vals, env.off_probs, env.off_n,
        st_vals, st_probs, caps.max_gen, caps.max_particles, 0, retain_trace)
    alive = int(g) if ext < 0 else int(ext) - 1
    pop_list = [int(v) for v in pop[: g + 1]]
    by_gen = [0] + [int(v) for v in gmax[1 : alive + 1]]
    trace = None
    if retain_trace:
        trace = Trace(positions=pos, ancestor_max=pmax, gen_start=gstart[: g + 2].copy(),
                      S=assoc_walk(seq, 0, int(g)))
    return TreeStats(
        max_disp=max(by_gen), max_disp_by_gen=by_gen, pop_by_gen=pop_list,
        extinct_at=int(ext) if ext >= 0 else None, truncated=status != K.OK,
        particles_total=int(pop[: g + 1].sum()), trace=trace,
    )


def _need_trace(stats: TreeStats) -> Trace:
    if stats.trace is None:
        raise TraceUnavailable("positions were not retained; rerun with retain_trace=True")
    return stats.trace


def additive_martingale(stats: TreeStats, step: StepLaw, lam: float, n: int) -> float:
    """Sum over generation ``n`` of ``exp(lam*V - n*Lambda_s(lam) - S_n)``."""
    tr = _need_trace(stats)
    if n == 0:
        return 1.0
    if n > stats.generations:
        if stats.extinct_at is not None:
            return 0.0
        raise TraceUnavailable(f"generation {n} was not simulated")
    v = tr.generation(n)
    if len(v) == 0:
        return 0.0
    return float(np.exp(lam * v - n * lambda_s(step, lam) - tr.S[n]).sum())


def optional_line_weight(stats: TreeStats, step: StepLaw, lam: float, x: int) -> float:
    """Weight of the first-crossing line of level ``x``.

    By skip-freeness every particle on the line sits exactly at ``x``. On a
    truncated tree the value is a lower bound and a warning is issued.
    """
    tr = _need_trace(stats)
    if x <= 0:
        return 1.0
    on_line = (tr.positions >= x) & (tr.ancestor_max < x)
    if stats.truncated:
        warnings.warn("tree was truncated: optional-line weight is a lower bound", TruncationWarning, stacklevel=2)
    if not on_line.any():
        return 0.0
    gens = tr.generation_of()[on_line]
    ls = lambda_s(step, lam)
    return float(np.exp(lam * tr.positions[on_line] - gens * ls - tr.S[gens]).sum())


def naive_indicator(stats: TreeStats, x: int) -> int:
    if x <= 0 or stats.max_disp >= x:
        return 1
    if stats.truncated:
        raise Inconclusive(f"tree truncated with M={stats.max_disp} < x={x}")
    return 0
