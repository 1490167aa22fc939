"""Monte Carlo estimates of ``P(M >= x)``, rate fits and the square-root diagnostic.

Replicates are generated in fixed-size blocks. Block ``b`` of a scheme draws
from a generator seeded by ``(seed, scheme, x, b)``, and block results are
concatenated in block order, so an estimate depends on ``(seed, n)`` only
and never on the number of workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from . import _kernels as K
from ._packing import pack_env, pack_step
from .asymptotics import alpha, classify, lambda_rho
from .environment import EnvModel, EnvSequence, assoc_walk, tilt_env
from .errors import (
    AllTruncated,
    AlphaTooSmall,
    DegenerateFit,
    DomainError,
    MixedTargets,
    NotClassIII,
    RunawayError,
)
from .forest import Caps
from .spine import EXCURSION_CAP, SubtreeCaps
from .steps import StepLaw, lambda_s, lambda_s_derivs, tilt_step

BLOCK = 2000
Z95 = 1.96
SCHEMES = {
    "naive": 1, "spine": 2, "class1": 3, "class3": 4, "quenched_spine": 5,
    "r_walk": 6, "gaussian_walk": 7,
}


def block_rng(seed: int, scheme: str, x: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), SCHEMES[scheme], int(x), int(block)]))


def _blocks(n: int, first_block: int):
    out = []
    b = first_block
    while n > 0:
        out.append((b, min(BLOCK, n)))
        n -= BLOCK
        b += 1
    return out


def _run(fn, specs, workers: int):
    if workers <= 1 or len(specs) <= 1:
        return [fn(*s) for s in specs]
    return Parallel(n_jobs=workers, backend="loky")(delayed(fn)(*s) for s in specs)


# ---------------------------------------------------------------------------
# moments and estimates


@dataclass(frozen=True)
class Moments:
    n: int
    mean: float
    m2: float

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls(0, 0.0, 0.0)
        mu = float(values.mean())
        return cls(int(values.size), mu, float(np.sum((values - mu) ** 2)))

    @classmethod
    def of_logs(cls, logs: np.ndarray) -> "Moments":
        """Moments of ``exp(logs)`` computed after factoring out the largest term."""
        logs = np.asarray(logs, dtype=float)
        if logs.size == 0 or not np.isfinite(logs).any():
            return cls.of(np.exp(logs))
        shift = float(logs.max())
        m = cls.of(np.exp(logs - shift))
        scale = math.exp(shift)
        return cls(m.n, m.mean * scale, m.m2 * scale * scale)

    def merge(self, other: "Moments") -> "Moments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2)

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.n - 1) / self.n)


@dataclass
class Estimate:
    """Sample mean of an unbiased summand.

    For importance-sampling schemes the target is ``exp(log_scale) * P(M >= x)``;
    :meth:`as_probability` undoes the rescaling.
    """

    x: int
    scheme: str
    n: int
    mean: float
    stderr: float
    ci95: tuple
    truncated_fraction: float
    seed: int
    log_scale: float = 0.0
    m2: float = field(default=0.0, repr=False)
    zero_hits: bool = False
    n_truncated: int = 0
    lam: float | None = None
    rho: float | None = None

    @classmethod
    def from_moments(cls, x, scheme, mom: Moments, seed, n_truncated=0, n_total=None, **kw) -> "Estimate":
        se = mom.stderr
        n_total = mom.n if n_total is None else n_total
        return cls(
            x=int(x), scheme=scheme, n=mom.n, mean=mom.mean, stderr=se,
            ci95=(mom.mean - Z95 * se, mom.mean + Z95 * se),
            truncated_fraction=n_truncated / n_total if n_total else 0.0, seed=int(seed),
            m2=mom.m2, n_truncated=int(n_truncated), **kw,
        )

    @property
    def moments(self) -> Moments:
        return Moments(self.n, self.mean, self.m2)

    def as_probability(self) -> "Estimate":
        if self.log_scale == 0.0:
            return self
        f = math.exp(-self.log_scale)
        return replace(self, mean=self.mean * f, stderr=self.stderr * f, ci95=(self.ci95[0] * f, self.ci95[1] * f),
                       m2=self.m2 * f * f, log_scale=0.0)

    def rescaled(self, log_factor: float) -> "Estimate":
        """Multiply the estimate by ``exp(log_factor)``."""
        f = math.exp(log_factor)
        return replace(self, mean=self.mean * f, stderr=self.stderr * f, ci95=(self.ci95[0] * f, self.ci95[1] * f),
                       m2=self.m2 * f * f, log_scale=self.log_scale + log_factor)

    def to_row(self) -> dict:
        return {
            "x": self.x, "scheme": self.scheme, "n": self.n, "mean": self.mean, "stderr": self.stderr,
            "ci_lo": self.ci95[0], "ci_hi": self.ci95[1], "truncated_fraction": self.truncated_fraction,
            "seed": self.seed,
        }


def merge(estimates) -> Estimate:
    """Combine estimates of the same target from disjoint replicate streams."""
    estimates = list(estimates)
    if not estimates:
        raise DomainError("nothing to merge")
    first = estimates[0]
    for e in estimates[1:]:
        if (e.x, e.scheme) != (first.x, first.scheme) or not math.isclose(e.log_scale, first.log_scale, rel_tol=1e-12):
            raise MixedTargets(f"cannot merge ({e.x}, {e.scheme}) into ({first.x}, {first.scheme})")
    mom = Moments(0, 0.0, 0.0)
    for e in sorted(estimates, key=lambda e: (e.seed, e.n, e.mean)):
        mom = mom.merge(e.moments)
    n_trunc = sum(e.n_truncated for e in estimates)
    n_total = sum(e.n + (e.n_truncated if e.scheme == "naive" else 0) for e in estimates)
    out = Estimate.from_moments(first.x, first.scheme, mom, first.seed, n_trunc, n_total,
                                log_scale=first.log_scale, lam=first.lam, rho=first.rho)
    if first.scheme == "naive" and mom.mean == 0.0 and mom.n > 0:
        out.zero_hits = True
        out.ci95 = (0.0, 3.0 / mom.n)
    return out


# ---------------------------------------------------------------------------
# naive


def _naive_block(model, step, x, seed, block, n, states, caps):
    env = pack_env(model)
    st_vals, st_probs = pack_step(step)
    rng = block_rng(seed, "naive", x, block)
    out_m = np.empty(n, dtype=np.int64)
    out_ext = np.empty(n, dtype=np.int64)
    out_status = np.empty(n, dtype=np.int64)
    lazy = states is None
    fixed = np.zeros(caps.max_gen, dtype=np.int64) if lazy else states
    K.naive_batch(rng, n, x, fixed, lazy, env.weights, len(env.weights), env.off_vals, env.off_probs,
                  env.off_n, st_vals, st_probs, caps.max_gen, caps.max_particles, out_m, out_ext, out_status)
    return out_m, out_ext, out_status


def naive_samples(target, step: StepLaw, x: int, n: int, seed: int, caps: Caps = Caps(), workers: int = 1,
                  first_block: int = 0, stop_at_x: bool = True):
    """Per-replicate ``(M, extinct_at, status)``; ``extinct_at`` is -1 for trees still alive.

    With ``stop_at_x`` each tree stops as soon as it reaches ``x``.
    """
    if isinstance(target, EnvSequence):
        target.extend(1, caps.max_gen)
        model, states = target.model, target.states(1, caps.max_gen)
    else:
        model, states = target, None
    level = x if stop_at_x else 0
    parts = _run(_naive_block, [(model, step, level, seed, b, m, states, caps) for b, m in _blocks(n, first_block)],
                 workers)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def estimate_naive(target, step: StepLaw, x: int, n: int, seed: int, caps: Caps = Caps(), workers: int = 1,
                   first_block: int = 0) -> Estimate:
    """Fraction of independent trees reaching ``x``.

    ``target`` is an :class:`EnvModel` (fresh environment per tree) or an
    :class:`EnvSequence` (fixed environment).
    """
    if x <= 0:
        return Estimate.from_moments(x, "naive", Moments(n, 1.0, 0.0), seed)
    M, _, status = naive_samples(target, step, x, n, seed, caps, workers, first_block)
    hit = M >= x
    decided = hit | (status == K.OK)
    n_bad = int((~decided).sum())
    if not decided.any():
        raise AllTruncated(f"all {n} trees were truncated below x={x}")
    est = Estimate.from_moments(x, "naive", Moments.of(hit[decided].astype(float)), seed, n_bad, n)
    if not hit.any():
        est.zero_hits = True
        est.ci95 = (0.0, 3.0 / est.n)
    return est


# ---------------------------------------------------------------------------
# spine schemes


def _coupling_block(model, step, x, lam, neg_weights, scheme, seed, block, n, caps):
    env = pack_env(model)
    st_vals, st_probs = pack_step(step)
    tp = np.ascontiguousarray(tilt_step(step, lam).probs)
    rng = block_rng(seed, scheme, x, block)
    R, logden = np.empty(n), np.empty(n)
    T, status = np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64)
    K.coupling_batch(rng, n, x, lam, lambda_s(step, lam), st_vals, st_probs, tp, neg_weights, env.weights,
                     env.logm, env.off_vals, env.off_probs, env.off_n, env.sb_vals, env.sb_probs, env.sb_n,
                     caps.max_gen, caps.max_count, EXCURSION_CAP, R, logden, T, status)
    return R, logden, T, status


def coupling_samples(model: EnvModel, step: StepLaw, x: int, lam: float, n: int, seed: int, scheme: str,
                     env_rho: float | None = None, caps: SubtreeCaps = SubtreeCaps(), workers: int = 1,
                     first_block: int = 0):
    """Arrays ``(R_x, log(1/B_x), T_x, status)`` from the batched backward construction."""
    neg = model.weights if env_rho is None else tilt_env(model, env_rho).weights
    neg = np.ascontiguousarray(neg, dtype=float)
    parts = _run(_coupling_block, [(model, step, x, lam, neg, scheme, seed, b, m, caps)
                                   for b, m in _blocks(n, first_block)], workers)
    R, logden, T, status = (np.concatenate([p[i] for p in parts]) for i in range(4))
    if (status == K.RUNAWAY).any():
        raise RunawayError(f"{int((status == K.RUNAWAY).sum())} excursions exceeded {EXCURSION_CAP} steps")
    return R, logden, T, status


def _finish(x, scheme, logs, status, seed, **kw) -> Estimate:
    n_trunc = int((status != K.OK).sum())
    return Estimate.from_moments(x, scheme, Moments.of_logs(logs), seed, n_trunc, len(logs), **kw)


def estimate_spine(model: EnvModel, step: StepLaw, x: int, lam: float, n: int, seed: int,
                   caps: SubtreeCaps = SubtreeCaps(), workers: int = 1, first_block: int = 0) -> Estimate:
    """Mean of ``exp(R_x) B_x`` with the environment untilted; unbiased for every ``lam > 0``."""
    if not lam > 0:
        raise DomainError("lam must be positive")
    R, logden, _, status = coupling_samples(model, step, x, lam, n, seed, "spine", None, caps, workers, first_block)
    return _finish(x, "spine", R - logden, status, seed, lam=float(lam))


def estimate_class1(model: EnvModel, step: StepLaw, x: int, n: int, seed: int,
                    caps: SubtreeCaps = SubtreeCaps(), workers: int = 1, first_block: int = 0) -> Estimate:
    """Mean of ``B_x`` with the environment tilted at exponent 1.

    Estimates ``exp(lambda_1 x) P(M >= x)``.
    """
    a_ = alpha(model)
    if a_ <= 1:
        raise AlphaTooSmall(f"needs alpha > 1, got {a_:.6g}")
    lam = lambda_rho(model, step, 1.0, a_)
    R, logden, _, status = coupling_samples(model, step, x, lam, n, seed, "class1", 1.0, caps, workers, first_block)
    return _finish(x, "class1", -logden, status, seed, log_scale=lam * x, lam=lam, rho=1.0)


def estimate_class3(model: EnvModel, step: StepLaw, x: int, n: int, seed: int, rho: float | None = None,
                    caps: SubtreeCaps = SubtreeCaps(), workers: int = 1, first_block: int = 0) -> Estimate:
    """Mean of ``exp((1 - rho) R_x) B_x`` with the environment tilted at ``rho``.

    Estimates ``exp(rho lambda_rho x) P(M >= x)``. ``rho`` defaults to the
    zero-drift exponent of a third-class system.
    """
    if rho is None:
        report = classify(model, step, table_points=2)
        if report.class_label != "III":
            raise NotClassIII(f"system is class {report.class_label}")
        rho, lam = report.rho_star, report.lambda_rho_star
    else:
        lam = lambda_rho(model, step, rho)
    R, logden, _, status = coupling_samples(model, step, x, lam, n, seed, "class3", rho, caps, workers, first_block)
    return _finish(x, "class3", (1.0 - rho) * R - logden, status, seed, log_scale=rho * lam * x, lam=lam, rho=rho)


def _forward_block(model, step, x, lam, seed, block, n, states, S, caps):
    env = pack_env(model)
    st_vals, st_probs = pack_step(step)
    tp = np.ascontiguousarray(tilt_step(step, lam).probs)
    rng = block_rng(seed, "quenched_spine", x, block)
    R, logden = np.empty(n), np.empty(n)
    T, status = np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64)
    K.forward_batch(rng, n, x, lam, lambda_s(step, lam), st_vals, st_probs, tp, states, S, env.logm,
                    env.off_vals, env.off_probs, env.off_n, env.sb_vals, env.sb_probs, env.sb_n,
                    caps.max_gen, caps.max_count, EXCURSION_CAP, R, logden, T, status)
    return R, logden, T, status


def estimate_quenched_spine(seq: EnvSequence, step: StepLaw, x: int, lam: float, n: int, seed: int,
                            caps: SubtreeCaps = SubtreeCaps(), workers: int = 1, first_block: int = 0) -> Estimate:
    """Forward spine estimate of ``P_xi(M >= x)`` in the fixed environment ``seq``.

    Runs whose spine does not reach ``x`` inside the environment window are
    counted as truncated and contribute 0.
    """
    drift, var = lambda_s_derivs(step, lam)
    if not drift > 0:
        raise DomainError("lam must be positive")
    horizon = int(math.ceil(x / drift + 12.0 * math.sqrt(x * var / drift**3) + 50)) + caps.max_gen
    seq.extend(1, horizon)
    states = np.concatenate([[-1], seq.states(1, horizon)]).astype(np.int64)
    S = assoc_walk(seq, 0, horizon)
    parts = _run(_forward_block, [(seq.model, step, x, lam, seed, b, m, states, S, caps)
                                  for b, m in _blocks(n, first_block)], workers)
    R, logden, _, status = (np.concatenate([p[i] for p in parts]) for i in range(4))
    if (status == K.RUNAWAY).any():
        raise RunawayError("spine exceeded the step cap")
    logs = np.where(np.isnan(R), -np.inf, R - logden)
    return _finish(x, "quenched_spine", logs, status, seed, lam=float(lam))


# ---------------------------------------------------------------------------
# the level-indexed walk R


def _rwalk_block(model, step, x_max, lam, env_w, seed, block, n):
    env = pack_env(model)
    st_vals, _ = pack_step(step)
    tp = np.ascontiguousarray(tilt_step(step, lam).probs)
    rng = block_rng(seed, "r_walk", x_max, block)
    first, R1 = np.empty(n, dtype=np.int64), np.empty(n)
    K.rwalk_batch(rng, n, x_max, lam, lambda_s(step, lam), st_vals, tp, env_w, env.logm, EXCURSION_CAP, first, R1)
    return first, R1


def _gauss_block(x_max, seed, block, n):
    rng = block_rng(seed, "gaussian_walk", x_max, block)
    walk = np.cumsum(rng.standard_normal((n, x_max)), axis=1)
    up = walk > 0
    return np.where(up.any(axis=1), up.argmax(axis=1) + 1, x_max + 1), walk[:, 0]


def r_walk_samples(model: EnvModel, step: StepLaw, n: int, x_max: int, seed: int, rho: float = 1.0,
                   workers: int = 1):
    """First level at which ``R`` turns positive, and ``R_1``, under the tilt at exponent ``rho``."""
    lam = lambda_rho(model, step, rho)
    env_w = np.ascontiguousarray(tilt_env(model, rho).weights)
    parts = _run(_rwalk_block, [(model, step, x_max, lam, env_w, seed, b, m) for b, m in _blocks(n, 0)], workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def estimate_r_drift(model: EnvModel, step: StepLaw, n: int, seed: int, rho: float = 1.0, workers: int = 1) -> Estimate:
    """Mean increment of ``R`` under the environment tilted at ``rho``."""
    _, R1 = r_walk_samples(model, step, n, 1, seed, rho, workers)
    return Estimate.from_moments(1, "r_walk", Moments.of(R1), seed, rho=rho)


def diagnostic_sqrt_decay(model: EnvModel | None, step: StepLaw | None, n: int, x_max: int, seed: int,
                          rho: float = 1.0, mode: str = "model", workers: int = 1) -> list:
    """``(x, sqrt(x) * P(max_{j <= x} R_j <= 0))`` for ``x = 1..x_max``.

    ``mode="gaussian"`` replaces ``R`` by a walk with standard normal steps,
    whose value converges to ``1/sqrt(pi)``.
    """
    if mode == "gaussian":
        parts = _run(_gauss_block, [(x_max, seed, b, m) for b, m in _blocks(n, 0)], workers)
        first = np.concatenate([p[0] for p in parts])
    elif mode == "model":
        first, _ = r_walk_samples(model, step, n, x_max, seed, rho, workers)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    counts = np.bincount(np.minimum(first, x_max + 1), minlength=x_max + 2)
    # first > x  <=>  max_{j<=x} R_j <= 0
    stay = n - np.cumsum(counts)[1 : x_max + 1]
    xs = np.arange(1, x_max + 1)
    return [(int(x), float(math.sqrt(x) * s / n)) for x, s in zip(xs, stay)]


def plateau_ratios(curve, factor: int = 4, x_min: int = 1) -> list:
    """``value(factor * x) / value(x)`` for every ``x >= x_min`` with both points present."""
    table = dict(curve)
    return [(x, table[factor * x] / table[x]) for x in sorted(table)
            if x >= x_min and factor * x in table and table[x] > 0]


# ---------------------------------------------------------------------------
# rate fitting


@dataclass(frozen=True)
class RateFit:
    xs: list
    log_values: list
    exp_rate: float
    poly_power: float
    intercept: float
    residual: float
    diff_rate: float


def fit_rate(pairs) -> RateFit:
    """Least squares for ``log p(x) = -rate * x - power * log x + c``."""
    xs, vals = [], []
    for x, v in pairs:
        if isinstance(v, Estimate):
            v = v.as_probability().mean
        xs.append(float(x))
        vals.append(float(v))
    xs, vals = np.array(xs), np.array(vals)
    if len(xs) < 4:
        raise DegenerateFit("need at least four points")
    if np.any(~(vals > 0)) or np.any(xs <= 0):
        raise DegenerateFit("levels and values must be positive")
    order = np.argsort(xs)
    xs, vals = xs[order], vals[order]
    y = np.log(vals)
    A = np.column_stack([-xs, -np.log(xs), np.ones_like(xs)])
    if np.linalg.matrix_rank(A) < 3:
        raise DegenerateFit("levels do not determine the three coefficients")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return RateFit(
        xs=xs.tolist(), log_values=y.tolist(), exp_rate=float(coef[0]), poly_power=float(coef[1]),
        intercept=float(coef[2]), residual=float(np.sqrt(np.mean(resid**2))),
        diff_rate=float((y[0] - y[-1]) / (xs[-1] - xs[0])),
    )
