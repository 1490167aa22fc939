"""Finite offspring laws on the nonnegative integers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BadPmf, DomainError, NonPositiveMean

PMF_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Immutable offspring distribution with its cached moments.

    ``mean_`` is the mean number of children and ``eta`` the normalized
    second factorial moment ``sum k(k-1) p_k / mean_**2``.
    """

    counts: np.ndarray
    probs: np.ndarray
    mean_: float
    eta: float

    @property
    def support_max(self) -> int:
        return int(self.counts[-1])

    @property
    def pmf(self) -> list[tuple[int, float]]:
        return [(int(k), float(p)) for k, p in zip(self.counts, self.probs)]

    def to_json(self) -> dict:
        return {"pmf": [[k, p] for k, p in self.pmf]}

    def __repr__(self) -> str:
        return f"OffspringLaw(pmf={self.pmf}, mean_={self.mean_:.6g}, eta={self.eta:.6g})"


def _build(counts: np.ndarray, probs: np.ndarray) -> OffspringLaw:
    order = np.argsort(counts)
    counts, probs = counts[order], probs[order]
    keep = probs > 0
    counts, probs = counts[keep], probs[keep]
    probs = probs / probs.sum()
    mean = float(np.dot(counts, probs))
    if not mean > 0:
        raise NonPositiveMean(f"offspring mean is {mean}")
    eta = float(np.dot(counts * (counts - 1), probs)) / mean**2
    counts.setflags(write=False)
    probs.setflags(write=False)
    return OffspringLaw(counts=counts, probs=probs, mean_=mean, eta=eta)


def make_offspring_law(entries: Iterable[Sequence[float]]) -> OffspringLaw:
    """Validate ``[(count, probability), ...]`` and return a normalized law."""
    entries = list(entries)
    if not entries:
        raise BadPmf("empty pmf")
    counts = np.array([e[0] for e in entries])
    probs = np.array([e[1] for e in entries], dtype=float)
    if not np.all(np.equal(np.mod(counts, 1), 0)) or np.any(counts < 0):
        raise BadPmf("offspring counts must be nonnegative integers")
    counts = counts.astype(np.int64)
    if len(np.unique(counts)) != len(counts):
        raise BadPmf("duplicate offspring counts")
    if np.any(~np.isfinite(probs)) or np.any(probs < 0):
        raise BadPmf("negative or non-finite probability")
    total = probs.sum()
    if abs(total - 1.0) > PMF_SUM_TOL:
        raise BadPmf(f"probabilities sum to {total!r}")
    return _build(counts, probs)


def gf_eval(law: OffspringLaw, s: float) -> float:
    """Probability generating function ``sum p_k s**k``."""
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"s={s} outside [0, 1]")
    return float(np.dot(law.probs, np.power(float(s), law.counts)))


def size_biased(law: OffspringLaw) -> OffspringLaw:
    if not law.mean_ > 0:
        raise NonPositiveMean("cannot size-bias a law with zero mean")
    weights = law.counts * law.probs / law.mean_
    return _build(law.counts.copy(), weights)


def truncated_second_moment(law: OffspringLaw, a: int) -> float:
    """``sum_{y >= a} y**2 p_y / mean_**2``; defined for completeness."""
    mask = law.counts >= a
    y = law.counts[mask].astype(float)
    return float(np.dot(y * y, law.probs[mask])) / law.mean_**2


def sample_offspring(law: OffspringLaw, rng: np.random.Generator, size=None):
    """Inverse-CDF draw(s) from ``law``; consumes one uniform per draw."""
    cum = np.cumsum(law.probs)
    cum[-1] = 1.0
    u = rng.random(size)
    idx = np.searchsorted(cum, u, side="right")
    out = law.counts[np.minimum(idx, len(cum) - 1)]
    return int(out) if size is None else out


def offspring_law_from_json(obj: dict) -> OffspringLaw:
    return make_offspring_law(obj["pmf"])
