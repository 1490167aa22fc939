"""Flatten laws into the padded arrays consumed by the compiled kernels."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .environment import EnvModel
from .offspring import size_biased
from .steps import StepLaw


@dataclass(frozen=True, eq=False)
class PackedEnv:
    off_vals: np.ndarray
    off_probs: np.ndarray
    off_n: np.ndarray
    sb_vals: np.ndarray
    sb_probs: np.ndarray
    sb_n: np.ndarray
    logm: np.ndarray
    weights: np.ndarray


def _pad(laws):
    width = max(len(law.counts) for law in laws)
    vals = np.zeros((len(laws), width), dtype=np.int64)
    probs = np.zeros((len(laws), width))
    n = np.zeros(len(laws), dtype=np.int64)
    for i, law in enumerate(laws):
        k = len(law.counts)
        vals[i, :k] = law.counts
        probs[i, :k] = law.probs
        n[i] = k
    return vals, probs, n


@lru_cache(maxsize=128)
def pack_env(model: EnvModel) -> PackedEnv:
    off = _pad(model.laws)
    sb = _pad([size_biased(law) for law in model.laws])
    return PackedEnv(*off, *sb, logm=np.ascontiguousarray(model.logs, dtype=float),
                     weights=np.ascontiguousarray(model.weights, dtype=float))


def pack_step(step: StepLaw) -> tuple[np.ndarray, np.ndarray]:
    return np.ascontiguousarray(step.values, dtype=np.int64), np.ascontiguousarray(step.probs, dtype=float)
