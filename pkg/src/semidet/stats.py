"""Empirical laws and two-sample distances (Kolmogorov-Smirnov, Wasserstein-1)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptySample
from .rng import STREAM_BOOTSTRAP, check_seed, uniform


@dataclass(frozen=True)
class EmpiricalLaw:
    """Sorted sample with normalized weights; the mass at exactly 0 is tracked."""

    values: np.ndarray
    weights: np.ndarray
    n_raw: int
    atom_count: int

    @classmethod
    def from_sample(cls, sample, weights=None) -> "EmpiricalLaw":
        x = np.asarray(sample, dtype=float).ravel()
        if x.size == 0:
            raise EmptySample("empirical law needs at least one value")
        if np.any(~np.isfinite(x)):
            raise ValueError("sample contains non-finite values")
        if weights is None:
            w = np.full(x.size, 1.0 / x.size)
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.shape != x.shape or np.any(w < 0) or w.sum() <= 0:
                raise ValueError("weights must be nonnegative, not all zero, and match the sample")
            w = w / w.sum()
        order = np.argsort(x, kind="stable")
        return cls(x[order], w[order], int(x.size), int(np.count_nonzero(x == 0.0)))

    @property
    def n(self) -> int:
        return self.n_raw

    @property
    def atom(self) -> float:
        return float(self.weights[self.values == 0.0].sum())

    def cdf(self, x):
        cw = np.cumsum(self.weights)
        idx = np.searchsorted(self.values, np.asarray(x, dtype=float), side="right")
        return np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)

    def mean(self) -> float:
        return float(self.weights @ self.values)

    def conditioned_positive(self) -> "EmpiricalLaw":
        """The law given a strictly positive value (non-extinction)."""
        keep = self.values > 0
        if not keep.any():
            raise EmptySample("no positive values to condition on")
        return EmpiricalLaw.from_sample(self.values[keep], self.weights[keep])


def _as_law(x) -> EmpiricalLaw:
    return x if isinstance(x, EmpiricalLaw) else EmpiricalLaw.from_sample(x)


def _cdfs_on_union(a: EmpiricalLaw, b: EmpiricalLaw):
    z = np.union1d(a.values, b.values)
    return z, a.cdf(z), b.cdf(z)


def ks_distance(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| over right-continuous CDFs (exact, atoms included)."""
    a, b = _as_law(a), _as_law(b)
    _, fa, fb = _cdfs_on_union(a, b)
    return float(np.max(np.abs(fa - fb)))


def wasserstein1(a, b) -> float:
    """int |F_a - F_b| dx, the L1 optimal coupling distance on the line."""
    a, b = _as_law(a), _as_law(b)
    z, fa, fb = _cdfs_on_union(a, b)
    if z.size < 2:
        return 0.0
    return float(np.sum(np.abs(fa[:-1] - fb[:-1]) * np.diff(z)))


def ks_w1(a, b) -> tuple:
    """Both distances from one pass over the merged support."""
    a, b = _as_law(a), _as_law(b)
    z, fa, fb = _cdfs_on_union(a, b)
    d = np.abs(fa - fb)
    w1 = float(np.sum(d[:-1] * np.diff(z))) if z.size > 1 else 0.0
    return float(d.max()), w1


@njit(cache=True)
def _resample_idx(seed, n, rep, out):
    for i in range(n):
        j = int(uniform(seed, STREAM_BOOTSTRAP, rep, i) * n)
        out[i] = j if j < n else n - 1


def bootstrap_se(sample, stat, n_boot: int = 50, seed: int = 0):
    """Bootstrap standard error of ``stat(resampled sample)``; resample r uses counter block r.

    ``stat`` may return a tuple, in which case an array of errors is returned.
    """
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise EmptySample("bootstrap needs a nonempty sample")
    seed = check_seed(seed)
    idx = np.empty(x.size, dtype=np.int64)
    vals = []
    for r in range(n_boot):
        _resample_idx(np.uint64(seed), x.size, r, idx)
        vals.append(stat(x[idx]))
    se = np.asarray(vals, dtype=float).std(axis=0, ddof=1)
    return float(se) if se.ndim == 0 else se


def mean_se(x) -> tuple:
    """Sample mean and its standard error."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise EmptySample("mean of an empty sample")
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf
    return float(x.mean()), se


def proportion_se(hits, n) -> tuple:
    if n <= 0:
        raise EmptySample("proportion of an empty sample")
    p = hits / n
    return float(p), float(math.sqrt(max(p * (1 - p), 0.0) / n))


def trend_ok(values, ses, slack: float = 2.0) -> bool:
    """Nonincreasing up to ``slack`` combined standard errors at every step."""
    v = np.asarray(values, dtype=float)
    s = np.asarray(ses, dtype=float)
    return bool(np.all(v[1:] <= v[:-1] + slack * np.sqrt(s[1:] ** 2 + s[:-1] ** 2)))
