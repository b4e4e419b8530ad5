"""Exact law of the martingale limit W = lim e^{-gamma t} Y_t of Feller's diffusion.

W is a Poisson(lambda) sum of Expo(lambda) variables, lambda = 2 gamma / a'(0),
so it has an atom exp(-lambda) at 0, mean 1 and variance a'(0)/gamma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import stats
from scipy.optimize import brentq

from .errors import BadParameter, GridTooShort
from .rng import STREAM_W_COUNT, STREAM_W_EXPO, check_seed, exponential, uniform


@dataclass(frozen=True)
class WLaw:
    gamma: float
    a_prime0: float

    def __post_init__(self):
        if not (self.gamma > 0 and self.a_prime0 > 0):
            raise BadParameter("W law needs gamma > 0 and a'(0) > 0")

    @classmethod
    def for_model(cls, model) -> "WLaw":
        return cls(model.gamma, model.a_prime0)

    @property
    def lam(self) -> float:
        return 2.0 * self.gamma / self.a_prime0

    @property
    def atom(self) -> float:
        return math.exp(-self.lam)

    @property
    def mean(self) -> float:
        return 1.0

    @property
    def variance(self) -> float:
        return self.a_prime0 / self.gamma

    def cdf(self, w):
        """P(W <= w) from the Poisson-Gamma series."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        lam = self.lam
        n_max = int(lam + 12.0 * math.sqrt(lam) + 40.0)
        ns = np.arange(1, n_max + 1)
        pmf = stats.poisson.pmf(ns, lam)
        inner = stats.gamma.cdf(np.clip(w, 0.0, None)[:, None], ns[None, :], scale=1.0 / lam)
        out = self.atom + inner @ pmf
        out[w < 0] = 0.0
        return out

    def quantile(self, q: float) -> float:
        if not 0 <= q < 1:
            raise BadParameter("quantile level must be in [0, 1)")
        if q <= self.atom:
            return 0.0
        hi = 1.0
        while self.cdf(hi)[0] < q:
            hi *= 2.0
        return float(brentq(lambda w: self.cdf(w)[0] - q, 0.0, hi, xtol=1e-12))


@njit(cache=True)
def _sample_w(lam, seed, n, out, counts):
    p0 = math.exp(-lam)
    for i in range(n):
        u = uniform(seed, STREAM_W_COUNT, i, 0)
        # Poisson count by inversion: monotone in lam for a fixed uniform
        k = 0
        p = p0
        cdf = p0
        while u >= cdf and p > 0.0:
            k += 1
            p *= lam / k
            cdf += p
        acc = 0.0
        for j in range(k):
            acc += exponential(seed, STREAM_W_EXPO, i, j)
        out[i] = acc / lam
        counts[i] = k


def sample_W(law: WLaw, n: int, seed: int, *, return_counts: bool = False):
    """Exact draws of W from the Poisson-exponential representation.

    Draw i uses uniform (seed, count-stream, i, 0) for the Poisson count and
    exponentials (seed, expo-stream, i, j); lambda * W is therefore a
    nondecreasing function of lambda for a fixed seed.
    """
    seed = check_seed(seed)
    if n < 1:
        raise BadParameter("n must be >= 1")
    if law.lam > 700:
        raise BadParameter("Poisson inversion needs lambda <= 700")
    out = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    _sample_w(law.lam, np.uint64(seed), n, out, counts)
    return (out, counts) if return_counts else out


def laplace_W(law: WLaw, s):
    """E exp(-s W) = exp(-lambda s / (lambda + s)); s = inf gives the atom."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise BadParameter("Laplace argument must be nonnegative")
    lam = law.lam
    with np.errstate(invalid="ignore"):
        frac = np.where(np.isinf(s), 1.0, s / (lam + s))
    out = np.exp(-lam * frac)
    return float(out) if out.ndim == 0 else out


def laplace_Yt(gamma: float, a_prime0: float, x: float, t, s):
    """E_x exp(-s Y_t) for Feller's diffusion dY = gamma Y dt + sqrt(a'(0) Y) dB."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise BadParameter("need s >= 0 and t >= 0")
    growth = np.exp(gamma * t)
    out = np.exp(-x * s * growth / (1.0 + s * a_prime0 / (2.0 * gamma) * np.expm1(gamma * t)))
    return float(out) if out.ndim == 0 else out


def sample_limit_position(law: WLaw, rescaled, n: int, seed: int, *, coverage: float = 0.999):
    """Draws of phi~(W), the limit of X^eps at the critical time.

    The rescaled-flow table must reach the ``coverage`` quantile of W;
    otherwise GridTooShort reports the y_max needed.
    """
    q = law.quantile(coverage)
    if rescaled.y_max < q:
        raise GridTooShort(q, rescaled.y_max)
    w = sample_W(law, n, seed)
    out = rescaled(w)
    out[w == 0] = 0.0
    return out


def export_samples(path, values, law: WLaw, seed: int):
    from .io import write_csv

    meta = {"kind": "samples", "lambda": law.lam, "gamma": law.gamma, "a_prime0": law.a_prime0,
            "seed": seed, "n": int(np.size(values))}
    return write_csv(path, {"value": np.asarray(values, dtype=float)}, meta)
