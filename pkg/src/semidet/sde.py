"""Euler-Maruyama simulation of dX = mu(X) dt + sqrt(eps a(X)) dB with absorption at 0.

Every path draws its normals from the counter-based generator at
``(seed, stream, path_index, step_index)``. Paths are processed in fixed
chunks, so an ensemble is bit-identical whatever the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .errors import BadEpsilon, BadParameter, OverflowGuard, StepTooLarge
from .models import DiffusionModel, ModelParams, _poly, drift_scalar, make_model
from .rng import STREAM_HIT_BASE, STREAM_SDE, check_seed, normal_pair, uniform

SCHEME = "full_truncation_euler"
CHUNK = 256


def critical_time(gamma, epsilon: float) -> float:
    """T^eps = log(1/eps) / gamma. ``gamma`` may be a model."""
    if isinstance(gamma, DiffusionModel):
        gamma = gamma.gamma
    if not 0 < epsilon < 1:
        raise BadEpsilon(f"critical time needs 0 < eps < 1, got {epsilon}")
    return math.log(1.0 / epsilon) / gamma


@dataclass(frozen=True)
class StagePartition:
    """[0, t_c], [t_c, t_1], [t_1, oo) with t_c = c T^eps and t_1 = T^eps."""

    c: float
    T_eps: float

    def __post_init__(self):
        if not 0.5 < self.c < 1.0:
            raise BadParameter(f"c must lie in (1/2, 1), got {self.c}")

    @classmethod
    def for_model(cls, model, epsilon: float, c: float = 0.75) -> "StagePartition":
        return cls(c, critical_time(model, epsilon))

    @property
    def t_c(self) -> float:
        return self.c * self.T_eps

    @property
    def t_1(self) -> float:
        return self.T_eps


def default_dt(gamma: float, epsilon: float) -> float:
    dt = 1e-3 / gamma
    if 0 < epsilon < 1:
        dt = min(dt, 1e-3 * critical_time(gamma, epsilon))
    return dt


def step_schedule(horizon: float, dt: float, checkpoints) -> tuple:
    """Time nodes {k dt} U checkpoints on [0, horizon] and checkpoint positions.

    Checkpoints are reached by a shortened step, never by interpolation.
    """
    cps = np.asarray(checkpoints, dtype=float)
    if cps.ndim != 1 or cps.size == 0:
        raise BadParameter("need at least one checkpoint")
    if np.any(cps < 0) or np.any(cps > horizon * (1 + 1e-12)) or np.any(np.diff(cps) < 0):
        raise BadParameter("checkpoints must be sorted and inside [0, horizon]")
    n = int(math.floor(horizon / dt * (1 + 1e-12)))
    grid = dt * np.arange(n + 1)
    nodes = np.union1d(grid, np.concatenate([cps, [horizon]]))
    tol = 1e-9 * dt
    keep = np.concatenate([[True], np.diff(nodes) > tol])
    nodes = nodes[keep]
    pos = np.searchsorted(nodes, cps - tol)
    return nodes, pos.astype(np.int64)


@njit(cache=True, nogil=True)
def _em_kernel(kind, dc, ac, b, eps, x0, times, ckpt, seed, stream, p0, p1, guard, ref,
               states, abs_time, sup_dev, run_max):
    """Full-truncation Euler on paths p0..p1-1 (rows of the output arrays).

    The process simulated is dX = mu(b X)/b dt + sqrt(eps a(b X)/b) dB; b = 1 is
    the original SDE and b = eps with unit noise is its blow-up near 0.
    Returns the first path that tripped the overflow guard, or -1.
    """
    ncp = ckpt.shape[0]
    nt = times.shape[0]
    use_ref = ref.shape[0] == nt
    for p in range(p0, p1):
        row = p - p0
        x = x0
        at = np.nan
        if x <= 0.0:
            x = 0.0
            at = 0.0
        mx = x
        dev = 0.0
        if use_ref:
            dev = abs(x - ref[0])
        j = 0
        while j < ncp and ckpt[j] == 0:
            states[row, j] = x
            j += 1
        z1 = 0.0
        for s in range(1, nt):
            k = s - 1
            if (k & 1) == 0:
                z, z1 = normal_pair(seed, stream, p, k >> 1)
            else:
                z = z1
            if x > 0.0:
                h = times[s] - times[s - 1]
                bx = b * x
                mu = drift_scalar(kind, dc, bx) / b
                a = _poly(ac, bx) / b
                if a < 0.0:
                    a = 0.0
                x = x + mu * h + math.sqrt(eps * a * h) * z
                if x <= 0.0:
                    x = 0.0
                    at = times[s]
                elif x > guard:
                    return p
            if use_ref:
                d = abs(x - ref[s])
                if d > dev:
                    dev = d
            if x > mx:
                mx = x
            while j < ncp and ckpt[j] == s:
                states[row, j] = x
                j += 1
        abs_time[row] = at
        sup_dev[row] = dev
        run_max[row] = mx
    return -1


@njit(cache=True, nogil=True)
def _hit_kernel(kind, dc, ac, eps, x0, lower, upper, dt, max_steps, seed, stream, bridge, bstream,
                p0, p1, side, hit_time):
    """Run until ``lower`` or ``upper`` is reached: side 1 upper, 0 lower, -1 undecided.

    With ``bridge`` a step that stays inside still counts as a crossing with the
    Brownian-bridge probability exp(-2 d_0 d_1 / (sigma^2 dt)), decided by a
    uniform from stream ``bstream``; this removes the sqrt(dt) bias of
    monitoring the levels only at grid times.
    """
    sq = math.sqrt(dt)
    for p in range(p0, p1):
        row = p - p0
        x = x0
        side[row] = -1
        hit_time[row] = np.nan
        z1 = 0.0
        for k in range(max_steps):
            if (k & 1) == 0:
                z, z1 = normal_pair(seed, stream, p, k >> 1)
            else:
                z = z1
            a = _poly(ac, x)
            if a < 0.0:
                a = 0.0
            var = eps * a
            xn = x + drift_scalar(kind, dc, x) * dt + math.sqrt(var) * sq * z
            if xn <= lower or xn <= 0.0:
                side[row] = 0
                hit_time[row] = (k + 1) * dt
                break
            if xn >= upper:
                side[row] = 1
                hit_time[row] = (k + 1) * dt
                break
            if bridge and var > 0.0:
                pu = math.exp(-2.0 * (upper - x) * (upper - xn) / (var * dt))
                pl = math.exp(-2.0 * (x - lower) * (xn - lower) / (var * dt))
                u = uniform(seed, bstream, p, k)
                if u < pl:
                    side[row] = 0
                    hit_time[row] = (k + 1) * dt
                    break
                if u > 1.0 - pu:
                    side[row] = 1
                    hit_time[row] = (k + 1) * dt
                    break
            x = xn


def _chunks(n):
    return [(p, min(p + CHUNK, n)) for p in range(0, n, CHUNK)]


def _fan_out(fn, n, workers):
    jobs = _chunks(n)
    if workers <= 1 or len(jobs) == 1:
        return [fn(p0, p1) for p0, p1 in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: fn(*c), jobs))


@dataclass
class PathEnsemble:
    """Simulated paths at checkpoint times (rows are paths)."""

    model_name: str
    model_hash: str
    epsilon: float
    dt: float
    times: np.ndarray
    states: np.ndarray
    absorbed: np.ndarray
    absorption_time: np.ndarray
    seed: int
    x0: float
    n_steps: int
    scheme: str = SCHEME
    stream: int = STREAM_SDE
    blowup: float = 1.0
    sup_deviation: Optional[np.ndarray] = None
    running_max: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def noise_audit(self) -> tuple:
        """Identifies the normals consumed: (seed, stream, normals per path)."""
        return (self.seed, self.stream, self.n_steps)

    def at(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise BadParameter(f"t={t} is not a checkpoint")
        return self.states[:, j]

    def absorbed_fraction(self, t: Optional[float] = None) -> float:
        if t is None:
            return float(self.absorbed.mean())
        return float(np.mean(self.absorption_time <= t))

    def to_npz(self, path):
        arrays = {"times": self.times, "states": self.states, "absorbed": self.absorbed,
                  "absorption_time": self.absorption_time}
        if self.sup_deviation is not None:
            arrays["sup_deviation"] = self.sup_deviation
        if self.running_max is not None:
            arrays["running_max"] = self.running_max
        meta = dict(model_name=self.model_name, model_hash=self.model_hash, epsilon=self.epsilon,
                    dt=self.dt, seed=self.seed, x0=self.x0, n_steps=self.n_steps, scheme=self.scheme,
                    stream=self.stream, blowup=self.blowup)
        np.savez(path, meta=np.array(repr(meta)), **arrays)

    @classmethod
    def from_npz(cls, path) -> "PathEnsemble":
        import ast

        with np.load(path) as f:
            meta = ast.literal_eval(str(f["meta"]))
            return cls(times=f["times"], states=f["states"], absorbed=f["absorbed"],
                       absorption_time=f["absorption_time"],
                       sup_deviation=f["sup_deviation"] if "sup_deviation" in f else None,
                       running_max=f["running_max"] if "running_max" in f else None, **meta)

    def to_csv(self, path, versions: Optional[dict] = None):
        """Long format: one row per (path, checkpoint)."""
        from .io import write_csv

        n, m = self.states.shape
        cols = {"path": np.repeat(np.arange(n), m), "t": np.tile(self.times, n),
                "x": self.states.ravel()}
        meta = {"kind": "paths", "model": self.model_name, "model_hash": self.model_hash,
                "seed": self.seed, "epsilon": self.epsilon, "dt": self.dt, "scheme": self.scheme}
        if versions:
            meta["versions"] = versions
        return write_csv(path, cols, meta)


def _simulate(model: DiffusionModel, eps: float, x0: float, dt: float, horizon: float, n_paths: int,
              seed: int, checkpoints, *, b: float = 1.0, guard: Optional[float] = None,
              reference=None, workers: int = 1, stream: int = STREAM_SDE) -> PathEnsemble:
    seed = check_seed(seed)
    if not dt > 0:
        raise BadParameter("dt must be positive")
    if not horizon >= 0:
        raise BadParameter("horizon must be nonnegative")
    if n_paths < 1:
        raise BadParameter("n_paths must be >= 1")
    if dt > 0.1 / model.gamma:
        raise StepTooLarge(f"dt={dt} exceeds 0.1/gamma={0.1 / model.gamma}")
    if checkpoints is None:
        checkpoints = np.linspace(0.0, horizon, 101)
    times, ckpt = step_schedule(horizon, dt, checkpoints)
    if guard is None:
        guard = 1e6 * max(1.0, model.x_c or 1.0)
    ref = np.empty(0)
    if reference is not None:
        ref = np.asarray(reference(times), dtype=float)
    n_cp = ckpt.size
    states = np.empty((n_paths, n_cp))
    abs_time = np.empty(n_paths)
    sup_dev = np.empty(n_paths)
    run_max = np.empty(n_paths)
    dc = np.asarray(model.drift_coeffs, dtype=np.float64)
    ac = np.asarray(model.diffusion_coeffs, dtype=np.float64)

    def job(p0, p1):
        return _em_kernel(model.drift_kind, dc, ac, float(b), float(eps), float(x0), times, ckpt,
                          np.uint64(seed), stream, p0, p1, float(guard), ref,
                          states[p0:p1], abs_time[p0:p1], sup_dev[p0:p1], run_max[p0:p1])

    flags = _fan_out(job, n_paths, workers)
    bad = [f for f in flags if f >= 0]
    if bad:
        raise OverflowGuard(f"path {min(bad)} exceeded the overflow guard {guard:g}")
    absorbed = ~np.isnan(abs_time)
    return PathEnsemble(model.name, model.model_hash(), float(eps), float(dt), times[ckpt].copy(), states,
                        absorbed, abs_time, seed, float(x0), int(times.size - 1), SCHEME, stream, float(b),
                        sup_dev if reference is not None else None, run_max)


def simulate_paths(model: DiffusionModel, params: ModelParams, dt: Optional[float] = None,
                   horizon: float = 1.0, n_paths: int = 1000, seed: int = 0, *, checkpoints=None,
                   reference: bool = False, workers: int = 1) -> PathEnsemble:
    """Simulate the small-noise SDE from ``params.x0`` (default eps).

    Parameters
    ----------
    dt : float, optional
        Step; default ``min(1e-3/gamma, 1e-3 T^eps)``.
    checkpoints : array, optional
        Times at which states are stored; default 101 equispaced times.
    reference : bool
        Also record sup over all steps of |X_t - x_t| where x_t is the ODE
        started at the same point.
    """
    params.check_domain(model)
    if dt is None:
        dt = default_dt(model.gamma, params.epsilon)
    ref_fn = None
    if reference:
        from .flow import flow_solution

        ref_fn = lambda ts: flow_solution(model, params.x0, ts).states  # noqa: E731
    return _simulate(model, params.epsilon, params.x0, dt, horizon, n_paths, seed, checkpoints,
                     reference=ref_fn, workers=workers)


def feller_model(gamma: float, a_prime0: float) -> DiffusionModel:
    if not (gamma > 0 and a_prime0 > 0):
        raise BadParameter("Feller diffusion needs gamma > 0 and a'(0) > 0")
    return make_model("feller", "polynomial", (0.0, gamma), (0.0, a_prime0), math.inf, gamma=gamma,
                      a_prime0=a_prime0, find_x_c=False, r_sim=math.inf)


def simulate_feller(gamma: float, a_prime0: float, y0: float = 1.0, dt: Optional[float] = None,
                    horizon: float = 1.0, n_paths: int = 1000, seed: int = 0, *, checkpoints=None,
                    workers: int = 1) -> PathEnsemble:
    """dY = gamma Y dt + sqrt(a'(0) Y) dB with the same scheme and noise layout.

    The overflow guard grows with the mean, 1e6 max(1, y0) exp(gamma horizon).
    """
    if y0 < 0:
        raise BadParameter("y0 must be nonnegative")
    if dt is None:
        dt = 1e-3 / gamma
    model = feller_model(gamma, a_prime0)
    guard = 1e6 * max(1.0, y0) * math.exp(gamma * horizon)
    return _simulate(model, 1.0, y0, dt, horizon, n_paths, seed, checkpoints, guard=guard, workers=workers)


def simulate_coupled_blowup(model: DiffusionModel, epsilon: float, dt: Optional[float] = None,
                            horizon: float = 1.0, n_paths: int = 1000, seed: int = 0, *,
                            checkpoints=None, workers: int = 1) -> tuple:
    """Blown-up process eps^{-1} X^eps (started at 1) and Feller Y with shared noise.

    The blow-up solves dX~ = mu(eps X~)/eps dt + sqrt(a(eps X~)/eps) dB, which is
    exactly what Euler applied to eps^{-1} X^eps gives. Both ensembles use the
    same (seed, stream, path, step) normals, so E|X~_t - Y_t| measures the
    linearisation error only.
    """
    if not 0 < epsilon < 1:
        raise BadEpsilon("coupled blow-up needs 0 < eps < 1")
    if dt is None:
        dt = 1e-3 / model.gamma
    blow = _simulate(model, 1.0, 1.0, dt, horizon, n_paths, seed, checkpoints, b=float(epsilon),
                     guard=1e6 * max(1.0, model.x_c or 1.0) / epsilon, workers=workers)
    blow.epsilon = float(epsilon)
    feller = simulate_feller(model.gamma, model.a_prime0, 1.0, dt, horizon, n_paths, seed,
                             checkpoints=checkpoints, workers=workers)
    return blow, feller


def simulate_hitting(model: DiffusionModel, epsilon: float, x0: float, upper: float, dt: float,
                     max_time: float, n_paths: int, seed: int, *, lower: float = 0.0,
                     stream: int = STREAM_HIT_BASE, bridge: bool = False, workers: int = 1) -> tuple:
    """Exit side of (lower, upper) per path: 1 upper, 0 lower, -1 not decided by max_time.

    The lower level 0 means absorption. ``bridge`` switches on the
    Brownian-bridge crossing correction (uniforms from stream + 1).
    """
    seed = check_seed(seed)
    if dt > 0.1 / model.gamma:
        raise StepTooLarge(f"dt={dt} exceeds 0.1/gamma")
    if not 0 <= lower < x0 < upper:
        raise BadParameter("need 0 <= lower < x0 < upper")
    side = np.empty(n_paths, dtype=np.int64)
    hit_time = np.empty(n_paths)
    dc = np.asarray(model.drift_coeffs, dtype=np.float64)
    ac = np.asarray(model.diffusion_coeffs, dtype=np.float64)
    max_steps = int(math.ceil(max_time / dt))

    def job(p0, p1):
        _hit_kernel(model.drift_kind, dc, ac, float(epsilon), float(x0), float(lower), float(upper), float(dt),
                    max_steps, np.uint64(seed), stream, bool(bridge), stream + 1, p0, p1,
                    side[p0:p1], hit_time[p0:p1])

    _fan_out(job, n_paths, workers)
    return side, hit_time
