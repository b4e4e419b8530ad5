"""Deterministic flow dx/dt = mu(x), the rescaled flow phi~ and its inverse w.

phi~(y) = lim_{T->oo} phi_T(y exp(-gamma T)) conjugates the linear flow
y -> y exp(gamma t) to the nonlinear one, and w is its inverse,
w(x) = x exp(int_0^x (gamma/mu(u) - 1/u) du).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.optimize import minimize_scalar

from .errors import BadParameter, BlowUp, NoConvergence, SingularIntegrand
from .models import DiffusionModel, fd_curvature0, first_drift_zero, validate_assumptions

RTOL = 1e-11
ATOL = 1e-12
HEAD_FRACTION = 1e-4
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


# -- plain flow -----------------------------------------------------------------

@dataclass
class FlowSolution:
    times: np.ndarray
    states: np.ndarray
    model_name: str
    nfev: int
    n_steps: int
    rtol: float
    settled_at_x_c: Optional[bool] = None


def _check_start(model: DiffusionModel, x0: np.ndarray):
    if np.any(~np.isfinite(x0)) or np.any(x0 < 0) or np.any(x0 >= model.r):
        raise BadParameter(f"initial states must lie in [0, {model.r})")


def _integrate_log(model, z0, durations, rtol, atol, t_eval=None):
    """Integrate dz/dtau = d_i mu(e^z)/e^z on tau in [0, 1] for each component."""
    durations = np.asarray(durations, dtype=float)
    zmax = math.log(model.r_sim)

    def rhs(_, z):
        x = np.exp(z)
        return durations * model.drift(x) / x

    def leave(_, z):
        return zmax - float(np.max(z))

    leave.terminal = True
    sol = solve_ivp(rhs, (0.0, 1.0), z0, method="DOP853", rtol=rtol, atol=atol,
                    events=leave, t_eval=t_eval)
    if sol.status == 1:
        raise BlowUp(f"{model.name}: trajectory left [0, {model.r_sim:g}]")
    if sol.status != 0:
        raise BlowUp(f"{model.name}: integrator failed ({sol.message})")
    return sol


def flow_many(model: DiffusionModel, x0, t, *, rtol: float = RTOL, atol: float = ATOL) -> np.ndarray:
    """phi_t(x0) for arrays of starting points and durations (broadcast).

    Components starting at 0 stay at 0.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x0.shape).copy()
    x0 = x0.copy()
    if np.any(t < 0):
        raise BadParameter("durations must be nonnegative")
    _check_start(model, x0)
    out = x0.copy()
    live = (x0 > 0) & (t > 0)
    if np.any(x0[live] > model.r_sim):
        raise BlowUp(f"{model.name}: start above simulation ceiling {model.r_sim:g}")
    if live.any():
        sol = _integrate_log(model, np.log(x0[live]), t[live], rtol, atol)
        out[live] = np.exp(sol.y[:, -1])
    return out


def flow(model: DiffusionModel, x0: float, t: float, **kw) -> float:
    """phi_t(x0) by adaptive Dormand-Prince 8(5,3) in the variable log x."""
    return float(flow_many(model, np.array([x0]), np.array([t]), **kw)[0])


def flow_solution(model: DiffusionModel, x0: float, times, *, rtol: float = RTOL,
                  atol: float = ATOL) -> FlowSolution:
    """Trajectory of the ODE at the requested (sorted, nonnegative) times."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise BadParameter("times must be a sorted nonnegative vector")
    _check_start(model, np.array([x0]))
    horizon = float(times[-1]) if times.size else 0.0
    if x0 == 0 or horizon == 0:
        states = np.full(times.shape, float(x0))
        return FlowSolution(times, states, model.name, 0, 0, rtol)
    sol = _integrate_log(model, np.array([math.log(x0)]), np.array([horizon]), rtol, atol,
                         t_eval=times / horizon)
    states = np.exp(sol.y[0])
    settled = None
    if model.x_c is not None and 0 < x0 < model.x_c:
        settled = bool(abs(states[-1] - model.x_c) <= 1e-6 * model.x_c)
    return FlowSolution(times, states, model.name, int(sol.nfev), int(sol.t.size), rtol, settled)


# -- the inverse w --------------------------------------------------------------

def w_cap(model: DiffusionModel) -> tuple:
    """Upper end of the domain of w and which bound is active."""
    if model.x_c is not None:
        return float(model.x_c), "x_c"
    hi = model.r if math.isfinite(model.r) else model.r_sim
    root = first_drift_zero(model.drift, 0.0, hi)
    if root is not None:
        return root, "drift_zero"
    return float(model.r), "domain"


def g0_limit(model: DiffusionModel) -> Optional[float]:
    """Limit of gamma/mu(u) - 1/u at 0+, i.e. -mu''(0)/(2 gamma), or None if infinite."""
    if model.drift_dd0 is not None:
        return -model.drift_dd0 / (2.0 * model.gamma)
    h = 1e-4 * model.scale
    c1 = fd_curvature0(model.drift, h)
    c2 = fd_curvature0(model.drift, 2.0 * h)
    if not (math.isfinite(c1) and math.isfinite(c2)):
        return None
    if abs(c1 - c2) > 1e-3 * max(1.0, abs(c1)):
        return None
    return -c1 / (2.0 * model.gamma)


def _g(model, u):
    return model.gamma / model.drift(u) - 1.0 / u


def _head_integral(model, x, g0):
    """int_0^x g for x within the head interval."""
    if g0 is not None:
        return 0.5 * x * (g0 + _g(model, x))
    val, _ = quad(lambda u: _g(model, u), 0.0, x, limit=200, epsabs=1e-14, epsrel=1e-12)
    return val


def _check_positive_drift(model, x):
    probe = np.linspace(0.0, x, 2049)[1:]
    ratio = model.drift(probe) / probe
    bad = bool(np.any(ratio <= 0))
    if not bad:
        # mu(u)/u ~ gamma near 0; refine small local minima to catch tangential zeros of mu
        dips = np.nonzero((ratio[1:-1] <= ratio[:-2]) & (ratio[1:-1] <= ratio[2:])
                          & (ratio[1:-1] < 1e-2 * model.gamma))[0] + 1
        for i in dips[:20]:
            res = minimize_scalar(lambda u: model.drift(u) / u, bounds=(probe[i - 1], probe[i + 1]),
                                  method="bounded", options={"xatol": 1e-14})
            if res.fun <= 1e-10 * model.gamma:
                bad = True
                break
    if bad:
        raise SingularIntegrand(f"{model.name}: drift vanishes or changes sign in (0, {x:g})")


def invert_w(model: DiffusionModel, x: float, return_info: bool = False):
    """w(x) = x exp(int_0^x (gamma/mu(u) - 1/u) du) by adaptive quadrature.

    The removable singularity at 0 is integrated on [0, delta], delta = 1e-4 x_c,
    using the limit value -mu''(0)/(2 gamma). At or beyond the cap (x_c, or the
    first zero of mu) the integral diverges and +inf is returned; with
    ``return_info`` the second return value says which cap was active.
    """
    x = float(x)
    cap, cap_kind = w_cap(model)
    info = {"cap": cap, "cap_kind": cap_kind, "divergent": False}
    if x < 0:
        raise BadParameter("w is defined for x >= 0")
    if x == 0:
        return (0.0, info) if return_info else 0.0
    if x >= cap:
        info["divergent"] = True
        return (math.inf, info) if return_info else math.inf
    _check_positive_drift(model, x)
    g0 = g0_limit(model)
    info["g0"] = g0
    delta = HEAD_FRACTION * cap
    if x <= delta:
        total = _head_integral(model, x, g0)
    else:
        total = _head_integral(model, delta, g0)
        val, _ = quad(lambda u: _g(model, u), delta, x, limit=400, epsabs=1e-14, epsrel=1e-12)
        total += val
    out = x * math.exp(total)
    return (out, info) if return_info else out


def w_table(model: DiffusionModel, xs) -> np.ndarray:
    """w on a sorted vector in (0, cap) by 16-point Gauss-Legendre per gap."""
    xs = np.asarray(xs, dtype=float)
    if np.any(np.diff(xs) <= 0) or xs[0] <= 0:
        raise BadParameter("w_table needs a strictly increasing positive grid")
    cap, _ = w_cap(model)
    if xs[-1] >= cap:
        raise BadParameter("w_table grid reaches the cap")
    _check_positive_drift(model, xs[-1])
    g0 = g0_limit(model)
    delta = min(HEAD_FRACTION * cap, xs[0])
    head = _head_integral(model, delta, g0)
    knots = np.concatenate([[delta], xs])
    a, b = knots[:-1], knots[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = _g(model, nodes.ravel()).reshape(nodes.shape)
    pieces = half * (vals @ _GL_WEIGHTS)
    pieces[b == a] = 0.0
    return xs * np.exp(head + np.cumsum(pieces))


# -- rescaled flow --------------------------------------------------------------

@dataclass
class RescaledFlow:
    """Tabulated phi~ on {0} U geomspace(y_min, y_max) with a monotone cubic interpolant.

    Between nodes, phi~ is interpolated as a function of u = log y with cubic
    Hermite pieces whose slopes are the exact values d phi~/du = mu(phi~)/gamma.
    Beyond y_max the Poincare relation phi~(y) = phi_t(phi~(y e^{-gamma t}))
    extends the table; below y_min the linear germ is used.
    """

    model: DiffusionModel
    grid: np.ndarray
    phi_tilde: np.ndarray
    t_horizon: float
    w_grid: np.ndarray
    w_values: np.ndarray
    cross_check_residual: float
    interpolation: str = "cubic_hermite_exact_slope"
    tolerance: float = 1e-8
    diagnostics: dict = field(default_factory=dict)

    @property
    def y_max(self) -> float:
        return float(self.grid[-1])

    @property
    def gamma(self) -> float:
        return self.model.gamma

    @cached_property
    def _log_grid(self):
        return np.log(self.grid[1:])

    @cached_property
    def _spline(self):
        u = self._log_grid
        v = self.phi_tilde[1:]
        slopes = self.model.drift(v) / self.gamma
        if _hermite_is_monotone(u, v, slopes):
            self.diagnostics["interpolation_used"] = self.interpolation
            return CubicHermiteSpline(u, v, slopes)
        self.diagnostics["interpolation_used"] = "pchip"
        return PchipInterpolator(u, v)

    @cached_property
    def _inverse_spline(self):
        v = self.phi_tilde[1:]
        u = self._log_grid
        return CubicHermiteSpline(v, u, self.gamma / self.model.drift(v))

    def __call__(self, y):
        scalar = np.ndim(y) == 0
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any(y < 0) or np.any(np.isnan(y)):
            raise BadParameter("phi~ is evaluated on y >= 0")
        out = np.zeros_like(y)
        y_min = self.grid[1]
        low = (y > 0) & (y < y_min)
        mid = (y >= y_min) & (y <= self.y_max)
        high = y > self.y_max
        if low.any():
            out[low] = y[low] * (self.phi_tilde[1] / y_min)
        if mid.any():
            out[mid] = self._spline(np.log(y[mid]))
        if high.any():
            t = np.log(y[high] / self.y_max) / self.gamma
            out[high] = flow_many(self.model, np.full(t.shape, self.phi_tilde[-1]), t)
        out[y == 0] = self.phi_tilde[0]
        return float(out[0]) if scalar else out

    def w(self, x):
        """Inverse of phi~ from the table (adaptive quadrature outside it)."""
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        lo, hi = self.phi_tilde[1], self.phi_tilde[-1]
        inside = (x >= lo) & (x <= hi)
        out[inside] = np.exp(self._inverse_spline(x[inside]))
        for i in np.nonzero(~inside)[0]:
            out[i] = invert_w(self.model, x[i])
        return float(out[0]) if scalar else out

    def linear_germ(self) -> float:
        """Extrapolated lim_{y->0} phi~(y)/y from the three smallest positive nodes."""
        y = self.grid[1:4]
        ratio = self.phi_tilde[1:4] / y
        coef = np.polyfit(y, ratio, 1)
        return float(coef[-1])

    def to_csv(self, path):
        from .io import write_csv

        meta = {"kind": "rescaled_flow", "model": self.model.name, "model_hash": self.model.model_hash(),
                "gamma": self.gamma, "tolerance": self.tolerance, "t_horizon": self.t_horizon}
        return write_csv(path, {"y": self.grid, "phi_tilde": self.phi_tilde}, meta)

    @classmethod
    def from_csv(cls, path, model: DiffusionModel):
        from .io import read_csv

        cols, meta = read_csv(path)
        if meta.get("model_hash") not in (None, model.model_hash()):
            raise BadParameter("CSV was produced for a different model")
        grid, phi = cols["y"], cols["phi_tilde"]
        return cls(model, grid, phi, float(meta.get("t_horizon", math.nan)), phi[1:-1].copy(),
                   np.full(grid.size - 2, math.nan), math.nan, tolerance=float(meta.get("tolerance", 1e-8)))


def _hermite_is_monotone(x, v, m):
    """Fritsch-Carlson sufficient condition on every interval."""
    d = np.diff(v) / np.diff(x)
    if np.any(d <= 0) or np.any(m < 0):
        return False
    a = m[:-1] / d
    b = m[1:] / d
    return bool(np.all(a * a + b * b <= 9.0))


def _phi_at_horizon(model, log_y, horizon, rtol, atol):
    z0 = log_y - model.gamma * horizon
    sol = _integrate_log(model, z0, np.full(z0.shape, horizon), rtol, atol)
    return np.exp(sol.y[:, -1])


def compute_rescaled_flow(model: DiffusionModel, y_max: float = 50.0, grid_size: int = 2001, *,
                          y_min: float = 1e-6, tol: float = 1e-8, rtol: float = RTOL,
                          atol: float = ATOL) -> RescaledFlow:
    """Tabulate phi~ by pushing y exp(-gamma T) forward for time T.

    T starts at 20/gamma and doubles until two successive tables differ by less
    than ``tol`` everywhere; beyond 1024/gamma NoConvergence is raised with the
    last two tables.
    """
    validate_assumptions(model, strict=True)
    if not (y_max > y_min > 0) or grid_size < 8:
        raise BadParameter("need y_max > y_min > 0 and grid_size >= 8")
    grid = np.concatenate([[0.0], np.geomspace(y_min, y_max, grid_size - 1)])
    log_y = np.log(grid[1:])
    gamma = model.gamma
    horizon = 20.0 / gamma
    prev = cur = _phi_at_horizon(model, log_y, horizon, rtol, atol)
    while True:
        horizon *= 2.0
        if horizon > 1024.0 / gamma:
            raise NoConvergence("rescaled flow did not stabilise by T = 1024/gamma", (prev, cur))
        cur = _phi_at_horizon(model, log_y, horizon, rtol, atol)
        diff = float(np.max(np.abs(cur - prev)))
        if diff < tol:
            break
        prev = cur
    phi = np.concatenate([[0.0], cur])
    if np.any(np.diff(phi) <= 0):
        raise NoConvergence("tabulated phi~ is not strictly increasing", (prev, cur))
    cap, cap_kind = w_cap(model)
    keep = cur < cap
    w_grid = cur[keep]
    w_vals = w_table(model, w_grid)
    resid = np.abs(w_vals - grid[1:][keep]) / grid[1:][keep]
    diagnostics = {"cauchy_diff": diff, "cap": cap, "cap_kind": cap_kind,
                   "y_min": y_min, "grid_size": grid_size}
    return RescaledFlow(model, grid, phi, horizon, w_grid, w_vals, float(resid.max()),
                        tolerance=tol, diagnostics=diagnostics)


# -- Poincare equation checks ---------------------------------------------------

def default_samples(rescaled: RescaledFlow, n_y: int = 60, steps=(1, 7, 31, 127, 511)):
    """Index pairs (i, m): y = grid[i], t = m * du / gamma lands on node i + m."""
    n = rescaled.grid.size - 1
    rows = np.unique(np.linspace(1, n, n_y).astype(int))
    pairs = [(i, m) for i in rows for m in steps if i + m <= n]
    return pairs


def poincare_residual(rescaled: RescaledFlow, samples=None, *, return_ode: bool = False):
    """sup |phi~(y e^{gamma t}) - phi_t(phi~(y))| over sampled (y, t).

    Without ``samples`` the pairs are chosen so that y e^{gamma t} is a grid
    node (no interpolation on the left side); the y = 0 row is always included.
    Explicit ``samples`` are (y, t) pairs evaluated through the interpolant.
    With ``return_ode`` the sup of |gamma y phi~'(y) - mu(phi~(y))| from
    fourth-order central differences on the node table is returned as well.
    """
    model = rescaled.model
    gamma = model.gamma
    if samples is None:
        du = float(np.log(rescaled.grid[2] / rescaled.grid[1]))
        pairs = default_samples(rescaled)
        idx = np.array([p[0] for p in pairs])
        m = np.array([p[1] for p in pairs])
        t = m * du / gamma
        lhs = rescaled.phi_tilde[idx + m]
        start = rescaled.phi_tilde[idx]
        t = np.concatenate([t, [1.0 / gamma]])
        lhs = np.concatenate([lhs, [rescaled.phi_tilde[0]]])
        start = np.concatenate([start, [rescaled.phi_tilde[0]]])
    else:
        samples = np.asarray(samples, dtype=float).reshape(-1, 2)
        y, t = samples[:, 0], samples[:, 1]
        lhs = rescaled(y * np.exp(gamma * t))
        start = rescaled(y)
    rhs = flow_many(model, start, t)
    res = float(np.max(np.abs(lhs - rhs)))
    if not return_ode:
        return res
    return res, ode_residual(rescaled)


def ode_residual(rescaled: RescaledFlow) -> float:
    v = rescaled.phi_tilde[1:]
    du = float(np.log(rescaled.grid[2] / rescaled.grid[1]))
    deriv = (-v[4:] + 8.0 * v[3:-1] - 8.0 * v[1:-3] + v[:-4]) / (12.0 * du)
    return float(np.max(np.abs(rescaled.gamma * deriv - rescaled.model.drift(v[2:-2]))))
