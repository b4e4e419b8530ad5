"""Transforms of branching martingale limits via Poincare-Schroeder type equations.

Three settings share one shape of equation:

* Galton-Watson:  phi(m s) = p(phi(s)), m = p'(1)
* continuous time: s phi'(s) = Psi(phi(s)) / Psi'(1),  Psi(s) = p(s) - s
* CSBP:            s kappa'(s) = Psi(kappa(s)) / Psi'(0)

and the inverse functions theta are given by explicit integrals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .errors import BadParameter, DomainCap, IterationDiverged, NoConvergence, SingularIntegrand, SingularityHit

S0 = 1e-6
KINDS = ("gw_generating_function", "ct_mechanism", "csb_mechanism")


@dataclass(frozen=True)
class BranchingMechanism:
    """A branching mechanism with its first two derivatives.

    For ``gw_generating_function`` ``psi`` is the offspring generating
    function p and ``complement`` (optional) is q -> 1 - p(1 - q), evaluated
    without cancellation near q = 0.
    """

    kind: str
    psi: Callable
    dpsi: Callable
    d2psi: Callable
    name: str = "custom"
    params: dict = field(default_factory=dict)
    complement: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadParameter(f"unknown mechanism kind {self.kind!r}")

    @property
    def anchor(self) -> float:
        """Point where the derivative normalises the equation (1, 1 or 0)."""
        return 0.0 if self.kind == "csb_mechanism" else 1.0

    @property
    def slope(self) -> float:
        """m = p'(1), Psi'(1) or Psi'(0)."""
        return float(self.dpsi(self.anchor))

    @property
    def m(self) -> float:
        return self.slope

    def check(self):
        a = self.anchor
        if self.kind == "gw_generating_function":
            if abs(self.psi(1.0) - 1.0) > 1e-12:
                raise BadParameter("generating function must satisfy p(1) = 1")
            if not self.slope > 1:
                raise BadParameter("Galton-Watson process must be supercritical (m > 1)")
            probe = np.linspace(0.0, 1.0, 101)
            v = self.psi(probe)
            if np.any(v < -1e-15) or np.any(np.diff(v) < -1e-15):
                raise BadParameter("p must be nonnegative and nondecreasing on [0, 1]")
        elif self.kind == "ct_mechanism":
            if abs(self.psi(a)) > 1e-12 or self.slope == 0:
                raise BadParameter("need Psi(1) = 0 and Psi'(1) != 0")
        else:
            if abs(self.psi(a)) > 1e-12 or not self.slope > 0:
                raise BadParameter("need Psi(0) = 0 and Psi'(0) > 0")
        return self

    def comp(self, q):
        if self.complement is not None:
            return self.complement(q)
        return 1.0 - self.psi(1.0 - q)


def mechanism(family: str, **params) -> BranchingMechanism:
    """Named mechanisms.

    ``binary`` (Psi = s^2 - s), ``k_ary`` (Psi = s^k - s, param k),
    ``geometric_ct`` (Psi = p - s with p = (1-u)/(1-us), param u),
    ``geometric_gw`` (p = (1-u)/(1-us), param u), and ``feller_csb``
    (Psi = gamma s - a'(0) s^2 / 2, params gamma, a_prime0).
    """
    if family == "binary":
        return BranchingMechanism("ct_mechanism", lambda s: s * s - s, lambda s: 2.0 * s - 1.0,
                                  lambda s: 2.0 + 0.0 * np.asarray(s), "binary", {})
    if family == "k_ary":
        k = int(params.get("k", 3))
        if k < 2:
            raise BadParameter("k-ary splitting needs k >= 2")
        return BranchingMechanism("ct_mechanism", lambda s: s ** k - s, lambda s: k * s ** (k - 1) - 1.0,
                                  lambda s: k * (k - 1) * s ** (k - 2), "k_ary", {"k": k})
    if family in ("geometric_ct", "geometric_gw"):
        u = float(params.get("u", 2.0 / 3.0))
        if not 0 < u < 1:
            raise BadParameter("geometric parameter u must lie in (0, 1)")
        p = lambda s: (1.0 - u) / (1.0 - u * s)  # noqa: E731
        dp = lambda s: u * (1.0 - u) / (1.0 - u * s) ** 2  # noqa: E731
        d2p = lambda s: 2.0 * u * u * (1.0 - u) / (1.0 - u * s) ** 3  # noqa: E731
        if family == "geometric_gw":
            comp = lambda q: u * q / (1.0 - u + u * q)  # noqa: E731
            return BranchingMechanism("gw_generating_function", p, dp, d2p, family, {"u": u}, comp)
        return BranchingMechanism("ct_mechanism", lambda s: p(s) - s, lambda s: dp(s) - 1.0, d2p,
                                  family, {"u": u})
    if family == "feller_csb":
        g = float(params.get("gamma", 1.0))
        a1 = float(params.get("a_prime0", 1.0))
        if not (g > 0 and a1 > 0):
            raise BadParameter("Feller mechanism needs gamma > 0 and a'(0) > 0")
        return BranchingMechanism("csb_mechanism", lambda s: g * s - 0.5 * a1 * s * s,
                                  lambda s: g - a1 * s, lambda s: -a1 + 0.0 * np.asarray(s),
                                  family, {"gamma": g, "a_prime0": a1})
    raise BadParameter(f"unknown mechanism family {family!r}")


@dataclass
class TransformSolution:
    kind: str
    grid: np.ndarray
    values: np.ndarray
    residual: float
    evaluator: Callable = field(repr=False, compare=False, default=None)
    diagnostics: dict = field(default_factory=dict)

    def __call__(self, s):
        return self.evaluator(s)

    def to_csv(self, path):
        from .io import write_csv

        meta = {"kind": self.kind, **{k: v for k, v in self.diagnostics.items()
                                       if isinstance(v, (int, float, str))}}
        return write_csv(path, {"s": self.grid, "value": self.values}, meta)


# -- shared singular ODE --------------------------------------------------------

def solve_log_ode(rhs: Callable, s0: float, y0: float, s_max: float, *, lower=None, upper=None,
                  rtol: float = 1e-12, atol: float = 1e-14):
    """Solve s y'(s) = rhs(y) on [s0, s_max] in the variable log s (dense output).

    Integration stops with SingularityHit if y leaves (lower, upper).
    """
    events = []
    if lower is not None:
        ev_lo = lambda _, y: y[0] - lower  # noqa: E731
        ev_lo.terminal = True
        events.append(ev_lo)
    if upper is not None:
        ev_hi = lambda _, y: upper - y[0]  # noqa: E731
        ev_hi.terminal = True
        events.append(ev_hi)
    sol = solve_ivp(lambda _, y: [rhs(y[0])], (math.log(s0), math.log(s_max)), [y0], method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True, events=events or None)
    if sol.status == 1:
        raise SingularityHit("solution left its admissible range")
    if sol.status != 0:
        raise NoConvergence(f"singular ODE failed: {sol.message}")
    return sol


def _grid(s_grid):
    s = np.asarray(s_grid, dtype=float)
    if s.ndim != 1 or np.any(s < 0) or np.any(np.diff(s) <= 0):
        raise BadParameter("s_grid must be strictly increasing and nonnegative")
    return s


def _ode_transform(mech, s, start, stub_coef, lower, upper, sign):
    """Shared code for phi (sign -1, starts at 1) and kappa (sign +1, starts at 0)."""
    slope = mech.slope
    rhs = lambda y: mech.psi(y) / slope  # noqa: E731
    s_max = max(float(s[-1]), 2.0 * S0)
    # integrate z = sign (y - start), which starts near S0, so the error control is
    # relative to the small departure rather than to start = 1
    z_rhs = lambda z: sign * rhs(start + sign * z)  # noqa: E731
    z0 = S0 + sign * stub_coef * S0 * S0
    zb = sorted(sign * (b - start) for b in (lower, upper) if b is not None)
    z_lo, z_hi = (zb[0], zb[1]) if len(zb) == 2 else ((zb[0], None) if sign > 0 else (None, zb[0]))
    sol = solve_log_ode(z_rhs, S0, z0, s_max, lower=z_lo, upper=z_hi)

    def evaluate(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = start + sign * x + stub_coef * x * x
        big = x > S0
        if big.any():
            if np.any(x[big] > s_max * (1 + 1e-12)):
                raise BadParameter(f"evaluation beyond the solved range s <= {s_max:g}")
            out[big] = start + sign * sol.sol(np.log(x[big]))[0]
        return out

    vals = evaluate(s)
    inner = s[(s > 10 * S0) & (s < s_max)]
    resid = 0.0
    if inner.size:
        h = 1e-5
        d = (evaluate(inner * (1 + h)) - evaluate(inner * (1 - h))) / (2 * h)
        resid = float(np.max(np.abs(d - rhs(evaluate(inner)))))
    return vals, resid, evaluate


def solve_ct_phi(mech: BranchingMechanism, s_grid) -> TransformSolution:
    """phi with s phi' = Psi(phi)/Psi'(1), phi(0) = 1, phi'(0) = -1.

    Started at s0 = 1e-6 from the stub 1 - s + Psi''(1)/(2 Psi'(1)) s^2.
    """
    if mech.kind != "ct_mechanism":
        raise BadParameter("solve_ct_phi needs a continuous-time mechanism")
    mech.check()
    s = _grid(s_grid)
    c = float(mech.d2psi(1.0)) / (2.0 * mech.slope)
    vals, resid, ev = _ode_transform(mech, s, 1.0, c, 0.0, 1.0 + 1e-12, -1.0)
    return TransformSolution("ct_phi", s, vals, resid, ev, {"stub_coef": c, "mechanism": mech.name})


def csb_cap(mech: BranchingMechanism) -> float:
    """Smallest positive zero of Psi (the limit of kappa at infinity), or inf."""
    xs = np.geomspace(1e-8, 1e8, 4001)
    v = mech.psi(xs)
    neg = np.nonzero(v <= 0)[0]
    if neg.size == 0:
        return math.inf
    j = neg[0]
    if v[j] == 0:
        return float(xs[j])
    return float(brentq(mech.psi, xs[j - 1], xs[j], xtol=1e-15, rtol=1e-15))


def solve_csb_kappa(mech: BranchingMechanism, s_grid) -> TransformSolution:
    """kappa with s kappa' = Psi(kappa)/Psi'(0), kappa(0) = 0, kappa'(0) = 1."""
    if mech.kind != "csb_mechanism":
        raise BadParameter("solve_csb_kappa needs a CSBP mechanism")
    mech.check()
    s = _grid(s_grid)
    cap = csb_cap(mech)
    d = float(mech.d2psi(0.0)) / (2.0 * mech.slope)
    try:
        vals, resid, ev = _ode_transform(mech, s, 0.0, d, 0.0, cap if math.isfinite(cap) else None, 1.0)
    except SingularityHit as exc:
        raise DomainCap(f"kappa reached the cap {cap:g}") from exc
    return TransformSolution("csb_kappa", s, vals, resid, ev,
                             {"stub_coef": d, "cap": cap, "mechanism": mech.name})


# -- inverse functions ----------------------------------------------------------

HEAD = 1e-4


def _theta_ct_scalar(mech, s, limit_val):
    slope = mech.slope
    g = lambda u: slope / mech.psi(u) + 1.0 / (1.0 - u)  # noqa: E731
    if s == 1.0:
        return 0.0
    cut = 1.0 - HEAD
    if s >= cut:
        g_s = g(s)
        integral = 0.5 * (1.0 - s) * (g_s + limit_val)
    else:
        integral = 0.5 * HEAD * (g(cut) + limit_val)
        val, _ = quad(g, s, cut, limit=400, epsabs=1e-14, epsrel=1e-12)
        integral += val
    return (1.0 - s) * math.exp(-integral)


def theta_inverse_ct(mech: BranchingMechanism, s_grid) -> TransformSolution:
    """theta(s) = (1-s) exp(-int_s^1 (Psi'(1)/Psi(u) + 1/(1-u)) du), the inverse of phi."""
    if mech.kind != "ct_mechanism":
        raise BadParameter("theta_inverse_ct needs a continuous-time mechanism")
    mech.check()
    s = _grid(s_grid)
    if s[0] <= 0 or s[-1] > 1:
        raise BadParameter("theta for continuous time is defined on (0, 1]")
    probe = np.linspace(s[0], 1.0, 2049)[:-1]
    if np.any(mech.psi(probe) == 0) or np.any(np.diff(np.sign(mech.psi(probe))) != 0):
        raise SingularIntegrand("Psi vanishes inside the integration range")
    limit_val = -float(mech.d2psi(1.0)) / (2.0 * mech.slope)
    ev = lambda x: np.array([_theta_ct_scalar(mech, float(v), limit_val)  # noqa: E731
                             for v in np.atleast_1d(x)])
    vals = ev(s)
    return TransformSolution("ct_theta", s, vals, 0.0, ev, {"endpoint_limit": limit_val,
                                                              "mechanism": mech.name})


def _theta_csb_scalar(mech, s, limit_val):
    slope = mech.slope
    g = lambda u: slope / mech.psi(u) - 1.0 / u  # noqa: E731
    if s == 0.0:
        return 0.0
    if s <= HEAD:
        integral = 0.5 * s * (limit_val + g(s))
    else:
        integral = 0.5 * HEAD * (limit_val + g(HEAD))
        val, _ = quad(g, HEAD, s, limit=400, epsabs=1e-14, epsrel=1e-12)
        integral += val
    return s * math.exp(integral)


def theta_inverse_csb(mech: BranchingMechanism, s_grid) -> TransformSolution:
    """theta(s) = s exp(int_0^s (Psi'(0)/Psi(u) - 1/u) du), the inverse of kappa.

    Defined below the first positive zero of Psi; DomainCap beyond it.
    """
    if mech.kind != "csb_mechanism":
        raise BadParameter("theta_inverse_csb needs a CSBP mechanism")
    mech.check()
    s = _grid(s_grid)
    cap = csb_cap(mech)
    if s[-1] >= cap:
        raise DomainCap(f"theta is defined for s < {cap:g}")
    probe = np.linspace(0.0, s[-1], 2049)[1:]
    if np.any(mech.psi(probe) <= 0):
        raise SingularIntegrand("Psi vanishes inside the integration range")
    limit_val = -float(mech.d2psi(0.0)) / (2.0 * mech.slope)
    ev = lambda x: np.array([_theta_csb_scalar(mech, float(v), limit_val)  # noqa: E731
                             for v in np.atleast_1d(x)])
    vals = ev(s)
    return TransformSolution("csb_theta", s, vals, 0.0, ev, {"endpoint_limit": limit_val, "cap": cap,
                                                               "mechanism": mech.name})


def inverse_residual(theta: TransformSolution, forward: TransformSolution) -> float:
    """sup |theta(forward(s)) - s| over the forward grid (excluding s = 0)."""
    s = forward.grid[forward.grid > 0]
    return float(np.max(np.abs(theta(forward(s)) - s)))


def geometric_theta_residual(u: float, theta: TransformSolution, *, form: str = "inv_u") -> float:
    """sup over the theta grid of |lhs - rhs| for the closed relation of geometric branching.

    ``form="inv_u"``: theta^{1/u} = (1-2u)^{1/(1-u)} (1-s)^{1/u} / (1-u(1+s))^{1/(1-u)},
    which follows from theta'/theta = Psi'(1)/Psi.
    ``form="1m2u"``: theta^{1-2u} = (1-s)^{1/u} / (1-u(1+s))^{1/(1-u)}, the
    variant with exponent 1-2u and no constant; kept so it can be checked as written.
    """
    s = theta.grid
    th = theta.values
    base = (1.0 - s) ** (1.0 / u) / (1.0 - u * (1.0 + s)) ** (1.0 / (1.0 - u))
    if form == "inv_u":
        lhs, rhs = th ** (1.0 / u), (1.0 - 2.0 * u) ** (1.0 / (1.0 - u)) * base
    elif form == "1m2u":
        lhs, rhs = th ** (1.0 - 2.0 * u), base
    else:
        raise BadParameter(f"unknown relation form {form!r}")
    return float(np.max(np.abs(lhs - rhs)))


# -- Galton-Watson --------------------------------------------------------------

def solve_gw_phi(mech: BranchingMechanism, s_grid, *, tol: float = 1e-8, max_iter: int = 200,
                 m: Optional[float] = None) -> TransformSolution:
    """phi = lim p^{(n)}(exp(-s/m^n)) by Poincare iteration, run in q = 1 - s.

    Stops when two successive iterates differ by less than ``tol`` on the
    grid; IterationDiverged after ``max_iter`` steps or if an iterate leaves
    [0, 1].
    """
    if mech.kind != "gw_generating_function":
        raise BadParameter("solve_gw_phi needs a generating function")
    mech.check()
    s = _grid(s_grid)
    m = mech.m if m is None else float(m)

    def iterate(x, n):
        q = -np.expm1(-np.asarray(x, dtype=float) / m ** n)
        for _ in range(n):
            q = mech.comp(q)
        return 1.0 - q

    prev = iterate(s, 1)
    for n in range(2, max_iter + 1):
        cur = iterate(s, n)
        if np.any(~np.isfinite(cur)) or np.any(cur < -1e-12) or np.any(cur > 1 + 1e-12):
            raise IterationDiverged(f"iterate {n} left [0, 1]")
        diff = float(np.max(np.abs(cur - prev)))
        if diff < tol:
            n_used = n
            break
        prev = cur
    else:
        raise IterationDiverged(f"no Cauchy convergence after {max_iter} iterations (last diff {diff:.3g})")

    ev = lambda x: iterate(x, n_used)  # noqa: E731
    sol = TransformSolution("gw_phi", s, cur, 0.0, ev, {"iterations": n_used, "cauchy_diff": diff,
                                                       "m": m, "mechanism": mech.name})
    sol.residual = schroeder_residual(mech, sol, s)
    return sol


def schroeder_residual(mech: BranchingMechanism, phi: TransformSolution, s_grid=None,
                       m: Optional[float] = None) -> float:
    """sup |phi(m s) - p(phi(s))| over the grid; ``m`` defaults to p'(1)."""
    s = phi.grid if s_grid is None else _grid(s_grid)
    m = mech.m if m is None else float(m)
    return float(np.max(np.abs(phi(m * s) - mech.psi(phi(s)))))


def geometric_gw_phi(u: float, s):
    """Closed form for geometric offspring: q + (1-q)^2 / ((1-q) + s), q = (1-u)/u."""
    q = (1.0 - u) / u
    s = np.asarray(s, dtype=float)
    return q + (1.0 - q) ** 2 / ((1.0 - q) + s)


def complete_monotonicity_probe(values, k_max: int = 3) -> dict:
    """Signs of (-1)^k forward differences of a Laplace transform on an even grid."""
    v = np.asarray(values, dtype=float)
    out = {}
    for k in range(1, k_max + 1):
        d = ((-1) ** k) * np.diff(v, n=k)
        out[k] = float(d.min())
    return out
