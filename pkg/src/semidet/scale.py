"""Scale and speed of dX = mu dt + sqrt(eps a) dB, boundary classes and hitting probabilities.

Conventions: s'(x) = exp(-int_{x_ref}^x 2 mu/(eps a)), s(x) = int_{x_ref}^x s',
m'(x) = 1/(eps a(x) s'(x)), normalised by s(x_ref) = 0 and s'(x_ref) = 1 with
x_ref = x_c/2 (or the middle of the domain).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.special import logsumexp

from .errors import BadParameter, HypothesesFail, Inconclusive, ScaleDiverges, SingularIntegrand
from .models import DiffusionModel

CONVERGE_BELOW = -0.1
DIVERGE_ABOVE = -0.01
N_SHELLS = 30
PER_SHELL = 64
N_FIT = 10


def reference_point(model: DiffusionModel) -> float:
    if model.x_c is not None:
        return 0.5 * model.x_c
    if math.isfinite(model.r):
        return 0.5 * model.r
    return 1.0


def _check_eps(epsilon):
    if not epsilon > 0:
        raise BadParameter("scale analysis needs eps > 0")


def _ratio(model, epsilon, u):
    """2 mu / (eps a), with removable 0/0 points replaced by nearby values."""
    u = np.asarray(u, dtype=float)
    a = model.diffusion_sq(u)
    mu = model.drift(u)
    bad = a == 0.0
    if np.any(bad):
        nudge = 1e-9 * model.scale
        side = np.where(u[bad] <= reference_point(model), nudge, -nudge)
        ub = u[bad] + side
        a = a.copy()
        mu = mu.copy()
        a[bad] = model.diffusion_sq(ub)
        mu[bad] = model.drift(ub)
    return 2.0 * mu / (epsilon * a)


def _interior_check(model, lo, hi):
    probe = np.linspace(lo, hi, 1025)[1:-1]
    if probe.size and np.any(model.diffusion_sq(probe) <= 0):
        raise SingularIntegrand(f"{model.name}: a(x) vanishes inside ({lo:g}, {hi:g})")


def log_scale_density(model: DiffusionModel, epsilon: float, x, x_ref: Optional[float] = None):
    """log s'(x) by adaptive quadrature of 2 mu/(eps a) from x_ref."""
    _check_eps(epsilon)
    x_ref = reference_point(model) if x_ref is None else x_ref
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0) or np.any(xs >= model.r):
        raise BadParameter("scale density is evaluated inside (0, r)")
    _interior_check(model, min(xs.min(), x_ref), max(xs.max(), x_ref))
    f = lambda u: float(_ratio(model, epsilon, np.array([u]))[0])  # noqa: E731
    out = np.array([-quad(f, x_ref, xi, limit=400, epsabs=1e-13, epsrel=1e-12)[0] for xi in xs])
    return float(out[0]) if np.ndim(x) == 0 else out


def scale_density(model: DiffusionModel, epsilon: float, x, x_ref: Optional[float] = None):
    return np.exp(log_scale_density(model, epsilon, x, x_ref))


def speed_density(model: DiffusionModel, epsilon: float, x, x_ref: Optional[float] = None):
    """m'(x) = 1/(eps a(x) s'(x))."""
    ls = log_scale_density(model, epsilon, x, x_ref)
    return np.exp(-ls - np.log(epsilon * model.diffusion_sq(np.asarray(x, dtype=float))))


class _LogDensity:
    """Dense solution of L' = -2 mu/(eps a) on [lo, hi] with L(anchor) = 0."""

    def __init__(self, model, epsilon, lo, hi, anchor):
        self.lo, self.hi, self.anchor = lo, hi, anchor
        rhs = lambda u, y: -_ratio(model, epsilon, np.array([u]))  # noqa: E731
        opts = dict(method="DOP853", rtol=1e-13, atol=1e-13, dense_output=True)
        self.left = solve_ivp(rhs, (anchor, lo), [0.0], **opts) if lo < anchor else None
        self.right = solve_ivp(rhs, (anchor, hi), [0.0], **opts) if hi > anchor else None

    def __call__(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.zeros_like(u)
        lm = u < self.anchor
        if lm.any():
            out[lm] = self.left.sol(u[lm])[0]
        rm = u > self.anchor
        if rm.any():
            out[rm] = self.right.sol(u[rm])[0]
        return out

    def max_on(self, a, b, n=2049):
        return float(np.max(self(np.linspace(a, b, n))))


def _log_integral(L, a, b):
    """log int_a^b exp(L(u)) du with a shift that keeps the integrand near 1."""
    if b <= a:
        return -math.inf
    shift = L.max_on(a, b)
    val, _ = quad(lambda u: math.exp(float(L(u)[0]) - shift), a, b, limit=400,
                  epsabs=0.0, epsrel=1e-11)
    return shift + math.log(val) if val > 0 else -math.inf


def scale_function(model: DiffusionModel, epsilon: float, x, x_ref: Optional[float] = None):
    """s(x) = int_{x_ref}^x s'(u) du (negative below x_ref)."""
    _check_eps(epsilon)
    x_ref = reference_point(model) if x_ref is None else x_ref
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0) or np.any(xs >= model.r):
        raise BadParameter("scale function is evaluated inside (0, r)")
    lo, hi = min(xs.min(), x_ref), max(xs.max(), x_ref)
    _interior_check(model, lo, hi)
    L = _LogDensity(model, epsilon, lo, hi, x_ref)
    out = np.empty_like(xs)
    for i, xi in enumerate(xs):
        if xi >= x_ref:
            out[i] = math.exp(_log_integral(L, x_ref, xi))
        else:
            out[i] = -math.exp(_log_integral(L, xi, x_ref))
    return float(out[0]) if np.ndim(x) == 0 else out


# -- boundary classification ----------------------------------------------------

def _shell_map(end, x1, r, t):
    """Abscissae approaching ``end`` geometrically: one shell per unit of t."""
    if end == "left":
        x = x1 * np.exp2(-t)
        dxdt = -math.log(2.0) * x
    elif math.isfinite(r):
        x = r - (r - x1) * np.exp2(-t)
        dxdt = math.log(2.0) * (r - x)
    else:
        x = x1 * np.exp2(t)
        dxdt = math.log(2.0) * x
    return x, np.abs(dxdt)


def _log_panels(c, h):
    """log int over each panel of exp(c(t)) with c interpolated linearly in t."""
    d = c[1:] - c[:-1]
    top = np.maximum(c[1:], c[:-1])
    ad = np.abs(d)
    with np.errstate(invalid="ignore", divide="ignore"):
        shape = np.where(ad > 1e-12, np.log(-np.expm1(-ad) / ad), -0.5 * ad)
    out = top + math.log(h) + shape
    both = np.isneginf(c[1:]) & np.isneginf(c[:-1])
    out[both] = -np.inf
    return out


def _log_recurrence(step, panel):
    """log R_j for R_{j+1} = R_j exp(step_j) + exp(panel_j), R_0 = 0."""
    out = np.empty(step.size + 1)
    out[0] = -np.inf
    acc = -np.inf
    for j in range(step.size):
        acc = np.logaddexp(acc + step[j], panel[j])
        out[j + 1] = acc
    return out


def _pair_panels(left, right, h):
    """Like _log_panels for panel-local endpoint values given separately."""
    c = np.empty(2 * left.size)
    c[0::2] = left
    c[1::2] = right
    return _log_panels(c, h)[0::2]


def _shell_logs(panels):
    return logsumexp(panels.reshape(-1, PER_SHELL), axis=1)


def _tail_exponent(shell_logs):
    """Least-squares slope of log(shell integral) per shell, in units of log 2."""
    y = shell_logs[-N_FIT:]
    if np.all(np.isneginf(y)):
        return -math.inf
    if np.any(~np.isfinite(y)):
        return math.inf if np.any(np.isposinf(y)) else -math.inf
    k = np.arange(y.size, dtype=float)
    slope = np.polyfit(k, y, 1)[0]
    return float(slope / math.log(2.0))


def _decide(alpha):
    if alpha <= CONVERGE_BELOW:
        return "finite"
    if alpha >= DIVERGE_ABOVE:
        return "infinite"
    return "inconclusive"


@dataclass
class BoundaryVerdict:
    end: str
    point: float
    attracting: Optional[bool]
    scale_limit: str  # finite / infinite / inconclusive
    exit_integral: str
    entrance_integral: str
    feller_class: str
    exponents: dict = field(default_factory=dict)

    def to_dict(self):
        return {"end": self.end, "point": self.point, "attracting": self.attracting,
                "scale_limit": self.scale_limit, "exit_integral": self.exit_integral,
                "entrance_integral": self.entrance_integral, "feller_class": self.feller_class,
                "exponents": self.exponents}

    @property
    def label(self) -> str:
        if self.attracting is None:
            return f"inconclusive+{self.feller_class}"
        return ("attracting+" if self.attracting else "unattracting+") + self.feller_class


_CLASS = {("finite", "finite"): "regular", ("finite", "infinite"): "exit",
          ("infinite", "finite"): "entrance", ("infinite", "infinite"): "natural"}


def classify_end(model: DiffusionModel, epsilon: float, end: str, *, x1: Optional[float] = None,
                 n_shells: int = N_SHELLS) -> BoundaryVerdict:
    """Feller class of one end from shell integrals of the classical tests.

    The exit test integrates s'(x) |M[x1, x]| and the entrance test
    m'(x) |s[x1, x]| toward the end; attraction is finiteness of s itself.
    Each integral is declared finite or infinite from the fitted growth
    exponent of its last shells.
    """
    _check_eps(epsilon)
    x1 = reference_point(model) if x1 is None else x1
    t = np.linspace(0.0, float(n_shells), n_shells * PER_SHELL + 1)
    h = float(t[1] - t[0])
    x, jac = _shell_map(end, x1, model.r, t)
    ok = (x > 0) & (x < model.r)
    if end == "left":
        ok &= x < x1
    ok[0] = True
    if not np.all(ok[1:]):
        raise BadParameter("shell abscissae left the domain (float resolution)")
    a = model.diffusion_sq(x)
    if np.any(a <= 0):
        raise SingularIntegrand(f"{model.name}: a(x) vanishes before the {end} end")
    # dL = -2 mu/(eps a) dx along the path of abscissae; dx/dt = -jac on the left
    rat = _ratio(model, epsilon, x) * (-1.0 if end == "left" else 1.0)
    dL = -0.5 * h * (rat[:-1] * jac[:-1] + rat[1:] * jac[1:])
    L = np.concatenate([[0.0], np.cumsum(dL)])
    log_jac = np.log(jac)
    log_ea = np.log(epsilon * a)
    # attraction: shells of int s' dx
    scale_p = _log_panels(L + log_jac, h)
    # exit test integrand s'(x) M[x1,x]; P = e^{L} M obeys P' = L' P + 1/(eps a)
    pan_p = _pair_panels(dL - log_ea[:-1] + log_jac[:-1], -log_ea[1:] + log_jac[1:], h)
    log_P = _log_recurrence(dL, pan_p)
    exit_p = _log_panels(log_P + log_jac, h)
    # entrance test integrand m'(x) s[x1,x] = Q/(eps a) with Q = e^{-L} s
    pan_q = _pair_panels(-dL + log_jac[:-1], log_jac[1:], h)
    log_Q = _log_recurrence(-dL, pan_q)
    ent_p = _log_panels(log_Q - log_ea + log_jac, h)
    alpha_s = _tail_exponent(_shell_logs(scale_p))
    alpha_exit = _tail_exponent(_shell_logs(exit_p))
    alpha_ent = _tail_exponent(_shell_logs(ent_p))
    s_lim, ex, en = _decide(alpha_s), _decide(alpha_exit), _decide(alpha_ent)
    attracting = {"finite": True, "infinite": False}.get(s_lim)
    feller = _CLASS.get((ex, en), "inconclusive")
    point = 0.0 if end == "left" else float(model.r)
    return BoundaryVerdict(end, point, attracting, s_lim, ex, en, feller,
                           {"scale": alpha_s, "exit": alpha_exit, "entrance": alpha_ent})


def classify_boundaries(model: DiffusionModel, epsilon: float, *, strict: bool = True) -> tuple:
    """(left, right) verdicts. With ``strict`` an undecided test raises Inconclusive."""
    left = classify_end(model, epsilon, "left")
    right = classify_end(model, epsilon, "right")
    if strict:
        for v in (left, right):
            if v.attracting is None or v.feller_class == "inconclusive":
                raise Inconclusive(f"{v.end} end: growth exponents {v.exponents} inside the "
                                   f"indeterminacy band ({CONVERGE_BELOW}, {DIVERGE_ABOVE})")
    return left, right


# -- hitting probabilities ------------------------------------------------------

def _left_attracting(model, epsilon) -> BoundaryVerdict:
    return classify_end(model, epsilon, "left")


def _log_hitting(model, epsilon, x0, lower, upper):
    L = _LogDensity(model, epsilon, lower, upper, 0.5 * (lower + upper) if lower > 0 else
                    min(reference_point(model), 0.5 * upper))
    num = _log_integral(L, lower, x0)
    den = _log_integral(L, lower, upper)
    return num - den


def hitting_probability(model: DiffusionModel, epsilon: float, x0: float, upper: float,
                        lower: float = 0.0) -> float:
    """P(T_upper < T_lower | X_0 = x0) = (s(x0) - s(lower)) / (s(upper) - s(lower))."""
    _check_eps(epsilon)
    if not 0 <= lower < x0 < upper < model.r:
        raise BadParameter("need 0 <= lower < x0 < upper < r")
    _interior_check(model, lower, upper)
    if lower == 0.0:
        v = _left_attracting(model, epsilon)
        if v.attracting is not True:
            raise ScaleDiverges(f"s(0+) is not finite for {model.name} (verdict {v.scale_limit})")
    return float(math.exp(_log_hitting(model, epsilon, x0, lower, upper)))


@dataclass
class ExceedanceResult:
    probability: float
    trend: list
    trend_decreasing: bool
    left: dict
    right: dict
    regime: str


def max_exceedance_probability(model: DiffusionModel, epsilon: float, x0: float, M: float,
                               M_grid=None) -> ExceedanceResult:
    """P(sup_t X_t > M | X_0 = x0), equal to the hitting probability of M before 0.

    The identity needs an attracting left end (s(0+) finite); otherwise
    HypothesesFail carries the boundary verdict and no number is produced.
    ``M_grid`` (default M, 2M, 4M, ... inside the domain) shows the decay as
    M approaches r.
    """
    left, right = classify_end(model, epsilon, "left"), classify_end(model, epsilon, "right")
    if left.attracting is not True:
        regime = "conjecture" if left.feller_class in ("natural", "entrance") else "unsupported"
        raise HypothesesFail({"left": left.to_dict(), "right": right.to_dict(), "regime": regime})
    p = hitting_probability(model, epsilon, x0, M)
    if M_grid is None:
        top = model.r if math.isfinite(model.r) else 8.0 * M
        M_grid = [m for m in M * np.exp2(np.arange(0, 8)) if m < top]
        if math.isfinite(model.r):
            M_grid += list(model.r - (model.r - M) * np.exp2(-np.arange(1, 6)))
    trend = [(float(m), hitting_probability(model, epsilon, x0, float(m))) for m in sorted(M_grid)]
    dec = all(b[1] <= a[1] + 1e-12 for a, b in zip(trend, trend[1:]))
    regime = "proven" if right.attracting is False else "right_attracting"
    return ExceedanceResult(p, trend, dec, left.to_dict(), right.to_dict(), regime)


# -- tabulated profile ----------------------------------------------------------

@dataclass
class ScaleProfile:
    model_name: str
    epsilon: float
    x_ref: float
    x: np.ndarray
    scale_density: np.ndarray
    scale_function: np.ndarray
    speed_density: np.ndarray
    left: Optional[BoundaryVerdict]
    right: Optional[BoundaryVerdict]
    diagnostics: dict = field(default_factory=dict)

    def generator_residual(self, model: DiffusionModel) -> float:
        """max |(eps a/2) s'' + mu s'| / s' with fourth-order differences of the s' table."""
        x, sp = self.x, self.scale_density
        h = np.diff(x)
        if not np.allclose(h, h[0], rtol=1e-9):
            raise BadParameter("generator residual needs a uniform grid")
        spp = (-sp[4:] + 8.0 * sp[3:-1] - 8.0 * sp[1:-3] + sp[:-4]) / (12.0 * h[0])
        xi = x[2:-2]
        res = 0.5 * self.epsilon * model.diffusion_sq(xi) * spp + model.drift(xi) * sp[2:-2]
        return float(np.max(np.abs(res / sp[2:-2])))

    def to_csv(self, path, model_hash: str = ""):
        from .io import write_csv

        meta = {"kind": "scale_profile", "model": self.model_name, "model_hash": model_hash,
                "epsilon": self.epsilon, "x_ref": self.x_ref}
        return write_csv(path, {"x": self.x, "scale_density": self.scale_density,
                                "scale_function": self.scale_function,
                                "speed_density": self.speed_density}, meta)

    def verdicts(self) -> dict:
        return {"left": None if self.left is None else self.left.to_dict(),
                "right": None if self.right is None else self.right.to_dict()}


def scale_profile(model: DiffusionModel, epsilon: float, x=None, *, classify: bool = True) -> ScaleProfile:
    """Tables of s', s and m' on a grid plus (optionally) the boundary verdicts."""
    _check_eps(epsilon)
    x_ref = reference_point(model)
    if x is None:
        hi = model.r if math.isfinite(model.r) else 2.0 * (model.x_c or 1.0)
        x = np.linspace(0.0, hi, 402)[1:-1]
    x = np.asarray(x, dtype=float)
    lo, hi = min(x.min(), x_ref), max(x.max(), x_ref)
    _interior_check(model, lo, hi)
    L = _LogDensity(model, epsilon, lo, hi, x_ref)
    ls = L(x)
    sp = np.exp(ls)
    s = scale_function(model, epsilon, x, x_ref)
    mp = np.exp(-ls) / (epsilon * model.diffusion_sq(x))
    left = right = None
    if classify:
        left, right = classify_boundaries(model, epsilon, strict=False)
    return ScaleProfile(model.name, float(epsilon), x_ref, x, sp, s, mp, left, right)
