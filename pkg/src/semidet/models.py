"""Diffusion models dX = mu(X) dt + sqrt(eps * a(X)) dB on (0, r).

Coefficients are restricted to a few named functional forms so that the same
description can be evaluated from numpy, scipy callbacks and numba kernels.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .errors import AssumptionViolated, BadParameter, NonEvaluable, UnknownModel

DRIFT_POLY = 0
DRIFT_POWER_LOGISTIC = 1
DRIFT_HOLLING = 2

DRIFT_FORMS = {"polynomial": DRIFT_POLY, "logistic_power": DRIFT_POWER_LOGISTIC,
               "holling": DRIFT_HOLLING}
_FORM_NAMES = {v: k for k, v in DRIFT_FORMS.items()}

BUILTIN_NAMES = ("kimura_fisher_wright", "logistic_feller", "gilpin_ayala_pow", "holling", "custom")


@njit(cache=True, nogil=True)
def _poly(c, x):
    acc = 0.0
    for i in range(c.shape[0] - 1, -1, -1):
        acc = acc * x + c[i]
    return acc


@njit(cache=True, nogil=True)
def drift_scalar(kind, c, x):
    if kind == DRIFT_POLY:
        return _poly(c, x)
    if kind == DRIFT_POWER_LOGISTIC:
        # c = (gamma, x_c, theta)
        return c[0] * x * (1.0 - (x / c[1]) ** c[2])
    # holling, c = (gamma, x_c, beta, n)
    xn1 = x ** (c[3] - 1.0)
    return c[0] * x * (1.0 - x / c[1] - c[2] * xn1 / (1.0 + xn1 * x))


@njit(cache=True, nogil=True)
def diffusion_sq_scalar(c, x):
    return _poly(c, x)


@njit(cache=True)
def _drift_array(kind, c, x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = drift_scalar(kind, c, x[i])
    return out


@njit(cache=True)
def _diffusion_array(c, x):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        out[i] = _poly(c, x[i])
    return out


@dataclass(frozen=True)
class DiffusionModel:
    """A one-dimensional small-noise diffusion with a repulsive point at 0.

    ``diffusion_sq`` is a(x) = sigma(x)**2; the noise level eps multiplies it
    in the SDE. ``gamma`` and ``a_prime0`` are mu'(0) and a'(0). ``a_prime0``
    is kept general everywhere (no silent renormalisation to 1).
    """

    name: str
    drift_kind: int
    drift_coeffs: tuple
    diffusion_coeffs: tuple
    r: float
    gamma: float
    a_prime0: float
    x_c: Optional[float] = None
    drift_dd0: Optional[float] = None  # mu''(0) when finite and known
    r_sim: Optional[float] = None
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.r_sim is None:
            if self.x_c is not None and math.isinf(self.r):
                rs = 10.0 * self.x_c
            elif math.isinf(self.r):
                rs = 1e3
            else:
                rs = self.r
            object.__setattr__(self, "r_sim", float(rs))

    @cached_property
    def _dc(self):
        return np.asarray(self.drift_coeffs, dtype=np.float64)

    @cached_property
    def _ac(self):
        return np.asarray(self.diffusion_coeffs, dtype=np.float64)

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.r)

    @property
    def scale(self) -> float:
        return max(1.0, self.x_c or 1.0)

    def drift(self, x):
        if np.ndim(x) == 0:
            return float(drift_scalar(self.drift_kind, self._dc, float(x)))
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _drift_array(self.drift_kind, self._dc, x.ravel()).reshape(x.shape)

    def diffusion_sq(self, x):
        if np.ndim(x) == 0:
            return float(_poly(self._ac, float(x)))
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _diffusion_array(self._ac, x.ravel()).reshape(x.shape)

    def spec(self) -> dict:
        return {
            "name": self.name,
            "drift_form": _FORM_NAMES[self.drift_kind],
            "drift_coeffs": [float(v) for v in self.drift_coeffs],
            "diffusion_coeffs": [float(v) for v in self.diffusion_coeffs],
            "r": "inf" if self.unbounded else float(self.r),
            "gamma": float(self.gamma),
            "a_prime0": float(self.a_prime0),
            "x_c": None if self.x_c is None else float(self.x_c),
        }

    def model_hash(self) -> str:
        blob = json.dumps(self.spec(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ModelParams:
    epsilon: float
    x0: Optional[float] = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise BadParameter(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.x0 is None:
            if self.epsilon <= 0:
                raise BadParameter("x0 defaults to epsilon, which must then be positive")
            object.__setattr__(self, "x0", float(self.epsilon))
        elif not self.x0 > 0:
            raise BadParameter(f"x0 must be positive, got {self.x0}")

    def check_domain(self, model: DiffusionModel):
        if not self.x0 < model.r:
            raise BadParameter(f"x0={self.x0} outside (0, {model.r})")


# -- derivative estimates -------------------------------------------------------

def fd_slope0(f, h: float) -> float:
    """One-sided second-order estimate of f'(0); the domain is (0, r)."""
    return (-3.0 * f(0.0) + 4.0 * f(h) - f(2.0 * h)) / (2.0 * h)


def fd_curvature0(f, h: float) -> float:
    return (2.0 * f(0.0) - 5.0 * f(h) + 4.0 * f(2.0 * h) - f(3.0 * h)) / (h * h)


def fd_agrees(f, analytic: float, h: float, rtol: float = 1e-6) -> tuple:
    """(agrees, estimate): the one-sided slope at 0 matches ``analytic``.

    A mismatch at step h is forgiven when refining the step by 1e3 at least
    halves it; that covers drifts such as x^(1+theta), theta < 1, whose
    difference quotients converge only like h^theta.
    """
    est = fd_slope0(f, h)
    tol = rtol * max(abs(analytic), 1e-300)
    err = abs(analytic - est)
    if err <= tol:
        return True, est
    fine = abs(analytic - fd_slope0(f, 1e-3 * h))
    return fine <= 0.5 * err, est


def _check_analytic(label, analytic, f, h, rtol=1e-6):
    ok, est = fd_agrees(f, analytic, h, rtol)
    if not ok:
        raise BadParameter(f"{label}: supplied value {analytic!r} disagrees with finite-difference "
                           f"estimate {est!r}")


def first_drift_zero(drift, lo: float, hi: float, n: int = 2048) -> Optional[float]:
    """Smallest root of the drift in (lo, hi], located on a grid then refined."""
    xs = np.linspace(lo, hi, n + 1)[1:]
    vals = drift(xs)
    if vals[-1] == 0.0 and np.all(vals[:-1] > 0):
        return float(xs[-1])
    bad = np.nonzero(vals <= 0)[0]
    if bad.size == 0:
        return None
    j = bad[0]
    if vals[j] == 0.0:
        return float(xs[j])
    a = xs[j - 1] if j > 0 else lo
    return float(brentq(drift, a, xs[j], xtol=1e-15, rtol=1e-15))


# -- construction ---------------------------------------------------------------

def make_model(name, drift_form, drift_coeffs, diffusion_coeffs, r=math.inf, *, gamma=None,
               a_prime0=None, x_c=None, drift_dd0=None, r_sim=None, params=None,
               find_x_c=True) -> DiffusionModel:
    """Build a model, filling gamma / a'(0) by finite differences when not given."""
    if isinstance(drift_form, str):
        if drift_form not in DRIFT_FORMS:
            raise BadParameter(f"unknown drift form {drift_form!r}")
        kind = DRIFT_FORMS[drift_form]
    else:
        kind = int(drift_form)
    r = float(r)
    if not r > 0:
        raise BadParameter("domain end r must be positive")
    dc = tuple(float(v) for v in drift_coeffs)
    ac = tuple(float(v) for v in diffusion_coeffs)
    stub = DiffusionModel(name, kind, dc, ac, r, 1.0, 1.0, x_c, None, 1.0, {})
    scale = max(1.0, x_c or 1.0)
    h = 1e-6 * scale
    g_fd = fd_slope0(stub.drift, h)
    a_fd = fd_slope0(stub.diffusion_sq, h)
    if gamma is None:
        gamma = g_fd
    else:
        _check_analytic("gamma", float(gamma), stub.drift, h)
    if a_prime0 is None:
        a_prime0 = a_fd
    else:
        _check_analytic("a_prime0", float(a_prime0), stub.diffusion_sq, h)
    if x_c is None and find_x_c and gamma > 0:
        hi = r if math.isfinite(r) else 1e3
        x_c = first_drift_zero(stub.drift, 0.0, hi)
    return DiffusionModel(name, kind, dc, ac, r, float(gamma), float(a_prime0),
                          None if x_c is None else float(x_c),
                          None if drift_dd0 is None else float(drift_dd0),
                          r_sim, dict(params or {}))


def _get(params, key, default):
    v = params.get(key, default)
    try:
        return float(v)
    except (TypeError, ValueError):
        raise BadParameter(f"parameter {key!r} must be numeric, got {v!r}") from None


def builtin_model(name: str, params: Optional[dict] = None) -> DiffusionModel:
    """Return one of the catalog models.

    Parameters
    ----------
    name : str
        One of ``kimura_fisher_wright``, ``logistic_feller``, ``gilpin_ayala_pow``,
        ``holling`` or ``custom``.
    params : dict
        Model parameters. Common keys are ``gamma`` (default 1), ``x_c``
        (default 1) and ``sigma2`` (default 1, the slope a'(0) of the
        square-root volatility). ``gilpin_ayala_pow`` takes ``theta``, ``holling``
        takes ``beta`` and ``n``. ``custom`` takes ``drift`` and ``diffusion_sq``
        dicts (``{"form": ..., ...}``) and optionally ``r``.
        Keys ``gamma_override``, ``a_prime0_override`` and ``x_c_override``
        replace the derived values; overrides are checked against finite
        differences.
    """
    params = dict(params or {})
    overrides = {k[: -len("_override")]: params.pop(k) for k in list(params) if k.endswith("_override")}
    if name == "custom":
        model = _custom_model(params, overrides)
        return model
    if name not in BUILTIN_NAMES:
        raise UnknownModel(name)
    gamma = _get(params, "gamma", 1.0)
    x_c = _get(params, "x_c", 1.0)
    sigma2 = _get(params, "sigma2", 1.0)
    if not x_c > 0:
        raise BadParameter(f"x_c must be positive, got {x_c}")
    if sigma2 < 0:
        raise BadParameter(f"sigma2 must be nonnegative, got {sigma2}")
    echo = {"gamma": gamma, "x_c": x_c}
    if name == "kimura_fisher_wright":
        if x_c > 1.0:
            raise BadParameter("Kimura-Fisher-Wright lives on (0, 1); x_c must be <= 1")
        kw = dict(drift_form="polynomial", drift_coeffs=(0.0, gamma, -gamma / x_c),
                  diffusion_coeffs=(0.0, 1.0, -1.0), r=1.0, gamma=gamma, a_prime0=1.0,
                  x_c=x_c, drift_dd0=-2.0 * gamma / x_c)
    elif name == "logistic_feller":
        echo["sigma2"] = sigma2
        kw = dict(drift_form="polynomial", drift_coeffs=(0.0, gamma, -gamma / x_c),
                  diffusion_coeffs=(0.0, sigma2), r=math.inf, gamma=gamma, a_prime0=sigma2,
                  x_c=x_c, drift_dd0=-2.0 * gamma / x_c)
    elif name == "gilpin_ayala_pow":
        theta = _get(params, "theta", 1.0)
        if not theta > 0:
            raise BadParameter(f"theta must be positive, got {theta}")
        echo.update(theta=theta, sigma2=sigma2)
        if theta == 1.0:
            dd0 = -2.0 * gamma / x_c
        elif theta > 1.0:
            dd0 = 0.0
        else:
            dd0 = None  # mu'' blows up at 0
        kw = dict(drift_form="logistic_power", drift_coeffs=(gamma, x_c, theta),
                  diffusion_coeffs=(0.0, sigma2), r=math.inf, gamma=gamma, a_prime0=sigma2,
                  x_c=x_c, drift_dd0=dd0)
    else:  # holling
        beta = _get(params, "beta", 0.0)
        n = _get(params, "n", 2.0)
        if beta < 0:
            raise BadParameter(f"beta must be nonnegative, got {beta}")
        if n < 1:
            raise BadParameter(f"n must be >= 1, got {n}")
        echo.update(beta=beta, n=n, sigma2=sigma2)
        slope = gamma * (1.0 - beta) if n == 1.0 else gamma
        if n == 1.0:
            dd0 = -2.0 * gamma / x_c + 2.0 * gamma * beta
        elif n == 2.0:
            dd0 = -2.0 * gamma / x_c - 2.0 * gamma * beta
        elif n > 2.0:
            dd0 = -2.0 * gamma / x_c
        else:
            dd0 = None
        stub = make_model(name, "holling", (gamma, x_c, beta, n), (0.0, sigma2), math.inf,
                          gamma=slope, a_prime0=sigma2, x_c=x_c, find_x_c=False)
        root = first_drift_zero(stub.drift, 0.0, x_c) if slope > 0 else None
        kw = dict(drift_form="holling", drift_coeffs=(gamma, x_c, beta, n),
                  diffusion_coeffs=(0.0, sigma2), r=math.inf, gamma=slope, a_prime0=sigma2,
                  x_c=root, drift_dd0=dd0)
    for key, val in overrides.items():
        if key not in ("gamma", "a_prime0", "x_c"):
            raise BadParameter(f"unknown override {key!r}")
        kw[key] = float(val)
    return make_model(name, params=echo, **kw)


def _custom_model(params, overrides):
    drift = params.get("drift")
    diff = params.get("diffusion_sq")
    if not isinstance(drift, dict) or not isinstance(diff, dict):
        raise BadParameter("custom model needs 'drift' and 'diffusion_sq' form dicts")
    form = drift.get("form", "polynomial")
    if form == "polynomial":
        dc = tuple(drift["coeffs"])
    elif form == "logistic_power":
        dc = (drift.get("gamma", 1.0), drift.get("x_c", 1.0), drift.get("theta", 1.0))
        if not dc[2] > 0:
            raise BadParameter("theta must be positive")
    elif form == "holling":
        dc = (drift.get("gamma", 1.0), drift.get("x_c", 1.0), drift.get("beta", 0.0), drift.get("n", 2.0))
        if dc[2] < 0 or dc[3] < 1:
            raise BadParameter("holling needs beta >= 0 and n >= 1")
    else:
        raise BadParameter(f"unknown drift form {form!r}")
    if diff.get("form", "polynomial") != "polynomial":
        raise BadParameter("diffusion_sq supports the polynomial form only")
    r = params.get("r", math.inf)
    r = math.inf if r in ("inf", None) else float(r)
    return make_model(params.get("name", "custom"), form, dc, tuple(diff["coeffs"]), r,
                      gamma=overrides.get("gamma"), a_prime0=overrides.get("a_prime0"),
                      x_c=overrides.get("x_c", params.get("x_c")),
                      drift_dd0=params.get("drift_dd0"), params=params)


def model_from_spec(spec: dict) -> DiffusionModel:
    """Model from a config mapping ``{"name": ..., "params": {...}, "overrides": {...}}``."""
    if "name" not in spec:
        raise BadParameter("model spec needs a 'name'")
    params = dict(spec.get("params", {}))
    for key, val in spec.get("overrides", {}).items():
        params[f"{key}_override"] = val
    return builtin_model(spec["name"], params)


# -- assumption checks ----------------------------------------------------------

@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class ValidationReport:
    model: str
    items: list
    tags: dict

    @property
    def usable(self) -> bool:
        return all(item.passed for item in self.items)

    @property
    def failed(self):
        return [item for item in self.items if not item.passed]

    def to_dict(self):
        return {"model": self.model, "usable": self.usable, "tags": self.tags,
                "items": [vars(i) for i in self.items]}


def probe_grid(model: DiffusionModel, n: int = 400) -> np.ndarray:
    hi = model.r if not model.unbounded else model.r_sim
    return np.linspace(0.0, hi, n + 2)[1:-1]


def drift_lipschitz_ok(model: DiffusionModel, n: int = 2000) -> tuple:
    """Probe |mu(y) - mu(x)| <= gamma |y - x| on [0, x_c] (or the probe range)."""
    hi = model.x_c if model.x_c is not None else probe_grid(model)[-1]
    xs = np.linspace(0.0, hi, n + 1)
    mu = model.drift(xs)
    slopes = np.abs(np.diff(mu)) / np.diff(xs)
    worst = float(slopes.max())
    return worst <= model.gamma * (1.0 + 1e-9), worst


def validate_assumptions(model: DiffusionModel, strict: bool = False) -> ValidationReport:
    """Check mu(0)=0 < mu'(0) and a(0)=0 < a'(0) plus the model's own bookkeeping.

    Raises NonEvaluable when the coefficients are not finite on the probe grid.
    With ``strict=True`` failures raise AssumptionViolated instead of being
    returned in the report.
    """
    xs = probe_grid(model)
    with np.errstate(all="ignore"):
        mu = model.drift(xs)
        a = model.diffusion_sq(xs)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(a))):
        raise NonEvaluable(f"{model.name}: drift or diffusion not finite on the probe grid")
    h = 1e-6 * model.scale
    g_ok, g_fd = fd_agrees(model.drift, model.gamma, h)
    a_ok, a_fd = fd_agrees(model.diffusion_sq, model.a_prime0, h)
    mu0 = model.drift(0.0)
    a0 = model.diffusion_sq(0.0)
    items = [
        AssumptionCheck("drift_vanishes_at_0", abs(mu0) <= 1e-12, mu0, "mu(0) = 0"),
        AssumptionCheck("drift_slope_positive", model.gamma > 0, model.gamma, "gamma = mu'(0) > 0"),
        AssumptionCheck("diffusion_vanishes_at_0", abs(a0) <= 1e-12, a0, "a(0) = 0"),
        AssumptionCheck("diffusion_slope_positive", model.a_prime0 > 0, model.a_prime0, "a'(0) > 0"),
        AssumptionCheck("gamma_matches_fd", g_ok, g_fd, "finite-difference mu'(0)"),
        AssumptionCheck("a_prime0_matches_fd", a_ok, a_fd, "finite-difference a'(0)"),
        AssumptionCheck("diffusion_positive_interior", bool(np.all(a > 0)), float(a.min()),
                        "a > 0 on the probe grid"),
    ]
    if model.x_c is not None:
        xc = model.x_c
        tol = 1e-9 * max(1.0, abs(model.gamma) * xc)
        items.append(AssumptionCheck("drift_vanishes_at_x_c", abs(model.drift(xc)) <= tol,
                                     model.drift(xc), "mu(x_c) = 0"))
        inner = np.linspace(0.0, xc, 1002)[1:-1]
        items.append(AssumptionCheck("drift_positive_below_x_c", bool(np.all(model.drift(inner) > 0)),
                                     float(model.drift(inner).min()), "mu > 0 on (0, x_c)"))
    ok, worst = drift_lipschitz_ok(model)
    report = ValidationReport(model.name, items, {"drift_condition": ok, "drift_max_slope": worst})
    if strict and not report.usable:
        raise AssumptionViolated(report.failed)
    return report
