"""
Bubbles u*_eps(r) = (2 eps / (eps^2 + r^2))^{(n-2m)/2}, smooth cutoffs, the
closed-form constants attached to them, and regression checks of their
small-eps expansions on the unit ball.

Whole-space integrals use the substitution r = tan(theta) with adaptive
Gauss-Kronrod quadrature in theta; derivatives of the bubble are exact,
computed by polynomial algebra in s = r^2 where Delta = 4 s d^2/ds^2 + 2 n d/ds.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad

from .radial_core import (
    VANISH_MAX,
    ConfigurationError,
    ProblemParams,
    RadialGrid,
    RadialProfile,
    aux_rule,
    make_grid,
    nabla_m_values,
    operator_values,
    sphere_measure,
)

DEFAULT_EPS = tuple(np.logspace(-1, -3, 8))
DEFAULT_GAMMA = 0.25


@dataclass(frozen=True)
class BubbleSpec:
    epsilon: float
    amplitude_C: float = 1.0
    params: ProblemParams = field(default_factory=lambda: ProblemParams(5, 2, 1.0))

    def __post_init__(self):
        if not 0 < self.epsilon:
            raise ConfigurationError("epsilon > 0 required")
        if not self.amplitude_C > 0:
            raise ConfigurationError("amplitude C > 0 required")

    @property
    def A(self) -> float:
        """A_{n,m} = 2^{(n-2m)/2} C."""
        return 2.0 ** ((self.params.n - 2 * self.params.m) / 2) * self.amplitude_C


@dataclass(frozen=True)
class CutoffSpec:
    inner_radius: float = 0.5
    outer_radius: float = 0.75
    profile_id: str = "exp-blend"

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius <= 1:
            raise ConfigurationError("0 < inner < outer <= 1 required")
        if self.profile_id != "exp-blend":
            raise ConfigurationError(f"unknown cutoff profile {self.profile_id!r}")


def _smooth_step(t):
    # e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}): 0 for t <= 0, 1 for t >= 1
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def cutoff_value(spec: CutoffSpec, r):
    """eta(r): 1 on [0, inner], 0 on [outer, 1], smooth in between."""
    t = (np.asarray(r, dtype=float) - spec.inner_radius) / (spec.outer_radius - spec.inner_radius)
    out = 1.0 - _smooth_step(t)
    return float(out) if np.ndim(out) == 0 else out


def bubble_value(spec: BubbleSpec, r):
    """C (2 eps / (eps^2 + r^2))^{(n-2m)/2}."""
    k = (spec.params.n - 2 * spec.params.m) / 2
    e = spec.epsilon
    r = np.asarray(r, dtype=float)
    out = spec.amplitude_C * (2.0 * e / (e * e + r * r)) ** k
    return float(out) if np.ndim(out) == 0 else out


def truncated_bubble(spec: BubbleSpec, cutoff: CutoffSpec, grid: RadialGrid) -> RadialProfile:
    """v_eps = C eta u*_eps on the grid; vanishes to every order at r = 1."""
    r = grid.nodes
    return RadialProfile(grid, cutoff_value(cutoff, r) * bubble_value(spec, r), spec.params.n, VANISH_MAX)


def bubble_profile(spec: BubbleSpec, grid: RadialGrid) -> RadialProfile:
    """The untruncated bubble restricted to the ball (no boundary conditions)."""
    return RadialProfile(grid, bubble_value(spec, grid.nodes), spec.params.n, 0)


@dataclass(frozen=True)
class CrossoverRadii:
    a_eps: float
    b_eps: Optional[float]


def crossover_radius(spec: BubbleSpec) -> CrossoverRadii:
    """Radius beyond which C u*_eps <= 1.

    a_eps = (A^{2/(n-2m)} eps - eps^2)^{1/2}; for C = 1 the record also
    carries b_eps = (2 eps - eps^2)^{1/2}.
    """
    n, m = spec.params.n, spec.params.m
    e = spec.epsilon
    rad = spec.A ** (2.0 / (n - 2 * m)) * e - e * e
    if rad <= 0:
        raise ValueError(f"negative radicand: eps={e} >= A^(2/(n-2m))")
    b = math.sqrt(2 * e - e * e) if spec.amplitude_C == 1.0 and 2 * e - e * e > 0 else None
    return CrossoverRadii(math.sqrt(rad), b)


# ---------------------------------------------------------------- exact derivatives


@lru_cache(maxsize=None)
def _nabla_m_bubble_poly(n: int, m: int):
    """(P, q, odd) with nabla^m u*_1 = P(s) (1+s)^{-q}, times 2r when odd."""
    k = (n - 2 * m) / 2
    P, q = Polynomial([2.0**k]), k
    s = Polynomial([0.0, 1.0])
    one_s = Polynomial([1.0, 1.0])

    def d_ds(P, q):
        return P.deriv() * one_s - q * P, q + 1

    for _ in range(m // 2):
        Q, q1 = d_ds(P, q)
        Q2, q2 = d_ds(Q, q1)
        # Delta U = 4 s U'' + 2 n U', brought to the denominator (1+s)^{q+2}
        P, q = 4 * s * Q2 + 2 * n * Q * one_s, q2
    if m % 2:
        P, q = d_ds(P, q)
    return P, q, bool(m % 2)


def nabla_m_bubble(params: ProblemParams, r, eps: float = 1.0):
    """Exact nabla^m u*_eps (radial component) at r."""
    n, m = params.n, params.m
    P, q, odd = _nabla_m_bubble_poly(n, m)
    x = np.asarray(r, dtype=float) / eps
    s = x * x
    val = P(s) * (1 + s) ** (-q)
    if odd:
        val = 2 * x * val
    return val * eps ** (-(n - 2 * m) / 2 - m)


def _radial_quad(f, n: int, eps: float = 1.0, lo: float = 0.0, hi: float = math.inf) -> float:
    """omega_{n-1} int_lo^hi f(r) r^{n-1} dr via r = tan(theta)."""
    t0, t1 = math.atan(lo), (math.pi / 2 if hi == math.inf else math.atan(hi))

    def g(t):
        r = math.tan(t)
        return f(r) * r ** (n - 1) / math.cos(t) ** 2

    pts = [math.atan(c * eps) for c in (0.1, 1.0, 10.0) if t0 < math.atan(c * eps) < t1]
    val, _ = quad(g, t0, t1, points=pts or None, epsabs=0.0, epsrel=1e-13, limit=400)
    return sphere_measure(n) * val


def whole_space_gradient(params: ProblemParams, eps: float = 1.0, lo: float = 0.0, hi: float = math.inf) -> float:
    """int |nabla^m u*_eps|^2 over lo <= |x| < hi."""
    return _radial_quad(lambda r: float(nabla_m_bubble(params, r, eps)) ** 2, params.n, eps, lo, hi)


def whole_space_power(params: ProblemParams, eps: float = 1.0, lo: float = 0.0, hi: float = math.inf) -> float:
    """int (u*_eps)^{2*_m} over lo <= |x| < hi."""
    spec = BubbleSpec(eps, 1.0, params)
    ts = params.two_m_star
    return _radial_quad(lambda r: bubble_value(spec, r) ** ts, params.n, eps, lo, hi)


def bubble_pde_constant(n: int, m: int) -> float:
    """Gamma(n/2 + m) / Gamma(n/2 - m), the factor in (-Delta)^m u*_1 = c u*_1^{2*_m - 1}."""
    return math.gamma(n / 2 + m) / math.gamma(n / 2 - m)


# ---------------------------------------------------------------- constants


def c_na(n: int, a: float) -> float:
    """((n + a)(n - a - 4) / 4)^2."""
    if a >= n - 4:
        warnings.warn(f"a={a} >= n-4={n - 4}: outside the range a < n - 4", stacklevel=2)
    return ((n + a) * (n - a - 4) / 4.0) ** 2


def hardy_rellich_constant(n: int, m: int) -> float:
    """C_HR from the product of first-order constants."""
    if m < 2:
        raise ConfigurationError("C_HR needs m >= 2")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if m % 2 == 0:
            out = ((n + 2 * m - 4) / 2.0) ** 2
            for i in range(m // 2 - 1):
                out *= c_na(n, 4 * i)
        else:
            out = ((n - 2) / 2.0) ** 2 * ((n + 2 * m - 4) / 2.0) ** 2
            for i in range(m // 2 - 1):
                out *= c_na(n, 2 + 4 * i)
    return out


def hardy_rellich_constant_explicit(n: int, m: int) -> float:
    """C_HR from the expanded product formula."""
    if m < 2:
        raise ConfigurationError("C_HR needs m >= 2")
    k = m // 2
    if m % 2 == 0:
        out = 4.0 / (n - 4 * k) ** 2
        for i in range(k):
            out *= (n + 4 * i) ** 2 * (n - 4 * i - 4) ** 2 / 16.0
    else:
        out = (n + 4 * k - 2) ** 2 / float(n - 2) ** 2
        for i in range(k):
            out *= (n - 2 + 4 * i) ** 2 * (n - 2 - 4 * i) ** 2 / 16.0
    return out


@dataclass(frozen=True)
class ConstantsTable:
    """Constants attached to (n, m, alpha).

    grad_integral and power_integral are int |nabla^m u*_1|^2 and
    int (u*_1)^{2*_m} over R^n.  S is the sharp Sobolev constant, obtained
    from the bubble as an optimizer: S^2 grad_integral = power_integral^{2/2*_m}.
    S_pow = S^{-n/m} and Sigma = S^{2*_m}.  script_C1 is None for alpha >= n.
    """

    params: ProblemParams
    two_m_star: float
    omega: float
    C_HR: Optional[float]
    C_HR_explicit: Optional[float]
    S: float
    S_pow: float
    Sigma: float
    script_C1: Optional[float]
    grad_integral: float
    power_integral: float
    bubble_pde_constant: float

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "params"}
        d.update(n=self.params.n, m=self.params.m, alpha=self.params.alpha)
        return d


@lru_cache(maxsize=None)
def constants_table(params: ProblemParams) -> ConstantsTable:
    n, m, a = params.n, params.m, params.alpha
    ts = params.two_m_star
    G = whole_space_gradient(params)
    B = whole_space_power(params)
    S = (B ** (2.0 / ts) / G) ** 0.5
    chr1 = hardy_rellich_constant(n, m) if m >= 2 else None
    chr2 = hardy_rellich_constant_explicit(n, m) if m >= 2 else None
    if a < n:
        c1 = (n - 2 * m) / 2.0 * 2.0**n * _radial_quad(lambda r: r**a / (1 + r * r) ** n, n)
    else:
        c1 = None
    return ConstantsTable(params, ts, sphere_measure(n), chr1, chr2, S, S ** (-n / m), S**ts, c1,
                          G, B, bubble_pde_constant(n, m))


def bubble_pde_residual(spec: BubbleSpec, grid: RadialGrid, rhs_factor: float = 1.0) -> float:
    """max_i |(-Delta)^m u*_eps - rhs_factor (u*_eps)^{2*_m - 1}| / max (u*_eps)^{2*_m - 1}.

    The left side is the discrete operator applied to the bubble sampled on
    the grid.  rhs_factor = bubble_pde_constant(n, m) compares against the
    equation the bubble actually satisfies.
    """
    if spec.amplitude_C != 1.0:
        raise ConfigurationError("bubble_pde_residual needs C = 1")
    n, m = spec.params.n, spec.params.m
    u = bubble_profile(spec, grid)
    lhs = (-1) ** m * operator_values(u, m, 0)
    rhs = u.values ** (spec.params.two_m_star - 1)
    return float(np.max(np.abs(lhs - rhs_factor * rhs)) / np.max(rhs))


# ---------------------------------------------------------------- expansions


@dataclass
class ExpansionReport:
    eps_list: list
    values: list
    fitted_slope: float
    fitted_prefactor: Optional[float]
    model_id: str
    model_values: list
    fit_residual: float
    reference: Optional[float] = None
    target: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "measured", "model", "residual"])
        for e, v, mv in zip(self.eps_list, self.values, self.model_values):
            w.writerow([f"{e:.17g}", f"{v:.17g}", f"{mv:.17g}", f"{v - mv:.17g}"])
        return buf.getvalue()


def _eps_checked(eps_list: Sequence[float]) -> np.ndarray:
    e = np.array(sorted(eps_list, reverse=True), dtype=float)
    if len(e) < 4:
        raise ConfigurationError("at least 4 epsilon values are needed")
    if np.any(e <= 0) or np.any(e > 0.2):
        raise ConfigurationError("epsilon values must lie in (0, 0.2]")
    if np.any(np.diff(e) >= 0):
        raise ConfigurationError("epsilon values must be distinct")
    return e


def _power_fit(e: np.ndarray, d: np.ndarray, model_id: str, reference=None, target=None) -> ExpansionReport:
    x, y = np.log(e), np.log(np.abs(d))
    slope, icpt = np.polyfit(x, y, 1)
    model = np.sign(d) * np.exp(icpt + slope * x)
    res = float(np.sqrt(np.mean((y - (icpt + slope * x)) ** 2)))
    return ExpansionReport(e.tolist(), d.tolist(), float(slope), float(np.exp(icpt)), model_id,
                           model.tolist(), res, reference, target)


def _log_fit(e: np.ndarray, d: np.ndarray, alpha: float, model_id: str, reference=None, target=None) -> ExpansionReport:
    # d / eps^alpha = P |ln eps| + Q; P is the prefactor of eps^alpha |ln eps|
    L = -np.log(e)
    P, Q = np.polyfit(L, d / e**alpha, 1)
    model = e**alpha * (P * L + Q)
    slope = float(np.polyfit(np.log(e), np.log(np.abs(d / L)), 1)[0])
    res = float(np.sqrt(np.mean((d - model) ** 2)) / np.max(np.abs(d)))
    return ExpansionReport(e.tolist(), d.tolist(), slope, float(P), model_id, model.tolist(), res,
                           reference, target)


def _outer_power_defect(params, cutoff, grid, e, C=1.0):
    # int_B (C eta u*)^{2*} - C^{2*} int_{R^n} (u*)^{2*}, assembled from the
    # annulus where eta < 1 and the exterior of B, free of cancellation
    ts = params.two_m_star
    n = params.n
    r = grid.nodes
    spec = BubbleSpec(e, 1.0, params)
    sel = r >= cutoff.inner_radius
    eta = cutoff_value(cutoff, r[sel])
    dens = bubble_value(spec, r[sel]) ** ts * -np.expm1(ts * np.log(np.maximum(eta, 1e-300)))
    ann = sphere_measure(n) * np.sum(grid.weights[sel] * r[sel] ** (n - 1) * dens)
    return -C**ts * (ann + whole_space_power(params, e, lo=1.0))


def gradient_defect(params: ProblemParams, eps: float, cutoff: CutoffSpec = CutoffSpec(),
                    grid: Optional[RadialGrid] = None) -> float:
    """int_B |nabla^m (eta u*_eps)|^2 - int_{R^n} |nabla^m u*_1|^2.

    Assembled from the annulus where eta < 1, using the discrete profiles,
    and the exact integral over the exterior of B, free of cancellation.
    """
    grid = grid or make_grid()
    x, w = aux_rule(grid)
    sel = x >= cutoff.inner_radius
    n, m = params.n, params.m
    spec = BubbleSpec(eps, 1.0, params)
    gv = nabla_m_values(truncated_bubble(spec, cutoff, grid), m)[sel]
    gu = nabla_m_values(bubble_profile(spec, grid), m)[sel]
    ann = sphere_measure(n) * np.sum(w[sel] * x[sel] ** (n - 1) * (gv - gu) * (gv + gu))
    return float(ann - whole_space_gradient(params, eps, lo=1.0))


def power_defect(params: ProblemParams, eps: float, cutoff: CutoffSpec = CutoffSpec(),
                 grid: Optional[RadialGrid] = None, C: float = 1.0) -> float:
    """int_B (C eta u*_eps)^{2*_m} - C^{2*_m} int_{R^n} (u*_1)^{2*_m}."""
    return float(_outer_power_defect(params, cutoff, grid or make_grid(), eps, C))


def expansion_check_gradient(eps_list=DEFAULT_EPS, cutoff: CutoffSpec = CutoffSpec(),
                             params: ProblemParams = ProblemParams(5, 2, 1.0),
                             grid: Optional[RadialGrid] = None) -> ExpansionReport:
    """Rate of ||nabla^m (eta u*_eps)||^2_{L^2(B)} -> int_{R^n} |nabla^m u*_1|^2.

    The defect comes from gradient_defect; the fitted slope of ln|defect|
    against ln eps estimates its order.
    """
    grid = grid or make_grid()
    e = _eps_checked(eps_list)
    d = [gradient_defect(params, ei, cutoff, grid) for ei in e]
    return _power_fit(e, np.array(d), "gradient-defect", constants_table(params).grad_integral,
                      params.n - 2 * params.m)


def expansion_check_power(eps_list=DEFAULT_EPS, cutoff: CutoffSpec = CutoffSpec(),
                          params: ProblemParams = ProblemParams(5, 2, 1.0),
                          grid: Optional[RadialGrid] = None) -> ExpansionReport:
    """Rate of int_B (eta u*_eps)^{2*_m} -> int_{R^n} (u*_1)^{2*_m}."""
    grid = grid or make_grid()
    e = _eps_checked(eps_list)
    d = np.array([_outer_power_defect(params, cutoff, grid, ei) for ei in e])
    return _power_fit(e, d, "power-defect", constants_table(params).power_integral, params.n)


def _variable_excess(v: np.ndarray, params: ProblemParams, r: np.ndarray, weighted: bool) -> np.ndarray:
    # v^{p} - v^{2*} (or v^p/p - v^{2*}/2*) without cancellation
    ts = params.two_m_star
    ra = r**params.alpha
    lv = np.log(np.maximum(v, 1e-300))
    base = np.where(v > 1e-300, np.exp(ts * lv), 0.0)
    ex = np.expm1(ra * lv)
    if not weighted:
        return base * ex
    p = ts + ra
    return base * (ex / p - ra / (p * ts))


def expansion_check_modular(eps_list=DEFAULT_EPS, C: float = 1.0, cutoff: CutoffSpec = CutoffSpec(),
                            params: ProblemParams = ProblemParams(5, 2, 1.0),
                            grid: Optional[RadialGrid] = None, gamma: float = DEFAULT_GAMMA) -> ExpansionReport:
    """M(eps) = int_B |C eta u*_eps|^{p(x)} dx - C^{2*_m} int_{R^n} (u*_1)^{2*_m}.

    For alpha < n the prefactor P of eps^alpha |ln eps| is fitted from
    M / eps^alpha = P |ln eps| + Q and reported with target C^{2*_m} C_1.
    For alpha >= n the slope of ln|M| is reported with target n (1 - gamma).
    """
    grid = grid or make_grid()
    e = _eps_checked(eps_list)
    n = params.n
    r = grid.nodes
    W = sphere_measure(n) * grid.weights * r ** (n - 1)
    d = []
    for ei in e:
        v = truncated_bubble(BubbleSpec(ei, C, params), cutoff, grid).values
        d.append(np.sum(W * _variable_excess(v, params, r, False)) + _outer_power_defect(params, cutoff, grid, ei, C))
    d = np.array(d)
    ct = constants_table(params)
    ref = C**params.two_m_star * ct.power_integral
    if params.alpha < n:
        return _log_fit(e, d, params.alpha, "modular-log", ref, C**params.two_m_star * ct.script_C1)
    return _power_fit(e, d, "modular-remainder", ref, n * (1 - gamma))


def expansion_check_weighted(eps_list=DEFAULT_EPS, cutoff: CutoffSpec = CutoffSpec(),
                             params: ProblemParams = ProblemParams(5, 2, 1.0),
                             grid: Optional[RadialGrid] = None, gamma: float = DEFAULT_GAMMA) -> ExpansionReport:
    """W(eps) = int_B u_eps^{p}/p dx - (1/2*_m) int_{R^n} (u*_1)^{2*_m}, u_eps = eta u*_eps."""
    grid = grid or make_grid()
    e = _eps_checked(eps_list)
    n = params.n
    ts = params.two_m_star
    r = grid.nodes
    W = sphere_measure(n) * grid.weights * r ** (n - 1)
    d = []
    for ei in e:
        v = truncated_bubble(BubbleSpec(ei, 1.0, params), cutoff, grid).values
        d.append(np.sum(W * _variable_excess(v, params, r, True)) + _outer_power_defect(params, cutoff, grid, ei) / ts)
    d = np.array(d)
    ct = constants_table(params)
    ref = ct.power_integral / ts
    if params.alpha < n:
        return _log_fit(e, d, params.alpha, "weighted-log", ref, ct.script_C1 / ts)
    return _power_fit(e, d, "weighted-remainder", ref, n * (1 - gamma))


def report_json(obj) -> str:
    return json.dumps(obj, sort_keys=True)
