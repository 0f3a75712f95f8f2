"""
Variable-exponent modulars, Luxemburg norms and the Euler-Lagrange energy

    I(u) = 1/2 int_B |nabla^m u|^2 dx - int_B u_+^{p(x)} / p(x) dx,

with p(x) = 2*_m + |x|^alpha, together with its Sobolev gradient.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .radial_core import (
    ConfigurationError,
    ProblemParams,
    RadialGrid,
    RadialProfile,
    ball_integral,
    bilinear_form,
    nabla_m_norm_sq,
    solve_polyharmonic,
    sphere_measure,
)

# below this |u|^p is treated as zero
_TINY = 1e-300
_LOG_MAX = 709.0


@dataclass(frozen=True, eq=False)
class ExponentField:
    grid: RadialGrid
    p_values: np.ndarray
    params: ProblemParams


def exponent_field(params: ProblemParams, grid: RadialGrid) -> ExponentField:
    """p(r_i) = 2n/(n - 2m) + r_i^alpha at every node."""
    p = params.exponent(grid.nodes)
    p.setflags(write=False)
    return ExponentField(grid, p, params)


@dataclass(frozen=True)
class ModularReport:
    modular: float
    split_inner: float
    split_outer: float
    r_split: float

    def to_json(self) -> str:
        return json.dumps({k: float(v) for k, v in asdict(self).items()})


def _check(u: RadialProfile, p: ExponentField):
    if u.grid is not p.grid:
        raise ConfigurationError("profile and exponent field live on different grids")
    if u.n != p.params.n:
        raise ConfigurationError(f"profile dimension {u.n} does not match n={p.params.n}")


def _powers(absu: np.ndarray, p: np.ndarray) -> np.ndarray:
    # |u|^p via exp(p ln|u|), zero below _TINY, overflow reported by node
    out = np.zeros_like(absu)
    live = absu > _TINY
    expo = p[live] * np.log(absu[live])
    if expo.size and expo.max() > _LOG_MAX:
        i = int(np.flatnonzero(live)[np.argmax(expo)])
        raise OverflowError(f"|u|^p overflows at node {i}")
    out[live] = np.exp(expo)
    return out


def modular_density(u: RadialProfile, p: ExponentField) -> np.ndarray:
    """|u(r)|^{p(r)} at the nodes."""
    _check(u, p)
    return _powers(np.abs(u.values), p.p_values)


def modular(u: RadialProfile, p: ExponentField, r_split: float = 0.5) -> ModularReport:
    """int_B |u|^{p(x)} dx with the split at r_split reported separately."""
    dens = modular_density(u, p)
    g = u.grid
    w = sphere_measure(u.n) * g.weights * g.nodes ** (u.n - 1) * dens
    inner = float(np.sum(w[g.nodes < r_split]))
    outer = float(np.sum(w[g.nodes >= r_split]))
    return ModularReport(inner + outer, inner, outer, float(r_split))


def _log_modular(absu: np.ndarray, logw: np.ndarray, p: np.ndarray, log_lam: float) -> float:
    live = absu > _TINY
    return float(logsumexp(logw[live] + p[live] * (np.log(absu[live]) - log_lam)))


def luxemburg_norm(u: RadialProfile, p: ExponentField) -> float:
    """inf{lambda > 0 : modular(u / lambda) <= 1}.

    The root of log modular(u / lambda) = 0 is bracketed in
    [1e-14, max|u| (|B| + 1)] and found with Brent's method in log lambda.
    """
    _check(u, p)
    absu = np.abs(u.values)
    if not np.any(absu > _TINY):
        return 0.0
    g = u.grid
    logw = np.log(sphere_measure(u.n) * g.weights * g.nodes ** (u.n - 1))
    vol = sphere_measure(u.n) / u.n
    lo, hi = np.log(1e-14), np.log(absu.max() * (vol + 1.0))
    f = lambda t: _log_modular(absu, logw, p.p_values, t)
    if not (f(lo) > 0 > f(hi)):
        raise ArithmeticError("Luxemburg bracket does not contain the root")
    t = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(np.exp(t))


def positive_part_power(u: RadialProfile, p: ExponentField, shift: float = 0.0) -> np.ndarray:
    """u_+^{p(r) - shift} at the nodes."""
    _check(u, p)
    return _powers(np.maximum(u.values, 0.0), p.p_values - shift)


def potential(u: RadialProfile, params: ProblemParams) -> float:
    """int_B u_+^{p(x)} / p(x) dx."""
    p = exponent_field(params, u.grid)
    return ball_integral(u.replace(positive_part_power(u, p) / p.p_values), params)


def energy(u: RadialProfile, params: ProblemParams) -> float:
    """I(u) = 1/2 ||nabla^m u||^2 - int_B u_+^p / p."""
    return 0.5 * float(nabla_m_norm_sq(u, params)) - potential(u, params)


def nonlinearity(u: RadialProfile, params: ProblemParams) -> RadialProfile:
    """u_+^{p(r) - 1} as a profile."""
    p = exponent_field(params, u.grid)
    return u.replace(positive_part_power(u, p, 1.0), 0)


def energy_gradient(u: RadialProfile, params: ProblemParams) -> RadialProfile:
    """Sobolev gradient g = u - (-Delta)^{-m} u_+^{p-1}.

    g is the Riesz representative of I'(u) in the inner product
    int_B nabla^m u . nabla^m v on the constrained space.
    """
    w = solve_polyharmonic(nonlinearity(u, params), params)
    return u.replace(u.values - w.values, params.m)


def weak_derivative(u: RadialProfile, phi: RadialProfile, params: ProblemParams) -> float:
    """<I'(u), phi> = int nabla^m u . nabla^m phi - int u_+^{p-1} phi."""
    f = nonlinearity(u, params)
    return bilinear_form(u, phi, params) - ball_integral(f.replace(f.values * phi.values), params)


def brezis_lieb_defect(u_seq_member: RadialProfile, u_limit: RadialProfile, p: ExponentField) -> float:
    """modular(u_j) - modular(u_j - u) - modular(u)."""
    return (modular(u_seq_member, p).modular - modular(u_seq_member - u_limit, p).modular
            - modular(u_limit, p).modular)
