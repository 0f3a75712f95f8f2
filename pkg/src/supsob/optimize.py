"""
Estimation of the supercritical constant

    U = sup { int_B |u|^{2*_m + |x|^alpha} dx : ||nabla^m u||_{L^2(B)} <= 1 },

trial-function gaps U - Sigma, and a mountain-pass solver for
(-Delta)^m u = u_+^{2*_m + |x|^alpha - 1} in B with Dirichlet data.

All gradients are Riesz representatives in the H_0^m inner product,
obtained from solve_polyharmonic.
"""

from __future__ import annotations

import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .bubbles import (
    BubbleSpec,
    CutoffSpec,
    _variable_excess,
    constants_table,
    gradient_defect,
    power_defect,
    truncated_bubble,
)
from .functionals import energy, energy_gradient, exponent_field, modular, positive_part_power, potential
from .inequalities import random_profile
from .radial_core import (
    ConfigurationError,
    NumericalError,
    ProblemParams,
    RadialGrid,
    RadialProfile,
    _space,
    ball_integral,
    bilinear_form,
    make_grid,
    nabla_m_norm_sq,
    solve_polyharmonic,
    sphere_measure,
)


def thread_count() -> int:
    """Worker threads for sweeps and restarts, capped by SUPSOB_THREADS."""
    env = os.environ.get("SUPSOB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"SUPSOB_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _pmap(fn, items):
    # results come back in input order, so output does not depend on thread count
    items = list(items)
    k = min(thread_count(), len(items))
    if k <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(k) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- sharp constant


@dataclass(frozen=True)
class AscentConfig:
    step: float = 0.2
    max_iter: int = 150
    grad_tol: float = 1e-6
    restarts: int = 4
    seed: int = 42
    init_eps_list: tuple = (0.2, 0.1, 0.05, 0.02)

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigurationError("step > 0 required")
        if not self.grad_tol > 0:
            raise ConfigurationError("grad_tol > 0 required")
        if self.max_iter < 0 or self.restarts < 0:
            raise ConfigurationError("max_iter and restarts must be nonnegative")


@dataclass
class OptimReport:
    U_est: float
    best_profile: RadialProfile
    iterations: int
    grad_norm: float
    sigma_ref: float
    strict_gap: float
    history: List[tuple] = field(default_factory=list)
    start_id: str = ""
    converged: bool = True

    def to_dict(self) -> dict:
        return dict(U_est=self.U_est, iterations=self.iterations, grad_norm=self.grad_norm,
                    sigma_ref=self.sigma_ref, strict_gap=self.strict_gap, start_id=self.start_id,
                    converged=self.converged, relative_gap=self.strict_gap / self.sigma_ref)

    def history_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iter,value,grad_norm\n")
        for i, v, g in self.history:
            buf.write(f"{i},{v:.17g},{g:.17g}\n")
        return buf.getvalue()


def _normalize(u: RadialProfile, params: ProblemParams) -> RadialProfile:
    return u / math.sqrt(float(nabla_m_norm_sq(u, params)))


def _modular_value(u: RadialProfile, params: ProblemParams) -> float:
    return modular(u, exponent_field(params, u.grid)).modular


def _ascent_direction(u: RadialProfile, params: ProblemParams):
    # Riesz representative of the modular's derivative, projected on the
    # tangent space of the unit sphere; returns (direction, relative norm)
    p = exponent_field(params, u.grid).p_values
    a = np.abs(u.values)
    f = p * np.sign(u.values) * positive_part_power(u.replace(a), exponent_field(params, u.grid), 1.0)
    G = solve_polyharmonic(u.replace(f, 0), params)
    dot = bilinear_form(G, u, params)
    T = G - u * dot
    tn = math.sqrt(max(float(nabla_m_norm_sq(T, params)), 0.0))
    return T, tn / abs(dot) if dot else math.inf, tn


def _ascend(u0: RadialProfile, params: ProblemParams, cfg: AscentConfig, sid: str):
    u = _normalize(u0, params)
    val = _modular_value(u, params)
    hist = [(0, val, math.nan)]
    tau = cfg.step
    gnorm = math.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        T, gnorm, tn = _ascent_direction(u, params)
        hist[-1] = (hist[-1][0], hist[-1][1], gnorm)
        if gnorm < cfg.grad_tol or tn == 0:
            break
        d = T / tn
        while tau > 1e-12:
            cand = _normalize(u + d * tau, params)
            cv = _modular_value(cand, params)
            if cv > val:
                u, val = cand, cv
                tau = min(1.5 * tau, 1.0)
                break
            tau *= 0.5
        else:
            break
        hist.append((it, val, math.nan))
    return u, val, it, gnorm, hist, sid


def _starts(params: ProblemParams, cfg: AscentConfig, grid: RadialGrid):
    out = []
    for e in cfg.init_eps_list:
        out.append((f"bubble-{e:g}", truncated_bubble(BubbleSpec(e, 1.0, params), CutoffSpec(), grid)))
    for i in range(cfg.restarts):
        out.append((f"random-{cfg.seed + i}", random_profile(grid, params.n, params.m, cfg.seed + i)))
    return out


def maximize_supercritical(params: ProblemParams, cfg: AscentConfig = AscentConfig(),
                           grid: Optional[RadialGrid] = None) -> OptimReport:
    """Multi-start projected ascent of the modular on {||nabla^m u||^2 = 1}.

    Each step moves along the tangential Riesz gradient and renormalizes;
    backtracking accepts only steps that increase the modular, so every
    history is nondecreasing.  grad_norm is the tangential gradient norm
    relative to <G, u>.  Starts are truncated bubbles at init_eps_list and
    cfg.restarts seeded random profiles; the best result is reported.
    """
    grid = grid or make_grid()
    ct = constants_table(params)
    solve_polyharmonic(RadialProfile(grid, np.zeros(grid.N), params.n), params)  # warm caches
    runs = _pmap(lambda s: _ascend(s[1], params, cfg, s[0]), _starts(params, cfg, grid))
    u, val, it, gnorm, hist, sid = max(runs, key=lambda r: r[1])
    converged = gnorm < cfg.grad_tol
    if not converged:
        warnings.warn(f"ascent stopped with relative gradient {gnorm:.3e} after {it} iterations", stacklevel=2)
    return OptimReport(val, u, sum(r[2] for r in runs), gnorm, ct.Sigma, val - ct.Sigma, hist, sid, converged)


# the widest admissible transition, 1 on B_{1/2} and flat to all orders at
# r = 1; it makes the cutoff's share of the gradient norm several times
# smaller than the default [1/2, 3/4] transition
GAP_CUTOFF = CutoffSpec(0.5, 1.0)


def strict_gap_trial(params: ProblemParams, eps: float, cutoff: CutoffSpec = GAP_CUTOFF,
                     grid: Optional[RadialGrid] = None) -> float:
    """modular(v) - Sigma for v = eta u*_eps / ||nabla^m (eta u*_eps)||.

    Any amplitude in front of eta u*_eps cancels in v.  With
    N^2 = grad_integral + D_g and int (eta u*)^{2*} = power_integral + D_p,

        modular(v) - Sigma = B (N^{-2*} - G^{-2*/2}) + N^{-2*} D_p + excess(v),

    where excess(v) = int v^{2*} (v^{|x|^alpha} - 1), so the small gap is
    assembled without cancellation.
    """
    if not 0 < eps <= 0.1:
        raise ConfigurationError("eps must lie in (0, 0.1]")
    grid = grid or make_grid()
    ct = constants_table(params)
    ts = params.two_m_star
    G, B = ct.grad_integral, ct.power_integral
    Dg = gradient_defect(params, eps, cutoff, grid)
    Dp = power_defect(params, eps, cutoff, grid)
    inv = G ** (-ts / 2) * math.exp(-ts / 2 * math.log1p(Dg / G))  # N^{-2*}
    norm_part = B * G ** (-ts / 2) * math.expm1(-ts / 2 * math.log1p(Dg / G)) + inv * Dp
    v = truncated_bubble(BubbleSpec(eps, 1.0, params), cutoff, grid).values * math.sqrt(inv ** (2 / ts))
    r = grid.nodes
    excess = sphere_measure(params.n) * np.sum(grid.weights * r ** (params.n - 1) * _variable_excess(v, params, r, False))
    return float(norm_part + excess)


def strict_gap_model(params: ProblemParams, eps: float) -> float:
    """Leading term (Sigma / power_integral) C_1 eps^alpha |ln eps| of the trial gap."""
    ct = constants_table(params)
    if ct.script_C1 is None:
        raise ConfigurationError("no leading term for alpha >= n")
    return ct.Sigma / ct.power_integral * ct.script_C1 * eps**params.alpha * abs(math.log(eps))


@dataclass
class SweepTable:
    rows: list  # (alpha, U_est, gap)
    sigma: float

    @property
    def tail_ok(self) -> bool:
        gaps = [g for _, _, g in self.rows]
        small = gaps[-1] < 0.02 * self.sigma
        mono = all(b <= a for a, b in zip(gaps[-3:], gaps[-2:]))
        return small and mono

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("alpha,U_est,gap,relative_gap\n")
        for a, u, g in self.rows:
            buf.write(f"{a:.17g},{u:.17g},{g:.17g},{g / self.sigma:.17g}\n")
        return buf.getvalue()


def alpha_sweep(params: ProblemParams, alpha_list: Sequence[float], cfg: AscentConfig = AscentConfig(),
                grid: Optional[RadialGrid] = None) -> SweepTable:
    """maximize_supercritical for each alpha; rows (alpha, U_est, U_est - Sigma)."""
    al = [float(a) for a in alpha_list]
    if any(b <= a for a, b in zip(al, al[1:])):
        raise ConfigurationError("alpha_list must be increasing")
    grid = grid or make_grid()
    sigma = constants_table(params).Sigma
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for a in al:
            rep = maximize_supercritical(ProblemParams(params.n, params.m, a), cfg, grid)
            rows.append((a, rep.U_est, rep.strict_gap))
    return SweepTable(rows, sigma)


# ---------------------------------------------------------------- mountain pass


def choose_R(params: ProblemParams, eps: float, cutoff: CutoffSpec = CutoffSpec(),
             grid: Optional[RadialGrid] = None) -> float:
    """Smallest R in {2, 4, 8, ...} with energy(R eta u*_eps) < 0."""
    grid = grid or make_grid()
    u = truncated_bubble(BubbleSpec(eps, 1.0, params), cutoff, grid)
    R = 1.0
    while True:
        R *= 2.0
        if R > 2.0**40:
            raise NumericalError("energy stays nonnegative up to R = 2^40", eps=eps)
        if energy(u * R, params) < 0:
            return R


@dataclass(frozen=True)
class MountainPassConfig:
    P: int = 21
    eps: float = 0.05
    step: float = 0.5
    path_iter: int = 200
    polish_iter: int = 400
    grad_tol: float = 1e-7

    def __post_init__(self):
        if self.P < 3:
            raise ConfigurationError("P >= 3 required")
        if not 0 < self.eps <= 0.2:
            raise ConfigurationError("eps must lie in (0, 0.2]")
        if not (self.step > 0 and self.grad_tol > 0):
            raise ConfigurationError("step and grad_tol must be positive")


@dataclass
class PathState:
    t_nodes: np.ndarray
    profiles: list
    endpoint_R: float
    level: float


@dataclass
class PdeSolution:
    u: RadialProfile
    level_c: float
    weak_residual: float
    min_interior_value: float
    ps_l_squared: float
    path: Optional[PathState] = None
    history: list = field(default_factory=list)
    iterations: int = 0

    def to_dict(self, params: ProblemParams) -> dict:
        ct = constants_table(params)
        return dict(level_c=self.level_c, weak_residual=self.weak_residual,
                    min_interior_value=self.min_interior_value, ps_l_squared=self.ps_l_squared,
                    level_bound=params.m / params.n * ct.S_pow, iterations=self.iterations,
                    path_level=None if self.path is None else self.path.level)


def _hnorm(u: RadialProfile, params: ProblemParams) -> float:
    return math.sqrt(max(float(nabla_m_norm_sq(u, params)), 0.0))


def _respread(profiles: list, params: ProblemParams) -> tuple:
    # equal H_0^m arclength along the polyline, endpoints fixed
    seg = np.array([_hnorm(b - a, params) for a, b in zip(profiles, profiles[1:])])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return profiles, s
    target = np.linspace(0.0, s[-1], len(profiles))
    out = [profiles[0]]
    for t in target[1:-1]:
        j = min(int(np.searchsorted(s, t, side="right")) - 1, len(seg) - 1)
        lam = (t - s[j]) / seg[j] if seg[j] > 0 else 0.0
        out.append(profiles[j] * (1 - lam) + profiles[j + 1] * lam)
    out.append(profiles[-1])
    return out, target


def ray_maximizer(u: RadialProfile, params: ProblemParams) -> RadialProfile:
    """s u with s > 0 maximizing energy(s u), i.e. ||s u||^2 = int (s u)_+^p."""
    a = float(nabla_m_norm_sq(u, params))
    p = exponent_field(params, u.grid)
    up = np.maximum(u.values, 0.0)
    if not np.any(up > 0):
        raise NumericalError("ray through a nonpositive profile has no maximum")
    W = sphere_measure(params.n) * u.grid.weights * u.grid.nodes ** (params.n - 1)
    live = up > 1e-300
    lu = np.log(up[live])
    pe = p.p_values[live]
    lw = np.log(W[live])
    # h(t) = ln int s^{p-2} u_+^p - ln a with s = e^t is increasing in t
    h = lambda t: float(logsumexp(lw + pe * lu + (pe - 2) * t)) - math.log(a)
    lo, hi = -1.0, 1.0
    while h(lo) > 0:
        lo *= 2
    while h(hi) < 0:
        hi *= 2
    t = brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return u * math.exp(t)


def _descend(u: RadialProfile, params: ProblemParams, tau: float, e0: Optional[float] = None):
    # Sobolev-gradient step of length at most 10% of ||u||, halved until
    # the energy decreases; returns (new profile, gradient)
    g = energy_gradient(u, params)
    gn = _hnorm(g, params)
    if gn == 0:
        return u, g
    step = min(tau, 0.1 * max(_hnorm(u, params), 1e-300) / gn)
    e0 = energy(u, params) if e0 is None else e0
    for _ in range(40):
        cand = u - g * step
        if energy(cand, params) < e0:
            return cand, g
        step *= 0.5
    return u, g


def mountain_pass_solve(params: ProblemParams, cfg: MountainPassConfig = MountainPassConfig(),
                        grid: Optional[RadialGrid] = None) -> PdeSolution:
    """Critical point of I(u) = 1/2 ||nabla^m u||^2 - int u_+^p / p by path deformation.

    The initial path t eta u*_eps, t in [0, R] with R = choose_R, is held at P
    nodes.  Each sweep takes a Sobolev-gradient descent step at the node of
    highest energy (lowest index on ties), half-steps at its neighbours and
    re-spreads the interior nodes by H_0^m arclength.  The path is then
    replaced by the ray through its top node, and the top node is polished
    by alternating ray maximization and descent steps until the Riesz norm of
    I'(u) falls below grad_tol.
    """
    if params.alpha > params.n - 2 * params.m:
        warnings.warn("alpha > n - 2m: existence of a mountain-pass solution is not guaranteed", stacklevel=2)
    grid = grid or make_grid()
    R = choose_R(params, cfg.eps, grid=grid)
    base = truncated_bubble(BubbleSpec(cfg.eps, 1.0, params), CutoffSpec(), grid)
    t = np.linspace(0.0, R, cfg.P)
    path = [base * ti for ti in t]
    E = [energy(q, params) for q in path]
    hist = []
    tau = cfg.step
    for it in range(cfg.path_iter):
        k = int(np.argmax(E[1:-1])) + 1
        new, g = _descend(path[k], params, tau, E[k])
        gn = _hnorm(g, params)
        hist.append(("path", it, E[k], gn))
        if gn < cfg.grad_tol:
            break
        path[k] = new
        for j in (k - 1, k + 1):
            if 0 < j < cfg.P - 1:
                path[j] = _descend(path[j], params, 0.5 * tau)[0]
        path, _ = _respread(path, params)
        E = [energy(q, params) for q in path]
        if max(E[1:-1]) <= 0:
            raise NumericalError("path collapsed to the origin; try a smaller eps for the initial path",
                                 level=max(E))
    k = int(np.argmax(E[1:-1])) + 1
    state = PathState(t, path, R, float(E[k]))
    u = ray_maximizer(path[k], params)
    gn = math.inf
    it = 0
    for it in range(cfg.polish_iter):
        g = energy_gradient(u, params)
        gn = _hnorm(g, params)
        hist.append(("polish", it, energy(u, params), gn))
        if gn < cfg.grad_tol:
            break
        u = ray_maximizer(u - g * cfg.step, params)
    u = u.replace(u.values, params.m)
    c = energy(u, params)
    if c <= 0:
        raise NumericalError("level collapsed to zero; try a richer initial path", level=c)
    l2 = ball_integral(u.replace(positive_part_power(u, exponent_field(params, grid))), params)
    if gn >= cfg.grad_tol:
        warnings.warn(f"mountain pass stopped with residual {gn:.3e}", stacklevel=2)
    return PdeSolution(u, float(c), float(gn), float(np.min(u.values)), float(l2), state, hist,
                       len(hist))


def pde_residual_details(u: RadialProfile, params: ProblemParams) -> dict:
    """Weak residual sup_phi |<I'(u), phi>| / ||nabla^m phi|| and boundary values.

    The supremum over the discrete space equals the H_0^m norm of the Riesz
    representative u - (-Delta)^{-m} u_+^{p-1}.  Boundary violations are
    |d^j u / dr^j (1)| of the unconstrained spline fit, j = 0..m-1.
    """
    m = params.m
    if not np.any(u.values):
        return dict(weak_residual=0.0, boundary=[0.0] * m)
    weak = _hnorm(energy_gradient(u, params), params)
    sp = _space(u.grid, u.even)
    c = u.coefficients(0)
    bnd = [abs(float((sp.basis(np.array([1.0]), j, 0) @ c)[0])) for j in range(m)]
    return dict(weak_residual=weak, boundary=bnd)


def pde_residual(u: RadialProfile, params: ProblemParams) -> float:
    """max of the weak residual and the boundary violations."""
    d = pde_residual_details(u, params)
    return float(max([d["weak_residual"]] + d["boundary"]))


@dataclass(frozen=True)
class PSDiagnostics:
    l_squared: float
    level_c: float
    weighted_modular: float
    eq12_relative_error: float
    lsq_vs_level_relative_error: float
    compactness_bound: float

    @property
    def ok(self) -> bool:
        return (self.eq12_relative_error < 0.05 and self.lsq_vs_level_relative_error < 0.05
                and self.l_squared < self.compactness_bound)

    def to_dict(self) -> dict:
        return dict(self.__dict__, ok=self.ok)


def ps_diagnostics(history: Sequence[RadialProfile], params: ProblemParams) -> PSDiagnostics:
    """Limit relations at the last iterate u of a (Palais-Smale) history.

    l^2 = int u_+^p, c = I(u), weighted = int u_+^p / p.  Reports the relative
    errors of weighted = l^2/2 - c and of l^2 = (n/m) c, and S^{-n/m}.
    """
    u = history[-1]
    p = exponent_field(params, u.grid)
    l2 = ball_integral(u.replace(positive_part_power(u, p)), params)
    c = energy(u, params)
    wmod = potential(u, params)
    e12 = abs(wmod - (l2 / 2 - c)) / (l2 / 2)
    e45 = abs(l2 - params.n / params.m * c) / l2
    return PSDiagnostics(float(l2), float(c), float(wmod), float(e12), float(e45),
                         float(constants_table(params).S_pow))


def level_lower_bound(U_est: float, params: ProblemParams) -> float:
    """rho = max over tau in (0, 1] of tau^2/2 - tau^{2*_m} U_est."""
    ts = params.two_m_star
    tau = min((1.0 / (ts * U_est)) ** (1.0 / (ts - 2)), 1.0) if U_est > 0 else 1.0
    return tau**2 / 2 - tau**ts * U_est
