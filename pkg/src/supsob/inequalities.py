"""
Numerical checks of Hardy, Rellich, Hardy-Rellich and fractional-dimension
Sobolev inequalities for radial profiles, and of the pointwise and
supercritical budget estimates in fractional dimension beta.

Every check returns a RatioReport with lhs >= rhs expected, so ratio >= 1
means the inequality holds on the sampled profile.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .bubbles import CutoffSpec, cutoff_value, hardy_rellich_constant
from .radial_core import (
    ConfigurationError,
    ProblemParams,
    RadialGrid,
    RadialProfile,
    aux_rule,
    make_grid,
    nabla_m_values,
    operator_values,
    sphere_measure,
    weighted_integral,
)

# sharpness families are resolved on a finer, more strongly graded grid
SHARPNESS_N = 4096
SHARPNESS_GRADING = 3.0
SHARPNESS_EPS = (1e-1, 1e-2, 1e-3)

# probe radii for the growth condition f(r) <= c / (-ln r) near 0
F2_PROBE = np.logspace(-8, -2, 64)


class PreconditionError(ValueError):
    """Input outside the admissible set of an estimate."""


@dataclass(frozen=True)
class RatioReport:
    lhs: float
    rhs: float
    ratio: float
    constant_used: float
    profile_id: str = ""
    degenerate: bool = False
    margin: Optional[float] = None

    @property
    def holds(self) -> bool:
        return self.degenerate or self.ratio >= 1.0 - 1e-6

    def csv_row(self, suite: str, seed) -> str:
        return f"{suite},{seed},{self.lhs:.17g},{self.rhs:.17g},{self.ratio:.17g},{self.constant_used:.17g}"


CSV_HEADER = "suite,seed,lhs,rhs,ratio,constant"


def ratio_csv(rows: Iterable[tuple], target=None) -> str:
    """CSV `suite,seed,lhs,rhs,ratio,constant` from (suite, seed, RatioReport) triples."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for suite, seed, rep in rows:
        buf.write(rep.csv_row(suite, seed) + "\n")
    text = buf.getvalue()
    if target is not None:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return text


def _report(lhs: float, rhs: float, constant: float, profile_id: str, scale: float) -> RatioReport:
    # both sides zero up to roundoff: 0/0
    if abs(lhs) <= 1e-300 + 1e-28 * scale and abs(rhs) <= 1e-300 + 1e-28 * scale:
        return RatioReport(lhs, rhs, math.nan, constant, profile_id, degenerate=True)
    return RatioReport(lhs, rhs, lhs / rhs if rhs != 0 else math.inf, constant, profile_id)


def _require_zero_at_one(u: RadialProfile, order: int, what: str):
    if u.vanish_order_at_one >= order:
        return
    if order == 1:
        scale = max(1.0, float(np.max(np.abs(u.values))))
        if abs(u.boundary_value()) <= 1e-10 * scale:
            return
    raise PreconditionError(f"{what} needs u to vanish to order {order} at r = 1")


def _aux(u: RadialProfile, j: int = 0, d: int = 0) -> np.ndarray:
    return operator_values(u, j, d, "aux")


# ---------------------------------------------------------------- Hardy / Rellich


def hardy_ratio(u: RadialProfile, a: float, n: Optional[int] = None, profile_id: str = "") -> RatioReport:
    """int_B |grad u|^2 / |x|^a  against  ((n - 2 - a) / 2)^2 int_B u^2 / |x|^{a+2}."""
    n = u.n if n is None else n
    if n != u.n:
        raise ConfigurationError(f"profile dimension {u.n} does not match n={n}")
    if not 0 <= a < n - 2:
        raise ConfigurationError(f"0 <= a < n - 2 required, got a={a}, n={n}")
    _require_zero_at_one(u, 1, "hardy_ratio")
    om = sphere_measure(n)
    du, v = _aux(u, 0, 1), _aux(u)
    c = ((n - 2 - a) / 2.0) ** 2
    lhs = om * weighted_integral(du * du, u.grid, n - 1 - a)
    rhs = c * om * weighted_integral(v * v, u.grid, n - 3 - a)
    return _report(lhs, rhs, c, profile_id, np.max(np.abs(u.values)) ** 2)


def rellich_ratio(u: RadialProfile, a: float, n: Optional[int] = None, profile_id: str = "") -> RatioReport:
    """int_B (Delta u)^2 / |x|^a  against  ((n + a)^2 / 4) int_B |grad u|^2 / |x|^{a+2}."""
    n = u.n if n is None else n
    if n != u.n:
        raise ConfigurationError(f"profile dimension {u.n} does not match n={n}")
    if not 0 <= a < n - 2:
        raise ConfigurationError(f"0 <= a < n - 2 required, got a={a}, n={n}")
    _require_zero_at_one(u, 1, "rellich_ratio")
    om = sphere_measure(n)
    lap, du = _aux(u, 1, 0), _aux(u, 0, 1)
    c = (n + a) ** 2 / 4.0
    lhs = om * weighted_integral(lap * lap, u.grid, n - 1 - a)
    rhs = c * om * weighted_integral(du * du, u.grid, n - 3 - a)
    return _report(lhs, rhs, c, profile_id, np.max(np.abs(u.values)) ** 2)


def hardy_rellich_ratio(u: RadialProfile, params: ProblemParams, profile_id: str = "") -> RatioReport:
    """int_B |nabla^m u|^2  against  C_HR int_B |grad u|^2 / |x|^{2(m-1)}.

    The left side is the squared norm, which makes both sides quadratic in u.
    """
    n, m = params.n, params.m
    if m < 2:
        raise ConfigurationError("hardy_rellich_ratio needs m >= 2")
    if u.n != n:
        raise ConfigurationError(f"profile dimension {u.n} does not match n={n}")
    if u.vanish_order_at_one < m:
        raise PreconditionError(f"hardy_rellich_ratio needs vanish order >= m={m} at r = 1")
    om = sphere_measure(n)
    g, du = nabla_m_values(u, m), _aux(u, 0, 1)
    c = hardy_rellich_constant(n, m)
    lhs = om * weighted_integral(g * g, u.grid, n - 1)
    rhs = c * om * weighted_integral(du * du, u.grid, n + 1 - 2 * m)
    return _report(lhs, rhs, c, profile_id, np.max(np.abs(u.values)) ** 2)


# ---------------------------------------------------------------- test profiles


def random_profile(grid: RadialGrid, n: int, vanish: int, seed: int, even: bool = True) -> RadialProfile:
    """Sum of 1-4 Gaussian bumps times (1 - r^2)^vanish, deterministic per seed.

    Radial bumps are symmetrized, exp(-((r - c)/w)^2) + exp(-((r + c)/w)^2),
    so the profile is smooth at the origin.  With even=False the bumps are
    one-sided and the factor is (1 - s)^vanish.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 5))
    centers = rng.uniform(0.0, 0.8, k)
    widths = rng.uniform(0.08, 0.4, k)
    amps = rng.uniform(0.2, 1.0, k) * rng.choice([-1.0, 1.0], k)
    r = grid.nodes
    v = np.zeros_like(r)
    for c, w, A in zip(centers, widths, amps):
        v += A * np.exp(-(((r - c) / w) ** 2))
        if even:
            v += A * np.exp(-(((r + c) / w) ** 2))
    v *= (1.0 - r * r) ** vanish if even else (1.0 - r) ** vanish
    return RadialProfile(grid, v, n, vanish, even)


def compact_bump(grid: RadialGrid, n: int, lo: float = 0.1, hi: float = 0.9) -> RadialProfile:
    """exp(-1 / (1 - t^2)) with t mapping [lo, hi] onto [-1, 1]; zero outside."""
    t = (grid.nodes - 0.5 * (lo + hi)) / (0.5 * (hi - lo))
    inside = np.abs(t) < 1
    v = np.zeros_like(t)
    v[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return RadialProfile(grid, v, n, 8)


def singular_test_profile(grid: RadialGrid, n: int, gamma: float, eps: float,
                          cutoff: CutoffSpec = CutoffSpec()) -> RadialProfile:
    """(1 - phi(r / eps)) phi(r) r^{-gamma}, zero near the origin and near r = 1."""
    if not 0 < eps < cutoff.inner_radius / cutoff.outer_radius:
        raise ConfigurationError("eps must separate the inner and outer cutoffs")
    r = grid.nodes
    inner = 1.0 - cutoff_value(cutoff, r / eps)
    return RadialProfile(grid, inner * cutoff_value(cutoff, r) * r ** (-gamma), n, 8)


@dataclass(frozen=True)
class SharpnessTrend:
    kind: str
    eps: tuple
    ratios: tuple

    @property
    def monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.ratios, self.ratios[1:]))

    @property
    def final(self) -> float:
        return self.ratios[-1]


def sharpness_trend(kind: str, n: int, order: float, eps_list: Sequence[float] = SHARPNESS_EPS,
                    grid: Optional[RadialGrid] = None) -> SharpnessTrend:
    """Ratios along the singular test family for 'rellich' (order = a) or 'hardy-rellich' (order = m).

    The exponent of r^{-gamma} is the critical one, (n - a - 4)/2 or (n - 2m)/2,
    so both sides grow like ln(1/eps) and the ratio tends to 1 as eps -> 0.
    """
    grid = grid or make_grid(SHARPNESS_N, SHARPNESS_GRADING)
    out = []
    for e in eps_list:
        if kind == "rellich":
            u = singular_test_profile(grid, n, (n - order - 4) / 2.0, e)
            out.append(rellich_ratio(u, order).ratio)
        elif kind == "hardy-rellich":
            m = int(order)
            u = singular_test_profile(grid, n, (n - 2 * m) / 2.0, e)
            out.append(hardy_rellich_ratio(u, ProblemParams(n, m, 1.0)).ratio)
        else:
            raise ConfigurationError(f"unknown sharpness family {kind!r}")
    return SharpnessTrend(kind, tuple(float(e) for e in eps_list), tuple(out))


# ---------------------------------------------------------------- fractional dimension


def _check_beta(beta: float):
    if not beta > 2:
        raise ConfigurationError(f"beta > 2 required, got {beta}")


def frac_energy(w: RadialProfile, beta: float) -> float:
    """int_0^1 w'(s)^2 s^{beta-1} ds."""
    dw = _aux(w, 0, 1)
    return weighted_integral(dw * dw, w.grid, beta - 1)


def frac_power(w: RadialProfile, beta: float, extra: Optional[np.ndarray] = None) -> float:
    """int_0^1 |w(s)|^{2 beta/(beta-2) + extra(s)} s^{beta-1} ds by the grid rule."""
    g = w.grid
    q = 2 * beta / (beta - 2) + (0.0 if extra is None else extra)
    a = np.abs(w.values)
    vals = np.zeros_like(a)
    live = a > 1e-300
    vals[live] = np.exp(np.broadcast_to(q, a.shape)[live] * np.log(a[live]))
    return float(np.sum(g.weights * g.nodes ** (beta - 1) * vals))


def bump_family(grid: RadialGrid, c: float, delta: float, k: float) -> RadialProfile:
    """(1 + ((s - c)/delta)^2)^{-k} minus its value at s = 1 (a 1D profile)."""
    f = lambda s: (1.0 + ((s - c) / delta) ** 2) ** (-k)
    return RadialProfile(grid, f(grid.nodes) - f(1.0), 0, 1, even=False)


def _frac_quotient(w: RadialProfile, beta: float) -> float:
    return frac_power(w, beta) ** ((beta - 2) / beta) / frac_energy(w, beta)


@dataclass(frozen=True)
class SBetaEstimate:
    beta: float
    value: float
    center: float
    width: float
    power: float
    evaluations: int


@lru_cache(maxsize=None)
def _estimate_s_beta(beta: float, N: int, grading: float) -> SBetaEstimate:
    grid = make_grid(N, grading)
    lo = np.array([0.0, 1e-3, 0.1])
    hi = np.array([0.9, 1.0, 4.0 * beta])
    x = np.array([0.3, 0.2, 1.0])
    best = _frac_quotient(bump_family(grid, *x), beta)
    evals = 1
    steps = np.array([0.1, 0.5, 0.5])  # additive, log-width, log-power
    while np.max(steps) > 1e-3:
        improved = False
        for i in range(3):
            for sgn in (1.0, -1.0):
                y = x.copy()
                if i == 0:
                    y[0] += sgn * steps[0]
                else:
                    y[i] *= math.exp(sgn * steps[i])
                y = np.clip(y, lo, hi)
                if np.array_equal(y, x):
                    continue
                val = _frac_quotient(bump_family(grid, *y), beta)
                evals += 1
                if val > best:
                    best, x, improved = val, y, True
                    break
        if not improved:
            steps *= 0.5
    return SBetaEstimate(float(beta), float(best), float(x[0]), float(x[1]), float(x[2]), evals)


def estimate_s_beta(beta: float, grid: Optional[RadialGrid] = None) -> SBetaEstimate:
    """Lower estimate of the sharp constant in
    S_beta int w'^2 s^{beta-1} >= (int |w|^{2beta/(beta-2)} s^{beta-1})^{(beta-2)/beta}.

    Coordinate search over center, width and power of bump_family; the best
    quotient found never exceeds the sharp constant.
    """
    _check_beta(beta)
    grid = grid or make_grid()
    return _estimate_s_beta(float(beta), grid.N, grid.grading)


def frac_sobolev_ratio(w: RadialProfile, beta: float, s_beta: Optional[float] = None,
                       profile_id: str = "") -> RatioReport:
    """S_beta int w'^2 s^{beta-1}  against  (int |w|^{2beta/(beta-2)} s^{beta-1})^{(beta-2)/beta}."""
    _check_beta(beta)
    _require_zero_at_one(w, 1, "frac_sobolev_ratio")
    if s_beta is None:
        s_beta = estimate_s_beta(beta, w.grid).value
    lhs = s_beta * frac_energy(w, beta)
    rhs = frac_power(w, beta) ** ((beta - 2) / beta)
    return _report(lhs, rhs, s_beta, profile_id, np.max(np.abs(w.values)) ** 2)


def pointwise_bound(s, beta: float, a: float) -> np.ndarray:
    """(a (s^{2-beta} - 1) / (beta - 2))^{1/2}."""
    s = np.asarray(s, dtype=float)
    return np.sqrt(a * (s ** (2 - beta) - 1.0) / (beta - 2))


def pointwise_bound_check(w: RadialProfile, beta: float, a: float, profile_id: str = "") -> RatioReport:
    """|w(s)| <= pointwise_bound(s) at every node, for w with energy <= a.

    lhs and rhs are the bound and |w| at the node of least ratio; margin is
    the smallest bound - |w| over the nodes.
    """
    _check_beta(beta)
    e = frac_energy(w, beta)
    if e > a * (1 + 1e-12):
        raise PreconditionError(f"energy {e:.6g} exceeds a={a}")
    s = w.grid.nodes
    b = pointwise_bound(s, beta, a)
    aw = np.abs(w.values)
    live = aw > 0
    if not np.any(live):
        return RatioReport(math.inf, 0.0, math.inf, a, profile_id, margin=math.inf)
    q = np.full_like(aw, math.inf)
    q[live] = b[live] / aw[live]
    i = int(np.argmin(q))
    return RatioReport(float(b[i]), float(aw[i]), float(q[i]), a, profile_id, margin=float(np.min(b - aw)))


# ---------------------------------------------------------------- supercritical budget


@dataclass(frozen=True)
class FExponentSpec:
    """Excess exponent f on [0, 1).

    power: f(r) = r^alpha_or_c.  log_cap: f(r) = c / max(-ln r, 1), which is
    c / (-ln r) near 0 and capped at c for r >= 1/e; c = 0 gives f = 0.
    custom: f is the supplied callable.
    """

    kind: str
    alpha_or_c: float = 1.0
    func: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "power" and not self.alpha_or_c > 0:
            raise ConfigurationError("power exponent must be positive")
        if self.kind == "log_cap" and self.alpha_or_c < 0:
            raise ConfigurationError("log_cap constant must be nonnegative")
        if self.kind == "custom" and self.func is None:
            raise ConfigurationError("custom kind needs func")
        if self.kind not in ("power", "log_cap", "custom"):
            raise ConfigurationError(f"unknown f kind {self.kind!r}")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            return r**self.alpha_or_c
        if self.kind == "log_cap":
            with np.errstate(divide="ignore"):
                return self.alpha_or_c / np.maximum(-np.log(r), 1.0)
        return np.asarray(self.func(r), dtype=float)


@dataclass(frozen=True)
class BudgetRecord:
    r0: float
    C0: float
    bound: float
    f2_constant: float
    log_g_probe_max: float
    limsup_bound: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def f2_constant(f: FExponentSpec) -> float:
    """max of f(r)(-ln r) over the probe radii; domain error if f grows faster near 0."""
    r = F2_PROBE
    fv = f(r)
    if not np.all(np.isfinite(fv)) or np.any(fv < 0):
        i = int(np.flatnonzero(~(np.isfinite(fv) & (fv >= 0)))[0])
        raise ConfigurationError(f"f must be finite and nonnegative; fails at r={r[i]:.3e}")
    prod = fv * -np.log(r)
    i = int(np.argmax(prod))
    # growth towards r -> 0 means no constant c bounds f(r)(-ln r)
    if i == 0 and prod[0] > prod[-1] * (1 + 1e-6) + 1e-300:
        raise ConfigurationError(f"f(r)(-ln r) grows as r -> 0; (f2) fails at r={r[0]:.3e}")
    return float(prod[i])


def _log_g(f: FExponentSpec, r: np.ndarray, a: float, beta: float) -> np.ndarray:
    return 0.5 * f(r) * (math.log(a / (beta - 2)) - (beta - 2) * np.log(r))


def supercritical_budget(f: FExponentSpec, a: float, beta: float, s_beta: float,
                         samples: int = 4096) -> BudgetRecord:
    """r0, C0 = sup_{(0, r0]} g and the bound 1 + C0 (S_beta a)^{beta/(beta-2)}.

    g(r) = (a r^{2-beta} / (beta - 2))^{f(r)/2}; C0 is maximized over
    log-spaced radii in [1e-12 r0, r0].  limsup_bound = c (beta - 2)/2 with c
    from the probe radii, plus the f ln(a/(beta-2))/2 term when positive.
    """
    _check_beta(beta)
    if not a > 0:
        raise ConfigurationError("a > 0 required")
    c = f2_constant(f)
    r0 = (a / (a + beta - 2)) ** (1.0 / (beta - 2))
    r = np.append(r0 * np.logspace(-12, 0, samples)[:-1], r0)
    C0 = float(np.exp(np.max(_log_g(f, r, a, beta))))
    bound = 1.0 + C0 * (s_beta * a) ** (beta / (beta - 2))
    lg = _log_g(f, F2_PROBE, a, beta)
    extra = 0.5 * max(math.log(a / (beta - 2)), 0.0) * float(np.max(f(F2_PROBE)))
    return BudgetRecord(float(r0), C0, float(bound), c, float(np.max(lg)), c * (beta - 2) / 2 + extra)


def supercritical_modular_bound_check(ws: Sequence[RadialProfile], f: FExponentSpec, beta: float, a: float,
                                      s_beta: Optional[float] = None, profile_id: str = "") -> RatioReport:
    """Budget against max over ws of int_0^1 |w|^{2beta/(beta-2) + f(s)} s^{beta-1} ds.

    Each w must have int w'^2 s^{beta-1} <= a.
    """
    _check_beta(beta)
    if not ws:
        raise ConfigurationError("empty profile family")
    if s_beta is None:
        s_beta = estimate_s_beta(beta, ws[0].grid).value
    rec = supercritical_budget(f, a, beta, s_beta)
    worst = 0.0
    for w in ws:
        e = frac_energy(w, beta)
        if e > a * (1 + 1e-12):
            raise PreconditionError(f"energy {e:.6g} exceeds a={a}")
        worst = max(worst, frac_power(w, beta, f(w.grid.nodes)))
    ratio = rec.bound / worst if worst > 0 else math.inf
    return RatioReport(rec.bound, worst, ratio, s_beta, profile_id, margin=rec.bound - worst)


def scale_to_energy(w: RadialProfile, beta: float, a: float) -> RadialProfile:
    """w rescaled so that int w'^2 s^{beta-1} = a."""
    e = frac_energy(w, beta)
    if e <= 0:
        return w
    return w * math.sqrt(a / e)


# ---------------------------------------------------------------- suites


def run_suite(kind: str, trials: int, seed: int, n: int, a: float = 0.0, m: int = 2,
              beta: Optional[float] = None, grid: Optional[RadialGrid] = None) -> list:
    """Randomized suite: list of (suite, seed, RatioReport), seeds seed, seed+1, ...

    kind is one of hardy, rellich, hardy-rellich, frac-sobolev, pointwise.
    """
    grid = grid or make_grid()
    rows = []
    s_beta = None
    if kind in ("frac-sobolev", "pointwise"):
        beta = n / m if beta is None else beta
        if kind == "frac-sobolev":
            s_beta = estimate_s_beta(beta, grid).value
    for t in range(trials):
        sd = seed + t
        pid = f"random-{sd}"
        if kind == "hardy":
            rep = hardy_ratio(random_profile(grid, n, 1, sd), a, profile_id=pid)
        elif kind == "rellich":
            rep = rellich_ratio(random_profile(grid, n, 2, sd), a, profile_id=pid)
        elif kind == "hardy-rellich":
            rep = hardy_rellich_ratio(random_profile(grid, n, m, sd), ProblemParams(n, m, 1.0), profile_id=pid)
        elif kind == "frac-sobolev":
            rep = frac_sobolev_ratio(random_profile(grid, 0, 1, sd, even=False), beta, s_beta, profile_id=pid)
        elif kind == "pointwise":
            w = random_profile(grid, 0, 1, sd, even=False)
            rep = pointwise_bound_check(w, beta, frac_energy(w, beta), profile_id=pid)
        else:
            raise ConfigurationError(f"unknown suite {kind!r}")
        rows.append((kind, sd, rep))
    return rows
