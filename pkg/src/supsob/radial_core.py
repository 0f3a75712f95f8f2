"""
Radial discretization of the unit ball.

Profiles u(r) are stored as values on a composite Gauss-Legendre grid whose
panels cluster at r = 0 and r = 1.  Derivatives come from a least-squares fit
onto B-splines with graded knots: even splines for radial profiles, so every
odd derivative vanishes at the origin and (n - 1) u'/r stays bounded, and
plain splines for one-dimensional profiles in the variable s.

Integrals of derivative quantities use Gauss rules aligned with the spline
knots.  On the spline space these rules are exact, so the discrete bilinear
form is symmetric and the polyharmonic Galerkin solve is its exact inverse.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import BSpline

SPLINE_DEGREE = 11
PANEL_ORDER = 8
AUX_ORDER = 18
# stands in for "all derivatives vanish" (compactly supported profiles)
VANISH_MAX = 8
# the fit never drops more boundary functions than this
_FIT_VANISH_CAP = 6


class ConfigurationError(ValueError):
    """Invalid parameters or grid configuration."""


class NumericalError(RuntimeError):
    """A discrete system could not be solved; carries diagnostics."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in R^n, 2 pi^{n/2} / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class ProblemParams:
    """Dimension n, derivative order m and supercritical weight alpha."""

    n: int
    m: int
    alpha: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or int(self.m) != self.m:
            raise ConfigurationError("n and m must be integers")
        if self.n < 3:
            raise ConfigurationError("n >= 3 required")
        if self.m < 1:
            raise ConfigurationError("m >= 1 required")
        if not self.n > 2 * self.m:
            raise ConfigurationError("n > 2m required")
        if not self.alpha > 0:
            raise ConfigurationError("alpha > 0 required")

    @property
    def two_m_star(self) -> float:
        return 2.0 * self.n / (self.n - 2 * self.m)

    @property
    def omega(self) -> float:
        return sphere_measure(self.n)

    def exponent(self, r):
        """p(r) = 2*_m + r^alpha."""
        return self.two_m_star + np.asarray(r, dtype=float) ** self.alpha


@dataclass(frozen=True)
class QuadratureRule:
    kind: str
    panels: int
    order: int


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes and weights of a composite Gauss rule on (0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    mapping_id: str
    N: int
    grading: float

    @property
    def rule(self) -> QuadratureRule:
        return QuadratureRule("gauss-legendre-graded-panels", self.N // PANEL_ORDER, PANEL_ORDER)

    @property
    def breakpoints(self) -> np.ndarray:
        return _panel_breaks(self.N // PANEL_ORDER, self.grading)

    def __len__(self):
        return self.N


def _panel_breaks(panels: int, grading: float) -> np.ndarray:
    t = np.linspace(0.0, 1.0, panels + 1)
    tg = t**grading
    return tg / (tg + (1.0 - t) ** grading)


def make_grid(N: int = 512, grading: float = 2.0) -> RadialGrid:
    """Composite Gauss-Legendre grid on graded panels of [0, 1].

    Panel breakpoints are t^g / (t^g + (1 - t)^g) at uniform t, which clusters
    them at both ends.  Each panel carries an 8-point Gauss rule.

    Args:
        N: number of nodes, a multiple of 8 and at least 16.
        grading: exponent g > 0; g = 1 gives uniform panels.
    """
    if int(N) != N or N < 16:
        raise ConfigurationError(f"N >= 16 required, got {N}")
    if N % PANEL_ORDER:
        raise ConfigurationError(f"N must be a multiple of {PANEL_ORDER}, got {N}")
    if not grading > 0:
        raise ConfigurationError("grading > 0 required")
    return _make_grid(int(N), float(grading))


@lru_cache(maxsize=None)
def _make_grid(N: int, grading: float) -> RadialGrid:
    x, w = np.polynomial.legendre.leggauss(PANEL_ORDER)
    b = _panel_breaks(int(N) // PANEL_ORDER, float(grading))
    h = np.diff(b)
    nodes = (b[:-1, None] + h[:, None] * (x + 1) / 2).ravel()
    weights = (h[:, None] * w / 2).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return RadialGrid(nodes, weights, f"blend-power-g{grading:g}", int(N), float(grading))


def _knot_breaks(N: int) -> np.ndarray:
    # local spacing max(rho0, min(theta r, dmax)), coarsened for small grids
    s = 512.0 / N
    rho0, theta, dmax = 3e-4 * s * s, 0.1 * math.sqrt(s), 0.02 * s
    b = [0.0, rho0]
    while b[-1] < 1.0:
        b.append(b[-1] + max(rho0, min(theta * b[-1], dmax)))
    b = np.array(b)
    b[-1] = 1.0
    if b[-1] - b[-2] < 0.5 * max(rho0, min(theta * b[-3], dmax)):
        b = np.delete(b, -2)
    return b


def _lap_terms(n: int, j: int) -> dict:
    """Coefficients a_l with Delta^j u = sum_l a_l r^(l - 2j) u^(l)."""
    a = {0: 1.0}
    for it in range(j):
        nxt = {}
        for l, c in a.items():
            e = l - 2 * it
            for ll, cc in ((l, c * (e * (e - 1) + (n - 1) * e)), (l + 1, c * (2 * e + n - 1)), (l + 2, c)):
                if cc != 0:
                    nxt[ll] = nxt.get(ll, 0.0) + cc
        a = nxt
    return a


class _SplineSpace:
    """Spline space attached to one grid."""

    def __init__(self, grid: RadialGrid, even: bool):
        p = SPLINE_DEGREE
        b = _knot_breaks(grid.N)
        self.grid, self.even, self.p, self.breaks = grid, even, p, b
        if even:
            # no knot at 0: the central piece on [-b1, b1] is one even polynomial
            interior = np.concatenate([-b[-2:0:-1], b[1:-1]])
            t = np.concatenate([[-1.0] * (p + 1), interior, [1.0] * (p + 1)])
            nb = len(t) - p - 1
            h = (nb + 1) // 2
            C = np.zeros((nb, h))
            for j in range(h):
                C[j, h - 1 - j] += 1.0
                if nb - 1 - j != j:
                    C[nb - 1 - j, h - 1 - j] += 1.0
        else:
            t = np.concatenate([[0.0] * (p + 1), b[1:-1], [1.0] * (p + 1)])
            nb = len(t) - p - 1
            C = np.eye(nb)
        self.spline = BSpline(t, C, p, extrapolate=False)
        self.size = C.shape[1]
        xg, wg = np.polynomial.legendre.leggauss(AUX_ORDER)
        hb = np.diff(b)
        self.aux_nodes = (b[:-1, None] + hb[:, None] * (xg + 1) / 2).ravel()
        self.aux_weights = (hb[:, None] * wg / 2).ravel()
        self._cache = {}

    def points(self, on: str) -> np.ndarray:
        return self.grid.nodes if on == "grid" else self.aux_nodes

    def basis(self, x, nu=0, k=0) -> np.ndarray:
        B = self.spline(np.clip(x, 0.0, 1.0), nu)
        return B[:, : self.size - k] if k else B

    def fit_matrix(self, k: int):
        key = ("fit", k)
        if key not in self._cache:
            sw = np.sqrt(self.grid.weights)
            A = sw[:, None] * self.basis(self.grid.nodes, 0, k)
            d = 1.0 / np.linalg.norm(A, axis=0)
            Q, R = np.linalg.qr(A * d)
            self._cache[key] = (sw, d, Q, R)
        return self._cache[key]

    def fit(self, values: np.ndarray, k: int) -> np.ndarray:
        sw, d, Q, R = self.fit_matrix(k)
        return d * sla.solve_triangular(R, Q.T @ (sw * values))

    def operator(self, on: str, n: int, j: int, d: int, k: int) -> np.ndarray:
        """Matrix of (d/dr)^d Delta^j acting on coefficients, at grid or aux points."""
        key = ("op", on, n, j, d, k)
        if key in self._cache:
            return self._cache[key]
        x = self.points(on)
        if j == 0:
            M = self.basis(x, d, k)
        elif not self.even:
            raise ValueError("Laplacians need an even (radial) profile")
        else:
            M = self._radial_operator(x, n, j, d, k)
        M.setflags(write=False)
        self._cache[key] = M
        return M

    def _radial_operator(self, x, n, j, d, k):
        b1 = self.breaks[1]
        out = np.empty((len(x), self.size - k))
        far = x >= b1
        xf = x[far][:, None]
        acc = 0.0
        for l, c in _lap_terms(n, j).items():
            e = l - 2 * j
            if d == 0:
                acc = acc + c * xf**e * self.basis(x[far], l, k)
            else:
                acc = acc + c * (e * xf ** (e - 1) * self.basis(x[far], l, k) + xf**e * self.basis(x[far], l + 1, k))
        out[far] = acc
        # central piece: exact algebra on an even polynomial sum_q a_q r^{2q}
        xn = x[~far][:, None]
        acc = np.zeros((xn.shape[0], self.size - k))
        zero = np.zeros(1)
        for q in range(self.p // 2 + 1):
            f = 1.0
            for i in range(j):
                f *= (2 * q - 2 * i) * (2 * q - 2 * i + n - 2)
            e = 2 * q - 2 * j
            if f == 0 or (d == 1 and e == 0):
                continue
            a = self.basis(zero, 2 * q, k) / math.factorial(2 * q)
            acc += f * xn**e * a if d == 0 else f * e * xn ** (e - 1) * a
        out[~far] = acc
        return out


@lru_cache(maxsize=None)
def _space_cached(N: int, grading: float, even: bool) -> _SplineSpace:
    return _SplineSpace(make_grid(N, grading), even)


def _space(grid: RadialGrid, even: bool = True) -> _SplineSpace:
    if make_grid(grid.N, grid.grading) is not grid:
        raise ConfigurationError("grids must come from make_grid")
    return _space_cached(grid.N, grid.grading, even)


def aux_rule(grid: RadialGrid):
    """Knot-aligned Gauss nodes and weights on (0, 1) used for derivative integrals."""
    sp = _space(grid)
    return sp.aux_nodes, sp.aux_weights


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Values of a radial function on a grid.

    vanish_order_at_one counts the derivatives (starting with the value) known
    to vanish at r = 1.  even=False marks a one-dimensional profile in s with
    no parity at the origin.
    """

    grid: RadialGrid
    values: np.ndarray
    n: int
    vanish_order_at_one: int = 0
    even: bool = True
    _coef: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.N,):
            raise ConfigurationError(f"expected {self.grid.N} values, got shape {v.shape}")
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise ValueError(f"non-finite value at node {bad[0]} (r={self.grid.nodes[bad[0]]:.3e})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "vanish_order_at_one", int(min(self.vanish_order_at_one, VANISH_MAX)))

    @classmethod
    def from_function(cls, grid, f: Callable, n: int, vanish_order_at_one: int = 0, even: bool = True):
        return cls(grid, f(grid.nodes), n, vanish_order_at_one, even)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def replace(self, values, vanish_order_at_one=None) -> "RadialProfile":
        k = self.vanish_order_at_one if vanish_order_at_one is None else vanish_order_at_one
        return RadialProfile(self.grid, values, self.n, k, self.even)

    def _check(self, other: "RadialProfile"):
        if other.grid is not self.grid:
            raise ConfigurationError("profiles live on different grids")

    def __add__(self, other):
        if isinstance(other, RadialProfile):
            self._check(other)
            return self.replace(self.values + other.values, min(self.vanish_order_at_one, other.vanish_order_at_one))
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, RadialProfile):
            self._check(other)
            return self.replace(self.values - other.values, min(self.vanish_order_at_one, other.vanish_order_at_one))
        return NotImplemented

    def __mul__(self, c):
        if np.isscalar(c):
            return self.replace(float(c) * self.values)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    def __neg__(self):
        return self * -1.0

    def coefficients(self, k: Optional[int] = None) -> np.ndarray:
        """Spline coefficients of the least-squares fit.

        By default the fit drops the boundary functions that the declared
        vanish order rules out, so the fitted spline vanishes to that order.
        """
        if k is None:
            k = min(self.vanish_order_at_one, _FIT_VANISH_CAP)
        if k not in self._coef:
            self._coef[k] = _space(self.grid, self.even).fit(self.values, k)
        return self._coef[k]

    def fit_k(self) -> int:
        return min(self.vanish_order_at_one, _FIT_VANISH_CAP)

    def evaluate(self, x) -> np.ndarray:
        """Spline interpolant at arbitrary points of [0, 1]."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = self.fit_k()
        return _space(self.grid, self.even).basis(x, 0, k) @ self.coefficients(k)

    def boundary_value(self) -> float:
        return float(self.evaluate(1.0)[0])

    def to_csv(self, target=None) -> str:
        """Serialize as CSV `r,value` with 17 significant digits."""
        buf = io.StringIO()
        buf.write("r,value\n")
        for x, v in zip(self.grid.nodes, self.values):
            buf.write(f"{x:.17g},{v:.17g}\n")
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, grid: RadialGrid, n: int, vanish_order_at_one: int = 0, even: bool = True):
        """Read a CSV written by to_csv; the nodes must match the grid."""
        text = source if "\n" in str(source) else open(source).read()
        rows = text.strip().splitlines()
        if rows[0].strip() != "r,value":
            raise ValueError("expected header r,value")
        data = np.array([[float(x) for x in row.split(",")] for row in rows[1:]])
        if data.shape[0] != grid.N or not np.allclose(data[:, 0], grid.nodes, rtol=1e-15, atol=0):
            raise ConfigurationError("CSV nodes do not match the grid")
        return cls(grid, data[:, 1], n, vanish_order_at_one, even)


def _n_of(f: RadialProfile, params) -> int:
    if params is None:
        return f.n
    n = params.n if isinstance(params, ProblemParams) else int(params)
    if n != f.n:
        raise ConfigurationError(f"profile dimension {f.n} does not match n={n}")
    return n


def ball_integral(f: RadialProfile, params: Union[ProblemParams, int, None] = None) -> float:
    """omega_{n-1} * int_0^1 f(r) r^{n-1} dr by the grid rule."""
    n = _n_of(f, params)
    g = f.grid
    return float(sphere_measure(n) * np.sum(g.weights * g.nodes ** (n - 1) * f.values))


def operator_values(u: RadialProfile, j: int = 0, d: int = 0, on: str = "grid", k: Optional[int] = None) -> np.ndarray:
    """(d/dr)^d Delta^j u at the grid nodes or at the knot-aligned aux nodes."""
    k = u.fit_k() if k is None else k
    sp = _space(u.grid, u.even)
    return sp.operator(on, u.n, j, d, k) @ u.coefficients(k)


def nabla_m_values(u: RadialProfile, m: int, on: str = "aux") -> np.ndarray:
    """Radial component of nabla^m u: Delta^{m/2} u or d/dr Delta^{(m-1)/2} u."""
    return operator_values(u, m // 2, m % 2, on)


def radial_derivative(u: RadialProfile) -> RadialProfile:
    """u'(r) at the grid nodes."""
    return u.replace(operator_values(u, 0, 1), max(u.vanish_order_at_one - 1, 0))


def radial_laplacian(u: RadialProfile, n: Optional[int] = None) -> RadialProfile:
    """u'' + (n-1) u'/r at the grid nodes; regular at r = 0 by even symmetry."""
    if n is not None and n != u.n:
        u = RadialProfile(u.grid, u.values, n, u.vanish_order_at_one, u.even)
    return u.replace(operator_values(u, 1, 0), max(u.vanish_order_at_one - 2, 0))


def weighted_integral(values_aux: np.ndarray, grid: RadialGrid, power: float) -> float:
    """int_0^1 f(r) r^power dr for f sampled at the aux nodes."""
    x, w = aux_rule(grid)
    return float(np.sum(w * x**power * values_aux))


class FlaggedFloat(float):
    """A float carrying a warning flag in `insufficient_vanish_order`."""

    insufficient_vanish_order: bool = False


def nabla_m_norm_sq(u: RadialProfile, params: ProblemParams) -> FlaggedFloat:
    """int_B |nabla^m u|^2 dx.

    The value is computed for any profile; the returned float has
    insufficient_vanish_order set when u is not declared to vanish to order m
    at r = 1.
    """
    n = _n_of(u, params)
    g = nabla_m_values(u, params.m)
    val = FlaggedFloat(sphere_measure(n) * weighted_integral(g * g, u.grid, n - 1))
    val.insufficient_vanish_order = u.vanish_order_at_one < params.m
    return val


def bilinear_form(u: RadialProfile, v: RadialProfile, params: ProblemParams) -> float:
    """int_B nabla^m u . nabla^m v dx."""
    u._check(v)
    n = _n_of(u, params)
    gu = nabla_m_values(u, params.m)
    gv = nabla_m_values(v, params.m)
    return float(sphere_measure(n) * weighted_integral(gu * gv, u.grid, n - 1))


def to_fractional_profile(u: RadialProfile, m: int) -> RadialProfile:
    """w(s) = u(s^{1/m}) sampled at the grid nodes (a one-dimensional profile)."""
    if m < 1:
        raise ConfigurationError("m >= 1 required")
    if m == 1:
        return u
    s = u.grid.nodes
    return RadialProfile(u.grid, u.evaluate(s ** (1.0 / m)), u.n, u.vanish_order_at_one, even=False)


def fractional_derivative(u: RadialProfile, m: int, s) -> np.ndarray:
    """w'(s) for w(s) = u(s^{1/m}), by the chain rule on the spline of u."""
    s = np.asarray(s, dtype=float)
    sp = _space(u.grid, u.even)
    du = sp.basis(s ** (1.0 / m), 1, u.fit_k()) @ u.coefficients()
    return du * s ** (1.0 / m - 1) / m


def _s_rule(grid: RadialGrid):
    # aux panels with the first one split geometrically toward s = 0, where
    # w'(s)^2 s^{n/m-1} behaves like a fractional power of s
    b = _space(grid).breaks
    edges = np.unique(np.concatenate([[0.0], b[1] * 0.15 ** np.arange(60, -1, -1), b[2:]]))
    xg, wg = np.polynomial.legendre.leggauss(AUX_ORDER)
    h = np.diff(edges)
    return (edges[:-1, None] + h[:, None] * (xg + 1) / 2).ravel(), (h[:, None] * wg / 2).ravel()


def change_of_variable_sides(u: RadialProfile, params: ProblemParams):
    """Both sides of int_0^1 u'(r)^2 r^{n-2m+1} dr = m int_0^1 w'(s)^2 s^{n/m-1} ds.

    Returns (lhs, rhs) with w(s) = u(s^{1/m}).  The right side is integrated
    in s on its own graded rule.
    """
    n, m = params.n, params.m
    du = operator_values(u, 0, 1, "aux")
    lhs = weighted_integral(du * du, u.grid, n - 2 * m + 1)
    s, ws = _s_rule(u.grid)
    dw = fractional_derivative(u, m, s)
    rhs = m * float(np.sum(ws * dw * dw * s ** (n / m - 1)))
    return lhs, rhs


class _Polyharmonic:
    """Galerkin system for (-Delta)^m on splines vanishing to order m at r = 1."""

    def __init__(self, grid: RadialGrid, n: int, m: int):
        sp = _space(grid)
        self.sp, self.n, self.m = sp, n, m
        om = sphere_measure(n)
        G = sp.operator("aux", n, m // 2, m % 2, m)
        Wa = om * sp.aux_weights * sp.aux_nodes ** (n - 1)
        K = G.T @ (Wa[:, None] * G)
        self.K = 0.5 * (K + K.T)
        self.Phi = sp.basis(grid.nodes, 0, m)
        self.Wg = om * grid.weights * grid.nodes ** (n - 1)
        M = self.Phi.T @ (self.Wg[:, None] * self.Phi)
        self.M = 0.5 * (M + M.T)
        self.K_fac = self._factor(self.K, "stiffness")
        self.M_fac = self._factor(self.M, "mass")

    @staticmethod
    def _factor(A, name):
        d = 1.0 / np.sqrt(np.diag(A))
        try:
            return d, sla.cho_factor(A * d[:, None] * d[None, :])
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"{name} matrix is not positive definite", size=A.shape[0],
                                 min_diag=float(np.min(np.diag(A)))) from exc

    @staticmethod
    def _solve(fac, b):
        d, cf = fac
        return d * sla.cho_solve(cf, d * b)

    def _refined(self, A, fac, b, steps=3):
        # residuals in extended precision keep A c = b accurate far below
        # the float64 backward error of the factorization
        AL = A.astype(np.longdouble)
        b = np.asarray(b, dtype=np.longdouble)
        c = self._solve(fac, b.astype(float)).astype(np.longdouble)
        for _ in range(steps):
            c = c + self._solve(fac, (b - AL @ c).astype(float))
        return c

    def solve(self, f: np.ndarray) -> np.ndarray:
        b = self.Phi.T.astype(np.longdouble) @ (self.Wg * f)
        return self._refined(self.K, self.K_fac, b)

    def apply(self, c: np.ndarray) -> np.ndarray:
        Kc = self.K.astype(np.longdouble) @ np.asarray(c, dtype=np.longdouble)
        return (self.Phi @ self._refined(self.M, self.M_fac, Kc)).astype(float)


@lru_cache(maxsize=None)
def _polyharmonic(N: int, grading: float, n: int, m: int) -> _Polyharmonic:
    return _Polyharmonic(make_grid(N, grading), n, m)


def _system(grid: RadialGrid, params: ProblemParams) -> _Polyharmonic:
    _space(grid)
    return _polyharmonic(grid.N, grid.grading, params.n, params.m)


def solve_polyharmonic(rhs: RadialProfile, params: ProblemParams) -> RadialProfile:
    """g with (-Delta)^m g = rhs weakly, d^j g/dr^j (1) = 0 for j < m.

    The solve is Galerkin on even splines: boundary conditions are imposed by
    removing the boundary basis functions, which keeps the system symmetric
    positive definite.  The result is the Riesz representative of
    phi -> int_B rhs phi dx in the inner product int_B nabla^m . nabla^m.
    """
    n = _n_of(rhs, params)
    sysm = _system(rhs.grid, params)
    c = sysm.solve(rhs.values)
    if not np.all(np.isfinite(c)):
        raise NumericalError("non-finite solution", n=n, m=params.m)
    g = RadialProfile(rhs.grid, (sysm.Phi @ c).astype(float), n, params.m)
    # the solver knows the spline exactly; later operators reuse it
    g._coef[min(params.m, _FIT_VANISH_CAP)] = c
    return g


def apply_polyharmonic(g: RadialProfile, params: ProblemParams) -> RadialProfile:
    """Discrete (-Delta)^m: the element f of the constrained spline space with
    int_B f phi = int_B nabla^m g . nabla^m phi for all phi in that space."""
    _n_of(g, params)
    sysm = _system(g.grid, params)
    c = g.coefficients(params.m)
    return RadialProfile(g.grid, sysm.apply(c), g.n, params.m)


def riesz_inner(rhs: RadialProfile, phi: RadialProfile) -> float:
    """int_B rhs phi dx by the grid rule (the load functional of the solve)."""
    rhs._check(phi)
    return ball_integral(rhs.replace(rhs.values * phi.values))
