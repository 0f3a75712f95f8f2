import math

import numpy as np
import pytest

from conftest import BUBBLE_ORACLE, profile, rel
from supsob.bubbles import BubbleSpec, CutoffSpec, hardy_rellich_constant, truncated_bubble
from supsob.inequalities import (
    CSV_HEADER,
    FExponentSpec,
    PreconditionError,
    compact_bump,
    estimate_s_beta,
    f2_constant,
    frac_energy,
    frac_sobolev_ratio,
    hardy_ratio,
    hardy_rellich_ratio,
    pointwise_bound_check,
    random_profile,
    ratio_csv,
    rellich_ratio,
    run_suite,
    scale_to_energy,
    sharpness_trend,
    supercritical_budget,
    supercritical_modular_bound_check,
)
from supsob.radial_core import ConfigurationError, ProblemParams, RadialProfile, to_fractional_profile


def one_sided(grid, f):
    return RadialProfile(grid, f(grid.nodes), 0, 1, even=False)


def test_hardy_polynomial(grid):
    # u = 1 - r^2, n = 5: int 4 r^6 = 4/7 against (9/4) * 8/105
    rep = hardy_ratio(profile(grid, lambda r: 1 - r * r, 5, 1), 0.0)
    assert rep.ratio == pytest.approx(10 / 3, rel=1e-10)
    assert rep.holds


def test_hardy_zero_is_degenerate(grid):
    rep = hardy_ratio(profile(grid, np.zeros_like, 5, 1), 0.0)
    assert rep.degenerate and rep.holds


@pytest.mark.parametrize("a", [0.0, 1.0])
def test_hardy_suite(grid, a):
    rows = run_suite("hardy", 100, 0, 5, a=a, grid=grid)
    assert len(rows) == 100
    assert all(rep.holds for _, _, rep in rows)


def test_hardy_rejects_bad_weight(grid):
    with pytest.raises(ConfigurationError):
        hardy_ratio(profile(grid, lambda r: 1 - r * r, 5, 1), 3.0)


def test_rellich_polynomial(grid):
    # u = (1 - r^2)^2, n = 5: Delta u = -20 + 28 r^2, lhs 64/9, rhs (25/4)(128/315)
    rep = rellich_ratio(profile(grid, lambda r: (1 - r * r) ** 2, 5, 2), 0.0)
    assert rep.ratio == pytest.approx(2.8, rel=1e-10)
    assert rep.lhs / (8 * math.pi**2 / 3) == pytest.approx(64 / 9, rel=1e-10)


def test_rellich_compact_bump(grid):
    assert rellich_ratio(compact_bump(grid, 6), 1.0).holds


@pytest.mark.parametrize("a", [0.0, 1.0])
def test_rellich_suite(grid, a):
    assert all(rep.holds for _, _, rep in run_suite("rellich", 50, 100, 6, a=a, grid=grid))


def test_hardy_rellich_polynomial(grid):
    # u = (1 - r^2)^2, n = 6: int (Delta u)^2 r^5 = 32/5, int u'^2 r^3 = 16/60
    rep = hardy_rellich_ratio(profile(grid, lambda r: (1 - r * r) ** 2, 6, 2), ProblemParams(6, 2))
    assert rep.ratio == pytest.approx(6.4 / (hardy_rellich_constant(6, 2) * 16 / 60), rel=1e-10)


@pytest.mark.parametrize("n,m", [(5, 2), (6, 2), (7, 3), (8, 3)])
def test_hardy_rellich_suite(grid, n, m):
    rows = run_suite("hardy-rellich", 100, 7, n, m=m, grid=grid)
    assert all(rep.holds for _, _, rep in rows)
    assert min(rep.ratio for _, _, rep in rows) > 1


def test_hardy_rellich_errors(grid):
    with pytest.raises(ConfigurationError):
        hardy_rellich_ratio(profile(grid, lambda r: 1 - r * r, 3, 1), ProblemParams(3, 1))
    with pytest.raises(PreconditionError):
        hardy_rellich_ratio(profile(grid, lambda r: 1 - r * r, 5, 1), ProblemParams(5, 2))


def test_sharpness_trend_decreases(grid):
    for kind, n, order in [("rellich", 6, 0.0), ("hardy-rellich", 5, 2)]:
        t = sharpness_trend(kind, n, order)
        assert t.monotone and t.final > 1


@pytest.mark.xfail(strict=True, reason="singular family converges like 1/ln(1/eps)")
def test_sharpness_final_ratio(grid):
    assert sharpness_trend("rellich", 6, 0.0).final <= 1.15


def test_frac_sobolev_degenerate(grid):
    rep = frac_sobolev_ratio(one_sided(grid, np.zeros_like), 2.5, 1.0)
    assert rep.degenerate and rep.holds


def test_frac_sobolev_suite(grid):
    rows = run_suite("frac-sobolev", 50, 3, 5, m=2, beta=2.5, grid=grid)
    assert all(rep.holds for _, _, rep in rows)


def test_s_beta_matches_integer_dimension(grid):
    # beta = 3 is the radial n = 3 case: sharp constant S(3,1)^2 (4 pi)^{2/3}
    sharp = BUBBLE_ORACLE[(3, 1)]["S"] ** 2 * (4 * math.pi) ** (2 / 3)
    est = estimate_s_beta(3.0, grid)
    assert est.value <= sharp * (1 + 1e-6)
    assert rel(est.value, sharp) < 0.02


def test_frac_sobolev_rejects_small_beta(grid):
    with pytest.raises(ConfigurationError):
        frac_sobolev_ratio(one_sided(grid, lambda s: 1 - s), 2.0, 1.0)


def test_pointwise_zero(grid):
    assert pointwise_bound_check(one_sided(grid, np.zeros_like), 3.0, 1.0).ratio == math.inf


def test_pointwise_linear(grid):
    # w = 1 - s, beta = 3: energy 1/3, bound / |w| = 1/sqrt(3 s (1 - s)) >= 2/sqrt(3)
    rep = pointwise_bound_check(one_sided(grid, lambda s: 1 - s), 3.0, 1 / 3)
    assert rep.ratio == pytest.approx(2 / math.sqrt(3), rel=1e-5)
    assert rep.margin > 0


def test_pointwise_bubble_image(grid, p52):
    u = truncated_bubble(BubbleSpec(0.05, 1.0, p52), CutoffSpec(), grid)
    w = to_fractional_profile(u, 2)
    rep = pointwise_bound_check(w, 2.5, frac_energy(w, 2.5))
    assert rep.holds and rep.margin >= 0


def test_pointwise_suite(grid):
    assert all(rep.holds for _, _, rep in run_suite("pointwise", 50, 11, 5, m=2, grid=grid))


def test_pointwise_precondition(grid):
    with pytest.raises(PreconditionError):
        pointwise_bound_check(one_sided(grid, lambda s: 1 - s), 3.0, 0.1)


def test_budget_radius_and_zero_excess():
    f = FExponentSpec("power", 1.0)
    assert supercritical_budget(f, 1.0, 4.0, 1.0).r0 == pytest.approx(1 / math.sqrt(3), rel=1e-14)
    rec = supercritical_budget(FExponentSpec("log_cap", 0.0), 1.0, 4.0, 1.0)
    assert rec.C0 == 1.0 and rec.bound == 2.0


@pytest.mark.parametrize("f", [FExponentSpec("power", 1.0), FExponentSpec("power", 0.3), FExponentSpec("log_cap", 2.0)])
def test_budget_limsup(f):
    rec = supercritical_budget(f, 1.0, 4.0, 1.0)
    assert rec.log_g_probe_max <= rec.limsup_bound + 1e-12
    assert rec.C0 >= 1


def test_f2_violation():
    f = FExponentSpec("custom", func=lambda r: 1 / np.sqrt(-np.log(r)))
    with pytest.raises(ConfigurationError, match="1.000e-08"):
        f2_constant(f)
    with pytest.raises(ConfigurationError):
        FExponentSpec("power", 0.0)


def test_budget_bounds_bumps(grid):
    beta, a = 2.5, 1.0
    s_beta = estimate_s_beta(beta, grid).value
    ws = [scale_to_energy(random_profile(grid, 0, 1, sd, even=False), beta, a) for sd in range(50)]
    for f in (FExponentSpec("power", 1.0), FExponentSpec("log_cap", 1.0)):
        rep = supercritical_modular_bound_check(ws, f, beta, a, s_beta)
        assert rep.margin > 0


def test_budget_bubble_image(grid, p52):
    beta, a = 2.5, 1.0
    ws = []
    for e in (0.1, 0.01, 1e-3):
        w = to_fractional_profile(truncated_bubble(BubbleSpec(e, 1.0, p52), CutoffSpec(), grid), 2)
        ws.append(scale_to_energy(w, beta, a))
    assert supercritical_modular_bound_check(ws, FExponentSpec("power", 1.0), beta, a).margin > 0


def test_budget_precondition(grid):
    w = one_sided(grid, lambda s: 10 * (1 - s))
    with pytest.raises(PreconditionError):
        supercritical_modular_bound_check([w], FExponentSpec("power", 1.0), 3.0, 1.0, 1.0)


def test_ratio_csv(grid):
    rows = run_suite("hardy", 3, 0, 5, grid=grid)
    lines = ratio_csv(rows).splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 4
