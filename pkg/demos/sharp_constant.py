"""Ascent for the supercritical sharp constant and the strict-gap trial."""
import warnings

from supsob.optimize import AscentConfig, maximize_supercritical, strict_gap_trial
from supsob.radial_core import ProblemParams, make_grid

grid = make_grid(512, 2.0)
p = ProblemParams(5, 2, 1.0)

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    rep = maximize_supercritical(p, AscentConfig(), grid)
print(f"U_est = {rep.U_est:.6e}, Sigma = {rep.sigma_ref:.6e}, relative gap {rep.strict_gap / rep.sigma_ref:+.4f}")
print(f"best start: {rep.start_id}, {rep.iterations} iterations in total")

# an explicit truncated bubble above Sigma would certify U > Sigma
for n, m in [(6, 2), (5, 2)]:
    g = strict_gap_trial(ProblemParams(n, m, 1.0), 1e-2, grid=grid)
    print(f"({n},{m}) trial gap at eps = 1e-2: {g:+.3e}")
