"""Bubble constants and the epsilon-expansions of truncated bubbles."""
import json

from supsob.bubbles import constants_table, expansion_check_gradient, expansion_check_modular
from supsob.radial_core import ProblemParams, make_grid

p = ProblemParams(5, 2, 1.0)
ct = constants_table(p)
print(json.dumps(ct.to_dict(), indent=2))

grid = make_grid(512, 2.0)

# the cutoff costs O(eps^{n-2m}) of gradient norm
rep = expansion_check_gradient(params=p, grid=grid)
print(f"gradient defect slope {rep.fitted_slope:.3f} (expected {p.n - 2 * p.m})")

# the supercritical modular gains C_1 eps^alpha |ln eps| over the power integral
rep = expansion_check_modular(C=1.0, params=p, grid=grid)
print(f"modular prefactor {rep.fitted_prefactor:.4f} against {rep.target:.4f}")
print(rep.to_csv())
