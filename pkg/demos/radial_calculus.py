"""Radial calculus on the unit ball: Laplacian, polyharmonic solve, change of variable."""
import numpy as np

from supsob.radial_core import (
    ProblemParams, RadialProfile, apply_polyharmonic, change_of_variable_sides,
    make_grid, radial_laplacian, solve_polyharmonic,
)

grid = make_grid(512, 2.0)
r = grid.nodes
n = 5

# Delta cos(3r) in five dimensions, against the closed form
u = RadialProfile.from_function(grid, lambda r: np.cos(3 * r), n)
exact = -9 * np.cos(3 * r) - 3 * (n - 1) * np.sin(3 * r) / r
err = np.max(np.abs(radial_laplacian(u).values - exact)) / np.max(np.abs(exact))
print(f"Laplacian of cos(3r), relative sup error: {err:.2e}")

# Delta^2 g = 1 with g = g' = 0 at r = 1 has g = (1 - r^2)^2 / (8 n (n + 2))
p = ProblemParams(5, 2)
g = solve_polyharmonic(RadialProfile.from_function(grid, np.ones_like, n), p)
print(f"biharmonic solve, max error: {np.max(np.abs(g.values - (1 - r * r) ** 2 / 280)):.2e}")
back = solve_polyharmonic(apply_polyharmonic(g, p), p)
print(f"solve(apply(g)) - g, max: {np.max(np.abs(back.values - g.values)):.2e}")

# the substitution s = r^m turns the m-th order problem into a first-order one
w = RadialProfile.from_function(grid, lambda r: np.exp(-4 * r * r) * (1 - r * r) ** 2, n, 2)
lhs, rhs = change_of_variable_sides(w, p)
print(f"change of variable: {lhs:.12g} vs {rhs:.12g}")
