"""Hardy, Rellich and Hardy-Rellich ratios on random profiles, and a sharpness trend."""
from supsob.inequalities import ratio_csv, run_suite, sharpness_trend
from supsob.radial_core import make_grid

grid = make_grid(512, 2.0)

for kind, kw in [("hardy", dict(a=0.0)), ("rellich", dict(a=1.0)), ("hardy-rellich", dict(m=2))]:
    rows = run_suite(kind, 100, 0, 6, grid=grid, **kw)
    ratios = [rep.ratio for _, _, rep in rows]
    print(f"{kind:14s} min ratio {min(ratios):.4f} over {len(rows)} profiles")

print(ratio_csv(run_suite("hardy-rellich", 5, 0, 7, m=3, grid=grid)))

# ratios fall towards 1 along the singular family, slowly
t = sharpness_trend("rellich", 6, 0.0)
for e, q in zip(t.eps, t.ratios):
    print(f"eps={e:g}  ratio={q:.4f}")
