"""
Command-line front end.

    supsob constants --n 5 --m 2 --alpha 1
    supsob check hardy-rellich --n 6 --m 2 --trials 100 --seed 7
    supsob expansion modular --C S
    supsob sharp-constant | sweep-alpha | pde | all

Configuration comes from an optional TOML file (--config) with flat keys
named like the long flags; flags override the file.  Reports are JSON with
schema_version 1 and floats written with 17 significant digits.  Exit status
is 0 iff every assertion of the subcommand passed, 1 if an assertion failed,
2 for invalid configuration and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import bubbles, functionals, inequalities, optimize
from .radial_core import ConfigurationError, NumericalError, ProblemParams, make_grid

SCHEMA_VERSION = 1

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

CHECK_KINDS = ("hardy", "rellich", "hardy-rellich", "frac-sobolev", "pointwise", "budget")
EXPANSION_KINDS = ("grad", "modular", "weighted")

# key -> (type, default); None means "derived from other keys"
_KEYS = {
    "n": (int, 5),
    "m": (int, 2),
    "alpha": (float, 1.0),
    "N": (int, 512),
    "grading": (float, 2.0),
    "seed": (int, 42),
    "gamma": (float, 0.25),
    "cutoff_inner": (float, 0.5),
    "cutoff_outer": (float, 0.75),
    "output_dir": (str, "."),
    "trials": (int, 100),
    "a": (float, 0.0),
    "beta": (float, None),
    "C": (str, "1"),
    "eps": (list, None),
    "alphas": (list, [0.5, 1.0, 2.0, 5.0, 10.0, 25.0, 50.0]),
    "f_kind": (str, "power"),
    "f_param": (float, 1.0),
    "budget_a": (float, 1.0),
    "max_iter": (int, 150),
    "restarts": (int, 4),
}


@dataclass
class RunConfig:
    params: ProblemParams
    grid: dict
    options: dict = field(default_factory=dict)
    seed: int = 42
    output_dir: str = "."

    def to_dict(self) -> dict:
        return dict(n=self.params.n, m=self.params.m, alpha=self.params.alpha,
                    two_m_star=self.params.two_m_star, grid=dict(self.grid), seed=self.seed,
                    output_dir=self.output_dir, options=dict(self.options))


# ---------------------------------------------------------------- JSON / CSV output


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in sorted(x.items())) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj: dict) -> str:
    """JSON text with sorted keys and floats at 17 significant digits."""
    return _fmt(dict(obj, schema_version=SCHEMA_VERSION)) + "\n"


def _write(cfg: RunConfig, name: str, text: str):
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, name), "w", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------- configuration


def _coerce(key: str, value):
    typ = _KEYS[key][0]
    if typ is list:
        if isinstance(value, str):
            return [float(v) for v in value.split(",") if v.strip()]
        return [float(v) for v in value]
    return typ(value)


def _load_toml(path: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = sorted(set(data) - set(_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    return data


def parse_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the TOML file, then explicit flags; validated before use."""
    vals = {k: d for k, (_, d) in _KEYS.items()}
    if getattr(args, "config", None):
        for k, v in _load_toml(args.config).items():
            vals[k] = _coerce(k, v)
    for k in _KEYS:
        v = getattr(args, k, None)
        if v is not None:
            vals[k] = _coerce(k, v)
    params = ProblemParams(vals["n"], vals["m"], vals["alpha"])
    make_grid(vals["N"], vals["grading"])
    bubbles.CutoffSpec(vals["cutoff_inner"], vals["cutoff_outer"])
    if not 0 < vals["gamma"] < 1:
        raise ConfigurationError("gamma must lie in (0, 1)")
    if vals["trials"] < 1:
        raise ConfigurationError("trials >= 1 required")
    opts = {k: v for k, v in vals.items() if k not in ("n", "m", "alpha", "N", "grading", "seed", "output_dir")}
    return RunConfig(params, dict(N=vals["N"], grading=vals["grading"]), opts, vals["seed"], vals["output_dir"])


def _grid(cfg: RunConfig):
    return make_grid(cfg.grid["N"], cfg.grid["grading"])


def _cutoff(cfg: RunConfig):
    return bubbles.CutoffSpec(cfg.options["cutoff_inner"], cfg.options["cutoff_outer"])


# ---------------------------------------------------------------- subcommands


def cmd_config(cfg: RunConfig):
    return True, dict(config=cfg.to_dict())


def cmd_constants(cfg: RunConfig):
    ct = bubbles.constants_table(cfg.params)
    d = ct.to_dict()
    ok = ct.C_HR is None or abs(ct.C_HR - ct.C_HR_explicit) <= 1e-12 * abs(ct.C_HR)
    text = dumps(dict(command="constants", constants=d, passed=ok))
    _write(cfg, "constants.json", text)
    return ok, text


def _budget_rows(cfg: RunConfig, grid):
    p = cfg.params
    beta = cfg.options["beta"] or p.n / p.m
    a = cfg.options["budget_a"]
    f = inequalities.FExponentSpec(cfg.options["f_kind"], cfg.options["f_param"])
    ws = [inequalities.scale_to_energy(inequalities.random_profile(grid, 0, 1, cfg.seed + t, even=False), beta, a)
          for t in range(cfg.options["trials"])]
    sb = inequalities.estimate_s_beta(beta, grid).value
    rows = []
    for t, w in enumerate(ws):
        rows.append(("budget", cfg.seed + t,
                     inequalities.supercritical_modular_bound_check([w], f, beta, a, sb, f"random-{cfg.seed + t}")))
    rec = inequalities.supercritical_budget(f, a, beta, sb)
    return rows, dict(budget=rec.to_dict(), beta=beta, a=a, s_beta=sb)


def cmd_check(cfg: RunConfig, kind: str):
    p = cfg.params
    grid = _grid(cfg)
    extra = {}
    if kind == "budget":
        rows, extra = _budget_rows(cfg, grid)
    else:
        beta = cfg.options["beta"]
        if kind in ("frac-sobolev", "pointwise"):
            beta = beta or p.n / p.m
            extra["beta"] = beta
        if kind == "frac-sobolev":
            extra["s_beta"] = inequalities.estimate_s_beta(beta, grid).value
        rows = inequalities.run_suite(kind, cfg.options["trials"], cfg.seed, p.n, cfg.options["a"], p.m, beta, grid)
    reps = [r for _, _, r in rows]
    live = [r.ratio for r in reps if not r.degenerate]
    ok = all(r.holds for r in reps)
    summary = dict(command="check", kind=kind, trials=len(reps), min_ratio=min(live) if live else None,
                   max_ratio=max(live) if live else None, passed=ok, **extra)
    _write(cfg, f"check-{kind}.csv", inequalities.ratio_csv(rows))
    text = dumps(summary)
    _write(cfg, f"check-{kind}.json", text)
    return ok, text


def _C_value(cfg: RunConfig) -> float:
    c = cfg.options["C"]
    if str(c).strip().upper() == "S":
        p = cfg.params
        return bubbles.constants_table(p).S ** (p.n / (2 * p.m))
    return float(c)


def cmd_expansion(cfg: RunConfig, kind: str):
    p = cfg.params
    grid = _grid(cfg)
    cut = _cutoff(cfg)
    eps = cfg.options["eps"] or list(bubbles.DEFAULT_EPS)
    gamma = cfg.options["gamma"]
    extra = {}
    if kind == "grad":
        rep = bubbles.expansion_check_gradient(eps, cut, p, grid)
        ok = abs(rep.fitted_slope - rep.target) <= 0.2
    elif kind == "modular":
        C = _C_value(cfg)
        extra["C"] = C
        rep = bubbles.expansion_check_modular(eps, C, cut, p, grid, gamma)
        ok = _expansion_ok(rep, p)
    else:
        rep = bubbles.expansion_check_weighted(eps, cut, p, grid, gamma)
        ok = _expansion_ok(rep, p)
    d = rep.to_dict()
    text = dumps(dict(command="expansion", kind=kind, report=d, passed=ok, **extra))
    _write(cfg, f"expansion-{kind}.json", text)
    _write(cfg, f"expansion-{kind}.csv", rep.to_csv())
    return ok, text


def _expansion_ok(rep, p: ProblemParams) -> bool:
    if p.alpha < p.n:
        return abs(rep.fitted_prefactor / rep.target - 1) <= 0.15
    return rep.fitted_slope >= rep.target - 0.2


def _ascent_cfg(cfg: RunConfig) -> optimize.AscentConfig:
    return optimize.AscentConfig(max_iter=cfg.options["max_iter"], restarts=cfg.options["restarts"], seed=cfg.seed)


def cmd_sharp_constant(cfg: RunConfig):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = optimize.maximize_supercritical(cfg.params, _ascent_cfg(cfg), _grid(cfg))
    vals = [v for _, v, _ in rep.history]
    mono = all(b >= a for a, b in zip(vals, vals[1:]))
    ok = rep.strict_gap >= -1e-4 and mono
    text = dumps(dict(command="sharp-constant", report=rep.to_dict(), monotone=mono, passed=ok))
    _write(cfg, "sharp-constant.json", text)
    _write(cfg, "sharp-constant-history.csv", rep.history_csv())
    return ok, text


def cmd_sweep_alpha(cfg: RunConfig):
    tab = optimize.alpha_sweep(cfg.params, cfg.options["alphas"], _ascent_cfg(cfg), _grid(cfg))
    gaps_ok = all(g >= -1e-4 for _, _, g in tab.rows)
    ok = gaps_ok and (tab.tail_ok if len(tab.rows) >= 3 else True)
    _write(cfg, "sweep-alpha.csv", tab.to_csv())
    text = dumps(dict(command="sweep-alpha", sigma=tab.sigma, rows=[list(r) for r in tab.rows],
                      tail_ok=tab.tail_ok, passed=ok))
    _write(cfg, "sweep-alpha.json", text)
    return ok, text


def cmd_pde(cfg: RunConfig):
    p = cfg.params
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = optimize.mountain_pass_solve(p, optimize.MountainPassConfig(), _grid(cfg))
    d = sol.to_dict(p)
    ps = optimize.ps_diagnostics([sol.u], p)
    ok = (sol.weak_residual < 1e-4 and 0 < sol.level_c < d["level_bound"] and sol.min_interior_value > 0)
    text = dumps(dict(command="pde", solution=d, ps_diagnostics=ps.to_dict(), passed=ok))
    _write(cfg, "pde.json", text)
    _write(cfg, "pde-profile.csv", sol.u.to_csv())
    return ok, text


def cmd_all(cfg: RunConfig):
    """Every subcommand with the effective configuration; summary in all.json."""
    results = {}
    steps = [("constants", lambda: cmd_constants(cfg))]
    for k in CHECK_KINDS:
        steps.append((f"check-{k}", lambda k=k: cmd_check(cfg, k)))
    for k in EXPANSION_KINDS:
        steps.append((f"expansion-{k}", lambda k=k: cmd_expansion(cfg, k)))
    steps += [("sharp-constant", lambda: cmd_sharp_constant(cfg)),
              ("sweep-alpha", lambda: cmd_sweep_alpha(cfg)),
              ("pde", lambda: cmd_pde(cfg))]
    for name, fn in steps:
        try:
            ok, _ = fn()
            results[name] = "pass" if ok else "fail"
        except (ConfigurationError, NumericalError, ArithmeticError, ValueError) as exc:
            results[name] = f"error: {exc}"
    ok = all(v == "pass" for v in results.values())
    text = dumps(dict(command="all", results=results, passed=ok))
    _write(cfg, "all.json", text)
    return ok, text


# ---------------------------------------------------------------- argument parsing


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML file with flat keys named like the flags")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--N", type=int, help="grid size, a multiple of 8 (default 512)")
    p.add_argument("--grading", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--cutoff-inner", dest="cutoff_inner", type=float)
    p.add_argument("--cutoff-outer", dest="cutoff_outer", type=float)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--trials", type=int)
    p.add_argument("--a", type=float, help="Hardy/Rellich weight exponent")
    p.add_argument("--beta", type=float, help="fractional dimension (default n/m)")
    p.add_argument("--C", help="bubble amplitude; 'S' means S^{n/(2m)}")
    p.add_argument("--eps", help="comma-separated epsilon list")
    p.add_argument("--alphas", help="comma-separated alpha list for sweep-alpha")
    p.add_argument("--f-kind", dest="f_kind", choices=("power", "log_cap"))
    p.add_argument("--f-param", dest="f_param", type=float)
    p.add_argument("--budget-a", dest="budget_a", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--restarts", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="supsob", description=__doc__.strip().splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("config", "constants", "sharp-constant", "sweep-alpha", "pde", "all"):
        _add_common(sub.add_parser(name))
    pc = sub.add_parser("check")
    pc.add_argument("kind", choices=CHECK_KINDS)
    _add_common(pc)
    pe = sub.add_parser("expansion")
    pe.add_argument("kind", choices=EXPANSION_KINDS)
    _add_common(pe)
    return ap


def _error(module: str, operation: str, exc: Exception) -> str:
    return dumps(dict(error=dict(module=module, operation=operation, diagnostic=str(exc),
                                 type=type(exc).__name__)))


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args)
    except (ConfigurationError, ValueError, OSError) as exc:
        sys.stdout.write(_error("cli", "parse_config", exc))
        return EXIT_CONFIG
    cmd = args.command
    table = {
        "config": lambda: cmd_config(cfg),
        "constants": lambda: cmd_constants(cfg),
        "check": lambda: cmd_check(cfg, args.kind),
        "expansion": lambda: cmd_expansion(cfg, args.kind),
        "sharp-constant": lambda: cmd_sharp_constant(cfg),
        "sweep-alpha": lambda: cmd_sweep_alpha(cfg),
        "pde": lambda: cmd_pde(cfg),
        "all": lambda: cmd_all(cfg),
    }
    module = {"check": "inequalities", "expansion": "bubbles", "constants": "bubbles"}.get(cmd, "optimize")
    try:
        ok, out = table[cmd]()
    except ConfigurationError as exc:
        sys.stdout.write(_error(module, cmd, exc))
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError, ValueError) as exc:
        sys.stdout.write(_error(module, cmd, exc))
        return EXIT_NUMERIC
    if isinstance(out, dict):
        out = dumps(out)
    sys.stdout.write(out)
    return EXIT_OK if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
