import numpy as np
import pytest

from supsob.radial_core import ProblemParams, RadialProfile, make_grid


@pytest.fixture(scope="session")
def grid():
    return make_grid(512, 2.0)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(256, 2.0)


@pytest.fixture(scope="session")
def p52():
    return ProblemParams(5, 2, 1.0)


@pytest.fixture(scope="session")
def p31():
    return ProblemParams(3, 1, 1.0)


def profile(grid, f, n, vanish=0):
    return RadialProfile.from_function(grid, f, n, vanish)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# whole-space bubble integrals at eps = 1: symbolic nabla^m (sympy) and
# mpmath quadrature on [0, 1, inf] at 30 digits
BUBBLE_ORACLE = {
    (5, 2): dict(G=203.4786907144676, B=31.00627668029982, S=0.09882924885689322),
    (3, 1): dict(G=14.80440660163404, B=19.73920880217872, S=0.4272605428625267),
    (6, 2): dict(G=793.7606830156754, B=33.07336179231981, S=0.06359187035567896),
    (7, 3): dict(G=5273.789069262788, B=32.46969701133415, S=0.01765636724040133),
}


def bump_values(r, seed):
    rng = np.random.default_rng(seed)
    c, w = rng.uniform(0.0, 0.7), rng.uniform(0.1, 0.4)
    return np.exp(-((r - c) / w) ** 2) + np.exp(-((r + c) / w) ** 2)


# acceptance results: criterion -> list of (part, ok, detail)
ACCEPTANCE = {}


def record(criterion, part, ok, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        failed = [f"{p}: {d}" for p, ok, d in parts if not ok]
        tail = "; ".join(failed) if failed else f"{len(parts)} of {len(parts)} checks"
        tr.write_line(f"criterion {k:2d}: {status}  ({tail})")
