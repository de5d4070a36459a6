"""Fast invariant checks bundled with the package (``critheights selftest``)."""

from __future__ import annotations

import sys

import numpy as np


def _det_identity():
    from .heights_space import exact_determinant, moduli_matrix

    return all(exact_determinant(moduli_matrix(d, N)) == (-1) ** (N - 1) * (d - 1)
               for d in range(2, 13) for N in range(2, 9))


def _functional_equation(rng):
    from .escape import green_value
    from .poly import evaluate, from_critical_data

    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 5))
        c = rng.normal(size=d - 1) + 1j * rng.normal(size=d - 1)
        f = from_critical_data(list(c - c.mean()), complex(*rng.normal(size=2)))
        z = complex(*rng.normal(size=2) * 2)
        worst = max(worst, abs(green_value(f, evaluate(f, z)) - d * green_value(f, z)))
    return worst <= 1e-9


def _boettcher(rng):
    from .boettcher import boettcher
    from .escape import green_value, max_escape_rate
    from .poly import evaluate, from_critical_data

    for _ in range(20):
        c = complex(*rng.normal(size=2))
        f = from_critical_data([c, -c], complex(*rng.normal(size=2) * 3))
        z = complex(*rng.normal(size=2)) * 5
        if green_value(f, z) <= 1.1 * max_escape_rate(f):
            continue
        b0, b1 = boettcher(f, z), boettcher(f, evaluate(f, z))
        if abs(b1.w - b0.w ** 3) > 1e-8 * abs(b1.w):
            return False
    return True


def _complex_d3():
    from .heights_space import build_height_complex

    return build_height_complex(3, 5).counts() == [6, 5]


def _tree_quadratic():
    from .poly import from_critical_data
    from .tree import build_tree, twist_periods

    f = from_critical_data([0j], 100)
    t = build_tree(f, 0.5 * 2.30507)
    return all(t.checks.values()) and twist_periods(t) == [2]


CHECKS = [
    ("moduli determinant", lambda rng: _det_identity()),
    ("functional equation", _functional_equation),
    ("boettcher conjugacy", _boettcher),
    ("degree 3 complex", lambda rng: _complex_d3()),
    ("quadratic tree", lambda rng: _tree_quadratic()),
]


def run_selftest(verbose: bool = True, seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for name, fn in CHECKS:
        try:
            passed = bool(fn(rng))
        except Exception as e:  # report and continue
            passed = False
            name = f"{name} ({type(e).__name__}: {e})"
        ok &= passed
        if verbose:
            sys.stdout.write(f"{'PASS' if passed else 'FAIL'} {name}\n")
    return ok
