import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_poly, shift_locus_poly
from critheights.escape import (HeightsVector, green, green_grid, green_value, heights,
                                heights_jacobian, high_precision_green, marked_heights,
                                max_escape_rate, numerical_rank)
from critheights.errors import StepTooLarge
from critheights.poly import EscapeBudget, evaluate, from_critical_data, load, power_map
from oracles import mp_green


def test_power_map_exact():
    v = green(power_map(2), 2)
    assert v.value == pytest.approx(math.log(2), abs=1e-15)
    assert v.error_bound <= 1e-12
    assert v.escaped
    for d in (2, 3, 5):
        for z in (2.5, 7j, -100 + 3j):
            v = green(power_map(d), z)
            assert v.value == pytest.approx(math.log(abs(z)), abs=1e-14)
            assert v.error_bound == 0


def test_bounded_orbit_flagged(data_dir):
    f = load(f"{data_dir}/cubic.json")
    v = green(f, 1)
    assert not v.escaped and v.value == 0
    h = heights(f)
    assert h.heights == (0.0, 0.0)
    assert h.resolved == (False, False)
    assert heights(power_map(4)).heights == (0.0, 0.0, 0.0)


def test_quadratic_against_high_precision():
    f = from_critical_data([0j], 2)
    oracle = mp_green(f.coefficients, 0j, 2)
    assert green_value(f, 0) == pytest.approx(oracle, abs=1e-10)
    assert high_precision_green(f, 0j) == pytest.approx(oracle, abs=1e-12)


def test_large_parameter_quadratic():
    f = from_critical_data([0j], 100)
    h = heights(f)
    oracle = mp_green(f.coefficients, 0j, 2)
    assert h.M == pytest.approx(oracle, abs=1e-10)
    # G(a) = log|a| + 1/(2a) + O(a^-2)
    assert h.M - 0.5 * math.log(100) == pytest.approx(1 / 400, abs=1e-4)
    assert green_value(f, evaluate(f, 0)) == pytest.approx(2 * h.M, abs=1e-10)


def test_random_points_against_oracle(rng):
    for _ in range(20):
        d = int(rng.integers(2, 5))
        f = random_poly(rng, d)
        z = complex(*rng.normal(size=2)) * 2
        v = green(f, z)
        if not v.escaped:
            continue
        assert v.value == pytest.approx(mp_green(f.coefficients, z, d), abs=1e-9)


def test_functional_equation(rng):
    tol = 1e-10
    for _ in range(300):
        d = int(rng.integers(2, 5))
        f = shift_locus_poly(rng, d)
        z = complex(*rng.normal(size=2)) * 3
        g0, g1 = green(f, z), green(f, evaluate(f, z))
        if g0.escaped:
            assert abs(g1.value - d * g0.value) <= 10 * tol


def test_heights_sorted_descending(rng):
    for _ in range(50):
        f = random_poly(rng, int(rng.integers(2, 6)))
        h = heights(f).heights
        assert list(h) == sorted(h, reverse=True)
        assert max_escape_rate(f) == pytest.approx(h[0])


def test_heights_vector_validation():
    with pytest.raises(ValueError):
        HeightsVector(3, (0.1, 0.5))
    with pytest.raises(ValueError):
        HeightsVector(3, (1.0,))
    with pytest.raises(ValueError):
        HeightsVector(2, (-1.0,))
    assert HeightsVector.from_values(3, [0.2, 1]).heights == (1.0, 0.2)


def test_unresolved_budget():
    f = from_critical_data([0j], -1.0)  # basilica, 0 is periodic
    v = green(f, 0, EscapeBudget(f.escape_radius, 50, 1e-10))
    assert not v.escaped and v.iterations_used == 50


def test_continuity_probe(rng):
    f = shift_locus_poly(rng, 3)
    h0 = np.array(heights(f).heights)
    errs = []
    for k in range(4):
        eps = 1e-3 / 2 ** k
        g = from_critical_data([c + eps for c in f.critical_points[:1]] + [f.critical_points[1] - eps], f.a)
        errs.append(np.max(np.abs(np.array(heights(g).heights) - h0)))
    ratios = [errs[i] / errs[i + 1] for i in range(3)]
    assert all(1.6 < r < 2.5 for r in ratios)


def test_jacobian_quadratic_gradient():
    f = from_critical_data([0j], 100)
    J = heights_jacobian(f)
    assert J.shape == (1, 2)
    # G(0) ~ log|a| / 2 for large a
    assert J[0, 0] == pytest.approx(0.005, rel=0.05)
    assert abs(J[0, 1]) < 1e-6


def test_jacobian_richardson():
    f = from_critical_data([0.3 + 0.2j, -0.3 - 0.2j], 1.5 + 0.5j)
    Js = [heights_jacobian(f, step=h) for h in (4e-2, 2e-2, 1e-2)]
    ratio = np.abs(Js[0] - Js[1]) / np.abs(Js[1] - Js[2])
    assert np.all(np.abs(ratio - 4) < 0.2)


def test_jacobian_needs_shift_locus(data_dir):
    with pytest.raises(StepTooLarge):
        heights_jacobian(load(f"{data_dir}/cubic.json"))


def test_numerical_rank():
    assert numerical_rank(np.eye(3)) == 3
    assert numerical_rank(np.diag([1.0, 1e-9])) == 1
    assert numerical_rank(np.zeros((2, 2))) == 0


def test_green_grid_matches_scalar(rng):
    f = shift_locus_poly(rng, 3)
    Z = rng.normal(size=40) + 1j * rng.normal(size=40)
    G = green_grid(f, Z, tail_terms=12)
    for z, g in zip(Z, G):
        assert g == pytest.approx(green_value(f, z), abs=1e-8)


def test_marked_heights_keep_marking(rng):
    f = shift_locus_poly(rng, 4)
    m = [v.value for v in marked_heights(f)]
    assert m == [green_value(f, c) for c in f.critical_points]
    assert sorted(m, reverse=True) == list(heights(f).heights)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 4), st.floats(0, 2 * math.pi))
def test_quadratic_green_positive_monotone(r, angle):
    f = from_critical_data([0j], complex(r * math.cos(angle), r * math.sin(angle)) * 5)
    a = green_value(f, 10)
    b = green_value(f, 20)
    assert b > a > 0
