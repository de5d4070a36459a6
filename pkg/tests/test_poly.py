import cmath
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from conftest import random_poly
from critheights.errors import NonCenteredInput
from critheights.poly import (MarkedPolynomial, canonical_key, coefficient_distance, evaluate,
                              evaluate_array, escape_radius, from_critical_data, from_json,
                              from_params, hyperplane_basis, iterate, load, power_map, rotate,
                              to_params)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, finite, finite)


def sympy_coefficients(c, a):
    z, t = sp.symbols("z t")
    d = len(c) + 1
    integrand = d * sp.prod([t - sp.nsimplify(x.real) - sp.I * sp.nsimplify(x.imag) for x in c])
    expr = sp.expand(sp.integrate(integrand, (t, 0, z)) + sp.nsimplify(a.real) + sp.I * sp.nsimplify(a.imag))
    poly = sp.Poly(expr, z)
    return [complex(poly.coeff_monomial(z ** k)) for k in range(d + 1)]


def test_quadratic_normal_form():
    f = from_critical_data([0j], 7 + 1j)
    assert f.d == 2
    assert f.coefficients == (7 + 1j, 0j, 1 + 0j)


def test_cubic_example():
    f = from_critical_data([1, -1], 0)
    assert np.allclose(f.coefficients, [0, -3, 0, 1])
    assert evaluate(f, 2) == 2


def test_quartic_against_symbolic_integration():
    c = [1, 1j, -1 - 1j]
    f = from_critical_data(c, 5)
    assert np.allclose(f.coefficients, sympy_coefficients([complex(x) for x in c], 5), atol=1e-12)
    assert evaluate(f, 0) == 5
    z = sp.symbols("z")
    expr = sum(sp.nsimplify(co.real) * z ** k + sp.I * sp.nsimplify(co.imag) * z ** k
               for k, co in enumerate(f.coefficients))
    target = sp.expand(4 * (z - 1) * (z - sp.I) * (z + 1 + sp.I))
    assert sp.simplify(sp.diff(expr, z) - target) == 0


def test_quadratic_evaluate_at_zero():
    assert evaluate(from_critical_data([0j], 3 - 2j), 0) == 3 - 2j


def test_non_centered_rejected():
    with pytest.raises(NonCenteredInput):
        from_critical_data([1, 1], 0)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        from_critical_data([], 0)
    with pytest.raises(ValueError):
        from_critical_data([float("nan"), 0], 0)
    with pytest.raises(ValueError):
        from_json({"d": 4, "c": [[1, 0], [-1, 0]], "a": [0, 0]})


@pytest.mark.parametrize("f,R", [
    (power_map(2), 2.0),
    (from_critical_data([0j], 100), 202.0),
    (from_critical_data([1, -1], 0), 8.0),
])
def test_escape_radius_examples(f, R):
    assert escape_radius(f) == R
    # sampled-circle oracle
    z = R * np.exp(2j * np.pi * np.arange(720) / 720)
    assert np.all(np.abs(evaluate_array(f, z)) >= 2 * np.abs(z) * (1 - 1e-12))


def test_derivative_recovers_product(rng):
    for _ in range(1000):
        d = int(rng.integers(2, 7))
        f = random_poly(rng, d)
        co = np.array(f.coefficients)
        deriv = np.arange(1, d + 1) * co[1:]
        expect = d * np.poly(np.array(f.critical_points))[::-1]
        assert np.max(np.abs(deriv - expect)) <= 1e-10 * max(1.0, np.max(np.abs(expect)))


def test_evaluate_matches_quadrature(rng):
    from scipy.integrate import quad

    for _ in range(10):
        d = int(rng.integers(2, 5))
        f = random_poly(rng, d)
        z = complex(*rng.normal(size=2))

        def fp(t, part):
            w = t * z
            v = d * np.prod([w - c for c in f.critical_points]) * z
            return v.real if part == 0 else v.imag

        re_ = quad(fp, 0, 1, args=(0,), epsabs=1e-13)[0]
        im_ = quad(fp, 0, 1, args=(1,), epsabs=1e-13)[0]
        assert abs(evaluate(f, z) - f.a - complex(re_, im_)) < 1e-8


@settings(max_examples=60, deadline=None)
@given(st.lists(cplx, min_size=1, max_size=4), cplx, st.floats(0, 2 * math.pi))
def test_escape_radius_property(c, a, angle):
    c = [x - sum(c) / len(c) for x in c]
    f = from_critical_data(c, a)
    R = f.escape_radius
    for r in (R * 1.0000001, R * 3.7):
        z = cmath.rect(r, angle)
        assert abs(evaluate(f, z)) >= 2 * abs(z)


@settings(max_examples=60, deadline=None)
@given(st.lists(cplx, min_size=1, max_size=4), cplx)
def test_params_round_trip(c, a):
    c = [x - sum(c) / len(c) for x in c]
    f = from_critical_data(c, a)
    g = from_params(f.d, to_params(f))
    assert np.allclose(g.critical_points, f.critical_points, atol=1e-12)
    assert g.a == pytest.approx(f.a)


def test_hyperplane_basis_orthonormal():
    for d in range(2, 8):
        B = hyperplane_basis(d)
        assert B.shape == (d - 1, d - 2)
        assert np.allclose(B.T @ B, np.eye(d - 2))
        assert np.allclose(B.sum(axis=0), 0)


def test_rotation_conjugacy(rng):
    for d in (3, 4, 5):
        f = random_poly(rng, d)
        for zeta in [cmath.exp(2j * math.pi * k / (d - 1)) for k in range(d - 1)]:
            g = rotate(f, zeta)
            z = complex(*rng.normal(size=2))
            assert abs(evaluate(g, zeta * z) - zeta * evaluate(f, z)) < 1e-10
            assert coefficient_distance(f, g) < 1e-12
            assert np.allclose(canonical_key(f), canonical_key(g))


def test_iterate_and_json(data_dir, tmp_path):
    f = load(f"{data_dir}/cubic.json")
    assert iterate(f, 1, 2) == -2
    g = from_json(f.dumps())
    assert g == f
    assert isinstance(g, MarkedPolynomial)
