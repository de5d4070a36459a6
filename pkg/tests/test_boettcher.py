import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import shift_locus_poly
from critheights.boettcher import (PhiImage, PhiSystem, boettcher, invert_phi_n, levels,
                                   log_boettcher, phi_n_map, trace_ray)
from critheights.errors import BelowCriticalLevel, NotInDomain
from critheights.escape import green_value, heights, marked_heights, max_escape_rate
from critheights.poly import evaluate, from_critical_data, from_params, power_map, to_params
from oracles import mp_boettcher


def above_M(rng, f, factor=1.2):
    M = max_escape_rate(f)
    while True:
        z = complex(*rng.normal(size=2)) * math.exp(rng.uniform(0, 3))
        if green_value(f, z) > factor * M + 1e-3:
            return z


def test_power_map_identity():
    for d in (2, 3, 4):
        for z in (1.5, -3 + 2j, 0.2 + 1.1j):
            b = boettcher(power_map(d), z)
            assert abs(b.w - z) < 1e-13


def test_small_parameter_quadratic_against_oracle():
    f = from_critical_data([0j], 0.3 - 0.1j)
    for angle in np.linspace(0, 2 * math.pi, 7):
        z = cmath.rect(10, angle)
        w = boettcher(f, z).w
        assert abs(w - mp_boettcher(f.coefficients, z, 2)) < 1e-12 * abs(w)


def test_conjugacy_and_modulus(rng):
    for _ in range(100):
        f = shift_locus_poly(rng, 3)
        z = above_M(rng, f)
        b0, b1 = boettcher(f, z), boettcher(f, evaluate(f, z))
        assert abs(b1.w - b0.w ** 3) <= 1e-8 * abs(b1.w)
        assert abs(math.log(abs(b0.w)) - green_value(f, z)) <= 1e-9
        assert b0.conjugacy_defect <= 1e-8


def test_tangent_to_identity(rng):
    for _ in range(30):
        f = shift_locus_poly(rng, int(rng.integers(2, 5)))
        z = cmath.rect(1e6, rng.uniform(0, 2 * math.pi))
        assert abs(boettcher(f, z).w / z - 1) <= 1e-4


def test_below_critical_level():
    f = from_critical_data([0j], 100)
    with pytest.raises(BelowCriticalLevel):
        boettcher(f, 0.0)


def test_levels_candidate_contains_log():
    f = from_critical_data([0.4j, -0.4j], 2 + 1j)
    z = 5 + 1j
    m, ell = levels(f, z)
    L = log_boettcher(f, z)
    k = (L * 3 ** m - ell) / (2j * math.pi)
    assert abs(k - round(k.real)) < 1e-8


def test_power_map_ray_is_straight():
    pts = trace_ray(power_map(3), 0.7, 3.0, 1.0, 10)
    for p in pts:
        assert abs(p.z - cmath.exp(complex(p.height, 0.7))) < 1e-10


def test_quadratic_ray_heights():
    f = from_critical_data([0j], 100)
    G0 = heights(f).M
    pts = trace_ray(f, 0.0, 10.0, 2 * G0 + 0.01, 40)
    assert len(pts) == 41
    for p in pts:
        assert green_value(f, p.z) == pytest.approx(p.height, abs=1e-8)
        assert cmath.phase(boettcher(f, p.z).w) == pytest.approx(0.0, abs=1e-8)


def test_ray_reversal():
    f = from_critical_data([0.5, -0.5], 3 + 1j)
    M = max_escape_rate(f)
    down = trace_ray(f, 1.1, M + 2, M + 0.3, 20)
    up = trace_ray(f, 1.1, M + 0.3, M + 2, 20)
    assert abs(up[-1].z - down[0].z) < 1e-9
    assert abs(up[0].z - down[-1].z) < 1e-9


def test_ray_needs_heights_above_M():
    f = from_critical_data([0j], 100)
    with pytest.raises(BelowCriticalLevel):
        trace_ray(f, 0.0, 5.0, 1.0, 4)


def test_phi_n_quadratic():
    f = from_critical_data([0j], 100)
    img = phi_n_map(f, 1)
    assert abs(math.log(abs(img.w[0])) - 2 * heights(f).M) <= 1e-8
    assert img.in_region(2)


def test_phi_n_monotone_domains(rng):
    for _ in range(10):
        f = shift_locus_poly(rng, 3, min_height=0.2)
        try:
            a = phi_n_map(f, 1)
        except NotInDomain:
            continue
        b = phi_n_map(f, 2)
        for x, y in zip(a.w, b.w):
            assert abs(y - x ** 3) <= 1e-8 * abs(y)
        hs = [v.value for v in marked_heights(f)]
        for lw, h in zip(b.log_w, hs):
            assert lw.real == pytest.approx(9 * h, abs=1e-8)
        assert b.in_region(3)


def test_phi_n_domain_error():
    f = from_critical_data([0.01, -0.01], 0.001)
    with pytest.raises(NotInDomain):
        phi_n_map(f, 1)


def test_phi_image_validation():
    with pytest.raises(ValueError):
        PhiImage(0, (2.0,))
    img = PhiImage(1, (5.0, 4.0))
    assert img.in_region(3)
    assert not PhiImage(1, (100.0, 1.5)).in_region(3)
    assert img.to_json()["n"] == 1


@pytest.mark.parametrize("d", [2, 3, 4])
def test_invert_round_trip(d, rng):
    f = shift_locus_poly(rng, d, min_height=0.3)
    n = 1
    while True:
        try:
            img = phi_n_map(f, n)
            break
        except NotInDomain:
            n += 1
    g = invert_phi_n(d, n, img, f)
    assert np.max(np.abs(to_params(g) - to_params(f))) < 1e-9


def test_invert_quadratic_height():
    f = from_critical_data([0j], 3)
    for h, angle in [(0.4, 0.3), (1.0, 2.0), (2.5, 5.0)]:
        target = PhiImage(1, (cmath.exp(2 * complex(h, angle)),))
        g = invert_phi_n(2, 1, target, f)
        assert heights(g).M == pytest.approx(h, abs=1e-9)


def test_continuation_is_lipschitz(rng):
    f = from_critical_data([0.2 + 0.1j, -0.2 - 0.1j], 4 - 1j)
    S = PhiSystem(3, 1)
    u = to_params(f)
    L = S.initial(u)
    J = S.jacobian(u, L)
    bound = 3 * np.linalg.norm(np.linalg.inv(J), 2)
    for _ in range(100):
        step = rng.uniform(-1e-3, 1e-3, size=2)
        target = L + 1j * step
        u2, _, _ = S.solve(u, L, target)
        assert np.linalg.norm(u2 - u) <= bound * np.linalg.norm(step)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0, 2 * math.pi))
def test_quadratic_phi_of_critical_value(h, angle):
    a_target = cmath.exp(2 * complex(h, angle))
    g = invert_phi_n(2, 1, PhiImage(1, (a_target,)), from_critical_data([0j], 4))
    img = phi_n_map(g, 1)
    assert abs(img.w[0] - a_target) <= 1e-8 * abs(a_target)
