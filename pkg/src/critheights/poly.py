"""Critically marked monic centered polynomials.

A polynomial is stored through its marked critical points ``c`` (summing to
zero) and the value ``a = f(0)``; the expanded coefficients are computed once
at construction and every evaluation goes through Horner's scheme.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import NonCenteredInput

CENTER_TOL = 1e-12


@dataclass(frozen=True)
class EscapeBudget:
    escape_radius: float = 2.0
    max_iterations: int = 10_000
    target_tolerance: float = 1e-10

    def __post_init__(self):
        if not self.escape_radius >= 2:
            raise ValueError("escape_radius must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.target_tolerance > 0:
            raise ValueError("target_tolerance must be positive")


@dataclass(frozen=True)
class MarkedPolynomial:
    """Monic centered polynomial of degree ``d`` with marked critical points.

    ``coefficients[k]`` is the coefficient of ``z**k``; the last entry is 1
    and the one before it is 0.
    """

    d: int
    critical_points: tuple
    a: complex
    coefficients: tuple = field(repr=False, compare=False)

    @property
    def c(self):
        return self.critical_points

    @cached_property
    def coeff_array(self) -> np.ndarray:
        return np.array(self.coefficients, dtype=complex)

    @cached_property
    def escape_radius(self) -> float:
        return escape_radius(self)

    @cached_property
    def lower_coeff_sum(self) -> float:
        """Sum of moduli of the non-leading coefficients."""
        return float(sum(abs(x) for x in self.coefficients[:-1]))

    def __call__(self, z):
        return evaluate(self, z)

    def derivative(self, z: complex) -> complex:
        out = 0j
        d = self.d
        for k in range(d, 0, -1):
            out = out * z + k * self.coefficients[k]
        return out

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "c": [[z.real, z.imag] for z in self.critical_points],
            "a": [self.a.real, self.a.imag],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def from_critical_data(c: Sequence[complex], a: complex) -> MarkedPolynomial:
    """Build ``a + integral_0^z d * prod(w - c_i) dw``."""
    c = tuple(complex(x) for x in c)
    a = complex(a)
    if len(c) < 1:
        raise ValueError("need at least one critical point (degree >= 2)")
    for x in c + (a,):
        if not (math.isfinite(x.real) and math.isfinite(x.imag)):
            raise ValueError("critical data must be finite")
    s = sum(c)
    if abs(s) > CENTER_TOL:
        raise NonCenteredInput(
            f"critical points sum to {s!r}; project onto the hyperplane sum(c) = 0 first"
        )
    d = len(c) + 1
    # derivative / d as ascending coefficients
    deriv = [1 + 0j]
    for ci in c:
        deriv = [0j] + deriv
        for k in range(len(deriv) - 1):
            deriv[k] -= ci * deriv[k + 1]
    coeffs = [complex(a)]
    for k in range(d):
        coeffs.append(complex(d * deriv[k] / (k + 1)))
    coeffs[d] = 1 + 0j
    coeffs[d - 1] = 0j
    return MarkedPolynomial(d, c, a, tuple(coeffs))


def from_json(data) -> MarkedPolynomial:
    if isinstance(data, str):
        data = json.loads(data)
    c = [complex(re, im) for re, im in data["c"]]
    a = complex(*data["a"])
    f = from_critical_data(c, a)
    if "d" in data and int(data["d"]) != f.d:
        raise ValueError(f"declared degree {data['d']} does not match {len(c)} critical points")
    return f


def load(path) -> MarkedPolynomial:
    with open(path, "r", encoding="utf-8") as fh:
        return from_json(json.load(fh))


def power_map(d: int) -> MarkedPolynomial:
    return from_critical_data([0j] * (d - 1), 0j)


def evaluate(f: MarkedPolynomial, z: complex) -> complex:
    coeffs = f.coefficients
    out = coeffs[-1]
    for k in range(len(coeffs) - 2, -1, -1):
        out = out * z + coeffs[k]
    return out


def evaluate_array(f: MarkedPolynomial, z: np.ndarray) -> np.ndarray:
    coeffs = f.coefficients
    out = np.full(np.shape(z), coeffs[-1], dtype=complex)
    for k in range(len(coeffs) - 2, -1, -1):
        out = out * z + coeffs[k]
    return out


def iterate(f: MarkedPolynomial, z: complex, n: int) -> complex:
    for _ in range(n):
        z = evaluate(f, z)
    return z


def escape_radius(f: MarkedPolynomial) -> float:
    """Radius beyond which ``|f(z)| >= 2|z|``."""
    s = sum(abs(x) for x in f.coefficients[:-1])
    return max(2.0, 2.0 * (1.0 + s))


def rotate(f: MarkedPolynomial, zeta: complex) -> MarkedPolynomial:
    """Conjugate by ``z -> zeta z`` with ``zeta**(d-1) == 1``."""
    return from_critical_data([zeta * x for x in f.critical_points], zeta * f.a)


def roots_of_unity(m: int) -> list:
    return [cmath.exp(2j * math.pi * k / m) for k in range(m)]


@lru_cache(maxsize=None)
def hyperplane_basis(d: int) -> np.ndarray:
    """Orthonormal real basis of ``{sum c = 0}`` in C^(d-1), shape (d-1, d-2).

    Gram-Schmidt applied to e_i - e_(i+1).
    """
    m = d - 1
    vecs = []
    for i in range(m - 1):
        v = np.zeros(m)
        v[i], v[i + 1] = 1.0, -1.0
        for u in vecs:
            v = v - (v @ u) * u
        vecs.append(v / np.linalg.norm(v))
    if not vecs:
        return np.zeros((m, 0))
    return np.column_stack(vecs)


def to_params(f: MarkedPolynomial) -> np.ndarray:
    """Complex coordinates (hyperplane part, a) of length d-1."""
    B = hyperplane_basis(f.d)
    c = np.array(f.critical_points, dtype=complex)
    return np.concatenate([B.T @ c, [f.a]])


def from_params(d: int, u: Iterable[complex]) -> MarkedPolynomial:
    u = np.asarray(list(u), dtype=complex)
    B = hyperplane_basis(d)
    c = B @ u[:-1] if d > 2 else np.zeros(1, dtype=complex)
    c = c - c.sum() / len(c)
    return from_critical_data(list(c), u[-1])


def canonical_key(f: MarkedPolynomial):
    """Coefficient vector up to the (d-1)-st roots of unity, for deduplication.

    Conjugating by ``z -> zeta z`` multiplies the coefficient of ``z**k`` by
    ``zeta**(1-k)``; the representative is the rotation that makes the
    lexicographically largest (rounded) coefficient tuple.
    """
    best = None
    for zeta in roots_of_unity(f.d - 1):
        co = tuple(f.coefficients[k] * zeta ** (1 - k) for k in range(f.d - 1))
        key = tuple((round(x.real, 6), round(x.imag, 6)) for x in co)
        if best is None or key > best[0]:
            best = (key, co)
    return best[1]


def coefficient_distance(f: MarkedPolynomial, g: MarkedPolynomial) -> float:
    """Distance between f and g modulo conjugation by roots of unity."""
    if f.d != g.d:
        return math.inf
    best = math.inf
    for zeta in roots_of_unity(f.d - 1):
        dist = max(abs(f.coefficients[k] * zeta ** (1 - k) - g.coefficients[k]) for k in range(f.d - 1))
        best = min(best, dist)
    return best
