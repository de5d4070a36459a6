"""Escape rate G_f, critical heights, and their parameter Jacobian.

Once an orbit leaves the disk of radius ``escape_radius`` the computation
switches to the logarithm of the Boettcher product,

    log phi(y) = Log y + sum_k d^-(k+1) Log(f(y_k) / y_k^d),

evaluated in terms of ``1/y_k`` so nothing overflows.  ``G(z)`` is then
``Re log phi(f^m(z)) / d^m`` where ``m`` is the escape index.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StepTooLarge
from .poly import EscapeBudget, MarkedPolynomial, evaluate, from_params, hyperplane_basis, to_params

DEFAULT_TOL = 1e-10
DEFAULT_MAXITER = 10_000


@dataclass(frozen=True)
class EscapeValue:
    value: float
    iterations_used: int
    error_bound: float
    escaped: bool


@dataclass(frozen=True)
class HeightsVector:
    d: int
    heights: tuple
    resolved: tuple = field(default=None, compare=False)

    def __post_init__(self):
        h = tuple(float(x) for x in self.heights)
        if len(h) != self.d - 1:
            raise ValueError(f"expected {self.d - 1} heights, got {len(h)}")
        if any(x < 0 or math.isnan(x) for x in h):
            raise ValueError("heights must be nonnegative")
        if any(h[i] < h[i + 1] for i in range(len(h) - 1)):
            raise ValueError("heights must be sorted in descending order")
        object.__setattr__(self, "heights", h)
        if self.resolved is None:
            object.__setattr__(self, "resolved", (True,) * len(h))

    @property
    def M(self) -> float:
        return self.heights[0]

    @classmethod
    def from_values(cls, d, values):
        return cls(d, tuple(sorted((float(x) for x in values), reverse=True)))


def clog1p(e: complex) -> complex:
    """``Log(1 + e)`` without cancellation for small ``e``."""
    x, y = e.real, e.imag
    return complex(0.5 * math.log1p(2 * x + x * x + y * y), math.atan2(y, 1 + x))


def clog1p_array(e: np.ndarray) -> np.ndarray:
    x, y = e.real, e.imag
    return 0.5 * np.log1p(2 * x + x * x + y * y) + 1j * np.arctan2(y, 1 + x)


def default_budget(f: MarkedPolynomial, tol=DEFAULT_TOL, maxiter=DEFAULT_MAXITER) -> EscapeBudget:
    return EscapeBudget(f.escape_radius, maxiter, tol)


def _tail_log_phi(f: MarkedPolynomial, y: complex, tol: float):
    """Principal log of the Boettcher coordinate at ``|y| >= escape_radius``.

    Returns ``(log_phi, error_bound, terms)``.  The bound covers both real
    and imaginary parts: for |y| >= R every factor satisfies |u - 1| <= 1/2,
    so |Log u| <= 2|u - 1| <= 2S/|y_k| and |y_k| at least doubles each step.
    """
    d = f.d
    co = f.coefficients
    S = f.lower_coeff_sum
    L = cmath.log(y)
    total = L
    scale = 1.0
    k = 0
    while True:
        scale /= d
        bound = 3.0 * S * scale * math.exp(-L.real) if S > 0 else 0.0
        if bound < tol:
            return total, bound, k
        w = cmath.exp(-L)
        eps = 0j
        for j in range(d - 1):
            eps = (eps + co[j]) * w
        eps *= w
        # eps = sum_{j<d} a_j w^(d-j); the a_(d-1) term is zero
        lu = clog1p(eps)
        total += scale * lu
        L = d * L + lu
        k += 1


def escape_log_phi(f: MarkedPolynomial, z: complex, tol: float = DEFAULT_TOL,
                   max_iterations: int = DEFAULT_MAXITER):
    """Iterate until escape; return ``(m, log_phi(f^m z), bound)`` or ``None``."""
    R = f.escape_radius
    co = f.coefficients
    for m in range(max_iterations + 1):
        if abs(z) >= R:
            lp, bound, _ = _tail_log_phi(f, z, tol)
            return m, lp, bound
        if m == max_iterations:
            break
        out = co[-1]
        for k in range(len(co) - 2, -1, -1):
            out = out * z + co[k]
        z = out
    return None


def green(f: MarkedPolynomial, z: complex, budget: EscapeBudget | None = None) -> EscapeValue:
    """Escape rate ``G_f(z)`` with a truncation bound on the error."""
    z = complex(z)
    if math.isnan(z.real) or math.isnan(z.imag):
        raise ValueError("NaN input")
    if budget is None:
        budget = default_budget(f)
    tol = budget.target_tolerance
    d = f.d
    res = escape_log_phi(f, z, tol, budget.max_iterations)
    if res is None:
        n = budget.max_iterations
        # sup of G on |z| <= R is at most log R + 1
        unresolved = (math.log(f.escape_radius) + 1.0) * d ** (-float(n))
        return EscapeValue(0.0, n, unresolved, False)
    m, lp, bound = res
    scale = d ** (-float(m))
    return EscapeValue(lp.real * scale, m, bound * scale, True)


def green_value(f, z, tol=DEFAULT_TOL, maxiter=DEFAULT_MAXITER) -> float:
    return green(f, z, EscapeBudget(f.escape_radius, maxiter, tol)).value


def marked_heights(f: MarkedPolynomial, budget: EscapeBudget | None = None):
    """Unsorted escape values at the marked critical points (the lifted map)."""
    return [green(f, c, budget) for c in f.critical_points]


def heights(f: MarkedPolynomial, budget: EscapeBudget | None = None) -> HeightsVector:
    vals = marked_heights(f, budget)
    order = sorted(range(len(vals)), key=lambda i: -vals[i].value)
    return HeightsVector(
        f.d,
        tuple(vals[i].value for i in order),
        tuple(vals[i].escaped for i in order),
    )


def max_escape_rate(f: MarkedPolynomial, budget: EscapeBudget | None = None) -> float:
    return max(v.value for v in marked_heights(f, budget))


def green_grid(f: MarkedPolynomial, Z: np.ndarray, max_iterations: int = 200,
               tail_terms: int = 6) -> np.ndarray:
    """Vectorized escape rate on an array of points.

    Points not escaping within ``max_iterations`` get 0.  The tail uses a
    fixed number of Boettcher factors, enough for grid work where only the
    topology of level sets matters.
    """
    d = f.d
    co = f.coefficients
    R = f.escape_radius
    Z = np.asarray(Z, dtype=complex)
    shape = Z.shape
    z = Z.ravel().copy()
    out = np.zeros(z.shape, dtype=float)
    active = np.arange(z.size)
    zc = z
    for m in range(max_iterations + 1):
        esc = np.abs(zc) >= R
        if esc.any():
            idx = active[esc]
            y = zc[esc]
            L = np.log(y)
            total = L.copy()
            scale = 1.0
            for _ in range(tail_terms):
                scale /= d
                w = np.exp(-L)
                eps = np.zeros_like(w)
                for j in range(d - 1):
                    eps = (eps + co[j]) * w
                eps *= w
                lu = clog1p_array(eps)
                total += scale * lu
                L = d * L + lu
            out[idx] = total.real * d ** (-float(m))
            keep = ~esc
            active = active[keep]
            zc = zc[keep]
        if active.size == 0 or m == max_iterations:
            break
        acc = np.full(zc.shape, co[-1], dtype=complex)
        for k in range(len(co) - 2, -1, -1):
            acc = acc * zc + co[k]
        zc = acc
    return out.reshape(shape)


def heights_jacobian(f: MarkedPolynomial, step: float = 1e-5, tol: float = 1e-14,
                     return_basis: bool = False):
    """Central-difference Jacobian of the marked heights.

    Columns are ordered (Re u_1, Im u_1, ..., Re u_(d-1), Im u_(d-1)) where
    ``u`` are the coordinates of :func:`poly.to_params`: an orthonormal basis
    of the centered hyperplane followed by ``a``.
    """
    d = f.d
    u0 = to_params(f)
    budget = EscapeBudget(f.escape_radius, DEFAULT_MAXITER, tol)
    base = marked_heights(f, budget)
    if not all(v.escaped and v.value > 0 for v in base):
        raise StepTooLarge("polynomial is not in the shift locus")

    def hvec(u):
        g = from_params(d, u)
        vals = marked_heights(g, EscapeBudget(g.escape_radius, DEFAULT_MAXITER, tol))
        if not all(v.escaped and v.value > 0 for v in vals):
            raise StepTooLarge(f"perturbation of size {step} left the shift locus")
        return np.array([v.value for v in vals])

    J = np.zeros((d - 1, 2 * (d - 1)))
    for k in range(d - 1):
        for part, dirn in enumerate((1.0, 1j)):
            e = np.zeros(d - 1, dtype=complex)
            e[k] = dirn * step
            J[:, 2 * k + part] = (hvec(u0 + e) - hvec(u0 - e)) / (2 * step)
    if return_basis:
        return J, hyperplane_basis(d)
    return J


def numerical_rank(J: np.ndarray, rel: float = 1e-6) -> int:
    s = np.linalg.svd(J, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel * s[0]))


def high_precision_green(f: MarkedPolynomial, z: complex, prec: int = 200, n: int = 60) -> float:
    """Oracle: ``d^-n log|f^n(z)|`` in ``prec``-bit arithmetic.

    Only meant for cross-checks; ``n`` must be large enough that the
    truncation error ``~ d^-n * S/|f^n z|`` is below the comparison tolerance.
    """
    import mpmath

    with mpmath.workprec(prec):
        co = [mpmath.mpc(x.real, x.imag) for x in f.coefficients]
        w = mpmath.mpc(z.real, z.imag)
        for _ in range(n):
            acc = co[-1]
            for k in range(len(co) - 2, -1, -1):
                acc = acc * w + co[k]
            w = acc
        if w == 0:
            return 0.0
        return float(mpmath.log(abs(w)) / mpmath.mpf(f.d) ** n)
