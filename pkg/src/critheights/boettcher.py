"""Boettcher coordinate, external rays, and the critical coordinate map Phi_n.

Everything is done with ``g = log phi``.  At a point ``z`` the escape index
``m`` (first iterate outside the escape disk) gives the principal value
``ell = log phi(f^m z)``; the true ``g(z)`` is one of the ``d^m`` values
``(ell + 2 pi i k) / d^m``.  The right one is selected by continuity: either
along the external ray through ``z`` (climbing up to where ``m = 0``) or by
linear prediction from a nearby point whose branch is already known.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import (BelowCriticalLevel, BranchAmbiguity, LeftDomain, NewtonDiverged,
                     NotInDomain, RayObstructed)
from .escape import clog1p, escape_log_phi, max_escape_rate
from .poly import EscapeBudget, MarkedPolynomial, evaluate, from_params, iterate, to_params

TWO_PI = 2.0 * math.pi
# fraction of the branch spacing tolerated in a continuity prediction
SNAP_LIMIT = 0.2


@dataclass(frozen=True)
class BoettcherValue:
    w: complex
    modulus_check: float
    conjugacy_defect: float
    log_w: complex = 0j


@dataclass(frozen=True)
class RayPoint:
    height: float
    angle: float
    z: complex


@dataclass(frozen=True)
class PhiImage:
    n: int
    w: tuple
    log_w: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        object.__setattr__(self, "w", tuple(complex(x) for x in self.w))
        if not self.log_w:
            object.__setattr__(self, "log_w", tuple(cmath.log(x) for x in self.w))

    @property
    def d_minus_1(self):
        return len(self.w)

    def in_region(self, d: int) -> bool:
        logs = [x.real for x in self.log_w]
        top = max(logs)
        return all(x > 0 for x in logs) and all(d ** self.n * x > top for x in logs)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "w": [[x.real, x.imag] for x in self.w],
            "log_w": [[x.real, x.imag] for x in self.log_w],
        }


def levels(f: MarkedPolynomial, z: complex, tol: float = 1e-13, max_iterations: int = 10_000):
    """``(m, ell)`` with ``log phi(z)`` among ``(ell + 2 pi i k)/d^m``."""
    res = escape_log_phi(f, z, tol, max_iterations)
    if res is None:
        return None
    m, ell, _ = res
    return m, ell


def snap(ell: complex, m: int, d: int, guess: complex):
    """Candidate ``(ell + 2 pi i k)/d^m`` nearest ``guess``.

    Returns ``(value, offset)`` where ``offset`` is the distance from the
    guess in units of the branch spacing (0 = exact, 0.5 = ambiguous).
    """
    scale = float(d) ** m
    t = (guess.imag * scale - ell.imag) / TWO_PI
    k = round(t)
    value = complex(ell.real / scale, (ell.imag + TWO_PI * k) / scale)
    return value, abs(t - k)


def log_derivative(f: MarkedPolynomial, z: complex, tol: float = 1e-13,
                   max_iterations: int = 10_000) -> complex:
    """``phi'(z) / phi(z)``, single valued on the Boettcher domain."""
    d = f.d
    co = f.coefficients
    R = f.escape_radius
    chain = 1 + 0j
    m = 0
    while abs(z) < R:
        if m >= max_iterations:
            raise BelowCriticalLevel("orbit did not escape")
        chain *= f.derivative(z)
        z = evaluate(f, z)
        m += 1
    # derivative of ell at y = z, tracked through q_k = y_k'/y_k
    S = f.lower_coeff_sum
    L = cmath.log(z)
    q = 1.0 / z
    total = q
    scale = 1.0
    while True:
        scale /= d
        if S == 0 or 3.0 * S * scale * math.exp(-L.real) * d < tol * abs(total):
            break
        w = cmath.exp(-L)
        eps = 0j
        deps = 0j
        for j in range(d - 1):
            eps = (eps + co[j]) * w
            deps = (deps + j * co[j]) * w
        eps *= w
        deps *= w
        u = 1 + eps
        rho = (d + deps) / u
        total += scale * (rho - d) * q
        q = rho * q
        L = d * L + clog1p(eps)
    return total * chain / float(d) ** m


def _rk4(f, z, dh, tol):
    k1 = 1.0 / log_derivative(f, z, tol)
    k2 = 1.0 / log_derivative(f, z + 0.5 * dh * k1, tol)
    k3 = 1.0 / log_derivative(f, z + 0.5 * dh * k2, tol)
    k4 = 1.0 / log_derivative(f, z + dh * k3, tol)
    return z + dh * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0


def _climb(f: MarkedPolynomial, z: complex, tol: float, max_steps: int = 4000):
    """Follow the gradient line of G upward until the escape index is 0.

    Returns the list of visited points, starting with ``z``.
    """
    path = [z]
    R = f.escape_radius
    dh = 0.05
    steps = 0
    while abs(z) < R * 1.01:
        if steps > max_steps:
            raise BranchAmbiguity("ray ascent did not reach the escape disk")
        steps += 1
        full = _rk4(f, z, dh, tol)
        half = _rk4(f, _rk4(f, z, dh / 2, tol), dh / 2, tol)
        err = abs(full - half)
        if err > 1e-7 * max(1.0, abs(z)) and dh > 1e-9:
            dh /= 2
            continue
        z = half
        path.append(z)
        if err < 1e-9 * max(1.0, abs(z)):
            dh = min(dh * 2, 0.5)
    return path


def log_boettcher(f: MarkedPolynomial, z: complex, tol: float = 1e-13, M: float | None = None) -> complex:
    """``log phi_f(z)`` on ``{G > M(f)}`` with the branch fixed by the ray."""
    d = f.d
    if M is None:
        M = max_escape_rate(f, EscapeBudget(f.escape_radius, 10_000, tol))
    lv = levels(f, z, tol)
    if lv is None:
        raise BelowCriticalLevel("point does not escape")
    m, ell = lv
    G = ell.real / float(d) ** m
    if not G > M:
        raise BelowCriticalLevel(f"G(z) = {G:.6g} is not above the maximal critical height {M:.6g}")
    if m == 0:
        return ell
    path = _climb(f, z, tol)
    top = path[-1]
    m_top, g = levels(f, top, tol)
    if m_top != 0:
        raise BranchAmbiguity("ray ascent ended below the escape disk")
    gp_prev = log_derivative(f, top, tol)
    for j in range(len(path) - 2, -1, -1):
        p, q = path[j], path[j + 1]
        gp = log_derivative(f, p, tol)
        guess = g - (q - p) * 0.5 * (gp + gp_prev)
        mj, ellj = levels(f, p, tol)
        g, off = snap(ellj, mj, d, guess)
        if off > SNAP_LIMIT:
            raise BranchAmbiguity(f"branch selection offset {off:.3f} along the ray")
        gp_prev = gp
    return g


def boettcher(f: MarkedPolynomial, z: complex, tol: float = 1e-13) -> BoettcherValue:
    """``phi_f(z)`` plus self-checks against G and the conjugacy relation."""
    d = f.d
    z = complex(z)
    M = max_escape_rate(f, EscapeBudget(f.escape_radius, 10_000, tol))
    g = log_boettcher(f, z, tol, M)
    g_image = log_boettcher(f, evaluate(f, z), tol, M)
    m, ell = levels(f, z, tol)
    G = ell.real / float(d) ** m
    # relative defect of phi(f z) = phi(z)^d, computed on logs
    diff = g_image - d * g
    diff = complex(diff.real, math.remainder(diff.imag, TWO_PI))
    defect = abs(cmath.exp(diff) - 1)
    return BoettcherValue(cmath.exp(g), abs(g.real - G), defect, g)


# ---------------------------------------------------------------- rays


def _newton_point(f, z, target, g_ref, z_ref, gp_ref, tol, max_iter=40):
    """Newton for ``g(z) = target`` keeping the branch continuous from a reference."""
    d = f.d
    g = g_ref
    gp = gp_ref
    zc = z_ref
    for _ in range(max_iter):
        pred = g + gp * (z - zc)
        lv = levels(f, z, tol)
        if lv is None:
            return None
        m, ell = lv
        val, off = snap(ell, m, d, pred)
        if off > SNAP_LIMIT:
            return None
        gpz = log_derivative(f, z, tol)
        # second-order consistency of the prediction
        if m > 0 and abs((gpz - gp) * (z - zc)) * float(d) ** m / TWO_PI > SNAP_LIMIT:
            return None
        g, gp, zc = val, gpz, z
        res = target - val
        if abs(res) < 1e-13 * max(1.0, abs(target)):
            return z, val, gpz
        z = z + res / gpz
    return None


def _start_high(f, angle, h, tol):
    z = cmath.exp(complex(h, angle))
    for _ in range(60):
        m, ell = levels(f, z, tol)
        if m != 0:
            raise RayObstructed("starting height is below the escape disk", [], h)
        res = complex(h, angle) - ell
        res = complex(res.real, math.remainder(res.imag, TWO_PI))
        if abs(res) < 1e-14 * max(1, h):
            break
        z = z + res / log_derivative(f, z, tol)
    return z, complex(h, angle), log_derivative(f, z, tol)


def trace_ray(f: MarkedPolynomial, angle: float, h_start: float, h_end: float, steps: int,
              tol: float = 1e-13, M: float | None = None) -> list:
    """Points of the external ray of the given angle at equally spaced heights.

    Heights may go down (the usual case) or up.  If the start is below the
    escape disk, the ray is first followed down from a safe height.
    """
    angle = angle % TWO_PI
    d = f.d
    if M is None:
        M = max_escape_rate(f, EscapeBudget(f.escape_radius, 10_000, tol))
    if not (h_start > M and h_end > M):
        raise BelowCriticalLevel("ray heights must exceed the maximal critical height")
    h_safe = math.log(2 * f.escape_radius) + 1.0
    if h_start >= h_safe:
        state = _start_high(f, angle, h_start, tol)
    else:
        state = _start_high(f, angle, h_safe, tol)
        state = _follow(f, angle, h_safe, h_start, state, tol, [])
    out = [RayPoint(h_start, angle, state[0])]
    hs = np.linspace(h_start, h_end, steps + 1)
    for h_next in hs[1:]:
        state = _follow(f, angle, out[-1].height, float(h_next), state, tol, out)
        out.append(RayPoint(float(h_next), angle, state[0]))
    return out


def _follow(f, angle, h0, h1, state, tol, path_so_far):
    """Continue a ray point from height h0 to h1 with adaptive substeps."""
    h = h0
    dh = h1 - h0
    sub = dh
    while h != h1:
        if abs(sub) < 1e-10:
            raise RayObstructed(f"ray continuation stalled at height {h:.10g}", path_so_far, h)
        hn = h1 if abs(h1 - h) <= abs(sub) else h + sub
        z, g, gp = state
        pred_z = z + (hn - h) / gp
        # g.imag may differ from the angle by a multiple of 2 pi
        new = _newton_point(f, pred_z, complex(hn, g.imag), g, z, gp, tol)
        if new is None:
            sub /= 2
            continue
        state = new
        h = hn
        sub = min(abs(sub) * 1.5, abs(dh)) * (1 if dh > 0 else -1)
    return state


# ---------------------------------------------------------------- Phi_n


def critical_orbit_points(f: MarkedPolynomial, n: int):
    return [iterate(f, c, n) for c in f.critical_points]


def phi_n_map(f: MarkedPolynomial, n: int, tol: float = 1e-13) -> PhiImage:
    d = f.d
    budget = EscapeBudget(f.escape_radius, 10_000, tol)
    M = max_escape_rate(f, budget)
    pts = critical_orbit_points(f, n)
    logs = []
    for i, y in enumerate(pts):
        lv = levels(f, y, tol)
        G = -1.0 if lv is None else lv[1].real / float(d) ** lv[0]
        if not G > M:
            raise NotInDomain(f"critical point {i} is not above the critical level after {n} steps", i)
        logs.append(log_boettcher(f, y, tol, M))
    return PhiImage(n, tuple(cmath.exp(x) for x in logs), tuple(logs))


class PhiSystem:
    """Phi_n in logarithmic form as a function of the complex parameters u.

    ``u`` are the coordinates of :func:`poly.to_params`.  Branches are kept
    continuous by predicting each value from a reference point with known
    branch and its Jacobian.
    """

    def __init__(self, d: int, n: int, tol: float = 1e-13, fd_step: float = 1e-7):
        self.d = d
        self.n = n
        self.tol = tol
        self.fd_step = fd_step

    def _raw(self, u):
        f = from_params(self.d, u)
        M = None
        out = []
        R = f.escape_radius
        for y in critical_orbit_points(f, self.n):
            if not (math.isfinite(y.real) and math.isfinite(y.imag)):
                return None
            lv = levels(f, y, self.tol, 2000)
            if lv is None:
                return None
            out.append(lv)
        hs = []
        for c in f.critical_points:
            lv = levels(f, c, self.tol, 2000)
            if lv is None:
                return None
            hs.append(lv[1].real / float(self.d) ** lv[0])
        M = max(hs)
        for m, ell in out:
            if not ell.real / float(self.d) ** m > M:
                return None
        return f, out, min(hs)

    def evaluate(self, u, pred):
        """Branch-resolved logs at ``u`` nearest the predicted values.

        Returns ``(L, offset)`` or ``None`` when u leaves the domain.
        """
        raw = self._raw(u)
        if raw is None:
            return None
        _, lv, _ = raw
        vals = []
        worst = 0.0
        for (m, ell), p in zip(lv, pred):
            v, off = snap(ell, m, self.d, p)
            vals.append(v)
            worst = max(worst, off * 1.0)
        return np.array(vals), worst, max(m for m, _ in lv)

    def initial(self, u):
        """Exact logs at ``u`` (branch fixed through the external rays)."""
        f = from_params(self.d, u)
        img = phi_n_map(f, self.n, self.tol)
        return np.array(img.log_w)

    def jacobian(self, u, L):
        k = len(u)
        J = np.zeros((k, k), dtype=complex)
        for j in range(k):
            h = self.fd_step * max(1.0, abs(u[j]))
            e = np.zeros(k, dtype=complex)
            e[j] = h
            a = self.evaluate(u + e, L)
            b = self.evaluate(u - e, L)
            if a is None or b is None:
                raise LeftDomain("finite-difference stencil left the domain")
            J[:, j] = (a[0] - b[0]) / (2 * h)
        return J

    def solve(self, u, L, target, tol: float = 1e-11, max_iter: int = 60, max_halvings: int = 30,
              J=None):
        """Newton from (u, L) to logs congruent to ``target`` mod 2 pi i.

        A supplied ``J`` is reused (chord steps) while the residual keeps
        shrinking fast.  Returns ``(u, L, residual)``; raises NewtonDiverged /
        LeftDomain.
        """
        d = self.d
        u = np.array(u, dtype=complex)
        L = np.array(L, dtype=complex)
        target = np.array(target, dtype=complex)
        # evaluation error grows with the size of the logs
        tol = tol * max(1.0, float(np.max(np.abs(target))))

        def resid(Lv):
            r = target - Lv
            return r.real + 1j * np.remainder(r.imag + math.pi, TWO_PI) - 1j * math.pi

        r = resid(L)
        rn = float(np.max(np.abs(r)))
        left = False
        for _ in range(max_iter):
            if rn < tol:
                return u, L, rn
            if J is None:
                J = self.jacobian(u, L)
            try:
                step = np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                raise NewtonDiverged("singular Jacobian", from_params(d, u), rn)
            t = 1.0
            for _ in range(max_halvings):
                un = u + t * step
                pred = L + t * (J @ step)
                ev = self.evaluate(un, pred)
                if ev is None:
                    left = True
                    t /= 2
                    continue
                Ln, off, mmax = ev
                # second-order check: the prediction must be well inside a branch
                if mmax > 0 and off > SNAP_LIMIT:
                    t /= 2
                    continue
                rn_new = float(np.max(np.abs(resid(Ln))))
                if rn_new < rn or rn_new < tol:
                    break
                t /= 2
            else:
                if left:
                    raise LeftDomain("Newton iterate left the domain of Phi_n")
                raise NewtonDiverged("damping failed to reduce the residual", from_params(d, u), rn)
            if t < 1.0 or rn_new > 0.25 * rn:
                J = None
            u, L = un, Ln
            r = resid(L)
            rn = rn_new
        if rn < tol:
            return u, L, rn
        raise NewtonDiverged("Newton did not converge", from_params(d, u), rn)


def invert_phi_n(d: int, n: int, target: PhiImage, seed: MarkedPolynomial, tol: float = 1e-11,
                 verify: bool = True) -> MarkedPolynomial:
    """Solve ``Phi_n(c; a) = target`` by damped Newton from ``seed``."""
    if seed.d != d:
        raise ValueError("seed degree mismatch")
    if not target.in_region(d):
        raise NotInDomain("target is outside the region of admissible images")
    system = PhiSystem(d, n)
    u0 = to_params(seed)
    L0 = system.initial(u0)
    T = np.array(target.log_w)
    # approach the target along a straight path in log space so the branch
    # tracking never has to jump
    r = T - L0
    r = r.real + 1j * (np.remainder(r.imag + math.pi, TWO_PI) - math.pi)
    u, L = u0, L0
    pieces = max(1, int(np.ceil(np.max(np.abs(r)) / 0.25)))
    for k in range(1, pieces + 1):
        u, L, res = system.solve(u, L, L0 + r * (k / pieces), tol=tol if k == pieces else 1e-8)
    f = from_params(d, u)
    if verify:
        img = phi_n_map(f, n)
        err = max(abs(cmath.exp(a - b) - 1) for a, b in zip(img.log_w, target.log_w))
        if err > 100 * tol:
            raise NewtonDiverged(f"forward check failed (relative error {err:.3g})", f, err)
    return f
