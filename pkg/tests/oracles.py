"""Independent reference computations used only by the tests."""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations


def arrangement_counts(depth: int, base: int = 4):
    """(V, E, F) of the line arrangement x = b^-n, y = b^-n, y = x b^-n
    (n = 0..depth) restricted to the closed region b^-depth <= y <= x <= 1.

    Lines are (a, b, c) with a x + b y = c; everything is exact.  Faces are
    counted by a slab sweep and cross-checked with Euler's formula.
    """
    q = [Fraction(1, base ** n) for n in range(depth + 1)]
    lo = q[-1]
    lines = set()
    for t in q:
        lines.add((Fraction(1), Fraction(0), t))       # x = t
        lines.add((Fraction(0), Fraction(1), t))       # y = t
        lines.add((-t, Fraction(1), Fraction(0)))      # y = t x
    lines = sorted(lines)

    def inside(p):
        x, y = p
        return lo <= y <= x <= 1

    def meet(l1, l2):
        a1, b1, c1 = l1
        a2, b2, c2 = l2
        det = a1 * b2 - a2 * b1
        if det == 0:
            return None
        return ((c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det)

    on_line = {l: set() for l in lines}
    verts = set()
    for l1, l2 in combinations(lines, 2):
        p = meet(l1, l2)
        if p is not None and inside(p):
            verts.add(p)
            on_line[l1].add(p)
            on_line[l2].add(p)
    E = 0
    for l in lines:
        pts = on_line[l]
        # a line contributes segments only if it meets the region in more than a point
        if len(pts) >= 2:
            E += len(pts) - 1
    V = len(verts)

    # slab sweep
    xs = sorted({p[0] for p in verts})
    verticals = {l[2] for l in lines if l[1] == 0}
    nonvert = [l for l in lines if l[1] != 0]

    def gaps(xm):
        ys = []
        for a, b, c in nonvert:
            y = (c - a * xm) / b
            if lo <= y <= xm:
                ys.append((y, (a, b, c)))
        ys.sort()
        return [(ys[i][1], ys[i + 1][1]) for i in range(len(ys) - 1)]

    F = 0
    prev = None
    for x0, x1 in zip(xs, xs[1:]):
        cur = gaps((x0 + x1) / 2)
        F += len(cur)
        if prev is not None and x0 not in verticals:
            F -= len(set(prev) & set(cur))
        prev = cur
    if V - E + F != 1:
        raise AssertionError(f"Euler check failed: V={V} E={E} F={F}")
    return V, E, F


def mp_green(coeffs, z, d, n=60, prec=240):
    """d^-n log|f^n(z)| in high precision (coefficients ascending)."""
    import mpmath

    with mpmath.workprec(prec):
        co = [mpmath.mpc(c.real, c.imag) for c in coeffs]
        w = mpmath.mpc(z.real, z.imag)
        for _ in range(n):
            acc = co[-1]
            for c in reversed(co[:-1]):
                acc = acc * w + c
            w = acc
        return float(mpmath.log(abs(w)) / mpmath.mpf(d) ** n)


def mp_boettcher(coeffs, z, d, n=40, prec=400):
    """phi(z) = lim f^n(z)^(1/d^n) using the telescoping product of principal roots."""
    import mpmath

    with mpmath.workprec(prec):
        co = [mpmath.mpc(c.real, c.imag) for c in coeffs]
        w = mpmath.mpc(z.real, z.imag)
        out = w
        for k in range(n):
            acc = co[-1]
            for c in reversed(co[:-1]):
                acc = acc * w + c
            out *= (acc / w ** d) ** (mpmath.mpf(1) / mpmath.mpf(d) ** (k + 1))
            w = acc
        return complex(out)
