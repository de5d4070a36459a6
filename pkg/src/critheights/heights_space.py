"""Arithmetic on the space of critical heights.

Cells of the height complex are labelled by integers only.  After
normalising ``h_1 = 1`` every coordinate can be written ``h_i = g / d^e``
with ``g`` in ``[1, d)``; the distinct values of ``g`` (one per independence
class) are ``1 = g_1 < g_2 < ... < g_N < d`` and coordinate ``i`` records
the pair ``(e_i, r_i)`` where ``r_i`` is the rank of its ``g``.  The
barycentric chart is

    g_k = 1 + (d - 1) (x_1 + ... + x_(k-1)),

so ``x_j`` is the normalised modulus of the j-th fundamental subannulus.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DegenerateLift, NotNormalized, ZeroHeight
from .escape import HeightsVector

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SubannuliDecomposition:
    d: int
    N: int
    representatives: tuple
    levels: tuple
    lifted: tuple
    moduli: tuple
    M: float
    classes: tuple = ()

    def to_json(self):
        return {
            "d": self.d,
            "N": self.N,
            "classes": [list(c) for c in self.classes],
            "representatives": list(self.representatives),
            "levels": list(self.levels),
            "lifted": list(self.lifted),
            "moduli": list(self.moduli),
            "M": self.M,
        }


@dataclass(frozen=True)
class WringParameter:
    t: float
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("s must be positive")

    @property
    def tau(self) -> complex:
        return complex(self.t, self.s)


def _as_heights(h, d=None) -> HeightsVector:
    if isinstance(h, HeightsVector):
        return h
    vals = [float(x) for x in h]
    return HeightsVector.from_values(d if d is not None else len(vals) + 1, vals)


def _ratio_exponent(x: float, y: float, d: int, rel_tol: float, nmax: int):
    """Integer n with x = d^n y (relative tolerance), or None."""
    n = round(math.log(x / y) / math.log(d))
    if abs(n) > nmax:
        return None
    if abs(x - y * float(d) ** n) <= rel_tol * max(x, y * float(d) ** n):
        return n
    return None


def partition_by_powers(values, d: int, rel_tol: float = 1e-9):
    """Group positive values related by integer powers of d (0-based indices)."""
    vals = [float(v) for v in values]
    if any(v <= 0 for v in vals):
        raise ZeroHeight("independence is only defined for positive heights")
    top, bottom = max(vals), min(vals)
    nmax = math.ceil(math.log(top / bottom) / math.log(d)) + 2
    parent = list(range(len(vals)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(len(vals)), 2):
        if _ratio_exponent(vals[i], vals[j], d, rel_tol, nmax) is not None:
            parent[find(j)] = find(i)
    groups = {}
    for i in range(len(vals)):
        groups.setdefault(find(i), []).append(i)
    return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])


def independence_classes(h, rel_tol: float = 1e-9, d: int | None = None):
    """Partition of coordinate indices (0-based) into independence classes.

    Returns ``(classes, N)``; classes are sorted tuples ordered by their
    first index.
    """
    h = _as_heights(h, d)
    classes = partition_by_powers(h.heights, h.d, rel_tol)
    return classes, len(classes)


def moduli_matrix(d: int, N: int) -> np.ndarray:
    """Integer matrix K with m = K g / 2 pi."""
    if N == 1:
        return np.array([[d - 1]], dtype=np.int64)
    K = np.zeros((N, N), dtype=np.int64)
    for j in range(N - 1):
        K[j, j] = -1
        K[j, j + 1] = 1
    K[N - 1, 0] = d
    K[N - 1, N - 1] = -1
    return K


def exact_determinant(K) -> int:
    """Bareiss fraction-free elimination on an integer matrix."""
    A = [[int(x) for x in row] for row in K]
    n = len(A)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if A[k][k] == 0:
            for i in range(k + 1, n):
                if A[i][k] != 0:
                    A[k], A[i] = A[i], A[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


def level(x: float, top: float, d: int, rel_tol: float = 1e-9) -> int:
    """Least integer l with d^l x >= top (ties within rel_tol count as equal)."""
    l = math.ceil(math.log(top / x) / math.log(d))
    # correct rounding near integer exponents
    while x * float(d) ** (l - 1) >= top * (1 - rel_tol):
        l -= 1
    while x * float(d) ** l < top * (1 - rel_tol):
        l += 1
    return l


def subannuli(h, rel_tol: float = 1e-9, d: int | None = None) -> SubannuliDecomposition:
    h = _as_heights(h, d)
    d = h.d
    classes, N = independence_classes(h, rel_tol)
    M = h.heights[0]
    reps = []
    for cls in classes:
        x = h.heights[cls[0]]
        l = level(x, M, d, rel_tol)
        lifted = x * float(d) ** l
        if cls[0] == 0:
            lifted = M
        reps.append((lifted, x, l, cls))
    reps.sort(key=lambda r: r[0])
    g = np.array([r[0] for r in reps])
    if np.any(np.diff(g) <= rel_tol * M):
        raise DegenerateLift("two independence classes lift to the same height")
    K = moduli_matrix(d, N)
    m = (K @ g) / TWO_PI
    return SubannuliDecomposition(
        d, N,
        tuple(r[1] for r in reps),
        tuple(r[2] for r in reps),
        tuple(float(x) for x in g),
        tuple(float(x) for x in m),
        M,
        tuple(r[3] for r in reps),
    )


def stretch(h, s: float) -> HeightsVector:
    if not s > 0:
        raise ValueError("stretch factor must be positive")
    h = _as_heights(h)
    return HeightsVector(h.d, tuple(s * x for x in h.heights))


def wring_vector(dec: SubannuliDecomposition, tau: WringParameter) -> list:
    scale = TWO_PI / ((dec.d - 1) * dec.M)
    return [complex(scale * m * tau.t, tau.s) for m in dec.moduli]


def simplex_coords(dec: SubannuliDecomposition) -> list:
    if abs(dec.M - 1.0) > 1e-12:
        raise NotNormalized(f"maximal height is {dec.M!r}, expected 1")
    return [TWO_PI * m / (dec.d - 1) for m in dec.moduli]


# ------------------------------------------------------------ the complex


@dataclass(frozen=True)
class Cell:
    """Open simplex; ``label[i] = (e_i, r_i)`` for coordinate i."""

    d: int
    label: tuple

    @property
    def N(self) -> int:
        return max(r for _, r in self.label)

    @property
    def dim(self) -> int:
        return self.N - 1

    def chart(self, x) -> HeightsVector:
        """Height vector at barycentric coordinates ``x`` (length N)."""
        x = [float(v) for v in x]
        if len(x) != self.N:
            raise ValueError(f"need {self.N} barycentric coordinates")
        g = [1.0]
        for k in range(1, self.N):
            g.append(1.0 + (self.d - 1) * sum(x[:k]))
        return HeightsVector(self.d, tuple(g[r - 1] / float(self.d) ** e for e, r in self.label))

    def exact_chart(self, x) -> tuple:
        """Exact rational version of :meth:`chart`."""
        x = [Fraction(v) for v in x]
        g = [Fraction(1)]
        for k in range(1, self.N):
            g.append(1 + (self.d - 1) * sum(x[:k]))
        return tuple(g[r - 1] / Fraction(self.d) ** e for e, r in self.label)

    def barycenter(self) -> HeightsVector:
        return self.chart([1.0 / self.N] * self.N)

    def facets(self) -> list:
        N = self.N
        if N == 1:
            return []
        out = []
        for j in range(1, N):
            lab = []
            for e, r in self.label:
                lab.append((e, r - 1 if r > j else r))
            out.append(Cell(self.d, _normal(lab)))
        lab = [(e - 1, 1) if r == N else (e, r) for e, r in self.label]
        out.append(Cell(self.d, _normal(lab)))
        return out

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "label": [list(p) for p in self.label],
            "point": list(self.barycenter().heights),
        }


def _normal(label):
    return tuple(sorted(label, key=lambda p: (p[0], -p[1])))


@dataclass
class HeightComplex:
    d: int
    depth: int
    cells: list
    faces: dict = field(default_factory=dict)

    def by_dim(self, k: int) -> list:
        return [c for c in self.cells if c.dim == k]

    def counts(self) -> list:
        top = max((c.dim for c in self.cells), default=-1)
        return [len(self.by_dim(k)) for k in range(top + 1)]

    def index(self) -> dict:
        return {c.label: i for i, c in enumerate(self.cells)}

    def to_json(self) -> dict:
        idx = self.index()
        return {
            "d": self.d,
            "depth": self.depth,
            "counts": self.counts(),
            "cells": [
                dict(c.to_json(), id=i, faces=[idx[f.label] for f in self.faces[c.label]])
                for i, c in enumerate(self.cells)
            ],
        }


def _labels(d: int, depth: int):
    """All normalised labels with exponents up to ``depth``."""
    k = d - 2  # free coordinates after the anchor (0, 1)
    seen = set()
    for N in range(1, d):
        pairs = [(e, r) for r in range(1, N + 1) for e in range(0 if r == 1 else 1, depth + 1)]
        for combo in itertools.combinations_with_replacement(pairs, k):
            ranks = {r for _, r in combo} | {1}
            if ranks != set(range(1, N + 1)):
                continue
            lab = _normal(((0, 1),) + combo)
            if lab not in seen:
                seen.add(lab)
                yield lab


def build_height_complex(d: int, depth: int) -> HeightComplex:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if d < 2:
        raise ValueError("degree must be >= 2")
    cells = [Cell(d, lab) for lab in _labels(d, depth)]
    cells.sort(key=lambda c: (c.dim, c.label))
    faces = {c.label: c.facets() for c in cells}
    return HeightComplex(d, depth, cells, faces)


def boundary_is_closed(cx: HeightComplex) -> bool:
    """Check that the boundary of every boundary vanishes mod 2."""
    for c in cx.cells:
        counts = {}
        for f in cx.faces[c.label]:
            for g in cx.faces[f.label]:
                counts[g.label] = counts.get(g.label, 0) + 1
        if any(v % 2 for v in counts.values()):
            return False
    return True


def cell_of(h, rel_tol: float = 1e-9, d: int | None = None) -> Cell:
    """The open cell containing a (normalised) height vector."""
    h = _as_heights(h, d)
    d = h.d
    top = h.heights[0]
    dec = subannuli(h, rel_tol)
    rank = {}
    for r, cls in enumerate(dec.classes, start=1):
        for i in cls:
            rank[i] = r
    label = []
    for i, x in enumerate(h.heights):
        r = rank[i]
        e = round(math.log(dec.lifted[r - 1] / (x / top * dec.M)) / math.log(d))
        label.append((e, r))
    return Cell(d, _normal(label))


def edge_param(cell: Cell, x: float) -> HeightsVector:
    """Point of a 1-cell: the independent coordinates are (1 + (d-1) x) / d^n."""
    if cell.dim != 1:
        raise ValueError("edge_param needs a 1-cell")
    return cell.chart([x, 1.0 - x])
