"""Finite truncations of the dynamical tree of a polynomial.

The tree is read off sublevel sets of G on a square grid.  Vertices sit at
the heights ``g_j * d^-k`` where ``g_1 < ... < g_N`` are the critical
heights lifted into the fundamental band ``[M, dM)``; a vertex at height
``t`` is a connected component of ``{G < s}`` for ``s`` strictly between
``t`` and the next vertex height.  Vertices are keyed by ``(j, k)`` so that
``F`` multiplies heights by ``d`` exactly (``k -> k - 1``).

Above ``M`` every sublevel set is connected, so vertices of height ``>= M``
are not computed on the grid.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import InsufficientDepth, LevelMismatch, TreeTooLarge, UnstableAtResolution
from .escape import green_grid, marked_heights
from .heights_space import level, partition_by_powers
from .poly import EscapeBudget, MarkedPolynomial, evaluate

log = logging.getLogger(__name__)

LATTICE_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    resolution: int = 256
    refinement_limit: int = 3
    half_width: float | None = None
    max_vertices: int = 2000

    def __post_init__(self):
        r = self.resolution
        if r < 8 or r & (r - 1):
            raise ValueError("resolution must be a power of 2 (>= 8)")
        if self.refinement_limit < 0:
            raise ValueError("refinement_limit must be >= 0")

    def refined(self) -> "GridSpec":
        return replace(self, resolution=2 * self.resolution)


@dataclass(frozen=True)
class Vertex:
    id: int
    height: float
    local_degree: int
    level: int
    key: tuple


@dataclass(frozen=True)
class Edge:
    child: int
    parent: int
    degree: int


@dataclass
class PolyTree:
    d: int
    vertices: list
    edges: list
    dynamics: dict
    base_height: float
    M: float
    trivial: bool
    band: tuple = ()
    critical_heights: tuple = ()
    truncation: int | None = None
    resolution: int | None = None
    unstable: bool = False
    checks: dict = field(default_factory=dict)
    stubs: dict = field(default_factory=dict)

    # ---- navigation
    def vertex(self, vid) -> Vertex:
        return self._vmap()[vid]

    def _vmap(self):
        return {v.id: v for v in self.vertices}

    def parent(self) -> dict:
        return {e.child: e.parent for e in self.edges}

    def children(self) -> dict:
        out = {v.id: [] for v in self.vertices}
        for e in self.edges:
            out[e.parent].append(e.child)
        return out

    def edge_degree(self) -> dict:
        return {e.child: e.degree for e in self.edges}

    def root(self):
        par = self.parent()
        roots = [v.id for v in self.vertices if v.id not in par]
        return roots[0] if len(roots) == 1 else None

    # ---- output
    def to_json(self) -> dict:
        return {
            "d": self.d,
            "trivial": self.trivial,
            "M": self.M,
            "base_height": self.base_height,
            "band": list(self.band),
            "critical_heights": list(self.critical_heights),
            "truncation": self.truncation,
            "resolution": self.resolution,
            "unstable": self.unstable,
            "vertices": [
                {"id": v.id, "height": v.height, "local_degree": v.local_degree,
                 "level": v.level, "key": list(v.key)}
                for v in self.vertices
            ],
            "edges": [{"child": e.child, "parent": e.parent, "degree": e.degree} for e in self.edges],
            "dynamics": {str(k): v for k, v in sorted(self.dynamics.items())},
            "stubs": {str(k): v for k, v in sorted(self.stubs.items())},
        }

    def to_dot(self) -> str:
        lines = ["digraph tree {"]
        for v in self.vertices:
            lines.append(
                f'  v{v.id} [label="{v.height:.6g}", height={v.height!r}, '
                f"local_degree={v.local_degree}, level={v.level}];"
            )
        for e in self.edges:
            lines.append(f"  v{e.child} -> v{e.parent} [degree={e.degree}];")
        for a, b in sorted(self.dynamics.items()):
            lines.append(f"  v{a} -> v{b} [style=dashed, constraint=false];")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def branch_vertices(self) -> list:
        """Vertices with more than one branch below (stubs under the floor included)."""
        ch = self.children()
        return [v.id for v in self.vertices if len(ch[v.id]) + self.stubs.get(v.id, 0) > 1]

    def summary(self) -> dict:
        return {
            "vertices": len(self.vertices),
            "edges": len(self.edges),
            "branch_vertices": len(self.branch_vertices()),
            "trivial": self.trivial,
        }


# ------------------------------------------------------------ lattice


def _lattice(d, crit, floor):
    """Band values g_j and the vertex keys (j, k) with floor <= g_j d^-k <= dM."""
    pos = sorted((h for h in crit if h > 0), reverse=True)
    M = pos[0]
    band = []
    for cls in partition_by_powers(pos, d, LATTICE_TOL):
        x = pos[cls[0]]
        band.append(M if cls[0] == 0 else x * float(d) ** level(x, M, d, LATTICE_TOL))
    band.sort()
    keys = []
    for j, g in enumerate(band):
        k = -1
        while g * float(d) ** (-k) >= floor:
            keys.append((j, k))
            k += 1
    keys.sort(key=lambda jk: band[jk[0]] * float(d) ** (-jk[1]))
    return M, band, keys


def _key_of(h, band, d):
    """Lattice key of a positive height, or None."""
    for j, g in enumerate(band):
        k = round(math.log(g / h) / math.log(d))
        if abs(g * float(d) ** (-k) - h) <= LATTICE_TOL * h * 10:
            return (j, k)
    return None


# ------------------------------------------------------------ building


def build_tree(f: MarkedPolynomial, floor: float, grid: GridSpec | None = None,
               budget: EscapeBudget | None = None) -> PolyTree:
    """Tree of ``f`` above ``floor``, refined until two resolutions agree."""
    if not floor > 0:
        raise ValueError("floor must be positive")
    grid = grid or GridSpec()
    crit = [v.value for v in marked_heights(f, budget)]
    d = f.d
    if not any(h > 0 for h in crit):
        return _trivial_tree(d, floor)
    previous = None
    current = grid
    for _ in range(grid.refinement_limit + 1):
        tree = _tree_at(f, floor, current, crit)
        log.debug("resolution %d: %s checks=%s", current.resolution, tree.summary(), tree.checks)
        if previous is not None and all(tree.checks.values()) and all(previous.checks.values()):
            if iso_test(previous, tree, 0.0):
                return tree
        previous = tree
        current = current.refined()
    previous.unstable = True
    raise UnstableAtResolution(
        f"tree combinatorics not stable up to resolution {previous.resolution}", previous
    )


def _trivial_tree(d, floor):
    vs = [Vertex(0, d * floor, 1, 0, (0, 0)), Vertex(1, floor, 1, 1, (0, 1))]
    return PolyTree(d, vs, [Edge(1, 0, 1)], {1: 0}, floor, 0.0, True, (d * floor,), ())


class _Node:
    __slots__ = ("level", "vid", "x0", "y0", "cell", "n", "G", "mask", "child_lab", "lab2child")

    def __init__(self, level, vid):
        self.level = level
        self.vid = vid
        self.child_lab = None
        self.lab2child = {}

    def pixel(self, z):
        i = int(round((z.imag - self.y0) / self.cell))
        j = int(round((z.real - self.x0) / self.cell))
        if 0 <= i < self.n and 0 <= j < self.n:
            return i, j
        return None

    def point(self, i, j):
        return complex(self.x0 + j * self.cell, self.y0 + i * self.cell)


def _eval_grid(f, x0, y0, cell, n):
    xs = x0 + cell * np.arange(n)
    ys = y0 + cell * np.arange(n)
    Z = xs[None, :] + 1j * ys[:, None]
    G = green_grid(f, Z, max_iterations=400)
    gy, gx = np.gradient(G, cell)
    # one-cell Lipschitz allowance so saddles are not glued at the sampled level
    return G, G + 0.5 * cell * np.hypot(gx, gy)


def _root_box(f, M, n, half=None):
    """Square grid around {G < M}, shrunk from a safe enclosing box."""
    half = half or 1.05 * max(f.escape_radius, math.exp(M + 1.0))
    x0 = y0 = -half
    side = 2 * half
    for _ in range(8):
        cell = side / (n - 1)
        G, Gp = _eval_grid(f, x0, y0, cell, n)
        sel = (2 * G - Gp) < M
        if not sel.any():
            break
        rows, cols = np.nonzero(sel)
        xlo, xhi = x0 + (cols.min() - 2) * cell, x0 + (cols.max() + 2) * cell
        ylo, yhi = y0 + (rows.min() - 2) * cell, y0 + (rows.max() + 2) * cell
        new_side = max(xhi - xlo, yhi - ylo)
        if new_side > 0.8 * side:
            break
        x0, y0 = (xlo + xhi - new_side) / 2, (ylo + yhi - new_side) / 2
        side = new_side
    return x0, y0, side / (n - 1)


def _lookup(lab, px):
    if px is None:
        return 0
    r, c = px
    if lab[r, c]:
        return int(lab[r, c])
    win = lab[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2]
    vals = np.unique(win[win > 0])
    return int(vals[0]) if vals.size == 1 else 0


def _tree_at(f: MarkedPolynomial, floor: float, grid: GridSpec, crit) -> PolyTree:
    d = f.d
    M, band, keys = _lattice(d, crit, floor)
    height = {key: band[key[0]] * float(d) ** (-key[1]) for key in keys}
    lvl_keys = sorted(keys, key=lambda k: height[k])
    hs = [height[k] for k in lvl_keys]
    # sublevel just above each vertex height
    s_up = [math.sqrt(hs[i] * hs[i + 1]) for i in range(len(hs) - 1)] + [hs[-1] * math.sqrt(d)]
    key_index = {k: i for i, k in enumerate(lvl_keys)}
    top = next(i for i, h in enumerate(hs) if h >= M * (1 - LATTICE_TOL))
    n = grid.resolution
    ok = {"grid": True, "dyn": True, "crit": True}

    vid_counter = [0]

    def new_vid():
        if vid_counter[0] >= grid.max_vertices:
            raise TreeTooLarge(f"more than {grid.max_vertices} vertices above floor {floor:.6g}")
        vid_counter[0] += 1
        return vid_counter[0] - 1

    # unique vertices at and above M
    top_vids = {i: new_vid() for i in range(top, len(hs))}
    parent_of = {top_vids[i]: top_vids[i + 1] for i in range(top, len(hs) - 1)}
    level_of = {v: i for i, v in top_vids.items()}
    nodes = {}
    stubs = {}

    root = _Node(top, top_vids[top])
    root.x0, root.y0, root.cell = _root_box(f, M, n, grid.half_width)
    root.n = n

    def label_children(node, G, Gp):
        i = node.level - 1
        lab, num = ndimage.label(Gp < s_up[i])
        node.child_lab = lab
        inside = np.unique(lab[node.mask & (lab > 0)])
        for ell in inside:
            ell = int(ell)
            pix = lab == ell
            if np.count_nonzero(pix & ~node.mask) > 0:
                ok["grid"] = False
            child = _Node(i, new_vid())
            level_of[child.vid] = i
            parent_of[child.vid] = node.vid
            node.lab2child[ell] = child
            nodes[child.vid] = child
            _expand(child, node, pix, G)

    def _expand(child, parent, pix, Gpar):
        rows, cols = np.nonzero(pix)
        pad = 2 * parent.cell
        xlo = parent.x0 + cols.min() * parent.cell - pad
        xhi = parent.x0 + cols.max() * parent.cell + pad
        ylo = parent.y0 + rows.min() * parent.cell - pad
        yhi = parent.y0 + rows.max() * parent.cell + pad
        side = max(xhi - xlo, yhi - ylo)
        cx, cy = (xlo + xhi) / 2, (ylo + yhi) / 2
        child.cell = side / (n - 1)
        child.x0, child.y0, child.n = cx - side / 2, cy - side / 2, n
        G, Gp = _eval_grid(f, child.x0, child.y0, child.cell, n)
        lab, _ = ndimage.label(Gp < s_up[child.level])
        # identify the component through the deepest point of the parent's view
        k = np.argmin(np.where(pix, Gpar, np.inf))
        anchor = parent.point(*np.unravel_index(k, pix.shape))
        ell = _lookup(lab, child.pixel(anchor))
        if ell == 0:
            ok["grid"] = False
            child.mask = np.zeros_like(lab, dtype=bool)
        else:
            child.mask = lab == ell
        child.G = G
        if child.level > 0:
            label_children(child, G, Gp)
        else:
            count_stubs(child, Gp)

    def count_stubs(node, Gp):
        # branches hanging below the floor
        if floor < hs[0]:
            lab, _ = ndimage.label(Gp < floor)
            stubs[node.vid] = int(np.unique(lab[node.mask & (lab > 0)]).size)

    G, Gp = _eval_grid(f, root.x0, root.y0, root.cell, n)
    root.mask = np.ones_like(G, dtype=bool)
    root.G = G
    if top > 0:
        label_children(root, G, Gp)
    else:
        count_stubs(root, Gp)

    def locate(z, i):
        """Vertex at level index i whose component contains z (None if unresolved)."""
        if i >= top:
            return top_vids[i]
        node = root
        while node.level > i:
            ell = _lookup(node.child_lab, node.pixel(z))
            node = node.lab2child.get(ell)
            if node is None:
                return None
        return node.vid

    all_vids = sorted(level_of)
    local = {v: 1 for v in all_vids}
    edeg = {v: 1 for v in all_vids}
    for c, h in zip(f.critical_points, crit):
        ckey = _key_of(h, band, d) if h > 0 else None
        for i in range(len(hs)):
            if h > s_up[i]:
                continue
            v = locate(c, i)
            if v is None:
                ok["crit"] = False
                continue
            edeg[v] += 1
            if ckey is not None and key_index.get(ckey) == i:
                local[v] += 1

    rng = np.random.default_rng(0)
    dynamics = {}
    for v in all_vids:
        i = level_of[v]
        j, k = lvl_keys[i]
        ii = key_index.get((j, k - 1))
        if ii is None:
            continue
        if ii >= top:
            dynamics[v] = top_vids[ii]
            continue
        node = nodes[v]
        rows, cols = np.nonzero(node.mask & (node.G < 0.8 * s_up[i]))
        if rows.size == 0:
            ok["dyn"] = False
            continue
        picks = [int(np.argmin(node.G[rows, cols]))]
        picks += [int(x) for x in rng.choice(rows.size, size=min(2, rows.size), replace=False)]
        targets = {locate(evaluate(f, node.point(rows[p], cols[p])), ii) for p in picks}
        if len(targets) != 1 or None in targets:
            ok["dyn"] = False
            continue
        dynamics[v] = targets.pop()

    verts = []
    for v in all_vids:
        i = level_of[v]
        j, k = lvl_keys[i]
        verts.append(Vertex(v, hs[i], local[v], k, (j, k)))
    edges = [Edge(c, p, edeg[c]) for c, p in sorted(parent_of.items())]
    tree = PolyTree(d, verts, edges, dynamics, floor, M, False, tuple(band), tuple(crit),
                    resolution=n, stubs=stubs)

    counts = {}
    for v in all_vids:
        counts[level_of[v]] = counts.get(level_of[v], 0) + 1
    counts_ok = True
    for i in range(top):
        j, k = lvl_keys[i]
        ii = key_index.get((j, k - 1))
        if ii is None:
            continue
        below = sum(1 for h in crit if h < s_up[i])
        if counts.get(i, 0) + below != d * counts.get(ii, 0):
            counts_ok = False
    tree.checks = {
        "grid_nesting": ok["grid"],
        "critical_points_located": ok["crit"],
        "dynamics_consistent": ok["dyn"],
        "component_count_identity": counts_ok,
        "riemann_hurwitz": riemann_hurwitz_ok(tree),
    }
    return tree


def riemann_hurwitz_ok(t: PolyTree) -> bool:
    """Degree of the edge above v = sum of child edge degrees - #children + local degree."""
    ch = t.children()
    ed = t.edge_degree()
    vm = t._vmap()
    for v in t.vertices:
        kids = ch[v.id]
        if not kids or v.id not in ed:
            continue
        if min(vm[c].height for c in kids) < t.base_height:
            continue
        # vertices whose children are the lowest level are still complete
        if ed[v.id] != sum(ed[c] for c in kids) - len(kids) + v.local_degree:
            return False
    return True


def band_degree_counts(t: PolyTree):
    """Per band [d^-k M, d^-(k-1) M): (sum of local_degree - 1, escaping critical points)."""
    out = {}
    d = t.d
    for v in t.vertices:
        if v.height >= t.M * d:
            continue
        k = math.floor(math.log(t.M / v.height) / math.log(d) + 1e-12)
        out.setdefault(k, [0, 0])[0] += v.local_degree - 1
    for h in t.critical_heights:
        if h <= 0 or h < t.base_height:
            continue
        k = math.floor(math.log(t.M / h) / math.log(d) + 1e-12)
        out.setdefault(k, [0, 0])[1] += 1
    return {k: tuple(v) for k, v in out.items()}


# ------------------------------------------------------------ operations


def truncate(t: PolyTree, N: int) -> PolyTree:
    if N < 1:
        raise ValueError("N must be >= 1")
    keep = {v.id for v in t.vertices if abs(v.level) < N}
    trunc = N if t.truncation is None else min(N, t.truncation)
    return PolyTree(
        t.d,
        [v for v in t.vertices if v.id in keep],
        [e for e in t.edges if e.child in keep and e.parent in keep],
        {a: b for a, b in t.dynamics.items() if a in keep and b in keep},
        t.base_height,
        t.M,
        t.trivial,
        t.band,
        t.critical_heights,
        trunc,
        t.resolution,
        t.unstable,
        dict(t.checks),
        {a: b for a, b in t.stubs.items() if a in keep},
    )


def _colors(t: PolyTree):
    """Bottom-up canonical colours (level, degrees, multiset of child colours)."""
    ch = t.children()
    ed = t.edge_degree()
    vm = t._vmap()
    order = sorted(t.vertices, key=lambda v: v.height)
    col = {}
    for v in order:
        col[v.id] = (v.level, v.local_degree, ed.get(v.id, 0), v.id in t.dynamics,
                     tuple(sorted(col[c] for c in ch[v.id])))
    return col


def iso_test(t1: PolyTree, t2: PolyTree, eps: float) -> bool:
    """Dynamics- and degree-preserving isomorphism moving heights by <= eps."""
    if t1.truncation != t2.truncation:
        raise LevelMismatch(f"truncation levels differ: {t1.truncation} vs {t2.truncation}")
    if t1.trivial != t2.trivial:
        return False
    if len(t1.vertices) != len(t2.vertices) or len(t1.edges) != len(t2.edges):
        return False
    if len(t1.dynamics) != len(t2.dynamics):
        return False
    c1, c2 = _colors(t1), _colors(t2)
    if sorted(c1.values()) != sorted(c2.values()):
        return False
    v1, v2 = t1._vmap(), t2._vmap()
    p1, p2 = t1.parent(), t2.parent()
    ch2 = t2.children()
    order = sorted(t1.vertices, key=lambda v: -v.height)
    roots2 = [v.id for v in t2.vertices if v.id not in p2]
    pi = {}
    used = set()

    def candidates(v):
        if v.id in p1:
            pool = ch2[pi[p1[v.id]]]
        else:
            pool = roots2
        return [w for w in pool if w not in used and c2[w] == c1[v.id]]

    def consistent(v, w):
        if abs(v1[v].height - v2[w].height) > eps:
            return False
        if (v in t1.dynamics) != (w in t2.dynamics):
            return False
        if v in t1.dynamics and t1.dynamics[v] in pi:
            if pi[t1.dynamics[v]] != t2.dynamics[w]:
                return False
        return True

    def search(idx):
        if idx == len(order):
            # dynamics images may have been assigned after their sources
            return all(pi[a] in t2.dynamics and t2.dynamics[pi[a]] == pi[b]
                       for a, b in t1.dynamics.items())
        v = order[idx]
        for w in candidates(v):
            if consistent(v.id, w):
                pi[v.id] = w
                used.add(w)
                if search(idx + 1):
                    return True
                del pi[v.id]
                used.discard(w)
        return False

    return search(0)


def twist_periods(t: PolyTree) -> list:
    """Periods d_j of the fundamental subannuli read off the tree.

    For every edge whose orbit reaches the band edge of A_j, multiply the
    edge degrees along the orbit (the band edge included); d_j is the lcm.
    """
    if t.trivial:
        return []
    pos = [h for h in t.critical_heights if h > 0]
    if t.base_height > min(pos) * (1 + 1e-12):
        raise InsufficientDepth(
            f"floor {t.base_height:.6g} is above the lowest critical height {min(pos):.6g}"
        )
    ed = t.edge_degree()
    vm = t._vmap()
    band = sorted((v for v in t.vertices if v.level == 0 and v.id in ed), key=lambda v: v.height)
    slot = {v.id: j for j, v in enumerate(band)}
    periods = [ed[v.id] for v in band]
    for v in t.vertices:
        if v.level <= 0 or v.id not in ed:
            continue
        prod = 1
        w = v.id
        ok = True
        while vm[w].level > 0:
            prod *= ed[w]
            if w not in t.dynamics:
                ok = False
                break
            w = t.dynamics[w]
        if not ok or w not in slot:
            continue
        prod *= ed[w]
        j = slot[w]
        periods[j] = math.lcm(periods[j], prod)
    return periods


def load_tree(data) -> PolyTree:
    if isinstance(data, str):
        data = json.loads(data)
    return PolyTree(
        data["d"],
        [Vertex(v["id"], v["height"], v["local_degree"], v["level"], tuple(v["key"])) for v in data["vertices"]],
        [Edge(e["child"], e["parent"], e["degree"]) for e in data["edges"]],
        {int(k): v for k, v in data["dynamics"].items()},
        data["base_height"],
        data["M"],
        data["trivial"],
        tuple(data.get("band", ())),
        tuple(data.get("critical_heights", ())),
        data.get("truncation"),
        data.get("resolution"),
        data.get("unstable", False),
        stubs={int(k): v for k, v in data.get("stubs", {}).items()},
    )
