"""Embedded square and hexagonal lattice domains.

A domain is a finite union of lattice cells (unit squares or regular
hexagons) scaled by the mesh ``eps``.  Vertices carry integer lattice keys so
that adjacency never depends on floating point comparisons.

Mid-edges are indexed as follows: ids ``0 .. E-1`` are the midpoints of the
domain edges, ids ``E .. E+S-1`` are the midpoints of the *stubs*, i.e. the
half-edges that leave a domain vertex along a lattice direction whose edge is
not part of the domain.  Stubs are the boundary mid-edges used by the lattice
models (the interface enters and leaves the domain through them).
"""

from __future__ import annotations

import cmath
import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

SQUARE = "square"
HEXAGONAL = "hexagonal"

# hexagonal vertices sit at u * (A + B*omega) with u = eps*exp(i pi/6)
_OMEGA = cmath.exp(1j * math.pi / 3)
_HEX_STEPS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))
_SQ_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1))
_HEX_CORNERS = _HEX_STEPS  # omega**k in the (1, omega) basis


class DomainError(ValueError):
    """Invalid lattice domain request."""


def _ndirs(kind: str) -> int:
    return 4 if kind == SQUARE else 6


def direction(kind: str, k: int) -> complex:
    """Unit vector of lattice direction ``k``."""
    if kind == SQUARE:
        return (1, 1j, -1, -1j)[k % 4]
    return cmath.exp(1j * (math.pi / 6 + (k % 6) * math.pi / 3))


def _steps(kind: str):
    return _SQ_STEPS if kind == SQUARE else _HEX_STEPS


def _position(kind: str, key: tuple[int, int], mesh: float) -> complex:
    a, b = key
    if kind == SQUARE:
        return complex(a * mesh, b * mesh)
    return mesh * cmath.exp(1j * math.pi / 6) * (a + b * _OMEGA)


@dataclass(frozen=True)
class OrientedEdge:
    tail: int
    head: int
    direction: complex

    def reversed(self) -> "OrientedEdge":
        return OrientedEdge(self.head, self.tail, -self.direction)


@dataclass(frozen=True)
class VertexStar:
    """Mid-edges around a vertex in counterclockwise order."""

    center: int
    midedges: tuple[int, ...]
    directions: tuple[complex, ...]

    def bisectors(self) -> list[complex]:
        """Unit bisectors of consecutive pairs (k, k+1) in ccw order."""
        out = []
        n = len(self.directions)
        for k in range(n):
            d1, d2 = self.directions[k], self.directions[(k + 1) % n]
            half = (cmath.phase(d2 / d1) % (2 * math.pi)) / 2
            out.append(d1 * cmath.exp(1j * half))
        return out


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    kind: str
    mesh: float
    keys: tuple[tuple[int, int], ...]
    edges: np.ndarray  # (E, 2) vertex ids
    faces: tuple[tuple[int, ...], ...]  # counterclockwise vertex cycles
    boundary: tuple[tuple[int, int], ...]  # ccw boundary cycle, domain on the left
    stubs: tuple[tuple[int, int], ...]  # (vertex id, direction index)
    cells: tuple[tuple[int, int], ...] = ()
    marks: tuple[int, int] | None = None

    # -- geometry -----------------------------------------------------------
    @cached_property
    def vertices(self) -> np.ndarray:
        return np.array([_position(self.kind, k, self.mesh) for k in self.keys])

    @property
    def n_vertices(self) -> int:
        return len(self.keys)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_midedges(self) -> int:
        return len(self.edges) + len(self.stubs)

    @property
    def ndirs(self) -> int:
        return _ndirs(self.kind)

    @cached_property
    def key_index(self) -> dict[tuple[int, int], int]:
        return {k: i for i, k in enumerate(self.keys)}

    @cached_property
    def midedges(self) -> np.ndarray:
        """Positions of all mid-edges (domain edges first, then stubs)."""
        v = self.vertices
        inner = 0.5 * (v[self.edges[:, 0]] + v[self.edges[:, 1]]) if len(self.edges) else np.zeros(0, complex)
        outer = np.array(
            [v[s] + 0.5 * self.mesh * direction(self.kind, d) for s, d in self.stubs], dtype=complex
        )
        return np.concatenate([inner, outer])

    @cached_property
    def face_centers(self) -> np.ndarray:
        v = self.vertices
        return np.array([v[list(f)].mean() for f in self.faces])

    # -- adjacency ----------------------------------------------------------
    @cached_property
    def slots(self) -> tuple[np.ndarray, np.ndarray]:
        """``(mid, nbr)`` arrays of shape (V, ndirs).

        ``mid[v, k]`` is the mid-edge leaving ``v`` in direction ``k`` (-1 if
        the lattice has no such direction at ``v``); ``nbr[v, k]`` the vertex
        at its far end, or -1 for a stub.
        """
        nv, nd = self.n_vertices, self.ndirs
        mid = np.full((nv, nd), -1, dtype=np.int64)
        nbr = np.full((nv, nd), -1, dtype=np.int64)
        for e, (p, q) in enumerate(self.edges):
            k = self._dir_between(p, q)
            mid[p, k], nbr[p, k] = e, q
            mid[q, (k + nd // 2) % nd], nbr[q, (k + nd // 2) % nd] = e, p
        for s, (v, k) in enumerate(self.stubs):
            mid[v, k] = self.n_edges + s
        return mid, nbr

    def _dir_between(self, p: int, q: int) -> int:
        a, b = self.keys[p]
        c, d = self.keys[q]
        return _steps(self.kind).index((c - a, d - b))

    @cached_property
    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        np.add.at(deg, self.edges.ravel(), 1)
        return deg

    def neighbors(self, v: int) -> list[int]:
        _, nbr = self.slots
        return [int(u) for u in nbr[v] if u >= 0]

    def star(self, v: int) -> VertexStar:
        mid, _ = self.slots
        ks = [k for k in range(self.ndirs) if mid[v, k] >= 0]
        return VertexStar(v, tuple(int(mid[v, k]) for k in ks), tuple(direction(self.kind, k) for k in ks))

    def midedge_vertices(self, m: int) -> tuple[int, int]:
        """Endpoints of mid-edge ``m``; a stub returns ``(v, -1)``."""
        if m < self.n_edges:
            p, q = self.edges[m]
            return int(p), int(q)
        return self.stubs[m - self.n_edges][0], -1

    def is_stub(self, m: int) -> bool:
        return m >= self.n_edges

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.array(sorted({t for t, _ in self.boundary}), dtype=np.int64)

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        on = np.zeros(self.n_vertices, bool)
        on[self.boundary_vertices] = True
        return np.flatnonzero(~on)

    @cached_property
    def boundary_midedges(self) -> np.ndarray:
        """Edge ids of the boundary cycle, in cycle order."""
        idx = {tuple(sorted(map(int, e))): i for i, e in enumerate(self.edges)}
        return np.array([idx[tuple(sorted(e))] for e in self.boundary], dtype=np.int64)

    def oriented_boundary(self) -> list[OrientedEdge]:
        v = self.vertices
        out = []
        for t, h in self.boundary:
            d = v[h] - v[t]
            out.append(OrientedEdge(t, h, d / abs(d)))
        return out

    def stub_outward(self, s: int) -> complex:
        """Outward unit direction of stub ``s`` (stub index, not mid-edge id)."""
        return direction(self.kind, self.stubs[s][1])

    def nearest_stub(self, point: complex) -> int:
        """Stub index nearest to ``point``; ties go to the smallest index."""
        pos = self.midedges[self.n_edges:]
        dist = np.round(np.abs(pos - point) / self.mesh, 9)
        return int(np.argmin(dist))

    # -- face structure -----------------------------------------------------
    @cached_property
    def face_adjacency(self) -> dict[int, set[int]]:
        """Faces sharing an edge (the dual graph restricted to inner faces)."""
        owner: dict[tuple[int, int], list[int]] = {}
        for f, cyc in enumerate(self.faces):
            for i in range(len(cyc)):
                e = tuple(sorted((cyc[i], cyc[(i + 1) % len(cyc)])))
                owner.setdefault(e, []).append(f)
        adj = {f: set() for f in range(len(self.faces))}
        for fs in owner.values():
            if len(fs) == 2:
                adj[fs[0]].add(fs[1])
                adj[fs[1]].add(fs[0])
        return adj

    def dual_graph(self) -> tuple[np.ndarray, list[tuple[int, int]]]:
        """Dual vertices (inner face centers plus the outer face at index F)
        and dual edges, one per primal edge."""
        owner: dict[tuple[int, int], list[int]] = {}
        for f, cyc in enumerate(self.faces):
            for i in range(len(cyc)):
                owner.setdefault(tuple(sorted((cyc[i], cyc[(i + 1) % len(cyc)]))), []).append(f)
        outer = len(self.faces)
        dual_edges = []
        for p, q in self.edges:
            fs = owner[tuple(sorted((int(p), int(q))))]
            dual_edges.append((fs[0], fs[1] if len(fs) == 2 else outer))
        return np.append(self.face_centers, np.nan), dual_edges

    def boundary_turning(self) -> float:
        """Total exterior turning angle along the boundary cycle."""
        dirs = [e.direction for e in self.oriented_boundary()]
        return sum(cmath.phase(dirs[(i + 1) % len(dirs)] / dirs[i]) for i in range(len(dirs)))

    # -- marks --------------------------------------------------------------
    def arcs(self) -> tuple[list[int], list[int]]:
        """Boundary-cycle positions of the arcs a->b and b->a."""
        if self.marks is None:
            raise DomainError("domain has no Dobrushin marks")
        a, b = self.marks
        n = len(self.boundary)
        ab = [(a + k) % n for k in range((b - a) % n)]
        ba = [(b + k) % n for k in range((a - b) % n)]
        return ab, ba

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "mesh": self.mesh,
            "vertices": self.n_vertices,
            "edges": self.n_edges,
            "faces": len(self.faces),
            "stubs": len(self.stubs),
        }


def _cell_corners(kind: str, cell: tuple[int, int]) -> list[tuple[int, int]]:
    i, j = cell
    if kind == SQUARE:
        return [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
    ca, cb = 2 * i + j, j - i
    return [(ca + da, cb + db) for da, db in _HEX_CORNERS]


def from_cells(kind: str, cells: Iterable[tuple[int, int]], mesh: float) -> LatticeDomain:
    """Domain made of the given lattice cells.

    Square cells ``(i, j)`` are the unit squares with lower-left corner
    ``(i, j)``; hexagonal cells ``(m, n)`` are the hexagons centred at
    ``sqrt(3) * (m + n*exp(i*pi/3))``.  The union must be edge-connected and
    free of pinch vertices so that the boundary is a single cycle.
    """
    if kind not in (SQUARE, HEXAGONAL):
        raise DomainError(f"unknown lattice kind {kind!r}")
    if not mesh > 0:
        raise DomainError("mesh must be positive")
    cells = sorted(set(map(tuple, cells)))
    if not cells:
        raise DomainError("empty domain")

    keys: list[tuple[int, int]] = []
    index: dict[tuple[int, int], int] = {}
    for c in cells:
        for k in _cell_corners(kind, c):
            if k not in index:
                index[k] = len(keys)
                keys.append(k)
    # stable ids: sort keys by (row, column)
    order = sorted(range(len(keys)), key=lambda i: (keys[i][1], keys[i][0]))
    keys = [keys[i] for i in order]
    index = {k: i for i, k in enumerate(keys)}

    faces = []
    directed = set()
    for c in cells:
        cyc = tuple(index[k] for k in _cell_corners(kind, c))
        faces.append(cyc)
        for i in range(len(cyc)):
            directed.add((cyc[i], cyc[(i + 1) % len(cyc)]))
    edges = sorted({tuple(sorted(e)) for e in directed})
    boundary_set = [e for e in directed if (e[1], e[0]) not in directed]

    nxt: dict[int, tuple[int, int]] = {}
    for t, h in boundary_set:
        if t in nxt:
            raise DomainError("domain has a pinch vertex; boundary is not a single cycle")
        nxt[t] = (t, h)
    start = min(nxt)
    cycle = [nxt[start]]
    while cycle[-1][1] != start:
        cycle.append(nxt[cycle[-1][1]])
    if len(cycle) != len(boundary_set):
        raise DomainError("domain is not simply connected or not connected")

    steps = _steps(kind)
    have = {(p, q) for p, q in edges} | {(q, p) for p, q in edges}
    stubs = []
    for v, (a, b) in enumerate(keys):
        for k, (da, db) in enumerate(steps):
            w = (a + da, b + db)
            if kind == HEXAGONAL and (a - b) % 3 != (1 if k % 2 == 0 else 2):
                continue
            if w in index and (v, index[w]) in have:
                continue
            stubs.append((v, k))

    dom = LatticeDomain(
        kind=kind,
        mesh=float(mesh),
        keys=tuple(keys),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        faces=tuple(faces),
        boundary=tuple(cycle),
        stubs=tuple(stubs),
        cells=tuple(cells),
    )
    if len(dom.keys) - len(edges) + len(faces) + 1 != 2:
        raise DomainError("Euler relation fails; domain is not a disk")
    return dom


def build_rectangle(cells_x: int, cells_y: int, mesh: float = 1.0) -> LatticeDomain:
    """Square-lattice domain covering ``[0, cx*eps] x [0, cy*eps]``."""
    if int(cells_x) != cells_x or int(cells_y) != cells_y or cells_x < 1 or cells_y < 1:
        raise DomainError("rectangle dimensions must be positive integers")
    return from_cells(SQUARE, [(i, j) for i in range(cells_x) for j in range(cells_y)], mesh)


def _disk_cells(radius: float, mesh: float) -> list[tuple[int, int]]:
    n = int(math.ceil(radius / mesh)) + 1
    r2 = (radius / mesh) ** 2 * (1 + 1e-12)
    out = []
    for i in range(-n, n):
        for j in range(-n, n):
            if all(a * a + b * b <= r2 for a, b in _cell_corners(SQUARE, (i, j))):
                out.append((i, j))
    return out


def build_disk(radius: float, mesh: float) -> LatticeDomain:
    """Staircase discretization of the disk ``|z| <= radius``.

    Keeps whole faces whose closures lie in the disk, restricted to the
    edge-connected component containing the face nearest the origin.
    """
    if not (radius > 0 and mesh > 0):
        raise DomainError("radius and mesh must be positive")
    cells = set(_disk_cells(radius, mesh))
    if not cells:
        raise DomainError(f"radius {radius} too small to contain a face of mesh {mesh}")
    seed = min(cells, key=lambda c: ((c[0] + 0.5) ** 2 + (c[1] + 0.5) ** 2, c))
    comp, todo = {seed}, [seed]
    while todo:
        i, j = todo.pop()
        for di, dj in _SQ_STEPS:
            c = (i + di, j + dj)
            if c in cells and c not in comp:
                comp.add(c)
                todo.append(c)
    return from_cells(SQUARE, comp, mesh)


def hex_cells(rings: int) -> list[tuple[int, int]]:
    """Axial coordinates of all hexagons within ``rings`` of the origin."""
    return [
        (m, n)
        for m in range(-rings, rings + 1)
        for n in range(-rings, rings + 1)
        if max(abs(m), abs(n), abs(m + n)) <= rings
    ]


def build_hex_patch(rings: int, mesh: float = 1.0) -> LatticeDomain:
    """Hexagonal patch of all hexagons within ``rings`` of a central one."""
    if int(rings) != rings or rings < 0:
        raise DomainError("rings must be a nonnegative integer")
    return from_cells(HEXAGONAL, hex_cells(int(rings)), mesh)


def mark_dobrushin(domain: LatticeDomain, a, b) -> LatticeDomain:
    """Return ``domain`` with marks at boundary-cycle positions ``a`` and ``b``.

    ``a``/``b`` may be integer positions or complex points; points snap to
    the nearest boundary mid-edge (ties to the smallest position).
    """
    ia, ib = _snap(domain, a), _snap(domain, b)
    if ia == ib:
        raise DomainError("Dobrushin marks must differ")
    return dataclasses.replace(domain, marks=(ia, ib))


def _snap(domain: LatticeDomain, loc) -> int:
    n = len(domain.boundary)
    if isinstance(loc, (int, np.integer)):
        if not 0 <= loc < n:
            raise DomainError(f"boundary position {loc} out of range 0..{n - 1}")
        return int(loc)
    v = domain.vertices
    mids = np.array([0.5 * (v[t] + v[h]) for t, h in domain.boundary])
    dist = np.abs(mids - complex(loc))
    if dist.min() > domain.mesh:
        raise DomainError(f"point {loc} is not on the boundary")
    return int(np.argmin(np.round(dist / domain.mesh, 9)))


def domain_from_spec(spec: dict) -> LatticeDomain:
    """Build a domain from the JSON domain spec used by the CLI."""
    kind = spec.get("kind")
    mesh = spec.get("mesh", 1.0)
    try:
        if kind == "square":
            dom = build_rectangle(int(spec["cellsX"]), int(spec["cellsY"]), float(mesh))
        elif kind == "hex":
            dom = build_hex_patch(int(spec.get("rings", 0)), float(mesh))
        elif kind == "disk":
            dom = build_disk(float(spec["radius"]), float(mesh))
        else:
            raise DomainError(f"unknown domain kind {kind!r}")
    except KeyError as exc:
        raise DomainError(f"domain spec missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"bad domain spec: {exc}") from None
    return dom


def cell_shapes(max_cells: int) -> Sequence[tuple[int, int]]:
    """Rectangle shapes ``(m, n)`` with ``m <= n`` and ``m*n <= max_cells``."""
    return [(m, n) for m in range(1, max_cells + 1) for n in range(m, max_cells + 1) if m * n <= max_cells]
