"""Discrete complex analysis on lattice domains.

Functions live on vertices (``VertexFunction``), on oriented edges
(``EdgeFunction``) or on mid-edges (``MidEdgeField``).  The predicates below
return residuals rather than booleans so that the same code serves exactness
checks and convergence studies.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import SQUARE, DomainError, LatticeDomain, direction

DIRECT_LIMIT = 5000


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


@dataclass
class VertexFunction:
    domain: LatticeDomain
    values: np.ndarray

    @classmethod
    def from_callable(cls, domain: LatticeDomain, f) -> "VertexFunction":
        return cls(domain, np.array([f(z) for z in domain.vertices]))

    def __getitem__(self, v: int):
        return self.values[v]


@dataclass
class EdgeFunction:
    """Antisymmetric function on oriented edges.

    One value per edge, stored for the orientation ``edges[e] = (p, q)``.
    """

    domain: LatticeDomain
    values: np.ndarray

    def __call__(self, u: int, v: int):
        e, sign = _edge_lookup(self.domain)[(u, v)]
        return sign * self.values[e]


@dataclass
class MidEdgeField:
    domain: LatticeDomain
    values: np.ndarray

    @classmethod
    def from_callable(cls, domain: LatticeDomain, f) -> "MidEdgeField":
        return cls(domain, np.array([f(z) for z in domain.midedges], dtype=complex))

    def __getitem__(self, m: int):
        return self.values[m]


@dataclass
class HeightField:
    """Height function on primal vertices and dual vertices.

    Dual vertices are the inner face centres plus the exterior lattice faces
    touching the boundary (``inner`` is False for those).
    """

    domain: LatticeDomain
    primal: np.ndarray
    dual_points: np.ndarray
    dual: np.ndarray
    inner: np.ndarray
    base: complex
    link_residuals: np.ndarray
    dual_residuals: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(self.link_residuals.max(initial=0.0))

    @property
    def boundary_values(self) -> np.ndarray:
        return self.dual[~self.inner]

    @property
    def interior_values(self) -> np.ndarray:
        return np.concatenate([self.primal, self.dual[self.inner]])


@dataclass
class ResidualReport:
    op: str
    max_residual: float
    argmax: object
    residuals: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        loc = self.argmax
        if isinstance(loc, (np.integer, int)):
            loc = int(loc)
        elif isinstance(loc, tuple):
            loc = [int(x) for x in loc]
        return {"op": self.op, "maxResidual": float(self.max_residual), "argmaxLocation": loc}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _report(op: str, locations: Sequence, residuals) -> ResidualReport:
    r = np.abs(np.asarray(residuals))
    if r.size == 0:
        return ResidualReport(op, 0.0, None, r)
    k = int(np.argmax(r))
    return ResidualReport(op, float(r[k]), locations[k], r)


def write_field_csv(values: Iterable, stream=None) -> str:
    """Write ``id,re,im`` rows; returns the text when no stream is given."""
    out = stream if stream is not None else io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id", "re", "im"])
    for i, z in enumerate(values):
        z = complex(z)
        w.writerow([i, repr(z.real), repr(z.imag)])
    return out.getvalue() if stream is None else ""


# -- vertex and edge functions ---------------------------------------------

def _edge_lookup(domain: LatticeDomain) -> dict:
    cache = domain.__dict__.get("_edge_lookup")
    if cache is None:
        cache = {}
        for e, (p, q) in enumerate(domain.edges):
            cache[(int(p), int(q))] = (e, 1)
            cache[(int(q), int(p))] = (e, -1)
        domain.__dict__["_edge_lookup"] = cache
    return cache


def _require_interior(domain: LatticeDomain, u: int) -> None:
    if domain.degree[u] != domain.ndirs:
        raise DomainError(f"vertex {u} has no full neighbourhood")


def laplacian(H: VertexFunction, u: int):
    """Sum of ``H(v) - H(u)`` over the neighbours of an interior vertex."""
    d = H.domain
    _require_interior(d, u)
    return sum(H.values[v] - H.values[u] for v in d.neighbors(u))


def laplacian_all(H: VertexFunction) -> tuple[np.ndarray, np.ndarray]:
    """Laplacian at every interior vertex: ``(vertex ids, values)``."""
    d = H.domain
    _, nbr = d.slots
    inner = np.flatnonzero(d.degree == d.ndirs)
    vals = H.values[nbr[inner]].sum(axis=1) - d.ndirs * H.values[inner]
    return inner, vals


def gradient(H: VertexFunction) -> EdgeFunction:
    p, q = H.domain.edges[:, 0], H.domain.edges[:, 1]
    return EdgeFunction(H.domain, H.values[q] - H.values[p])


def kirchhoff_vertex(F: EdgeFunction, v: int):
    """Net current flowing out of an interior vertex, ``sum_u F(v->u)``.

    With this sign ``kirchhoff_vertex(gradient(H), v) == laplacian(H, v)``.
    """
    d = F.domain
    _require_interior(d, v)
    return sum(F(v, u) for u in d.neighbors(v))


def kirchhoff_cycle(F: EdgeFunction, path: Sequence[int]):
    """Circulation of ``F`` along a closed vertex path (first == last)."""
    if len(path) < 2 or path[0] != path[-1]:
        raise DomainError("contour is not closed")
    return sum(F(path[k], path[k + 1]) for k in range(len(path) - 1))


def face_cycle(domain: LatticeDomain, f: int) -> list[int]:
    cyc = list(domain.faces[f])
    return cyc + cyc[:1]


def potential(F: EdgeFunction, root: int = 0) -> VertexFunction:
    """Integrate a curl-free edge function back to a vertex potential."""
    d = F.domain
    links = [(int(p), int(q), complex(w)) for (p, q), w in zip(d.edges, F.values)]
    H, _ = _integrate(d.n_vertices, links)
    H = H - H[root]
    return VertexFunction(d, H if np.iscomplexobj(F.values) else H.real)


# -- preholomorphicity ------------------------------------------------------

def _shift(domain: LatticeDomain, z: int, dx: int, dy: int) -> int:
    if domain.kind != SQUARE:
        raise DomainError("square lattice only")
    a, b = domain.keys[z]
    try:
        return domain.key_index[(a + dx, b + dy)]
    except KeyError:
        raise DomainError(f"vertex {z} lacks neighbour ({dx}, {dy})") from None


def cr_first_residual(F: VertexFunction, z: int):
    """First-kind residual ``[F(z+i eps) - F(z)] - i [F(z+eps) - F(z)]``."""
    d, f = F.domain, F.values
    up, right = _shift(d, z, 0, 1), _shift(d, z, 1, 0)
    return (f[up] - f[z]) - 1j * (f[right] - f[z])


def cr_residual(F: VertexFunction, z: int):
    """Second-kind residual on the face with lower-left corner ``z``."""
    d, f = F.domain, F.values
    right, up, diag = _shift(d, z, 1, 0), _shift(d, z, 0, 1), _shift(d, z, 1, 1)
    return (f[up] - f[right]) - 1j * (f[diag] - f[z])


def face_corners(domain: LatticeDomain) -> list[int]:
    """Lower-left corners of the inner faces of a square domain."""
    out = []
    for cyc in domain.faces:
        out.append(min(cyc, key=lambda v: domain.keys[v]))
    return out


def cr_report(F: VertexFunction) -> ResidualReport:
    zs = face_corners(F.domain)
    return _report("cr_residual", zs, [cr_residual(F, z) for z in zs])


def sublattice_laplacian(F: VertexFunction, z: int):
    """Laplacian over the four diagonal neighbours (same chessboard colour)."""
    d, f = F.domain, F.values
    nb = [_shift(d, z, dx, dy) for dx, dy in ((1, 1), (-1, 1), (-1, -1), (1, -1))]
    return sum(f[w] for w in nb) - 4 * f[z]


def chessboard_color(domain: LatticeDomain, z: int) -> int:
    a, b = domain.keys[z]
    return (a + b) % 2


def strong_residual(F: MidEdgeField, v: int, p: int, q: int):
    """Difference of the projections of ``F(p)`` and ``F(q)`` on ``1/sqrt(alpha)``.

    ``p`` and ``q`` must be consecutive mid-edges around ``v``; ``alpha`` is the
    unit bisector of the corner between them.
    """
    star = F.domain.star(v)
    ms = star.midedges
    n = len(ms)
    for k in range(n):
        if {ms[k], ms[(k + 1) % n]} == {p, q} and n > 1:
            alpha = star.bisectors()[k]
            break
    else:
        raise DomainError(f"mid-edges {p}, {q} are not adjacent at vertex {v}")
    ab = alpha.conjugate()
    fp, fq = F.values[p], F.values[q]
    return (fq + ab * np.conj(fq)) - (fp + ab * np.conj(fp))


def corners(domain: LatticeDomain, interior_only: bool = False) -> list[tuple[int, int, int, complex]]:
    """All corners ``(v, p, q, alpha)`` with ``p, q`` consecutive ccw at ``v``."""
    out = []
    inner = set(domain.interior_vertices.tolist()) if interior_only else None
    for v in range(domain.n_vertices):
        if inner is not None and v not in inner:
            continue
        star = domain.star(v)
        n = len(star.midedges)
        for k, alpha in enumerate(star.bisectors()):
            out.append((v, star.midedges[k], star.midedges[(k + 1) % n], alpha))
    return out


def corner_residuals(F: MidEdgeField, interior_only: bool = False) -> ResidualReport:
    cs = corners(F.domain, interior_only)
    if not cs:
        return _report("strong_residual", [], [])
    v, p, q, alpha = (np.array(c) for c in zip(*cs))
    ab = np.conj(alpha)
    fp, fq = F.values[p], F.values[q]
    res = (fq + ab * np.conj(fq)) - (fp + ab * np.conj(fp))
    return _report("strong_residual", list(zip(v.tolist(), p.tolist(), q.tolist())), res)


def max_strong_residual(F: MidEdgeField, interior_only: bool = False) -> float:
    return corner_residuals(F, interior_only).max_residual


def contour_integral(F, path: Sequence[int]) -> complex:
    """Midpoint-rule integral ``sum F(mid) * dz`` along a primal vertex path.

    ``F`` may be a ``MidEdgeField`` (value at the edge midpoint) or a
    ``VertexFunction`` (average of the two endpoint values).
    """
    d = F.domain
    look = _edge_lookup(d)
    z = d.vertices
    total = 0j
    for k in range(len(path) - 1):
        u, v = path[k], path[k + 1]
        if (u, v) not in look:
            raise DomainError(f"path is disconnected between {u} and {v}")
        if isinstance(F, MidEdgeField):
            mid = F.values[look[(u, v)][0]]
        else:
            mid = 0.5 * (F.values[u] + F.values[v])
        total += mid * (z[v] - z[u])
    return complex(total)


# -- primitive and derivative on the dual lattice ----------------------------

def _face_index(domain: LatticeDomain) -> dict[tuple[int, int], int]:
    """Square faces keyed by the lattice key of their lower-left corner."""
    return {domain.keys[z]: f for f, z in enumerate(face_corners(domain))}


def derivative(F: VertexFunction) -> tuple[np.ndarray, np.ndarray]:
    """Difference quotients of ``F`` on faces, along both diagonals.

    Returns ``(values, residual)``; for preholomorphic ``F`` the two diagonal
    quotients agree and the residual vanishes.
    """
    d, f = F.domain, F.values
    eps = d.mesh
    out = np.zeros(len(d.faces), dtype=complex)
    res = np.zeros(len(d.faces))
    for k, z in enumerate(face_corners(d)):
        right, up, diag = _shift(d, z, 1, 0), _shift(d, z, 0, 1), _shift(d, z, 1, 1)
        q1 = (f[diag] - f[z]) / (eps * (1 + 1j))
        q2 = (f[up] - f[right]) / (eps * (-1 + 1j))
        out[k] = 0.5 * (q1 + q2)
        res[k] = abs(q1 - q2)
    return out, res


def primitive(F: VertexFunction) -> tuple[VertexFunction, float]:
    """Primitive of ``F`` on the dual lattice (inner face centres).

    Faces diagonal to each other through a primal vertex ``v`` differ by
    ``F(v) * (c' - c)``.  The two chessboard classes of faces are glued by a
    trapezoid step across one shared edge.  Returns the primitive as a
    function on the dual domain together with the closure residual, which
    vanishes when ``F`` is preholomorphic.
    """
    d = F.domain
    fidx = _face_index(d)
    centres = np.array([complex(a + 0.5, b + 0.5) * d.mesh for a, b in fidx])
    keys = list(fidx)
    links: list[tuple[int, int, complex]] = []
    for v, (a, b) in enumerate(d.keys):
        around = {}
        for dx, dy in ((0, 0), (-1, 0), (-1, -1), (0, -1)):
            f = fidx.get((a + dx, b + dy))
            if f is not None:
                around[(dx, dy)] = f
        for s, t in (((0, 0), (-1, -1)), ((-1, 0), (0, -1))):
            if s in around and t in around:
                f1, f2 = around[s], around[t]
                links.append((f1, f2, F.values[v] * (d.mesh * _centre_offset(t) - d.mesh * _centre_offset(s))))
    # glue the two classes across one shared edge
    glue = None
    for f, (a, b) in enumerate(keys):
        g = fidx.get((a + 1, b))
        if g is not None:
            p, q = d.key_index[(a + 1, b)], d.key_index[(a + 1, b + 1)]
            glue = (f, g, 0.5 * (F.values[p] + F.values[q]) * d.mesh)
            break
    nf = len(keys)
    G, residual = _integrate(nf, links + ([glue] if glue else []))
    face_domain = _dual_square_domain(d, keys)
    order = [face_domain.key_index[k] for k in keys]
    vals = np.zeros(nf, dtype=complex)
    vals[order] = G
    return VertexFunction(face_domain, vals), residual


def _centre_offset(key: tuple[int, int]) -> complex:
    return complex(key[0] + 0.5, key[1] + 0.5)


def _integrate(n: int, links: list[tuple[int, int, complex]]) -> tuple[np.ndarray, float]:
    """Integrate increments ``G[j] - G[i] = w`` along a BFS forest.

    Returns the values and the largest mismatch over all links.
    """
    adj: list[list[tuple[int, complex]]] = [[] for _ in range(n)]
    for i, j, w in links:
        adj[i].append((j, w))
        adj[j].append((i, -w))
    G = np.zeros(n, dtype=complex)
    seen = np.zeros(n, bool)
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, w in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    G[v] = G[u] + w
                    queue.append(v)
    if not links:
        return G, 0.0
    i, j, w = (np.array(c) for c in zip(*links))
    return G, float(np.abs(G[j] - G[i] - w).max())


def _dual_square_domain(domain: LatticeDomain, keys: list[tuple[int, int]]) -> LatticeDomain:
    """Edge-only square domain whose vertices are the face centres of ``domain``."""
    keys = tuple(sorted(keys, key=lambda k: (k[1], k[0])))
    kidx = {k: i for i, k in enumerate(keys)}
    edges = [
        (kidx[k], kidx[(k[0] + dx, k[1] + dy)])
        for k in keys
        for dx, dy in ((1, 0), (0, 1))
        if (k[0] + dx, k[1] + dy) in kidx
    ]
    dual = LatticeDomain(SQUARE, domain.mesh, keys, np.array(edges, dtype=np.int64).reshape(-1, 2), (), (), ())
    dual.__dict__["vertices"] = (np.array([complex(a, b) for a, b in keys]) + (0.5 + 0.5j)) * domain.mesh
    return dual


def preholomorphic_from_edges(domain: LatticeDomain, bottom: Sequence[complex], left: Sequence[complex]) -> VertexFunction:
    """Preholomorphic function on a rectangle from its bottom row and left column.

    ``bottom[i]`` is the value at key ``(i, 0)`` and ``left[j]`` at ``(0, j)``
    (``left[0]`` is ignored).  The second-kind identity determines the rest.
    """
    xs = {a for a, _ in domain.keys}
    ys = {b for _, b in domain.keys}
    nx, ny = max(xs) + 1, max(ys) + 1
    grid = np.zeros((nx, ny), dtype=complex)
    grid[:, 0] = bottom[:nx]
    grid[0, 1:] = left[1:ny]
    for j in range(ny - 1):
        for i in range(nx - 1):
            grid[i + 1, j + 1] = grid[i, j] - 1j * (grid[i, j + 1] - grid[i + 1, j])
    return VertexFunction(domain, np.array([grid[a, b] for a, b in domain.keys]))


# -- Dirichlet problem --------------------------------------------------------

def _laplace_system(domain: LatticeDomain):
    inner = domain.interior_vertices
    pos = -np.ones(domain.n_vertices, dtype=np.int64)
    pos[inner] = np.arange(len(inner))
    _, nbr = domain.slots
    rows, cols = [], []
    for k in range(domain.ndirs):
        w = nbr[inner, k]
        ok = pos[w] >= 0
        rows.append(np.flatnonzero(ok))
        cols.append(pos[w[ok]])
    n = len(inner)
    offd = sp.coo_matrix(
        (np.ones(sum(len(r) for r in rows)), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    A = (domain.ndirs * sp.eye(n) - offd).tocsr()
    return inner, pos, A


def solve_dirichlet(domain: LatticeDomain, g, tol: float = 1e-10) -> VertexFunction:
    """Preharmonic extension of boundary data ``g``.

    ``g`` is a callable on positions or an array over all vertices (only the
    boundary entries are read).  Small systems are solved directly, larger ones
    by conjugate gradients; the result is checked against ``tol``.
    """
    z = domain.vertices
    bd = domain.boundary_vertices
    if callable(g):
        gb = np.array([g(z[v]) for v in bd])
    else:
        gb = np.asarray(g)[bd]
    dtype = np.result_type(gb, float)
    H = np.zeros(domain.n_vertices, dtype=dtype)
    H[bd] = gb
    inner, pos, A = _laplace_system(domain)
    if len(inner) == 0:
        return VertexFunction(domain, H)
    _, nbr = domain.slots
    rhs = np.zeros(len(inner), dtype=dtype)
    for k in range(domain.ndirs):
        w = nbr[inner, k]
        ext = pos[w] < 0
        rhs[ext] += H[w[ext]]
    if len(inner) < DIRECT_LIMIT:
        x = spla.spsolve(A.tocsc(), rhs)
    else:
        x = np.zeros(len(inner), dtype=dtype)
        parts = [rhs.real, rhs.imag] if np.iscomplexobj(rhs) else [rhs]
        sols = []
        for b in parts:
            s, info = spla.cg(A, b, rtol=1e-14, atol=0.0, maxiter=20 * len(inner))
            sols.append(s)
        x = sols[0] + 1j * sols[1] if len(sols) == 2 else sols[0]
    H[inner] = x
    out = VertexFunction(domain, H)
    _, lap = laplacian_all(out)
    worst = float(np.abs(lap).max(initial=0.0))
    if worst > tol:
        raise SolverError("Dirichlet solve did not reach tolerance", worst)
    return out


# -- height function ------------------------------------------------------------

def _corner_radius(domain: LatticeDomain) -> float:
    return domain.mesh / math.sqrt(2) if domain.kind == SQUARE else domain.mesh


def build_height(F: MidEdgeField, base=None, phase: complex = 1.0, modulus: bool = False) -> HeightField:
    """Discrete ``(1/2eps) Im int (phase F)^2 dz`` on primal and dual vertices.

    Every corner ``(v, f)`` links the primal vertex ``v`` to the dual vertex
    ``f`` through each of its two mid-edges ``z``, with increment
    ``H(f) - H(v) = Im((phase F(z))^2 (f - v)) / (2 eps)``.  The two links of a
    corner disagree in general; their discrepancy is the path-dependence
    residual.  With ``modulus=True`` the increment also carries
    ``-|f - v| |F(z)|^2 / (2 eps)``; for a strongly preholomorphic ``F`` taken
    with ``phase = exp(-i pi/4)`` this makes the two links coincide, so the
    height is exactly single-valued.

    ``base`` is a primal vertex id or a point (snapped to the nearest primal or
    dual vertex); the default is the first exterior dual vertex.
    """
    d = F.domain
    eps = d.mesh
    r = _corner_radius(d)
    z = d.vertices
    keys: dict[tuple[float, float], int] = {}
    points: list[complex] = []
    inner_pts = {(round(c.real / eps, 6), round(c.imag / eps, 6)) for c in d.face_centers}
    link_v, link_f, link_m, link_dz = [], [], [], []
    for v in range(d.n_vertices):
        star = d.star(v)
        n = len(star.midedges)
        for k, alpha in enumerate(star.bisectors()):
            pos = z[v] + r * alpha
            key = (round(pos.real / eps, 6), round(pos.imag / eps, 6))
            f = keys.get(key)
            if f is None:
                f = keys[key] = len(points)
                points.append(pos)
            for m in (star.midedges[k], star.midedges[(k + 1) % n]):
                link_v.append(v)
                link_f.append(f)
                link_m.append(m)
                link_dz.append(r * alpha)
    nd = len(points)
    lv, lf = np.array(link_v), np.array(link_f)
    dz = np.array(link_dz)
    G = phase * F.values[np.array(link_m)]
    inc = (G * G * dz).imag / (2 * eps)
    if modulus:
        inc -= np.abs(dz) * np.abs(F.values[np.array(link_m)]) ** 2 / (2 * eps)
    inner = np.array([k in inner_pts for k in keys], dtype=bool)
    # nodes: primal 0..V-1, dual V..V+D-1
    nv = d.n_vertices
    links = list(zip(lv.tolist(), (lf + nv).tolist(), inc.tolist()))
    H, _ = _integrate(nv + nd, [(a, b, complex(w)) for a, b, w in links])
    H = H.real
    pts = np.concatenate([z, np.array(points)])
    if base is None:
        b = nv + int(np.flatnonzero(~inner)[0])
    elif isinstance(base, (int, np.integer)):
        b = int(base)
    else:
        b = int(np.argmin(np.round(np.abs(pts - complex(base)) / eps, 9)))
    H = H - H[b]
    res = np.abs(H[lf + nv] - H[lv] - inc)
    dual_res = np.zeros(nd)
    np.maximum.at(dual_res, lf, res)
    return HeightField(d, H[:nv], np.array(points), H[nv:], inner, complex(pts[b]), res, dual_res)
