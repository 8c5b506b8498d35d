"""O(N) loop model on the hexagonal lattice.

Configurations are sets of disjoint simple loops, plus an interface from the
boundary stub ``a`` to the mid-edge ``z`` for the observable.  Each one weighs
``N^loops * x^length * exp(-i s winding)``, the length being the number of
visited vertices and the winding counted in turns of pi/3.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Iterator

import mpmath
import numpy as np

from . import dca
from .enumeration import (
    DefectGraph,
    configurations,
    count_loops,
    defect_graph,
    interface_census,
    loop_census,
    trace,
)
from .lattice import _HEX_STEPS, HEXAGONAL, DomainError, LatticeDomain, direction

DENSE = "dense"
DILUTE = "dilute"
MU = math.sqrt(2 + math.sqrt(2))
TAU = cmath.exp(2j * math.pi / 3)
DEFAULT_KMAX = 30
# working precision of the ``precise`` evaluation path
PRECISE_DPS = 40


@dataclass(frozen=True)
class CriticalParams:
    N: float
    regime: str
    theta: float
    s: float
    x: float

    @property
    def lam(self) -> complex:
        return cmath.exp(-1j * self.s * math.pi / 3)

    @property
    def tau(self) -> complex:
        return TAU

    def to_dict(self) -> dict:
        return {"N": self.N, "regime": self.regime, "theta": self.theta, "s": self.s, "x": self.x}


def critical_params(N: float, regime: str = DILUTE) -> CriticalParams:
    """Critical spin and weight; evaluated in extended precision and rounded once."""
    if not 0 <= N <= 2:
        raise ValueError(f"N must lie in [0, 2], got {N}")
    if regime not in (DENSE, DILUTE):
        raise ValueError(f"unknown regime {regime!r}")
    sign = -1 if regime == DENSE else 1
    with mpmath.workdps(PRECISE_DPS):
        theta = mpmath.acos(mpmath.mpf(N) / 2)
        s = (mpmath.pi + sign * 3 * theta) / (4 * mpmath.pi)
        x = 1 / (2 * mpmath.cos((mpmath.pi - sign * theta) / 4))
        # residue of the working precision (s = 0 for dense N = 1)
        s = 0 if abs(s) < mpmath.mpf(10) ** (5 - PRECISE_DPS) else s
        return CriticalParams(float(N), regime, float(theta), float(s), float(x))


@dataclass
class TripletReport:
    N: float
    regime: str
    loop: float
    step: float

    def to_dict(self) -> dict:
        return {"N": self.N, "regime": self.regime, "loop": self.loop, "step": self.step}


def verify_triplet_identities(p: CriticalParams, x: float | None = None) -> TripletReport:
    """Residuals of ``N + tau lam^-4 + conj(tau) lam^4`` and ``1 + tau x conj(lam) + conj(tau) x lam``."""
    lam, tau = p.lam, p.tau
    x = p.x if x is None else x
    loop = p.N + tau * lam.conjugate() ** 4 + tau.conjugate() * lam**4
    step = 1 + tau * x * lam.conjugate() + tau.conjugate() * x * lam
    return TripletReport(p.N, p.regime, abs(loop), abs(step))


@dataclass
class LoopConfig:
    graph: DefectGraph
    edges: np.ndarray
    defects: tuple[int, ...] = ()

    @property
    def loops(self) -> int:
        if self.defects:
            _, used = trace(self.graph, self.edges[None, :])
            rest = self.edges & ~used[0]
        else:
            rest = self.edges
        return int(count_loops(self.graph, rest[None, :])[0])

    @property
    def length(self) -> float:
        return float((self.edges * self.graph.half).sum()) / 2


def _require_hex(domain: LatticeDomain) -> None:
    if domain.kind != HEXAGONAL:
        raise DomainError("hexagonal domain required")


def enumerate_loop_configs(domain: LatticeDomain, a: int | None = None, z: int | None = None,
                           budget: int | None = None) -> Iterator[LoopConfig]:
    _require_hex(domain)
    g = defect_graph(domain, a, z)
    odd = (g.source, g.sink) if a is not None else ()
    for row in configurations(g, odd, budget):
        yield LoopConfig(g, row, odd)


def _loop_weight(N: float, loops: int) -> float:
    # N = 0 drops looped configurations outright
    if loops == 0:
        return 1.0
    return 0.0 if N == 0 else N**loops


def _mp_params(p: CriticalParams, x: float | None) -> tuple:
    """``N, s, x`` as mpmath numbers; critical values are recomputed at full precision."""
    N = mpmath.mpf(p.N)
    theta = mpmath.acos(N / 2)
    sign = -1 if p.regime == DENSE else 1
    crit = critical_params(p.N, p.regime) if p.regime in (DENSE, DILUTE) else None
    s = (mpmath.pi + sign * 3 * theta) / (4 * mpmath.pi) if crit and crit.s == p.s else mpmath.mpf(p.s)
    if x is not None:
        return N, s, mpmath.mpf(x)
    if crit and crit.x == p.x:
        return N, s, 1 / (2 * mpmath.cos((mpmath.pi - sign * theta) / 4))
    return N, s, mpmath.mpf(p.x)


def _mp_loop_weight(N, loops: int):
    if loops == 0:
        return mpmath.mpf(1)
    return mpmath.mpf(0) if N == 0 else N**loops


def partition_function(domain: LatticeDomain, N: float, x: float, budget: int | None = None) -> float:
    _require_hex(domain)
    census = loop_census(defect_graph(domain, None, None), budget)
    return float(sum(c * _loop_weight(N, n) * x ** (L / 2) for (L, n), c in census.items()))


def _mp_partition(domain: LatticeDomain, N, x, budget: int | None):
    census = loop_census(defect_graph(domain, None, None), budget)
    return mpmath.fsum(c * _mp_loop_weight(N, n) * x ** (mpmath.mpf(L) / 2) for (L, n), c in census.items())


def parafermionic_observable(domain: LatticeDomain, a: int, z: int, p: CriticalParams,
                             x: float | None = None, normalize: bool = True,
                             budget: int | None = None) -> complex:
    """Observable at mid-edge ``z`` for the boundary stub ``a``.

    The winding is measured from the direction in which the interface enters
    at ``a``; with ``normalize`` the sum is divided by the partition function so
    that the value at ``a`` is 1.
    """
    _require_hex(domain)
    x = p.x if x is None else x
    if z == domain.n_edges + a:
        return 1 + 0j
    census = interface_census(defect_graph(domain, a, z), loops=True, budget=budget)
    total = 0j
    for (L, T, n), c in census.items():
        total += c * _loop_weight(p.N, n) * x ** (L / 2) * cmath.exp(-1j * p.s * T * math.pi / 3)
    if normalize:
        total /= partition_function(domain, p.N, x, budget)
    return complex(total)


def _mp_observable(domain: LatticeDomain, a: int, z: int, N, s, x, budget: int | None):
    census = interface_census(defect_graph(domain, a, z), loops=True, budget=budget)
    return mpmath.fsum(c * _mp_loop_weight(N, n) * x ** (mpmath.mpf(L) / 2) * mpmath.expjpi(-s * T / 3)
                       for (L, T, n), c in census.items())


def parafermionic_field(domain: LatticeDomain, a: int, p: CriticalParams, x: float | None = None,
                        budget: int | None = None, precise: bool = False) -> dca.MidEdgeField:
    """Normalized observable at every mid-edge.

    With ``precise`` the census sums are evaluated with mpmath at
    ``PRECISE_DPS`` digits and the field holds ``mpc`` objects; the residual
    functions below then keep that precision.  For ``x > 1`` the field grows
    like ``x^length`` and double rounding alone exceeds tight absolute bounds.
    """
    _require_hex(domain)
    if precise:
        with mpmath.workdps(PRECISE_DPS):
            N, s, xm = _mp_params(p, x)
            Z = _mp_partition(domain, N, xm, budget)
            vals = np.empty(domain.n_midedges, dtype=object)
            for z in range(domain.n_midedges):
                if z != domain.n_edges + a:
                    vals[z] = _mp_observable(domain, a, z, N, s, xm, budget) / Z
            vals[domain.n_edges + a] = mpmath.mpc(1)
        return dca.MidEdgeField(domain, vals)
    x = p.x if x is None else x
    Z = partition_function(domain, p.N, x, budget)
    vals = np.zeros(domain.n_midedges, dtype=complex)
    for z in range(domain.n_midedges):
        vals[z] = parafermionic_observable(domain, a, z, p, x, normalize=False, budget=budget) / Z
    vals[domain.n_edges + a] = 1
    return dca.MidEdgeField(domain, vals)


def _is_precise(F: dca.MidEdgeField) -> bool:
    return F.values.dtype == object


def _offset(d: LatticeDomain, k: int, precise: bool):
    # vector from a vertex to the mid-edge in direction k
    if precise:
        return mpmath.mpf(d.mesh) / 2 * mpmath.expjpi(mpmath.mpf(1) / 6 + mpmath.mpf(k) / 3)
    return d.mesh / 2 * direction(d.kind, k)


def vertex_relation_residual(F: dca.MidEdgeField, v: int) -> complex:
    """``sum (p - v) F(p)`` over the three mid-edges around ``v``."""
    d = F.domain
    _require_hex(d)
    mid, _ = d.slots
    ks = [k for k in range(d.ndirs) if mid[v, k] >= 0]
    if len(ks) != 3:
        raise DomainError(f"vertex {v} is not trivalent")
    if _is_precise(F):
        with mpmath.workdps(PRECISE_DPS):
            return complex(mpmath.fsum(_offset(d, k, True) * F.values[mid[v, k]] for k in ks))
    return complex(sum(_offset(d, k, False) * F.values[mid[v, k]] for k in ks))


def vertex_relation_report(F: dca.MidEdgeField) -> dca.ResidualReport:
    vs = list(range(F.domain.n_vertices))
    return dca._report("vertex_relation", vs, [vertex_relation_residual(F, v) for v in vs])


def boundary_sum(F: dca.MidEdgeField) -> complex:
    """``sum F(z) eta(z)`` over the stubs, ``eta(z)`` the outward half-edge vector.

    Interior mid-edges enter the vertex relations of both endpoints with
    opposite offsets, so this equals the sum of all vertex relation residuals.
    """
    d = F.domain
    if _is_precise(F):
        with mpmath.workdps(PRECISE_DPS):
            return complex(mpmath.fsum(_offset(d, k, True) * F.values[d.n_edges + s]
                                       for s, (_, k) in enumerate(d.stubs)))
    return complex(sum(_offset(d, k, False) * F.values[d.n_edges + s] for s, (_, k) in enumerate(d.stubs)))


def winding_invariance(domain: LatticeDomain, a: int, z: int, s: float, budget: int | None = None) -> float:
    """Largest change of ``exp(-i s winding)`` between the two tracing rules."""
    g = defect_graph(domain, a, z)
    cfg = configurations(g, (g.source, g.sink), budget)
    t1, _ = trace(g, cfg, True)
    t2, _ = trace(g, cfg, False)
    w1 = np.exp(-1j * s * t1 * math.pi / 3)
    w2 = np.exp(-1j * s * t2 * math.pi / 3)
    return float(np.abs(w1 - w2).max())


def triangular_ising_oracle(domain: LatticeDomain, x: float) -> float:
    """Low-temperature Ising sum with spins on the hexagons and + outside.

    Every edge between unequal spins contributes ``x``.  Exhaustive over the
    ``2^faces`` spin states; used as an independent check of the ``N = 1``
    partition function.
    """
    _require_hex(domain)
    nf = len(domain.faces)
    owner: dict[tuple[int, int], list[int]] = {}
    for f, cyc in enumerate(domain.faces):
        for i in range(len(cyc)):
            owner.setdefault(tuple(sorted((cyc[i], cyc[(i + 1) % len(cyc)]))), []).append(f)
    pairs = [(fs[0], fs[1] if len(fs) == 2 else -1) for fs in owner.values()]
    idx = np.arange(1 << nf, dtype=np.int64)
    spins = np.concatenate([1 - 2 * ((idx[:, None] >> np.arange(nf)) & 1), np.ones((len(idx), 1), np.int64)], axis=1)
    i = np.array([p[0] for p in pairs])
    j = np.array([p[1] for p in pairs])
    unequal = (spins[:, i] != spins[:, j]).sum(axis=1)
    return float((x**unequal).sum())


# -- self-avoiding walks ------------------------------------------------------

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _saw_dfs(kmax, counts):
    # brick-wall embedding: (i, j) links to (i +- 1, j) and to (i, j + 1) when
    # i + j is even, to (i, j - 1) otherwise
    size = 2 * kmax + 5
    occ = np.zeros((size, size), dtype=np.uint8)
    c = kmax + 2
    si = np.zeros(kmax + 2, dtype=np.int64)
    sj = np.zeros(kmax + 2, dtype=np.int64)
    choice = np.zeros(kmax + 2, dtype=np.int64)
    # first step fixed to (+1, 0); the three first steps are equivalent
    occ[c, c] = 1
    si[0], sj[0] = c, c
    si[1], sj[1] = c + 1, c
    occ[c + 1, c] = 1
    counts[1] += 1
    depth = 1
    choice[1] = 0
    while depth >= 1:
        if depth == kmax or choice[depth] == 3:
            occ[si[depth], sj[depth]] = 0
            depth -= 1
            if depth >= 1:
                choice[depth] += 1
            continue
        i, j = si[depth], sj[depth]
        k = choice[depth]
        if k == 0:
            ni, nj = i + 1, j
        elif k == 1:
            ni, nj = i - 1, j
        else:
            ni, nj = i, (j + 1 if (i + j) % 2 == 0 else j - 1)
        if occ[ni, nj]:
            choice[depth] += 1
            continue
        depth += 1
        si[depth], sj[depth] = ni, nj
        occ[ni, nj] = 1
        choice[depth] = 0
        counts[depth] += 1
    return counts


if numba is not None:
    _saw_dfs = numba.njit(cache=True)(_saw_dfs)


@dataclass
class SawCensus:
    counts: dict[int, int]

    @property
    def kmax(self) -> int:
        return max(self.counts)

    def rows(self) -> list[tuple[int, int, float, float]]:
        out = []
        for k in sorted(self.counts):
            c = self.counts[k]
            prev = self.counts.get(k - 1, 1)
            out.append((k, c, c ** (1 / k), c / prev))
        return out


def saw_count(kmax: int, limit: int = DEFAULT_KMAX) -> SawCensus:
    """Exact numbers of self-avoiding walks of length ``1..kmax`` from a
    vertex of the hexagonal lattice (depth-first backtracking)."""
    if kmax < 1:
        raise ValueError("kmax must be positive")
    if kmax > limit:
        raise ValueError(f"kmax {kmax} exceeds the configured limit {limit}")
    counts = np.zeros(kmax + 2, dtype=np.int64)
    _saw_dfs(kmax, counts)
    return SawCensus({k: 3 * int(counts[k]) for k in range(1, kmax + 1)})


def saw_count_naive(kmax: int) -> dict[int, int]:
    """Breadth-first enumeration storing every walk as a tuple of lattice keys."""
    walks = [((0, 1),)]  # keys with A - B = 2 mod 3 use the odd directions
    counts = {}
    for k in range(1, kmax + 1):
        nxt = []
        for w in walks:
            a, b = w[-1]
            odd = (a - b) % 3 == 2
            for da, db in _HEX_STEPS[1::2] if odd else _HEX_STEPS[0::2]:
                key = (a + da, b + db)
                if key not in w:
                    nxt.append(w + (key,))
        walks = nxt
        counts[k] = len(walks)
    return counts


@dataclass
class ConnectiveReport:
    kmax: int
    roots: list[float]
    ratios: list[float]
    gap: float
    decreasing_from: int
    decreasing: bool

    def to_dict(self) -> dict:
        return {
            "kmax": self.kmax,
            "mu": MU,
            "roots": self.roots,
            "ratios": self.ratios,
            "relativeGap": self.gap,
            "decreasingFrom": self.decreasing_from,
            "decreasing": self.decreasing,
        }


def connective_estimate(census: SawCensus, start: int = 10) -> ConnectiveReport:
    rows = census.rows()
    roots = [r[2] for r in rows]
    ratios = [r[3] for r in rows]
    ks = [r[0] for r in rows]
    tail = [r for k, r in zip(ks, roots) if k >= start]
    dec = all(b < a for a, b in zip(tail, tail[1:]))
    return ConnectiveReport(census.kmax, roots, ratios, abs(roots[-1] - MU) / MU, start, dec)
