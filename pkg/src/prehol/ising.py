"""Square-lattice Ising model in the low-temperature contour representation.

Contours are even subgraphs of the domain graph; the spins sit on its faces
(and on the exterior, fixed to +).  The fermionic observable sums over
configurations whose only odd vertices are the boundary stub ``a`` and the
mid-edge ``z``; the interface from ``a`` to ``z`` is traced with the left-turn
rule and contributes ``x^length * exp(-i s (theta0 + winding))`` where
``theta0`` is the direction in which it enters the domain.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import dca
from .enumeration import (
    BudgetError,
    DefectGraph,
    _candidate_table,
    _signed_turn,
    budget_log2,
    configurations,
    cycle_space,
    defect_graph,
    interface_census,
)
from .lattice import SQUARE, DomainError, LatticeDomain, direction

X_C = math.sqrt(2) - 1
BETA_C = math.log(math.sqrt(2) + 1) / 2
SPIN = 0.5


@dataclass(frozen=True)
class IsingParams:
    """Edge weight ``x = exp(-2 beta)``."""

    x: float

    def __post_init__(self):
        if not 0 < self.x < 1:
            raise ValueError(f"x must lie in (0, 1), got {self.x}")

    @classmethod
    def from_beta(cls, beta: float) -> "IsingParams":
        return cls(math.exp(-2 * beta))

    @classmethod
    def critical(cls) -> "IsingParams":
        return cls(X_C)

    @property
    def beta(self) -> float:
        return -math.log(self.x) / 2

    @property
    def is_critical(self) -> bool:
        return abs(self.x - X_C) < 1e-12

    @property
    def dual_x(self) -> float:
        """Weight at the dual temperature, ``tanh(beta*) = exp(-2 beta)`` read
        as ``x* = (1 - x) / (1 + x)``."""
        return (1 - self.x) / (1 + self.x)


@dataclass(frozen=True)
class FermionicWeightSpec:
    spin: float = SPIN
    start_direction: complex | None = None

    @property
    def lam(self) -> complex:
        return cmath.exp(-1j * self.spin * math.pi / 2)

    def weight(self, winding: float, start: complex | None = None) -> complex:
        """``exp(-i s (arg(start) + winding))``; ``start`` defaults to +1."""
        s0 = start if start is not None else (self.start_direction or 1)
        return cmath.exp(-1j * self.spin * (cmath.phase(s0) + winding))


@dataclass
class ContourConfig:
    graph: DefectGraph
    edges: np.ndarray
    defects: tuple[int, ...] = ()

    def __post_init__(self):
        deg = np.zeros(self.graph.n_nodes, dtype=np.int64)
        for e in np.flatnonzero(self.edges):
            u, v = self.graph.ends[e]
            deg[u] += 1
            deg[v] += 1
        odd = set(np.flatnonzero(deg % 2).tolist())
        if odd != set(self.defects):
            raise ValueError(f"parity violated: odd vertices {sorted(odd)}, defects {sorted(self.defects)}")

    @property
    def length(self) -> float:
        return float((self.edges * self.graph.half).sum()) / 2


@dataclass
class InterfaceTrace:
    path: list[int]
    edges: list[int]
    turns: int
    winding: float
    weight: complex = field(default=1 + 0j)


def start_direction(domain: LatticeDomain, a: int) -> complex:
    """Inward unit direction of the stub ``a``."""
    return -domain.stub_outward(a)


def enumerate_configs(domain: LatticeDomain, a: int | None = None, z: int | None = None,
                      budget: int | None = None) -> Iterator[ContourConfig]:
    """Every configuration with odd vertices exactly at the defects (or none)."""
    g = defect_graph(domain, a, z)
    odd = (g.source, g.sink) if a is not None else ()
    for row in configurations(g, odd, budget):
        yield ContourConfig(g, row, odd)


def trace_interface(config: ContourConfig, prefer_left: bool = True,
                    weights: FermionicWeightSpec | None = None,
                    start: complex | None = None) -> InterfaceTrace:
    """Follow the interface from the source defect to the sink defect.

    At a vertex with several unused configuration edges the leftmost turn is
    taken (rightmost when ``prefer_left`` is False).
    """
    g = config.graph
    if len(config.defects) != 2:
        raise ValueError("configuration has no defect pair")
    nd = g.ndirs
    ce, cn, cd = _candidate_table(g, prefer_left)
    e0 = int(np.flatnonzero((g.ends[:, 0] == g.source) | (g.ends[:, 1] == g.source))[0])
    if not config.edges[e0]:
        raise ValueError("source defect is not covered")
    fwd = g.ends[e0, 0] == g.source
    cur = int(g.ends[e0, 1] if fwd else g.ends[e0, 0])
    kin = int(g.dirs[e0] if fwd else (g.dirs[e0] + nd // 2) % nd)
    used = {e0}
    path, edges, turns = [g.source, cur], [e0], 0
    while cur != g.sink:
        for p in range(ce.shape[2]):
            e = ce[cur, kin, p]
            if e >= 0 and config.edges[e] and e not in used:
                break
        else:
            raise ValueError("interface trace got stuck")
        kout = int(cd[cur, kin, p])
        turns += int(_signed_turn(np.array(kout - kin), nd))
        used.add(int(e))
        edges.append(int(e))
        cur, kin = int(cn[cur, kin, p]), kout
        path.append(cur)
    winding = turns * 2 * math.pi / nd
    w = (weights or FermionicWeightSpec()).weight(winding, start)
    return InterfaceTrace(path, edges, turns, winding, w)


def length_census(domain: LatticeDomain, budget: int | None = None) -> dict[int, int]:
    """Number of defect-free configurations by length (in lattice steps)."""
    g = defect_graph(domain, None, None)
    base, basis = cycle_space(g)
    k = len(basis)
    if k > budget_log2(budget):
        raise BudgetError(k, budget_log2(budget))
    counts: dict[int, int] = {}
    chunk = 1 << min(k, 16)
    for lo in range(0, 1 << k, chunk):
        idx = np.arange(lo, lo + chunk, dtype=np.int64)
        bits = ((idx[:, None] >> np.arange(k)) & 1).astype(np.uint8)
        cfg = (bits @ basis) & 1 if k else np.zeros((1, g.n_edges), np.int64)
        ln = cfg.sum(axis=1)
        for L, c in zip(*np.unique(ln, return_counts=True)):
            counts[int(L)] = counts.get(int(L), 0) + int(c)
    return counts


def partition_function(domain: LatticeDomain, params: IsingParams, budget: int | None = None) -> float:
    return float(sum(c * params.x**L for L, c in length_census(domain, budget).items()))


def _census(domain: LatticeDomain, a: int, z: int, prefer_left: bool = True, budget: int | None = None):
    return interface_census(defect_graph(domain, a, z), prefer_left=prefer_left, budget=budget)


def fermionic_observable(domain: LatticeDomain, a: int, z: int, params: IsingParams,
                         weights: FermionicWeightSpec | None = None, normalize: bool = True,
                         budget: int | None = None) -> complex:
    """Fermionic observable at mid-edge ``z`` for the boundary stub ``a``.

    The winding is measured in the absolute chart: the start direction is the
    inward direction of ``a`` unless ``weights.start_direction`` overrides it.
    With ``normalize`` the sum is divided by the partition function, so that the
    value at ``z = a`` is ``exp(-i s arg(start))`` (1 for a start along +1).
    """
    w = weights or FermionicWeightSpec()
    start = w.start_direction if w.start_direction is not None else start_direction(domain, a)
    if z == domain.n_edges + a:
        return w.weight(0.0, start)
    nd = domain.ndirs
    total = 0j
    for (L, T), n in _census(domain, a, z, budget=budget).items():
        total += n * params.x ** (L / 2) * w.weight(T * 2 * math.pi / nd, start)
    if normalize:
        total /= partition_function(domain, params, budget)
    return complex(total)


def fermionic_field(domain: LatticeDomain, a: int, params: IsingParams,
                    weights: FermionicWeightSpec | None = None, budget: int | None = None) -> dca.MidEdgeField:
    """Normalized observable on every mid-edge, stubs included."""
    w = weights or FermionicWeightSpec()
    start = w.start_direction if w.start_direction is not None else start_direction(domain, a)
    Z = partition_function(domain, params, budget)
    nd = domain.ndirs
    vals = np.zeros(domain.n_midedges, dtype=complex)
    for z in range(domain.n_midedges):
        if z == domain.n_edges + a:
            vals[z] = w.weight(0.0, start)
            continue
        c = _census(domain, a, z, budget=budget)
        vals[z] = sum(n * params.x ** (L / 2) * w.weight(T * 2 * math.pi / nd, start) for (L, T), n in c.items()) / Z
    return dca.MidEdgeField(domain, vals)


def unweighted_interface_sum(domain: LatticeDomain, a: int, z: int, params: IsingParams,
                             budget: int | None = None) -> float:
    """``sum x^length`` over defect configurations, divided by the partition function."""
    if z == domain.n_edges + a:
        return 1.0
    c = _census(domain, a, z, budget=budget)
    total = sum(n * params.x ** (L / 2) for (L, _), n in c.items())
    return float(total / partition_function(domain, params, budget))


def spin_correlation_oracle(domain: LatticeDomain, a: int, z: int, params: IsingParams) -> float:
    """Brute-force ``<sigma_A sigma_Z>`` for spins on the nodes of the defect graph.

    Each edge carries coupling ``K`` with ``tanh K = x`` for full edges and
    ``sqrt(x)`` for half-edges, i.e. the contour weight read as a dual
    temperature.  Exponential in the number of nodes; meant for tiny domains.
    """
    g = defect_graph(domain, a, z)
    n = g.n_nodes
    if n > 22:
        raise BudgetError(n, 22)
    K = np.arctanh(params.x ** (g.half / 2))
    idx = np.arange(1 << n, dtype=np.int64)
    spins = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    energy = (spins[:, g.ends[:, 0]] * spins[:, g.ends[:, 1]]) @ K
    w = np.exp(energy - energy.max())
    return float((w * spins[:, g.source] * spins[:, g.sink]).sum() / w.sum())


# -- local identities ----------------------------------------------------------

@dataclass
class PairReport:
    x: float
    lam: complex
    first: float
    second: float

    def to_dict(self) -> dict:
        return {"x": self.x, "lambda": [self.lam.real, self.lam.imag], "first": self.first, "second": self.second}


def verify_pair_identities(params: IsingParams | float, weights: FermionicWeightSpec | None = None) -> PairReport:
    """Residuals of the two local identities behind strong preholomorphicity."""
    x = params.x if isinstance(params, IsingParams) else float(params)
    lam = (weights or FermionicWeightSpec()).lam
    lb = lam.conjugate()
    first = lam + lam * lb - 1 - lam
    second = lam * x + lam * (lam * x).conjugate() - lam**2 - lam * lb**2
    return PairReport(x, lam, abs(first), abs(second))


def max_corner_residual(domain: LatticeDomain, a: int, x: float, budget: int | None = None) -> float:
    F = fermionic_field(domain, a, IsingParams(x), budget=budget)
    return dca.max_strong_residual(F)


def criticality_scan(domain: LatticeDomain, a: int, xs: Sequence[float]) -> list[tuple[float, float]]:
    """Maximum corner residual of the observable as a function of ``x``."""
    return [(float(x), max_corner_residual(domain, a, x)) for x in xs]


def winding_invariance(domain: LatticeDomain, a: int, z: int, budget: int | None = None) -> int:
    """Largest change of the turn count (in units of 4 pi) between the left and
    right tracing rules, over all configurations; also checks the change is a
    multiple of 4 pi (raises otherwise)."""
    from .enumeration import trace

    g = defect_graph(domain, a, z)
    cfg = configurations(g, (g.source, g.sink), budget)
    t_left, _ = trace(g, cfg, True)
    t_right, _ = trace(g, cfg, False)
    diff = t_left - t_right
    full = 2 * g.ndirs  # turns per 4 pi
    if np.any(diff % full):
        raise AssertionError("winding changed by a non-multiple of 4 pi")
    return int(np.abs(diff).max() // full)


# -- energy density ----------------------------------------------------------------

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _metropolis(L, beta, plus, sweeps, burn, seed, x0, y0, x1, y1, nbatch, out):
    np.random.seed(seed)
    s = np.ones((L, L), dtype=np.int64)
    ghost = 1 if plus else 0
    acc = np.zeros(5)
    for h in range(5):
        acc[h] = math.exp(-2.0 * beta * h) if h else 1.0
    meas = sweeps - burn
    per = meas // nbatch
    for sw in range(sweeps):
        for i in range(L):
            for j in range(L):
                h = 0
                h += s[i - 1, j] if i > 0 else ghost
                h += s[i + 1, j] if i < L - 1 else ghost
                h += s[i, j - 1] if j > 0 else ghost
                h += s[i, j + 1] if j < L - 1 else ghost
                de = s[i, j] * h  # energy change is 2*beta*de
                if de <= 0 or np.random.random() < acc[de]:
                    s[i, j] = -s[i, j]
        k = sw - burn
        if k >= 0 and k < per * nbatch:
            out[k // per] += s[x0, y0] * s[x1, y1]
    for b in range(nbatch):
        out[b] /= per


if numba is not None:
    _metropolis = numba.njit(cache=True)(_metropolis)


@dataclass
class EnergyEstimate:
    size: int
    boundary: str
    estimate: float
    stderr: float
    sweeps: int
    seed: int
    edge: tuple[tuple[int, int], tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "boundary": self.boundary,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "sweeps": self.sweeps,
            "seed": self.seed,
            "edge": [list(self.edge[0]), list(self.edge[1])],
        }


def center_edge(L: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Horizontal edge next to the centre of an ``L x L`` spin block."""
    c = L // 2
    return (c - 1, c), (c, c)


N_BATCHES = 32


def energy_density_mc(L: int, boundary: str = "plus", sweeps: int = 20000, seed: int = 0,
                      edge=None, beta: float = BETA_C) -> EnergyEstimate:
    """Metropolis estimate of ``E[sigma_x sigma_y]`` on an ``L x L`` spin block.

    ``plus`` fixes all spins outside the block to +1, ``free`` leaves them
    out.  The first 20% of sweeps are discarded; the error bar comes from 32
    batch means.
    """
    if boundary not in ("plus", "free"):
        raise ValueError(f"unknown boundary condition {boundary!r}")
    burn = sweeps // 5
    if sweeps - burn < N_BATCHES:
        raise ValueError("too few sweeps for batch means")
    (x0, y0), (x1, y1) = edge or center_edge(L)
    out = np.zeros(N_BATCHES)
    _metropolis(L, beta, boundary == "plus", sweeps, burn, seed, x0, y0, x1, y1, N_BATCHES, out)
    est = float(out.mean())
    err = float(out.std(ddof=1) / math.sqrt(N_BATCHES))
    return EnergyEstimate(L, boundary, est, err, sweeps, seed, ((x0, y0), (x1, y1)))


def energy_density_exact(L: int, boundary: str = "plus", edge=None, beta: float = BETA_C) -> float:
    """Exact ``E[sigma_x sigma_y]`` by summing over all ``2^(L*L)`` spin states."""
    n = L * L
    if n > 20:
        raise BudgetError(n, 20)
    (x0, y0), (x1, y1) = edge or center_edge(L)
    idx = np.arange(1 << n, dtype=np.int64)
    s = (1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)).reshape(-1, L, L)
    e = (s[:, 1:, :] * s[:, :-1, :]).sum(axis=(1, 2)) + (s[:, :, 1:] * s[:, :, :-1]).sum(axis=(1, 2))
    if boundary == "plus":
        e = e + s[:, 0, :].sum(1) + s[:, -1, :].sum(1) + s[:, :, 0].sum(1) + s[:, :, -1].sum(1)
    w = np.exp(beta * (e - e.max()))
    return float((w * s[:, x0, y0] * s[:, x1, y1]).sum() / w.sum())
