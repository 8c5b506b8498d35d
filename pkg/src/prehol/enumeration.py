"""Exhaustive enumeration of contour configurations with two defects.

Configurations are edge subsets of a lattice domain in which every vertex has
even degree except the two defects.  They form a coset of the binary cycle
space, so they are generated as ``base XOR span(cycle basis)`` over GF(2).

Interfaces are traced vectorised over all configurations at once: starting at
the defect ``a`` the walk follows unused configuration edges, preferring the
leftmost continuation, until it reaches the other defect.  Only the signed
number of turns, the length and (optionally) the number of remaining loops
are kept, aggregated into a table of multiplicities.  Model weights are then
evaluated from the table for any parameter values.
"""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeDomain

DEFAULT_BUDGET_LOG2 = 24


class BudgetError(RuntimeError):
    """Cycle space too large for exhaustive enumeration."""

    def __init__(self, needed: int, budget: int):
        super().__init__(f"enumeration needs 2^{needed} configurations, budget is 2^{budget}")
        self.needed = needed
        self.budget = budget


def budget_log2(value: int | None = None) -> int:
    if value is not None:
        return int(value)
    return int(os.environ.get("PREHOL_ENUM_BUDGET_LOG2", DEFAULT_BUDGET_LOG2))


@dataclass
class DefectGraph:
    """Domain graph with the defect mid-edges inserted as extra nodes.

    Edge lengths are in half-lattice units: full edges 2, half-edges 1.
    ``dirs[e]`` is the lattice direction from ``ends[e, 0]`` to ``ends[e, 1]``.
    """

    n_nodes: int
    ends: np.ndarray
    dirs: np.ndarray
    half: np.ndarray
    ndirs: int
    source: int
    sink: int | None
    n_full: int

    @property
    def n_edges(self) -> int:
        return len(self.ends)


def defect_graph(domain: LatticeDomain, a_stub: int | None, z: int | None) -> DefectGraph:
    """Insert the stub ``a_stub`` and the mid-edge ``z`` as defect nodes.

    ``z`` is a mid-edge id.  With ``a_stub=None`` and ``z=None`` the plain
    domain graph is returned (used for partition functions).
    """
    nd = domain.ndirs
    V = domain.n_vertices
    ends, dirs, half = [], [], []
    split = z if (z is not None and z < domain.n_edges) else None
    for e, (p, q) in enumerate(domain.edges):
        if e == split:
            continue
        ends.append((int(p), int(q)))
        dirs.append(domain._dir_between(int(p), int(q)))
        half.append(2)
    n_full = len(ends)
    n_nodes = V
    source = sink = None
    if a_stub is not None:
        v, k = domain.stubs[a_stub]
        source = n_nodes
        n_nodes += 1
        ends.append((source, v))
        dirs.append((k + nd // 2) % nd)
        half.append(1)
    if z is not None:
        sink = n_nodes
        n_nodes += 1
        if split is not None:
            p, q = map(int, domain.edges[split])
            k = domain._dir_between(p, q)
            ends.append((p, sink))
            dirs.append(k)
            half.append(1)
            ends.append((q, sink))
            dirs.append((k + nd // 2) % nd)
            half.append(1)
        else:
            v, k = domain.stubs[z - domain.n_edges]
            ends.append((v, sink))
            dirs.append(k)
            half.append(1)
    return DefectGraph(
        n_nodes=n_nodes,
        ends=np.array(ends, dtype=np.int64).reshape(-1, 2),
        dirs=np.array(dirs, dtype=np.int64),
        half=np.array(half, dtype=np.int64),
        ndirs=nd,
        source=source if source is not None else -1,
        sink=sink,
        n_full=n_full,
    )


def _spanning_tree(g: DefectGraph):
    adj = [[] for _ in range(g.n_nodes)]
    for e, (u, v) in enumerate(g.ends):
        adj[u].append((v, e))
        adj[v].append((u, e))
    parent = {0: (-1, -1)}
    dq = deque([0])
    while dq:
        u = dq.popleft()
        for v, e in adj[u]:
            if v not in parent:
                parent[v] = (u, e)
                dq.append(v)
    if len(parent) != g.n_nodes:
        raise ValueError("graph is disconnected")
    depth = {0: 0}
    for u in parent:  # BFS order: parents precede children
        if u:
            depth[u] = depth[parent[u][0]] + 1
    return parent, depth


def _tree_path(parent, depth, u: int, v: int, n_edges: int) -> np.ndarray:
    vec = np.zeros(n_edges, dtype=np.uint8)
    while u != v:
        if depth[u] < depth[v]:
            u, v = v, u
        pu, e = parent[u]
        vec[e] ^= 1
        u = pu
    return vec


def cycle_space(g: DefectGraph, odd: tuple[int, ...] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Particular solution with odd degree exactly at ``odd`` and a basis of
    the binary cycle space (one fundamental cycle per non-tree edge)."""
    parent, depth = _spanning_tree(g)
    tree = {e for _, e in parent.values() if e >= 0}
    basis = []
    for e, (u, v) in enumerate(g.ends):
        if e in tree:
            continue
        vec = _tree_path(parent, depth, int(u), int(v), g.n_edges)
        vec[e] ^= 1
        basis.append(vec)
    base = np.zeros(g.n_edges, dtype=np.uint8)
    if odd:
        if len(odd) != 2:
            raise ValueError("defects must come in a pair")
        base = _tree_path(parent, depth, odd[0], odd[1], g.n_edges)
    return base, np.array(basis, dtype=np.uint8).reshape(-1, g.n_edges)


def configurations(g: DefectGraph, odd: tuple[int, ...] = (), budget: int | None = None) -> np.ndarray:
    """All admissible configurations as a (2^k, E) boolean matrix."""
    base, basis = cycle_space(g, odd)
    k = len(basis)
    lim = budget_log2(budget)
    if k > lim:
        raise BudgetError(k, lim)
    idx = np.arange(2**k, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(k)) & 1).astype(np.uint8)
    cfg = (bits @ basis.astype(np.uint8)) & 1 if k else np.zeros((1, g.n_edges), np.uint8)
    return (cfg ^ base).astype(bool)


def _signed_turn(delta: np.ndarray, nd: int) -> np.ndarray:
    d = delta % nd
    return np.where(d > nd // 2, d - nd, d)


def _candidate_table(g: DefectGraph, prefer_left: bool):
    """For each (node, incoming direction) the outgoing edges ordered by
    turn preference; returns edge ids, far nodes, outgoing directions."""
    nd = g.ndirs
    out = [[] for _ in range(g.n_nodes)]
    for e, (u, v) in enumerate(g.ends):
        out[u].append((e, v, int(g.dirs[e])))
        out[v].append((e, u, int((g.dirs[e] + nd // 2) % nd)))
    P = max(len(o) for o in out)
    ce = np.full((g.n_nodes, nd, P), -1, dtype=np.int64)
    cn = np.zeros_like(ce)
    cd = np.zeros_like(ce)
    for u in range(g.n_nodes):
        for kin in range(nd):
            opts = []
            for e, v, kout in out[u]:
                if kout == (kin + nd // 2) % nd:
                    continue  # reversal
                t = (kout - kin) % nd
                if t > nd // 2:
                    t -= nd
                opts.append((t, e, v, kout))
            opts.sort(key=lambda o: -o[0] if prefer_left else o[0])
            for p, (t, e, v, kout) in enumerate(opts):
                ce[u, kin, p], cn[u, kin, p], cd[u, kin, p] = e, v, kout
    return ce, cn, cd


def trace(g: DefectGraph, cfg: np.ndarray, prefer_left: bool = True):
    """Trace the interface from ``g.source`` to ``g.sink`` in every row of
    ``cfg``.  Returns (turns, used) where ``used`` marks interface edges."""
    n = len(cfg)
    nd = g.ndirs
    ce, cn, cd = _candidate_table(g, prefer_left)
    rows = np.arange(n)
    used = np.zeros_like(cfg)
    e0 = int(np.flatnonzero((g.ends[:, 0] == g.source) | (g.ends[:, 1] == g.source))[0])
    used[:, e0] = True
    cur = np.full(n, g.ends[e0, 1] if g.ends[e0, 0] == g.source else g.ends[e0, 0])
    kin = np.full(n, g.dirs[e0] if g.ends[e0, 0] == g.source else (g.dirs[e0] + nd // 2) % nd)
    turns = np.zeros(n, dtype=np.int64)
    done = cur == g.sink
    for _ in range(g.n_edges + 1):
        if done.all():
            break
        act = rows[~done]
        c, k = cur[act], kin[act]
        pick_e = np.full(len(act), -1)
        pick_p = np.zeros(len(act), dtype=np.int64)
        for p in range(ce.shape[2]):
            e = ce[c, k, p]
            ok = (pick_e < 0) & (e >= 0)
            es = np.maximum(e, 0)
            ok &= cfg[act, es] & ~used[act, es]
            pick_e = np.where(ok, e, pick_e)
            pick_p = np.where(ok, p, pick_p)
        if (pick_e < 0).any():
            raise RuntimeError("interface trace got stuck; parity violated")
        newk = cd[c, k, pick_p]
        turns[act] += _signed_turn(newk - k, nd)
        used[act, pick_e] = True
        cur[act] = cn[c, k, pick_p]
        kin[act] = newk
        done[act] = cur[act] == g.sink
    if not done.all():
        raise RuntimeError("interface trace did not terminate")
    return turns, used


def count_loops(g: DefectGraph, edges: np.ndarray) -> np.ndarray:
    """Connected components (with at least one edge) of each row's edge set."""
    n = len(edges)
    labels = np.broadcast_to(np.arange(g.n_nodes), (n, g.n_nodes)).copy()
    big = g.n_nodes
    has = np.zeros((n, g.n_nodes), bool)
    for e, (u, v) in enumerate(g.ends):
        has[:, u] |= edges[:, e]
        has[:, v] |= edges[:, e]
    labels[~has] = big
    while True:
        changed = False
        for e, (u, v) in enumerate(g.ends):
            m = edges[:, e]
            if not m.any():
                continue
            lo = np.minimum(labels[:, u], labels[:, v])
            upd = m & ((labels[:, u] != lo) | (labels[:, v] != lo))
            if upd.any():
                labels[upd, u] = lo[upd]
                labels[upd, v] = lo[upd]
                changed = True
        if not changed:
            break
    roots = labels == np.arange(g.n_nodes)
    return (roots & has).sum(axis=1)


def tabulate(*columns: np.ndarray) -> dict[tuple[int, ...], int]:
    """Multiplicity table of integer tuples."""
    cols = [np.asarray(c, dtype=np.int64) for c in columns]
    if cols[0].size == 0:
        return {}
    # mixed-radix key per row; one 1-D sort is much cheaper than a row sort
    lo = [int(c.min()) for c in cols]
    span = [int(c.max()) - m + 1 for c, m in zip(cols, lo)]
    if np.prod([float(s) for s in span]) >= 2.0**62:
        uniq, counts = np.unique(np.stack(cols, axis=1), axis=0, return_counts=True)
        return {tuple(int(x) for x in u): int(c) for u, c in zip(uniq, counts)}
    key = np.zeros_like(cols[0])
    for c, m, s in zip(cols, lo, span):
        key = key * s + (c - m)
    uk, counts = np.unique(key, return_counts=True)
    out = {}
    for k, n in zip(uk.tolist(), counts.tolist()):
        digits = []
        for m, s in zip(reversed(lo), reversed(span)):
            k, r = divmod(k, s)
            digits.append(r + m)
        out[tuple(reversed(digits))] = n
    return out


# -- compiled path --------------------------------------------------------
# Gray-code walk over the coset with edge sets packed in one uint64.

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _popcount(m):
    c = 0
    while m:
        m &= m - np.uint64(1)
        c += 1
    return c


def _lowbit_index(m):
    i = 0
    while not (m >> np.uint64(i)) & np.uint64(1):
        i += 1
    return i


def _walk_all(basis, base, cbit, cnext, cturn, P, e0bit, state0, ce, ends, half2, nd, want_loops,
              out_turns, out_len, out_loops):
    # states are node * nd + incoming direction; candidate j of state q sits
    # at q * P + j with its edge bit, next state (-1 at the sink) and turn
    k = len(basis)
    mask = base
    one = np.uint64(1)
    for i in range(1 << k):
        if i:
            # flip the basis vector at the lowest set bit of i (Gray code)
            b = 0
            while not (i >> b) & 1:
                b += 1
            mask ^= basis[b]
        used = e0bit
        st = state0
        turns = 0
        while st >= 0:
            j = st * P
            picked = -1
            for p in range(P):
                bit = cbit[j + p]
                if bit and (mask & bit) and not (used & bit):
                    picked = j + p
                    break
            if picked < 0:
                turns = 1 << 40
                break
            used |= cbit[picked]
            turns += cturn[picked]
            st = cnext[picked]
        out_turns[i] = turns
        out_len[i] = 2 * _popcount(mask & half2[0]) + _popcount(mask & half2[1])
        if want_loops:
            rem = mask & ~used
            loops = 0
            while rem:
                e = _lowbit_index(rem)
                rem &= ~(one << np.uint64(e))
                first = ends[e, 0]
                node = ends[e, 1]
                while node != first:
                    # continue along the other remaining edge at node
                    nxt = -1
                    for kk in range(nd):
                        for p in range(ce.shape[2]):
                            f = ce[node, kk, p]
                            if f >= 0 and (rem >> np.uint64(f)) & one:
                                nxt = f
                                break
                        if nxt >= 0:
                            break
                    rem &= ~(one << np.uint64(nxt))
                    node = ends[nxt, 1] if ends[nxt, 0] == node else ends[nxt, 0]
                loops += 1
            out_loops[i] = loops


def _flat_table(ce, cn, cd, sink: int, nd: int):
    """Flattened candidate table for the compiled walk."""
    nn, _, P = ce.shape
    k = np.arange(nd)[None, :, None]
    valid = ce >= 0
    cbit = np.where(valid, np.left_shift(np.uint64(1), np.maximum(ce, 0).astype(np.uint64)), np.uint64(0))
    t = (cd - k) % nd
    t = np.where(t > nd // 2, t - nd, t)
    nxt = np.where(cn == sink, -1, cn * nd + cd)
    return cbit.ravel(), np.where(valid, nxt, -1).ravel(), np.where(valid, t, 0).ravel(), P


if numba is not None:
    _popcount = numba.njit(cache=True)(_popcount)
    _lowbit_index = numba.njit(cache=True)(_lowbit_index)
    _walk_all = numba.njit(cache=True)(_walk_all)


def _pack(vec: np.ndarray) -> np.uint64:
    out = 0
    for e in np.flatnonzero(vec):
        out |= 1 << int(e)
    return np.uint64(out)


def interface_census(g: DefectGraph, prefer_left: bool = True, loops: bool = False,
                     budget: int | None = None) -> dict[tuple[int, ...], int]:
    """Multiplicities of (length in half-units, signed turns[, loops]) over all
    configurations with defects ``g.source`` and ``g.sink``.

    Uses the compiled Gray-code walk when the edge set fits in 64 bits and
    falls back to the vectorised tracer otherwise.
    """
    odd = (g.source, g.sink)
    base, basis = cycle_space(g, odd)
    lim = budget_log2(budget)
    if len(basis) > lim:
        raise BudgetError(len(basis), lim)
    if numba is None or g.n_edges > 63:
        cfg = configurations(g, odd, budget)
        turns, used = trace(g, cfg, prefer_left)
        length = (cfg * g.half).sum(axis=1)
        cols = [length, turns]
        if loops:
            cols.append(count_loops(g, cfg & ~used))
        return tabulate(*cols)
    ce, cn, cd = _candidate_table(g, prefer_left)
    e0 = int(np.flatnonzero((g.ends[:, 0] == g.source) | (g.ends[:, 1] == g.source))[0])
    fwd = g.ends[e0, 0] == g.source
    start = int(g.ends[e0, 1] if fwd else g.ends[e0, 0])
    kin0 = int(g.dirs[e0] if fwd else (g.dirs[e0] + g.ndirs // 2) % g.ndirs)
    state0 = -1 if start == g.sink else start * g.ndirs + kin0
    cbit, cnext, cturn, P = _flat_table(ce, cn, cd, int(g.sink), g.ndirs)
    half2 = np.array([_pack(g.half == 2), _pack(g.half == 1)], dtype=np.uint64)
    n = 1 << len(basis)
    t = np.zeros(n, np.int64)
    ln = np.zeros(n, np.int64)
    lp = np.zeros(n, np.int64)
    packed = np.array([_pack(b) for b in basis], dtype=np.uint64)
    _walk_all(packed, _pack(base), cbit, cnext, cturn, P, np.uint64(1 << e0), state0, ce, g.ends, half2,
              g.ndirs, loops, t, ln, lp)
    if (t >= 1 << 40).any():
        raise RuntimeError("interface trace got stuck; parity violated")
    return tabulate(ln, t, lp) if loops else tabulate(ln, t)


def loop_census(g: DefectGraph, budget: int | None = None) -> dict[tuple[int, int], int]:
    """Multiplicities of (length in half-units, loops) over defect-free configurations."""
    cfg = configurations(g, (), budget)
    length = (cfg * g.half).sum(axis=1)
    return tabulate(length, count_loops(g, cfg))
