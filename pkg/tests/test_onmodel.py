import cmath
import math

import numpy as np
import pytest

from prehol import dca, onmodel
from prehol.enumeration import BudgetError
from prehol.lattice import HEXAGONAL, DomainError, build_hex_patch, build_rectangle, from_cells

NS = (0.0, 0.5, 1.0, 1.5, 2.0)
REGIMES = (onmodel.DENSE, onmodel.DILUTE)
HEX1 = build_hex_patch(1)


# -- critical parameters ----------------------------------------------------------------

def test_critical_params_anchors():
    p = onmodel.critical_params(0, onmodel.DILUTE)
    assert p.s == pytest.approx(5 / 8, abs=1e-15)
    assert p.x == pytest.approx(1 / math.sqrt(2 + math.sqrt(2)), abs=1e-15)
    assert onmodel.critical_params(1, onmodel.DILUTE).x == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    q = onmodel.critical_params(1, onmodel.DENSE)
    assert q.s == 0 and q.x == 1
    r = onmodel.critical_params(2, onmodel.DILUTE)
    assert r.theta == 0 and r.x == pytest.approx(1 / math.sqrt(2), abs=1e-15)


@pytest.mark.parametrize("N", NS)
@pytest.mark.parametrize("regime", REGIMES)
def test_critical_params_consistent(N, regime):
    p = onmodel.critical_params(N, regime)
    assert 2 * math.cos(p.theta) == pytest.approx(N, abs=1e-12)
    sign = -1 if regime == onmodel.DENSE else 1
    assert p.s == pytest.approx((math.pi + sign * 3 * p.theta) / (4 * math.pi), abs=1e-12)
    assert 1 / p.x == pytest.approx(2 * math.cos((math.pi - sign * p.theta) / 4), abs=1e-12)
    rep = onmodel.verify_triplet_identities(p)
    assert rep.loop <= 1e-12 and rep.step <= 1e-12


def test_critical_params_errors():
    for bad in (-0.1, 2.1):
        with pytest.raises(ValueError):
            onmodel.critical_params(bad)
    with pytest.raises(ValueError):
        onmodel.critical_params(1, "medium")


def test_triplet_off_critical():
    p = onmodel.critical_params(1, onmodel.DILUTE)
    # cube roots of unity: the loop identity does not involve x
    assert onmodel.verify_triplet_identities(p, 0.5).loop <= 1e-14
    assert onmodel.verify_triplet_identities(p, 0.5).step == pytest.approx(1 - math.sqrt(3) / 2, abs=1e-15)


# -- configurations ---------------------------------------------------------------------

def test_loop_config_counts():
    one = build_hex_patch(0)
    assert len(list(onmodel.enumerate_loop_configs(one))) == 2
    assert len(list(onmodel.enumerate_loop_configs(one, 0, one.n_edges + 3))) == 2
    assert len(list(onmodel.enumerate_loop_configs(HEX1))) == 2**7


def test_loop_configs_degrees():
    for c in onmodel.enumerate_loop_configs(HEX1, 0, HEX1.n_edges + 5):
        g = c.graph
        deg = np.zeros(g.n_nodes, int)
        for e in np.flatnonzero(c.edges):
            deg[g.ends[e]] += 1
        assert set(deg.tolist()) <= {0, 1, 2}
        assert deg[g.source] == deg[g.sink] == 1


def test_square_domain_rejected():
    with pytest.raises(DomainError):
        list(onmodel.enumerate_loop_configs(build_rectangle(1, 1)))


def test_budget():
    with pytest.raises(BudgetError):
        onmodel.partition_function(build_hex_patch(2), 1.0, 0.5, budget=10)


# -- observable ----------------------------------------------------------------------------

def polyline_winding(points):
    dirs = [points[k + 1] - points[k] for k in range(len(points) - 1)]
    return sum(cmath.phase(dirs[k + 1] / dirs[k]) for k in range(len(dirs) - 1))


def one_hexagon_oracle(s, x, a, b):
    """Both arcs of the single hexagon between stubs ``a`` and ``b``, by hand."""
    d = build_hex_patch(0)
    v = d.vertices
    ring = list(d.faces[0])
    va, vb = d.stubs[a][0], d.stubs[b][0]
    out_a = v[va] + d.stub_outward(a) * d.mesh
    out_b = v[vb] + d.stub_outward(b) * d.mesh
    total = 0j
    for step in (1, -1):
        i = ring.index(va)
        path = [va]
        while path[-1] != vb:
            i = (i + step) % 6
            path.append(ring[i])
        pts = [out_a] + [v[p] for p in path] + [out_b]
        length = len(path)  # edges of the arc plus two half stubs
        total += x**length * cmath.exp(-1j * s * polyline_winding(pts))
    return total


@pytest.mark.parametrize("s, x", [(0.5, 1 / math.sqrt(3)), (0.3, 0.7), (-0.1, 0.45)])
def test_one_hexagon_two_arcs(s, x):
    d = build_hex_patch(0)
    p = onmodel.CriticalParams(1.0, onmodel.DILUTE, 0.0, s, x)
    for b in range(1, 6):
        got = onmodel.parafermionic_observable(d, 0, d.n_edges + b, p, normalize=False)
        assert got == pytest.approx(one_hexagon_oracle(s, x, 0, b), abs=1e-14)


def test_observable_at_a():
    p = onmodel.critical_params(0.5)
    assert onmodel.parafermionic_observable(HEX1, 2, HEX1.n_edges + 2, p) == 1


def test_n_zero_drops_loops():
    p = onmodel.critical_params(0, onmodel.DILUTE)
    census = onmodel.interface_census(onmodel.defect_graph(HEX1, 0, 4), loops=True)
    expected = sum(c * p.x ** (L / 2) * cmath.exp(-1j * p.s * T * math.pi / 3)
                   for (L, T, n), c in census.items() if n == 0)
    got = onmodel.parafermionic_observable(HEX1, 0, 4, p, normalize=False)
    assert got == pytest.approx(expected, abs=1e-14)
    assert onmodel.partition_function(HEX1, 0, p.x) == 1


@pytest.mark.parametrize("N", NS)
@pytest.mark.parametrize("regime", REGIMES)
def test_vertex_relation_7_hexagons(N, regime):
    p = onmodel.critical_params(N, regime)
    F = onmodel.parafermionic_field(HEX1, 0, p)
    assert onmodel.vertex_relation_report(F).max_residual <= 1e-10
    bs = onmodel.boundary_sum(F)
    assert abs(bs) <= 1e-9


def test_vertex_relation_off_critical():
    p = onmodel.critical_params(1.0, onmodel.DILUTE)
    F = onmodel.parafermionic_field(HEX1, 0, p, x=0.9 * p.x)
    assert onmodel.vertex_relation_report(F).max_residual > 1e-4


def test_vertex_relation_constant():
    F = dca.MidEdgeField.from_callable(HEX1, lambda z: 2 - 1j)
    assert max(abs(onmodel.vertex_relation_residual(F, v)) for v in range(HEX1.n_vertices)) < 1e-14


def test_boundary_sum_trivial():
    assert onmodel.boundary_sum(dca.MidEdgeField.from_callable(HEX1, lambda z: 0)) == 0
    assert abs(onmodel.boundary_sum(dca.MidEdgeField.from_callable(HEX1, lambda z: 1))) < 1e-14


def test_boundary_sum_telescopes():
    rng = np.random.default_rng(0)
    vals = rng.normal(size=HEX1.n_midedges) + 1j * rng.normal(size=HEX1.n_midedges)
    F = dca.MidEdgeField(HEX1, vals)
    total = sum(onmodel.vertex_relation_residual(F, v) for v in range(HEX1.n_vertices))
    assert onmodel.boundary_sum(F) == pytest.approx(total, abs=1e-12)


@pytest.mark.parametrize("N", NS)
@pytest.mark.parametrize("regime", REGIMES)
def test_winding_invariance(N, regime):
    s = onmodel.critical_params(N, regime).s
    for z in range(HEX1.n_midedges):
        if z != HEX1.n_edges:
            assert onmodel.winding_invariance(HEX1, 0, z, s) <= 1e-12


@pytest.mark.parametrize("cells", [[(0, 0)], [(0, 0), (1, 0)], [(0, 0), (1, 0), (0, 1)]])
def test_n1_matches_triangular_ising(cells):
    d = from_cells(HEXAGONAL, cells, 1.0)
    for x in (0.3, 1 / math.sqrt(3), 0.9):
        assert onmodel.partition_function(d, 1.0, x) == pytest.approx(onmodel.triangular_ising_oracle(d, x), abs=1e-10)
    assert onmodel.partition_function(HEX1, 1.0, 0.4) == pytest.approx(onmodel.triangular_ising_oracle(HEX1, 0.4), abs=1e-10)


# -- self-avoiding walks -------------------------------------------------------------------

NAIVE_6_14 = [90, 174, 336, 648, 1218, 2328, 4416, 8388, 15780]


def test_saw_small_counts():
    c = onmodel.saw_count(14).counts
    assert [c[k] for k in range(1, 6)] == [3, 6, 12, 24, 48]
    assert [c[k] for k in range(6, 15)] == NAIVE_6_14


def test_saw_matches_naive():
    fast = onmodel.saw_count(14).counts
    naive = onmodel.saw_count_naive(14)
    assert fast == naive


def test_saw_census_invariants():
    c = onmodel.saw_count(20).counts
    for k in range(1, 20):
        assert 1 <= c[k + 1] <= 2 * c[k]


def test_saw_limits():
    with pytest.raises(ValueError):
        onmodel.saw_count(0)
    with pytest.raises(ValueError):
        onmodel.saw_count(31)


def test_connective_report():
    rep = onmodel.connective_estimate(onmodel.saw_count(20))
    assert rep.to_dict()["mu"] == pytest.approx(1.8477590650, abs=1e-10)
    assert rep.decreasing
    assert rep.roots[0] == 3
    assert len(rep.ratios) == 20


# -- extended precision ---------------------------------------------------------------------

HEX12 = from_cells(HEXAGONAL, [(-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0),
                               (2, -1), (2, 0), (1, 1), (-2, 1), (-1, 2)], 1.0)


def test_precise_field_agrees_with_double():
    p = onmodel.critical_params(0.5, onmodel.DENSE)
    F = onmodel.parafermionic_field(HEX1, 3, p)
    G = onmodel.parafermionic_field(HEX1, 3, p, precise=True)
    assert np.allclose(G.values.astype(complex), F.values, rtol=1e-12, atol=1e-14)


def test_precise_off_critical_x():
    p = onmodel.critical_params(1.0, onmodel.DILUTE)
    G = onmodel.parafermionic_field(HEX1, 0, p, x=0.9 * p.x, precise=True)
    assert onmodel.vertex_relation_report(G).max_residual > 1e-4


def test_large_x_needs_precision():
    # x > 1 for N = 0 dense: the field reaches ~1e6 and double rounding shows
    p = onmodel.critical_params(0.0, onmodel.DENSE)
    F = onmodel.parafermionic_field(HEX12, 0, p)
    scale = np.abs(F.values).max()
    assert scale > 1e6
    assert onmodel.vertex_relation_report(F).max_residual <= 1e-14 * scale
    G = onmodel.parafermionic_field(HEX12, 0, p, precise=True)
    assert onmodel.vertex_relation_report(G).max_residual <= 1e-30
    assert abs(onmodel.boundary_sum(G)) <= 1e-30
