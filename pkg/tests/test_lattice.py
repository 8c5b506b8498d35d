import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prehol.lattice import (
    HEXAGONAL,
    SQUARE,
    DomainError,
    build_disk,
    build_hex_patch,
    build_rectangle,
    domain_from_spec,
    from_cells,
    mark_dobrushin,
)


def counts(d):
    return d.n_vertices, d.n_edges, len(d.faces)


@pytest.mark.parametrize(
    "shape, expected",
    [((1, 1, 1.0), (4, 4, 1)), ((2, 1, 0.5), (6, 7, 2)), ((3, 3, 1.0), (16, 24, 9))],
)
def test_rectangle_counts(shape, expected):
    assert counts(build_rectangle(*shape)) == expected


@given(st.integers(1, 7), st.integers(1, 7))
@settings(max_examples=30, deadline=None)
def test_rectangle_count_formula(m, n):
    d = build_rectangle(m, n, 0.5)
    assert counts(d) == ((m + 1) * (n + 1), 2 * m * n + m + n, m * n)


@pytest.mark.parametrize("bad", [(0, 1, 1.0), (1, -2, 1.0), (1.5, 2, 1.0), (2, 2, 0.0)])
def test_rectangle_rejects(bad):
    with pytest.raises(DomainError):
        build_rectangle(*bad)


def brute_disk_faces(radius, mesh):
    n = int(radius / mesh) + 2
    inside = 0
    for i in range(-n, n):
        for j in range(-n, n):
            corners = [((i + a) * mesh, (j + b) * mesh) for a in (0, 1) for b in (0, 1)]
            inside += all(x * x + y * y <= radius * radius + 1e-12 for x, y in corners)
    return inside


def test_disk_coarse():
    # the four cells around the origin all fit for mesh 0.6
    d = build_disk(1.0, 0.6)
    assert len(d.faces) == brute_disk_faces(1.0, 0.6) == 4


def test_disk_matches_scan():
    assert len(build_disk(1.0, 0.25).faces) == brute_disk_faces(1.0, 0.25)


def test_disk_area_bounds():
    eps = 0.125
    nf = len(build_disk(1.0, eps).faces)
    assert math.pi / eps**2 - 8 / eps <= nf <= math.pi / eps**2


def test_disk_too_small():
    with pytest.raises(DomainError):
        build_disk(0.1, 0.5)


@pytest.mark.parametrize("rings, hexes, verts, edges", [(0, 1, 6, 6), (1, 7, 24, 30), (2, 19, 54, 72)])
def test_hex_patch_counts(rings, hexes, verts, edges):
    d = build_hex_patch(rings)
    assert (len(d.faces), d.n_vertices, d.n_edges) == (hexes, verts, edges)


DOMAINS = [
    build_rectangle(3, 2, 0.5),
    build_disk(1.0, 0.25),
    build_hex_patch(2, 1.0),
    from_cells(SQUARE, [(0, 0), (1, 0), (1, 1)], 1.0),
]


@pytest.mark.parametrize("d", DOMAINS)
def test_domain_invariants(d):
    v = d.vertices
    mids = d.midedges[: d.n_edges]
    assert np.allclose(mids, 0.5 * (v[d.edges[:, 0]] + v[d.edges[:, 1]]), atol=1e-15)
    # Euler relation with the outer face
    assert d.n_vertices - d.n_edges + len(d.faces) + 1 == 2
    # interior vertices have full degree
    full = 4 if d.kind == SQUARE else 3
    assert set(d.degree[d.interior_vertices]) <= {full}
    # ccw boundary: turning +2pi, consecutive edges chain up
    assert d.boundary_turning() == pytest.approx(2 * math.pi, abs=1e-12)
    b = d.boundary
    assert all(b[k][1] == b[(k + 1) % len(b)][0] for k in range(len(b)))


@pytest.mark.parametrize("d", DOMAINS)
def test_dual_graph(d):
    pts, dual_edges = d.dual_graph()
    assert len(dual_edges) == d.n_edges
    outer = len(d.faces)
    n_outer = sum(outer in e for e in dual_edges)
    assert n_outer == len(d.boundary)
    # dual of the dual: faces adjacent through inner dual edges reproduce face adjacency
    adj = {f: set() for f in range(outer)}
    for p, q in dual_edges:
        if outer not in (p, q):
            adj[p].add(q)
            adj[q].add(p)
    assert adj == d.face_adjacency


def test_oriented_edge_reverse():
    d = build_rectangle(2, 2)
    for e in d.oriented_boundary():
        r = e.reversed()
        assert (r.tail, r.head, r.direction) == (e.head, e.tail, -e.direction)


@pytest.mark.parametrize("d", [build_rectangle(3, 3), build_hex_patch(1)])
def test_vertex_star(d):
    for v in range(d.n_vertices):
        star = d.star(v)
        assert len(star.midedges) == len(star.directions)
        for alpha in star.bisectors():
            assert abs(abs(alpha) - 1) < 1e-12


def test_mark_unit_cell():
    d = mark_dobrushin(build_rectangle(1, 1), 0, 2)
    ab, ba = d.arcs()
    assert len(ab) == len(ba) == 2


def test_mark_by_points():
    d = build_rectangle(3, 3)
    m = mark_dobrushin(d, 1.5, 1.5 + 3j)
    ab, ba = m.arcs()
    assert sorted(ab + ba) == list(range(12))
    assert len(ab) == len(ba) == 6


def test_mark_errors():
    d = build_rectangle(3, 3)
    with pytest.raises(DomainError):
        mark_dobrushin(d, 1, 1)
    with pytest.raises(DomainError):
        mark_dobrushin(d, 1.5, 1.5 + 1.5j)


def test_domain_spec():
    assert counts(domain_from_spec({"kind": "square", "cellsX": 2, "cellsY": 1, "mesh": 0.5})) == (6, 7, 2)
    assert domain_from_spec({"kind": "hex", "rings": 1}).kind == HEXAGONAL
    for bad in [{"kind": "tri"}, {"kind": "square", "cellsX": 2}, {"kind": "disk", "radius": "x"}]:
        with pytest.raises(DomainError):
            domain_from_spec(bad)
