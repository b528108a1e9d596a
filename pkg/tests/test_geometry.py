import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastic_fds import (BoundaryMesh, build_proxy, build_tree, make_circle_mesh, make_square_mesh,
                         read_mesh, write_mesh)
from elastic_fds.assembly import FunctionSet
from elastic_fds.geometry import NearFieldIndex


def test_circle_perimeter_formula():
    m = make_circle_mesh(500)
    assert abs(m.perimeter - 2 * 500 * math.sin(math.pi / 500)) < 1e-10


@pytest.mark.parametrize("N", [8, 77, 500])
def test_circle_normals_point_inwards(N):
    m = make_circle_mesh(N)
    assert np.all(np.einsum("ek,ek->e", m.normals, m.centroids) < 0)
    assert np.allclose(np.hypot(*m.normals.T), 1.0)


def test_circle_dof_count():
    m = make_circle_mesh(3200)
    assert m.N == len(m.nodes) == len(m.elements) == 3200
    assert m.dof == 12800


def test_perimeter_converges_quadratically():
    errs = [2 * math.pi - make_circle_mesh(n).perimeter for n in (100, 200, 400)]
    for a, b in zip(errs, errs[1:]):
        assert 3.9 < a / b < 4.1


def test_square_unit_side_lengths():
    m = make_square_mesh(8)
    assert np.allclose(m.lengths, 0.5)
    assert m.perimeter == pytest.approx(4.0)


@pytest.mark.parametrize("N", [8, 12, 401])
def test_closed_cycle(N):
    for m in (make_circle_mesh(N), make_square_mesh(N) if N % 4 == 0 else make_circle_mesh(N + 1)):
        counts = np.bincount(m.elements.ravel(), minlength=m.N)
        assert np.all(counts == 2)
        # one connected cycle: following element successors visits every node
        nxt = dict(m.elements.tolist())
        seen, i = set(), 0
        while i not in seen:
            seen.add(i)
            i = nxt[i]
        assert len(seen) == m.N


def test_square_and_circle_trees_agree():
    a = build_tree(make_circle_mesh(3200), 100)
    b = build_tree(make_square_mesh(3200), 100)
    assert a.ranges == b.ranges


def test_clockwise_mesh_rejected():
    nodes = make_circle_mesh(16).nodes[::-1]
    with pytest.raises(ValueError):
        BoundaryMesh(nodes)


def test_tree_leaf_sizes_3200():
    t = build_tree(3200, 100)
    assert len(t.leaves) == 32
    assert all(b - a == 100 for a, b in t.leaves)


def _check_partition(t):
    for d, rs in enumerate(t.ranges):
        assert rs[0][0] == 0 and rs[-1][1] == t.N
        assert all(rs[i][1] == rs[i + 1][0] for i in range(len(rs) - 1))
        if d:
            parents = t.ranges[d - 1]
            for p, (a, b) in enumerate(parents):
                assert rs[2 * p][0] == a and rs[2 * p + 1][1] == b


def test_tree_3201_partition():
    t = build_tree(3201, 100)
    assert {b - a for a, b in t.leaves} <= {100, 101}
    _check_partition(t)
    assert t.node_ranges == t.element_ranges


@settings(max_examples=50, deadline=None)
@given(st.integers(8, 20000), st.integers(4, 200))
def test_tree_partition_property(N, leaf):
    if leaf > N:
        return
    t = build_tree(N, leaf)
    _check_partition(t)
    sizes = [b - a for a, b in t.leaves]
    assert max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.concatenate([np.arange(a, b) for a, b in t.leaves]), np.arange(N))


def test_mesh_roundtrip(tmp_path):
    m = make_square_mesh(12, side=2.0)
    p = tmp_path / "sq.txt"
    write_mesh(m, p)
    back = read_mesh(p)
    assert np.array_equal(back.nodes, m.nodes)


def test_mesh_file_with_shuffled_elements(tmp_path):
    m = make_circle_mesh(10)
    lines = [f"{m.N} {m.N}"] + [f"{float(x)!r} {float(y)!r}" for x, y in m.nodes]
    conn = [f"{i + 1} {j + 1}" for i, j in m.elements]
    lines += conn[3:] + conn[:3]
    p = tmp_path / "c.txt"
    p.write_text("\n".join(lines) + "\n")
    back = read_mesh(p)
    assert np.allclose(back.perimeter, m.perimeter)
    assert back.N == 10


def test_mesh_file_open_curve_rejected(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("3 3\n0 0\n1 0\n0 1\n1 2\n2 3\n2 3\n")
    with pytest.raises(ValueError):
        read_mesh(p)


def _leaf_proxies(mesh, leaf=100, **kw):
    t = build_tree(mesh, leaf)
    cells = [FunctionSet.cell(mesh, a, b) for a, b in t.leaves]
    own_phi = np.concatenate([np.full(len(c.phi), i) for i, c in enumerate(cells)])
    index = NearFieldIndex(mesh, np.arange(mesh.N), np.arange(mesh.N), own_phi, own_phi)
    return t, [build_proxy(mesh, c.phi, c.psi, near_index=index, owner=i, **kw)
               for i, c in enumerate(cells)]


@pytest.mark.parametrize("mesh", [make_circle_mesh(1600), make_square_mesh(1600)])
def test_proxy_contains_owned_supports(mesh):
    t, proxies = _leaf_proxies(mesh, radius_factor=1.75, proxy_points=64)
    for (a, b), p in zip(t.leaves, proxies):
        elems = np.arange(a - 1, b + 1) % mesh.N          # supports of the hats a..b-1
        pts = np.concatenate([mesh.nodes[elems], mesh.nodes[(elems + 1) % mesh.N]])
        assert np.all(np.hypot(*(pts - p.center).T) < p.radius)
        assert p.mesh.N == 64
        assert not p.degenerate


def test_near_field_within_neighbours():
    mesh = make_circle_mesh(1600)
    t, proxies = _leaf_proxies(mesh)
    n = len(t.leaves)
    for i, p in enumerate(proxies):
        nb = set()
        for j in ((i - 1) % n, (i + 1) % n):
            nb |= set(range(*t.leaves[j]))
        assert set(p.near_phi.tolist()) <= nb and set(p.near_psi.tolist()) <= nb
        assert len(p.near_phi) > 0


def test_near_field_matches_brute_force():
    mesh = make_square_mesh(400)
    t, proxies = _leaf_proxies(mesh, leaf=25)
    for i, p in enumerate(proxies):
        a, b = t.leaves[i]
        others = np.setdiff1d(np.arange(mesh.N), np.arange(a, b))
        ref = build_proxy(mesh, np.arange(a, b), np.arange(a, b), others_phi=others,
                          others_psi=others)
        assert np.array_equal(ref.near_phi, p.near_phi)
        assert np.array_equal(ref.near_psi, p.near_psi)


def test_proxy_degenerate_when_enclosing_everything():
    mesh = make_circle_mesh(64)
    p = build_proxy(mesh, np.arange(32), np.arange(32), radius_factor=1.75)
    assert p.degenerate


@pytest.mark.parametrize("kw", [dict(radius_factor=1.0), dict(proxy_points=8)])
def test_proxy_parameter_validation(kw):
    mesh = make_circle_mesh(64)
    with pytest.raises(ValueError):
        build_proxy(mesh, np.arange(8), np.arange(8), **kw)


def test_contains_and_distance():
    m = make_circle_mesh(200)
    pts = np.array([[0.0, 0.0], [0.5, 0.2], [2.0, 0.0], [0.0, -1.5]])
    assert m.contains(pts).tolist() == [True, True, False, False]
    assert m.distance(pts)[2] == pytest.approx(1.0, abs=1e-3)
