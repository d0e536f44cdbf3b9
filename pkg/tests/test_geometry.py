import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cauchy_kmf.errors import InvalidArgument, NotFound
from cauchy_kmf.geometry import (
    boundary_nodes,
    build_annulus_mesh,
    build_rect_mesh,
    read_mesh,
    write_mesh,
)


def test_smallest_rectangle():
    m = build_rect_mesh(1, 1)
    assert m.num_nodes == 4 and len(m.triangles) == 2


def test_count_formula_two_by_two():
    m = build_rect_mesh(2, 2)
    assert m.num_nodes == 9 and len(m.triangles) == 8


def test_desk_scale_square_node_count():
    m = build_rect_mesh(128, 96, (0, 1), (0, 0.75))
    assert m.num_nodes == 12_513


def test_zero_cells_rejected():
    with pytest.raises(InvalidArgument):
        build_rect_mesh(0, 3)


def test_empty_interval_rejected():
    with pytest.raises(InvalidArgument):
        build_rect_mesh(2, 2, (1, 1), (0, 1))


def test_smallest_annulus_counts():
    m = build_annulus_mesh(1, 4, 1, 2)
    assert m.num_nodes == 8 and len(m.triangles) == 8


def test_desk_scale_annulus_node_count():
    assert build_annulus_mesh(32, 128, 1, 7).num_nodes == 4_224


def test_radii_out_of_order():
    with pytest.raises(InvalidArgument):
        build_annulus_mesh(2, 8, 2, 1)


def test_bottom_side_arclength():
    seg = boundary_nodes(build_rect_mesh(2, 2), "gamma1")
    np.testing.assert_allclose(seg.arclength, [0, 0.5, 1])


def test_full_circle_not_duplicated():
    m = build_annulus_mesh(2, 16, 1, 2)
    seg = boundary_nodes(m, "outer")
    assert seg.closed and len(seg) == 16 == len(set(seg.nodes.tolist()))
    assert seg.arclength[0] == 0
    assert seg.length == pytest.approx(16 * 2 * 2 * math.sin(math.pi / 16))


def test_top_side_ordered_by_x():
    m = build_rect_mesh(8, 6, (0, 1), (0, 0.75))
    seg = boundary_nodes(m, "gamma2")
    xy = m.nodes[seg.nodes]
    assert np.all(np.diff(xy[:, 0]) > 0) and np.all(xy[:, 1] == 0.75)


def test_unknown_tag():
    with pytest.raises(NotFound):
        boundary_nodes(build_rect_mesh(1, 1), "nope")


def test_split_arcs_partition_outer_circle():
    m = build_annulus_mesh(16, 128, 0.5, 1, split_x=math.sqrt(2) / 2)
    left, right = m.segments["outer_left"], m.segments["outer_right"]
    assert left.length + right.length == pytest.approx(128 * 2 * math.sin(math.pi / 128))
    # junction nodes are shared by both arcs
    assert set(left.endpoints) == set(right.endpoints)
    assert np.all(m.nodes[right.nodes[1:-1], 0] > math.sqrt(2) / 2)


@given(st.integers(1, 12), st.integers(1, 12))
def test_rect_invariants(nx, ny):
    m = build_rect_mesh(nx, ny, (0, 2), (-1, 0.5))
    assert np.all(m.signed_areas() > 0)
    assert m.area() == pytest.approx(3.0, rel=1e-12)
    assert len(build_rect_mesh(2 * nx, 2 * ny).triangles) == 4 * len(m.triangles)
    # every boundary edge has exactly one tag and lies on the boundary
    assert len(m.edge_tags) == 2 * (nx + ny)
    xy = m.nodes[m.boundary_node_set()]
    on = (
        np.isclose(xy[:, 0], 0, atol=1e-12) | np.isclose(xy[:, 0], 2, atol=1e-12)
        | np.isclose(xy[:, 1], -1, atol=1e-12) | np.isclose(xy[:, 1], 0.5, atol=1e-12)
    )
    assert on.all()
    for seg in m.segments.values():
        assert np.all(np.diff(seg.arclength) > 0)


@given(st.integers(1, 6), st.integers(3, 40), st.floats(0.1, 0.9))
def test_annulus_invariants(nr, nt, r0):
    m = build_annulus_mesh(nr, nt, r0, 1.0)
    assert np.all(m.signed_areas() > 0)
    polygon = 0.5 * nt * math.sin(2 * math.pi / nt) * (1 - r0**2)
    assert m.area() == pytest.approx(polygon, rel=1e-12)
    if nt >= 64:
        assert m.area() == pytest.approx(math.pi * (1 - r0**2), rel=1e-3)
    r = np.hypot(*m.nodes[m.segments["outer"].nodes].T)
    np.testing.assert_allclose(r, 1.0, rtol=1e-14)


def test_mesh_roundtrip(tmp_path):
    m = build_annulus_mesh(2, 12, 0.5, 1, split_x=0.0)
    write_mesh(m, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.nodes, m.nodes)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    assert back.edge_tags == m.edge_tags
    for tag in m.tags:
        np.testing.assert_array_equal(back.segments[tag].nodes, m.segments[tag].nodes)


def test_renumbering_preserves_segments():
    m = build_rect_mesh(3, 2)
    perm = np.random.default_rng(1).permutation(m.num_nodes)
    p = m.renumbered(perm)
    for tag in m.tags:
        np.testing.assert_array_equal(p.nodes[p.segments[tag].nodes], m.nodes[m.segments[tag].nodes])
