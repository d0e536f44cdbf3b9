"""Structured triangulations of rectangles and annuli with tagged boundary segments.

Every mesh carries, per boundary tag, the ordered list of nodes along that
segment together with their arclength coordinate. Adjacent segments share
their junction node: it appears in the node list of both segments.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InvalidArgument, NotFound

__all__ = [
    "Segment",
    "Mesh",
    "build_rect_mesh",
    "build_annulus_mesh",
    "boundary_nodes",
    "write_mesh",
    "read_mesh",
]

RECT_SIDES = ("bottom", "right", "top", "left")
DEFAULT_RECT_TAGS = {"bottom": "gamma1", "top": "gamma2", "left": "gamma3", "right": "gamma4"}


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Segment:
    """Ordered nodes of one tagged boundary segment.

    ``arclength[i]`` is the distance along the (polygonal) segment from
    ``nodes[0]`` to ``nodes[i]``. For a closed segment the first node is not
    repeated at the end; ``length`` includes the closing edge.
    """

    tag: str
    nodes: np.ndarray
    arclength: np.ndarray
    closed: bool
    length: float

    def __len__(self):
        return len(self.nodes)

    @property
    def endpoints(self):
        if self.closed:
            return ()
        return (int(self.nodes[0]), int(self.nodes[-1]))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation with tagged boundary edges."""

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: tuple
    segments: Mapping[str, Segment]

    @classmethod
    def from_arrays(cls, nodes, triangles, boundary_edges, edge_tags):
        nodes = _frozen(nodes, float)
        triangles = _frozen(triangles, np.int64)
        boundary_edges = _frozen(boundary_edges, np.int64)
        edge_tags = tuple(str(t) for t in edge_tags)
        if len(edge_tags) != len(boundary_edges):
            raise InvalidArgument("one tag per boundary edge required")
        segments = {}
        for tag in dict.fromkeys(edge_tags):
            idx = [i for i, t in enumerate(edge_tags) if t == tag]
            segments[tag] = _chain_segment(tag, nodes, boundary_edges[idx])
        return cls(nodes, triangles, boundary_edges, edge_tags, segments)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def tags(self):
        return tuple(self.segments)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self):
        return float(self.signed_areas().sum())

    def boundary_node_set(self):
        return np.unique(self.boundary_edges)

    def renumbered(self, perm):
        """Return the same mesh with node ``i`` moved to position ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return Mesh.from_arrays(
            self.nodes[inv], perm[self.triangles], perm[self.boundary_edges], self.edge_tags
        )


def _chain_segment(tag, nodes, edges):
    """Order the directed edges of one tag into a path (or a loop)."""
    succ = {}
    for a, b in edges:
        a, b = int(a), int(b)
        if a in succ:
            raise InvalidArgument(f"segment {tag!r} branches at node {a}")
        succ[a] = b
    heads = set(succ) - set(succ.values())
    if len(heads) > 1:
        raise InvalidArgument(f"segment {tag!r} is not connected")
    closed = not heads
    start = min(succ) if closed else heads.pop()
    order = [start]
    while order[-1] in succ:
        nxt = succ[order[-1]]
        if nxt == start:
            break
        order.append(nxt)
    if len(order) != len(edges) + (0 if closed else 1):
        raise InvalidArgument(f"segment {tag!r} is not connected")
    pts = nodes[order]
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(steps)])
    length = s[-1]
    if closed:
        length += np.linalg.norm(pts[0] - pts[-1])
    return Segment(tag, _frozen(order, np.int64), _frozen(s, float), closed, float(length))


def build_rect_mesh(nx, ny, x_range=(0.0, 1.0), y_range=(0.0, 1.0), tags=None):
    """Uniform triangulation of a rectangle.

    Each of the ``nx * ny`` cells is split along its lower-left to
    upper-right diagonal. ``tags`` maps ``bottom``, ``top``, ``left`` and
    ``right`` to segment names. Bottom and top are ordered by increasing x,
    left and right by increasing y.
    """
    if nx < 1 or ny < 1:
        raise InvalidArgument("cell counts must be >= 1")
    (x0, x1), (y0, y1) = x_range, y_range
    if not (x1 > x0 and y1 > y0):
        raise InvalidArgument("empty interval")
    tags = dict(DEFAULT_RECT_TAGS if tags is None else tags)
    if set(tags) != set(RECT_SIDES):
        raise InvalidArgument(f"tags must name exactly {RECT_SIDES}")
    if len(set(tags.values())) != 4:
        raise InvalidArgument("rectangle sides need distinct tags")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    n00, n10, n01, n11 = nid(i, j), nid(i + 1, j), nid(i, j + 1), nid(i + 1, j + 1)
    triangles = np.concatenate(
        [np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])]
    )

    ix, iy = np.arange(nx), np.arange(ny)
    sides = {
        "bottom": np.column_stack([nid(ix, 0), nid(ix + 1, 0)]),
        "top": np.column_stack([nid(ix, ny), nid(ix + 1, ny)]),
        "left": np.column_stack([nid(0, iy), nid(0, iy + 1)]),
        "right": np.column_stack([nid(nx, iy), nid(nx, iy + 1)]),
    }
    edges = np.concatenate([sides[s] for s in RECT_SIDES])
    edge_tags = [tags[s] for s in RECT_SIDES for _ in range(len(sides[s]))]
    return Mesh.from_arrays(nodes, triangles, edges, edge_tags)


def build_annulus_mesh(nr, ntheta, r_inner, r_outer, tags=None, split_x=None):
    """Structured polar triangulation of an annulus centred at the origin.

    Rings are equally spaced in r and every ring carries ``ntheta`` nodes at
    angles ``2*pi*j/ntheta``, so the angular direction is periodic. Circles
    are polygonal (nodes lie on the circles, edges are chords).

    ``tags`` maps ``inner`` and ``outer`` to segment names. When ``split_x``
    is given the outer circle is cut into the arc with x < split_x (key
    ``outer_left``) and the arc with x > split_x (key ``outer_right``);
    edges are assigned by the x coordinate of their midpoint. Segments are
    oriented counter-clockwise.
    """
    if nr < 1 or ntheta < 3:
        raise InvalidArgument("need nr >= 1 and ntheta >= 3")
    if not (0 < r_inner < r_outer):
        raise InvalidArgument("radii must satisfy 0 < r_inner < r_outer")
    if tags is None:
        tags = (
            {"inner": "inner", "outer": "outer"}
            if split_x is None
            else {"inner": "inner", "outer_left": "outer_left", "outer_right": "outer_right"}
        )
    tags = dict(tags)
    need = {"inner", "outer"} if split_x is None else {"inner", "outer_left", "outer_right"}
    if set(tags) != need:
        raise InvalidArgument(f"tags must name exactly {sorted(need)}")
    if len(set(tags.values())) != len(tags):
        raise InvalidArgument("annulus segments need distinct tags")

    r = np.linspace(r_inner, r_outer, nr + 1)
    theta = 2 * np.pi * np.arange(ntheta) / ntheta
    R, TH = np.meshgrid(r, theta, indexing="ij")
    nodes = np.column_stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()])

    def nid(i, j):
        return i * ntheta + j % ntheta

    i, j = np.meshgrid(np.arange(nr), np.arange(ntheta), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a, b, c, d = nid(i, j), nid(i, j + 1), nid(i + 1, j + 1), nid(i + 1, j)
    triangles = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    p = nodes[triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    triangles[neg] = triangles[neg][:, [0, 2, 1]]

    jj = np.arange(ntheta)
    inner = np.column_stack([nid(0, jj), nid(0, jj + 1)])
    outer = np.column_stack([nid(nr, jj), nid(nr, jj + 1)])
    edges = [inner]
    edge_tags = [tags["inner"]] * ntheta
    if split_x is None:
        edges.append(outer)
        edge_tags += [tags["outer"]] * ntheta
    else:
        mid_x = 0.5 * (nodes[outer[:, 0], 0] + nodes[outer[:, 1], 0])
        left = mid_x < split_x
        if left.all() or not left.any():
            raise InvalidArgument("split_x does not cut the outer circle")
        edges.append(outer)
        edge_tags += [tags["outer_left"] if lf else tags["outer_right"] for lf in left]
    return Mesh.from_arrays(nodes, triangles, np.concatenate(edges), edge_tags)


def boundary_nodes(mesh, tag):
    """Ordered nodes of segment ``tag`` with their arclength coordinates."""
    try:
        return mesh.segments[tag]
    except KeyError:
        raise NotFound(f"unknown segment tag {tag!r}; mesh has {list(mesh.segments)}") from None


def write_mesh(mesh, path):
    """Write the node, triangle and tagged-edge tables as plain text."""
    lines = [f"nodes {mesh.num_nodes}"]
    lines += [f"{k} {x:.17g} {y:.17g}" for k, (x, y) in enumerate(mesh.nodes)]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [f"{k} {a} {b} {c}" for k, (a, b, c) in enumerate(mesh.triangles)]
    lines.append(f"edges {len(mesh.boundary_edges)}")
    lines += [f"{a} {b} {t}" for (a, b), t in zip(mesh.boundary_edges, mesh.edge_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    rows = Path(path).read_text().split("\n")
    pos = 0

    def table(name):
        nonlocal pos
        head, count = rows[pos].split()
        if head != name:
            raise InvalidArgument(f"expected {name!r} table, got {head!r}")
        body = [r.split() for r in rows[pos + 1 : pos + 1 + int(count)]]
        pos += 1 + int(count)
        return body

    nodes = np.array([[float(x), float(y)] for _, x, y in table("nodes")])
    tris = np.array([[int(a), int(b), int(c)] for _, a, b, c in table("triangles")]).reshape(-1, 3)
    edge_rows = table("edges")
    edges = np.array([[int(a), int(b)] for a, b, _ in edge_rows]).reshape(-1, 2)
    return Mesh.from_arrays(nodes, tris, edges, [t for _, _, t in edge_rows])
