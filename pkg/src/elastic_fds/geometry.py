"""Polygonal boundary meshes, aligned cluster trees and proxy circles."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)


class BoundaryMesh:
    """Closed polygon with ``N`` nodes and ``N`` straight elements.

    Element ``s`` joins nodes ``s`` and ``s + 1 (mod N)``, nodes run
    counter-clockwise and the unit normal of every element points into the
    enclosed region (the inclusion).
    """

    def __init__(self, nodes):
        nodes = np.ascontiguousarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2 or len(nodes) < 3:
            raise ValueError("nodes must be an (N, 2) array with N >= 3")
        n = len(nodes)
        self.nodes = nodes
        self.elements = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
        a = nodes
        b = np.roll(nodes, -1, axis=0)
        d = b - a
        self.lengths = np.hypot(d[:, 0], d[:, 1])
        if np.any(self.lengths <= 0):
            raise ValueError("zero-length element in mesh")
        self.tangents = d / self.lengths[:, None]
        # left normal of a counter-clockwise polygon points inwards
        self.normals = np.stack([-self.tangents[:, 1], self.tangents[:, 0]], axis=1)
        self.centroids = 0.5 * (a + b)
        area = 0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1])
        if area <= 0:
            raise ValueError("mesh nodes must be ordered counter-clockwise")
        for arr in (self.nodes, self.lengths, self.normals, self.centroids):
            arr.flags.writeable = False

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def dof(self) -> int:
        return 4 * self.N

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    def node_support(self, idx):
        """Elements forming the support of the hat functions at nodes ``idx``."""
        idx = np.asarray(idx)
        return np.concatenate([(idx - 1) % self.N, idx])

    def contains(self, points) -> np.ndarray:
        """Winding-number test: True for points enclosed by the polygon."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.nodes[None, :, :] - p[:, None, :]
        b = np.roll(self.nodes, -1, axis=0)[None, :, :] - p[:, None, :]
        ang = np.arctan2(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
                         a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1])
        return np.abs(ang.sum(axis=1)) > math.pi

    def distance(self, points) -> np.ndarray:
        """Distance from each point to the polygon."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.nodes[None, :, :]
        d = (self.tangents * self.lengths[:, None])[None, :, :]
        s = np.einsum("pek,pek->pe", p[:, None, :] - a, d) / self.lengths[None, :] ** 2
        s = np.clip(s, 0.0, 1.0)
        q = a + s[..., None] * d
        return np.min(np.hypot(*(p[:, None, :] - q).transpose(2, 0, 1)), axis=1)


def make_circle_mesh(N: int, radius: float = 1.0, center=(0.0, 0.0)) -> BoundaryMesh:
    """Regular N-gon inscribed in a circle (the unit circle by default)."""
    if N < 8:
        raise ValueError("circle mesh needs N >= 8")
    th = 2 * np.pi * np.arange(N) / N
    c = np.asarray(center, dtype=float)
    return BoundaryMesh(c + radius * np.stack([np.cos(th), np.sin(th)], axis=1))


def make_square_mesh(N: int, side: float = 1.0, center=(0.0, 0.0)) -> BoundaryMesh:
    """Axis-aligned square with N/4 equal elements per side, first node at the lower-left corner."""
    if N < 4 or N % 4:
        raise ValueError("square mesh needs N divisible by 4")
    m = N // 4
    s = np.arange(m) / m
    h = side / 2
    lo = -h + side * s
    hi = h - side * s
    pts = np.concatenate([
        np.stack([lo, np.full(m, -h)], axis=1),
        np.stack([np.full(m, h), lo], axis=1),
        np.stack([hi, np.full(m, h)], axis=1),
        np.stack([np.full(m, -h), hi], axis=1),
    ])
    return BoundaryMesh(pts + np.asarray(center, dtype=float))


def read_mesh(path) -> BoundaryMesh:
    """Read the plain-text mesh format.

    Line 1 holds ``N_n N_e``, followed by ``N_n`` coordinate lines and
    ``N_e`` lines of 1-based node pairs.  Nodes are renumbered along the
    element cycle starting from the first element.
    """
    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().split()
    nn, ne = int(tokens[0]), int(tokens[1])
    if nn != ne:
        raise ValueError("closed boundary requires N_n == N_e")
    vals = tokens[2:]
    coords = np.array(vals[:2 * nn], dtype=float).reshape(nn, 2)
    conn = np.array(vals[2 * nn:2 * nn + 2 * ne], dtype=int).reshape(ne, 2) - 1
    if conn.min() < 0 or conn.max() >= nn:
        raise ValueError("element refers to a missing node")
    nxt = np.full(nn, -1)
    for i, j in conn:
        if nxt[i] != -1:
            raise ValueError(f"node {i + 1} starts more than one element")
        nxt[i] = j
    if np.any(nxt < 0) or len(set(nxt.tolist())) != nn:
        raise ValueError("elements do not form a closed cycle")
    order = [int(conn[0, 0])]
    while len(order) < nn:
        order.append(int(nxt[order[-1]]))
    if nxt[order[-1]] != order[0] or len(set(order)) != nn:
        raise ValueError("elements form more than one cycle")
    return BoundaryMesh(coords[order])


def write_mesh(mesh: BoundaryMesh, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{mesh.N} {mesh.N}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j in mesh.elements + 1:
            fh.write(f"{i} {j}\n")


# ---------------------------------------------------------------------------
# cluster tree

@dataclass
class ClusterTree:
    """Binary tree of contiguous index ranges.

    ``ranges[d]`` lists the ``(start, stop)`` pairs of the ``2**d`` cells at
    depth ``d``; depth 0 is the root and the last depth holds the leaves.
    The same ranges index nodes (piecewise-linear functions) and elements
    (piecewise-constant functions).
    """

    N: int
    ranges: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.ranges) - 1

    @property
    def levels(self) -> int:
        return len(self.ranges)

    @property
    def leaves(self):
        return self.ranges[-1]

    node_ranges = property(lambda self: self.ranges)
    element_ranges = property(lambda self: self.ranges)

    def children(self, depth: int, cell: int):
        return 2 * cell, 2 * cell + 1


def build_tree(mesh_or_n, leaf_size: int = 100) -> ClusterTree:
    """Uniform bisection of 0..N-1 down to leaves of roughly ``leaf_size``."""
    N = mesh_or_n if isinstance(mesh_or_n, (int, np.integer)) else mesh_or_n.N
    if not 4 <= leaf_size <= N:
        raise ValueError("leaf_size must satisfy 4 <= leaf_size <= N")
    depth = 0
    while N // 2 ** (depth + 1) >= leaf_size:
        depth += 1
    ranges = [[(0, N)]]
    for _ in range(depth):
        nxt = []
        for a, b in ranges[-1]:
            m = a + (b - a) // 2
            nxt += [(a, m), (m, b)]
        ranges.append(nxt)
    return ClusterTree(N=N, ranges=ranges)


# ---------------------------------------------------------------------------
# proxy circles

@dataclass
class ProxySurface:
    center: np.ndarray
    radius: float
    mesh: BoundaryMesh
    near_phi: np.ndarray
    near_psi: np.ndarray
    degenerate: bool = False


def _support_points(mesh: BoundaryMesh, phi, psi):
    elems = np.unique(np.concatenate([mesh.node_support(phi), np.asarray(psi, dtype=int)]))
    return elems, np.concatenate([mesh.nodes[elems], mesh.nodes[(elems + 1) % mesh.N]])


def _segments_hit_disk(mesh, elems, center, radius):
    """True for elements that come strictly closer than ``radius`` to ``center``."""
    a = mesh.nodes[elems]
    d = mesh.tangents[elems] * mesh.lengths[elems, None]
    s = np.clip(np.einsum("ek,ek->e", center - a, d) / mesh.lengths[elems] ** 2, 0.0, 1.0)
    q = a + s[:, None] * d
    return np.hypot(*(q - center).T) < radius


def build_proxy(mesh: BoundaryMesh, phi, psi, radius_factor: float = 1.75,
                proxy_points: int = 64, others_phi=None, others_psi=None,
                near_index: "NearFieldIndex | None" = None, owner=None) -> ProxySurface:
    """Proxy circle around the supports of the functions ``phi`` (nodes) and ``psi`` (elements).

    ``others_phi`` / ``others_psi`` are the active functions of all other
    cells; those whose support reaches inside the circle form the near field.
    Alternatively ``near_index`` supplies them, excluding functions of ``owner``.
    """
    if radius_factor <= 1:
        raise ValueError("radius_factor must exceed 1")
    if proxy_points < 16:
        raise ValueError("proxy_points must be at least 16")
    _, pts = _support_points(mesh, phi, psi)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    radius = radius_factor * 0.5 * float(np.hypot(*(hi - lo)))
    proxy = make_circle_mesh(proxy_points, radius, center)
    degenerate = bool(np.all(np.hypot(*(mesh.nodes - center).T) < radius))
    if degenerate:
        log.info("proxy circle encloses the whole boundary; level solved densely")
    near_phi = np.zeros(0, dtype=int)
    near_psi = np.zeros(0, dtype=int)
    if near_index is not None:
        others_phi, others_psi = near_index.candidates(center, radius, owner)
    if others_phi is not None and len(others_phi):
        op = np.asarray(others_phi, dtype=int)
        hit = _segments_hit_disk(mesh, (op - 1) % mesh.N, center, radius) | \
            _segments_hit_disk(mesh, op, center, radius)
        near_phi = op[hit]
    if others_psi is not None and len(others_psi):
        oe = np.asarray(others_psi, dtype=int)
        near_psi = oe[_segments_hit_disk(mesh, oe, center, radius)]
    return ProxySurface(center=center, radius=radius, mesh=proxy, near_phi=near_phi,
                        near_psi=near_psi, degenerate=degenerate)


class NearFieldIndex:
    """Spatial lookup of the active functions of all cells at one level."""

    def __init__(self, mesh: BoundaryMesh, phi, psi, phi_owner, psi_owner):
        self.mesh = mesh
        self.phi = np.asarray(phi, dtype=int)
        self.psi = np.asarray(psi, dtype=int)
        self.phi_owner = np.asarray(phi_owner)
        self.psi_owner = np.asarray(psi_owner)
        # supports lie within this distance of the node / element midpoint
        self.reach = float(mesh.lengths.max())
        self._tphi = cKDTree(mesh.nodes[self.phi]) if len(self.phi) else None
        self._tpsi = cKDTree(mesh.centroids[self.psi]) if len(self.psi) else None

    def candidates(self, center, radius, owner=None):
        """Functions of other cells that may reach inside the disk."""
        out = []
        for tree, ids, own in ((self._tphi, self.phi, self.phi_owner),
                               (self._tpsi, self.psi, self.psi_owner)):
            if tree is None:
                out.append(np.zeros(0, dtype=int))
                continue
            hit = np.asarray(tree.query_ball_point(center, radius + self.reach), dtype=int)
            hit = hit[own[hit] != owner] if owner is not None else hit
            out.append(np.sort(ids[hit]))
        return out[0], out[1]
