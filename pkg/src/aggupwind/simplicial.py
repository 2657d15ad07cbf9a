"""Forward semi-Lagrangian scheme on conformal triangular meshes (2D).

Each node's mass travels with the node velocity for one step and is split
onto the three summits of the triangle it lands in, in proportion to its
barycentric coordinates.  Ownership of shared edges and vertices goes to the
triangle with the lowest index.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .potential import Potential
from .upwind import CFLError


class MeshError(ValueError):
    pass


def _signed_area(a, b, c) -> float:
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def barycentric(tri, xi):
    """Barycentric coordinates of ``xi`` in the triangle ``tri = (x, y, z)``.

    Signed-area ratios; they sum to one and reconstruct ``xi``.
    """
    x, y, z = (np.asarray(v, dtype=float) for v in tri)
    xi = np.asarray(xi, dtype=float)
    total = _signed_area(x, y, z)
    scale = max(np.ptp(np.array([x, y, z]), axis=0).max(), 1e-300)
    if abs(total) < 1e-14 * scale * scale:
        raise MeshError(f"degenerate triangle {tri!r}")
    l1 = _signed_area(xi, y, z) / total
    l2 = _signed_area(x, xi, z) / total
    # third coordinate by complement keeps the sum exact to rounding
    l3 = 1.0 - l1 - l2
    return l1, l2, l3


def triangle_height(tri) -> float:
    x, y, z = (np.asarray(v, dtype=float) for v in tri)
    area = abs(_signed_area(x, y, z))
    longest = max(np.linalg.norm(y - x), np.linalg.norm(z - y), np.linalg.norm(x - z))
    return 2.0 * area / longest


@dataclass
class TriangularMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    hbar: float = field(init=False)
    longest_edge: float = field(init=False)
    node_stars: list = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = len(self.nodes)
        if len(self.triangles) == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise MeshError("triangle references a missing node")
        stars = [[] for _ in range(n)]
        for k, tri in enumerate(self.triangles):
            if len(set(tri.tolist())) != 3:
                raise MeshError(f"triangle {k} repeats a node")
            for i in tri:
                stars[i].append(k)
        self.node_stars = stars
        heights = [triangle_height(self.nodes[t]) for t in self.triangles]
        self.hbar = float(min(heights))
        pts = self.nodes[self.triangles]
        edges = np.concatenate([pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 1], pts[:, 0] - pts[:, 2]])
        self.longest_edge = float(np.sqrt((edges ** 2).sum(axis=1)).max())
        if not self.hbar > 0:
            raise MeshError("mesh has a degenerate triangle (minimum height 0)")

    def triangle(self, k):
        return self.nodes[self.triangles[k]]

    def contains(self, k: int, y, tol: float = 0.0) -> bool:
        return min(barycentric(self.triangle(k), y)) >= -tol


def structured_mesh(bounds, n_cells) -> TriangularMesh:
    """Split every cell of a Cartesian grid along its rising diagonal.

    Node ``(i, j)`` has index ``i * (ny + 1) + j``.
    """
    (ax, bx), (ay, by) = bounds
    nx, ny = n_cells
    xs = np.linspace(ax, bx, nx + 1)
    ys = np.linspace(ay, by, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    tris = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = (i + 1) * (ny + 1) + j
            c = (i + 1) * (ny + 1) + j + 1
            e = i * (ny + 1) + j + 1
            tris.append((a, b, c))
            tris.append((a, c, e))
    return TriangularMesh(nodes, np.array(tris))


def locate(mesh: TriangularMesh, start_node: int, y) -> int:
    """Owner triangle of ``y`` among the triangles incident to ``start_node``.

    Lowest index wins on shared edges and vertices.  A second pass with a
    1e-12 tolerance absorbs rounding on shared edges.
    """
    star = sorted(mesh.node_stars[start_node])
    for tol in (0.0, 1e-12):
        for k in star:
            if mesh.contains(k, y, tol):
                return k
    raise CFLError(f"point {tuple(np.asarray(y).tolist())} left the star of node {start_node}")


@dataclass
class NodeMeasure:
    """Nonnegative weights on mesh nodes."""
    mesh: TriangularMesh
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.mesh.nodes),):
            raise MeshError("one weight per node expected")

    def atoms(self):
        nz = self.weights != 0
        return self.mesh.nodes[nz], self.weights[nz]

    def mass(self) -> float:
        return math.fsum(self.weights)

    def center_of_mass(self) -> np.ndarray:
        pos, w = self.atoms()
        return np.array([math.fsum(w * pos[:, i]) for i in range(2)])

    def second_moment(self, about=None) -> float:
        pos, w = self.atoms()
        if about is not None:
            pos = pos - np.asarray(about)
        return math.fsum(w * np.sum(pos * pos, axis=1))


def discretize_on_mesh(datum, mesh: TriangularMesh) -> NodeMeasure:
    """Triangle masses assigned to each triangle's lowest-index summit.

    Atoms go to their owner triangle (lowest index among closed triangles);
    densities and box indicators use the centroid rule and are renormalized.
    """
    from .grid import Atoms, Density, IndicatorBoxDifference

    tri_mass = np.zeros(len(mesh.triangles))
    if isinstance(datum, Atoms):
        for x, m in zip(datum.positions, datum.masses):
            for k in range(len(mesh.triangles)):
                if mesh.contains(k, x, 1e-12):
                    tri_mass[k] += m
                    break
            else:
                raise MeshError(f"atom at {x} is outside the mesh")
    elif isinstance(datum, (Density, IndicatorBoxDifference)):
        pts = mesh.nodes[mesh.triangles]
        centroids = pts.mean(axis=1)
        areas = np.abs(0.5 * ((pts[:, 1, 0] - pts[:, 0, 0]) * (pts[:, 2, 1] - pts[:, 0, 1])
                              - (pts[:, 1, 1] - pts[:, 0, 1]) * (pts[:, 2, 0] - pts[:, 0, 0])))
        tri_mass = np.asarray(datum.f(centroids), dtype=float) * areas
    else:
        raise MeshError(f"unsupported initial datum {type(datum).__name__}")
    w = np.zeros(len(mesh.nodes))
    np.add.at(w, mesh.triangles.min(axis=1), tri_mass)
    total = w.sum()
    if not total > 0:
        raise MeshError("initial datum has no mass on the mesh")
    return NodeMeasure(mesh, w / total)


def node_velocity(m: NodeMeasure, p: Potential, nodes=None) -> np.ndarray:
    """``a_i = - sum_j rho_j grad_hat(x_i - x_j)`` at the given nodes."""
    idx = np.flatnonzero(m.weights) if nodes is None else np.asarray(nodes)
    src = np.flatnonzero(m.weights)
    targets = np.ascontiguousarray(m.mesh.nodes[idx])
    sources = np.ascontiguousarray(m.mesh.nodes[src])
    masses = np.ascontiguousarray(m.weights[src])
    if p.code >= 0:
        return kernels.pair_velocity(targets, sources, masses, p.code, p.param)
    diff = targets[:, None, :] - sources[None, :, :]
    return -np.einsum("l,tli->ti", masses, p.grad_hat(diff))


def tri_step(m: NodeMeasure, mesh: TriangularMesh, p: Potential, dt: float) -> NodeMeasure:
    """One forward semi-Lagrangian step; requires ``w_inf * dt <= hbar``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if p.bounded:
        w = float(p.w_inf)
    else:
        pos, _ = m.atoms()
        diam = float(np.max(pos.max(axis=0) - pos.min(axis=0))) if len(pos) else 0.0
        w = p.local_lipschitz(diam + 2.0 * mesh.longest_edge, 2)
    if w * dt > mesh.hbar:
        raise CFLError(f"w_inf * dt = {w * dt!r} exceeds the minimum height {mesh.hbar!r}")
    src = np.flatnonzero(m.weights)
    a = node_velocity(m, p, src)
    new = np.zeros_like(m.weights)
    for i, ai in zip(src, a):
        y = mesh.nodes[i] + dt * ai
        k = locate(mesh, int(i), y)
        lam = barycentric(mesh.triangle(k), y)
        if min(lam) < 0.0:
            # rounding on a shared edge, at most 1e-12
            lam = [max(l, 0.0) for l in lam]
            s = sum(lam)
            lam = [l / s for l in lam]
        rho = m.weights[i]
        for node, l in zip(mesh.triangles[k], lam):
            new[node] += rho * l
    return NodeMeasure(mesh, new)


def interpolation_weights(mesh: TriangularMesh, y, start_node=None) -> dict:
    """``alpha_j(y)`` for all nodes ``j`` with nonzero weight.

    Searches the star of ``start_node`` when given, else every triangle.
    """
    if start_node is not None:
        k = locate(mesh, start_node, y)
    else:
        for k in range(len(mesh.triangles)):
            if mesh.contains(k, y):
                break
        else:
            raise MeshError("point outside the mesh")
    lam = barycentric(mesh.triangle(k), y)
    return {int(j): l for j, l in zip(mesh.triangles[k], lam) if l != 0.0}


# -- mesh files -----------------------------------------------------------


def read_mesh(path) -> TriangularMesh:
    """Text mesh: ``v x y`` lines, then ``t i1 i2 i3`` lines (0-based)."""
    nodes, tris = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v" and len(parts) == 3:
                    nodes.append((float(parts[1]), float(parts[2])))
                elif parts[0] == "t" and len(parts) == 4:
                    tris.append(tuple(int(v) for v in parts[1:]))
                else:
                    raise ValueError
            except ValueError:
                raise MeshError(f"{path}:{lineno}: malformed line {line.rstrip()!r}") from None
    return TriangularMesh(np.array(nodes), np.array(tris))


def write_mesh(mesh: TriangularMesh, path) -> None:
    from .io_utils import atomic_write
    lines = [f"v {float(x)!r} {float(y)!r}" for x, y in mesh.nodes]
    lines += [f"t {a} {b} {c}" for a, b, c in mesh.triangles]
    atomic_write(path, "\n".join(lines) + "\n")


@dataclass
class MeshReport:
    conformal: bool
    hbar: float
    problems: list

    @property
    def ok(self) -> bool:
        return self.conformal and self.hbar > 0


def validate_mesh(mesh: TriangularMesh) -> MeshReport:
    """Check edge sharing, fold-overs and hanging nodes; report ``hbar``."""
    problems = []
    edges = defaultdict(list)
    for k, (a, b, c) in enumerate(mesh.triangles):
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            edges[(min(u, v), max(u, v))].append((k, w))
    for (u, v), owners in edges.items():
        if len(owners) > 2:
            problems.append(f"edge ({u}, {v}) shared by {len(owners)} triangles")
        elif len(owners) == 2:
            pu, pv = mesh.nodes[u], mesh.nodes[v]
            s1 = _signed_area(pu, pv, mesh.nodes[owners[0][1]])
            s2 = _signed_area(pu, pv, mesh.nodes[owners[1][1]])
            if s1 * s2 >= 0:
                problems.append(f"triangles {owners[0][0]} and {owners[1][0]} overlap across edge ({u}, {v})")
    # hanging nodes: a node strictly inside an edge it does not bound
    h = max(mesh.longest_edge, 1e-300)
    buckets = defaultdict(list)
    for i, (x, y) in enumerate(mesh.nodes):
        buckets[(math.floor(x / h), math.floor(y / h))].append(i)
    for (u, v) in edges:
        pu, pv = mesh.nodes[u], mesh.nodes[v]
        length = np.linalg.norm(pv - pu)
        bx = range(math.floor(min(pu[0], pv[0]) / h), math.floor(max(pu[0], pv[0]) / h) + 1)
        by = range(math.floor(min(pu[1], pv[1]) / h), math.floor(max(pu[1], pv[1]) / h) + 1)
        for cx in bx:
            for cy in by:
                for i in buckets.get((cx, cy), ()):
                    if i in (u, v):
                        continue
                    q = mesh.nodes[i]
                    cross = abs((pv[0] - pu[0]) * (q[1] - pu[1]) - (pv[1] - pu[1]) * (q[0] - pu[0]))
                    s = np.dot(q - pu, pv - pu) / (length * length)
                    if cross <= 1e-12 * length * length and 0 < s < 1:
                        problems.append(f"node {i} lies on the open edge ({u}, {v})")
    return MeshReport(conformal=not problems, hbar=mesh.hbar, problems=problems)
