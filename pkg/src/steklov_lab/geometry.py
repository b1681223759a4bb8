"""Triangular meshes of the model domains (disk, rectangle, convex polygon).

Meshes are immutable: arrays are frozen on construction and derived
topology (edge lists, boundary cycle, Agmon graph) is cached lazily.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Invalid domain specification or mesh data."""


class DomainKind(str, enum.Enum):
    DISK = "unit-disk"
    RECTANGLE = "rectangle"
    POLYGON = "polygon"


@dataclass(frozen=True)
class DomainSpec:
    """A bounded planar domain.

    ``parameters`` holds ``[radius]`` for a disk centred at the origin,
    ``[x0, y0, x1, y1]`` for a rectangle, and flattened counterclockwise
    corners ``[x0, y0, x1, y1, ...]`` for a convex polygon.
    """

    kind: DomainKind
    parameters: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        object.__setattr__(self, "parameters", tuple(float(p) for p in self.parameters))
        if self.kind is DomainKind.DISK:
            if len(self.parameters) != 1 or not self.parameters[0] > 0:
                raise MeshError("disk needs a single positive radius")
        elif self.kind is DomainKind.RECTANGLE:
            if len(self.parameters) != 4:
                raise MeshError("rectangle needs [x0, y0, x1, y1]")
            x0, y0, x1, y1 = self.parameters
            if not (x1 > x0 and y1 > y0):
                raise MeshError("rectangle corners must satisfy x1 > x0, y1 > y0")
        else:
            _check_convex_polygon(self.corners)

    @classmethod
    def disk(cls, radius: float = 1.0) -> "DomainSpec":
        return cls(DomainKind.DISK, (radius,))

    @classmethod
    def rectangle(cls, x0=0.0, y0=0.0, x1=1.0, y1=1.0) -> "DomainSpec":
        return cls(DomainKind.RECTANGLE, (x0, y0, x1, y1))

    @classmethod
    def polygon(cls, corners) -> "DomainSpec":
        return cls(DomainKind.POLYGON, tuple(np.asarray(corners, float).ravel()))

    @property
    def corners(self) -> np.ndarray:
        if self.kind is DomainKind.RECTANGLE:
            x0, y0, x1, y1 = self.parameters
            return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        if self.kind is DomainKind.POLYGON:
            if len(self.parameters) % 2:
                raise MeshError("polygon corners must come in (x, y) pairs")
            return np.asarray(self.parameters, float).reshape(-1, 2)
        raise MeshError("a disk has no corners")

    @property
    def diameter(self) -> float:
        if self.kind is DomainKind.DISK:
            return 2.0 * self.parameters[0]
        c = self.corners
        return float(np.max(np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)))

    @property
    def perimeter(self) -> float:
        if self.kind is DomainKind.DISK:
            return 2.0 * math.pi * self.parameters[0]
        c = self.corners
        return float(np.sum(np.linalg.norm(np.roll(c, -1, axis=0) - c, axis=1)))

    def distance_to_boundary(self, points) -> np.ndarray:
        """Euclidean distance from interior points to the boundary curve."""
        p = np.atleast_2d(np.asarray(points, float))
        if self.kind is DomainKind.DISK:
            return np.abs(self.parameters[0] - np.linalg.norm(p, axis=1))
        c = self.corners
        a, b = c, np.roll(c, -1, axis=0)
        ab = b - a
        t = np.einsum("nkd,kd->nk", p[:, None, :] - a[None], ab) / np.sum(ab * ab, axis=1)
        t = np.clip(t, 0.0, 1.0)
        proj = a[None] + t[..., None] * ab[None]
        return np.min(np.linalg.norm(p[:, None, :] - proj, axis=-1), axis=1)


def _check_convex_polygon(corners: np.ndarray) -> None:
    if corners.ndim != 2 or len(corners) < 3:
        raise MeshError("polygon needs at least three corners")
    nxt = np.roll(corners, -1, axis=0)
    prv = np.roll(corners, 1, axis=0)
    e1 = corners - prv
    e2 = nxt - corners
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    if np.any(scale == 0):
        raise MeshError("polygon has repeated corners")
    rel = cross / scale
    if np.any(np.abs(rel) < 1e-12):
        i = int(np.argmin(np.abs(rel)))
        raise MeshError(f"degenerate polygon: corners {i - 1}, {i}, {i + 1} are collinear")
    if np.any(rel < 0):
        raise MeshError("polygon must be convex with counterclockwise corners")


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices[triangles[:, k]] for k in range(3))
    d1, d2 = p1 - p0, p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation with an oriented boundary cycle.

    ``boundary_edges`` are ordered so that consecutive edges chain
    counterclockwise around the domain; ``normals`` holds the outward unit
    normal of each boundary edge.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    normals: np.ndarray
    h: float
    domain: DomainSpec | None = field(default=None, compare=False)

    @classmethod
    def from_triangles(cls, vertices, triangles, domain: DomainSpec | None = None) -> "Mesh":
        """Build a mesh, orienting triangles and extracting the boundary cycle."""
        vertices = np.asarray(vertices, float)
        triangles = np.asarray(triangles, np.int64).copy()
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (V, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise MeshError("triangles must be a nonempty (F, 3) array")
        area = _signed_areas(vertices, triangles)
        if np.any(area == 0):
            raise MeshError("mesh contains degenerate triangles")
        flip = area < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]

        # directed half-edges; a boundary edge has no reversed twin
        he = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
        v = len(vertices)
        key = he[:, 0] * v + he[:, 1]
        twin = he[:, 1] * v + he[:, 0]
        if len(np.unique(key)) != len(key):
            raise MeshError("mesh is not a consistently oriented manifold")
        bnd = he[~np.isin(key, twin)]
        edges = _chain_cycle(bnd)
        normals = _edge_normals(vertices, edges)
        lengths = np.linalg.norm(vertices[he[:, 1]] - vertices[he[:, 0]], axis=1)
        return cls(
            vertices=_frozen(vertices, float),
            triangles=_frozen(triangles, np.int64),
            boundary_edges=_frozen(edges, np.int64),
            normals=_frozen(normals, float),
            h=float(lengths.max()),
            domain=domain,
        )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @cached_property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        """Boundary vertices in counterclockwise cycle order."""
        return self.boundary_edges[:, 0].copy()

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, bool)
        mask[self.boundary_vertices] = False
        return np.flatnonzero(mask)

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, bool)
        mask[self.boundary_vertices] = True
        return mask

    @cached_property
    def boundary_edge_lengths(self) -> np.ndarray:
        p = self.vertices
        return np.linalg.norm(p[self.boundary_edges[:, 1]] - p[self.boundary_edges[:, 0]], axis=1)

    @cached_property
    def boundary_length(self) -> float:
        return float(self.boundary_edge_lengths.sum())

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle (degrees) of each triangle."""
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
        return np.min(angles, axis=0)

    @cached_property
    def agmon_edges(self) -> np.ndarray:
        """Mesh edges plus the opposite-vertex diagonal of every interior edge."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        opp = np.concatenate([t[:, 2], t[:, 0], t[:, 1]])
        key = np.sort(e, axis=1)
        order = np.lexsort((key[:, 1], key[:, 0]))
        key, opp = key[order], opp[order]
        same = np.all(key[1:] == key[:-1], axis=1)
        diag = np.stack([opp[:-1][same], opp[1:][same]], axis=1)
        allp = np.concatenate([self.edges, np.sort(diag, axis=1)])
        return np.unique(allp, axis=0)


def _chain_cycle(bnd: np.ndarray) -> np.ndarray:
    if len(bnd) < 3:
        raise MeshError("boundary has fewer than three edges")
    nxt = {}
    for a, b in bnd:
        if a in nxt:
            raise MeshError(f"boundary vertex {a} is pinched")
        nxt[int(a)] = int(b)
    start = int(bnd[:, 0].min())
    cycle = [start]
    while True:
        b = nxt[cycle[-1]]
        if b == start:
            break
        cycle.append(b)
        if len(cycle) > len(bnd):
            raise MeshError("boundary edges do not close")
    if len(cycle) != len(bnd):
        raise MeshError("boundary is not a single closed curve")
    c = np.asarray(cycle)
    return np.stack([c, np.roll(c, -1)], axis=1)


def _edge_normals(vertices: np.ndarray, edges: np.ndarray) -> np.ndarray:
    t = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    n = np.stack([t[:, 1], -t[:, 0]], axis=1)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def boundary_normals(mesh: Mesh) -> np.ndarray:
    """Outward unit normal of each boundary edge, in ``mesh.boundary_edges`` order."""
    return mesh.normals


# -- construction -----------------------------------------------------------

def build_mesh(
    spec: DomainSpec,
    h: float,
    h_boundary: float | None = None,
    grading: float = 0.25,
) -> Mesh:
    """Triangulate ``spec`` with target edge length ``h``.

    For the disk, ``h_boundary`` < ``h`` requests rings that are finer near the
    circle, growing linearly with depth at rate ``grading`` until ``h`` is
    reached. Other domains ignore it.
    """
    if not (h > 0 and math.isfinite(h)):
        raise MeshError(f"mesh size must be positive, got h={h}")
    if h >= spec.diameter:
        raise MeshError(f"mesh size h={h} is not smaller than the domain diameter")
    if spec.kind is DomainKind.DISK:
        if h_boundary is not None and not (0 < h_boundary <= h):
            raise MeshError("h_boundary must lie in (0, h]")
        return _disk_mesh(spec, h, h_boundary or h, grading)
    if spec.kind is DomainKind.RECTANGLE:
        return _rectangle_mesh(spec, h)
    return _polygon_mesh(spec, h)


def _disk_mesh(spec: DomainSpec, h: float, hb: float, grading: float) -> Mesh:
    radius = spec.parameters[0]

    def size(depth):
        return min(h, hb + grading * depth)

    # ring depths equidistribute the step count N(d) = int dd / (equilateral height)
    depth = np.linspace(0.0, radius, 4001)
    height = 0.5 * math.sqrt(3.0) * np.minimum(h, hb + grading * depth)
    steps = np.concatenate([[0.0], np.cumsum(np.diff(depth) * 0.5 * (1 / height[1:] + 1 / height[:-1]))])
    n_rings = max(1, int(math.ceil(steps[-1])))
    ring_depth = np.interp(np.linspace(0.0, steps[-1], n_rings + 1)[:-1], steps, depth)
    radii = radius - ring_depth

    counts = [max(6, int(math.ceil(2 * math.pi * r / size(radius - r)))) for r in radii]
    if len(counts) > 1:
        counts[0] = max(counts[0], counts[1])

    pts = [np.zeros((1, 2))]
    ring_ids = []
    offset = 1
    rings = list(zip(radii[::-1], counts[::-1]))
    for k, (r, n) in enumerate(rings):
        shift = 0.5 * (k % 2) * 2 * math.pi / n
        theta = shift + 2 * math.pi * np.arange(n) / n
        pts.append(r * np.stack([np.cos(theta), np.sin(theta)], axis=1))
        ring_ids.append((offset + np.arange(n), theta))
        offset += n
    vertices = np.concatenate(pts)

    tris = []
    first_ids, _ = ring_ids[0]
    n0 = len(first_ids)
    tris.extend((0, first_ids[i], first_ids[(i + 1) % n0]) for i in range(n0))
    for (inner, th_in), (outer, th_out) in zip(ring_ids[:-1], ring_ids[1:]):
        tris.extend(_zip_rings(outer, th_out, inner, th_in))

    # snap outer ring onto the circle
    outer_ids = ring_ids[-1][0]
    p = vertices[outer_ids]
    vertices[outer_ids] = radius * p / np.linalg.norm(p, axis=1, keepdims=True)
    return Mesh.from_triangles(vertices, np.asarray(tris), domain=spec)


def _zip_rings(a_ids, a_theta, b_ids, b_theta):
    """Triangulate the annulus strip between two rings by a merge walk."""
    na, nb = len(a_ids), len(b_ids)
    a0 = a_theta[0]
    rel = np.mod(b_theta - a0 + math.pi, 2 * math.pi) - math.pi
    j0 = int(np.argmin(np.abs(rel)))
    b_ids = np.roll(b_ids, -j0)
    bt = np.unwrap(np.roll(b_theta, -j0))
    bt = bt - bt[0] + a0 + rel[j0]
    at = a_theta - a_theta[0] + a0
    a_ext = np.append(at, at[0] + 2 * math.pi)
    b_ext = np.append(bt, bt[0] + 2 * math.pi)
    i = j = 0
    out = []
    while i < na or j < nb:
        take_a = j >= nb or (i < na and a_ext[i + 1] <= b_ext[j + 1])
        if take_a:
            out.append((a_ids[i % na], a_ids[(i + 1) % na], b_ids[j % nb]))
            i += 1
        else:
            out.append((a_ids[i % na], b_ids[(j + 1) % nb], b_ids[j % nb]))
            j += 1
    return out


def _rectangle_mesh(spec: DomainSpec, h: float) -> Mesh:
    x0, y0, x1, y1 = spec.parameters
    nx = max(1, int(math.ceil((x1 - x0) / h)))
    ny = max(1, int(math.ceil((y1 - y0) / h)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return Mesh.from_triangles(vertices, np.asarray(tris), domain=spec)


def _polygon_mesh(spec: DomainSpec, h: float) -> Mesh:
    corners = spec.corners
    centre = corners.mean(axis=0)
    k = len(corners)
    spokes = np.linalg.norm(corners - centre, axis=1)
    sides = np.linalg.norm(np.roll(corners, -1, axis=0) - corners, axis=1)
    n = max(1, int(math.ceil(max(spokes.max(), sides.max()) / h)))

    ij = [(i, j) for i in range(n + 1) for j in range(n + 1 - i)]
    local = {p: q for q, p in enumerate(ij)}
    pts, tris = [], []
    for s in range(k):
        p, q = corners[s] - centre, corners[(s + 1) % k] - centre
        base = s * len(ij)
        for i, j in ij:
            pts.append(centre + (i / n) * p + (j / n) * q)
        for i in range(n):
            for j in range(n - i):
                tris.append((base + local[(i, j)], base + local[(i + 1, j)], base + local[(i, j + 1)]))
                if i + j < n - 1:
                    tris.append((base + local[(i + 1, j)], base + local[(i + 1, j + 1)], base + local[(i, j + 1)]))
    pts = np.asarray(pts)
    scale = max(1.0, float(np.abs(corners).max()))
    _, first, inverse = np.unique(np.round(pts / scale, 11), axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    vertices = pts[first[order]]
    tris = remap[inverse.ravel()][np.asarray(tris)]
    return Mesh.from_triangles(vertices, tris, domain=spec)


# -- text format --------------------------------------------------------------

def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text mesh format (0-based indices)."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)} {mesh.h!r}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [
        f"{i} {j} {nx!r} {ny!r}"
        for (i, j), (nx, ny) in zip(mesh.boundary_edges.tolist(), mesh.normals.tolist())
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    """Read a mesh written by :func:`write_mesh`."""
    rows = Path(path).read_text().split("\n")
    try:
        nv, nf, nb, h = rows[0].split()
        nv, nf, nb = int(nv), int(nf), int(nb)
        body = rows[1:]
        verts = np.array([list(map(float, r.split())) for r in body[:nv]])
        tris = np.array([list(map(int, r.split())) for r in body[nv:nv + nf]], dtype=np.int64)
        bnd = [r.split() for r in body[nv + nf:nv + nf + nb]]
        edges = np.array([[int(a), int(b)] for a, b, _, _ in bnd], dtype=np.int64)
        normals = np.array([[float(x), float(y)] for _, _, x, y in bnd])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if verts.shape != (nv, 2) or tris.shape != (nf, 3) or edges.shape != (nb, 2):
        raise MeshError(f"mesh file {path} has inconsistent counts")
    return Mesh(
        vertices=_frozen(verts, float),
        triangles=_frozen(tris, np.int64),
        boundary_edges=_frozen(edges, np.int64),
        normals=_frozen(normals, float),
        h=float(h),
    )
