"""Planar triangle meshes, boundary loops and boundary-edge data.

All boundary integrals in the package go through :class:`BoundaryFunction`,
which stores one value per boundary edge together with the edge lengths of
the owning mesh.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay


class MeshError(ValueError):
    """Base class for mesh ingestion failures."""


class MeshParseError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MeshTopologyError(MeshError):
    pass


class DegenerateTriangleError(MeshError):
    pass


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of a simply connected polygon.

    Triangles are stored counterclockwise. ``boundary_edges`` is the single
    closed boundary loop, oriented counterclockwise, as ``(start, end)``
    vertex pairs; edge ``k`` ends where edge ``k + 1`` starts.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_lengths: np.ndarray
    outward_normals: np.ndarray
    tag: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.boundary_edges)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.edge_lengths))

    @property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return self.boundary_edges[:, 0]

    @property
    def edge_midpoints(self) -> np.ndarray:
        v = self.vertices
        return 0.5 * (v[self.boundary_edges[:, 0]] + v[self.boundary_edges[:, 1]])

    @property
    def h(self) -> float:
        """Longest triangle edge."""
        v, t = self.vertices, self.triangles
        lens = [np.linalg.norm(v[t[:, i]] - v[t[:, (i + 1) % 3]], axis=1) for i in range(3)]
        return float(np.max(lens))

    def constant(self, c: float) -> "BoundaryFunction":
        return BoundaryFunction(np.full(self.n_edges, float(c)), self)

    def boundary_function(self, values) -> "BoundaryFunction":
        return BoundaryFunction(values, self)


@dataclass(frozen=True, eq=False)
class BoundaryFunction:
    """Piecewise-constant function on the boundary edges of ``mesh``."""

    values: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        values = _frozen(self.values, float)
        if values.shape != (self.mesh.n_edges,):
            raise ValueError(
                f"expected {self.mesh.n_edges} edge values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("boundary values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def measures(self) -> np.ndarray:
        return self.mesh.edge_lengths

    def __mul__(self, c: float) -> "BoundaryFunction":
        return BoundaryFunction(self.values * c, self.mesh)

    __rmul__ = __mul__

    def __neg__(self) -> "BoundaryFunction":
        return BoundaryFunction(-self.values, self.mesh)

    def __abs__(self) -> "BoundaryFunction":
        return BoundaryFunction(np.abs(self.values), self.mesh)

    def __pow__(self, r: float) -> "BoundaryFunction":
        return BoundaryFunction(np.abs(self.values) ** r, self.mesh)

    def positive_part(self) -> "BoundaryFunction":
        return BoundaryFunction(np.maximum(self.values, 0.0), self.mesh)

    def negative_part(self) -> "BoundaryFunction":
        return BoundaryFunction(np.maximum(-self.values, 0.0), self.mesh)


def boundary_integral(f: BoundaryFunction) -> float:
    """Integral of ``f`` over the boundary: sum of value times edge length."""
    return float(np.dot(f.values, f.measures))


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - p0
    e2 = vertices[triangles[:, 2]] - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_mesh(vertices, triangles, tag: str = "custom", params: dict | None = None) -> Mesh:
    """Validate a triangulation and derive its boundary loop.

    Clockwise triangles are reoriented. Raises :class:`MeshTopologyError` for
    out-of-range indices, non-manifold edges or a boundary that is not a
    single closed loop, and :class:`DegenerateTriangleError` for triangles
    with area at most ``1e-14`` times the bounding-box area.
    """
    v = np.asarray(vertices, dtype=float)
    t = np.asarray(triangles, dtype=np.int64)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise MeshTopologyError("need at least three 2D vertices")
    if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
        raise MeshTopologyError("need at least one triangle")
    bad = (t < 0) | (t >= len(v))
    if np.any(bad):
        k = int(np.argmax(bad.any(axis=1)))
        raise MeshTopologyError(f"triangle {k} references a missing vertex: {t[k].tolist()}")
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        raise MeshTopologyError("triangle with repeated vertex")

    areas = _signed_areas(v, t)
    bbox = np.ptp(v, axis=0)
    tiny = 1e-14 * bbox[0] * bbox[1]
    if np.any(np.abs(areas) <= tiny):
        k = int(np.argmax(np.abs(areas) <= tiny))
        raise DegenerateTriangleError(f"triangle {k} has area {areas[k]:.3e}")
    t = t.copy()
    cw = areas < 0
    t[cw] = t[cw][:, [0, 2, 1]]

    # directed edges of CCW triangles; a boundary edge has no reversed twin
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise MeshTopologyError("non-manifold edge shared by more than two triangles")
    bnd = directed[counts[inverse] == 1]
    if len(bnd) < 3:
        raise MeshTopologyError("mesh has no boundary loop")

    nxt = {}
    for a, b in bnd:
        if a in nxt:
            raise MeshTopologyError(f"boundary vertex {a} has two outgoing boundary edges")
        nxt[int(a)] = int(b)
    start = int(bnd[np.argmin(bnd[:, 0])][0])
    loop = []
    a = start
    for _ in range(len(bnd)):
        b = nxt.get(a)
        if b is None:
            raise MeshTopologyError(f"open boundary loop at vertex {a}")
        loop.append((a, b))
        a = b
        if a == start:
            break
    if a != start:
        raise MeshTopologyError("open boundary loop")
    if len(loop) != len(bnd):
        raise MeshTopologyError("boundary consists of more than one loop")

    loop = np.array(loop, dtype=np.int64)
    d = v[loop[:, 1]] - v[loop[:, 0]]
    lengths = np.hypot(d[:, 0], d[:, 1])
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
    return Mesh(
        vertices=_frozen(v, float),
        triangles=_frozen(t, np.int64),
        boundary_edges=_frozen(loop, np.int64),
        edge_lengths=_frozen(lengths, float),
        outward_normals=_frozen(normals, float),
        tag=tag,
        params=dict(params or {}),
    )


def load_mesh(path) -> Mesh:
    """Read the text format: ``nv nt``, then ``nv`` lines ``x y``, then ``nt`` lines ``i j k``."""
    lines = Path(path).read_text().splitlines()
    rows = [(i + 1, ln.split()) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise MeshParseError("empty mesh file", 1)

    def ints(lineno, tok, n):
        if len(tok) != n:
            raise MeshParseError(f"expected {n} integers, got {len(tok)} fields", lineno)
        try:
            return [int(x) for x in tok]
        except ValueError as exc:
            raise MeshParseError(str(exc), lineno) from None

    lineno, tok = rows[0]
    nv, nt = ints(lineno, tok, 2)
    if len(rows) < 1 + nv + nt:
        last = rows[-1][0]
        raise MeshParseError(f"expected {nv} vertices and {nt} triangles, file ends early", last + 1)
    verts = []
    for lineno, tok in rows[1 : 1 + nv]:
        if len(tok) != 2:
            raise MeshParseError(f"expected 2 coordinates, got {len(tok)} fields", lineno)
        try:
            verts.append([float(x) for x in tok])
        except ValueError as exc:
            raise MeshParseError(str(exc), lineno) from None
    tris = [ints(lineno, tok, 3) for lineno, tok in rows[1 + nv : 1 + nv + nt]]
    if len(rows) > 1 + nv + nt:
        raise MeshParseError("trailing content after triangles", rows[1 + nv + nt][0])
    return build_mesh(verts, tris, tag="file", params={"path": str(path)})


def save_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {len(mesh.triangles)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


# ---------------------------------------------------------------- generators


def rectangle_mesh(x0: float, x1: float, y0: float, y1: float, nx: int, ny: int,
                   tag: str = "rect", params: dict | None = None,
                   xs: np.ndarray | None = None, ys: np.ndarray | None = None) -> Mesh:
    """Structured triangulation; ``xs``/``ys`` override the uniform grid lines."""
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell per side")
    xs = np.linspace(x0, x1, nx + 1) if xs is None else np.asarray(xs, dtype=float)
    ys = np.linspace(y0, y1, ny + 1) if ys is None else np.asarray(ys, dtype=float)
    if len(xs) != nx + 1 or len(ys) != ny + 1:
        raise ValueError("grid lines do not match the cell counts")
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    # alternate diagonals so the mesh is symmetric under x -> -x
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    flip = ((i + j) % 2 == 1).ravel() if nx > 1 else np.zeros(nx * ny, bool)
    t1 = np.where(flip[:, None], np.column_stack([a, b, d]), np.column_stack([a, b, c]))
    t2 = np.where(flip[:, None], np.column_stack([b, c, d]), np.column_stack([a, c, d]))
    return build_mesh(verts, np.concatenate([t1, t2]), tag=tag, params=params)


def square_mesh(n: int) -> Mesh:
    """Unit square ``(0,1)^2`` with ``n`` boundary edges per side."""
    return rectangle_mesh(0.0, 1.0, 0.0, 1.0, n, n, tag="square", params={"n": n})


def box_mesh(R: float = 0.25, n: int = 16, grading: float = 1.0) -> Mesh:
    """The box ``(-R, R) x (0, 2R)``; its bottom side is the face carrying singular weights.

    ``grading > 1`` clusters grid lines toward the origin (the singular point of
    the catalog weights) via ``x = R sign(s) |s|^grading``, ``y = 2R t^grading``.
    Use an even ``n`` so that the origin is a vertex.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    if not grading >= 1:
        raise ValueError("grading must be >= 1")
    params = {"R": R, "n": n}
    if grading == 1:
        return rectangle_mesh(-R, R, 0.0, 2 * R, n, n, tag="box", params=params)
    params["grading"] = grading
    s = np.linspace(-1.0, 1.0, n + 1)
    s[n // 2] = 0.0 if n % 2 == 0 else s[n // 2]
    t = np.linspace(0.0, 1.0, n + 1)
    xs = R * np.sign(s) * np.abs(s) ** grading
    ys = 2 * R * t ** grading
    xs[0], xs[-1], ys[-1] = -R, R, 2 * R
    return rectangle_mesh(-R, R, 0.0, 2 * R, n, n, tag="box", params=params, xs=xs, ys=ys)


def disk_mesh(n: int = 64, radius: float = 1.0, grading: float = 0.2) -> Mesh:
    """Inscribed ``n``-gon of the disk, graded toward a coarse interior.

    Boundary vertices sit at angles ``2 pi k / n``. Interior rings get coarser
    with depth, so ``n = 2048`` stays cheap.
    """
    if n < 3:
        raise ValueError("need at least three boundary edges")
    pts = [_circle_points(n)]
    hb = 2 * np.pi / n
    r = 1.0
    while True:
        h = hb + grading * (1.0 - r)
        r -= 0.87 * h
        h = hb + grading * (1.0 - r)
        if r < 0.6 * h:
            break
        m = max(6, int(round(2 * np.pi * r / h)))
        phase = 0.5 * (len(pts) % 2)
        ang = 2 * np.pi * (np.arange(m) + phase) / m
        pts.append(r * np.column_stack([np.cos(ang), np.sin(ang)]))
    pts.append(np.zeros((1, 2)))
    verts = np.concatenate(pts) * radius
    tri = Delaunay(verts, qhull_options="QJ Pp").simplices
    return build_mesh(verts, tri, tag="disk", params={"n": n, "radius": radius})


def _circle_points(n: int) -> np.ndarray:
    """Points at angles ``2 pi k / n``, bitwise symmetric under both axis reflections when ``4 | n``."""
    if n % 4:
        theta = 2 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(theta), np.sin(theta)])
    m = n // 4
    th = 0.5 * np.pi * np.arange(m + 1) / m
    c, s = np.cos(th), np.sin(th)
    # mirror about the diagonal so that point m - k is point k with x and y swapped
    k = np.arange(m // 2 + 1, m + 1)
    c[k], s[k] = s[m - k], c[m - k]
    q1 = np.column_stack([c, s])[:m]
    q2 = np.column_stack([-q1[:, 1], q1[:, 0]])
    q3 = -q1
    q4 = np.column_stack([q1[:, 1], -q1[:, 0]])
    return np.concatenate([q1, q2, q3, q4])


def refine(mesh: Mesh) -> Mesh:
    """Uniform red refinement: every triangle split into four, every edge bisected."""
    v, t = mesh.vertices, mesh.triangles
    edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    nv = len(v)
    m01, m12, m20 = (nv + inv[k * len(t) : (k + 1) * len(t)] for k in range(3))
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    new = np.concatenate([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ])
    params = dict(mesh.params)
    if "n" in params:
        params["n"] = 2 * params["n"]
    return build_mesh(np.concatenate([v, mids]), new, tag=mesh.tag, params=params)


def make_mesh(domain: str, n: int | None = None, R: float | None = None, grading: float = 1.0) -> Mesh:
    """Built-in generators keyed by domain name (``square``, ``disk``, ``rect``/``box``)."""
    if domain == "square":
        return square_mesh(n or 8)
    if domain == "disk":
        return disk_mesh(n or 64)
    if domain in ("rect", "box"):
        return box_mesh(R if R is not None else 0.25, n or 16, grading)
    raise ValueError(f"unknown domain {domain!r}")
