"""Triangle meshes, adjacency, dual mesh, and discrete Gaussian curvature.

The mesh layer is deliberately array-first: a :class:`TriangleMesh` is a thin
validated wrapper around an ``(nv, 3)`` float64 vertex array and an ``(nt, 3)``
index array.  Everything downstream (sphere generation, detection, the solver)
consumes those arrays directly, so meshes stay cheap to re-wrap around
per-frame predicted positions.

Curvature is estimated on the dual mesh: one dual vertex per triangle (its
centroid), one dual edge per interior primal edge.  The Gaussian curvature at
a dual vertex x is the angle deficit of its dual fan divided by the
barycentric share of the adjacent face area:

    K(x) = (2*pi - sum(alpha_i)) / (A(x) / 3)

where alpha_i are the angles at x between consecutive dual-fan edges and A(x)
is the total area of the primal faces adjacent to x's triangle.  Boundary
dual vertices (open fans) report K = 0 by convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

# Triangles with area at or below this are rejected as degenerate (guards the
# circumcenter division downstream).
DEGENERATE_AREA = 1e-12


class MeshError(Exception):
    """Invalid mesh data, mesh file, or mesh query."""


# ---------------------------------------------------------------------------
# core types
# ---------------------------------------------------------------------------


@dataclass
class TriangleMesh:
    """Indexed triangle surface.

    ``triangles`` are counter-clockwise when viewed from outside; that
    orientation defines the outward normal used by sphere placement and the
    safety cone.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    object_id: str = ""

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        self.triangles = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError(f"triangles must be (m, 3), got {self.triangles.shape}")
        if self.triangles.size:
            lo = int(self.triangles.min())
            hi = int(self.triangles.max())
            if lo < 0 or hi >= len(self.vertices):
                raise MeshError(f"triangle index out of range: {lo}..{hi} "
                                f"with {len(self.vertices)} vertices")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def triangle_points(self) -> np.ndarray:
        """Per-triangle corner positions, shape (nt, 3, 3)."""
        return self.vertices[self.triangles]


@dataclass
class Adjacency:
    """Edge-adjacency between triangles plus ordered per-vertex fans.

    ``tri_neighbors[t, e]`` is the triangle across edge e of t (edges are
    (i,j), (j,k), (k,i) in corner order), or -1 on the boundary.
    ``vertex_fans[v]`` lists the triangles incident to v, ordered by walking
    across shared edges; interior fans are closed cycles (the walk returns to
    the starting triangle), boundary fans are open chains.
    """

    tri_neighbors: np.ndarray
    vertex_fans: List[np.ndarray]
    boundary_edges: int = 0


@dataclass
class DualMesh:
    """Dual graph of a triangle mesh.

    One dual vertex per triangle (at the centroid), one dual edge per interior
    primal edge.  ``dual_fans[dv]`` is the ordered cycle of neighboring dual
    vertices; ``face_areas[dv]`` is the area of dv's primal triangle, carried
    here so curvature queries need no primal mesh.
    """

    dual_vertices: np.ndarray
    dual_edges: np.ndarray
    dual_fans: List[np.ndarray]
    face_areas: np.ndarray


@dataclass
class CurvatureField:
    """Gaussian curvature sampled at dual vertices (== per primal triangle)."""

    per_dual_vertex: np.ndarray
    per_triangle: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.per_dual_vertex = np.asarray(self.per_dual_vertex, dtype=np.float64)
        if self.per_triangle is None:
            # dual vertex index == triangle index by construction
            self.per_triangle = self.per_dual_vertex


# ---------------------------------------------------------------------------
# basic geometry helpers
# ---------------------------------------------------------------------------


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def triangle_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Outward unit normals (counter-clockwise winding)."""
    p = vertices[triangles]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(cross, axis=1, keepdims=True)
    norm = np.where(norm < 1e-300, 1.0, norm)
    return cross / norm


def triangle_centroids(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    return vertices[triangles].mean(axis=1)


def bbox_diagonal(vertices: np.ndarray) -> float:
    if len(vertices) == 0:
        return 0.0
    return float(np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0)))


def validate_mesh(mesh: TriangleMesh) -> None:
    """Check the full mesh invariants (degeneracy, manifoldness).

    Index bounds are already enforced on construction; this adds the checks
    that need real geometry work and is called by loaders and generators.
    """
    areas = triangle_areas(mesh.vertices, mesh.triangles)
    bad = np.nonzero(areas <= DEGENERATE_AREA)[0]
    if bad.size:
        raise MeshError(f"degenerate triangle {int(bad[0])} "
                        f"(area {areas[bad[0]]:.3g} m^2)")
    edges = _edge_array(mesh.triangles)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    over = np.nonzero(counts > 2)[0]
    if over.size:
        e = uniq[over[0]]
        raise MeshError(f"non-manifold edge ({int(e[0])}, {int(e[1])}) "
                        f"shared by {int(counts[over[0]])} triangles")


def _edge_array(triangles: np.ndarray) -> np.ndarray:
    """All directed edges as sorted (lo, hi) pairs, shape (3*nt, 2)."""
    e = np.concatenate([triangles[:, [0, 1]],
                        triangles[:, [1, 2]],
                        triangles[:, [2, 0]]])
    return np.sort(e, axis=1)


# ---------------------------------------------------------------------------
# mesh file I/O
# ---------------------------------------------------------------------------


def load_mesh(path: Union[str, Path], object_id: str = "") -> TriangleMesh:
    """Load the text format: ``v x y z`` / ``f i j k`` (1-based), ``#`` comments.

    Faces must be triangles; any other arity is rejected rather than split.
    """
    path = Path(path)
    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag, args = parts[0], parts[1:]
            if tag == "v":
                if len(args) != 3:
                    raise MeshError(f"{path.name}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(x) for x in args])
                except ValueError:
                    raise MeshError(f"{path.name}:{lineno}: bad vertex coordinate")
            elif tag == "f":
                if len(args) != 3:
                    raise MeshError(f"{path.name}:{lineno}: face has {len(args)} "
                                    "indices; only triangles are supported")
                try:
                    idx = [int(x) for x in args]
                except ValueError:
                    raise MeshError(f"{path.name}:{lineno}: bad face index")
                if any(i < 1 for i in idx):
                    raise MeshError(f"{path.name}:{lineno}: face indices are 1-based")
                faces.append([i - 1 for i in idx])
            else:
                raise MeshError(f"{path.name}:{lineno}: unknown line type {tag!r}")
    if not vertices or not faces:
        raise MeshError(f"{path.name}: no vertices or no faces")
    mesh = TriangleMesh(np.array(vertices), np.array(faces), object_id=object_id or path.stem)
    validate_mesh(mesh)
    return mesh


def save_mesh(mesh: TriangleMesh, path: Union[str, Path]) -> None:
    """Write the same text format load_mesh reads."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


# ---------------------------------------------------------------------------
# adjacency and dual mesh
# ---------------------------------------------------------------------------


def build_adjacency(mesh: TriangleMesh) -> Adjacency:
    """Edge adjacency + ordered vertex fans.

    Raises MeshError for non-manifold edges (shared by three or more
    triangles), naming the edge.
    """
    nt = mesh.num_triangles
    tri_neighbors = np.full((nt, 3), -1, dtype=np.int64)
    edge_owner = {}
    tris = mesh.triangles
    for t in range(nt):
        i, j, k = (int(tris[t, 0]), int(tris[t, 1]), int(tris[t, 2]))
        for e, (a, b) in enumerate(((i, j), (j, k), (k, i))):
            key = (a, b) if a < b else (b, a)
            if key not in edge_owner:
                edge_owner[key] = (t, e)
            else:
                t2, e2 = edge_owner[key]
                if t2 < 0:
                    raise MeshError(f"non-manifold edge {key} shared by 3+ triangles")
                tri_neighbors[t, e] = t2
                tri_neighbors[t2, e2] = t
                edge_owner[key] = (-1, -1)  # consumed; a third taker is an error
    boundary = sum(1 for v in edge_owner.values() if v[0] >= 0)
    fans = _vertex_fans(mesh, tri_neighbors)
    return Adjacency(tri_neighbors=tri_neighbors, vertex_fans=fans,
                     boundary_edges=boundary)


def _vertex_fans(mesh: TriangleMesh, tri_neighbors: np.ndarray) -> List[np.ndarray]:
    """Order each vertex's incident triangles by walking across shared edges."""
    nv = mesh.num_vertices
    incident: List[List[int]] = [[] for _ in range(nv)]
    tris = mesh.triangles
    for t in range(len(tris)):
        for v in tris[t]:
            incident[int(v)].append(t)

    def next_around(v: int, t: int, prev: Optional[int]) -> Optional[int]:
        # move to the edge-neighbor of t that contains v and is not prev
        for e in range(3):
            a = int(tris[t, e])
            b = int(tris[t, (e + 1) % 3])
            if v != a and v != b:
                continue
            n = int(tri_neighbors[t, e])
            if n >= 0 and n != prev:
                return n
        return None

    fans: List[np.ndarray] = []
    for v in range(nv):
        ring = incident[v]
        if not ring:
            fans.append(np.empty(0, dtype=np.int64))
            continue
        # prefer starting at a boundary triangle so open chains come out whole
        start = ring[0]
        for t in ring:
            # t is a boundary start if one of its v-edges has no neighbor
            cnt = 0
            for e in range(3):
                a = int(tris[t, e]); b = int(tris[t, (e + 1) % 3])
                if (v == a or v == b) and int(tri_neighbors[t, e]) < 0:
                    cnt += 1
            if cnt:
                start = t
                break
        chain = [start]
        prev = None
        cur = start
        while True:
            nxt = next_around(v, cur, prev)
            if nxt is None or nxt == start:
                break
            chain.append(nxt)
            prev, cur = cur, nxt
            if len(chain) > len(ring):  # safety: malformed connectivity
                break
        # if the walk missed triangles (fan pinched at v), keep them appended
        missing = [t for t in ring if t not in chain]
        fans.append(np.array(chain + missing, dtype=np.int64))
    return fans


def build_dual_mesh(mesh: TriangleMesh, adj: Optional[Adjacency] = None) -> DualMesh:
    """Dual vertices at centroids; one dual edge per interior primal edge."""
    if adj is None:
        adj = build_adjacency(mesh)
    centroids = triangle_centroids(mesh.vertices, mesh.triangles)
    areas = triangle_areas(mesh.vertices, mesh.triangles)
    nbrs = adj.tri_neighbors
    edges = []
    fans: List[np.ndarray] = []
    for t in range(mesh.num_triangles):
        fan = nbrs[t][nbrs[t] >= 0]
        fans.append(fan.astype(np.int64))
        for n in fan:
            if t < n:
                edges.append((t, int(n)))
    dual_edges = (np.array(edges, dtype=np.int64) if edges
                  else np.empty((0, 2), dtype=np.int64))
    return DualMesh(dual_vertices=centroids, dual_edges=dual_edges,
                    dual_fans=fans, face_areas=areas)


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------


def angle_deficit_curvature(dual: DualMesh, dv: int) -> float:
    """Gaussian curvature at one dual vertex: (2pi - sum(angles)) / (A/3).

    Boundary dual vertices (open fans, fewer than 3 neighbors) return 0 by
    convention.  Angles are measured between consecutive fan edges in cyclic
    order; A is the total primal face area adjacent to the fan.
    """
    fan = dual.dual_fans[dv]
    if len(fan) < 3:
        return 0.0
    x = dual.dual_vertices[dv]
    spokes = dual.dual_vertices[fan] - x
    lengths = np.linalg.norm(spokes, axis=1)
    if np.any(lengths < 1e-300):
        raise MeshError(f"degenerate dual fan at dual vertex {dv}")
    angle_sum = 0.0
    n = len(fan)
    for a in range(n):
        u = spokes[a]
        v = spokes[(a + 1) % n]
        c = float(np.dot(u, v)) / (lengths[a] * lengths[(a + 1) % n])
        angle_sum += float(np.arccos(np.clip(c, -1.0, 1.0)))
    area = float(dual.face_areas[fan].sum())
    if area <= DEGENERATE_AREA:
        raise MeshError(f"degenerate (zero-area) fan at dual vertex {dv}")
    return (2.0 * np.pi - angle_sum) / (area / 3.0)


def compute_curvature(mesh: TriangleMesh,
                      dual: Optional[DualMesh] = None) -> CurvatureField:
    """Curvature at every dual vertex, vectorized over interior fans."""
    if dual is None:
        dual = build_dual_mesh(mesh)
    nt = len(dual.dual_vertices)
    K = np.zeros(nt, dtype=np.float64)
    interior = np.array([t for t in range(nt) if len(dual.dual_fans[t]) == 3],
                        dtype=np.int64)
    if interior.size:
        fan_idx = np.stack([dual.dual_fans[t] for t in interior])  # (ni, 3)
        x = dual.dual_vertices[interior]                           # (ni, 3)
        spokes = dual.dual_vertices[fan_idx] - x[:, None, :]       # (ni, 3, 3)
        lengths = np.linalg.norm(spokes, axis=2)
        if np.any(lengths < 1e-300):
            bad = interior[np.nonzero(lengths.min(axis=1) < 1e-300)[0][0]]
            raise MeshError(f"degenerate dual fan at dual vertex {int(bad)}")
        angle_sum = np.zeros(len(interior))
        for a in range(3):
            b = (a + 1) % 3
            cosang = (np.einsum("ij,ij->i", spokes[:, a], spokes[:, b])
                      / (lengths[:, a] * lengths[:, b]))
            angle_sum += np.arccos(np.clip(cosang, -1.0, 1.0))
        area = dual.face_areas[fan_idx].sum(axis=1)
        if np.any(area <= DEGENERATE_AREA):
            bad = interior[np.nonzero(area <= DEGENERATE_AREA)[0][0]]
            raise MeshError(f"degenerate (zero-area) fan at dual vertex {int(bad)}")
        K[interior] = (2.0 * np.pi - angle_sum) / (area / 3.0)
    return CurvatureField(per_dual_vertex=K)


def triangle_curvature(fld: CurvatureField, tri: int) -> float:
    """Curvature of a primal triangle = its dual vertex's curvature."""
    return float(fld.per_triangle[tri])


# ---------------------------------------------------------------------------
# mesh generators
# ---------------------------------------------------------------------------

# icosahedron with vertices on the unit sphere
_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
    (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
    (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
], dtype=np.float64)
_ICO_VERTS /= np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
_ICO_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def icosphere(subdivision: int, radius: float = 1.0,
              center: Sequence[float] = (0.0, 0.0, 0.0),
              object_id: str = "icosphere") -> TriangleMesh:
    """Geodesic sphere: V = 10*4^n + 2 vertices, F = 20*4^n faces.

    Midpoint-subdivides the icosahedron in the flat faces, then projects all
    vertices to the sphere in a single final pass.  The one-shot projection
    grades triangle sizes smoothly across the surface, which keeps the
    angle-deficit curvature estimate tight on the generated spheres.
    """
    if subdivision < 0:
        raise MeshError("subdivision must be >= 0")
    verts = [v.copy() for v in _ICO_VERTS]
    faces = list(_ICO_FACES)
    for _ in range(subdivision):
        cache = {}
        next_faces = []

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                verts.append(0.5 * (verts[i] + verts[j]))
                cache[key] = len(verts) - 1
            return cache[key]

        for (i, j, k) in faces:
            a = midpoint(i, j)
            b = midpoint(j, k)
            c = midpoint(k, i)
            next_faces.extend([(i, a, c), (j, b, a), (k, c, b), (a, b, c)])
        faces = next_faces
    V = np.array(verts)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    V = V * radius + np.asarray(center, dtype=np.float64)
    mesh = TriangleMesh(V, np.array(faces, dtype=np.int64), object_id=object_id)
    validate_mesh(mesh)
    return mesh


def cloth_grid(n: int, spacing: float,
               center: Sequence[float] = (0.0, 0.0, 0.0),
               object_id: str = "cloth") -> TriangleMesh:
    """Flat n x n vertex grid in the xz-plane, 2*(n-1)^2 triangles, +y normals."""
    if n < 2:
        raise MeshError("cloth grid needs n >= 2")
    cx, cy, cz = center
    half = 0.5 * spacing * (n - 1)
    xs = np.linspace(-half, half, n) + cx
    zs = np.linspace(-half, half, n) + cz
    V = np.empty((n * n, 3))
    for r in range(n):
        for c in range(n):
            V[r * n + c] = (xs[c], cy, zs[r])
    tris = []
    for r in range(n - 1):
        for c in range(n - 1):
            v00 = r * n + c
            v01 = v00 + 1
            v10 = v00 + n
            v11 = v10 + 1
            # counter-clockwise seen from +y (x right, z toward viewer)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    mesh = TriangleMesh(V, np.array(tris, dtype=np.int64), object_id=object_id)
    validate_mesh(mesh)
    return mesh


def plane_floor(size: float, y: float = 0.0,
                center_xz: Sequence[float] = (0.0, 0.0),
                resolution: int = 1,
                object_id: str = "floor") -> TriangleMesh:
    """Square floor grid at height y with +y normals.

    ``resolution`` counts cells per side.  Collision spheres of flat
    triangles scale with triangle size, so a floor meant for sphere-based
    contact should be tessellated finely enough that the sphere standoff
    stays small next to the objects resting on it.
    """
    if resolution < 1:
        raise MeshError("floor resolution must be >= 1")
    cx, cz = center_xz
    return cloth_grid(resolution + 1, size / resolution, (cx, y, cz),
                      object_id=object_id)
