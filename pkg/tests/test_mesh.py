"""Mesh layer tests: file format, generators, adjacency, dual mesh, curvature.

The curvature checks are anchored to independent references computed inside
the tests: closed-form angle sums for hand-built planar and corner fans, the
analytic value K = 1/r^2 for spheres, and a direct per-fan recomputation of
the angle-deficit formula used as an oracle against the vectorized field.
"""

import math

import numpy as np
import pytest

from softsphere.mesh import (DualMesh, MeshError, TriangleMesh,
                             angle_deficit_curvature, bbox_diagonal,
                             build_adjacency, build_dual_mesh, cloth_grid,
                             compute_curvature, icosphere, load_mesh,
                             plane_floor, save_mesh, triangle_areas,
                             triangle_curvature, triangle_normals,
                             validate_mesh)


def fan_curvature_oracle(mesh: TriangleMesh, tri: int) -> float:
    """Independent angle-deficit evaluation for one triangle's dual vertex.

    Recomputes everything from the raw mesh: centroid spokes to the
    edge-neighboring triangles' centroids, the angles between consecutive
    spokes, and the neighbor face areas.  Open fans return 0.
    """
    tris = mesh.triangles
    own = set(int(v) for v in tris[tri])
    neighbors = []
    for t in range(mesh.num_triangles):
        if t == tri:
            continue
        if len(own & set(int(v) for v in tris[t])) == 2:
            neighbors.append(t)
    if len(neighbors) < 3:
        return 0.0
    centroids = mesh.vertices[tris].mean(axis=1)
    spokes = [centroids[t] - centroids[tri] for t in neighbors]
    angle_sum = 0.0
    for a in range(len(spokes)):
        u = spokes[a]
        v = spokes[(a + 1) % len(spokes)]
        cosang = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
        angle_sum += math.acos(max(-1.0, min(1.0, float(cosang))))
    areas = triangle_areas(mesh.vertices, mesh.triangles)
    area = float(sum(areas[t] for t in neighbors))
    return (2.0 * math.pi - angle_sum) / (area / 3.0)


# ---------------------------------------------------------------------------
# TriangleMesh construction and file format
# ---------------------------------------------------------------------------


def test_mesh_wraps_arrays_as_float64_int64():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert mesh.vertices.dtype == np.float64
    assert mesh.triangles.dtype == np.int64
    assert mesh.num_vertices == 3
    assert mesh.num_triangles == 1
    assert mesh.triangle_points().shape == (1, 3, 3)


def test_mesh_rejects_out_of_range_indices():
    with pytest.raises(MeshError, match="out of range"):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])


def test_mesh_rejects_bad_shapes():
    with pytest.raises(MeshError, match="vertices"):
        TriangleMesh([[0, 0], [1, 0]], [[0, 1, 0]])
    with pytest.raises(MeshError, match="triangles"):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1]])


def test_load_single_triangle(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_mesh(p)
    assert mesh.num_vertices == 3
    assert mesh.num_triangles == 1
    assert np.array_equal(mesh.triangles, [[0, 1, 2]])
    assert mesh.object_id == "tri"


def test_load_zero_area_face_names_the_face(tmp_path):
    p = tmp_path / "flat.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\n"
                 "f 1 2 3\nf 1 2 4\n")  # face 1 is collinear
    with pytest.raises(MeshError, match="degenerate triangle 1"):
        load_mesh(p)


def test_load_rejects_quads(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshError, match="only triangles"):
        load_mesh(p)


def test_load_rejects_unknown_tags_and_bad_numbers(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("vn 0 0 1\n")
    with pytest.raises(MeshError, match="unknown line type"):
        load_mesh(p)
    p.write_text("v 0 zero 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(MeshError, match="bad vertex"):
        load_mesh(p)
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")
    with pytest.raises(MeshError, match="1-based"):
        load_mesh(p)


def test_save_load_roundtrip_icosphere_sub2(tmp_path):
    mesh = icosphere(2, radius=1.0)
    assert mesh.num_vertices == 162   # 10 * 4^2 + 2
    assert mesh.num_triangles == 320  # 20 * 4^2
    p = tmp_path / "ico2.obj"
    save_mesh(mesh, p)
    back = load_mesh(p)
    assert back.num_vertices == 162
    assert back.num_triangles == 320
    assert np.array_equal(back.triangles, mesh.triangles)
    # %.17g output round-trips float64 exactly
    assert np.array_equal(back.vertices, mesh.vertices)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def test_icosphere_counts_follow_subdivision_formula():
    for sub in range(4):
        mesh = icosphere(sub)
        assert mesh.num_vertices == 10 * 4 ** sub + 2
        assert mesh.num_triangles == 20 * 4 ** sub


def test_icosphere_vertices_on_sphere_and_normals_outward():
    mesh = icosphere(3, radius=0.5, center=(1.0, 2.0, 3.0))
    d = np.linalg.norm(mesh.vertices - np.array([1.0, 2.0, 3.0]), axis=1)
    assert np.allclose(d, 0.5, atol=1e-12)
    normals = triangle_normals(mesh.vertices, mesh.triangles)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    outward = np.einsum("ij,ij->i", normals,
                        centroids - np.array([1.0, 2.0, 3.0]))
    assert np.all(outward > 0), "every face normal must point away from center"


def test_cloth_grid_counts_and_plane():
    mesh = cloth_grid(20, 0.05)
    assert mesh.num_vertices == 400
    assert mesh.num_triangles == 2 * 19 ** 2  # = 722
    assert np.allclose(mesh.vertices[:, 1], 0.0)
    normals = triangle_normals(mesh.vertices, mesh.triangles)
    assert np.allclose(normals, [0.0, 1.0, 0.0], atol=1e-12)


def test_plane_floor_is_a_tessellated_grid():
    mesh = plane_floor(2.0, y=-0.25, resolution=4)
    assert mesh.num_vertices == 25
    assert mesh.num_triangles == 32
    assert np.allclose(mesh.vertices[:, 1], -0.25)
    assert np.isclose(mesh.vertices[:, 0].max() - mesh.vertices[:, 0].min(), 2.0)
    with pytest.raises(MeshError, match="resolution"):
        plane_floor(1.0, resolution=0)


# ---------------------------------------------------------------------------
# adjacency
# ---------------------------------------------------------------------------


def test_adjacency_single_triangle_has_no_neighbors():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    adj = build_adjacency(mesh)
    assert np.array_equal(adj.tri_neighbors, [[-1, -1, -1]])
    assert adj.boundary_edges == 3


def test_adjacency_shared_edge_is_mutual():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]],
                        [[0, 1, 2], [2, 1, 3]])
    adj = build_adjacency(mesh)
    assert 1 in adj.tri_neighbors[0]
    assert 0 in adj.tri_neighbors[1]
    assert adj.boundary_edges == 4


def test_adjacency_closed_icosphere_every_triangle_has_three_neighbors():
    mesh = icosphere(1)
    adj = build_adjacency(mesh)
    assert np.all(adj.tri_neighbors >= 0)
    assert adj.boundary_edges == 0
    # interior vertex fans are closed cycles covering all incident triangles
    counts = np.zeros(mesh.num_vertices, dtype=int)
    for tri in mesh.triangles:
        counts[tri] += 1
    for v, fan in enumerate(adj.vertex_fans):
        assert len(fan) == counts[v]
        assert len(set(fan.tolist())) == len(fan)


def test_adjacency_non_manifold_edge_is_named():
    mesh = TriangleMesh(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]],
        [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(MeshError, match=r"non-manifold edge \(0, 1\)"):
        build_adjacency(mesh)
    with pytest.raises(MeshError, match=r"non-manifold edge \(0, 1\)"):
        validate_mesh(mesh)


# ---------------------------------------------------------------------------
# dual mesh
# ---------------------------------------------------------------------------


def test_dual_two_triangles_one_edge():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]],
                        [[0, 1, 2], [2, 1, 3]])
    dual = build_dual_mesh(mesh)
    assert len(dual.dual_vertices) == 2
    assert len(dual.dual_edges) == 1
    assert np.allclose(dual.dual_vertices,
                       mesh.vertices[mesh.triangles].mean(axis=1))


def test_dual_tetrahedron_counts():
    verts = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0],
                      [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    mesh = TriangleMesh(verts, tris)
    dual = build_dual_mesh(mesh)
    assert len(dual.dual_vertices) == 4
    assert len(dual.dual_edges) == 6  # all 6 primal edges interior


def test_dual_icosphere_sub1_counts():
    dual = build_dual_mesh(icosphere(1))
    assert len(dual.dual_vertices) == 80
    assert len(dual.dual_edges) == 120  # 3 * 80 / 2, all interior


def test_dual_open_patch_counts_interior_edges_only():
    mesh = cloth_grid(4, 1.0)
    dual = build_dual_mesh(mesh)
    adj = build_adjacency(mesh)
    all_edges = 3 * mesh.num_triangles
    interior = (all_edges - adj.boundary_edges) // 2
    assert len(dual.dual_edges) == interior


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------


def test_planar_fan_angle_sum_is_2pi_so_curvature_vanishes():
    # center triangle with three coplanar edge-neighbors: the closed dual
    # fan lies in the plane, its angles sum to exactly 2*pi
    verts = np.array([
        [0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [1.0, 1.8, 0.0],   # center
        [1.0, -1.7, 0.0], [3.1, 1.9, 0.0], [-1.2, 1.9, 0.0],  # ring
    ])
    tris = np.array([[0, 1, 2], [1, 0, 3], [2, 1, 4], [0, 2, 5]])
    mesh = TriangleMesh(verts, tris)
    dual = build_dual_mesh(mesh)
    k = angle_deficit_curvature(dual, 0)
    diag = bbox_diagonal(mesh.vertices)
    assert abs(k) < 1e-9 / diag ** 2
    assert k == pytest.approx(fan_curvature_oracle(mesh, 0), abs=1e-15)


def test_planar_hex_fan_reports_zero():
    # hexagonal fan: six wedges around a center vertex, all coplanar; every
    # dual vertex has an open fan (outer edges are boundary) -> 0 everywhere
    ring = [(math.cos(a), math.sin(a), 0.0)
            for a in np.linspace(0, 2 * math.pi, 7)[:-1]]
    verts = np.array([(0.0, 0.0, 0.0)] + ring)
    tris = np.array([[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)])
    mesh = TriangleMesh(verts, tris)
    field = compute_curvature(mesh)
    assert np.all(field.per_dual_vertex == 0.0)


def test_cube_corner_fan_matches_angle_deficit():
    # hand-built dual fan with orthogonal spokes: angle sum 3*pi/2, so
    # K = (2*pi - 3*pi/2) / (A/3) = (pi/2) / a with a = A/3
    a = 0.37
    dual = DualMesh(
        dual_vertices=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                                [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
        dual_edges=np.array([[0, 1], [0, 2], [0, 3]]),
        dual_fans=[np.array([1, 2, 3]), np.array([0]), np.array([0]),
                   np.array([0])],
        face_areas=np.array([0.5, a, a, a]))
    k = angle_deficit_curvature(dual, 0)
    assert k == pytest.approx((math.pi / 2) / a, rel=1e-12)


def test_boundary_dual_vertices_report_zero():
    mesh = cloth_grid(3, 1.0)
    dual = build_dual_mesh(mesh)
    open_fans = [t for t in range(mesh.num_triangles)
                 if len(dual.dual_fans[t]) < 3]
    assert open_fans, "a 3x3 cloth patch must have boundary triangles"
    for t in open_fans:
        assert angle_deficit_curvature(dual, t) == 0.0


def test_degenerate_fan_raises():
    # two dual vertices at the same point make a zero-length spoke
    dual = DualMesh(
        dual_vertices=np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0],
                                [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        dual_edges=np.array([[0, 1], [0, 2], [0, 3]]),
        dual_fans=[np.array([1, 2, 3]), np.array([0]), np.array([0]),
                   np.array([0])],
        face_areas=np.full(4, 0.25))
    with pytest.raises(MeshError, match="degenerate dual fan"):
        angle_deficit_curvature(dual, 0)


def test_unit_icosphere_sub3_median_curvature_near_one():
    mesh = icosphere(3, radius=1.0)
    field = compute_curvature(mesh)
    median = float(np.median(field.per_dual_vertex))
    assert 0.85 <= median <= 1.15  # analytic K = 1/r^2 = 1


def test_unit_icosphere_curvature_fraction_within_15_percent():
    for sub in (3, 4):
        mesh = icosphere(sub, radius=1.0)
        field = compute_curvature(mesh)
        frac = float(np.mean(np.abs(field.per_dual_vertex - 1.0) <= 0.15))
        assert frac >= 0.9, f"subdivision {sub}: only {frac:.3f} within 15%"


def test_curvature_field_matches_scalar_oracle_on_icosphere():
    mesh = icosphere(2, radius=1.0)
    field = compute_curvature(mesh)
    rng = np.random.default_rng(3)
    for tri in rng.choice(mesh.num_triangles, size=24, replace=False):
        oracle = fan_curvature_oracle(mesh, int(tri))
        assert field.per_dual_vertex[tri] == pytest.approx(oracle, rel=1e-9)


def test_triangle_curvature_reads_the_dual_vertex():
    mesh = icosphere(3, radius=1.0)
    field = compute_curvature(mesh)
    assert triangle_curvature(field, 7) == field.per_dual_vertex[7]
    assert abs(triangle_curvature(field, 7) - 1.0) <= 0.15
    grid = cloth_grid(10, 0.1)
    flat = compute_curvature(grid)
    tol = 1e-9 / bbox_diagonal(grid.vertices) ** 2
    assert np.all(np.abs(flat.per_triangle) < tol)


def test_planarity_on_an_irregular_flat_patch():
    rng = np.random.default_rng(11)
    mesh = cloth_grid(8, 0.2)
    # break the grid regularity without leaving the plane
    verts = mesh.vertices.copy()
    interior = np.ones(len(verts), dtype=bool)
    interior[:8] = interior[-8:] = False
    interior[::8] = interior[7::8] = False
    verts[interior, 0] += rng.uniform(-0.04, 0.04, interior.sum())
    verts[interior, 2] += rng.uniform(-0.04, 0.04, interior.sum())
    warped = TriangleMesh(verts, mesh.triangles)
    field = compute_curvature(warped)
    bound = 1e-9 / bbox_diagonal(verts) ** 2
    assert np.all(np.abs(field.per_dual_vertex) < bound)


def test_curvature_scale_covariance():
    mesh = icosphere(2, radius=1.0)
    base = compute_curvature(mesh).per_dual_vertex
    for s in (0.25, 3.7):
        scaled = TriangleMesh(mesh.vertices * s, mesh.triangles)
        ks = compute_curvature(scaled).per_dual_vertex
        assert np.allclose(ks * s * s, base, rtol=1e-6)


def test_tetrahedron_curvature_equal_at_every_dual_vertex():
    verts = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0],
                      [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    field = compute_curvature(TriangleMesh(verts, tris))
    k = field.per_dual_vertex
    assert np.allclose(k, k[0], rtol=1e-12)
    assert k[0] > 0  # convex corner fans keep a positive deficit
