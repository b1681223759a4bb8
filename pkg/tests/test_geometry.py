import math

import numpy as np
import pytest

from steklov_lab.geometry import DomainSpec, MeshError, boundary_normals, build_mesh, read_mesh, write_mesh


def euler(mesh):
    return mesh.n_vertices - len(mesh.edges) + mesh.n_triangles


def check_valid(mesh, h):
    assert np.all(mesh.areas > 0)
    # interior edges twice, boundary edges once
    half = np.sort(np.concatenate([mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]],
                                   mesh.triangles[:, [2, 0]]]), axis=1)
    _, counts = np.unique(half, axis=0, return_counts=True)
    assert set(counts.tolist()) <= {1, 2}
    assert np.sum(counts == 1) == len(mesh.boundary_edges)
    # single closed counterclockwise cycle
    e = mesh.boundary_edges
    assert np.all(e[1:, 0] == e[:-1, 1]) and e[-1, 1] == e[0, 0]
    assert len(np.unique(e[:, 0])) == len(e)
    assert euler(mesh) == 1
    assert mesh.h <= 1.5 * h
    assert mesh.min_angles().min() >= 20.0        # degrees


@pytest.mark.parametrize("h", [0.5, 0.2, 0.1, 0.05])
def test_disk_mesh_valid(h):
    mesh = build_mesh(DomainSpec.disk(), h)
    check_valid(mesh, h)
    assert np.all(np.linalg.norm(mesh.vertices, axis=1) <= 1 + 1e-12)
    r = np.linalg.norm(mesh.vertices[mesh.boundary_vertices], axis=1)
    assert np.max(np.abs(r - 1)) < 1e-14


def test_disk_graded_mesh_valid():
    mesh = build_mesh(DomainSpec.disk(), 0.1, h_boundary=0.02, grading=0.25)
    check_valid(mesh, 0.1)
    assert mesh.boundary_edge_lengths.max() <= 1.5 * 0.02


def test_disk_boundary_count_doubles():
    for h in (0.1, 0.05, 0.02):
        nb = len(build_mesh(DomainSpec.disk(), h).boundary_vertices)
        nb2 = len(build_mesh(DomainSpec.disk(), h / 2).boundary_vertices)
        assert 1.8 <= nb2 / nb <= 2.2


def test_disk_perimeter_converges_quadratically():
    errs = [2 * math.pi - build_mesh(DomainSpec.disk(), h).boundary_length for h in (0.1, 0.05, 0.025)]
    assert all(e > 0 for e in errs)
    rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(rates) > 1.8


def test_rectangle_normals_axis_aligned():
    mesh = build_mesh(DomainSpec.rectangle(0, 0, 1, 1), 0.25)
    check_valid(mesh, 0.25)
    n = boundary_normals(mesh)
    assert np.allclose(np.sort(np.abs(n), axis=1), [0.0, 1.0])
    right = np.isclose(mesh.vertices[mesh.boundary_edges].mean(axis=1)[:, 0], 1.0)
    assert np.allclose(n[right], [1.0, 0.0])


def test_polygon_mesh_valid():
    mesh = build_mesh(DomainSpec.polygon([[0, 0], [2, 0], [2.5, 1], [1, 2], [-0.5, 1]]), 0.2)
    check_valid(mesh, 0.2)


@pytest.mark.parametrize("spec", [DomainSpec.disk(), DomainSpec.rectangle(-1, 0, 1, 0.5),
                                  DomainSpec.polygon([[0, 0], [1, 0], [0, 1]])])
def test_normals_outward_unit(spec):
    mesh = build_mesh(spec, 0.1)
    n = boundary_normals(mesh)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
    # the vertex opposite each boundary edge lies on the inner side
    tri_of = {}
    for t in mesh.triangles.tolist():
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            tri_of[(a, b)] = t
    for (a, b), nv in zip(mesh.boundary_edges.tolist(), n):
        t = tri_of[(a, b)]
        c = [v for v in t if v not in (a, b)][0]
        mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        assert np.dot(nv, mesh.vertices[c] - mid) < 0


def test_disk_normals_close_to_radial():
    mesh = build_mesh(DomainSpec.disk(), 0.05)
    mid = mesh.vertices[mesh.boundary_edges].mean(axis=1)
    err = np.linalg.norm(mesh.normals - mid / np.linalg.norm(mid, axis=1)[:, None], axis=1)
    assert err.max() <= mesh.h


@pytest.mark.parametrize("h", [0.0, -1.0, float("nan"), 2.0])
def test_rejects_bad_h(h):
    with pytest.raises(MeshError):
        build_mesh(DomainSpec.disk(), h)


def test_rejects_degenerate_polygons():
    with pytest.raises(MeshError, match="collinear"):
        DomainSpec.polygon([[0, 0], [1, 0], [2, 0], [1, 1]])
    with pytest.raises(MeshError):
        DomainSpec.polygon([[0, 0], [0, 1], [1, 0]])      # clockwise


def test_mesh_roundtrip(tmp_path):
    mesh = build_mesh(DomainSpec.disk(), 0.2)
    write_mesh(mesh, tmp_path / "m.txt")
    head = (tmp_path / "m.txt").read_text().splitlines()[0].split()
    assert list(map(int, head[:3])) == [mesh.n_vertices, mesh.n_triangles, len(mesh.boundary_edges)]
    back = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.boundary_edges, mesh.boundary_edges)
    assert np.array_equal(back.normals, mesh.normals)


def test_read_mesh_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("3 1 3 0.1\n0 0\n1 0\n")
    with pytest.raises(MeshError):
        read_mesh(p)


def test_distance_to_boundary():
    sq = DomainSpec.rectangle(0, 0, 2, 1)
    assert np.allclose(sq.distance_to_boundary([[1, 0.5], [0.1, 0.5], [1.9, 0.2]]), [0.5, 0.1, 0.1])
    assert np.allclose(DomainSpec.disk().distance_to_boundary([[0, 0], [0.5, 0]]), [1.0, 0.5])
