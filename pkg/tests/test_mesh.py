import numpy as np
import pytest

from helmdd.mesh import (build_unit_square_mesh, dump_mesh, interior_dof_maps,
                         mesh_for_wavenumber)


def signed_areas(mesh):
    pts = mesh.nodes[mesh.triangles]
    return 0.5 * ((pts[:, 1, 0] - pts[:, 0, 0]) * (pts[:, 2, 1] - pts[:, 0, 1])
                  - (pts[:, 2, 0] - pts[:, 0, 0]) * (pts[:, 1, 1] - pts[:, 0, 1]))


class TestCounts:
    def test_n2(self):
        mesh = build_unit_square_mesh(2)
        assert mesh.n_nodes == 9
        assert mesh.n_triangles == 8
        assert mesh.boundary_mask.sum() == 8

    def test_n4_counts_and_area(self):
        mesh = build_unit_square_mesh(4)
        assert mesh.n_nodes == 25
        assert mesh.n_triangles == 32
        assert signed_areas(mesh).sum() == pytest.approx(1.0, abs=1e-12)

    def test_resolution_rule_example(self):
        mesh = build_unit_square_mesh(200)
        assert mesh.h == pytest.approx(0.005)
        assert 20.0 * mesh.h == pytest.approx(0.1)

    def test_rejects_tiny(self):
        with pytest.raises(ValueError):
            build_unit_square_mesh(1)


class TestGeometry:
    @pytest.mark.parametrize("n", [2, 5, 8])
    def test_positive_orientation_uniform_area(self, n):
        mesh = build_unit_square_mesh(n)
        areas = signed_areas(mesh)
        assert np.all(areas > 0)
        np.testing.assert_allclose(areas, mesh.h ** 2 / 2, rtol=1e-12)

    def test_area_partition(self):
        mesh = build_unit_square_mesh(7)
        assert abs(signed_areas(mesh).sum() - 1.0) < 1e-12

    def test_boundary_mask(self):
        mesh = build_unit_square_mesh(5)
        on_edge = ((mesh.nodes[:, 0] == 0) | (mesh.nodes[:, 0] == 1)
                   | (mesh.nodes[:, 1] == 0) | (mesh.nodes[:, 1] == 1))
        np.testing.assert_array_equal(mesh.boundary_mask, on_edge)

    def test_incidence_totals(self):
        # every triangle contributes three (node, triangle) incidences
        mesh = build_unit_square_mesh(6)
        counts = np.bincount(mesh.triangles.ravel(), minlength=mesh.n_nodes)
        assert counts.sum() == 3 * mesh.n_triangles

    def test_interior_incidence_pattern(self):
        # checkerboard diagonals: interior nodes where diagonals meet touch 8
        # triangles, the others 4
        n = 6
        mesh = build_unit_square_mesh(n)
        counts = np.bincount(mesh.triangles.ravel(), minlength=mesh.n_nodes)
        for iy in range(1, n):
            for ix in range(1, n):
                c = counts[iy * (n + 1) + ix]
                expected = 8 if (ix + iy) % 2 == 0 else 4
                assert c == expected, (ix, iy, c)

    def test_alternating_diagonals(self):
        # cell (i, j) carries the lower-left node in both triangles iff i+j even
        n = 4
        mesh = build_unit_square_mesh(n)
        for j in range(n):
            for i in range(n):
                t0 = mesh.triangles[2 * (j * n + i)]
                t1 = mesh.triangles[2 * (j * n + i) + 1]
                ll = j * (n + 1) + i
                ur = (j + 1) * (n + 1) + i + 1
                if (i + j) % 2 == 0:
                    assert ll in t0 and ll in t1 and ur in t0 and ur in t1
                else:
                    assert ll in t0 and ll not in t1
                    assert ur in t1 and ur not in t0


class TestDeterminism:
    def test_bit_identical(self):
        a = build_unit_square_mesh(9)
        b = build_unit_square_mesh(9)
        assert np.array_equal(a.nodes, b.nodes)
        assert np.array_equal(a.triangles, b.triangles)
        assert np.array_equal(a.boundary_mask, b.boundary_mask)


class TestMeshForWavenumber:
    @pytest.mark.parametrize("k,target,expected", [
        (20.0, 0.1, 200),
        (100.0, 0.1, 1000),
        (1.0, 0.5, 2),
    ])
    def test_examples(self, k, target, expected):
        assert mesh_for_wavenumber(k, target) == expected

    def test_minimality(self):
        n = mesh_for_wavenumber(7.3, 0.11)
        assert 7.3 / n <= 0.11 * (1 + 1e-12)
        assert 7.3 / (n - 1) > 0.11

    def test_preconditions(self):
        with pytest.raises(ValueError):
            mesh_for_wavenumber(-1.0, 0.1)
        with pytest.raises(ValueError):
            mesh_for_wavenumber(10.0, 1.5)


class TestInteriorMaps:
    def test_roundtrip(self):
        mesh = build_unit_square_mesh(4)
        interior, node_to_dof = interior_dof_maps(mesh)
        assert interior.size == (4 - 1) ** 2
        assert np.all(node_to_dof[interior] == np.arange(interior.size))
        assert np.all(node_to_dof[mesh.boundary_mask] == -1)


def test_dump_mesh_roundtrip(tmp_path):
    mesh = build_unit_square_mesh(3)
    text = dump_mesh(mesh)
    lines = text.strip().split("\n")
    assert lines[0].split() == ["3", "0.33333333333333331"]
    assert len(lines) == 1 + mesh.n_nodes + mesh.n_triangles
    x, y, flag = lines[1].split()
    assert (float(x), float(y), int(flag)) == (0.0, 0.0, 1)
