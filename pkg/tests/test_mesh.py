import numpy as np
import pytest

from meshreg import OutOfDomainError, locate_cell, mesh_from_points, regular_mesh


class TestRegularMesh:
    def test_two_points(self):
        m = regular_mesh(0, 1, 2)
        np.testing.assert_array_equal(m.points, [0.0, 1.0])
        np.testing.assert_array_equal(m.widths, [1.0])

    def test_five_points(self):
        m = regular_mesh(0, 1, 5)
        np.testing.assert_allclose(m.points, [0, 0.25, 0.5, 0.75, 1.0])

    def test_symmetric(self):
        m = regular_mesh(-1, 1, 3)
        np.testing.assert_array_equal(m.widths, [1.0, 1.0])
        assert m.is_regular

    @pytest.mark.parametrize("a,b,m", [(1, 1, 3), (2, 1, 3), (0, 1, 1), (0, 1, 0)])
    def test_invalid_arguments(self, a, b, m):
        with pytest.raises(ValueError):
            regular_mesh(a, b, m)


class TestMeshFromPoints:
    def test_irregular_widths(self):
        m = mesh_from_points([0, 1, 3])
        np.testing.assert_array_equal(m.widths, [1.0, 2.0])
        assert not m.is_regular

    def test_regular_flag(self):
        assert mesh_from_points([0, 0.5, 1]).is_regular

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            mesh_from_points([0, 0])

    def test_too_short(self):
        with pytest.raises(ValueError):
            mesh_from_points([1.0])

    def test_unsorted_input_sorted(self):
        m = mesh_from_points([3, 0, 1])
        np.testing.assert_array_equal(m.points, [0.0, 1.0, 3.0])


class TestLocateCell:
    def test_inside_first_cell(self):
        assert locate_cell(mesh_from_points([0, 0.5, 1]), 0.25) == 1

    def test_knot_tie_break_right(self):
        assert locate_cell(mesh_from_points([0, 0.5, 1]), 0.5) == 2

    def test_out_of_domain(self):
        with pytest.raises(OutOfDomainError):
            locate_cell(mesh_from_points([0, 0.5, 1]), 1.5)

    def test_endpoints(self):
        m = mesh_from_points([0, 0.5, 1])
        assert locate_cell(m, 0.0) == 1
        assert locate_cell(m, 1.0) == 2

    def test_monotone_and_consistent(self):
        rng = np.random.default_rng(0)
        mesh = mesh_from_points(np.sort(rng.uniform(0, 10, 12)))
        xs = np.sort(rng.uniform(mesh.lo, mesh.hi, 200))
        cells = [locate_cell(mesh, x) for x in xs]
        assert all(c2 >= c1 for c1, c2 in zip(cells, cells[1:]))
        for x, j in zip(xs, cells):
            assert mesh.points[j - 1] <= x <= mesh.points[j]


class TestInvariants:
    @pytest.mark.parametrize("seed", range(5))
    def test_width_sum_matches_span(self, seed):
        rng = np.random.default_rng(seed)
        mesh = mesh_from_points(np.sort(rng.uniform(-5, 5, 30)))
        span = mesh.points[-1] - mesh.points[0]
        assert abs(mesh.widths.sum() - span) <= 1e-12 * abs(span)

    def test_regular_roundtrip_bitwise(self):
        m1 = regular_mesh(0.1, 2.7, 17)
        m2 = mesh_from_points(m1.points)
        assert np.array_equal(m1.widths, m2.widths)
        assert m1.is_regular == m2.is_regular
