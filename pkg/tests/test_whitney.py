"""
Tests for the Whitney Decomposition

Run tests with: pytest tests/test_whitney.py
"""

import numpy as np
import pytest

from src.errors import ParameterError
from src.geometry import Ball, DyadicCube, make_disc, make_slit
from src.whitney import (
    CASE_I,
    CASE_II,
    UNLABELED,
    WhitneyCell,
    WhitneyConstants,
    case_two_mass,
    check_dilations,
    check_disjoint,
    classify_case,
    label_cases,
    overlap_multiplicity,
    whitney_decompose,
)


# ============================================================================
# Fixtures
# ============================================================================


@pytest.fixture(scope="module")
def halfplane_cells(halfplane):
    """Whitney cells of the half-plane meeting the unit ball at the origin."""
    return whitney_decompose(halfplane, Ball((0.0, 0.0), 1.0), 2.0**-6)


@pytest.fixture(scope="module")
def cantor_cells(cantor_deep):
    """Whitney cells of a level-3 Cantor domain around the unit square."""
    return whitney_decompose(cantor_deep, Ball((0.5, 0.5), 1.0), 2.0**-8)


# ============================================================================
# Decomposition Tests
# ============================================================================


class TestHalfplaneDecomposition:
    """Tests against the explicit Whitney squares of the half-plane."""

    def test_cells_sit_in_the_first_row(self, halfplane_cells):
        """Maximal squares of the half-plane are the squares one side above the axis."""
        assert len(halfplane_cells) > 0
        assert all(cell.cube.index[1] == 1 for cell in halfplane_cells)

    def test_distance_is_one_and_a_half_sides(self, halfplane_cells):
        for cell in halfplane_cells:
            assert cell.dist == pytest.approx(1.5 * cell.side)

    def test_dilation_audits(self, halfplane, halfplane_cells):
        assert check_dilations(halfplane, halfplane_cells) == {"c6_violations": 0, "c7_violations": 0}

    def test_disjoint_and_bounded_overlap(self, halfplane_cells):
        assert check_disjoint(halfplane_cells)
        assert 1 <= overlap_multiplicity(halfplane_cells) <= 12

    def test_truncated_remainder_is_reported(self, halfplane_cells):
        summary = halfplane_cells.summary()

        assert summary["truncated_count"] > 0
        assert summary["remainder_area"] > 0
        assert summary["cells"] == len(halfplane_cells)
        assert summary["case_I"] == summary["case_II"] == 0

    def test_frame_and_lookup(self, halfplane_cells):
        frame = halfplane_cells.to_frame()
        first = halfplane_cells[0]

        assert list(frame.columns) == ["level", "i", "j", "side", "case", "dist"]
        assert len(frame) == len(halfplane_cells)
        assert halfplane_cells.find(first.cube.level, first.cube.index) == first
        assert halfplane_cells.find(99, (0, 0)) is None

    def test_canonical_order(self, halfplane_cells):
        keys = [cell.key for cell in halfplane_cells]
        assert keys == sorted(keys)


class TestCantorDecomposition:
    """Tests on a Cantor complement."""

    def test_dilation_audits(self, cantor_deep, cantor_cells):
        assert check_dilations(cantor_deep, cantor_cells) == {"c6_violations": 0, "c7_violations": 0}

    def test_disjoint_and_bounded_overlap(self, cantor_cells):
        assert check_disjoint(cantor_cells)
        assert overlap_multiplicity(cantor_cells) <= 12

    def test_cells_lie_in_the_domain(self, cantor_deep, cantor_cells):
        centers = np.array([cell.cube.center for cell in cantor_cells])
        assert cantor_deep.contains(centers).all()


class TestValidation:
    """Tests for argument validation."""

    def test_min_side_must_be_positive(self, halfplane):
        with pytest.raises(ParameterError):
            whitney_decompose(halfplane, Ball((0.0, 0.0), 1.0), 0.0)

    def test_constants_must_be_ordered(self):
        with pytest.raises(ParameterError):
            WhitneyConstants(c6=0.9)


# ============================================================================
# Case Labeling Tests
# ============================================================================


class TestCases:
    """Tests for Case I/II labels against a second boundary."""

    def test_classify_against_slit(self):
        slit = make_slit()

        assert classify_case(WhitneyCell(DyadicCube(2, (1, 1))), slit) == CASE_I
        assert classify_case(WhitneyCell(DyadicCube(3, (2, 0))), slit) == CASE_II

    def test_label_cases_against_circle(self, halfplane_cells):
        labeled = label_cases(halfplane_cells, make_disc())
        summary = labeled.summary()

        assert summary["case_I"] + summary["case_II"] == summary["cells"]
        assert summary["case_II"] > 0
        assert case_two_mass(labeled, (0.0, 1.0), 0.5) > 0
        assert all(cell.case == UNLABELED for cell in halfplane_cells)

    def test_mass_without_case_two_cells(self, halfplane_cells):
        assert case_two_mass(halfplane_cells, (0.0, 1.0), 0.5) == 0.0
