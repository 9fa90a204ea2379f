"""
Tests for Carleson Estimates

Closed-form harmonic functions on the half-plane give exact targets:
for u = a x + b y + c the functional over the unit half disc is
(a^2 + b^2) * 2/3, and for the angle function arg(z)/pi it is 2/pi^2.

Run tests with: pytest tests/test_carleson.py
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from src.carleson import (
    HarmonicFunctionHandle,
    PiecewiseApproximant,
    carleson_functional,
    checkerboard_region,
    dist_integral,
    eps_approximant,
    grad_estimate,
)
from src.errors import ParameterError, PreconditionError
from src.geometry import Ball, BoundaryRegion, CantorSpec, make_cantor
from src.potential import poisson_halfplane
from src.whitney import whitney_decompose


# ============================================================================
# Handle Tests
# ============================================================================


class TestHandles:
    """Tests for harmonic function handles and gradients."""

    def test_unknown_formula(self, halfplane):
        with pytest.raises(ParameterError):
            HarmonicFunctionHandle.analytic(halfplane, "cubic")

    def test_closed_forms_are_harmonic(self, halfplane, laplacian):
        for formula, coeffs in [("linear", (2.0, -1.0, 0.5)), ("re-z2", ()), ("halfplane-angle", (0.3,))]:
            u = HarmonicFunctionHandle.analytic(halfplane, formula, coeffs)
            assert abs(laplacian(lambda q: u.value(np.array(q))[0], (0.2, 0.6))) < 1e-3

    def test_angle_is_bounded(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "halfplane-angle", (0.0,))
        assert u.check_bound(np.array([[0.1, 0.1], [-3.0, 0.01], [5.0, 2.0]]))

    def test_walk_handle_has_no_closed_gradient(self, halfplane):
        u = HarmonicFunctionHandle.harmonic_measure(BoundaryRegion.all(halfplane), 100, 1)
        with pytest.raises(ParameterError):
            u.gradient(np.array([[0.0, 1.0]]))

    def test_linear_gradient(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "linear", (2.0, -1.0, 0.5))

        grad, err = grad_estimate(u, (0.0, 1.0), 0.1)

        np.testing.assert_allclose(grad, [2.0, -1.0], atol=1e-9)
        np.testing.assert_array_equal(err, [0.0, 0.0])

    def test_step_too_large(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "linear", (2.0, -1.0, 0.5))
        with pytest.raises(PreconditionError):
            grad_estimate(u, (0.0, 1.0), 0.6)
        with pytest.raises(PreconditionError):
            grad_estimate(u, (0.0, 1.0), 0.0)

    @pytest.mark.slow
    def test_walk_gradient_matches_poisson(self, halfplane):
        """Paired walks recover the gradient of the harmonic measure of [-1, 1]."""
        region = BoundaryRegion(halfplane, frozenset({"axis"}), Ball((0.0, 0.0), 1.0))
        u = HarmonicFunctionHandle.harmonic_measure(region, 20_000, 5, shell=1e-4)

        grad, err = grad_estimate(u, (0.0, 1.0), 0.2)

        assert abs(grad[0]) <= 4 * err[0] + 0.02
        assert abs(grad[1] + 1.0 / math.pi) <= 4 * err[1] + 0.02
        assert poisson_halfplane((0.0, 1.0), -1.0, 1.0) == pytest.approx(0.5)


# ============================================================================
# Carleson Functional Tests
# ============================================================================


class TestCarlesonFunctional:
    """Tests for the Whitney quadrature of the Carleson functional."""

    def test_constant_has_zero_functional(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "constant", (0.7,))

        report = carleson_functional(halfplane, u, (0.0, 0.0), 1.0, 2.0**-5)

        assert report.value == 0.0
        assert report.quadrature_cells > 0

    @pytest.mark.parametrize("a, b", [(1.0, 0.0), (0.5, -0.5)])
    def test_linear_function(self, halfplane, a, b):
        u = HarmonicFunctionHandle.analytic(halfplane, "linear", (a, b, 0.0), sup_norm=2.0)

        report = carleson_functional(halfplane, u, (0.0, 0.0), 1.0, 2.0**-6, quad=16)

        assert report.value == pytest.approx((a * a + b * b) * 2.0 / 3.0, rel=0.05)
        assert report.refinement_delta < 0.05 * report.value
        assert report.truncation_bound > 0

    @pytest.mark.slow
    def test_angle_function(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "halfplane-angle", (0.0,))

        report = carleson_functional(halfplane, u, (0.0, 0.0), 1.0, 2.0**-10, quad=8)

        assert report.value == pytest.approx(2.0 / math.pi**2, rel=0.05)

    @pytest.mark.slow
    @pytest.mark.parametrize("a", [-3.0, 0.5, 7.0])
    def test_angle_function_along_the_axis(self, halfplane, a):
        u = HarmonicFunctionHandle.analytic(halfplane, "halfplane-angle", (a,))

        report = carleson_functional(halfplane, u, (a, 0.0), 1.0, 2.0**-10, quad=8)

        assert report.value == pytest.approx(2.0 / math.pi**2, rel=0.05)

    def test_dilation_leaves_the_functional_unchanged(self, halfplane):
        """u(z / 2) on B(0, 2) matches u on B(0, 1) once the cells scale too."""
        u = HarmonicFunctionHandle.analytic(halfplane, "halfplane-angle", (0.3,))
        dilated = HarmonicFunctionHandle.analytic(halfplane, "halfplane-angle", (0.6,))

        unit = carleson_functional(halfplane, u, (0.0, 0.0), 1.0, 2.0**-6, quad=8)
        double = carleson_functional(halfplane, dilated, (0.0, 0.0), 2.0, 2.0**-5, quad=8)

        assert double.value == pytest.approx(unit.value, rel=1e-3)

    def test_numerator_adds_over_disjoint_cells(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "halfplane-angle", (0.1,))
        wd = whitney_decompose(halfplane, Ball((0.0, 0.0), 1.0), 2.0**-5)
        left = replace(wd, cells=wd.cells[::2])
        right = replace(wd, cells=wd.cells[1::2])

        whole = carleson_functional(halfplane, u, (0.0, 0.0), 1.0, 2.0**-5, decomposition=wd)
        parts = [carleson_functional(halfplane, u, (0.0, 0.0), 1.0, 2.0**-5, decomposition=w) for w in (left, right)]

        assert parts[0].numerator + parts[1].numerator == pytest.approx(whole.numerator, rel=1e-9)
        assert min(p.numerator for p in parts) > 0

    def test_numerator_grows_with_the_radius(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "halfplane-angle", (0.1,))

        numerators = [
            carleson_functional(halfplane, u, (0.0, 0.0), r, 2.0**-6, quad=8).numerator for r in (0.25, 0.5, 1.0, 2.0)
        ]

        assert numerators == sorted(numerators)
        assert numerators[0] > 0

    def test_center_off_boundary(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "constant", (1.0,))
        with pytest.raises(PreconditionError):
            carleson_functional(halfplane, u, (0.0, 1.0), 1.0, 2.0**-5)

    def test_radius_out_of_range(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "constant", (1.0,))
        with pytest.raises(PreconditionError):
            carleson_functional(halfplane, u, (0.0, 0.0), 500.0, 2.0**-5)

    def test_report_serializes(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "re-z2")

        data = carleson_functional(halfplane, u, (0.0, 0.0), 0.5, 2.0**-4).to_dict()

        assert data["center"] == [0.0, 0.0]
        assert data["radius"] == 0.5
        assert data["value"] > 0


# ============================================================================
# Cantor Dichotomy Tests
# ============================================================================


class TestDichotomy:
    """Tests for the checkerboard data and the 1/dist integral."""

    def test_checkerboard_labels(self, cantor_small):
        region = checkerboard_region(cantor_small)

        assert len(region.piece_ids) == 8
        assert "q0/top" in region.piece_ids
        assert "q1/top" not in region.piece_ids

    def test_checkerboard_needs_cantor(self, halfplane):
        with pytest.raises(ParameterError):
            checkerboard_region(halfplane)

    def test_dist_integral_report(self, cantor_small):
        report = dist_integral(cantor_small, (0.0, 0.0), 1.0, quad_cells=16, max_depth=8, refinements=2)

        assert report.value > 0
        assert report.cutoff == pytest.approx(0.25)
        assert len(report.refinements) == 2
        assert report.to_dict()["radius"] == 1.0

    def test_dist_integral_radius(self, cantor_small):
        with pytest.raises(ParameterError):
            dist_integral(cantor_small, (0.0, 0.0), 0.0)

    @pytest.mark.slow
    def test_small_ratio_converges(self):
        """Below ratio 1/4 deeper levels barely change the integral."""
        values = [
            dist_integral(make_cantor(CantorSpec(0.125, n)), (0.0, 0.0), 1.0, 32, max_depth=10, refinements=1).value
            for n in (3, 4)
        ]
        assert abs(values[1] - values[0]) < 0.1 * values[0]

    @pytest.mark.slow
    def test_large_ratio_grows(self):
        """Above ratio 1/4 the integral keeps growing with the level."""
        values = [
            dist_integral(make_cantor(CantorSpec(0.3, n)), (0.0, 0.0), 1.0, 32, max_depth=10, refinements=1).value
            for n in (2, 4)
        ]
        assert values[1] > values[0]


# ============================================================================
# eps-Approximant Tests
# ============================================================================


class TestPiecewiseApproximant:
    """Tests for evaluation and total variation of step functions."""

    def test_equal_neighbors(self):
        g = PiecewiseApproximant({(0, 0, 0): 0.0, (0, 1, 0): 1.0})
        assert g.total_variation() == pytest.approx(1.0)

    def test_mixed_levels(self):
        g = PiecewiseApproximant({(0, 0, 0): 0.0, (1, 2, 0): 1.0})

        assert g.total_variation() == pytest.approx(0.5)
        values = g.evaluate(np.array([[0.5, 0.5], [1.25, 0.25], [5.0, 5.0]]))
        assert values[:2].tolist() == [0.0, 1.0]
        assert math.isnan(values[2])

    def test_empty(self):
        assert PiecewiseApproximant({}).total_variation() == 0.0

    def test_width_range(self):
        with pytest.raises(ParameterError):
            PiecewiseApproximant({(0, 0, 0): 0.0}, mollify=0.25)


class TestFaceBlending:
    """Tests for the ramps that blend cell values across faces."""

    @pytest.fixture
    def step(self):
        """Two unit cells with values 0 and 1 and ramps of half-width 1/8."""
        return PiecewiseApproximant({(0, 0, 0): 0.0, (0, 1, 0): 1.0}, mollify=0.125)

    def test_values_across_the_face(self, step):
        points = np.array([[0.5, 0.5], [1.0, 0.5], [1.0625, 0.5], [1.2, 0.5], [1.0, 0.05], [5.0, 5.0]])

        values = step.evaluate(points)

        assert values[:5] == pytest.approx([0.0, 0.5, 0.75, 1.0, 0.5])
        assert math.isnan(values[5])

    def test_lipschitz_across_the_face(self, step):
        xs = np.linspace(0.8, 1.2, 401)

        values = step.evaluate(np.column_stack([xs, np.full_like(xs, 0.5)]))

        assert np.all(np.diff(values) >= 0.0)
        assert np.max(np.diff(values) / np.diff(xs)) <= 4.0 * (1 + 1e-9)

    def test_step_function_without_ramps(self):
        g = PiecewiseApproximant({(0, 0, 0): 0.0, (0, 1, 0): 1.0})
        assert g.evaluate(np.array([[1.0625, 0.5]])).tolist() == [1.0]

    def test_budget(self, step):
        assert step.mollifier_budget() == pytest.approx(0.5)
        assert PiecewiseApproximant({(0, 0, 0): 0.0, (0, 1, 0): 1.0}).mollifier_budget() == 0.0

    def test_mixed_levels_budget_uses_the_coarser_side(self):
        g = PiecewiseApproximant({(0, 0, 0): 0.0, (1, 2, 0): 1.0}, mollify=0.125)
        assert g.mollifier_budget() == pytest.approx(4.0 * 0.125 * 1.0)


class TestEpsApproximant:
    """Tests for eps-approximants of bounded harmonic functions."""

    def test_large_eps_gives_zero(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "constant", (0.9,))

        result = eps_approximant(halfplane, u, 2.0, Ball((0.0, 0.0), 1.0), min_side=2.0**-5)

        assert result.success
        assert result.bv_ratio == 0.0
        assert set(result.approximant.values.values()) == {0.0}

    def test_smooth_angle(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "halfplane-angle", (5.0,))

        result = eps_approximant(halfplane, u, 0.1, Ball((0.0, 0.0), 1.0), 2.0**-6, verify_samples=10_000, seed=3)

        assert result.success
        assert result.failures == []
        assert result.sampled_error is not None
        assert result.sampled_error < 0.1
        assert result.bv_ratio == pytest.approx(result.total_variation + result.mollifier_budget)
        assert result.mollifier_budget >= 0.0
        assert result.to_dict()["failure_count"] == 0

    def test_sampled_error_decides_success(self, halfplane, mocker):
        u = HarmonicFunctionHandle.analytic(halfplane, "halfplane-angle", (5.0,))
        mocker.patch("src.carleson.PiecewiseApproximant.evaluate", side_effect=lambda pts: np.full(len(pts), 5.0))

        result = eps_approximant(halfplane, u, 0.1, Ball((0.0, 0.0), 1.0), 2.0**-6, verify_samples=100, seed=3)

        assert result.failures == []
        assert result.sampled_error > 0.1
        assert not result.success

    def test_eps_must_be_positive(self, halfplane):
        u = HarmonicFunctionHandle.analytic(halfplane, "constant", (0.9,))
        with pytest.raises(ParameterError):
            eps_approximant(halfplane, u, 0.0, Ball((0.0, 0.0), 1.0))
