"""
Tests for the Augmented Domain

Run tests with: pytest tests/test_augment.py
"""

import math

import numpy as np
import pytest

from src.augment import (
    CAP_GATE,
    SigmaMeasure,
    ahlfors_audit,
    arcs_meet,
    build_augmented,
    cantor_disc_augmentation,
    cap_collisions,
    containment_audit,
    max_c18,
    place_caps,
    upper_density_audit,
)
from src.corona import CoronaParams
from src.cubes import Cube
from src.errors import GeometryError, ParameterError, PreconditionError
from src.geometry import CAP, TWO_PI, Arc, Ball, CantorSpec, make_disc, make_slit

THRESHOLDS = CoronaParams(A=4.0, delta=0.03, eps=0.1)


# ============================================================================
# Fixtures
# ============================================================================


def make_cube(index=0, corkscrew=Ball((0.0, 0.1), 0.01)):
    return Cube(1, index, (0.0, 0.0), 0.25, np.arange(3), anchor=(0.0, 0.0), corkscrew=corkscrew)


@pytest.fixture
def cube():
    """Level-1 cube at the origin with a corkscrew ball straight above it."""
    return make_cube()


# ============================================================================
# Cap Tests
# ============================================================================


class TestPlaceCaps:
    """Tests for cap placement around a corkscrew ball."""

    def test_two_caps(self, cube):
        capset = place_caps(cube, 0.1)

        assert len(capset.caps) == 2
        assert capset.caps[0][0] == pytest.approx(-math.pi / 2)
        assert capset.caps[1][0] == pytest.approx(math.pi / 2)
        assert capset.sphere.radius == pytest.approx(0.015)
        assert capset.area == pytest.approx(0.1 * 0.25)

    def test_caps_are_labeled_arcs(self, cube):
        arcs = place_caps(cube, 0.1).arcs()

        assert [arc.label for arc in arcs] == ["cap-1-0-0", "cap-1-0-1"]
        assert all(arc.role == CAP for arc in arcs)

    def test_too_long_for_separation(self, cube):
        with pytest.raises(GeometryError):
            place_caps(cube, 1.1 * max_c18(cube, 2))

    def test_cap_count(self, cube):
        with pytest.raises(ParameterError):
            place_caps(cube, 0.1, cap_count=0)

    def test_needs_corkscrew(self):
        with pytest.raises(PreconditionError):
            place_caps(make_cube(corkscrew=None), 0.1)

    def test_caps_must_stay_inside(self, halfplane):
        low = make_cube(corkscrew=Ball((0.0, 0.01), 0.01))
        with pytest.raises(GeometryError):
            place_caps(low, 0.1, domain=halfplane)


class TestArcIntersection:
    """Tests for exact arc intersection."""

    def test_crossing_arcs(self):
        a = Arc((0.0, 0.0), 1.0, 0.0, math.pi, "a")
        b = Arc((1.0, 0.0), 1.0, math.pi / 2, math.pi, "b")
        assert arcs_meet(a, b)

    def test_circles_meet_outside_the_arcs(self):
        a = Arc((0.0, 0.0), 1.0, 0.0, math.pi, "a")
        b = Arc((1.0, 0.0), 1.0, 1.5 * math.pi, TWO_PI, "b")
        assert not arcs_meet(a, b)

    def test_far_circles(self):
        a = Arc((0.0, 0.0), 1.0, 0.0, TWO_PI, "a")
        b = Arc((5.0, 0.0), 1.0, 0.0, TWO_PI, "b")
        assert not arcs_meet(a, b)

    def test_same_circle(self):
        a = Arc((0.0, 0.0), 1.0, 0.0, 1.0, "a")
        b = Arc((0.0, 0.0), 1.0, 0.5, 2.0, "b")
        assert arcs_meet(a, b)

    def test_collisions_between_hosts(self):
        first = place_caps(make_cube(0), 0.1)
        same_place = place_caps(make_cube(1), 0.1)
        elsewhere = place_caps(make_cube(2, Ball((3.0, 3.0), 0.01)), 0.1)

        assert cap_collisions([first]) == []
        assert cap_collisions([first, elsewhere]) == []
        assert cap_collisions([first, same_place, elsewhere]) == [((1, 0), (1, 1))]


# ============================================================================
# Sigma Tests
# ============================================================================


class TestSigma:
    """Tests for the boundary measure."""

    def test_arclength_on_cantor(self, cantor_small):
        sigma = SigmaMeasure.from_arclength(cantor_small)

        assert sigma.total_mass == pytest.approx(4.0)
        assert sigma.mu_mass == 0.0
        assert sigma.mass(Ball((0.125, 0.125), 0.05)) == 0.0
        assert sigma.mass(Ball((0.125, 0.0), 0.05)) == pytest.approx(0.1)

    def test_frame_matches_total(self, cantor_small):
        sigma = SigmaMeasure.from_arclength(cantor_small)
        frame = sigma.to_frame()

        assert len(frame) == 16
        assert frame["mass"].sum() == pytest.approx(sigma.total_mass)


class TestAhlfors:
    """Tests for the sampled density ratios."""

    def test_segment_ratios(self):
        report = upper_density_audit(make_slit(), 200, 4)

        assert report.min_ratio >= 1.0 - 1e-9
        assert report.max_ratio <= 2.0 + 1e-9
        assert len(report.table) == 200

    def test_circle_ratios(self):
        report = ahlfors_audit(SigmaMeasure.from_arclength(make_disc()), 200, 4)

        assert report.min_ratio >= 2.0 - 1e-6
        assert report.max_ratio <= math.pi
        assert report.constant == pytest.approx(max(report.max_ratio, 1.0 / report.min_ratio))

    def test_trials_must_be_positive(self):
        with pytest.raises(ParameterError):
            ahlfors_audit(SigmaMeasure.from_arclength(make_disc()), 0, 4)

    def test_empty_window(self):
        sigma = SigmaMeasure.from_arclength(make_disc())
        with pytest.raises(PreconditionError):
            ahlfors_audit(sigma, 10, 4, within=Ball((0.0, 0.0), 0.5))


# ============================================================================
# Containment Tests
# ============================================================================


class TestContainment:
    """Tests for the containment audit of added pieces."""

    def test_inner_circle(self, disc):
        augmented = disc.with_pieces([Arc((0.0, 0.0), 0.5, 0.0, TWO_PI, "inner", CAP)])

        audit = containment_audit(disc, augmented)

        assert audit["holds"]
        assert audit["cap_points_outside"] == 0
        assert audit["min_cap_distance"] == pytest.approx(0.5)

    def test_crossing_circle(self, disc):
        augmented = disc.with_pieces([Arc((1.0, 0.0), 0.5, 0.0, TWO_PI, "cross", CAP)])

        audit = containment_audit(disc, augmented)

        assert not audit["holds"]
        assert audit["cap_points_outside"] > 0


class TestCantorDiscs:
    """Tests for central discs on small Cantor sets."""

    def test_ratio_must_be_small(self):
        with pytest.raises(ParameterError):
            cantor_disc_augmentation(CantorSpec(0.3, 2))

    def test_discs_stay_inside(self):
        augmented = cantor_disc_augmentation(CantorSpec(0.2, 2), budget=2000, seed=2)

        assert augmented.audits["containment"]["holds"]
        assert augmented.audits["discs"] == 5
        assert augmented.audits["c"] == pytest.approx(0.15)
        assert 0.0 <= augmented.audits["omega_K_augmented"]["value"] <= 1.0


# ============================================================================
# Augmentation Tests
# ============================================================================


@pytest.mark.slow
def test_build_augmented_on_slit(certified_slit_family, mocker):
    """Two stopped children get calibrated caps and the closing generation keeps its mass."""
    family = certified_slit_family
    hosts = [family.cube(1, 2), family.cube(1, 10)]

    def scan(family, root, params, budget, make_hits, reach=1.0):
        return {"stopped": [(c, None) for c in hosts]}, make_hits(budget), budget

    mocker.patch("src.augment.scan_with_budget", side_effect=scan)

    augmented, sigma = build_augmented(family.domain, family, THRESHOLDS, depth=1, budget=2000, seed=1)

    assert [cs.host for cs in augmented.capsets] == [(1, 2), (1, 10)]
    assert all(CAP_GATE[0] <= c.gate.value <= CAP_GATE[1] for c in augmented.calibrations)
    audits = augmented.audits
    assert audits["containment"]["holds"]
    assert audits["containment"]["collisions"] == []
    assert audits["mass_identity"]
    assert audits["partial_sums"] == {"0-0": [pytest.approx(2.0 * 2.0**-8)]}
    assert sigma.nu_mass == pytest.approx(sum(cs.area for cs in augmented.capsets))
    assert len(sigma.pieces) == 3
    assert "c18" in family.ledger


def test_depth_range(certified_slit_family):
    with pytest.raises(ParameterError):
        build_augmented(certified_slit_family.domain, certified_slit_family, THRESHOLDS, depth=4, budget=10, seed=1)


def test_needs_certified_family(slit_family):
    with pytest.raises(PreconditionError):
        build_augmented(slit_family.domain, slit_family, THRESHOLDS, depth=1, budget=10, seed=1)
