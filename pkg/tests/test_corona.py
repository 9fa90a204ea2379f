"""
Tests for the Corona Decomposition

Stopping decisions are driven through a deterministic stand-in for the
stencil hit counts, so every HD/LD/undecidable outcome is exact. One test
runs real walks on the slit family to check the hit bookkeeping.

Run tests with: pytest tests/test_corona.py
"""

import math

import numpy as np
import pytest

from src.corona import (
    HD,
    LD,
    CoronaParams,
    StencilHits,
    disjoint_packing,
    generations,
    harnack_constant,
    hd_bound_check,
    interlacing,
    stop_children,
)
from src.errors import IndeterminacyError, ParameterError, PreconditionError
from src.geometry import Ball

N_PATHS = 10_000
HD_INDEX = 2
LD_INDEX = 10


# ============================================================================
# Fixtures
# ============================================================================


class FakeHits:
    """Stencil hits with fixed per-cube fractions (S fraction, 2S fraction)."""

    def __init__(self, family, samples, fractions, default=(0.1, 0.1)):
        self.family = family
        self.samples = samples
        self.fractions = fractions
        self.default = default

    def _fraction(self, index):
        return self.fractions.get(index, self.default)

    def counts(self, level):
        size = len(self.family.nets[level])
        row = np.array([round(self._fraction(i)[0] * self.samples) for i in range(size)], dtype=np.int64)
        return [row.copy() for _ in range(5)]

    def dilated_counts(self, cube, reach=1.0):
        return np.full(5, round(self._fraction(cube.index)[1] * self.samples), dtype=np.int64)


@pytest.fixture
def params():
    """HD at 4 (l/l0), LD at 0.03 (l/l0)."""
    return CoronaParams(A=4.0, delta=0.03, eps=0.1)


@pytest.fixture
def rooted_family(slit_family):
    """Slit family whose root carries a hand-placed corkscrew ball."""
    slit_family.roots()[0].corkscrew = Ball((0.5, 0.1), 0.01)
    return slit_family


@pytest.fixture
def fake_hits(mocker):
    """Patch StencilHits with FakeHits; returns the list of budgets requested."""
    state = {"fractions": {}, "budgets": []}

    def factory(family, points, budget, seed, shell, workers, key, domain=None):
        state["budgets"].append(budget)
        return FakeHits(family, budget, state["fractions"])

    mocker.patch("src.corona.StencilHits", side_effect=factory)
    return state


# ============================================================================
# Parameter Tests
# ============================================================================


class TestParams:
    """Tests for threshold validation."""

    def test_eps_range(self):
        with pytest.raises(ParameterError):
            CoronaParams(A=4.0, delta=0.01, eps=0.5)

    def test_delta_below_a_third_of_eps(self):
        with pytest.raises(ParameterError):
            CoronaParams(A=4.0, delta=0.04, eps=0.1)

    def test_A_above_delta(self):
        with pytest.raises(ParameterError):
            CoronaParams(A=0.01, delta=0.02, eps=0.1)

    def test_zero_delta_allowed(self):
        assert CoronaParams(A=4.0, delta=0.0).to_dict()["delta"] == 0.0


# ============================================================================
# Stopping Tests
# ============================================================================


class TestStopChildren:
    """Tests for the HD/LD stopping scan."""

    def test_hd_and_ld_cubes_stop(self, rooted_family, params, fake_hits):
        fake_hits["fractions"].update({HD_INDEX: (0.3, 0.6), LD_INDEX: (0.0, 0.0)})
        root = rooted_family.roots()[0]

        result = stop_children(root, rooted_family, params, N_PATHS, seed=1)

        kinds = {cube.index: label.kind for cube, label in result.stopped}
        assert kinds == {HD_INDEX: HD, LD_INDEX: LD}
        assert result.undecidable == []
        assert result.exclusivity_violations == []
        assert result.hd_overlap == 1
        assert result.ld_scale_sum == pytest.approx(1.0 / 16)
        assert result.ld_measure_sum == 0.0
        assert result.ld_bound_holds
        assert result.harnack_ratio == pytest.approx(1.0)
        assert fake_hits["budgets"] == [N_PATHS]

    def test_cube_both_hd_and_ld_is_reported(self, rooted_family, params, fake_hits):
        fake_hits["fractions"].update({HD_INDEX: (0.0, 0.6)})

        result = stop_children(rooted_family.roots()[0], rooted_family, params, N_PATHS, seed=1)

        assert result.exclusivity_violations == [(1, HD_INDEX)]
        assert [label.kind for _, label in result.stopped] == [HD]

    def test_small_undecidable_mass_is_tolerated(self, rooted_family, params, fake_hits):
        fake_hits["fractions"].update({HD_INDEX: (0.01, 0.25)})

        result = stop_children(rooted_family.roots()[0], rooted_family, params, N_PATHS, seed=1)

        assert result.undecidable == [((1, HD_INDEX), pytest.approx(0.01))]
        assert result.undecidable_mass == pytest.approx(0.01)
        assert result.stopped == []

    def test_budget_doubles_then_gives_up(self, rooted_family, params, fake_hits):
        """Undecidable mass above 5% doubles the budget up to eight times."""
        fake_hits["fractions"].update({HD_INDEX: (0.1, 0.25)})

        with pytest.raises(IndeterminacyError) as excinfo:
            stop_children(rooted_family.roots()[0], rooted_family, params, N_PATHS, seed=1)

        assert fake_hits["budgets"] == [N_PATHS, 2 * N_PATHS, 4 * N_PATHS, 8 * N_PATHS]
        assert excinfo.value.exit_code == 4
        assert excinfo.value.diagnostics["mass"] == pytest.approx(0.1)

    def test_decisions_depend_only_on_scale_ratios(self, rooted_family, params, fake_hits):
        fake_hits["fractions"].update({HD_INDEX: (0.3, 0.6), LD_INDEX: (0.0, 0.0)})
        root = rooted_family.roots()[0]
        before = stop_children(root, rooted_family, params, N_PATHS, seed=1)

        for level in rooted_family.levels:
            for cube in level:
                cube.scale *= 0.125
        after = stop_children(root, rooted_family, params, N_PATHS, seed=1)

        assert [(c.id, lab.kind) for c, lab in after.stopped] == [(c.id, lab.kind) for c, lab in before.stopped]
        assert [lab.ratio for _, lab in after.stopped] == pytest.approx([lab.ratio for _, lab in before.stopped])
        assert after.ld_scale_sum == pytest.approx(before.ld_scale_sum)
        assert after.harnack_ratio == pytest.approx(before.harnack_ratio)

    def test_root_without_corkscrew(self, slit_family, params):
        with pytest.raises(PreconditionError):
            stop_children(slit_family.roots()[0], slit_family, params, N_PATHS, seed=1)

    def test_deepest_level_has_no_children(self, slit_family, params):
        leaf = slit_family.levels[1][0]

        result = stop_children(leaf, slit_family, params, N_PATHS, seed=1)

        assert result.stopped == []
        assert math.isnan(result.harnack_ratio)


# ============================================================================
# Generation Tests
# ============================================================================


class TestGenerations:
    """Tests for the generation recursion and packing sums."""

    def test_two_generations(self, rooted_family, params, fake_hits):
        fake_hits["fractions"].update({HD_INDEX: (0.3, 0.6), LD_INDEX: (0.0, 0.0)})
        root = rooted_family.roots()[0]

        tree = generations(root, rooted_family, params, kmax=3, budget=N_PATHS, seed=1)

        assert [len(gen) for gen in tree.generations] == [2, 0]
        assert tree.partial_sums == pytest.approx([0.125, 0.125])
        assert tree.increments() == pytest.approx([0.125, 0.0])
        assert tree.C1 == 1
        assert harnack_constant(tree) == pytest.approx(1.0)
        assert tree.to_dict()["generations"][0][0]["kind"] == HD

    def test_interlacing_bound(self, rooted_family, params, fake_hits):
        fake_hits["fractions"].update({HD_INDEX: (0.3, 0.6), LD_INDEX: (0.0, 0.0)})
        tree = generations(rooted_family.roots()[0], rooted_family, params, kmax=3, budget=N_PATHS, seed=1)

        report = interlacing(tree, params)

        assert report.H == pytest.approx([1.0 / 16, 0.0])
        assert report.L == pytest.approx([1.0 / 16, 0.0])
        assert report.C2 == pytest.approx(1.0 / 16)
        assert report.bound == pytest.approx(1.3125 / 2.9375)
        assert report.bound_holds

    def test_hd_bound(self, rooted_family, params, fake_hits):
        fake_hits["fractions"].update({HD_INDEX: (0.3, 0.6)})
        result = stop_children(rooted_family.roots()[0], rooted_family, params, N_PATHS, seed=1)

        s, bound, holds = hd_bound_check(result, params)

        assert s == pytest.approx(1.0 / 16)
        assert bound == pytest.approx(0.25)
        assert holds

    def test_kmax_must_be_positive(self, rooted_family, params):
        with pytest.raises(ParameterError):
            generations(rooted_family.roots()[0], rooted_family, params, kmax=0, budget=N_PATHS, seed=1)


# ============================================================================
# Packing Tests
# ============================================================================


class TestPacking:
    """Tests for disjoint packing diagnostics."""

    def test_strategies_on_a_covering_ball(self, slit_family):
        ball = Ball((0.5, 0.0), 2.0)

        levels = disjoint_packing(slit_family, ball, "all-maximal-levels")
        greedy = disjoint_packing(slit_family, ball, "greedy-max-weight")

        assert levels == pytest.approx(0.25)
        assert greedy >= levels > 0

    def test_partial_ball(self, slit_family):
        ball = Ball((0.25, 0.0), 0.3)
        assert disjoint_packing(slit_family, ball, "greedy-max-weight") >= disjoint_packing(slit_family, ball) > 0

    def test_far_ball(self, slit_family):
        assert disjoint_packing(slit_family, Ball((10.0, 10.0), 1.0)) == 0.0

    def test_unknown_strategy(self, slit_family):
        with pytest.raises(ParameterError):
            disjoint_packing(slit_family, Ball((0.5, 0.0), 2.0), "random")


# ============================================================================
# Real Walk Tests
# ============================================================================


class TestStencilHits:
    """Tests for hit bookkeeping on real walks."""

    def test_counts_and_dilated_counts(self, certified_slit_family):
        family = certified_slit_family
        root = family.roots()[0]
        shell = 0.1 * root.corkscrew.radius

        hits = StencilHits(family, root.corkscrew.stencil(0.5), 200, 1, shell, 1, "test")

        counts = hits.counts(1)
        assert len(counts) == 5
        assert all(row.sum() <= 200 for row in counts)
        cube = family.levels[1][0]
        dilated = hits.dilated_counts(cube)
        assert np.all(dilated >= np.array([row[cube.index] for row in counts]))
