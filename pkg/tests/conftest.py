"""
Shared Test Fixtures

Small domains, cube families and a throwaway params file used across the
test modules. Families on the unit slit are cheap (128 boundary samples)
and are reused wherever a test only needs structure, not scale.

Run tests with: pytest tests/
"""

import logging

import numpy as np
import pytest

from src.cubes import attach_corkscrew_balls, build_cubes
from src.geometry import CantorSpec, make_cantor, make_disc, make_halfplane, make_slit


# ============================================================================
# Domains
# ============================================================================


@pytest.fixture(scope="session")
def halfplane():
    """Upper half-plane truncated at radius 64."""
    return make_halfplane()


@pytest.fixture(scope="session")
def disc():
    """Unit disc with its circle split into 12 labeled arcs."""
    return make_disc(1.0, 12)


@pytest.fixture(scope="session")
def slit():
    """Window of radius 4 minus the unit segment on the x-axis."""
    return make_slit(1.0, 4.0)


@pytest.fixture(scope="session")
def cantor_small():
    """Level-1 four-corner Cantor domain with ratio 1/4."""
    return make_cantor(CantorSpec(0.25, 1))


@pytest.fixture(scope="session")
def cantor_deep():
    """Level-3 Cantor domain with ratio 0.2."""
    return make_cantor(CantorSpec(0.2, 3))


# ============================================================================
# Cube families
# ============================================================================


@pytest.fixture
def slit_family(slit):
    """Uncertified two-level cube family on the slit (fresh per test)."""
    return build_cubes(slit, N=4, eta=0.25, jmax=1, depth=1)


@pytest.fixture(scope="session")
def certified_slit_family(slit):
    """Slit family at N = 8 with certified corkscrew balls on every cube.

    N = 8 keeps c3 above 2**(-N-1) c0 at the ball sizes eps = 0.2 needs.
    """
    family = build_cubes(slit, N=8, eta=0.0625, jmax=1, depth=1)
    return attach_corkscrew_balls(family, eps=0.2, samples=400, seed=11)


# ============================================================================
# Configuration and logging
# ============================================================================


@pytest.fixture
def params_file(tmp_path):
    """Minimal params.yaml with a seed and a whitney section."""
    path = tmp_path / "params.yaml"
    path.write_text(
        "defaults:\n"
        "  seed: 7\n"
        "  budget: 256\n"
        "whitney:\n"
        "  domain: {kind: halfplane}\n"
        "  min_side: 0.0625\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def restore_logging():
    """Put the root logger's handlers and level back after the test."""
    root = logging.getLogger()
    handlers = list(root.handlers)
    level = root.level
    yield root
    for handler in list(root.handlers):
        root.removeHandler(handler)
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


@pytest.fixture
def laplacian():
    """Five-point finite-difference Laplacian of a scalar function of a planar point."""

    def apply(f, p, h=1e-3):
        x, y = p
        return (f((x + h, y)) + f((x - h, y)) + f((x, y + h)) + f((x, y - h)) - 4.0 * f((x, y))) / (h * h)

    return apply


@pytest.fixture
def rng():
    """Deterministic numpy generator for test inputs."""
    return np.random.default_rng(0)
