"""
Whitney Decomposition Module

Maximal dyadic squares whose c6-dilate misses the boundary, restricted to a
ball, with Case I/II labeling against the boundary of a subdomain and the
structural audits (disjointness, bounded overlap, dilation bounds).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Set, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from src.errors import ParameterError
from src.geometry import Ball, Domain, DyadicCube

logger = logging.getLogger(__name__)

C6 = 17.0 / 16.0
# guaranteed by the failure of the parent: 1/2 + c6 = c7/2
C7 = 25.0 / 8.0
C8 = 33.0 / 32.0

CASE_I = "I"
CASE_II = "II"
UNLABELED = "unlabeled"


@dataclass(frozen=True)
class WhitneyConstants:
    c6: float = C6
    c7: float = C7
    c8: float = C8

    def __post_init__(self) -> None:
        if not (1.0 < self.c8 < self.c6 < self.c7):
            raise ParameterError(
                "Whitney constants must satisfy 1 < c8 < c6 < c7",
                c6=self.c6,
                c7=self.c7,
                c8=self.c8,
            )


@dataclass(frozen=True)
class WhitneyCell:
    cube: DyadicCube
    case: str = UNLABELED
    dist: float = 0.0

    @property
    def side(self) -> float:
        return self.cube.side

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.cube.level, self.cube.index[0], self.cube.index[1])


@dataclass
class WhitneyDecomposition:
    """Cells in canonical (level, index) order plus the truncation report."""

    cells: List[WhitneyCell]
    region: Ball
    min_side: float
    constants: WhitneyConstants = field(default_factory=WhitneyConstants)
    truncated_count: int = 0
    truncated_side: float = 0.0
    remainder_area: float = 0.0

    def __iter__(self) -> Iterator[WhitneyCell]:
        return iter(self.cells)

    def __len__(self) -> int:
        return len(self.cells)

    def __getitem__(self, i: int) -> WhitneyCell:
        return self.cells[i]

    def find(self, level: int, index: Tuple[int, int]) -> Optional[WhitneyCell]:
        for cell in self.cells:
            if cell.cube.level == level and cell.cube.index == tuple(index):
                return cell
        return None

    def to_frame(self) -> pd.DataFrame:
        """Table of cells: level, i, j, side, case, dist."""
        return pd.DataFrame(
            [
                {
                    "level": c.cube.level,
                    "i": c.cube.index[0],
                    "j": c.cube.index[1],
                    "side": c.side,
                    "case": c.case,
                    "dist": c.dist,
                }
                for c in self.cells
            ],
            columns=["level", "i", "j", "side", "case", "dist"],
        )

    def summary(self) -> Dict[str, float]:
        cases = [c.case for c in self.cells]
        return {
            "cells": len(self.cells),
            "case_I": cases.count(CASE_I),
            "case_II": cases.count(CASE_II),
            "truncated_count": self.truncated_count,
            "remainder_area": self.remainder_area,
            "min_side": self.min_side,
        }


# ============================================================================
# Box helpers
# ============================================================================


def _boxes(level: int, idx: np.ndarray, factor: float, scale: float = 1.0) -> np.ndarray:
    side = scale * 2.0 ** (-level)
    centers = (idx + 0.5) * side
    h = 0.5 * factor * side
    return np.concatenate([centers - h, centers + h], axis=1)


def _boxes_meet_ball(boxes: np.ndarray, ball: Ball) -> np.ndarray:
    cx, cy = ball.center
    gx = np.maximum(np.maximum(boxes[:, 0] - cx, cx - boxes[:, 2]), 0.0)
    gy = np.maximum(np.maximum(boxes[:, 1] - cy, cy - boxes[:, 3]), 0.0)
    return np.sqrt(gx * gx + gy * gy) <= ball.radius


def _acceptable(domain: Domain, level: int, idx: np.ndarray, c6: float) -> np.ndarray:
    if len(idx) == 0:
        return np.zeros(0, dtype=bool)
    return ~domain.boxes_meet_boundary(_boxes(level, idx, c6))


# ============================================================================
# Decomposition
# ============================================================================


def whitney_decompose(
    domain: Domain,
    region: Ball,
    min_side: float,
    constants: Optional[WhitneyConstants] = None,
) -> WhitneyDecomposition:
    """Maximal dyadic squares Q with c6*Q missing the boundary, meeting ``region``.

    The search runs top down from a level whose side exceeds the region
    diameter. Accepted squares climb to their largest acceptable ancestor,
    which makes them maximal. Squares that would need subdividing below
    ``min_side`` are counted in the truncated remainder.

    Args:
        domain: The domain
        region: Ball the cells must meet
        min_side: Smallest side examined

    Returns:
        WhitneyDecomposition in canonical (level, index) order

    Raises:
        ParameterError: min_side not positive
    """
    if not min_side > 0:
        raise ParameterError("min_side must be positive", min_side=min_side)
    constants = constants or WhitneyConstants()
    c6 = constants.c6
    level = -int(math.ceil(math.log2(2.0 * region.radius)))
    side = 2.0 ** (-level)
    lo = np.floor((np.asarray(region.center) - region.radius) / side).astype(np.int64)
    hi = np.floor((np.asarray(region.center) + region.radius) / side).astype(np.int64)
    gi, gj = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
    idx = np.stack([gi.ravel(), gj.ravel()], axis=1)
    idx = idx[_boxes_meet_ball(_boxes(level, idx, 1.0), region)]

    accepted: Set[Tuple[int, int, int]] = set()
    truncated = 0
    truncated_side = 0.0
    truncated_area = 0.0
    logger.info(f"Whitney decomposition from level {level} to side {min_side:.3g}")
    while len(idx):
        ok = _acceptable(domain, level, idx, c6)
        centers = (idx + 0.5) * 2.0 ** (-level)
        inside = np.zeros(len(idx), dtype=bool)
        if ok.any():
            inside[ok] = domain.contains(centers[ok])
        for i, j in idx[ok & inside]:
            accepted.add(_climb(domain, level, int(i), int(j), c6))
        rest = idx[~ok]
        child_side = 2.0 ** (-(level + 1))
        if child_side < min_side:
            truncated += len(rest)
            truncated_side = 2.0 ** (-level)
            truncated_area += len(rest) * (2.0 ** (-level)) ** 2
            break
        kids = (rest[:, None, :] * 2 + np.array([[0, 0], [1, 0], [0, 1], [1, 1]])[None, :, :]).reshape(-1, 2)
        level += 1
        idx = kids[_boxes_meet_ball(_boxes(level, kids, 1.0), region)] if len(kids) else kids
        logger.debug(f"Whitney level {level}: {len(idx)} candidates, {len(accepted)} accepted")

    keys = sorted(accepted)
    cubes = [DyadicCube(k[0], (k[1], k[2])) for k in keys]
    dist = domain.distance(np.array([c.center for c in cubes])) if cubes else np.zeros(0)
    cells = [WhitneyCell(cube, UNLABELED, float(d)) for cube, d in zip(cubes, dist)]
    if truncated:
        logger.info(f"Whitney truncated {truncated} squares, remainder area {truncated_area:.3g}")
    return WhitneyDecomposition(
        cells=cells,
        region=region,
        min_side=min_side,
        constants=constants,
        truncated_count=truncated,
        truncated_side=truncated_side,
        remainder_area=truncated_area,
    )


def _climb(domain: Domain, level: int, i: int, j: int, c6: float) -> Tuple[int, int, int]:
    while True:
        parent = np.array([[i >> 1, j >> 1]], dtype=np.int64)
        if not _acceptable(domain, level - 1, parent, c6)[0]:
            return (level, i, j)
        level, i, j = level - 1, i >> 1, j >> 1


# ============================================================================
# Case labeling
# ============================================================================


def classify_case(cell: WhitneyCell, other: Domain, constants: Optional[WhitneyConstants] = None) -> str:
    """Case I when c8*Q misses the other boundary, Case II otherwise."""
    c8 = (constants or WhitneyConstants()).c8
    box = np.array([cell.cube.dilated_box(c8)])
    return CASE_II if other.boxes_meet_boundary(box)[0] else CASE_I


def label_cases(decomposition: WhitneyDecomposition, other: Domain) -> WhitneyDecomposition:
    """Copy of ``decomposition`` with every cell labeled against ``other``."""
    c8 = decomposition.constants.c8
    if not decomposition.cells:
        return replace(decomposition, cells=[])
    boxes = np.array([c.cube.dilated_box(c8) for c in decomposition.cells])
    meets = other.boxes_meet_boundary(boxes)
    cells = [replace(c, case=CASE_II if m else CASE_I) for c, m in zip(decomposition.cells, meets)]
    n_two = int(meets.sum())
    logger.info(f"Case labeling: {len(cells) - n_two} Case I, {n_two} Case II")
    return replace(decomposition, cells=cells)


def case_two_mass(decomposition: WhitneyDecomposition, center: Tuple[float, float], radius: float, d: int = 1) -> float:
    """Sum of side**d over Case II cells meeting B(center, radius), divided by radius**d."""
    ball = Ball(center, radius)
    cells = [c for c in decomposition.cells if c.case == CASE_II]
    if not cells:
        return 0.0
    boxes = np.array([c.cube.dilated_box(1.0) for c in cells])
    hit = _boxes_meet_ball(boxes, ball)
    return float(sum(c.side**d for c, h in zip(cells, hit) if h) / radius**d)


# ============================================================================
# Audits
# ============================================================================


def check_dilations(domain: Domain, decomposition: WhitneyDecomposition) -> Dict[str, int]:
    """Count cells violating c6*Q missing the boundary or c7*Q meeting it."""
    if not decomposition.cells:
        return {"c6_violations": 0, "c7_violations": 0}
    k = decomposition.constants
    inner = np.array([c.cube.dilated_box(k.c6) for c in decomposition.cells])
    outer = np.array([c.cube.dilated_box(k.c7) for c in decomposition.cells])
    return {
        "c6_violations": int(domain.boxes_meet_boundary(inner).sum()),
        "c7_violations": int((~domain.boxes_meet_boundary(outer)).sum()),
    }


def check_disjoint(decomposition: WhitneyDecomposition) -> bool:
    """True when no cell repeats or contains another (disjoint interiors)."""
    keys = [c.key for c in decomposition.cells]
    present = set(keys)
    if len(present) != len(keys):
        return False
    top = min((k[0] for k in keys), default=0)
    for level, i, j in keys:
        while level > top:
            level, i, j = level - 1, i >> 1, j >> 1
            if (level, i, j) in present:
                return False
    return True


def overlap_multiplicity(decomposition: WhitneyDecomposition, factor: Optional[float] = None) -> int:
    """Largest number of dilated cells containing a test point.

    Test points are the centers and the corners of every dilated cell; candidate
    cells come from per-level KD trees of centers.
    """
    factor = decomposition.constants.c6 if factor is None else factor
    cells = decomposition.cells
    if not cells:
        return 0
    centers = np.array([c.cube.center for c in cells])
    sides = np.array([c.side for c in cells])
    half = 0.5 * factor * sides
    corners = np.array([[-1, -1], [1, -1], [-1, 1], [1, 1]], dtype=float)
    queries = np.concatenate(
        [centers, (centers[:, None, :] + half[:, None, None] * corners[None, :, :]).reshape(-1, 2)]
    )
    counts = np.zeros(len(queries), dtype=np.int64)
    levels = np.array([c.cube.level for c in cells])
    for level in np.unique(levels):
        sel = np.nonzero(levels == level)[0]
        tree = cKDTree(centers[sel])
        h = half[sel[0]]
        for p, found in enumerate(tree.query_ball_point(queries, h * math.sqrt(2.0) * (1 + 1e-12))):
            for q in found:
                c = centers[sel[q]]
                if abs(queries[p, 0] - c[0]) <= h and abs(queries[p, 1] - c[1]) <= h:
                    counts[p] += 1
    return int(counts.max())
