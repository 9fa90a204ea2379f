"""
Carleson Estimates Module

The square-function functional r^-d * integral over B(x, r) of
|grad u|^2 dist(y) dy by Whitney-cell quadrature, gradient estimation for
closed-form and walk-backed harmonic functions, the 1/dist integral of the
Cantor dichotomy, and eps-approximants blended across cell faces with
their total variation.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import NoisyEstimateError, ParameterError, PreconditionError
from src.geometry import Ball, BoundaryRegion, Domain, cantor_address
from src.potential import FunctionalEstimate, TestFunction, default_shell, simulate_walks
from src.rng import stream
from src.whitney import WhitneyDecomposition, whitney_decompose

logger = logging.getLogger(__name__)

ANALYTIC = "analytic"
WOS = "wos"
TEST_FUNCTION = "test-function"

FORMULAS = ("constant", "linear", "re-z2", "halfplane-angle")

# relative gradient noise tolerated against the Harnack bound sup/dist
GRADIENT_NOISE = 0.1
MAX_DOUBLINGS = 3
# corner samples sit just inside the square so walk starts stay in the domain
SAMPLE_INSET = 0.45
# face ramp half-width as a fraction of the cell side
MOLLIFIER_WIDTH = 0.125
_EVAL_CHUNK = 4096
_GRID_OFFSET = 2**30


# ============================================================================
# Harmonic function handles
# ============================================================================


def _formula_value(formula: str, coeffs: Sequence[float], pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    if formula == "constant":
        return np.full(len(pts), float(coeffs[0]))
    if formula == "linear":
        a, b, c = coeffs
        return a * x + b * y + c
    if formula == "re-z2":
        return (x * x - y * y) / 10.0
    if formula == "halfplane-angle":
        return np.arctan2(y, x - coeffs[0]) / math.pi
    raise ParameterError("unknown formula", formula=formula)


def _formula_gradient(formula: str, coeffs: Sequence[float], pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    if formula == "constant":
        return np.zeros_like(pts)
    if formula == "linear":
        return np.tile([float(coeffs[0]), float(coeffs[1])], (len(pts), 1))
    if formula == "re-z2":
        return np.stack([x / 5.0, -y / 5.0], axis=1)
    if formula == "halfplane-angle":
        dx = x - coeffs[0]
        r2 = dx * dx + y * y
        return np.stack([-y / r2, dx / r2], axis=1) / math.pi
    raise ParameterError("unknown formula", formula=formula)


@dataclass
class HarmonicFunctionHandle:
    """Bounded harmonic function: closed form, walk estimate or test function.

    Attributes:
        kind: analytic, wos or test-function
        domain: Domain the function lives on
        sup_norm: Bound on |u|
        formula: Closed-form id (analytic kind)
        coefficients: Formula coefficients
        region: Boundary region whose harmonic measure is u (wos kind)
        test_function: Walk-evaluated test function (test-function kind)
        budget: Paths per evaluation
        seed: Master seed of the walks
    """

    kind: str
    domain: Domain
    sup_norm: float = 1.0
    formula: Optional[str] = None
    coefficients: Tuple[float, ...] = ()
    region: Optional[BoundaryRegion] = None
    test_function: Optional[TestFunction] = None
    budget: int = 4096
    seed: int = 0
    shell: Optional[float] = None

    @classmethod
    def analytic(cls, domain: Domain, formula: str, coefficients: Sequence[float] = (), sup_norm: float = 1.0):
        if formula not in FORMULAS:
            raise ParameterError("unknown formula", formula=formula)
        return cls(ANALYTIC, domain, sup_norm, formula, tuple(float(c) for c in coefficients))

    @classmethod
    def harmonic_measure(cls, region: BoundaryRegion, budget: int, seed: int, shell: Optional[float] = None):
        return cls(WOS, region.domain, 1.0, region=region, budget=budget, seed=seed, shell=shell)

    @classmethod
    def from_test_function(cls, tf: TestFunction, budget: int, seed: int):
        return cls(TEST_FUNCTION, tf.family.domain, 1.0, test_function=tf, budget=budget, seed=seed, shell=tf.shell)

    @property
    def is_analytic(self) -> bool:
        return self.kind == ANALYTIC

    def _shell(self, p: np.ndarray) -> float:
        base = default_shell(self.domain) if self.shell is None else self.shell
        return min(base, 0.5 * float(self.domain.distance(p[None, :])[0]))

    def _scores(self, p: np.ndarray, key: str, budget: int) -> np.ndarray:
        walks = simulate_walks(self.domain, p, budget, self._shell(p), self.seed, key)
        if self.kind == WOS:
            return walks.hits(self.region).astype(float)
        return self.test_function.path_scores(walks)

    def value(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_analytic:
            return _formula_value(self.formula, self.coefficients, pts)
        return np.array([np.mean(self._scores(p, "value", self.budget)) for p in pts])

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Closed-form gradient (analytic kind only)."""
        if not self.is_analytic:
            raise ParameterError("closed-form gradient needs an analytic function", kind=self.kind)
        return _formula_gradient(self.formula, self.coefficients, np.atleast_2d(np.asarray(points, dtype=float)))

    def check_bound(self, points: np.ndarray) -> bool:
        """|u| <= sup_norm on the given interior points."""
        return bool(np.all(np.abs(self.value(points)) <= self.sup_norm * (1 + 1e-12)))


def grad_estimate(
    u: HarmonicFunctionHandle, p: Sequence[float], step: float, budget: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient with its standard error.

    Walk-backed functions difference paired path sets started at p +/- step
    e_i from the same streams, so the noise of the two ends largely cancels.

    Raises:
        PreconditionError: B(p, 2 step) not inside the domain
    """
    p = np.asarray(p, dtype=float)
    if not step > 0:
        raise PreconditionError("step must be positive", step=step)
    if not u.domain.contains(p[None, :])[0] or u.domain.distance(p[None, :])[0] < 2.0 * step:
        raise PreconditionError("step too large for the distance to the boundary", p=p.tolist(), step=step)
    grad = np.zeros(2)
    err = np.zeros(2)
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = step
        if u.is_analytic:
            vals = _formula_value(u.formula, u.coefficients, np.array([p + e, p - e]))
            grad[axis] = (vals[0] - vals[1]) / (2.0 * step)
            continue
        n = budget or u.budget
        key = f"grad-{axis}"
        fwd = u._scores(p + e, key, n)
        bwd = u._scores(p - e, key, n)
        est = FunctionalEstimate.from_scores((fwd - bwd) / (2.0 * step))
        grad[axis] = est.value
        err[axis] = est.stderr
    return grad, err


# ============================================================================
# Carleson functional
# ============================================================================


@dataclass
class CarlesonReport:
    center: Tuple[float, float]
    radius: float
    value: float
    truncation_bound: float
    quadrature_cells: int
    numerator: float
    refinement_delta: Optional[float] = None
    residual_bias: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "center": list(self.center),
            "radius": self.radius,
            "value": self.value,
            "truncation_bound": self.truncation_bound,
            "quadrature_cells": self.quadrature_cells,
            "numerator": self.numerator,
            "refinement_delta": self.refinement_delta,
            "residual_bias": self.residual_bias,
        }


def _unit_grid(q: int) -> np.ndarray:
    """Midpoints of a q x q grid on the unit square centered at the origin."""
    offs = (np.arange(q) + 0.5) / q - 0.5
    gx, gy = np.meshgrid(offs, offs, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _analytic_integral(domain, u, cells, ball: Ball, q: int) -> float:
    total = 0.0
    unit = _unit_grid(q)
    for start in range(0, len(cells), 2048):
        chunk = cells[start : start + 2048]
        centers = np.array([c.cube.center for c in chunk])
        sides = np.array([c.side for c in chunk])
        pts = (centers[:, None, :] + sides[:, None, None] * unit[None, :, :]).reshape(-1, 2)
        area = np.repeat(sides**2 / (q * q), q * q)
        keep = ball.contains(pts)
        if not keep.any():
            continue
        pts, area = pts[keep], area[keep]
        grad = u.gradient(pts)
        total += float(np.sum((grad**2).sum(axis=1) * domain.distance(pts) * area))
    return total


def carleson_functional(
    domain: Domain,
    u: HarmonicFunctionHandle,
    x: Sequence[float],
    r: float,
    min_side: float,
    quad: int = 4,
    decomposition: Optional[WhitneyDecomposition] = None,
) -> CarlesonReport:
    """r**-d times the integral of |grad u|^2 dist over B(x, r), by Whitney cells.

    Closed-form functions use a quad x quad midpoint rule on every cell
    (clipped to the ball) and report the change against a 2*quad rule.
    Walk-backed functions use one bias-corrected gradient per cell center;
    a cell whose gradient noise exceeds 10% of sup_norm / dist doubles its
    budget up to three times.

    Raises:
        PreconditionError: x off the boundary or r out of range
        NoisyEstimateError: Cells still too noisy after the doublings
    """
    x = np.asarray(x, dtype=float)
    if not 0.0 < r < domain.diameter:
        raise PreconditionError("radius must lie in (0, diam(Omega))", r=r)
    if domain.distance(x[None, :])[0] > 1e-9 * domain.window.radius:
        raise PreconditionError("x is not on the boundary", x=x.tolist())
    d = domain.params.d
    ball = Ball((x[0], x[1]), r)
    wd = decomposition or whitney_decompose(domain, ball, min_side)
    cells = wd.cells
    c7 = wd.constants.c7
    truncation = wd.truncated_count * u.sup_norm**2 * c7 * math.sqrt(2.0) * wd.truncated_side / r**d
    delta = None
    bias = 0.0
    if u.is_analytic:
        numerator = _analytic_integral(domain, u, cells, ball, quad)
        finer = _analytic_integral(domain, u, cells, ball, 2 * quad)
        delta = abs(finer - numerator) / r**d
    else:
        numerator, bias = _walk_integral(domain, u, cells, ball)
    value = numerator / r**d
    logger.info(f"Carleson functional at {x.tolist()} r={r}: {value:.6g} over {len(cells)} cells")
    return CarlesonReport(
        center=(float(x[0]), float(x[1])),
        radius=r,
        value=value,
        truncation_bound=truncation,
        quadrature_cells=len(cells),
        numerator=numerator,
        refinement_delta=delta,
        residual_bias=bias / r**d,
    )


def _walk_integral(domain, u, cells, ball: Ball) -> Tuple[float, float]:
    total = 0.0
    bias = 0.0
    noisy: List[List[Any]] = []
    for cell in cells:
        c = np.asarray(cell.cube.center)
        if not ball.contains(c[None, :])[0]:
            continue
        dist = float(domain.distance(c[None, :])[0])
        step = min(0.25 * cell.side, 0.45 * dist)
        tolerance = GRADIENT_NOISE * u.sup_norm / dist
        budget = u.budget
        for _ in range(MAX_DOUBLINGS + 1):
            grad, err = grad_estimate(u, c, step, budget)
            if float(np.linalg.norm(err)) <= tolerance:
                break
            budget *= 2
        else:
            noisy.append([cell.cube.level, *cell.cube.index])
            continue
        squared = float(np.sum(grad**2))
        correction = float(np.sum(err**2))
        total += max(squared - correction, 0.0) * dist * cell.side**2
        bias += correction * dist * cell.side**2
    if noisy:
        logger.error(f"{len(noisy)} Whitney cells have noisy gradients")
        raise NoisyEstimateError("gradient noise above tolerance", cells=noisy[:50], count=len(noisy))
    return total, bias


def checkerboard_region(domain: Domain) -> BoundaryRegion:
    """Sides of the Cantor squares whose address digits sum to an even number."""
    if domain.cantor is None:
        raise ParameterError("checkerboard needs a Cantor domain", kind=domain.kind)
    n = domain.cantor.level
    labels = set()
    for q in range(4**n):
        address = cantor_address(q, n)
        if sum(int(ch) for ch in address[1:]) % 2 == 0:
            labels.update(f"{address}/{side}" for side in ("bottom", "right", "top", "left"))
    return BoundaryRegion(domain, frozenset(labels))


# ============================================================================
# 1/dist integral
# ============================================================================


@dataclass
class DistIntegralReport:
    center: Tuple[float, float]
    radius: float
    value: float
    refinements: List[float]
    converged: bool
    cutoff: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "center": list(self.center),
            "radius": self.radius,
            "value": self.value,
            "refinements": self.refinements,
            "converged": self.converged,
            "cutoff": self.cutoff,
        }


def _graded_quadrature(
    domain: Domain, x: np.ndarray, R: float, cells: int, theta: float, cutoff: float, max_depth: int
) -> float:
    side = 2.0 * R / cells
    offs = (np.arange(cells) + 0.5) * side - R
    gx, gy = np.meshgrid(offs, offs, indexing="ij")
    centers = x[None, :] + np.stack([gx.ravel(), gy.ravel()], axis=1)
    total = 0.0
    half_diag = side / math.sqrt(2.0)
    for depth in range(max_depth + 1):
        if len(centers) == 0:
            break
        dist = domain.distance(centers, include_window=False)
        removed = domain.in_cantor(centers)
        rad = np.hypot(centers[:, 0] - x[0], centers[:, 1] - x[1])
        straddle = np.abs(rad - R) < half_diag
        near = dist < half_diag
        refine = (depth < max_depth) & ((side > theta * dist) | straddle | near) & ~(dist + half_diag < cutoff)
        take = ~refine & (rad <= R) & (dist >= cutoff) & (dist > 0) & ~removed
        total += float(np.sum(side * side / dist[take]))
        parents = centers[refine]
        q = side / 4.0
        centers = (parents[:, None, :] + q * np.array([[-1, -1], [1, -1], [-1, 1], [1, 1]])[None, :, :]).reshape(-1, 2)
        side /= 2.0
        half_diag /= 2.0
    return total


def dist_integral(
    domain: Domain,
    x: Sequence[float],
    R: float,
    quad_cells: int = 64,
    theta: float = 0.25,
    max_depth: int = 14,
    refinements: int = 3,
    tolerance: float = 0.05,
) -> DistIntegralReport:
    """Integral of 1/dist(y, K) over B(x, R) minus K, divided by R.

    K is the non-window boundary. For Cantor domains the level-n squares
    stand in for the limit set, so points closer than lambda**n are
    omitted. The grid doubles ``refinements - 1`` times; the run is
    converged when the last two values agree to ``tolerance``.
    """
    if not R > 0:
        raise ParameterError("R must be positive", R=R)
    x = np.asarray(x, dtype=float)
    cutoff = domain.cantor.side if domain.cantor is not None else 0.0
    values = []
    for k in range(refinements):
        values.append(_graded_quadrature(domain, x, R, quad_cells * 2**k, theta, cutoff, max_depth) / R)
    converged = len(values) < 2 or abs(values[-1] - values[-2]) <= tolerance * abs(values[-1])
    if not converged:
        logger.warning(f"1/dist integral not converged at R={R}: {values}")
    return DistIntegralReport((float(x[0]), float(x[1])), R, values[-1], values, bool(converged), cutoff)


# ============================================================================
# eps-approximants
# ============================================================================


def _grid_code(i: np.ndarray, j: np.ndarray) -> np.ndarray:
    return (i + _GRID_OFFSET) * (2 * _GRID_OFFSET) + (j + _GRID_OFFSET)


def _ramp(t: np.ndarray) -> np.ndarray:
    return np.clip(t, 0.0, 1.0)


@dataclass
class PiecewiseApproximant:
    """Cell values g on dyadic squares keyed (level, i, j), blended across faces.

    With ``mollify`` = tau > 0 every cell of side s carries the tensor ramp
    that climbs from 0 to 1 over [-tau s, tau s] around each of its faces.
    g is the ramp-weighted mean of the cell values: Lipschitz, equal to the
    cell value farther than tau s from every face, and the mean of the two
    values on a face between cells. tau = 0 gives the step function.
    """

    values: Dict[Tuple[int, int, int], float]
    mollify: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.mollify < 0.25:
            raise ParameterError("mollifier width must lie in [0, 1/4)", mollify=self.mollify)
        self.levels = sorted({k[0] for k in self.values}, reverse=True)
        keys = list(self.values)
        table = np.array(keys, dtype=np.int64).reshape(-1, 3)
        self._side = 2.0 ** (-table[:, 0].astype(float))
        self._x0 = table[:, 1] * self._side
        self._y0 = table[:, 2] * self._side
        self._val = np.array([self.values[k] for k in keys], dtype=float)
        self._grid: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        for level in self.levels:
            ids = np.nonzero(table[:, 0] == level)[0]
            codes = _grid_code(table[ids, 1], table[ids, 2])
            order = np.argsort(codes)
            self._grid[level] = (codes[order], ids[order])

    def _cells_at(self, pts: np.ndarray, level: int) -> np.ndarray:
        codes, ids = self._grid[level]
        side = 2.0 ** (-level)
        query = _grid_code(np.floor(pts[:, 0] / side).astype(np.int64), np.floor(pts[:, 1] / side).astype(np.int64))
        pos = np.minimum(np.searchsorted(codes, query), len(codes) - 1)
        return np.where(codes[pos] == query, ids[pos], -1)

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        """Index of the cell holding each point, -1 outside every cell."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), -1, dtype=np.int64)
        for level in self.levels:
            free = out < 0
            if not free.any():
                break
            out[free] = self._cells_at(pts[free], level)
        return out

    def piecewise(self, points: np.ndarray) -> np.ndarray:
        """Step-function values; NaN outside the cells."""
        idx = self.cell_index(points)
        out = np.full(len(idx), np.nan)
        out[idx >= 0] = self._val[idx[idx >= 0]]
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Blended values; NaN outside the cells."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.mollify == 0.0 or not self.values:
            return self.piecewise(pts)
        out = np.full(len(pts), np.nan)
        for start in range(0, len(pts), _EVAL_CHUNK):
            out[start : start + _EVAL_CHUNK] = self._blend(pts[start : start + _EVAL_CHUNK])
        return out

    def _blend(self, pts: np.ndarray) -> np.ndarray:
        own = self.cell_index(pts)
        found = [own]
        for level in self.levels:
            w = self.mollify * 2.0 ** (-level)
            for dx in (-w, 0.0, w):
                for dy in (-w, 0.0, w):
                    found.append(self._cells_at(pts + np.array([dx, dy]), level))
        cand = np.sort(np.stack(found, axis=1), axis=1)
        valid = cand >= 0
        valid[:, 1:] &= cand[:, 1:] != cand[:, :-1]
        safe = np.where(valid, cand, 0)
        side = self._side[safe]
        width = 2.0 * self.mollify * side
        x0, y0 = self._x0[safe], self._y0[safe]
        x, y = pts[:, [0]], pts[:, [1]]
        wx = _ramp((x - x0) / width + 0.5) * _ramp((x0 + side - x) / width + 0.5)
        wy = _ramp((y - y0) / width + 0.5) * _ramp((y0 + side - y) / width + 0.5)
        weight = np.where(valid, wx * wy, 0.0)
        total = weight.sum(axis=1)
        out = np.full(len(pts), np.nan)
        ok = (own >= 0) & (total > 0)
        out[ok] = (weight[ok] * self._val[safe[ok]]).sum(axis=1) / total[ok]
        return out

    def _faces(self) -> Iterator[Tuple[float, float, float]]:
        """(|jump|, face length, coarser side) for every shared face."""
        if not self.values:
            return
        low = min(self.levels)
        for (level, i, j), g in self.values.items():
            side = 2.0 ** (-level)
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ni, nj = i + di, j + dj
                for up in range(level, low - 1, -1):
                    shift = level - up
                    key = (up, ni >> shift, nj >> shift)
                    if key in self.values:
                        if up < level or di + dj > 0:
                            yield abs(g - self.values[key]), side, 2.0 ** (-up)
                        break

    def total_variation(self) -> float:
        """Sum of |jump| times face length over all shared faces."""
        return float(sum(jump * length for jump, length, _ in self._faces()))

    def mollifier_budget(self) -> float:
        """Gradient mass the ramps may add near cell corners.

        Each face end has a corner square of side 2w, w = tau times the
        coarser side, where both ramps act; each contributes at most
        |jump| * 2w.
        """
        return float(sum(4.0 * self.mollify * coarse * jump for jump, _, coarse in self._faces()))


@dataclass
class EpsApproximation:
    approximant: PiecewiseApproximant
    bv_ratio: float
    success: bool
    cells: int
    failures: List[Tuple[int, int, int]] = field(default_factory=list)
    sampled_error: Optional[float] = None
    total_variation: float = 0.0
    mollifier_budget: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bv_ratio": self.bv_ratio,
            "success": self.success,
            "cells": self.cells,
            "failures": [list(f) for f in self.failures[:100]],
            "failure_count": len(self.failures),
            "sampled_error": self.sampled_error,
            "total_variation": self.total_variation,
            "mollifier_budget": self.mollifier_budget,
            "mollifier_width": self.approximant.mollify,
        }


def _corner_points(level: int, i: int, j: int) -> np.ndarray:
    side = 2.0 ** (-level)
    cx, cy = (i + 0.5) * side, (j + 0.5) * side
    h = SAMPLE_INSET * side
    return np.array([[cx, cy], [cx - h, cy - h], [cx + h, cy - h], [cx - h, cy + h], [cx + h, cy + h]])


def eps_approximant(
    domain: Domain,
    u: HarmonicFunctionHandle,
    eps: float,
    region: Ball,
    min_side: float = 2.0**-8,
    verify_samples: int = 0,
    seed: int = 0,
    mollify: float = MOLLIFIER_WIDTH,
) -> EpsApproximation:
    """Blended piecewise g with |u - g| < eps on the Whitney cells of ``region``.

    Each Whitney cell takes the value of u at its center; cells whose
    five-point oscillation reaches eps/2 split into quarters, at most
    log2(4/eps) times below ``min_side``. g blends neighboring cell values
    across faces (``mollify`` is the ramp half-width per cell side), so
    each value of g mixes cells within eps/2 of u at adjacent points.
    The BV ratio is the face-jump total variation plus the corner budget
    of the ramps, over r**d. With ``verify_samples`` the run succeeds only
    if the sampled sup |u - g| is below eps.
    """
    if not eps > 0:
        raise ParameterError("eps must be positive", eps=eps)
    d = domain.params.d
    wd = whitney_decompose(domain, region, min_side)
    if eps >= 2.0 * u.sup_norm:
        values = {c.key: 0.0 for c in wd.cells}
        return EpsApproximation(PiecewiseApproximant(values, mollify), 0.0, True, len(values))
    floor_level = int(math.ceil(-math.log2(min_side) + math.log2(4.0 / eps)))
    values: Dict[Tuple[int, int, int], float] = {}
    failures: List[Tuple[int, int, int]] = []
    stack = [c.key for c in reversed(wd.cells)]
    while stack:
        level, i, j = stack.pop()
        corners = _corner_points(level, i, j)
        vals = u.value(corners)
        if np.max(np.abs(vals - vals[0])) < 0.5 * eps:
            values[(level, i, j)] = float(vals[0])
            continue
        if level >= floor_level:
            failures.append((level, i, j))
            values[(level, i, j)] = float(vals[0])
            continue
        for dj in (1, 0):
            for di in (1, 0):
                stack.append((level + 1, 2 * i + di, 2 * j + dj))
    g = PiecewiseApproximant(values, mollify)
    tv = g.total_variation()
    budget = g.mollifier_budget()
    bv = (tv + budget) / region.radius**d
    sampled = None
    if verify_samples and not failures:
        rng = stream(seed, "eps-verify")
        pts = np.array(region.center) + region.radius * rng.uniform(-1.0, 1.0, size=(4 * verify_samples, 2))
        pts = pts[region.contains(pts)]
        gv = g.evaluate(pts)
        keep = np.nonzero(~np.isnan(gv))[0][:verify_samples]
        if len(keep):
            sampled = float(np.max(np.abs(u.value(pts[keep]) - gv[keep])))
    if failures:
        logger.warning(f"eps-approximant: {len(failures)} cells still oscillate at the floor")
    success = not failures and (sampled is None or sampled < eps)
    if sampled is not None and sampled >= eps:
        logger.warning(f"eps-approximant: sampled error {sampled:.4g} reaches eps={eps}")
    return EpsApproximation(g, float(bv), success, len(values), failures, sampled, tv, budget)
