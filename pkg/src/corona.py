"""
Corona Decomposition Module

High/low density stopping of boundary cubes under a root, the generation
recursion, packing partial sums and the measured constants behind them
(Harnack comparability c5, HD overlap C1, LD scale mass C2).

Densities are harmonic measures from a five-point stencil of the root's
corkscrew ball. Every decision is gated by Wilson intervals: a cube stops
only when the interval clears its threshold, and cubes whose intervals
straddle a threshold are scanned further and reported.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.cubes import Cube, CubeFamily
from src.errors import IndeterminacyError, ParameterError, PreconditionError
from src.geometry import Ball, Domain
from src.potential import default_shell, simulate_walks, wilson_interval

logger = logging.getLogger(__name__)

HD = "HD"
LD = "LD"
NONE = "none"

UNDECIDABLE_MASS_LIMIT = 0.05
MAX_BUDGET_FACTOR = 8
# hits per stencil point before a cube enters the Harnack ratio
HARNACK_MIN_HITS = 30


@dataclass(frozen=True)
class CoronaParams:
    """Stopping thresholds: HD at A (l/l0)**d, LD at delta (l/l0)**d."""

    A: float
    delta: float
    eps: float = 0.1
    c5: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eps < 0.5:
            raise ParameterError("eps must lie in (0, 1/2)", eps=self.eps)
        if not 0.0 <= self.delta < self.eps / 3.0:
            raise ParameterError("delta must lie in [0, eps/3)", delta=self.delta, eps=self.eps)
        if not self.A > self.c5 * self.delta:
            raise ParameterError("A must exceed c5 * delta", A=self.A, c5=self.c5, delta=self.delta)

    def to_dict(self) -> Dict[str, float]:
        return {"A": self.A, "delta": self.delta, "eps": self.eps, "c5": self.c5}


@dataclass(frozen=True)
class StopLabel:
    kind: str
    ratio: float
    stderr: float

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "ratio": self.ratio, "stderr": self.stderr}


@dataclass
class StopResult:
    """Maximal stopped cubes under one root plus the scan diagnostics."""

    root: Cube
    stopped: List[Tuple[Cube, StopLabel]]
    undecidable: List[Tuple[Tuple[int, int], float]]
    undecidable_mass: float
    exclusivity_violations: List[Tuple[int, int]]
    harnack_ratio: float
    hd_overlap: int
    ld_scale_sum: float
    ld_measure_sum: float
    ld_measure_stderr: float
    budget: int
    delta: float = 0.0

    @property
    def ld_bound_holds(self) -> bool:
        """Sum of LD harmonic measures within C2 delta + 3 sigma."""
        return self.ld_measure_sum <= self.delta * self.ld_scale_sum + 3.0 * self.ld_measure_stderr


@dataclass
class CoronaTree:
    root: Cube
    params: CoronaParams
    generations: List[List[Tuple[Cube, StopLabel]]]
    partial_sums: List[float]
    results: List[StopResult] = field(default_factory=list)
    d: int = 1

    @property
    def c5(self) -> float:
        ratios = [r.harnack_ratio for r in self.results if math.isfinite(r.harnack_ratio)]
        return max(ratios) if ratios else math.nan

    @property
    def C1(self) -> int:
        return max([r.hd_overlap for r in self.results] + [0])

    def increments(self) -> List[float]:
        sums = [0.0] + self.partial_sums
        return [b - a for a, b in zip(sums[:-1], sums[1:])]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "root": list(self.root.id),
            "params": self.params.to_dict(),
            "generations": [
                [{"cube": list(c.id), "scale": c.scale, **label.to_dict()} for c, label in gen]
                for gen in self.generations
            ],
            "partial_sums": self.partial_sums,
            "c5": self.c5,
            "C1": self.C1,
            "undecidable": [[list(i), m] for r in self.results for i, m in r.undecidable],
            "exclusivity_violations": [list(i) for r in self.results for i in r.exclusivity_violations],
        }


# ============================================================================
# Stopping
# ============================================================================


class StencilHits:
    """Per-start-point hit samples of one path set.

    Walks run on ``domain`` (the family's own domain by default). Pieces
    appended to a derived domain keep their indices past the family's
    pieces, so hits on them are dropped before matching to samples.
    """

    def __init__(
        self,
        family: CubeFamily,
        points: np.ndarray,
        budget: int,
        seed: int,
        shell: float,
        workers: int,
        key: str,
        domain: Optional[Domain] = None,
    ):
        self.family = family
        self.samples = budget
        self.hit_samples: List[np.ndarray] = []
        domain = family.domain if domain is None else domain
        base_pieces = len(family.domain.pieces)
        for q, p in enumerate(np.atleast_2d(points)):
            walks = simulate_walks(domain, p, budget, shell, seed, f"{key}-{q}", workers=workers)
            idx = walks.nearest_sample(family.samples.tree)
            keep = walks.on_boundary() & (walks.piece < base_pieces)
            self.hit_samples.append(idx[keep])
        self._counts: Dict[int, List[np.ndarray]] = {}
        self._trees = [cKDTree(family.samples.points[h]) if len(h) else None for h in self.hit_samples]

    def counts(self, level: int) -> List[np.ndarray]:
        """Hits per level-``level`` cube label for every stencil point."""
        if level not in self._counts:
            labels = self.family.labels[level]
            size = len(self.family.nets[level])
            self._counts[level] = [np.bincount(labels[h], minlength=size) for h in self.hit_samples]
        return self._counts[level]

    def dilated_counts(self, cube: Cube, reach: float = 1.0) -> np.ndarray:
        """Hits within reach * l(S) of S per start point (reach 1 is 2S)."""
        pts = self.family.samples.points
        members = pts[cube.members]
        member_tree = cKDTree(members)
        extra = reach * cube.scale
        outer = float(np.max(np.linalg.norm(members - np.asarray(cube.center), axis=1))) + extra
        out = []
        for h, tree in zip(self.hit_samples, self._trees):
            if tree is None:
                out.append(0)
                continue
            cand = np.asarray(tree.query_ball_point(cube.center, outer * (1 + 1e-12)), dtype=np.int64)
            if len(cand) == 0:
                out.append(0)
                continue
            d, _ = member_tree.query(pts[h[cand]], distance_upper_bound=extra * (1 + 1e-12))
            out.append(int(np.count_nonzero(np.isfinite(d))))
        return np.array(out)


def _scan(
    family: CubeFamily, root: Cube, params: CoronaParams, hits: StencilHits, reach: float = 1.0
) -> Dict[str, Any]:
    d = family.domain.params.d
    n = hits.samples
    stopped: List[Tuple[Cube, StopLabel]] = []
    undecidable: List[Tuple[Tuple[int, int], float]] = []
    violations: List[Tuple[int, int]] = []
    harnack = []
    stack = list(reversed(family.children(root)))
    while stack:
        cube = stack.pop()
        rel = (cube.scale / root.scale) ** d
        thr_hd = params.A * rel
        thr_ld = params.delta * rel
        s_counts = np.array([c[cube.index] for c in hits.counts(cube.level)])
        d_counts = hits.dilated_counts(cube, reach)
        s_val = s_counts / n
        d_val = d_counts / n
        s_ci = [wilson_interval(v, n) for v in s_val]
        d_ci = [wilson_interval(v, n) for v in d_val]
        hd_yes = min(lo for lo, _ in d_ci) >= thr_hd
        hd_no = any(hi < thr_hd for _, hi in d_ci)
        ld_yes = params.delta > 0 and max(hi for _, hi in s_ci) <= thr_ld
        ld_no = params.delta <= 0 or any(lo > thr_ld for lo, _ in s_ci)
        if d_counts.min() >= HARNACK_MIN_HITS:
            harnack.append(float(s_val.max() / d_val.min()))
        if hd_yes and ld_yes:
            violations.append(cube.id)
        if hd_yes:
            stopped.append((cube, StopLabel(HD, float(d_val.min() / rel), _stderr(d_val.min(), n) / rel)))
            continue
        if ld_yes:
            stopped.append((cube, StopLabel(LD, float(s_val.max() / rel), _stderr(s_val.max(), n) / rel)))
            continue
        if not (hd_no and ld_no):
            undecidable.append((cube.id, float(s_val[0])))
            if cube.level == family.jmax:
                continue
        stack.extend(reversed(family.children(cube)))
    stopped.sort(key=lambda item: item[0].id)
    leaf_mass = sum(m for cid, m in undecidable if cid[0] == family.jmax)
    return {
        "stopped": stopped,
        "undecidable": undecidable,
        "leaf_mass": float(leaf_mass),
        "violations": violations,
        "harnack": max(harnack) if harnack else math.nan,
    }


def _stderr(value: float, n: int) -> float:
    return math.sqrt(max(value * (1.0 - value), 0.0) / n) if n else 0.0


def stop_children(
    root: Cube,
    family: CubeFamily,
    params: CoronaParams,
    budget: int,
    seed: int,
    shell: Optional[float] = None,
    workers: int = 1,
) -> StopResult:
    """Maximal HD/LD stopped descendants of ``root``.

    The path budget doubles (up to 8x) while the harmonic mass of
    undecidable deepest-level cubes exceeds 5% of the total.

    Raises:
        PreconditionError: root has no corkscrew ball
        IndeterminacyError: undecidable mass stays above 5% at 8x budget
    """
    if root.level >= family.jmax:
        return _empty_result(root, budget)
    if root.corkscrew is None:
        raise PreconditionError("root cube has no corkscrew ball", cube=root.id)
    shell = min(default_shell(family.domain), 0.1 * root.corkscrew.radius) if shell is None else shell
    key = f"corona-{root.level}-{root.index}"

    def make_hits(n: int) -> StencilHits:
        return StencilHits(family, root.corkscrew.stencil(0.5), n, seed, shell, workers, key)

    scan, hits, current = scan_with_budget(family, root, params, budget, make_hits)

    stopped = scan["stopped"]
    hd = [c for c, label in stopped if label.kind == HD]
    ld = [c for c, label in stopped if label.kind == LD]
    overlap = 0
    if hd:
        multiplicity = np.zeros(len(family.samples), dtype=np.int64)
        for cube in hd:
            multiplicity += family.dilation_mask(cube, 2.0)
        overlap = int(multiplicity.max())
    d = family.domain.params.d
    ld_scale = float(sum((c.scale / root.scale) ** d for c in ld))
    ld_mass = sum(int(hits.counts(c.level)[0][c.index]) for c in ld) / hits.samples
    result = StopResult(
        root=root,
        stopped=stopped,
        undecidable=scan["undecidable"],
        undecidable_mass=scan["leaf_mass"],
        exclusivity_violations=scan["violations"],
        harnack_ratio=scan["harnack"],
        hd_overlap=overlap,
        ld_scale_sum=ld_scale,
        ld_measure_sum=ld_mass,
        ld_measure_stderr=_stderr(ld_mass, hits.samples),
        budget=current,
        delta=params.delta,
    )
    if result.exclusivity_violations:
        logger.warning(f"Corona root {root.id}: {len(result.exclusivity_violations)} cubes both HD and LD")
    logger.info(f"Corona root {root.id}: {len(hd)} HD, {len(ld)} LD, {len(scan['undecidable'])} undecidable")
    return result


def scan_with_budget(
    family: CubeFamily,
    root: Cube,
    params: CoronaParams,
    budget: int,
    make_hits: Callable[[int], StencilHits],
    reach: float = 1.0,
) -> Tuple[Dict[str, Any], StencilHits, int]:
    """Scan the descendants of ``root``, doubling the budget while too much mass is undecidable.

    Raises:
        IndeterminacyError: undecidable mass stays above 5% at 8x budget
    """
    current = budget
    while True:
        hits = make_hits(current)
        scan = _scan(family, root, params, hits, reach)
        if scan["leaf_mass"] <= UNDECIDABLE_MASS_LIMIT:
            return scan, hits, current
        if current >= MAX_BUDGET_FACTOR * budget:
            logger.error(f"Root {root.id}: undecidable mass {scan['leaf_mass']:.3f}")
            raise IndeterminacyError(
                "undecidable mass above 5% at the budget cap",
                root=list(root.id),
                mass=scan["leaf_mass"],
                budget=current,
                cubes=[list(c) for c, _ in scan["undecidable"][:20]],
            )
        current *= 2
        logger.warning(f"Root {root.id}: doubling budget to {current}")


def _empty_result(root: Cube, budget: int) -> StopResult:
    return StopResult(root, [], [], 0.0, [], math.nan, 0, 0.0, 0.0, 0.0, budget)


# ============================================================================
# Generations
# ============================================================================


def generations(
    root: Cube,
    family: CubeFamily,
    params: CoronaParams,
    kmax: int,
    budget: int,
    seed: int,
    shell: Optional[float] = None,
    workers: int = 1,
) -> CoronaTree:
    """Iterate stop_children to ``kmax`` generations or until one is empty."""
    if kmax < 1:
        raise ParameterError("kmax must be at least 1", kmax=kmax)
    d = family.domain.params.d
    gens: List[List[Tuple[Cube, StopLabel]]] = []
    sums: List[float] = []
    results: List[StopResult] = []
    frontier = [root]
    total = 0.0
    for k in range(kmax):
        gen: List[Tuple[Cube, StopLabel]] = []
        for cube in frontier:
            res = stop_children(cube, family, params, budget, seed, shell, workers)
            results.append(res)
            gen.extend(res.stopped)
        gen.sort(key=lambda item: item[0].id)
        total += sum((c.scale / root.scale) ** d for c, _ in gen)
        gens.append(gen)
        sums.append(total)
        logger.info(f"Generation {k + 1}: {len(gen)} cubes, partial sum {total:.4g}")
        if not gen:
            break
        frontier = [c for c, _ in gen]
    return CoronaTree(root, params, gens, sums, results, d)


def harnack_constant(tree: CoronaTree) -> float:
    """Measured c5: largest sup omega(S) / inf omega(2S) over the stencil."""
    return tree.c5


# ============================================================================
# Packing diagnostics
# ============================================================================


@dataclass
class InterlacingReport:
    H: List[float]
    L: List[float]
    decay: List[float]
    C1: float
    C2: float
    bound: Optional[float]
    bound_holds: Optional[bool]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "H": self.H,
            "L": self.L,
            "decay": self.decay,
            "C1": self.C1,
            "C2": self.C2,
            "bound": self.bound,
            "bound_holds": self.bound_holds,
        }


def interlacing(tree: CoronaTree, params: CoronaParams) -> InterlacingReport:
    """HD and LD scale sums per generation and the closed-form packing bound.

    The bound (A C2 + C1 + C1 C2) / (A - C1 - C1 C2) applies when
    A - 1 > C1 + C1 C2 with the measured C1 and C2.
    """
    root = tree.root
    d = tree.d
    H = [sum((c.scale / root.scale) ** d for c, lab in gen if lab.kind == HD) for gen in tree.generations]
    L = [sum((c.scale / root.scale) ** d for c, lab in gen if lab.kind == LD) for gen in tree.generations]
    totals = [h + l for h, l in zip(H, L)]
    decay = [b / a if a > 0 else math.nan for a, b in zip(totals[:-1], totals[1:])]
    c1 = float(max(tree.C1, 1))
    c2 = max([r.ld_scale_sum for r in tree.results] + [0.0])
    bound = None
    holds = None
    if params.A - 1.0 > c1 + c1 * c2:
        bound = (params.A * c2 + c1 + c1 * c2) / (params.A - c1 - c1 * c2)
        holds = bool(sum(totals) <= bound)
    return InterlacingReport(H, L, decay, c1, c2, bound, holds)


def hd_bound_check(result: StopResult, params: CoronaParams, d: int = 1) -> Tuple[float, float, bool]:
    """HD scale sum under one root against C1 / A."""
    s = sum((c.scale / result.root.scale) ** d for c, lab in result.stopped if lab.kind == HD)
    bound = max(result.hd_overlap, 1) / params.A
    return s, bound, bool(s <= bound)


def _inside(family: CubeFamily, cube: Cube, ball: Ball) -> bool:
    return bool(ball.contains(family.samples.points[cube.members]).all())


def disjoint_packing(family: CubeFamily, ball: Ball, strategy: str = "all-maximal-levels") -> float:
    """Scale mass of a disjoint cube subfamily inside ``ball`` over diam(ball)**d.

    ``all-maximal-levels`` takes the best single level; ``greedy-max-weight``
    takes the heaviest antichain of the cube tree (tree dynamic program).
    """
    d = family.domain.params.d
    diam = 2.0 * ball.radius
    if strategy == "all-maximal-levels":
        best = 0.0
        for level in family.levels:
            best = max(best, sum(c.scale**d for c in level if _inside(family, c, ball)))
        return best / diam**d
    if strategy == "greedy-max-weight":
        def weight(cube: Cube) -> float:
            own = cube.scale**d if _inside(family, cube, ball) else 0.0
            below = sum(weight(child) for child in family.children(cube))
            return max(own, below)

        return sum(weight(r) for r in family.roots()) / diam**d
    raise ParameterError("unknown packing strategy", strategy=strategy)
