"""
Boundary Cubes Module

Dyadic-like cubes on the boundary built from nested greedy nets: radius
selection with small collars, ordered differences, the parent map and the
iterated refinement, plus the structural audits and the attachment of
certified corkscrew balls.

Cubes are finite unions of boundary samples. Set operations are exact on
the sample set, so partition and nesting hold exactly at every level.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial.distance import pdist
from tqdm import tqdm

from src.errors import CertificationError, ParameterError, ResolutionError
from src.geometry import Ball, BoundaryRegion, Domain, corkscrew_witness, grid_cover_count_points
from src.ledger import ConstantsLedger
from src.potential import default_shell, simulate_walks, wilson_interval

logger = logging.getLogger(__name__)

# candidates per sample when resolving ordered differences
_NEIGHBORS = 16
_HULL_THRESHOLD = 1500
_MAX_FAILURES = 10
C0_MAX = 1.0 / 3.0


# ============================================================================
# Data structures
# ============================================================================


@dataclass
class BoundarySample:
    """Arclength midpoints of the non-window boundary in canonical order."""

    points: np.ndarray
    piece: np.ndarray
    weights: np.ndarray
    spacing: float
    tree: cKDTree = field(repr=False)

    def __len__(self) -> int:
        return int(len(self.points))


@dataclass
class Net:
    level: int
    indices: np.ndarray
    separation: float

    def points(self, sample: BoundarySample) -> np.ndarray:
        return sample.points[self.indices]

    def __len__(self) -> int:
        return int(len(self.indices))


@dataclass
class Cube:
    """Boundary cube S_j(x): a set of sample indices with its scale and balls."""

    level: int
    index: int
    center: Tuple[float, float]
    scale: float
    members: np.ndarray
    parent: Optional[int] = None
    children: List[int] = field(default_factory=list)
    anchor: Optional[Tuple[float, float]] = None
    inner_radius: float = 0.0
    diameter: float = 0.0
    corkscrew: Optional[Ball] = None

    @property
    def id(self) -> Tuple[int, int]:
        return (self.level, self.index)

    @property
    def size(self) -> int:
        return int(len(self.members))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": list(self.id),
            "center": list(self.center),
            "scale": self.scale,
            "parent": self.parent,
            "children": list(self.children),
            "anchor": list(self.anchor) if self.anchor is not None else None,
            "inner_radius": self.inner_radius,
            "diameter": self.diameter,
            "corkscrew": self.corkscrew.to_dict() if self.corkscrew is not None else None,
            "members": _runs(self.members),
        }


@dataclass
class CubeFamily:
    """Cube levels 0..jmax over one boundary sample."""

    domain: Domain
    N: int
    eta: float
    jmax: int
    depth: int
    samples: BoundarySample
    nets: List[Net]
    radii: List[np.ndarray]
    cover_counts: List[np.ndarray]
    delta_labels: List[np.ndarray]
    phi: List[np.ndarray]
    labels: List[np.ndarray]
    levels: List[List[Cube]]
    finest: int
    c0: float = C0_MAX
    c3: Optional[float] = None
    ledger: ConstantsLedger = field(default_factory=ConstantsLedger)
    audits: Dict[str, Any] = field(default_factory=dict)
    _lookup: Dict[Tuple[int, int], Cube] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._lookup = {c.id: c for level in self.levels for c in level}

    def scale(self, j: int) -> float:
        return 2.0 ** (-self.N * j)

    def cube(self, level: int, index: int) -> Cube:
        return self._lookup[(level, index)]

    def roots(self) -> List[Cube]:
        return list(self.levels[0])

    def children(self, cube: Cube) -> List[Cube]:
        return [self._lookup[(cube.level + 1, i)] for i in cube.children]

    def descendants(self, cube: Cube, level: int) -> List[Cube]:
        """Cubes of ``level`` contained in ``cube`` (canonical order)."""
        if level < cube.level:
            return []
        if level > self.jmax:
            return []
        anc = self.ancestor_labels(level, cube.level)
        return [c for c in self.levels[level] if anc[c.index] == cube.index]

    def ancestor_labels(self, level: int, up_to: int) -> np.ndarray:
        """Map from net index at ``level`` to its ancestor net index at ``up_to``."""
        lab = np.arange(len(self.nets[level]))
        for k in range(level - 1, up_to - 1, -1):
            lab = self.phi[k][lab]
        return lab

    def is_ancestor(self, a: Cube, b: Cube) -> bool:
        """True when ``a`` contains ``b`` (a cube counts as its own ancestor)."""
        if b.level < a.level:
            return False
        return int(self.ancestor_labels(b.level, a.level)[b.index]) == a.index

    def member_mask(self, cube: Cube) -> np.ndarray:
        mask = np.zeros(len(self.samples), dtype=bool)
        mask[cube.members] = True
        return mask

    def dilation_mask(self, cube: Cube, lam: float) -> np.ndarray:
        """Samples within (lam - 1) * scale of the cube (the dilate lam * S)."""
        mask = self.member_mask(cube)
        extra = (lam - 1.0) * cube.scale
        if extra <= 0:
            return mask
        pts = self.samples.points[cube.members]
        reach = float(np.max(np.linalg.norm(pts - np.asarray(cube.center), axis=1)))
        cand = np.asarray(self.samples.tree.query_ball_point(cube.center, reach + extra), dtype=np.int64)
        cand = cand[~mask[cand]]
        if len(cand):
            d, _ = cKDTree(pts).query(self.samples.points[cand], distance_upper_bound=extra * (1 + 1e-12))
            mask[cand[np.isfinite(d)]] = True
        return mask

    def region(self, cube: Cube, dilation: float = 1.0) -> "CubeRegion":
        return CubeRegion(self, cube, dilation)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "eta": self.eta,
            "jmax": self.jmax,
            "depth": self.depth,
            "finest": self.finest,
            "spacing": self.samples.spacing,
            "samples": len(self.samples),
            "c0": self.c0,
            "c3": self.c3,
            "levels": [[c.to_dict() for c in level] for level in self.levels],
            "audits": self.audits,
        }


@dataclass
class CubeRegion:
    """Boundary set of a (dilated) cube; walk hits are matched by nearest sample."""

    family: CubeFamily
    cube: Cube
    dilation: float = 1.0

    def __post_init__(self) -> None:
        self.mask = (
            self.family.member_mask(self.cube)
            if self.dilation == 1.0
            else self.family.dilation_mask(self.cube, self.dilation)
        )

    def hits(self, walks) -> np.ndarray:
        idx = walks.nearest_sample(self.family.samples.tree)
        return walks.on_boundary() & self.mask[idx]


def _runs(indices: np.ndarray) -> List[List[int]]:
    """Consecutive index runs [start, stop)."""
    if len(indices) == 0:
        return []
    idx = np.asarray(indices)
    breaks = np.nonzero(np.diff(idx) != 1)[0]
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    stops = np.concatenate([idx[breaks] + 1, [idx[-1] + 1]])
    return [[int(a), int(b)] for a, b in zip(starts, stops)]


# ============================================================================
# Sampling and nets
# ============================================================================


def check_scales(N: int, eta: float) -> None:
    """2**-N comparable to eta**2 < 1/9.

    Raises:
        ParameterError: Scale relation violated
    """
    if N < 1:
        raise ParameterError("N must be at least 1", N=N)
    if not (0.0 < eta < 1.0) or not eta * eta < 1.0 / 9.0:
        raise ParameterError("eta**2 must be below 1/9", eta=eta)
    ratio = 2.0 ** (-N) / (eta * eta)
    if not 0.5 <= ratio <= 2.0:
        raise ParameterError("2**-N must be comparable to eta**2", N=N, eta=eta, ratio=ratio)


def default_spacing(N: int, jmax: int) -> float:
    return 2.0 ** (-N * jmax) / 8.0


def sample_boundary(domain: Domain, spacing: float) -> BoundarySample:
    """Sample every non-window piece at arclength ``spacing``."""
    pts, piece, weights = BoundaryRegion.all(domain, include_window=False).sample(spacing)
    if len(pts) == 0:
        raise ResolutionError("domain has no boundary to sample", kind=domain.kind)
    logger.info(f"Sampled boundary: {len(pts)} points at spacing {spacing:.3g}")
    return BoundarySample(pts, piece, weights, spacing, cKDTree(pts))


def _greedy_net(points: np.ndarray, sep: float, seed_idx: np.ndarray) -> np.ndarray:
    """Greedy maximal sep-separated subset in index order, seeded with ``seed_idx``."""
    grid: Dict[Tuple[int, int], List[int]] = {}
    chosen = [int(i) for i in seed_idx]
    for i in chosen:
        key = (int(math.floor(points[i, 0] / sep)), int(math.floor(points[i, 1] / sep)))
        grid.setdefault(key, []).append(i)
    candidates = np.arange(len(points))
    if len(seed_idx):
        d, _ = cKDTree(points[seed_idx]).query(points, distance_upper_bound=sep)
        candidates = candidates[~(d < sep)]
    for i in candidates:
        x, y = points[i]
        kx, ky = int(math.floor(x / sep)), int(math.floor(y / sep))
        ok = True
        for gx in (kx - 1, kx, kx + 1):
            for gy in (ky - 1, ky, ky + 1):
                for q in grid.get((gx, gy), ()):
                    if (points[q, 0] - x) ** 2 + (points[q, 1] - y) ** 2 < sep * sep:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            grid.setdefault((kx, ky), []).append(int(i))
            chosen.append(int(i))
    return np.array(sorted(chosen), dtype=np.int64)


def build_nets(
    domain: Domain,
    N: int,
    jmax: int,
    spacing: Optional[float] = None,
    sample: Optional[BoundarySample] = None,
) -> List[Net]:
    """Nested greedy maximal 2**(-N j)-separated nets, j = 0..jmax.

    Raises:
        ResolutionError: Sample spacing coarser than 2**(-N jmax) / 8
    """
    if N < 1 or jmax < 0:
        raise ParameterError("N must be >= 1 and jmax >= 0", N=N, jmax=jmax)
    limit = default_spacing(N, jmax)
    spacing = limit if spacing is None else spacing
    if spacing > limit * (1 + 1e-12):
        raise ResolutionError("sample spacing too coarse for jmax", spacing=spacing, required=limit)
    sample = sample_boundary(domain, spacing) if sample is None else sample
    nets: List[Net] = []
    seed = np.zeros(0, dtype=np.int64)
    for j in range(jmax + 1):
        sep = 2.0 ** (-N * j)
        seed = _greedy_net(sample.points, sep, seed)
        nets.append(Net(j, seed, sep))
        logger.debug(f"Net level {j}: {len(seed)} points at separation {sep:.3g}")
    return nets


# ============================================================================
# Radius selection
# ============================================================================


def _cover_number(points: np.ndarray, radius: float) -> int:
    """Greedy cover of ``points`` by closed balls of ``radius`` centered at points."""
    m = 0
    remaining = points
    while len(remaining):
        d = np.linalg.norm(remaining - remaining[0], axis=1)
        remaining = remaining[d > radius]
        m += 1
    return m


def radius_scan(sample: BoundarySample, x: Sequence[float], j: int, N: int, eta: float) -> List[Tuple[float, int]]:
    """(r, m) for every candidate radius in (l, (1 + eta) l) on the eta**2 l grid."""
    ell = 2.0 ** (-N * j)
    width = eta * eta * ell
    count = max(1, int(math.ceil(1.0 / eta)) - 1)
    radii = [ell * (1.0 + k * eta * eta) for k in range(1, count + 1)]
    radii = [r for r in radii if r < (1.0 + eta) * ell] or [ell * (1.0 + 0.5 * eta)]
    idx = np.asarray(sample.tree.query_ball_point(x, radii[-1] + width), dtype=np.int64)
    pts = sample.points[idx]
    dist = np.linalg.norm(pts - np.asarray(x, dtype=float), axis=1)
    return [(r, _cover_number(pts[np.abs(dist - r) <= width], width)) for r in radii]


def choose_radius(sample: BoundarySample, x: Sequence[float], j: int, N: int, eta: float) -> Tuple[float, int]:
    """Radius with the smallest collar covering number (ties to the smallest radius)."""
    if not 0.0 < eta < 1.0:
        raise ParameterError("eta must lie in (0, 1)", eta=eta)
    scan = radius_scan(sample, x, j, N, eta)
    best = min(scan, key=lambda rm: (rm[1], rm[0]))
    return best


# ============================================================================
# Cube construction
# ============================================================================


def _ordered_difference(
    sample: BoundarySample, net_pts: np.ndarray, radii: np.ndarray, rank: np.ndarray, reach: float
) -> np.ndarray:
    """Label of each sample: the lowest-ranked net point whose ball contains it."""
    k = min(_NEIGHBORS, len(net_pts))
    tree = cKDTree(net_pts)
    d, nb = tree.query(sample.points, k=k, distance_upper_bound=reach * (1 + 1e-12))
    d = np.asarray(d).reshape(len(sample), k)
    nb = np.asarray(nb).reshape(len(sample), k)
    valid = nb < len(net_pts)
    safe = np.where(valid, nb, 0)
    inside = valid & (d <= radii[safe])
    keyed = np.where(inside, rank[safe], np.iinfo(np.int64).max)
    best = np.argmin(keyed, axis=1)
    rows = np.arange(len(sample))
    if not inside[rows, best].all():
        missing = int((~inside[rows, best]).sum())
        raise ResolutionError("samples left uncovered by the net balls", uncovered=missing)
    return safe[rows, best]


def _diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    if len(points) > _HULL_THRESHOLD:
        try:
            points = points[ConvexHull(points, qhull_options="QJ").vertices]
        except Exception:  # qhull rejects degenerate inputs
            logger.debug("Convex hull failed; using all points for the diameter")
    return float(pdist(points).max())


def _complement_distances(sample: BoundarySample, members: np.ndarray, center, reach: float) -> np.ndarray:
    """Distance from each member to the nearest non-member sample."""
    cand = np.asarray(sample.tree.query_ball_point(center, reach), dtype=np.int64)
    mask = np.zeros(len(sample), dtype=bool)
    mask[members] = True
    others = cand[~mask[cand]]
    if len(others) == 0:
        return np.full(len(members), np.inf)
    d, _ = cKDTree(sample.points[others]).query(sample.points[members])
    return d


def build_cubes(
    domain: Domain,
    N: int,
    eta: float,
    jmax: int,
    depth: int,
    spacing: Optional[float] = None,
    progress: bool = False,
) -> CubeFamily:
    """Build cube levels 0..jmax on the non-window boundary.

    Labels at the finest resolved level L* = min(jmax + depth, resolved)
    are the ordered differences of the net balls. Coarser labels follow the
    parent map, so level-j cubes are the depth-(L* - j) iterates.

    Args:
        domain: The domain
        N: Scale exponent, cubes at level j have scale 2**(-N j)
        eta: Collar parameter; 2**-N must be comparable to eta**2
        jmax: Deepest cube level
        depth: Iteration depth of the refinement
        spacing: Boundary sample spacing, default 2**(-N jmax) / 8

    Returns:
        CubeFamily with audits of diameter, partition, nesting, inner balls
        and Hausdorff convergence

    Raises:
        ParameterError: Scale relation or depth violated
        ResolutionError: Sample too coarse
    """
    check_scales(N, eta)
    if depth < 1:
        raise ParameterError("depth must be at least 1", depth=depth)
    if jmax < 0:
        raise ParameterError("jmax must be non-negative", jmax=jmax)
    logger.info(f"Building cube family N={N} eta={eta} jmax={jmax} depth={depth}")
    spacing = default_spacing(N, jmax) if spacing is None else spacing
    sample = sample_boundary(domain, spacing)
    resolved = jmax
    while 2.0 ** (-N * (resolved + 1)) >= 8.0 * spacing * (1 - 1e-12):
        resolved += 1
    finest = min(jmax + depth, resolved)
    nets = build_nets(domain, N, finest, spacing=spacing, sample=sample)

    ledger = ConstantsLedger()
    ledger.record("eta-net", eta, "fixed")
    ledger.record("N", N, "fixed", ["eta-net"])

    radii: List[np.ndarray] = []
    cover: List[np.ndarray] = []
    for j in tqdm(range(finest + 1), disable=not progress, desc="radii"):
        scan = [choose_radius(sample, x, j, N, eta) for x in nets[j].points(sample)]
        radii.append(np.array([r for r, _ in scan]))
        cover.append(np.array([m for _, m in scan], dtype=np.int64))
    c_d = max(float(m.max()) * eta for m in cover if len(m))
    ledger.record("C_d", c_d, "measured", ["eta-net"], "collar covering constant")

    # ordering: children inherit the parent's rank, canonical order breaks ties
    delta: List[np.ndarray] = []
    phi: List[np.ndarray] = []
    rank = np.arange(len(nets[0]))
    for j in range(finest + 1):
        if j > 0:
            parent_of = delta[j - 1][nets[j].indices]
            phi.append(parent_of)
            order = np.lexsort((np.arange(len(nets[j])), prev_rank[parent_of]))
            rank = np.empty(len(nets[j]), dtype=np.int64)
            rank[order] = np.arange(len(nets[j]))
        reach = (1.0 + eta) * 2.0 ** (-N * j)
        delta.append(_ordered_difference(sample, nets[j].points(sample), radii[j], rank, reach))
        prev_rank = rank

    labels: List[np.ndarray] = [np.empty(0, dtype=np.int64)] * (jmax + 1)
    current = delta[finest]
    for j in range(finest, -1, -1):
        if j < finest:
            current = phi[j][current]
        if j <= jmax:
            labels[j] = current

    levels: List[List[Cube]] = []
    for j in range(jmax + 1):
        order = np.argsort(labels[j], kind="stable")
        uniq, starts = np.unique(labels[j][order], return_index=True)
        bounds = list(starts[1:]) + [len(order)]
        level = []
        for net_i, a, b in zip(uniq, starts, bounds):
            members = np.sort(order[a:b])
            x = sample.points[nets[j].indices[net_i]]
            level.append(Cube(j, int(net_i), (float(x[0]), float(x[1])), 2.0 ** (-N * j), members))
        levels.append(level)
    for j in range(1, jmax + 1):
        lookup = {c.index: c for c in levels[j - 1]}
        for c in levels[j]:
            c.parent = int(phi[j - 1][c.index])
            lookup[c.parent].children.append(c.index)

    family = CubeFamily(
        domain=domain,
        N=N,
        eta=eta,
        jmax=jmax,
        depth=depth,
        samples=sample,
        nets=nets,
        radii=radii,
        cover_counts=cover,
        delta_labels=delta,
        phi=phi,
        labels=labels,
        levels=levels,
        finest=finest,
        ledger=ledger,
    )
    _attach_anchors(family)
    family.audits = audit_family(family)
    logger.info(f"Cube family: {[len(level) for level in levels]} cubes per level, c0={family.c0:.4g}")
    return family


def _attach_anchors(family: CubeFamily) -> None:
    """Anchor x_S: the member farthest from the rest of the boundary."""
    ratios = []
    for level in family.levels:
        for cube in level:
            pts = family.samples.points[cube.members]
            cube.diameter = _diameter(pts)
            reach = 4.0 * (1.0 + family.eta) * cube.scale + cube.diameter
            dist = _complement_distances(family.samples, cube.members, cube.center, reach)
            best = int(np.argmax(dist))
            x = pts[best]
            cube.anchor = (float(x[0]), float(x[1]))
            if np.isfinite(dist[best]):
                cube.inner_radius = float(dist[best])
                ratios.append(dist[best] / cube.scale)
            else:
                cube.inner_radius = cube.scale * C0_MAX
    family.c0 = float(min([C0_MAX] + ratios))
    family.ledger.record("c0", family.c0, "measured", ["N"], "inner ball ratio")


# ============================================================================
# Audits
# ============================================================================


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        return 0.0 if len(a) == len(b) else math.inf
    return float(max(cKDTree(b).query(a)[0].max(), cKDTree(a).query(b)[0].max()))


def iterate_labels(family: CubeFamily, j: int, n: int) -> np.ndarray:
    """Per-sample labels of the depth-n iterate of level j."""
    lab = family.delta_labels[j + n]
    for k in range(j + n - 1, j - 1, -1):
        lab = family.phi[k][lab]
    return lab


def audit_family(family: CubeFamily, audit_cubes: int = 64) -> Dict[str, Any]:
    """Diameter bounds, partition, nesting, inner balls and Hausdorff steps."""
    eta = family.eta
    diam_viol = 0
    for level in family.levels:
        for c in level:
            lower_ok = c.scale / 3.0 <= c.diameter * (1 + 1e-12) + family.samples.spacing
            if not (lower_ok and c.diameter <= 4.0 * (1.0 + eta) * c.scale):
                diam_viol += 1
    total = len(family.samples)
    partition = all(sum(c.size for c in level) == total for level in family.levels)
    nesting = True
    for j in range(1, family.jmax + 1):
        parents = family.labels[j - 1]
        for c in family.levels[j]:
            if len(np.unique(parents[c.members])) != 1:
                nesting = False
                break
    checked = 0
    passed = 0
    worst = 0.0
    for j in range(family.finest):
        if j > family.jmax:
            break
        for n in range(family.finest - j):
            a = iterate_labels(family, j, n)
            b = iterate_labels(family, j, n + 1)
            bound = (1.0 + eta) * 2.0 ** (-family.N * (j + n))
            keys = np.unique(a)
            pick = keys[np.linspace(0, len(keys) - 1, min(audit_cubes, len(keys))).astype(int)] if len(keys) else keys
            for key in pick:
                h = hausdorff(family.samples.points[a == key], family.samples.points[b == key])
                checked += 1
                worst = max(worst, h / bound)
                if h <= bound + family.samples.spacing:
                    passed += 1
    return {
        "diameter_violations": diam_viol,
        "partition": bool(partition),
        "nesting": bool(nesting),
        "c0": family.c0,
        "hausdorff_checked": checked,
        "hausdorff_pass_fraction": passed / checked if checked else 1.0,
        "hausdorff_worst_ratio": worst,
    }


# ============================================================================
# Small boundaries
# ============================================================================


@dataclass
class SmallBoundaryReport:
    cube: Tuple[int, int]
    counts: List[Tuple[float, int]]
    constant: float

    def to_dict(self) -> Dict[str, Any]:
        return {"cube": list(self.cube), "counts": [list(c) for c in self.counts], "constant": self.constant}


def fit_small_boundary_constant(counts: Sequence[Tuple[float, int]], d: int = 1, upper: float = 1e6) -> float:
    """Least C >= 1 with N_tau <= C * tau**(1/C - d) for every tau < 1."""
    def ok(c: float) -> bool:
        return all(n <= c * tau ** (1.0 / c - d) * (1 + 1e-12) for tau, n in counts)

    if ok(1.0):
        return 1.0
    if not ok(upper):
        return math.inf
    lo, hi = 1.0, upper
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def small_boundary_stats(family: CubeFamily, S: Cube, taus: Sequence[float]) -> SmallBoundaryReport:
    """Grid counts of the two-sided tau * l(S) collar of S inside the boundary."""
    pts = family.samples.points
    mask = family.member_mask(S)
    inside = np.nonzero(mask)[0]
    outside = np.nonzero(~mask)[0]
    counts = []
    for tau in taus:
        width = tau * S.scale
        if len(outside) == 0 or len(inside) == 0:
            counts.append((float(tau), 0))
            continue
        reach = S.diameter + width + S.scale
        near = np.asarray(family.samples.tree.query_ball_point(S.center, reach), dtype=np.int64)
        near_out = near[~mask[near]]
        collar = []
        if len(near_out):
            d_in, _ = cKDTree(pts[near_out]).query(pts[inside], distance_upper_bound=width * (1 + 1e-12))
            collar.append(pts[inside][np.isfinite(d_in)])
            d_out, _ = cKDTree(pts[inside]).query(pts[near_out], distance_upper_bound=width * (1 + 1e-12))
            collar.append(pts[near_out][np.isfinite(d_out)])
        collar_pts = np.concatenate(collar) if collar else np.zeros((0, 2))
        counts.append((float(tau), grid_cover_count_points(collar_pts, width)))
    constant = fit_small_boundary_constant(counts, family.domain.params.d)
    return SmallBoundaryReport(S.id, counts, constant)


# ============================================================================
# Corkscrew balls
# ============================================================================


def attach_corkscrew_balls(
    family: CubeFamily,
    eps: float,
    samples: int,
    seed: int,
    kmax: int = 8,
    levels: Optional[Sequence[int]] = None,
    shell: Optional[float] = None,
    workers: int = 1,
    progress: bool = False,
) -> CubeFamily:
    """Attach B_S = B(p_S, c3 l(S)) to every cube of ``levels`` and certify it.

    With r_k = c0 l / 4 * 2**-k, the corkscrew witness B(p, alpha r_k) is
    4B_S, so c3 = alpha c0 2**-k / 16. The shared k grows until walks from
    the stencil of 2B_S, restricted to B(x_S, c0 l), end on S with
    probability at least 1 - eps (upper confidence bound) and the balls
    pass the geometric audits: balls of disjoint cubes are disjoint, and
    2B_S' misses B(x_S, c0 l(S)) whenever l(S') > l(S). Every k must keep
    c3 above 2**(-N-1) c0; a larger k only shrinks c3, so a violation ends
    the search.

    Raises:
        ParameterError: eps not below 1/2
        CertificationError: c3 falls to 2**(-N-1) c0 before every cube is
            certified (N too small for eps), or no k <= kmax certifies every
            cube with clean ball audits
    """
    if not 0.0 < eps < 0.5:
        raise ParameterError("eps must lie in (0, 1/2)", eps=eps)
    domain = family.domain
    alpha = domain.params.alpha
    levels = list(range(family.jmax + 1)) if levels is None else list(levels)
    cubes = [c for j in levels for c in family.levels[j]]
    floor = 2.0 ** (-family.N - 1) * family.c0
    worst: Dict[str, Any] = {}
    for k in range(kmax + 1):
        c3 = alpha * family.c0 * 2.0 ** (-k) / 16.0
        if c3 <= floor:
            min_N = math.floor(math.log2(family.c0 / c3))
            logger.error(f"c3={c3:.4g} at k={k} is not above 2**(-N-1) c0 with N={family.N}")
            raise CertificationError(
                "corkscrew scale separation needs a larger N", k=k, c3=c3, N=family.N, min_N=min_N, last=worst
            )
        balls = {}
        failures = []
        for cube in tqdm(cubes, disable=not progress, desc=f"corkscrew k={k}"):
            r_k = family.c0 * cube.scale / 4.0 * 2.0 ** (-k)
            witness = corkscrew_witness(domain, cube.anchor, r_k)
            ball = Ball(witness.center, c3 * cube.scale)
            value = _certify_ball(family, cube, ball, eps, samples, seed, shell, workers)
            balls[cube.id] = ball
            if value < 1.0 - eps:
                failures.append((cube.id, value))
                if len(failures) >= _MAX_FAILURES:
                    break
        if failures:
            worst = {"k": k, "failures": [[list(i), v] for i, v in failures]}
            logger.warning(f"Corkscrew certification failed on {len(failures)}+ cubes at k={k}")
            continue
        audits = _ball_audits(family, cubes, balls, c3)
        violations = audits["ball_overlaps_same_level"] + audits["ball_overlaps_cross_level"]
        violations += audits["ball_scale_conflicts"]
        if violations:
            worst = {"k": k, "audits": audits}
            logger.warning(f"Corkscrew balls at k={k} fail {violations} disjointness checks")
            continue
        for cube in cubes:
            cube.corkscrew = balls[cube.id]
        family.c3 = c3
        family.ledger.record("alpha", alpha, "fixed")
        family.ledger.record("c3", c3, "calibrated", ["c0", "alpha"], f"k={k}")
        family.audits.update(audits)
        logger.info(f"Corkscrew balls certified at k={k}, c3={c3:.4g}")
        return family
    logger.error("Corkscrew certification exhausted kmax")
    raise CertificationError("corkscrew balls not certified", kmax=kmax, **worst)


def _certify_ball(family, cube, ball, eps, samples, seed, shell, workers) -> float:
    """Smallest upper confidence bound of omega(p, S in B(x_S, c0 l)) over the stencil of 2B_S."""
    domain = family.domain
    cap = Ball(cube.anchor, family.c0 * cube.scale)
    mask = family.member_mask(cube)
    width = min(default_shell(domain), 0.1 * ball.radius) if shell is None else shell
    uppers = []
    for q, p in enumerate(ball.scaled(2.0).stencil(0.5)):
        walks = simulate_walks(
            domain, p, samples, width, seed, f"cork-{cube.level}-{cube.index}-{q}", ball=cap, workers=workers
        )
        idx = walks.nearest_sample(family.samples.tree)
        hits = walks.on_boundary() & mask[idx]
        value = float(np.count_nonzero(hits)) / walks.samples
        uppers.append(wilson_interval(value, walks.samples)[1])
    return float(min(uppers))


def _ball_audits(
    family: CubeFamily, cubes: List[Cube], balls: Dict[Tuple[int, int], Ball], c3: float
) -> Dict[str, Any]:
    """Overlaps of balls of disjoint cubes and 2B_S' against B(x_S, c0 l(S)) for larger S'."""
    centers = np.array([balls[c.id].center for c in cubes])
    radii = np.array([balls[c.id].radius for c in cubes])
    tree = cKDTree(centers)
    same_level = 0
    cross_level = 0
    for a_i, b_i in sorted(tree.query_pairs(2.0 * float(radii.max()))):
        a, b = cubes[a_i], cubes[b_i]
        if np.linalg.norm(centers[a_i] - centers[b_i]) > radii[a_i] + radii[b_i]:
            continue
        if a.level == b.level:
            same_level += 1
        else:
            big, small = (a, b) if a.scale > b.scale else (b, a)
            if not family.is_ancestor(big, small):
                cross_level += 1

    scale_conflicts = 0
    for small in cubes:
        reach = 2.0 * float(radii.max()) + family.c0 * small.scale
        for i in tree.query_ball_point(small.anchor, reach):
            big = cubes[i]
            if big.scale <= small.scale:
                continue
            gap = float(np.linalg.norm(centers[i] - np.asarray(small.anchor)))
            if gap <= 2.0 * radii[i] + family.c0 * small.scale:
                scale_conflicts += 1
    return {
        "ball_overlaps_same_level": same_level,
        "ball_overlaps_cross_level": cross_level,
        "ball_scale_conflicts": scale_conflicts,
        "c3_lower_bound_holds": bool(c3 > 2.0 ** (-family.N - 1) * family.c0),
        "c3_upper_bound_holds": bool(4.0 * c3 < family.c0),
    }
