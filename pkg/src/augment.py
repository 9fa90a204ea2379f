"""
Augmented Domain Module

Builds the subdomain Omega~ of Omega by removing separated circular caps
from the corkscrew balls of stopped cubes, generation by generation, and
assembles the boundary measure sigma = mu + nu on it: mu from scaled
harmonic measure on the parts of the boundary left in each tree, nu the
arclength of the caps. Audits cover containment, cap disjointness, the
cap-hitting gate, the two-sided density bounds of sigma and the central
disc variant for small Cantor ratios.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree
from tqdm import tqdm

from src.corona import HD, LD, CoronaParams, StencilHits, generations, scan_with_budget
from src.cubes import Cube, CubeFamily, attach_corkscrew_balls, build_cubes
from src.errors import CalibrationError, GeometryError, ParameterError, PreconditionError
from src.geometry import (
    CAP,
    TWO_PI,
    Arc,
    Ball,
    BoundaryRegion,
    CantorSpec,
    Domain,
    cantor_center_discs,
    domain_to_spec,
    make_cantor,
)
from src.potential import MeasureEstimate, default_shell, simulate_walks, wilson_interval
from src.rng import stream

logger = logging.getLogger(__name__)

CAP_GATE = (0.35, 0.65)
MAX_BISECTIONS = 20
MAX_DEPTH = 3
# angular slot per cap is at least this many angular radii
SEPARATION = 2.5
HOST_FACTOR = 1.5
ARC_POINTS = 64


# ============================================================================
# Caps
# ============================================================================


@dataclass
class CapSet:
    """Equally spaced congruent arcs on the circle of radius 1.5 c3 l(S) about p_S.

    Attributes:
        host: Cube id (level, index)
        sphere: Hosting circle
        caps: (direction, angular radius) per cap
        scale: l(S)
        c18: Total arclength divided by l(S)
    """

    host: Tuple[int, int]
    sphere: Ball
    caps: List[Tuple[float, float]]
    scale: float
    c18: float
    generation: int = 1

    @property
    def area(self) -> float:
        return float(sum(2.0 * a * self.sphere.radius for _, a in self.caps))

    def arcs(self) -> List[Arc]:
        level, index = self.host
        return [
            Arc(self.sphere.center, self.sphere.radius, theta - a, theta + a, f"cap-{level}-{index}-{k}", CAP)
            for k, (theta, a) in enumerate(self.caps)
        ]

    def points(self, per_cap: int = ARC_POINTS) -> np.ndarray:
        t = np.linspace(0.0, 1.0, per_cap)
        return np.concatenate([arc.point(arc.theta0 + t * (arc.theta1 - arc.theta0)) for arc in self.arcs()])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "host": list(self.host),
            "generation": self.generation,
            "sphere": self.sphere.to_dict(),
            "caps": [[theta, a] for theta, a in self.caps],
            "scale": self.scale,
            "c18": self.c18,
            "area": self.area,
        }


def max_c18(S: Cube, cap_count: int) -> float:
    """Largest c18 whose caps still satisfy the angular separation."""
    rho = HOST_FACTOR * S.corkscrew.radius
    a_max = TWO_PI / (cap_count * SEPARATION)
    return a_max * 2.0 * rho * cap_count / S.scale


def place_caps(S: Cube, c18: float, cap_count: int = 2, domain: Optional[Domain] = None) -> CapSet:
    """Place ``cap_count`` arcs of total length c18 * l(S) around p_S.

    The first cap faces x_S. With ``domain`` given, every cap sample point
    must lie strictly inside it.

    Raises:
        PreconditionError: S has no corkscrew ball
        ParameterError: cap_count < 1 or c18 not positive
        GeometryError: caps too long to stay separated, or leaving the domain
    """
    if S.corkscrew is None:
        raise PreconditionError("cube has no corkscrew ball", cube=S.id)
    if cap_count < 1:
        raise ParameterError("cap_count must be at least 1", cap_count=cap_count)
    if not c18 > 0:
        raise ParameterError("c18 must be positive", c18=c18)
    rho = HOST_FACTOR * S.corkscrew.radius
    a = c18 * S.scale / (2.0 * rho * cap_count)
    if a * SEPARATION > TWO_PI / cap_count:
        raise GeometryError("caps too long for their separation", cube=S.id, c18=c18, angular_radius=a)
    center = np.asarray(S.corkscrew.center)
    facing = np.asarray(S.anchor) - center
    theta0 = math.atan2(facing[1], facing[0])
    caps = [(theta0 + TWO_PI * k / cap_count, a) for k in range(cap_count)]
    capset = CapSet(S.id, Ball(S.corkscrew.center, rho), caps, S.scale, c18)
    if domain is not None:
        pts = capset.points()
        if not np.all(domain.contains(pts)):
            raise GeometryError("caps leave the domain", cube=S.id)
    return capset


def _in_arc(theta: np.ndarray, arc: Arc) -> np.ndarray:
    return np.mod(theta - arc.theta0, TWO_PI) <= (arc.theta1 - arc.theta0) + 1e-12


def arcs_meet(a: Arc, b: Arc) -> bool:
    """Exact intersection test of two circular arcs."""
    ca, cb = np.asarray(a.center), np.asarray(b.center)
    gap = float(np.linalg.norm(cb - ca))
    if gap > a.radius + b.radius or gap < abs(a.radius - b.radius):
        return False
    if gap == 0.0:
        if a.radius != b.radius:
            return False
        ends = np.array([b.theta0, b.theta1])
        return bool(_in_arc(ends, a).any() or _in_arc(np.array([a.theta0]), b)[0])
    phi = math.atan2(cb[1] - ca[1], cb[0] - ca[0])
    half = math.acos(max(-1.0, min(1.0, (gap**2 + a.radius**2 - b.radius**2) / (2.0 * a.radius * gap))))
    ta = np.array([phi - half, phi + half])
    pts = ca + a.radius * np.stack([np.cos(ta), np.sin(ta)], axis=1)
    tb = np.arctan2(pts[:, 1] - cb[1], pts[:, 0] - cb[0])
    return bool(np.any(_in_arc(ta, a) & _in_arc(tb, b)))


def cap_collisions(capsets: Sequence[CapSet]) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
    """Pairs of host cubes whose caps intersect."""
    if len(capsets) < 2:
        return []
    centers = np.array([c.sphere.center for c in capsets])
    radii = np.array([c.sphere.radius for c in capsets])
    tree = cKDTree(centers)
    out = []
    for i, j in sorted(tree.query_pairs(2.0 * float(radii.max()) * (1 + 1e-12))):
        if any(arcs_meet(x, y) for x in capsets[i].arcs() for y in capsets[j].arcs()):
            out.append((capsets[i].host, capsets[j].host))
    return out


@dataclass
class CapCalibration:
    capset: CapSet
    gate: MeasureEstimate
    cover: float
    cover_upper: float
    steps: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "host": list(self.capset.host),
            "c18": self.capset.c18,
            "gate": self.gate.to_dict(),
            "cover": self.cover,
            "cover_upper": self.cover_upper,
            "steps": self.steps,
        }


def calibrate_caps(
    S: Cube,
    family: CubeFamily,
    omega: Domain,
    c18: float,
    cap_count: int,
    budget: int,
    seed: int,
    shell: Optional[float] = None,
    workers: int = 1,
) -> CapCalibration:
    """Bisect c18 until the caps of S catch between 35% and 65% of walks from p_S.

    Walks run on ``omega`` minus the caps of S and share one stream across
    the bisection steps. The final path set also measures the mass of
    S together with its caps.

    Raises:
        CalibrationError: gate not met within 20 bisection steps
    """
    if S.corkscrew is None:
        raise PreconditionError("cube has no corkscrew ball", cube=S.id)
    lo, hi = 0.0, max_c18(S, cap_count)
    current = min(c18, 0.999 * hi)
    key = f"caps-{S.level}-{S.index}"
    width = min(default_shell(omega), 0.1 * S.corkscrew.radius) if shell is None else shell
    history = []
    for step in range(1, MAX_BISECTIONS + 1):
        capset = place_caps(S, current, cap_count, omega)
        trial = omega.with_pieces(capset.arcs())
        walks = simulate_walks(trial, S.corkscrew.center, budget, width, seed, key, workers=workers)
        on_caps = walks.piece >= len(omega.pieces)
        estimate = MeasureEstimate.from_hits(on_caps, width, seed)
        history.append((current, estimate.value))
        if CAP_GATE[0] <= estimate.value <= CAP_GATE[1]:
            idx = walks.nearest_sample(family.samples.tree)
            base = walks.on_boundary() & (walks.piece < len(family.domain.pieces))
            in_s = base & family.member_mask(S)[idx]
            cover = float(np.count_nonzero(on_caps | in_s)) / walks.samples
            logger.debug(f"Caps of {S.id}: c18={current:.4g} gate={estimate.value:.3f} after {step} steps")
            return CapCalibration(capset, estimate, cover, wilson_interval(cover, walks.samples)[1], step)
        if estimate.value < CAP_GATE[0]:
            lo = current
        else:
            hi = current
        current = 0.5 * (lo + hi)
    logger.error(f"Cap calibration failed for cube {S.id}")
    raise CalibrationError(
        "cap hitting probability not calibrated", cube=S.id, history=[[c, v] for c, v in history[-5:]]
    )


# ============================================================================
# Sigma
# ============================================================================


@dataclass
class HarmonicPiece:
    """l(S)**d omega(p_S, ., Omega_n) on the samples of S left in K_{n+1}."""

    generation: int
    cube: Tuple[int, int]
    indices: np.ndarray
    weights: np.ndarray
    samples: int

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


@dataclass
class SigmaMeasure:
    """sigma = mu + nu: weighted boundary samples plus arclength on unit-density pieces."""

    points: np.ndarray
    pieces: List[HarmonicPiece]
    continuous: Optional[BoundaryRegion]
    resolution: float
    depth: int = 0
    d: int = 1

    def __post_init__(self) -> None:
        weights = np.zeros(len(self.points))
        for piece in self.pieces:
            np.add.at(weights, piece.indices, piece.weights)
        self.atom_weights = weights
        support = np.nonzero(weights > 0)[0]
        self._support = support
        self._tree = cKDTree(self.points[support]) if len(support) else None

    @classmethod
    def from_arclength(cls, domain: Domain, resolution: Optional[float] = None) -> "SigmaMeasure":
        """Arclength on every non-window piece."""
        region = BoundaryRegion.all(domain, include_window=False)
        resolution = domain.diameter * 2.0**-12 if resolution is None else resolution
        return cls(np.zeros((0, 2)), [], region, resolution)

    @property
    def mu_mass(self) -> float:
        return float(sum(p.mass for p in self.pieces))

    @property
    def nu_mass(self) -> float:
        return self.continuous.length() if self.continuous is not None else 0.0

    @property
    def total_mass(self) -> float:
        return self.mu_mass + self.nu_mass

    def mass(self, ball: Ball) -> float:
        total = 0.0
        if self._tree is not None:
            found = self._tree.query_ball_point(ball.center, ball.radius)
            total += float(self.atom_weights[self._support[found]].sum())
        if self.continuous is not None:
            region = BoundaryRegion(self.continuous.domain, self.continuous.piece_ids, ball)
            total += region.length()
        return total

    def support_points(self, spacing: Optional[float] = None) -> np.ndarray:
        pts = [self.points[self._support]]
        if self.continuous is not None:
            pts.append(self.continuous.sample(spacing or self.resolution)[0])
        return np.concatenate(pts)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"piece": f"mu-{p.cube[0]}-{p.cube[1]}", "generation": p.generation, "mass": p.mass} for p in self.pieces
        ]
        if self.continuous is not None:
            domain = self.continuous.domain
            for i in np.nonzero(self.continuous.mask)[0]:
                piece = domain.pieces[i]
                rows.append({"piece": piece.label, "generation": -1, "mass": float(piece.length)})
        return pd.DataFrame(rows, columns=["piece", "generation", "mass"])


# ============================================================================
# Augmented domain
# ============================================================================


@dataclass
class AugmentedDomain:
    base: Domain
    domain: Domain
    capsets: List[CapSet]
    depth: int
    calibrations: List[CapCalibration] = field(default_factory=list)
    audits: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "domain": domain_to_spec(self.domain),
            "depth": self.depth,
            "capsets": [c.to_dict() for c in self.capsets],
            "calibrations": [c.to_dict() for c in self.calibrations],
            "audits": self.audits,
        }


def containment_audit(base: Domain, augmented: Domain, capsets: Sequence[CapSet] = ()) -> Dict[str, Any]:
    """Base pieces persist in the augmented boundary; every cap point lies inside the base domain."""
    missing = sorted(set(base.labels) - set(augmented.labels))
    extra = [augmented.pieces[i] for i in range(len(base.pieces), len(augmented.pieces))]
    sampled = [
        p.point(p.theta0 + np.linspace(0.0, 1.0, ARC_POINTS) * (p.theta1 - p.theta0))
        for p in extra
        if isinstance(p, Arc)
    ]
    if sampled:
        pts = np.concatenate(sampled)
        dist = base.distance(pts)
        inside = base.contains(pts)
        min_dist = float(dist.min())
        outside = int(np.count_nonzero(~inside))
    else:
        min_dist, outside = math.inf, 0
    return {
        "missing_base_pieces": missing,
        "cap_points_outside": outside,
        "min_cap_distance": min_dist,
        "holds": not missing and outside == 0 and min_dist > 0,
        "collisions": [[list(a), list(b)] for a, b in cap_collisions(capsets)],
    }


def _sigma_bounds(
    family: CubeFamily,
    tops: Sequence[Tuple[Cube, HarmonicPiece, List[Cube]]],
    capsets: Dict[Tuple[int, int], CapSet],
    c17: float,
    c18: float,
) -> Dict[str, Any]:
    d = family.domain.params.d
    checked = low = high = 0
    worst_low, worst_high = math.inf, 0.0
    for top, piece, stopped in tops:
        weights = np.zeros(len(family.samples))
        weights[piece.indices] = piece.weights
        norm = top.scale**d
        audited = [top]
        if top.level < family.jmax:
            audited += [c for c in family.children(top) if not any(family.is_ancestor(s, c) for s in stopped)]
        for T in audited:
            mu = float(weights[T.members].sum())
            nu = sum(cs.area for host, cs in capsets.items() if family.is_ancestor(T, family.cube(*host)))
            p = mu / norm
            slack = 3.0 * norm * math.sqrt(max(p * (1.0 - p), 0.0) / piece.samples)
            sigma = (mu + nu) / T.scale**d
            checked += 1
            if sigma + slack / T.scale**d < c17:
                low += 1
            if sigma - slack / T.scale**d > c18 + 1.0:
                high += 1
            worst_low = min(worst_low, sigma)
            worst_high = max(worst_high, sigma)
    return {
        "checked": checked,
        "below_c17": low,
        "above_c18_plus_1": high,
        "min_ratio": worst_low if checked else None,
        "max_ratio": worst_high,
        "c17": c17,
        "c18": c18,
    }


def build_augmented(
    domain: Domain,
    family: CubeFamily,
    params: CoronaParams,
    depth: int,
    budget: int,
    seed: int,
    shell: Optional[float] = None,
    cap_count: int = 2,
    workers: int = 1,
    progress: bool = False,
) -> Tuple[AugmentedDomain, SigmaMeasure]:
    """Run the augmented stopping recursion for ``depth`` generations.

    Generation 0 is the roots. Each cube S of generation n stops its
    maximal descendants S1 with omega(p_S, lam S1, Omega_n) >= A (l1/l)**d
    (lam = 1 + c3/2) or omega(p_S, S1, Omega_n) <= delta (l1/l)**d, on
    walks that are absorbed by all caps placed so far. Stopped cubes get
    calibrated caps and form generation n + 1; Omega_{n+1} adds their caps.
    The cubes of the last generation keep all of their harmonic measure.

    Returns:
        (AugmentedDomain, SigmaMeasure)

    Raises:
        ParameterError: depth outside 1..3
        PreconditionError: family without certified corkscrew balls
        GeometryError: caps of distinct cubes intersect
        CalibrationError: cap calibration fails
        IndeterminacyError: stopping undecidable at the budget cap
    """
    if not 1 <= depth <= MAX_DEPTH:
        raise ParameterError(f"depth must lie in 1..{MAX_DEPTH}", depth=depth)
    if family.c3 is None:
        raise PreconditionError("family has no certified corkscrew balls")
    d = domain.params.d
    c3 = family.c3
    lam = 1.0 + 0.5 * c3
    c18_start = 1.5 * math.pi * c3
    family.ledger.record("lambda-dilate", lam, "fixed", ["c3"])

    omega = domain
    current = [c for c in family.roots() if c.corkscrew is not None]
    root_of = {c.id: c.id for c in current}
    sums = {c.id: [] for c in current}
    pieces: List[HarmonicPiece] = []
    capsets: List[CapSet] = []
    calibrations: List[CapCalibration] = []
    tops: List[Tuple[Cube, HarmonicPiece, List[Cube]]] = []
    logger.info(f"Augmenting over {len(current)} roots to depth {depth}")

    for n in range(depth + 1):
        closing = n == depth
        next_gen: List[Cube] = []
        new_caps: List[CapSet] = []
        for S in tqdm(current, disable=not progress, desc=f"generation {n}"):
            if S.corkscrew is None:
                raise PreconditionError("stopped cube has no corkscrew ball", cube=S.id)
            width = min(default_shell(omega), 0.1 * S.corkscrew.radius) if shell is None else shell
            key = f"tilde-{n}-{S.level}-{S.index}"

            def make_hits(m: int) -> StencilHits:
                return StencilHits(family, [S.corkscrew.center], m, seed, width, workers, key, omega)

            if closing or S.level >= family.jmax:
                hits = make_hits(budget)
                stopped: List[Cube] = []
            else:
                scan, hits, _ = scan_with_budget(family, S, params, budget, make_hits, reach=lam - 1.0)
                stopped = [c for c, _ in scan["stopped"]]
            mask = family.member_mask(S)
            for s1 in stopped:
                mask &= ~family.member_mask(s1)
            counts = np.bincount(hits.hit_samples[0], minlength=len(family.samples))
            idx = np.nonzero(mask & (counts > 0))[0]
            weights = S.scale**d * counts[idx] / hits.samples
            piece = HarmonicPiece(n + 1, S.id, idx, weights, hits.samples)
            pieces.append(piece)
            tops.append((S, piece, stopped))
            for s1 in stopped:
                calib = calibrate_caps(s1, family, omega, c18_start, cap_count, budget, seed, shell, workers)
                calib.capset.generation = n + 1
                if calib.cover_upper < 1.0 - params.eps:
                    logger.warning(f"Cube {s1.id}: S with its caps carries {calib.cover:.3f} from p_S")
                calibrations.append(calib)
                new_caps.append(calib.capset)
                root_of[s1.id] = root_of[S.id]
                next_gen.append(s1)
        if closing:
            break
        collisions = cap_collisions(capsets + new_caps)
        if collisions:
            logger.error(f"{len(collisions)} cap pairs intersect at generation {n + 1}")
            pairs = [[list(a), list(b)] for a, b in collisions[:20]]
            raise GeometryError("caps of distinct cubes intersect", pairs=pairs)
        for root in sums:
            total = sum((c.scale / family.cube(*root).scale) ** d for c in next_gen if root_of[c.id] == root)
            sums[root].append((sums[root][-1] if sums[root] else 0.0) + total)
        if new_caps:
            arcs = [a for cs in new_caps for a in cs.arcs()]
            specs = [
                {"center": list(a.center), "radius": a.radius, "theta0": a.theta0, "theta1": a.theta1, "label": a.label}
                for a in arcs
            ]
            omega = omega.with_pieces(arcs, extra={"caps": specs})
        capsets.extend(new_caps)
        logger.info(f"Generation {n + 1}: {len(next_gen)} stopped cubes, {len(new_caps)} cap sets")
        current = next_gen
        if not current:
            break

    cap_labels = frozenset(a.label for cs in capsets for a in cs.arcs())
    continuous = BoundaryRegion(omega, cap_labels) if cap_labels else None
    sigma = SigmaMeasure(family.samples.points, pieces, continuous, family.samples.spacing, depth, d)

    in_gate = [CAP_GATE[0] <= c.gate.value <= CAP_GATE[1] for c in calibrations]
    c18_max = max([c.capset.c18 for c in calibrations], default=c18_start)
    c17 = 0.5 * params.delta
    C3 = max((s[-1] for s in sums.values() if s), default=0.0)
    family.ledger.record("c17", c17, "fixed", ["delta"] if "delta" in family.ledger else [])
    if calibrations:
        family.ledger.record("c18", c18_max, "calibrated", ["c3"], "largest per-cube value")
    family.ledger.record("C3", C3, "measured", note="largest augmented partial sum")
    audits = {
        "containment": containment_audit(domain, omega, capsets),
        "gate_fraction": float(np.mean(in_gate)) if in_gate else 1.0,
        "cover_failures": [list(c.capset.host) for c in calibrations if c.cover_upper < 1.0 - params.eps],
        "mass_identity": math.isclose(float(sigma.to_frame()["mass"].sum()), sigma.total_mass, rel_tol=1e-12),
        "mu_mass": sigma.mu_mass,
        "nu_mass": sigma.nu_mass,
        "partial_sums": {f"{k[0]}-{k[1]}": v for k, v in sums.items()},
        "C3": C3,
        "sigma_bounds": _sigma_bounds(family, tops, {c.host: c for c in capsets}, c17, c18_max),
    }
    augmented = AugmentedDomain(domain, omega, capsets, depth, calibrations, audits)
    logger.info(f"Augmented domain: {len(capsets)} cap sets, mu={sigma.mu_mass:.4g} nu={sigma.nu_mass:.4g}")
    return augmented, sigma


# ============================================================================
# Density audits
# ============================================================================


@dataclass
class AhlforsReport:
    min_ratio: float
    max_ratio: float
    constant: float
    trials: int
    table: pd.DataFrame

    def to_dict(self) -> Dict[str, Any]:
        return {
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "constant": self.constant,
            "trials": self.trials,
        }


def dyadic_radii(sigma: SigmaMeasure, centers: np.ndarray) -> List[float]:
    """Dyadic radii from four sample spacings up to a quarter of the support diameter."""
    extent = float(np.max(np.ptp(centers, axis=0))) if len(centers) > 1 else sigma.resolution
    top = math.floor(math.log2(max(extent / 4.0, 4.0 * sigma.resolution)))
    bottom = math.ceil(math.log2(4.0 * sigma.resolution))
    return [2.0**k for k in range(top, bottom - 1, -1)]


def ahlfors_audit(
    sigma: SigmaMeasure,
    trials: int,
    seed: int,
    radii: Optional[Sequence[float]] = None,
    within: Optional[Ball] = None,
) -> AhlforsReport:
    """Sample sigma(B(x, r)) / r**d over x on the support and dyadic r.

    The two-sided constant is max(max ratio, 1 / min ratio).
    """
    if trials < 1:
        raise ParameterError("trials must be at least 1", trials=trials)
    centers = sigma.support_points()
    if within is not None:
        centers = centers[within.contains(centers)]
    if len(centers) == 0:
        raise PreconditionError("sigma has no support in the sampled region")
    radii = list(radii) if radii is not None else dyadic_radii(sigma, centers)
    rng = stream(seed, "ahlfors")
    picks = rng.integers(0, len(centers), size=trials)
    scales = rng.integers(0, len(radii), size=trials)
    rows = []
    for i, k in zip(picks, scales):
        x = centers[i]
        r = radii[k]
        ratio = sigma.mass(Ball((x[0], x[1]), r)) / r**sigma.d
        rows.append({"x": float(x[0]), "y": float(x[1]), "r": r, "ratio": ratio})
    table = pd.DataFrame(rows, columns=["x", "y", "r", "ratio"])
    lo = float(table["ratio"].min())
    hi = float(table["ratio"].max())
    constant = max(hi, 1.0 / lo) if lo > 0 else math.inf
    logger.info(f"Ahlfors audit over {trials} balls: ratios in [{lo:.4g}, {hi:.4g}]")
    return AhlforsReport(lo, hi, constant, trials, table)


def upper_density_audit(
    domain: Domain,
    trials: int,
    seed: int,
    radii: Optional[Sequence[float]] = None,
    within: Optional[Ball] = None,
) -> AhlforsReport:
    """Arclength of the base boundary in B(x, r) over r**d."""
    return ahlfors_audit(SigmaMeasure.from_arclength(domain), trials, seed, radii, within)


# ============================================================================
# Central discs on small Cantor sets
# ============================================================================


def cantor_disc_augmentation(
    spec: CantorSpec,
    c: Optional[float] = None,
    window_radius: Optional[float] = None,
    budget: int = 20000,
    seed: int = 0,
    shell: Optional[float] = None,
) -> AugmentedDomain:
    """Cantor domain minus a disc of radius c lam**k at the center of every level-k square.

    Reports the containment audit and the harmonic measure of K from one
    point outside K_0 on both domains with the same paths budget.
    """
    if not spec.lam < 0.25:
        raise ParameterError("central discs need lam < 1/4", lam=spec.lam)
    c = 0.5 * (0.5 - spec.lam) if c is None else c
    base = make_cantor(spec, window_radius)
    discs = cantor_center_discs(spec, c)
    arcs = [Arc(disc.center, disc.radius, 0.0, TWO_PI, f"disc-{k}", CAP) for k, disc in enumerate(discs)]
    specs = [{"center": list(disc.center), "radius": disc.radius} for disc in discs]
    augmented = base.with_pieces(arcs, discs, {"discs": specs})
    start = (0.5, 1.25)
    width = default_shell(base) if shell is None else shell
    region = BoundaryRegion.all(base, include_window=False)
    before = simulate_walks(base, start, budget, width, seed, "disc-compare").estimate(region)
    walks = simulate_walks(augmented, start, budget, width, seed, "disc-compare")
    after = walks.estimate(BoundaryRegion(augmented, region.piece_ids))
    on_discs = walks.estimate(BoundaryRegion.from_prefix(augmented, "disc-"))
    audits = {
        "containment": containment_audit(base, augmented),
        "c": c,
        "discs": len(discs),
        "start": list(start),
        "omega_K_base": before.to_dict(),
        "omega_K_augmented": after.to_dict(),
        "omega_discs": on_discs.to_dict(),
    }
    logger.info(f"Central discs: omega(K) {before.value:.4f} on Omega, {after.value:.4f} on the augmented domain")
    return AugmentedDomain(base, augmented, [], 0, [], audits)


# ============================================================================
# Corona statistics on the augmented domain
# ============================================================================


def corona_comparison(
    base_family: CubeFamily,
    augmented: AugmentedDomain,
    params: CoronaParams,
    kmax: int,
    budget: int,
    seed: int,
    corkscrew_samples: int = 2000,
    workers: int = 1,
) -> pd.DataFrame:
    """HD/LD counts and packing partial sums per root on Omega and on Omega~."""
    aug_family = build_cubes(
        augmented.domain,
        base_family.N,
        base_family.eta,
        base_family.jmax,
        base_family.depth,
        spacing=base_family.samples.spacing,
    )
    rows = []
    for label, family in (("base", base_family), ("augmented", aug_family)):
        if family.c3 is None:
            attach_corkscrew_balls(family, params.eps, corkscrew_samples, seed, workers=workers)
        for root in family.roots():
            tree = generations(root, family, params, kmax, budget, seed, workers=workers)
            for k, (gen, total) in enumerate(zip(tree.generations, tree.partial_sums), start=1):
                rows.append(
                    {
                        "domain": label,
                        "root": root.index,
                        "generation": k,
                        "hd": sum(1 for _, s in gen if s.kind == HD),
                        "ld": sum(1 for _, s in gen if s.kind == LD),
                        "partial_sum": total,
                        "C1": tree.C1,
                        "c5": tree.c5,
                    }
                )
    return pd.DataFrame(rows, columns=["domain", "root", "generation", "hd", "ld", "partial_sum", "C1", "c5"])
