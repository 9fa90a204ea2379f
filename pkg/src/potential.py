"""
Potential Theory Module

Harmonic measure by walk-on-spheres, logarithmic equilibrium measures and
capacity, Riesz potentials, the Case I/II boundary test functions and the
half-plane Poisson oracle.

Walks run in fixed blocks of BLOCK_SIZE paths. Each block draws from its own
counter-based stream keyed by (seed, stream key, block index), so an
estimate depends only on its inputs and never on the worker count. Every
walker draws one angle per step, active or not, which keeps walks started
from nearby points on common random numbers.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from tqdm import tqdm

from src.errors import (
    CertificationError,
    GeometryError,
    ParameterError,
    PreconditionError,
    SingularityError,
    SolverError,
)
from src.geometry import TWO_PI, WINDOW, Ball, BoundaryRegion, Domain
from src.rng import stream

if TYPE_CHECKING:  # pragma: no cover
    from src.cubes import Cube, CubeFamily

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096
MAX_STEPS = 1_000_000
# exits through the sphere of a ball-restricted walk
SPHERE = -2
Z_SCORE = 3.0
FALLBACK_WARN_FRACTION = 1e-3


def default_shell(domain: Domain) -> float:
    """Termination shell width, 1e-4 of the window radius."""
    return 1e-4 * domain.window.radius


# ============================================================================
# Estimates
# ============================================================================


def wilson_interval(value: float, samples: int, z: float = Z_SCORE) -> Tuple[float, float]:
    """Wilson score interval for a Bernoulli proportion."""
    if samples <= 0:
        return 0.0, 1.0
    z2n = z * z / samples
    center = (value + z2n / 2.0) / (1.0 + z2n)
    half = z / (1.0 + z2n) * math.sqrt(value * (1.0 - value) / samples + z2n / (4.0 * samples))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class MeasureEstimate:
    """Monte Carlo harmonic measure with its Bernoulli standard error."""

    value: float
    stderr: float
    samples: int
    shell: float
    seed: int

    @classmethod
    def from_hits(cls, hits: np.ndarray, shell: float, seed: int) -> "MeasureEstimate":
        n = int(len(hits))
        value = float(np.count_nonzero(hits)) / n if n else 0.0
        stderr = math.sqrt(value * (1.0 - value) / n) if n else 0.0
        return cls(value, stderr, n, shell, seed)

    @property
    def lower(self) -> float:
        return wilson_interval(self.value, self.samples)[0]

    @property
    def upper(self) -> float:
        return wilson_interval(self.value, self.samples)[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "samples": self.samples,
            "shell": self.shell,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class FunctionalEstimate:
    """Sample mean of a bounded per-path score."""

    value: float
    stderr: float
    samples: int

    @classmethod
    def from_scores(cls, scores: np.ndarray) -> "FunctionalEstimate":
        n = int(len(scores))
        if n == 0:
            return cls(0.0, 0.0, 0)
        std = float(np.std(scores, ddof=1)) if n > 1 else 0.0
        return cls(float(np.mean(scores)), std / math.sqrt(n), n)

    @property
    def lower(self) -> float:
        return self.value - Z_SCORE * self.stderr

    @property
    def upper(self) -> float:
        return self.value + Z_SCORE * self.stderr


# ============================================================================
# Walk-on-spheres
# ============================================================================


@dataclass
class WalkResult:
    """Terminal record of a path set: nearest piece and foot point per path.

    Any number of boundary regions can be scored against the same paths,
    which makes estimates over disjoint regions exactly additive.
    """

    domain: Domain
    start: Tuple[float, float]
    piece: np.ndarray
    foot: np.ndarray
    fallback: int
    shell: float
    seed: int
    mean_steps: float
    _sample_cache: Dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def samples(self) -> int:
        return int(len(self.piece))

    def hits(self, region: BoundaryRegion) -> np.ndarray:
        return region.contains_hits(self.piece, self.foot)

    def estimate(self, region: BoundaryRegion) -> MeasureEstimate:
        return MeasureEstimate.from_hits(self.hits(region), self.shell, self.seed)

    def sphere_estimate(self) -> MeasureEstimate:
        return MeasureEstimate.from_hits(self.piece == SPHERE, self.shell, self.seed)

    def on_boundary(self) -> np.ndarray:
        """Paths ending on a non-window piece of the domain."""
        valid = self.piece >= 0
        roles = self.domain.roles
        return valid & (roles[np.where(valid, self.piece, 0)] != WINDOW)

    def nearest_sample(self, tree: Any) -> np.ndarray:
        """Index of the nearest boundary sample for every path (cached per tree)."""
        key = id(tree)
        if key not in self._sample_cache:
            self._sample_cache[key] = tree.query(self.foot)[1].astype(np.int64)
        return self._sample_cache[key]

    def score(self, values: np.ndarray) -> FunctionalEstimate:
        return FunctionalEstimate.from_scores(np.asarray(values, dtype=float))


def _walk_block(
    domain: Domain,
    start: np.ndarray,
    count: int,
    shell: float,
    rng: np.random.Generator,
    ball: Optional[Ball],
    max_steps: int,
) -> Tuple[np.ndarray, np.ndarray, int, int]:
    pos = np.repeat(start[None, :], count, axis=0)
    piece = np.full(count, -1, dtype=np.int64)
    foot = np.zeros((count, 2))
    active = np.arange(count)
    total_steps = 0
    if ball is not None:
        bc = np.asarray(ball.center)
    for _ in range(max_steps):
        if len(active) == 0:
            break
        angles = rng.uniform(0.0, TWO_PI, size=count)
        d, idx, f = domain.nearest(pos[active])
        eff = d
        if ball is not None:
            off = pos[active] - bc
            rr = np.sqrt(off[:, 0] ** 2 + off[:, 1] ** 2)
            to_sphere = ball.radius - rr < d
            eff = np.where(to_sphere, ball.radius - rr, d)
        done = eff < shell
        if done.any():
            ended = active[done]
            piece[ended] = idx[done]
            foot[ended] = f[done]
            if ball is not None and to_sphere[done].any():
                sph = to_sphere[done]
                o = off[done][sph]
                norm = np.maximum(rr[done][sph], 1e-300)
                piece[ended[sph]] = SPHERE
                foot[ended[sph]] = bc + ball.radius * o / norm[:, None]
        moving = ~done
        active = active[moving]
        step = eff[moving]
        theta = angles[active]
        pos[active, 0] += step * np.cos(theta)
        pos[active, 1] += step * np.sin(theta)
        total_steps += len(active)
    fallback = len(active)
    if fallback:
        windows = domain.piece_indices(role=WINDOW)
        if len(windows):
            w = domain.window
            off = pos[active] - np.asarray(w.center)
            norm = np.maximum(np.linalg.norm(off, axis=1), 1e-300)
            piece[active] = windows[0]
            foot[active] = np.asarray(w.center) + w.radius * off / norm[:, None]
        else:
            _, idx, f = domain.nearest(pos[active])
            piece[active] = idx
            foot[active] = f
    return piece, foot, fallback, total_steps


def simulate_walks(
    domain: Domain,
    p: Sequence[float],
    samples: int,
    shell: float,
    seed: int,
    stream_key: str = "wos",
    ball: Optional[Ball] = None,
    max_steps: int = MAX_STEPS,
    workers: int = 1,
    progress: bool = False,
) -> WalkResult:
    """Run ``samples`` walk-on-spheres paths from ``p``.

    Args:
        domain: The domain
        p: Start point in the domain
        samples: Number of paths
        shell: Termination shell width
        seed: Master seed
        stream_key: Purpose label of the random streams
        ball: Optional restricting ball; exits through its sphere end with
            piece index SPHERE
        max_steps: Step cap before the fallback attribution
        workers: Thread count over blocks

    Returns:
        WalkResult with one terminal record per path

    Raises:
        PreconditionError: p outside the domain (or the ball), shell not
            positive or wider than the distance from p to the boundary
    """
    start = np.asarray(p, dtype=float)
    if samples < 1:
        raise ParameterError("samples must be at least 1", samples=samples)
    if not shell > 0:
        raise PreconditionError("shell must be positive", shell=shell)
    if not domain.contains(start[None, :])[0]:
        raise PreconditionError("start point is not in the domain", p=start.tolist())
    dist = domain.distance(start[None, :])[0]
    if ball is not None:
        margin = ball.radius - float(np.hypot(*(start - np.asarray(ball.center))))
        if margin <= 0:
            raise PreconditionError("start point is not inside the ball", p=start.tolist())
        dist = min(dist, margin)
    if shell > dist:
        raise PreconditionError("shell exceeds the distance to the boundary", shell=shell, dist=float(dist))

    blocks = [(b, min(BLOCK_SIZE, samples - b * BLOCK_SIZE)) for b in range((samples + BLOCK_SIZE - 1) // BLOCK_SIZE)]

    def run(block: Tuple[int, int]):
        b, count = block
        return _walk_block(domain, start, count, shell, stream(seed, stream_key, b), ball, max_steps)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(tqdm(pool.map(run, blocks), total=len(blocks), disable=not progress, desc="walks"))
    else:
        parts = [run(b) for b in tqdm(blocks, disable=not progress, desc="walks")]

    piece = np.concatenate([r[0] for r in parts])
    foot = np.concatenate([r[1] for r in parts])
    fallback = int(sum(r[2] for r in parts))
    steps = float(sum(r[3] for r in parts)) / samples
    if fallback > FALLBACK_WARN_FRACTION * samples:
        logger.warning(f"Walk fallback on {fallback}/{samples} paths from {start.tolist()}")
    return WalkResult(domain, (float(start[0]), float(start[1])), piece, foot, fallback, shell, seed, steps)


def wos_measure(
    domain: Domain,
    p: Sequence[float],
    region: BoundaryRegion,
    shell: float,
    samples: int,
    seed: int,
    **kwargs: Any,
) -> MeasureEstimate:
    """Harmonic measure omega(p, region, Omega) by walk-on-spheres.

    Example:
        >>> disc = make_disc(1.0, 4)
        >>> est = wos_measure(disc, (0, 0), BoundaryRegion(disc, {"arc-0"}), 1e-4, 10_000, 7)
        >>> abs(est.value - 0.25) < 3 * est.stderr + 1e-3
        True
    """
    return simulate_walks(domain, p, samples, shell, seed, **kwargs).estimate(region)


def wos_measure_in_ball(
    domain: Domain,
    cap_ball: Ball,
    p: Sequence[float],
    region: BoundaryRegion,
    shell: float,
    samples: int,
    seed: int,
    **kwargs: Any,
) -> MeasureEstimate:
    """omega(p, region, Omega intersected with cap_ball); sphere exits never count."""
    return simulate_walks(domain, p, samples, shell, seed, ball=cap_ball, **kwargs).estimate(region)


# ============================================================================
# Capacity-density witnesses
# ============================================================================


def escape_trend(
    domain: Domain,
    x: Sequence[float],
    r: float,
    doublings: int,
    samples: int,
    seed: int,
    shell: Optional[float] = None,
) -> List[MeasureEstimate]:
    """Largest sphere-exit probability from B(x, r) in B(x, 2**k r), k = 1..doublings.

    Starting points are the stencil of B(x, r) that lie in the domain.
    Under the capacity density condition the sequence decays geometrically.
    """
    shell = default_shell(domain) if shell is None else shell
    pts = Ball(tuple(x), r).stencil(0.5)
    inside = domain.contains(pts)
    inside[inside] &= domain.distance(pts[inside]) > shell
    if not inside.any():
        raise PreconditionError("no stencil point of B(x, r) lies in the domain", x=list(x), r=r)
    out = []
    for k in range(1, doublings + 1):
        outer = Ball(tuple(x), r * 2.0**k)
        best = None
        for i, p in enumerate(pts[inside]):
            est = simulate_walks(domain, p, samples, shell, seed, f"escape-{k}-{i}", ball=outer).sphere_estimate()
            if best is None or est.value > best.value:
                best = est
        out.append(best)
    return out


def escape_probability(
    domain: Domain, x: Sequence[float], r: float, samples: int, seed: int, shell: Optional[float] = None
) -> MeasureEstimate:
    """Measured eta: sup over B(x, r) of the exit probability through the sphere of B(x, 2r)."""
    return escape_trend(domain, x, r, 1, samples, seed, shell)[0]


# ============================================================================
# Equilibrium measures
# ============================================================================


@dataclass
class EquilibriumData:
    nodes: np.ndarray
    weights: np.ndarray
    robin: float
    residual: float

    @property
    def capacity(self) -> float:
        return math.exp(-self.robin)

    def potential(self, points: np.ndarray) -> np.ndarray:
        """Logarithmic potential sum_j w_j log(1/|x - y_j|) at points off the nodes."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(pts))
        chunk = max(1, 2_000_000 // max(len(self.nodes), 1))
        for start in range(0, len(pts), chunk):
            d = np.linalg.norm(pts[start : start + chunk, None, :] - self.nodes[None, :, :], axis=2)
            out[start : start + chunk] = -(np.log(np.maximum(d, 1e-300)) @ self.weights)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nodes": int(len(self.nodes)),
            "robin": self.robin,
            "capacity": self.capacity,
            "residual": self.residual,
            "min_weight": float(self.weights.min()) if len(self.weights) else 0.0,
        }


def equilibrium_measure(region: BoundaryRegion, nodes: int) -> EquilibriumData:
    """Discrete equilibrium measure of a planar compact boundary region.

    Midpoint collocation: the discrete log potential is constant on the
    nodes and the weights sum to one. The self-interaction of a node uses
    -log(h/2) with h its element length.

    Args:
        region: Nonempty boundary region
        nodes: Approximate number of collocation nodes (at least 8)

    Returns:
        EquilibriumData with weights, Robin constant and residual

    Raises:
        SolverError: Too few nodes or a singular system
    """
    if nodes < 8:
        raise SolverError("equilibrium solve needs at least 8 nodes", nodes=nodes)
    length = region.length()
    if length <= 0:
        raise SolverError("region has no length", length=length)
    pts, _, h = region.sample(length / nodes)
    return solve_equilibrium(pts, h)


def solve_equilibrium(pts: np.ndarray, h: np.ndarray) -> EquilibriumData:
    """Equilibrium weights on given collocation nodes with element lengths ``h``.

    Raises:
        SolverError: Fewer than 8 nodes, a singular system or a non-constant potential
    """
    if len(pts) < 8 or np.any(h <= 0):
        raise SolverError("degenerate discretization", nodes=len(pts))
    n = len(pts)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, 1.0)
    if np.any(dist <= 0):
        raise SolverError("coincident nodes", nodes=n)
    kernel = -np.log(dist)
    np.fill_diagonal(kernel, -np.log(h / 2.0))
    system = np.zeros((n + 1, n + 1))
    system[:n, :n] = kernel
    system[:n, n] = -1.0
    system[n, :n] = 1.0
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    try:
        sol = scipy.linalg.solve(system, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        logger.error(f"Equilibrium system singular at {n} nodes")
        raise SolverError("singular equilibrium system", nodes=n) from exc
    weights, robin = sol[:n], float(sol[n])
    potential = kernel @ weights
    residual = float(potential.max() - potential.min())
    if not np.isfinite(residual) or residual > 1e-8 * max(abs(robin), 1.0):
        raise SolverError("equilibrium potential not constant", residual=residual, robin=robin)
    if weights.min() < 0:
        logger.warning(f"Equilibrium weights go negative (min {weights.min():.3g})")
    logger.debug(f"Equilibrium: n={n} robin={robin:.6g} capacity={math.exp(-robin):.6g}")
    return EquilibriumData(pts, weights, robin, residual)


# ============================================================================
# Riesz potentials and Case I formulas
# ============================================================================


def riesz_potential(
    nodes: Sequence[Tuple[Sequence[float], float]], p: Sequence[float], d: int
) -> Tuple[float, np.ndarray]:
    """Value sum w |p - y|**(1 - d) and its gradient (1 - d) sum w |p - y|**(-d - 1) (p - y).

    Raises:
        PreconditionError: d < 2
        SingularityError: p coincides with a node
    """
    if d < 2:
        raise PreconditionError("Riesz potentials need d >= 2", d=d)
    p = np.asarray(p, dtype=float)
    ys = np.array([np.asarray(y, dtype=float) for y, _ in nodes])
    ws = np.array([w for _, w in nodes], dtype=float)
    diff = p[None, :] - ys
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist == 0.0):
        raise SingularityError("point coincides with a node", p=p.tolist())
    value = float(np.sum(ws * dist ** (1 - d)))
    grad = (1 - d) * np.sum((ws * dist ** (-d - 1))[:, None] * diff, axis=0)
    return value, grad


def case_one_constants(d: int, alpha: float, beta: float, c1: float) -> Tuple[float, float]:
    """Lower bounds (c9', c10') of the Riesz test function in dimension d + 1 >= 3."""
    if d < 2:
        raise PreconditionError("Case I constants need d >= 2", d=d)
    c9 = beta * 7.0 ** (1 - d)
    c10 = (d - 1) / (2.0 * c1 ** (d - 2)) * (beta / alpha) * (alpha / (4.0 + alpha)) ** d
    return c9, c10


def lemma_ball_constants(alpha: float, eta: float, eps: float) -> Tuple[int, float, float, float]:
    """(N, C1, c1, c2) with N the least integer such that eta**N < eps."""
    if not (0.0 < eta < 1.0 and 0.0 < eps < 1.0):
        raise ParameterError("eta and eps must lie in (0, 1)", eta=eta, eps=eps)
    n = 1
    while eta**n >= eps:
        n += 1
    big_c1 = 1.0 + 2.0**n
    return n, big_c1, alpha / (4.0 * (1.0 + big_c1)), 1.0 / (1.0 + big_c1)


@dataclass
class RieszTestFunction:
    """Case I test function: the Riesz potential of a node measure on the boundary."""

    nodes: List[Tuple[Tuple[float, float], float]]
    d: int
    c9: float
    c10: float

    def __call__(self, p: Sequence[float]) -> Tuple[float, np.ndarray]:
        return riesz_potential(self.nodes, p, self.d)


def riesz_test_function(
    points: np.ndarray, weights: np.ndarray, d: int, alpha: float, beta: float, c1: float
) -> RieszTestFunction:
    total = float(np.sum(weights))
    if total <= 0:
        raise ParameterError("node weights must have positive mass")
    c9, c10 = case_one_constants(d, alpha, beta, c1)
    nodes = [((float(x), float(y)), float(w) / total) for (x, y), w in zip(points, weights)]
    return RieszTestFunction(nodes, d, c9, c10)


# ============================================================================
# Case II test functions
# ============================================================================


@dataclass
class TestFunction:
    """Boundary density f_S on E_S and the harmonic extension u_S by walks.

    ``density`` maps foot points to [0, 1]; ``support`` marks the boundary
    samples of E_S. u_S(p) is the mean of f_S over walk terminations.
    """

    __test__ = False

    kind: str
    cube_id: Tuple[int, int]
    ball: Ball
    direction: np.ndarray
    plus: EquilibriumData
    minus: Optional[EquilibriumData]
    scale: float
    support: np.ndarray
    family: "CubeFamily"
    shell: float
    c9: float = 0.0
    c10: float = 0.0

    def density(self, feet: np.ndarray) -> np.ndarray:
        """f_S = (L + U+ - U-) / (2L), clamped to [0, 1]."""
        feet = np.atleast_2d(feet)
        diff = self.plus.potential(feet)
        if self.minus is not None:
            diff = diff - self.minus.potential(feet)
        return np.clip((self.scale + diff) / (2.0 * self.scale), 0.0, 1.0)

    def path_scores(self, walks: WalkResult) -> np.ndarray:
        idx = walks.nearest_sample(self.family.samples.tree)
        inside = walks.on_boundary() & self.support[idx]
        scores = np.zeros(walks.samples)
        if inside.any():
            scores[inside] = self.density(walks.foot[inside])
        return scores

    def evaluate(self, p: Sequence[float], samples: int, seed: int, stream_key: str = "u") -> FunctionalEstimate:
        walks = simulate_walks(self.family.domain, p, samples, self.shell, seed, stream_key)
        return walks.score(self.path_scores(walks))

    def directional_derivative(
        self, p: Sequence[float], direction: np.ndarray, step: float, samples: int, seed: int
    ) -> FunctionalEstimate:
        """Central difference along ``direction`` on common random numbers."""
        p = np.asarray(p, dtype=float)
        fwd = simulate_walks(self.family.domain, p + step * direction, samples, self.shell, seed, "du")
        bwd = simulate_walks(self.family.domain, p - step * direction, samples, self.shell, seed, "du")
        return FunctionalEstimate.from_scores((self.path_scores(fwd) - self.path_scores(bwd)) / (2.0 * step))


def build_test_function(
    domain: Domain,
    family: "CubeFamily",
    S: "Cube",
    eps: float,
    samples: int,
    seed: int,
    nodes: int = 256,
    shell: Optional[float] = None,
) -> TestFunction:
    """Planar Case II test function for cube S with certified lower bounds.

    F+ is the part of S near p_S (within twice its distance to the boundary);
    F- is the part of S around the member farthest from p_S. The equilibrium
    potentials of both give f_S on E_S = S, and u_S is estimated by walks.
    c9 is the smallest lower confidence bound of u_S over the stencil of
    B_S; c10 is the lower confidence bound of the derivative of u_S along
    the direction to the nearest boundary point, times the radius of B_S.

    Raises:
        GeometryError: S has no corkscrew ball or no boundary near it
        CertificationError: measured c9 is not positive
    """
    if S.corkscrew is None:
        raise GeometryError("cube has no corkscrew ball", cube=S.id)
    if not 0 < eps < 0.5:
        raise ParameterError("eps must lie in (0, 1/2)", eps=eps)
    shell = default_shell(domain) if shell is None else shell
    ball = S.corkscrew
    center = np.asarray(ball.center)
    dist, _, foot = domain.nearest(center[None, :], include_window=False)
    rho = float(dist[0])
    plus = member_equilibrium(family, S, Ball(ball.center, 2.0 * rho), nodes)
    if plus is None:
        raise GeometryError("S carries no boundary near its corkscrew ball", cube=S.id, rho=rho)

    member_pts = family.samples.points[S.members]
    far = member_pts[int(np.argmax(np.linalg.norm(member_pts - center, axis=1)))]
    gap = float(np.linalg.norm(far - center))
    minus = None
    if gap >= 3.0 * rho:
        minus = member_equilibrium(family, S, Ball((far[0], far[1]), min(rho, gap / 6.0)), nodes)
    diff = plus.potential(member_pts)
    if minus is not None:
        diff = diff - minus.potential(member_pts)
    scale = max(float(np.max(np.abs(diff))), 1e-12)

    direction = foot[0] - center
    direction = direction / max(np.linalg.norm(direction), 1e-300)
    support = np.zeros(len(family.samples.points), dtype=bool)
    support[S.members] = True
    tf = TestFunction(
        kind="log-caseII",
        cube_id=S.id,
        ball=ball,
        direction=direction,
        plus=plus,
        minus=minus,
        scale=scale,
        support=support,
        family=family,
        shell=shell,
    )
    lows = [tf.evaluate(q, samples, seed, f"u-{k}").lower for k, q in enumerate(ball.stencil(0.5))]
    tf.c9 = float(min(lows))
    grad = tf.directional_derivative(center, direction, ball.radius / 4.0, samples, seed)
    tf.c10 = float((abs(grad.value) - Z_SCORE * grad.stderr) * ball.radius)
    logger.info(f"Test function for cube {S.id}: c9={tf.c9:.4g} c10={tf.c10:.4g}")
    if tf.c9 <= 0:
        logger.error(f"Test function certification failed for cube {S.id}")
        raise CertificationError("u_S is not certified positive on B_S", cube=S.id, c9=tf.c9, lows=lows)
    if tf.c10 <= 0:
        logger.warning(f"Directional derivative of u_S not certified for cube {S.id}")
    return tf


def _boundary_labels(domain: Domain) -> frozenset:
    return frozenset(domain.labels[i] for i in domain.piece_indices(exclude_window=True))


def member_equilibrium(family: "CubeFamily", S: "Cube", clip: Ball, nodes: int) -> Optional[EquilibriumData]:
    """Equilibrium measure of the part of S inside ``clip``; None below 8 nodes.

    The boundary inside ``clip`` is discretized and an element is kept when
    its nearest boundary sample is a member of S.
    """
    domain = family.domain
    region = BoundaryRegion(domain, _boundary_labels(domain), clip)
    length = region.length()
    if length <= 0:
        return None
    members = family.samples.points[S.members]
    inside = clip.contains(members)
    member_length = float(family.samples.weights[S.members][inside].sum())
    spacing = max(min(length, max(member_length, family.samples.spacing)), length / 16.0) / nodes
    pts, _, h = region.sample(spacing)
    _, idx = family.samples.tree.query(pts)
    keep = family.member_mask(S)[idx]
    if np.count_nonzero(keep) < 8:
        return None
    return solve_equilibrium(pts[keep], h[keep])


# ============================================================================
# Analytic oracle
# ============================================================================


def poisson_halfplane(p: Sequence[float], a: float, b: float) -> float:
    """Harmonic measure of [a, b] x {0} at p in the upper half-plane.

    Example:
        >>> round(poisson_halfplane((0.0, 1.0), -1.0, 1.0), 12)
        0.5
    """
    x, y = float(p[0]), float(p[1])
    if y <= 0:
        raise PreconditionError("p must lie in the open upper half-plane", p=[x, y])
    if not a < b:
        raise PreconditionError("interval must satisfy a < b", a=a, b=b)
    return (math.atan2(b - x, y) - math.atan2(a - x, y)) / math.pi

