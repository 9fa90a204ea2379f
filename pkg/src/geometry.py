"""
Domain Geometry Module

Planar domains with labeled boundary pieces, dyadic lattices, the Cantor
family K_lambda with hierarchical distance queries, boundary regions and
corkscrew witnesses.

A Domain is immutable after construction. Boundary pieces are segments and
circular arcs; every piece carries a label and a role (boundary, window or
cap). The window is the truncating circle that guarantees walks terminate.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import jsonschema
import numpy as np
from scipy.spatial import cKDTree

from src.errors import (
    CorkscrewViolation,
    ParameterError,
    PreconditionError,
    ResolutionError,
)

logger = logging.getLogger(__name__)

BOUNDARY = "boundary"
WINDOW = "window"
CAP = "cap"
ROLES = (BOUNDARY, WINDOW, CAP)

SIDES = ("bottom", "right", "top", "left")
TWO_PI = 2.0 * math.pi

KINDS = ("cantor", "halfplane", "disc", "custom")

# pair budget for one brute-force distance chunk
_PAIR_CHUNK = 2_000_000
# Cantor levels above this produce more pieces than a desk run can hold
MAX_CANTOR_LEVEL = 10


# ============================================================================
# Elementary types
# ============================================================================


@dataclass(frozen=True)
class Ball:
    """Closed ball B(center, radius) in the plane."""

    center: Tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ParameterError("ball radius must be positive", radius=self.radius)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dx = pts[:, 0] - self.center[0]
        dy = pts[:, 1] - self.center[1]
        return np.sqrt(dx * dx + dy * dy) <= self.radius

    def scaled(self, factor: float) -> "Ball":
        """Concentric ball with radius multiplied by ``factor``."""
        return Ball(self.center, self.radius * factor)

    def stencil(self, fraction: float = 0.5) -> np.ndarray:
        """Center plus the four axis points at ``fraction`` of the radius."""
        cx, cy = self.center
        h = fraction * self.radius
        return np.array([[cx, cy], [cx + h, cy], [cx - h, cy], [cx, cy + h], [cx, cy - h]])

    def to_dict(self) -> Dict[str, Any]:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class DyadicCube:
    """Closed dyadic square of the scaled grid: side = scale * 2**-level."""

    level: int
    index: Tuple[int, int]
    scale: float = 1.0

    @property
    def side(self) -> float:
        return self.scale * 2.0 ** (-self.level)

    @property
    def corner(self) -> Tuple[float, float]:
        s = self.side
        return (self.index[0] * s, self.index[1] * s)

    @property
    def center(self) -> Tuple[float, float]:
        s = self.side
        return ((self.index[0] + 0.5) * s, (self.index[1] + 0.5) * s)

    def dilated_box(self, factor: float) -> Tuple[float, float, float, float]:
        """Concentric box of side ``factor * side`` as (xmin, ymin, xmax, ymax)."""
        cx, cy = self.center
        h = 0.5 * factor * self.side
        return (cx - h, cy - h, cx + h, cy + h)

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level - 1, (self.index[0] // 2, self.index[1] // 2), self.scale)

    def children(self) -> List["DyadicCube"]:
        i, j = self.index
        return [
            DyadicCube(self.level + 1, (2 * i + di, 2 * j + dj), self.scale)
            for dj in (0, 1)
            for di in (0, 1)
        ]

    def is_ancestor_of(self, other: "DyadicCube") -> bool:
        if other.level <= self.level:
            return False
        shift = other.level - self.level
        return (other.index[0] >> shift, other.index[1] >> shift) == self.index


@dataclass(frozen=True)
class CantorSpec:
    """Level-n approximation K_{lambda,n} of the four-corner Cantor set."""

    lam: float
    level: int

    def __post_init__(self) -> None:
        if not (0.0 < self.lam < 0.5):
            raise ParameterError("lambda must lie in (0, 1/2)", lam=self.lam)
        if self.level < 0:
            raise ParameterError("level must be non-negative", level=self.level)

    @property
    def side(self) -> float:
        return self.lam**self.level

    @property
    def dimension(self) -> float:
        """Similarity dimension log 4 / log(1/lambda) of the limit set."""
        return math.log(4.0) / math.log(1.0 / self.lam)


@dataclass(frozen=True)
class DomainParams:
    """Declared corkscrew constant alpha, capacity density beta and dimension d."""

    alpha: float
    beta: float
    d: int = 1

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ParameterError("alpha must lie in (0, 1]", alpha=self.alpha)
        if not self.beta > 0.0:
            raise ParameterError("beta must be positive", beta=self.beta)


@dataclass(frozen=True)
class Segment:
    a: Tuple[float, float]
    b: Tuple[float, float]
    label: str
    role: str = BOUNDARY

    @property
    def length(self) -> float:
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])


@dataclass(frozen=True)
class Arc:
    """Circular arc from angle theta0 to theta1 (counter-clockwise)."""

    center: Tuple[float, float]
    radius: float
    theta0: float
    theta1: float
    label: str
    role: str = BOUNDARY

    def __post_init__(self) -> None:
        span = self.theta1 - self.theta0
        if not (0.0 <= span <= TWO_PI + 1e-12):
            raise ParameterError("arc span must lie in [0, 2*pi]", span=span)

    @property
    def length(self) -> float:
        return self.radius * (self.theta1 - self.theta0)

    def point(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.stack(
            [self.center[0] + self.radius * np.cos(theta), self.center[1] + self.radius * np.sin(theta)],
            axis=-1,
        )


Piece = Union[Segment, Arc]


@dataclass(frozen=True)
class RemovedDisc:
    """Closed disc removed from the domain; its circle is a piece of role cap."""

    center: Tuple[float, float]
    radius: float


# ============================================================================
# Vectorized distance kernels
# ============================================================================


def segment_distance(px, py, ax, ay, bx, by):
    """Distance and foot point from points to segments (broadcasting).

    Both the brute-force and the hierarchical paths go through this kernel,
    so equal inputs give bit-identical distances.
    """
    ex = bx - ax
    ey = by - ay
    len2 = ex * ex + ey * ey
    safe = np.where(len2 > 0.0, len2, 1.0)
    t = ((px - ax) * ex + (py - ay) * ey) / safe
    t = np.where(len2 > 0.0, np.clip(t, 0.0, 1.0), 0.0)
    fx = ax + t * ex
    fy = ay + t * ey
    dx = px - fx
    dy = py - fy
    return np.sqrt(dx * dx + dy * dy), fx, fy


def arc_distance(px, py, cx, cy, r, t0, t1):
    """Distance and foot point from points to circular arcs (broadcasting)."""
    dx = px - cx
    dy = py - cy
    rho = np.sqrt(dx * dx + dy * dy)
    phi = np.arctan2(dy, dx)
    span = t1 - t0
    inside = (np.mod(phi - t0, TWO_PI) <= span) | (span >= TWO_PI)
    fx_in = cx + r * np.cos(phi)
    fy_in = cy + r * np.sin(phi)
    d_in = np.abs(rho - r)
    e0x = cx + r * np.cos(t0)
    e0y = cy + r * np.sin(t0)
    e1x = cx + r * np.cos(t1)
    e1y = cy + r * np.sin(t1)
    d0 = np.sqrt((px - e0x) ** 2 + (py - e0y) ** 2)
    d1 = np.sqrt((px - e1x) ** 2 + (py - e1y) ** 2)
    use0 = d0 <= d1
    d_out = np.where(use0, d0, d1)
    fx_out = np.where(use0, e0x, e1x)
    fy_out = np.where(use0, e0y, e1y)
    return (
        np.where(inside, d_in, d_out),
        np.where(inside, fx_in, fx_out),
        np.where(inside, fy_in, fy_out),
    )


@lru_cache(maxsize=64)
def cantor_origins(lam: float, level: int) -> np.ndarray:
    """Lower-left corners of the 4**level squares of K_{lam,level}.

    Square q at level k has children 4q + digit with digit bits
    (x-offset, y-offset): 0 lower-left, 1 lower-right, 2 upper-left,
    3 upper-right.
    """
    origins = np.zeros((1, 2))
    side = 1.0
    offsets = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    for _ in range(level):
        step = (1.0 - lam) * side
        origins = (origins[:, None, :] + step * offsets[None, :, :]).reshape(-1, 2)
        side *= lam
    origins.setflags(write=False)
    return origins


def cantor_address(index: int, level: int) -> str:
    """Address string of square ``index`` at ``level`` ("q" + base-4 digits)."""
    digits = []
    for _ in range(level):
        digits.append(str(index % 4))
        index //= 4
    return "q" + "".join(reversed(digits))


# ============================================================================
# Domain
# ============================================================================


@dataclass(frozen=True, eq=False)
class Domain:
    """Bounded planar domain: window ball minus removed sets.

    Attributes:
        kind: One of cantor, halfplane, disc, custom
        pieces: Labeled boundary pieces; Cantor sides come first
        window: Truncating ball; the domain lies inside it
        params: Declared corkscrew/capacity constants
        cantor: Cantor parameters when kind is cantor
        removed_discs: Closed discs cut out of the domain
        lower_half_removed: Points with y <= 0 are outside (half-plane kind)
        extra: Free-form spec entries kept for serialization
    """

    kind: str
    pieces: Tuple[Piece, ...]
    window: Ball
    params: DomainParams
    cantor: Optional[CantorSpec] = None
    removed_discs: Tuple[RemovedDisc, ...] = ()
    lower_half_removed: bool = False
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ParameterError("unknown domain kind", kind=self.kind)
        labels = [p.label for p in self.pieces]
        if len(set(labels)) != len(labels):
            raise ParameterError("piece labels must be unique")
        seg_idx = np.array([i for i, p in enumerate(self.pieces) if isinstance(p, Segment)], dtype=np.int64)
        arc_idx = np.array([i for i, p in enumerate(self.pieces) if isinstance(p, Arc)], dtype=np.int64)
        segs = [self.pieces[i] for i in seg_idx]
        arcs = [self.pieces[i] for i in arc_idx]
        set_ = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        set_("_labels", tuple(labels))
        set_("_label_index", {label: i for i, label in enumerate(labels)})
        set_("_roles", np.array([p.role for p in self.pieces]))
        set_("_seg_idx", seg_idx)
        set_("_seg_a", np.array([s.a for s in segs], dtype=float).reshape(-1, 2))
        set_("_seg_b", np.array([s.b for s in segs], dtype=float).reshape(-1, 2))
        set_("_arc_idx", arc_idx)
        set_("_arc_c", np.array([a.center for a in arcs], dtype=float).reshape(-1, 2))
        set_("_arc_r", np.array([a.radius for a in arcs], dtype=float))
        set_("_arc_t0", np.array([a.theta0 for a in arcs], dtype=float))
        set_("_arc_t1", np.array([a.theta1 for a in arcs], dtype=float))
        n_cantor = 4 * 4**self.cantor.level if self.cantor is not None else 0
        set_("_n_cantor", n_cantor)
        set_("_seg_tree", None)
        window_center = np.asarray(self.window.center)
        for i, piece in enumerate(self.pieces):
            pts = np.array([piece.a, piece.b]) if isinstance(piece, Segment) else piece.point(
                np.array([piece.theta0, piece.theta1])
            )
            reach = np.max(np.linalg.norm(pts - window_center, axis=1))
            if isinstance(piece, Arc):
                reach = max(reach, np.linalg.norm(np.asarray(piece.center) - window_center) + piece.radius)
            if reach > self.window.radius * (1 + 1e-9):
                raise ParameterError("piece leaves the window", label=piece.label)

    # ------------------------------------------------------------------
    # Labels and roles
    # ------------------------------------------------------------------

    @property
    def labels(self) -> Tuple[str, ...]:
        return self._labels

    @property
    def roles(self) -> np.ndarray:
        return self._roles

    @property
    def diameter(self) -> float:
        return 2.0 * self.window.radius

    def index_of(self, label: str) -> int:
        try:
            return self._label_index[label]
        except KeyError as exc:
            raise ParameterError("unknown piece label", label=label) from exc

    def piece_indices(self, role: Optional[str] = None, exclude_window: bool = False) -> np.ndarray:
        idx = np.arange(len(self.pieces))
        if role is not None:
            idx = idx[self._roles == role]
        if exclude_window:
            idx = idx[self._roles[idx] != WINDOW]
        return idx

    # ------------------------------------------------------------------
    # Distance queries
    # ------------------------------------------------------------------

    def nearest(
        self, points: np.ndarray, include_window: bool = True
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distance to the boundary, nearest piece index and foot point.

        Args:
            points: Array of shape (M, 2)
            include_window: Whether the window circle counts as boundary

        Returns:
            (distance (M,), piece index (M,), foot (M, 2))
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        seg_sel = np.arange(len(self._seg_idx))
        arc_sel = np.arange(len(self._arc_idx))
        if not include_window:
            seg_sel = seg_sel[self._roles[self._seg_idx] != WINDOW]
            arc_sel = arc_sel[self._roles[self._arc_idx] != WINDOW]
        if self.cantor is None:
            return self._brute(pts, seg_sel, arc_sel)
        d, idx, foot = self._cantor_nearest(pts)
        seg_sel = seg_sel[self._seg_idx[seg_sel] >= self._n_cantor]
        if len(seg_sel) == 0 and len(arc_sel) == 0:
            return d, idx, foot
        d2, idx2, foot2 = self._brute(pts, seg_sel, arc_sel)
        take = d2 < d
        return np.where(take, d2, d), np.where(take, idx2, idx), np.where(take[:, None], foot2, foot)

    def distance(self, points: np.ndarray, include_window: bool = True) -> np.ndarray:
        """Euclidean distance from each point to the boundary (0 on it)."""
        return self.nearest(points, include_window)[0]

    def brute_force_nearest(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Minimum over every piece, without hierarchical pruning."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self._brute(pts, np.arange(len(self._seg_idx)), np.arange(len(self._arc_idx)))

    def _brute(self, pts, seg_sel, arc_sel):
        m = len(pts)
        best = np.full(m, np.inf)
        best_idx = np.full(m, -1, dtype=np.int64)
        best_foot = np.zeros((m, 2))
        k = max(len(seg_sel), len(arc_sel), 1)
        chunk = max(1, _PAIR_CHUNK // k)
        for start in range(0, m, chunk):
            sl = slice(start, min(m, start + chunk))
            px = pts[sl, 0][:, None]
            py = pts[sl, 1][:, None]
            if len(seg_sel):
                a = self._seg_a[seg_sel]
                b = self._seg_b[seg_sel]
                d, fx, fy = segment_distance(px, py, a[None, :, 0], a[None, :, 1], b[None, :, 0], b[None, :, 1])
                j = np.argmin(d, axis=1)
                rows = np.arange(len(j))
                dmin = d[rows, j]
                take = dmin < best[sl]
                best[sl] = np.where(take, dmin, best[sl])
                best_idx[sl] = np.where(take, self._seg_idx[seg_sel][j], best_idx[sl])
                best_foot[sl] = np.where(take[:, None], np.stack([fx[rows, j], fy[rows, j]], axis=1), best_foot[sl])
            if len(arc_sel):
                c = self._arc_c[arc_sel]
                d, fx, fy = arc_distance(
                    px, py, c[None, :, 0], c[None, :, 1],
                    self._arc_r[arc_sel][None, :], self._arc_t0[arc_sel][None, :], self._arc_t1[arc_sel][None, :],
                )
                j = np.argmin(d, axis=1)
                rows = np.arange(len(j))
                dmin = d[rows, j]
                take = dmin < best[sl]
                best[sl] = np.where(take, dmin, best[sl])
                best_idx[sl] = np.where(take, self._arc_idx[arc_sel][j], best_idx[sl])
                best_foot[sl] = np.where(take[:, None], np.stack([fx[rows, j], fy[rows, j]], axis=1), best_foot[sl])
        return best, best_idx, best_foot

    def _cantor_nearest(self, pts):
        """Branch-and-bound descent through the square hierarchy.

        Lower bound: distance to the closed square. Upper bound: distance to
        its nearest corner, which is a corner of a level-n square and hence
        lies on the boundary. Surviving level-n squares are resolved with
        the same segment kernel as the brute-force path.
        """
        lam = self.cantor.lam
        n = self.cantor.level
        m = len(pts)
        px_all = pts[:, 0]
        py_all = pts[:, 1]
        pidx = np.arange(m)
        node = np.zeros(m, dtype=np.int64)
        for k in range(n + 1):
            origins = cantor_origins(lam, k)
            side = lam**k
            ox = origins[node, 0]
            oy = origins[node, 1]
            qx = px_all[pidx]
            qy = py_all[pidx]
            gx = np.maximum(np.maximum(ox - qx, qx - (ox + side)), 0.0)
            gy = np.maximum(np.maximum(oy - qy, qy - (oy + side)), 0.0)
            lower = np.sqrt(gx * gx + gy * gy)
            cx = np.where(qx < ox + 0.5 * side, ox, ox + side)
            cy = np.where(qy < oy + 0.5 * side, oy, oy + side)
            upper = np.sqrt((qx - cx) ** 2 + (qy - cy) ** 2)
            best = np.full(m, np.inf)
            np.minimum.at(best, pidx, upper)
            keep = lower <= best[pidx] * (1.0 + 1e-9) + 1e-300
            pidx = pidx[keep]
            node = node[keep]
            if k < n:
                count = len(node)
                pidx = np.repeat(pidx, 4)
                node = np.repeat(node, 4) * 4 + np.tile(np.arange(4), count)
        count = len(node)
        pi = np.repeat(pidx, 4)
        si = np.repeat(node, 4) * 4 + np.tile(np.arange(4), count)
        # Cantor sides occupy the first piece slots, in square order
        seg_pos = si
        a = self._seg_a[seg_pos]
        b = self._seg_b[seg_pos]
        d, fx, fy = segment_distance(px_all[pi], py_all[pi], a[:, 0], a[:, 1], b[:, 0], b[:, 1])
        order = np.lexsort((si, d, pi))
        first = order[np.unique(pi[order], return_index=True)[1]]
        out_d = np.full(m, np.inf)
        out_i = np.full(m, -1, dtype=np.int64)
        out_f = np.zeros((m, 2))
        out_d[pi[first]] = d[first]
        out_i[pi[first]] = self._seg_idx[si[first]]
        out_f[pi[first], 0] = fx[first]
        out_f[pi[first], 1] = fy[first]
        return out_d, out_i, out_f

    # ------------------------------------------------------------------
    # Membership
    # ------------------------------------------------------------------

    def in_cantor(self, points: np.ndarray) -> np.ndarray:
        """True for points inside the closed squares of K_{lambda,n}."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.cantor is None:
            return np.zeros(len(pts), dtype=bool)
        lam = self.cantor.lam
        px, py = pts[:, 0], pts[:, 1]
        inside = (px >= 0.0) & (px <= 1.0) & (py >= 0.0) & (py <= 1.0)
        node = np.zeros(len(pts), dtype=np.int64)
        for k in range(1, self.cantor.level + 1):
            parent = cantor_origins(lam, k - 1)[node]
            side = lam ** (k - 1)
            bx = (px - parent[:, 0] > 0.5 * side).astype(np.int64)
            by = (py - parent[:, 1] > 0.5 * side).astype(np.int64)
            node = node * 4 + bx + 2 * by
            child = cantor_origins(lam, k)[node]
            cs = lam**k
            inside &= (px >= child[:, 0]) & (px <= child[:, 0] + cs) & (py >= child[:, 1]) & (py <= child[:, 1] + cs)
        return inside

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership in the open domain."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cx, cy = self.window.center
        ok = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) < self.window.radius
        if self.lower_half_removed:
            ok &= pts[:, 1] > 0.0
        for disc in self.removed_discs:
            ok &= np.hypot(pts[:, 0] - disc.center[0], pts[:, 1] - disc.center[1]) > disc.radius
        if self.cantor is not None:
            ok &= ~self.in_cantor(pts)
        if ok.any():
            sel = np.nonzero(ok)[0]
            ok[sel] = self.distance(pts[sel]) > 0.0
        return ok

    # ------------------------------------------------------------------
    # Box tests (Whitney)
    # ------------------------------------------------------------------

    def segment_tree(self) -> Optional[Tuple[cKDTree, float]]:
        """KD tree over segment midpoints with the largest half length."""
        if self._seg_tree is None and len(self._seg_idx):
            mid = 0.5 * (self._seg_a + self._seg_b)
            half = 0.5 * float(np.max(np.linalg.norm(self._seg_b - self._seg_a, axis=1)))
            object.__setattr__(self, "_seg_tree", (cKDTree(mid), half))
        return self._seg_tree

    def boxes_meet_boundary(self, boxes: np.ndarray) -> np.ndarray:
        """Whether each closed box (xmin, ymin, xmax, ymax) meets a piece."""
        boxes = np.atleast_2d(np.asarray(boxes, dtype=float))
        centers = np.stack([(boxes[:, 0] + boxes[:, 2]) / 2, (boxes[:, 1] + boxes[:, 3]) / 2], axis=1)
        half_w = (boxes[:, 2] - boxes[:, 0]) / 2
        half_h = (boxes[:, 3] - boxes[:, 1]) / 2
        d = self.distance(centers)
        result = d <= np.minimum(half_w, half_h)
        unsure = np.nonzero(~result & (d <= np.hypot(half_w, half_h)))[0]
        tree = self.segment_tree()
        for i in unsure:
            result[i] = self._box_meets_exact(boxes[i], centers[i], float(np.hypot(half_w[i], half_h[i])), tree)
        return result

    def _box_meets_exact(self, box, center, circumradius, tree) -> bool:
        if tree is not None:
            kd, half = tree
            cand = np.asarray(kd.query_ball_point(center, circumradius + half + 1e-12), dtype=np.int64)
            if len(cand):
                a = self._seg_a[cand]
                b = self._seg_b[cand]
                if np.any(_segments_meet_box(a, b, box)):
                    return True
        for j in range(len(self._arc_idx)):
            if _arc_meets_box(self._arc_c[j], self._arc_r[j], self._arc_t0[j], self._arc_t1[j], box):
                return True
        return False

    # ------------------------------------------------------------------
    # Derived domains
    # ------------------------------------------------------------------

    def with_pieces(
        self, pieces: Sequence[Piece], discs: Sequence[RemovedDisc] = (), extra: Optional[Dict[str, Any]] = None
    ) -> "Domain":
        """Copy of this domain with extra pieces (and removed discs) appended."""
        merged = dict(self.extra)
        if extra:
            for key, value in extra.items():
                merged[key] = list(merged.get(key, [])) + list(value)
        return Domain(
            kind=self.kind,
            pieces=tuple(self.pieces) + tuple(pieces),
            window=self.window,
            params=self.params,
            cantor=self.cantor,
            removed_discs=tuple(self.removed_discs) + tuple(discs),
            lower_half_removed=self.lower_half_removed,
            extra=merged,
        )


# ----------------------------------------------------------------------------
# Exact box intersection helpers
# ----------------------------------------------------------------------------


def _segments_meet_box(a: np.ndarray, b: np.ndarray, box) -> np.ndarray:
    """Liang-Barsky clipping of segments against a closed box."""
    xmin, ymin, xmax, ymax = box
    dx = b[:, 0] - a[:, 0]
    dy = b[:, 1] - a[:, 1]
    t0 = np.zeros(len(a))
    t1 = np.ones(len(a))
    ok = np.ones(len(a), dtype=bool)
    for p, q in (
        (-dx, a[:, 0] - xmin),
        (dx, xmax - a[:, 0]),
        (-dy, a[:, 1] - ymin),
        (dy, ymax - a[:, 1]),
    ):
        parallel = p == 0.0
        ok &= ~(parallel & (q < 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(parallel, 0.0, q / np.where(parallel, 1.0, p))
        t0 = np.where(~parallel & (p < 0.0), np.maximum(t0, r), t0)
        t1 = np.where(~parallel & (p > 0.0), np.minimum(t1, r), t1)
    return ok & (t0 <= t1)


def _angle_in_arc(theta: float, t0: float, t1: float) -> bool:
    span = t1 - t0
    return span >= TWO_PI or (theta - t0) % TWO_PI <= span


def _arc_meets_box(center, radius, t0, t1, box) -> bool:
    xmin, ymin, xmax, ymax = box
    for theta in (t0, t1):
        x = center[0] + radius * math.cos(theta)
        y = center[1] + radius * math.sin(theta)
        if xmin <= x <= xmax and ymin <= y <= ymax:
            return True
    for value, along_x in ((xmin, True), (xmax, True), (ymin, False), (ymax, False)):
        offset = (value - (center[0] if along_x else center[1])) / radius
        if abs(offset) > 1.0:
            continue
        if along_x:
            base = math.acos(offset)
            angles = (base, -base)
        else:
            base = math.asin(offset)
            angles = (base, math.pi - base)
        for theta in angles:
            x = center[0] + radius * math.cos(theta)
            y = center[1] + radius * math.sin(theta)
            if xmin - 1e-12 <= x <= xmax + 1e-12 and ymin - 1e-12 <= y <= ymax + 1e-12 and _angle_in_arc(theta, t0, t1):
                return True
    return False


# ============================================================================
# Constructors
# ============================================================================


def cantor_alpha(lam: float) -> float:
    """Declared corkscrew constant for the Cantor complement."""
    return (1.0 - 2.0 * lam) * lam / 4.0


def make_cantor(
    spec: CantorSpec,
    window_radius: Optional[float] = None,
    alpha: Optional[float] = None,
    beta: float = 0.1,
) -> Domain:
    """Build Omega = window minus K_{lambda,level}.

    Args:
        spec: Cantor ratio and level
        window_radius: Radius of the window centered at (1/2, 1/2); at least
            twice the diameter of the unit square
        alpha: Override of the declared corkscrew constant
        beta: Declared capacity density constant

    Returns:
        Domain whose first 4 * 4**level pieces are the square sides,
        labeled "<address>/<side>", followed by the window circle

    Raises:
        PreconditionError: Window too small
        ResolutionError: Level too deep to represent
    """
    diam = math.sqrt(2.0)
    radius = 2.0 * diam if window_radius is None else float(window_radius)
    if radius < 2.0 * diam * (1 - 1e-12):
        raise PreconditionError("window radius must be at least 2*diam(K0)", window_radius=radius)
    if spec.side < np.finfo(float).eps * radius or spec.level > MAX_CANTOR_LEVEL:
        raise ResolutionError("Cantor level too deep for the representation", level=spec.level, side=spec.side)
    origins = cantor_origins(spec.lam, spec.level)
    s = spec.side
    pieces: List[Piece] = []
    for q, (ox, oy) in enumerate(origins):
        address = cantor_address(q, spec.level)
        corners = {
            "bottom": ((ox, oy), (ox + s, oy)),
            "right": ((ox + s, oy), (ox + s, oy + s)),
            "top": ((ox, oy + s), (ox + s, oy + s)),
            "left": ((ox, oy), (ox, oy + s)),
        }
        for side in SIDES:
            a, b = corners[side]
            pieces.append(Segment(a, b, f"{address}/{side}"))
    pieces.append(Arc((0.5, 0.5), radius, 0.0, TWO_PI, "window", WINDOW))
    domain = Domain(
        kind="cantor",
        pieces=tuple(pieces),
        window=Ball((0.5, 0.5), radius),
        params=DomainParams(alpha=cantor_alpha(spec.lam) if alpha is None else alpha, beta=beta),
        cantor=spec,
    )
    logger.debug(f"Built Cantor domain lam={spec.lam} level={spec.level} pieces={len(pieces)}")
    return domain


def make_halfplane(window_radius: float = 64.0) -> Domain:
    """Upper half-plane truncated to the half disc of ``window_radius``."""
    r = float(window_radius)
    pieces = (
        Segment((-r, 0.0), (r, 0.0), "axis"),
        Arc((0.0, 0.0), r, 0.0, math.pi, "window", WINDOW),
    )
    return Domain(
        kind="halfplane",
        pieces=pieces,
        window=Ball((0.0, 0.0), r),
        params=DomainParams(alpha=0.5, beta=0.5),
        lower_half_removed=True,
    )


def make_disc(radius: float = 1.0, arcs: int = 12) -> Domain:
    """Open disc whose circle is split into ``arcs`` equal labeled arcs."""
    if arcs < 1:
        raise ParameterError("arcs must be at least 1", arcs=arcs)
    step = TWO_PI / arcs
    pieces = tuple(
        Arc((0.0, 0.0), float(radius), k * step, (k + 1) * step if k < arcs - 1 else TWO_PI, f"arc-{k}")
        for k in range(arcs)
    )
    return Domain(
        kind="disc",
        pieces=pieces,
        window=Ball((0.0, 0.0), float(radius)),
        params=DomainParams(alpha=0.5, beta=0.5),
        extra={"arcs": arcs},
    )


def make_punctured(window_radius: float = 4.0) -> Domain:
    """Window minus the single point at the origin."""
    r = float(window_radius)
    pieces = (
        Segment((0.0, 0.0), (0.0, 0.0), "point"),
        Arc((0.0, 0.0), r, 0.0, TWO_PI, "window", WINDOW),
    )
    return Domain(
        kind="custom",
        pieces=pieces,
        window=Ball((0.0, 0.0), r),
        params=DomainParams(alpha=0.5, beta=1e-6),
        extra={"shape": "point"},
    )


def make_slit(length: float = 1.0, window_radius: float = 4.0) -> Domain:
    """Window minus the segment [0, length] x {0}."""
    r = float(window_radius)
    pieces = (
        Segment((0.0, 0.0), (float(length), 0.0), "slit"),
        Arc((0.0, 0.0), r, 0.0, TWO_PI, "window", WINDOW),
    )
    return Domain(
        kind="custom",
        pieces=pieces,
        window=Ball((0.0, 0.0), r),
        params=DomainParams(alpha=0.5, beta=0.25),
        extra={"shape": "slit", "length": float(length)},
    )


# ============================================================================
# Boundary regions
# ============================================================================


@dataclass(frozen=True, eq=False)
class BoundaryRegion:
    """Union of labeled pieces, optionally clipped to a closed ball."""

    domain: Domain
    piece_ids: FrozenSet[str]
    clip: Optional[Ball] = None

    def __post_init__(self) -> None:
        ids = frozenset(self.piece_ids)
        object.__setattr__(self, "piece_ids", ids)
        mask = np.zeros(len(self.domain.pieces), dtype=bool)
        for label in ids:
            mask[self.domain.index_of(label)] = True
        object.__setattr__(self, "_mask", mask)

    @classmethod
    def all(cls, domain: Domain, include_window: bool = True) -> "BoundaryRegion":
        idx = domain.piece_indices(exclude_window=not include_window)
        return cls(domain, frozenset(domain.labels[i] for i in idx))

    @classmethod
    def from_prefix(cls, domain: Domain, prefix: str, clip: Optional[Ball] = None) -> "BoundaryRegion":
        return cls(domain, frozenset(label for label in domain.labels if label.startswith(prefix)), clip)

    @classmethod
    def empty(cls, domain: Domain) -> "BoundaryRegion":
        return cls(domain, frozenset())

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def is_empty(self) -> bool:
        return not self._mask.any()

    def contains_hits(self, piece: np.ndarray, foot: np.ndarray) -> np.ndarray:
        """Whether walk terminations (piece index, foot point) land in the region."""
        piece = np.asarray(piece)
        valid = piece >= 0
        hit = valid & self._mask[np.where(valid, piece, 0)]
        if self.clip is not None:
            hit &= self.clip.contains(foot)
        return hit

    def intervals(self) -> List[Tuple[int, float, float]]:
        """Parameter intervals (piece index, lo, hi) covered by the region.

        Segments use t in [0, 1]; arcs use the angle.
        """
        out: List[Tuple[int, float, float]] = []
        for i in np.nonzero(self._mask)[0]:
            piece = self.domain.pieces[i]
            if isinstance(piece, Segment):
                spans = [(0.0, 1.0)] if self.clip is None else _segment_clip(piece, self.clip)
            else:
                spans = [(piece.theta0, piece.theta1)] if self.clip is None else _arc_clip(piece, self.clip)
            out.extend((int(i), lo, hi) for lo, hi in spans)
        return out

    def length(self) -> float:
        """One-dimensional Hausdorff measure of the region (exact)."""
        total = 0.0
        for i, lo, hi in self.intervals():
            piece = self.domain.pieces[i]
            total += (hi - lo) * (piece.length if isinstance(piece, Segment) else piece.radius)
        return total

    def sample(self, spacing: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Midpoints of sub-elements of length at most ``spacing``.

        Returns:
            (points (P, 2), piece index (P,), element length (P,)) in
            canonical order: piece order, then arclength
        """
        if spacing <= 0:
            raise ParameterError("spacing must be positive", spacing=spacing)
        pts, idx, lens = [], [], []
        for i, lo, hi in self.intervals():
            piece = self.domain.pieces[i]
            full = piece.length if isinstance(piece, Segment) else piece.radius
            arc_len = (hi - lo) * full
            count = max(1, int(math.ceil(arc_len / spacing - 1e-9)))
            t = lo + (np.arange(count) + 0.5) * (hi - lo) / count
            pts.append(_piece_points(piece, t))
            idx.append(np.full(count, i, dtype=np.int64))
            lens.append(np.full(count, arc_len / count))
        if not pts:
            return np.zeros((0, 2)), np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.concatenate(pts), np.concatenate(idx), np.concatenate(lens)


def _piece_points(piece: Piece, t: np.ndarray) -> np.ndarray:
    if isinstance(piece, Segment):
        a = np.asarray(piece.a)
        b = np.asarray(piece.b)
        out = a[None, :] + t[:, None] * (b - a)[None, :]
        out[t == 1.0] = b
        return out
    return piece.point(t)


def _segment_clip(seg: Segment, ball: Ball) -> List[Tuple[float, float]]:
    a = np.asarray(seg.a)
    e = np.asarray(seg.b) - a
    w = a - np.asarray(ball.center)
    qa = float(e @ e)
    qb = float(e @ w)
    qc = float(w @ w) - ball.radius**2
    if qa == 0.0:
        return [(0.0, 0.0)] if qc <= 0 else []
    disc = qb * qb - qa * qc
    if disc < 0:
        return []
    root = math.sqrt(disc)
    lo = max(0.0, (-qb - root) / qa)
    hi = min(1.0, (-qb + root) / qa)
    return [(lo, hi)] if lo <= hi else []


def _arc_clip(arc: Arc, ball: Ball) -> List[Tuple[float, float]]:
    dx = ball.center[0] - arc.center[0]
    dy = ball.center[1] - arc.center[1]
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return [(arc.theta0, arc.theta1)] if arc.radius <= ball.radius else []
    kappa = (dist**2 + arc.radius**2 - ball.radius**2) / (2.0 * arc.radius * dist)
    if kappa <= -1.0:
        return [(arc.theta0, arc.theta1)]
    if kappa > 1.0:
        return []
    phi = math.atan2(dy, dx)
    half = math.acos(kappa)
    return intersect_angular(arc.theta0, arc.theta1, phi - half, phi + half)


def intersect_angular(t0: float, t1: float, a: float, b: float) -> List[Tuple[float, float]]:
    """Intersect [t0, t1] with the angular window [a, b] taken modulo 2*pi."""
    out = []
    base = math.floor((t0 - b) / TWO_PI)
    for m in range(int(base), int(base) + 4):
        lo = max(t0, a + m * TWO_PI)
        hi = min(t1, b + m * TWO_PI)
        if lo < hi:
            out.append((lo, hi))
    return out


def signed_distance(domain: Domain, p: Sequence[float]) -> float:
    """Exact distance from a single point to the boundary (0 on it)."""
    return float(domain.distance(np.asarray(p, dtype=float)[None, :])[0])


def boundary_length(domain: Domain, region: BoundaryRegion) -> float:
    """H^1 of a boundary region of ``domain``."""
    if region.domain is not domain:
        raise ParameterError("region belongs to another domain")
    return region.length()


# ============================================================================
# Grid counting
# ============================================================================


def grid_cover_count(region: BoundaryRegion, tau: float) -> int:
    """Number of grid cells [k tau, (k+1) tau) x [l tau, (l+1) tau) meeting the region.

    Cells are half-open, so every point of the plane lies in exactly one
    cell; the traversal visits every grid-line crossing of every piece.
    """
    if tau <= 0:
        raise ParameterError("tau must be positive", tau=tau)
    cells: List[np.ndarray] = []
    for i, lo, hi in region.intervals():
        piece = region.domain.pieces[i]
        breaks = [np.array([lo, hi])]
        if isinstance(piece, Segment):
            a = np.asarray(piece.a)
            e = np.asarray(piece.b) - a
            for axis in (0, 1):
                if e[axis] == 0.0:
                    continue
                v0 = a[axis] + lo * e[axis]
                v1 = a[axis] + hi * e[axis]
                ks = np.arange(math.floor(min(v0, v1) / tau), math.floor(max(v0, v1) / tau) + 2)
                t = (ks * tau - a[axis]) / e[axis]
                breaks.append(t[(t >= lo) & (t <= hi)])
        else:
            c = np.asarray(piece.center)
            for axis in (0, 1):
                k0 = math.floor((c[axis] - piece.radius) / tau)
                ks = np.arange(k0, math.floor((c[axis] + piece.radius) / tau) + 2)
                v = np.clip((ks * tau - c[axis]) / piece.radius, -1.0, 1.0)
                if axis == 0:
                    base = np.arccos(v)
                    angles = np.concatenate([base, -base])
                else:
                    base = np.arcsin(v)
                    angles = np.concatenate([base, math.pi - base])
                shifts = np.arange(math.floor((lo - math.pi) / TWO_PI) - 1, math.floor((hi + math.pi) / TWO_PI) + 2)
                all_angles = (angles[:, None] + TWO_PI * shifts[None, :]).ravel()
                breaks.append(all_angles[(all_angles >= lo) & (all_angles <= hi)])
        t = np.unique(np.concatenate(breaks))
        mids = 0.5 * (t[:-1] + t[1:])
        pts = _piece_points(piece, np.concatenate([t, mids]))
        cells.append(np.floor(pts / tau).astype(np.int64))
    if not cells:
        return 0
    return int(len(np.unique(np.concatenate(cells), axis=0)))


def grid_cover_count_points(points: np.ndarray, tau: float) -> int:
    """Number of half-open grid cells of side ``tau`` containing sample points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        return 0
    return int(len(np.unique(np.floor(pts / tau).astype(np.int64), axis=0)))


# ============================================================================
# Corkscrew witnesses
# ============================================================================


def _ball_ok(
    domain: Domain, centers: np.ndarray, x: np.ndarray, r: float, radius: float
) -> Tuple[np.ndarray, np.ndarray]:
    centers = np.atleast_2d(centers)
    if len(centers) == 0:
        return np.zeros(0, dtype=bool), np.zeros(0)
    reach = np.hypot(centers[:, 0] - x[0], centers[:, 1] - x[1]) + radius
    dist = domain.distance(centers)
    ok = (reach <= r * (1 + 1e-12)) & (dist >= radius) & domain.contains(centers)
    return ok, dist


def _cantor_gap_centers(domain: Domain, x: np.ndarray) -> np.ndarray:
    """Centers of the ancestor squares of the level-n square nearest to x."""
    _, idx, _ = domain.nearest(x[None, :])
    piece = int(idx[0])
    if piece < 0 or piece >= domain._n_cantor:
        return np.zeros((0, 2))
    n = domain.cantor.level
    square = piece // 4
    centers = []
    for k in range(n):
        q = square // 4 ** (n - k)
        origin = cantor_origins(domain.cantor.lam, k)[q]
        half = 0.5 * domain.cantor.lam**k
        centers.append(origin + half)
    return np.array(centers).reshape(-1, 2)


def corkscrew_witness(domain: Domain, x: Sequence[float], r: float, grid: int = 32) -> Ball:
    """Find B(p, alpha r) inside Omega and inside B(x, r).

    Cantor domains first try the central gaps of the ancestor squares of x,
    shallowest first. Otherwise a deterministic grid of candidate centers
    with spacing r/grid is scanned and the candidate farthest from the
    boundary wins.

    Args:
        domain: The domain
        x: A boundary point
        r: Radius, 0 < r < diam(Omega)
        grid: Grid resolution of the fallback search

    Returns:
        Ball of radius alpha * r

    Raises:
        PreconditionError: x off the boundary or r out of range
        CorkscrewViolation: No ball at the declared alpha
    """
    x = np.asarray(x, dtype=float)
    if not (0.0 < r < domain.diameter):
        raise PreconditionError("radius must lie in (0, diam(Omega))", r=r, diameter=domain.diameter)
    if domain.distance(x[None, :])[0] > 1e-9 * domain.window.radius:
        raise PreconditionError("x is not on the boundary", x=x.tolist())
    radius = domain.params.alpha * r
    if domain.cantor is not None:
        gaps = _cantor_gap_centers(domain, x)
        ok, _ = _ball_ok(domain, gaps, x, r, radius)
        if ok.any():
            center = gaps[int(np.argmax(ok))]
            return Ball((center[0], center[1]), radius)
    steps = np.arange(-grid, grid + 1) / grid
    gx, gy = np.meshgrid(steps, steps, indexing="ij")
    offsets = np.stack([gx.ravel(), gy.ravel()], axis=1) * r
    offsets = offsets[np.hypot(offsets[:, 0], offsets[:, 1]) + radius <= r * (1 + 1e-12)]
    centers = x[None, :] + offsets
    ok, dist = _ball_ok(domain, centers, x, r, radius)
    if not ok.any():
        raise CorkscrewViolation(
            "no corkscrew ball at the declared alpha",
            x=x.tolist(),
            r=r,
            alpha=domain.params.alpha,
            best_ratio=float(np.max(dist) / r) if len(dist) else 0.0,
        )
    best = np.nonzero(ok)[0][int(np.argmax(dist[ok]))]
    return Ball((centers[best, 0], centers[best, 1]), radius)


# ============================================================================
# Serialization
# ============================================================================

DOMAIN_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "lambda": {"type": "number"},
        "level": {"type": "integer", "minimum": 0},
        "window_radius": {"type": "number", "exclusiveMinimum": 0},
        "alpha": {"type": "number"},
        "beta": {"type": "number"},
        "shape": {"enum": ["point", "slit"]},
        "length": {"type": "number", "exclusiveMinimum": 0},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "arcs": {"type": "integer", "minimum": 1},
        "caps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["center", "radius", "theta0", "theta1", "label"],
                "properties": {
                    "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "radius": {"type": "number", "exclusiveMinimum": 0},
                    "theta0": {"type": "number"},
                    "theta1": {"type": "number"},
                    "label": {"type": "string"},
                },
            },
        },
        "discs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["center", "radius"],
                "properties": {
                    "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "radius": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "cantor"}}}, "then": {"required": ["lambda", "level"]}},
        {"if": {"properties": {"kind": {"const": "custom"}}}, "then": {"required": ["shape"]}},
    ],
}


def domain_from_spec(spec: Dict[str, Any]) -> Domain:
    """Build a domain from its JSON spec.

    Raises:
        ParameterError: Schema violation or out-of-range parameter
    """
    try:
        jsonschema.validate(spec, DOMAIN_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ParameterError(f"invalid domain spec: {exc.message}", spec=spec) from exc
    kind = spec["kind"]
    if kind == "cantor":
        domain = make_cantor(
            CantorSpec(float(spec["lambda"]), int(spec["level"])),
            spec.get("window_radius"),
            alpha=spec.get("alpha"),
            beta=spec.get("beta", 0.1),
        )
    elif kind == "halfplane":
        domain = make_halfplane(spec.get("window_radius", 64.0))
    elif kind == "disc":
        domain = make_disc(spec.get("radius", 1.0), spec.get("arcs", 12))
    elif spec["shape"] == "point":
        domain = make_punctured(spec.get("window_radius", 4.0))
    else:
        domain = make_slit(spec.get("length", 1.0), spec.get("window_radius", 4.0))
    caps = [
        Arc(tuple(c["center"]), c["radius"], c["theta0"], c["theta1"], c["label"], CAP) for c in spec.get("caps", [])
    ]
    discs = [RemovedDisc(tuple(d["center"]), d["radius"]) for d in spec.get("discs", [])]
    disc_arcs = [
        Arc(d.center, d.radius, 0.0, TWO_PI, f"disc-{k}", CAP) for k, d in enumerate(discs)
    ]
    if caps or discs:
        extra = {"caps": spec.get("caps", []), "discs": spec.get("discs", [])}
        domain = domain.with_pieces(caps + disc_arcs, discs, extra)
    if kind != "cantor" and ("alpha" in spec or "beta" in spec):
        params = DomainParams(spec.get("alpha", domain.params.alpha), spec.get("beta", domain.params.beta))
        domain = replace(domain, params=params)
    return domain


def domain_to_spec(domain: Domain) -> Dict[str, Any]:
    """JSON spec {kind, lambda, level, window_radius, alpha, beta, ...}."""
    spec: Dict[str, Any] = {
        "kind": domain.kind,
        "window_radius": domain.window.radius,
        "alpha": domain.params.alpha,
        "beta": domain.params.beta,
    }
    if domain.cantor is not None:
        spec["lambda"] = domain.cantor.lam
        spec["level"] = domain.cantor.level
    if domain.kind == "disc":
        spec["radius"] = domain.window.radius
        spec["arcs"] = domain.extra.get("arcs", len(domain.pieces))
        del spec["window_radius"]
    for key in ("shape", "length", "caps", "discs"):
        if key in domain.extra:
            spec[key] = domain.extra[key]
    return spec


def cantor_center_discs(spec: CantorSpec, c: float) -> List[RemovedDisc]:
    """Closed discs of radius c * lam**k at the centers of every square of level k < n."""
    limit = math.sqrt(2.0) * (0.5 - spec.lam)
    if not (0.0 < c < limit):
        raise ParameterError("disc factor must keep discs inside the central gaps", c=c, limit=limit)
    discs = []
    for k in range(spec.level):
        half = 0.5 * spec.lam**k
        for origin in cantor_origins(spec.lam, k):
            discs.append(RemovedDisc((origin[0] + half, origin[1] + half), c * spec.lam**k))
    return discs
