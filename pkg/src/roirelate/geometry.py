"""Computational geometry for oriented rectangles.

Boxes are parameterized by center, width, height and rotation angle in
radians. All functions here are pure and operate on plain floats or numpy
arrays, so they are safe to call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HALF_PI = math.pi / 2.0

# Intersections smaller than this are treated as empty (touching edges).
_DEGENERATE_AREA = 1e-12


def wrap_half_pi(angle: float) -> float:
    """Wrap an angle into (-pi/2, pi/2]. A rectangle is invariant under pi."""
    a = (angle + HALF_PI) % math.pi - HALF_PI
    if a == -HALF_PI:
        a = HALF_PI
    return a


def wrap_half_pi_array(angles: np.ndarray) -> np.ndarray:
    """Vectorized wrap_half_pi."""
    a = (angles + HALF_PI) % math.pi - HALF_PI
    a[a == -HALF_PI] = HALF_PI
    return a


@dataclass(frozen=True)
class OrientedBox:
    """Rotated rectangle: center (x, y), side lengths (w, h), angle alpha.

    alpha is normalized to (-pi/2, pi/2] at construction; w and h must be
    strictly positive and all fields finite.
    """

    x: float
    y: float
    w: float
    h: float
    alpha: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h", "alpha"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"OrientedBox.{name} must be finite, got {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"OrientedBox sides must be positive, got w={self.w}, h={self.h}")
        object.__setattr__(self, "alpha", wrap_half_pi(self.alpha))

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def scale(self) -> float:
        """Characteristic size sqrt(w*h)."""
        return math.sqrt(self.w * self.h)

    def corners(self) -> tuple[tuple[float, float], ...]:
        """Counter-clockwise corners, starting lower-left in the box frame."""
        c = math.cos(self.alpha)
        s = math.sin(self.alpha)
        hw = 0.5 * self.w
        hh = 0.5 * self.h
        return tuple(
            (self.x + u * c - v * s, self.y + u * s + v * c)
            for u, v in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh))
        )

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h, self.alpha])

    @staticmethod
    def from_array(a) -> "OrientedBox":
        x, y, w, h, alpha = (float(v) for v in a)
        return OrientedBox(x, y, w, h, alpha)


@dataclass(frozen=True)
class ConvexPolygon:
    """Convex polygon with counter-clockwise vertices and nonnegative area."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise ValueError("ConvexPolygon needs at least 3 vertices")
        if self.signed_area() < 0:
            raise ValueError("ConvexPolygon vertices must be counter-clockwise")
        n = len(self.vertices)
        for i in range(n):
            ax, ay = self.vertices[i]
            bx, by = self.vertices[(i + 1) % n]
            cx, cy = self.vertices[(i + 2) % n]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross < -1e-9:
                raise ValueError("ConvexPolygon vertices are not convex")

    def signed_area(self) -> float:
        s = 0.0
        n = len(self.vertices)
        for i in range(n):
            x1, y1 = self.vertices[i]
            x2, y2 = self.vertices[(i + 1) % n]
            s += x1 * y2 - x2 * y1
        return 0.5 * s

    @property
    def area(self) -> float:
        return abs(self.signed_area())


def to_polygon(box: OrientedBox) -> ConvexPolygon:
    """Corner polygon of a box; area equals w*h up to rounding."""
    return ConvexPolygon(box.corners())


def _shoelace(points) -> float:
    s = 0.0
    n = len(points)
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def _clip_intersection_area(subject, clipper) -> float:
    """Area of the intersection of two CCW convex polygons.

    Sutherland-Hodgman: successively clip `subject` by every edge
    half-plane of `clipper`.
    """
    poly = list(subject)
    n_clip = len(clipper)
    for k in range(n_clip):
        x1, y1 = clipper[k]
        x2, y2 = clipper[(k + 1) % n_clip]
        ex = x2 - x1
        ey = y2 - y1
        out = []
        px, py = poly[-1]
        prev_side = ex * (py - y1) - ey * (px - x1)
        for cx, cy in poly:
            side = ex * (cy - y1) - ey * (cx - x1)
            if side * prev_side < 0.0:
                # Segment crosses the clip line; add the crossing point.
                t = prev_side / (prev_side - side)
                out.append((px + t * (cx - px), py + t * (cy - py)))
            if side >= 0.0:
                out.append((cx, cy))
            px, py, prev_side = cx, cy, side
        poly = out
        if len(poly) < 3:
            return 0.0
    return abs(_shoelace(poly))


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection over union of two oriented boxes, in [0, 1].

    Convex polygon clipping for the intersection, inclusion-exclusion for
    the union. Degenerate (touching-edge) intersections count as zero.
    The argument pair is canonicalized first so the result is exactly
    symmetric.
    """
    ka = (a.x, a.y, a.w, a.h, a.alpha)
    kb = (b.x, b.y, b.w, b.h, b.alpha)
    if kb < ka:
        a, b = b, a
    # Cheap reject: bounding circles do not touch.
    dx = a.x - b.x
    dy = a.y - b.y
    ra = 0.5 * math.hypot(a.w, a.h)
    rb = 0.5 * math.hypot(b.w, b.h)
    if dx * dx + dy * dy > (ra + rb) * (ra + rb):
        return 0.0
    inter = _clip_intersection_area(a.corners(), b.corners())
    if inter < _DEGENERATE_AREA:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))


def _points_in_box(pts: np.ndarray, box: OrientedBox) -> np.ndarray:
    """Boolean mask of points inside a box (boundary inclusive)."""
    c = math.cos(box.alpha)
    s = math.sin(box.alpha)
    qx = pts[:, 0] - box.x
    qy = pts[:, 1] - box.y
    u = qx * c + qy * s
    v = -qx * s + qy * c
    return (np.abs(u) <= 0.5 * box.w) & (np.abs(v) <= 0.5 * box.h)


def mc_iou_oracle(a: OrientedBox, b: OrientedBox, samples: int, seed: int) -> float:
    """Monte-Carlo IoU estimate, independent of the clipping path.

    Samples uniformly over the joint axis-aligned bounding box of both
    corner sets; the estimate is hits(a and b) / hits(a or b), with
    standard error O(1/sqrt(samples)).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    corners = np.array(a.corners() + b.corners())
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    pts = lo + rng.random((samples, 2)) * (hi - lo)
    in_a = _points_in_box(pts, a)
    in_b = _points_in_box(pts, b)
    n_both = int(np.count_nonzero(in_a & in_b))
    n_either = int(np.count_nonzero(in_a | in_b))
    if n_both == 0:
        return 0.0
    return n_both / n_either


def center_distance(a: OrientedBox, b: OrientedBox) -> float:
    """Euclidean distance between box centers."""
    return math.hypot(a.x - b.x, a.y - b.y)


def chamfer_distance(s1, s2) -> float:
    """Symmetric chamfer distance between two non-empty point sets.

    Half the sum of the two directed mean min-squared-distances:
    d = 1/2 * (mean_i min_j |p_i - q_j|^2 + mean_j min_i |p_i - q_j|^2).
    """
    p = np.asarray(s1, dtype=np.float64).reshape(-1, 2)
    q = np.asarray(s2, dtype=np.float64).reshape(-1, 2)
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise ValueError("chamfer distance is undefined for an empty point set")
    d2 = np.sum((p[:, None, :] - q[None, :, :]) ** 2, axis=2)
    return 0.5 * (float(d2.min(axis=1).mean()) + float(d2.min(axis=0).mean()))


def pairwise_center_distance(boxes: list[OrientedBox]) -> np.ndarray:
    """N x N matrix of center distances."""
    c = np.array([(b.x, b.y) for b in boxes])
    diff = c[:, None, :] - c[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def pairwise_iou(boxes: list[OrientedBox]) -> np.ndarray:
    """N x N rotated IoU matrix (unit diagonal, symmetric)."""
    n = len(boxes)
    m = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            v = rotated_iou(boxes[i], boxes[j])
            m[i, j] = v
            m[j, i] = v
    return m


def cross_iou(boxes_a: list[OrientedBox], boxes_b: list[OrientedBox]) -> np.ndarray:
    """len(a) x len(b) rotated IoU matrix between two box lists."""
    m = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            m[i, j] = rotated_iou(a, b)
    return m
