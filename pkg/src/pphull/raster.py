"""Planar maps, class-ID mask rasterization and mask IOU.

Masks are plain ``(H, W)`` ``uint8`` arrays. Class 0 is background and
:data:`UNCERTAIN` (255) is reserved for pixels without a trusted label.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import ImageFrame, as_coords
from .hull import Registry

UNCERTAIN = 255
MASK_DTYPE = np.uint8


@dataclass
class PlanePolygon2D:
    class_id: int
    vertices_2d: np.ndarray
    vertex_depths: np.ndarray
    visible: bool = True
    keypoints: tuple[int, ...] = ()

    def __post_init__(self):
        self.vertices_2d = np.asarray(self.vertices_2d, dtype=float).reshape(-1, 2)
        self.vertex_depths = np.asarray(self.vertex_depths, dtype=float).reshape(-1)
        if len(self.vertices_2d) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if len(self.vertex_depths) != len(self.vertices_2d):
            raise ValueError("one depth per vertex is required")
        if not np.all(np.isfinite(self.vertex_depths)):
            raise ValueError("vertex depths must be finite")
        if not 1 <= self.class_id < UNCERTAIN:
            raise ValueError(f"plane class id {self.class_id} out of range")


@dataclass
class PlanarMap:
    planes: list[PlanePolygon2D] = field(default_factory=list)
    category_id: str = ""

    def with_visibility(self, visible) -> "PlanarMap":
        visible = list(visible)
        if len(visible) != len(self.planes):
            raise ValueError("one visibility flag per plane is required")
        return PlanarMap([replace(p, visible=bool(v)) for p, v in zip(self.planes, visible)],
                         self.category_id)

    def all_visible(self) -> "PlanarMap":
        return self.with_visibility([True] * len(self.planes))

    @property
    def visibility(self) -> np.ndarray:
        return np.array([p.visible for p in self.planes], dtype=bool)

    @property
    def class_ids(self) -> list[int]:
        return [p.class_id for p in self.planes]


def build_planar_map(registry: Registry, category_id: str, Y, depths,
                     visibility=None, frame: ImageFrame | None = None) -> PlanarMap:
    """One polygon per hull plane, vertices gathered from the keypoints.

    `Y` is in pixel units unless `frame` is given, in which case it is taken
    as normalized units and mapped through the frame.
    """
    cat = registry.category(category_id)
    Y = as_coords(Y, 2)
    if frame is not None:
        Y = frame.to_pixels(Y)
    depths = np.asarray(depths, dtype=float).reshape(-1)
    if len(Y) != cat.n_keypoints or len(depths) != cat.n_keypoints:
        raise ValueError(
            f"category {category_id!r} has {cat.n_keypoints} keypoints; "
            f"got {len(Y)} positions and {len(depths)} depths")
    if visibility is None:
        visibility = [True] * cat.n_planes
    elif len(visibility) != cat.n_planes:
        raise ValueError("one visibility flag per plane is required")
    planes = []
    for j, (plane, vis) in enumerate(zip(cat.planes, visibility)):
        idx = list(plane.vertices)
        planes.append(PlanePolygon2D(cat.plane_class(j), Y[idx], depths[idx],
                                     bool(vis), tuple(idx)))
    return PlanarMap(planes, category_id)


def plane_visibility_from_keypoints(registry: Registry, category_id: str, keypoint_visibility):
    """A plane counts as visible when all of its keypoints are annotated visible."""
    cat = registry.category(category_id)
    kv = np.asarray(keypoint_visibility, dtype=bool)
    return [bool(kv[list(p.vertices)].all()) for p in cat.planes]


# ---------------------------------------------------------------- rasterization

def depth_plane(vertices_2d, depths):
    """Least-squares plane ``z = a*x + b*y + c`` through the polygon vertices.

    Returns ``None`` when the 2D vertices are collinear.
    """
    A = np.column_stack([vertices_2d, np.ones(len(vertices_2d))])
    coef, _, rank, _ = np.linalg.lstsq(A, depths, rcond=None)
    if rank < 3:
        return None
    return float(coef[0]), float(coef[1]), float(coef[2])


def edge_function(ax, ay, bx, by, px, py):
    """Twice the signed area of (a, b, p); positive when p is left of a->b."""
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def polygon_depth(poly: PlanePolygon2D, width: int, height: int) -> np.ndarray:
    """Per-pixel depth of `poly` over the grid, ``+inf`` where not covered.

    Coverage is the union of the polygon's fan triangles tested at pixel
    centers with boundaries counted as inside.
    """
    out = np.full((height, width), np.inf)
    coef = depth_plane(poly.vertices_2d, poly.vertex_depths)
    if coef is None:
        return out
    v = poly.vertices_2d
    lo = np.floor(v.min(axis=0) - 0.5).astype(int)
    hi = np.ceil(v.max(axis=0) - 0.5).astype(int)
    c0, r0 = max(lo[0], 0), max(lo[1], 0)
    c1, r1 = min(hi[0], width - 1), min(hi[1], height - 1)
    if c0 > c1 or r0 > r1:
        return out
    px = (np.arange(c0, c1 + 1) + 0.5)[None, :]
    py = (np.arange(r0, r1 + 1) + 0.5)[:, None]
    covered = np.zeros((r1 - r0 + 1, c1 - c0 + 1), dtype=bool)
    for i in range(1, len(v) - 1):
        (ax, ay), (bx, by), (cx, cy) = v[0], v[i], v[i + 1]
        area = edge_function(ax, ay, bx, by, cx, cy)
        if area == 0.0:
            continue
        e0 = edge_function(ax, ay, bx, by, px, py)
        e1 = edge_function(bx, by, cx, cy, px, py)
        e2 = edge_function(cx, cy, ax, ay, px, py)
        if area > 0:
            covered |= (e0 >= 0) & (e1 >= 0) & (e2 >= 0)
        else:
            covered |= (e0 <= 0) & (e1 <= 0) & (e2 <= 0)
    a, b, c = coef
    z = a * px + b * py + c
    out[r0:r1 + 1, c0:c1 + 1] = np.where(covered, z, np.inf)
    return out


def depth_stack(planar_map: PlanarMap, width: int, height: int, visible_only: bool = True):
    """Per-plane depth buffers, ordered by class id.

    Returns ``(class_ids, depths)`` with ``depths`` of shape ``(n, H, W)``.
    """
    planes = [p for p in planar_map.planes if p.visible or not visible_only]
    planes.sort(key=lambda p: p.class_id)
    if not planes:
        return np.zeros(0, dtype=int), np.full((0, height, width), np.inf)
    depths = np.stack([polygon_depth(p, width, height) for p in planes])
    return np.array([p.class_id for p in planes]), depths


def rasterize(planar_map: PlanarMap, width: int, height: int) -> np.ndarray:
    """Class-ID mask of the visible planes with per-pixel nearest-plane wins.

    Smaller depth is nearer; equal depths go to the lower class id.
    Uncovered pixels are background.
    """
    ids, depths = depth_stack(planar_map, width, height)
    mask = np.zeros((height, width), dtype=MASK_DTYPE)
    if len(ids) == 0:
        return mask
    nearest = np.argmin(depths, axis=0)
    covered = np.isfinite(np.min(depths, axis=0))
    mask[covered] = ids[nearest[covered]]
    return mask


def rasterize_plane(poly: PlanePolygon2D, width: int, height: int) -> np.ndarray:
    """Mask of a single polygon in isolation (empty if the polygon is not visible)."""
    mask = np.zeros((height, width), dtype=MASK_DTYPE)
    if poly.visible:
        mask[np.isfinite(polygon_depth(poly, width, height))] = poly.class_id
    return mask


# ---------------------------------------------------------------- IOU

def iou_counts(a: np.ndarray, b: np.ndarray, class_id: int,
               ignore_uncertain: bool = True) -> tuple[int, int]:
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    in_a = a == class_id
    in_b = b == class_id
    if ignore_uncertain:
        keep = (a != UNCERTAIN) & (b != UNCERTAIN)
        in_a &= keep
        in_b &= keep
    return int(np.count_nonzero(in_a & in_b)), int(np.count_nonzero(in_a | in_b))


def iou(a: np.ndarray, b: np.ndarray, class_id: int, ignore_uncertain: bool = True) -> float:
    """Intersection over union of `class_id` in two masks (1.0 for an empty union)."""
    inter, union = iou_counts(a, b, class_id, ignore_uncertain)
    return 1.0 if union == 0 else inter / union


def mean_iou(pred: np.ndarray, target: np.ndarray, class_ids, ignore_uncertain: bool = True) -> float:
    """Mean IOU over the given classes that occur in either mask (1.0 if none occur)."""
    scores = []
    for c in class_ids:
        inter, union = iou_counts(pred, target, c, ignore_uncertain)
        if union:
            scores.append(inter / union)
    return float(np.mean(scores)) if scores else 1.0
