"""Plane visibility from predicted depth, and depth-direction disambiguation."""
from __future__ import annotations

import numpy as np

from .geometry import ImageFrame, as_coords
from .hull import Registry
from .raster import PlanarMap, build_planar_map, iou_counts, polygon_depth, rasterize

BEHIND_TOL = 1e-9
OCCLUSION_THRESHOLD = 0.5


def occlusion_fractions(planar_map: PlanarMap, width: int, height: int) -> np.ndarray:
    """Fraction of each plane's footprint lying behind some other plane.

    Every plane takes part regardless of its current visibility flag.
    Planes with an empty footprint report 0.
    """
    if not planar_map.planes:
        return np.zeros(0)
    return occlusion_from_depths(plane_depths(planar_map, width, height))


def plane_depths(planar_map: PlanarMap, width: int, height: int) -> np.ndarray:
    """Depth buffer of every plane in map order, ignoring visibility flags."""
    if not planar_map.planes:
        return np.full((0, height, width), np.inf)
    return np.stack([polygon_depth(p, width, height) for p in planar_map.planes])


def occlusion_from_depths(depths: np.ndarray) -> np.ndarray:
    n = len(depths)
    out = np.zeros(n)
    for i in range(n):
        own = depths[i]
        footprint = np.isfinite(own)
        area = np.count_nonzero(footprint)
        if area == 0 or n == 1:
            continue
        others = np.min(np.delete(depths, i, axis=0), axis=0)
        behind = footprint & (others < own - BEHIND_TOL)
        out[i] = np.count_nonzero(behind) / area
    return out


def estimate_visibility(planar_map: PlanarMap, width: int, height: int,
                        threshold: float = OCCLUSION_THRESHOLD) -> np.ndarray:
    """A plane is visible unless more than `threshold` of it is hidden."""
    return occlusion_fractions(planar_map, width, height) <= threshold


def agreement_score(rendered: np.ndarray, seg_estimate: np.ndarray, class_ids,
                    method: str = "miou") -> float:
    """How well a rendered planar map agrees with a segmentation estimate.

    ``"miou"`` averages IOU over the given classes present in either mask;
    ``"pixel_accuracy"`` is the fraction of pixels labelled with one of those
    classes in either mask on which both masks agree.
    """
    class_ids = list(class_ids)
    if method == "miou":
        scores = []
        for c in class_ids:
            inter, union = iou_counts(rendered, seg_estimate, c)
            if union:
                scores.append(inter / union)
        return float(np.mean(scores)) if scores else 0.0
    if method == "pixel_accuracy":
        relevant = np.isin(rendered, class_ids) | np.isin(seg_estimate, class_ids)
        total = np.count_nonzero(relevant)
        if total == 0:
            return 0.0
        return np.count_nonzero(relevant & (rendered == seg_estimate)) / total
    raise ValueError(f"unknown agreement method {method!r}")


def depth_flip_scores(X, Y, registry: Registry, category_id: str, seg_estimate: np.ndarray,
                      frame: ImageFrame | None = None, method: str = "miou") -> dict:
    """Agreement score and visibility-tagged planar map for depths ``+z`` and ``-z``.

    Returns ``{sign: (score, planar_map)}`` for ``sign`` in ``(1, -1)``.
    """
    z = as_coords(X, 3)[:, 2]
    height, width = seg_estimate.shape
    cat = registry.category(category_id)
    out = {}
    for sign in (1, -1):
        pm = build_planar_map(registry, category_id, Y, sign * z, frame=frame)
        pm = pm.with_visibility(estimate_visibility(pm, width, height))
        score = agreement_score(rasterize(pm, width, height), seg_estimate,
                                cat.class_ids, method)
        out[sign] = (score, pm)
    return out


def resolve_depth_flip(X, Y, registry: Registry, category_id: str, seg_estimate: np.ndarray,
                       frame: ImageFrame | None = None, method: str = "miou"):
    """Pick the depth direction whose visible planes best match `seg_estimate`.

    Builds planar maps with depths ``z`` and ``-z``, estimates visibility
    on each, renders them and scores each render against the segmentation.
    Returns ``(sign, planar_map)``; a tie keeps ``+1``.
    """
    scores = depth_flip_scores(X, Y, registry, category_id, seg_estimate, frame, method)
    sign = -1 if scores[-1][0] > scores[1][0] else 1
    return sign, scores[sign][1]
