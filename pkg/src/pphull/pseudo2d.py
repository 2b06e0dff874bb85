"""2D keypoint pseudo-targets by IOU-maximizing plane selection.

The current keypoint estimate induces a reference planar map. Jittering the
estimate in x-y gives further candidate maps. Each keypoint first picks
the plane class of the reference map that best matches the segmentation
pseudo-label, then the best-matching instance of that class among all maps.
The target of a keypoint is the mean of its vertex positions over the
selected polygons that contain it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ImageFrame, KeypointSet2D, as_coords
from .hull import Registry
from .raster import PlanarMap, build_planar_map, iou_counts, rasterize
from .visibility import (OCCLUSION_THRESHOLD, occlusion_from_depths, plane_depths,
                         resolve_depth_flip)

NOISE_STD = 0.01
N_CANDIDATES = 32


@dataclass
class PseudoTargetConfig:
    n_q: int = N_CANDIDATES
    noise_std: float = NOISE_STD
    seed: int = 0
    # "isolation": score a plane by its own footprint; "map": by its region
    # in the rendered map, i.e. after occlusion by nearer planes
    plane_context: str = "isolation"

    def __post_init__(self):
        if self.n_q < 0:
            raise ValueError("n_q must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.plane_context not in ("isolation", "map"):
            raise ValueError(f"unknown plane_context {self.plane_context!r}")


@dataclass
class CandidateSet:
    """Reference map first, then the perturbed maps.

    ``offsets[m]`` is the normalized-unit displacement of map ``m``'s
    keypoints from the estimate (all zero for the reference map) and
    ``footprints[m]`` holds one boolean coverage grid per plane.
    """
    maps: list[PlanarMap]
    offsets: list[np.ndarray]
    footprints: list[np.ndarray] = field(repr=False)
    regions: list[np.ndarray] = field(repr=False)

    @property
    def reference(self) -> PlanarMap:
        return self.maps[0]

    @property
    def perturbed(self) -> list[PlanarMap]:
        return self.maps[1:]

    @property
    def all_maps(self) -> list[PlanarMap]:
        return self.maps

    def __len__(self):
        return len(self.maps)


def _finish_map(pm: PlanarMap, width: int, height: int):
    depths = plane_depths(pm, width, height)
    visible = occlusion_from_depths(depths) <= OCCLUSION_THRESHOLD
    pm = pm.with_visibility(visible)
    footprints = np.isfinite(depths)
    # per-plane region inside the rendered map (nearest visible plane wins)
    rendered = rasterize(pm, width, height)
    regions = np.stack([rendered == p.class_id for p in pm.planes])
    return pm, footprints, regions


def build_candidates(Y, X, registry: Registry, category_id: str, cfg: PseudoTargetConfig,
                     chosen_sign: int, frame: ImageFrame) -> CandidateSet:
    """Reference map plus ``cfg.n_q`` maps with Gaussian x-y jitter.

    Depths come from ``chosen_sign * z`` and are never perturbed. Plane
    visibility is estimated on every map.
    """
    if chosen_sign not in (1, -1):
        raise ValueError("chosen_sign must be +1 or -1")
    Y = as_coords(Y, 2)
    z = chosen_sign * as_coords(X, 3)[:, 2]
    width, height = frame.width, frame.height
    rng = np.random.default_rng(cfg.seed)
    deltas = cfg.noise_std * rng.standard_normal((cfg.n_q, len(Y), 2))
    offsets = [np.zeros_like(Y)] + list(deltas)
    maps, footprints, regions = [], [], []
    for off in offsets:
        pm = build_planar_map(registry, category_id, Y + off, z, frame=frame)
        pm, fp, rg = _finish_map(pm, width, height)
        maps.append(pm)
        footprints.append(fp)
        regions.append(rg)
    return CandidateSet(maps, offsets, footprints, regions)


def _plane_region(cands: CandidateSet, m: int, j: int, context: str) -> np.ndarray:
    if not cands.maps[m].planes[j].visible:
        return np.zeros_like(cands.footprints[m][j])
    if context == "map":
        return cands.regions[m][j]
    return cands.footprints[m][j]


def _score(region: np.ndarray, class_id: int, L_E: np.ndarray) -> float | None:
    """IOU of a plane region against the pseudo-label's class; None if the union is empty."""
    grid = np.where(region, class_id, 0).astype(L_E.dtype)
    inter, union = iou_counts(grid, L_E, class_id, ignore_uncertain=True)
    return None if union == 0 else inter / union


def _plane_index(pm: PlanarMap, plane_class: int) -> int:
    for j, p in enumerate(pm.planes):
        if p.class_id == plane_class:
            return j
    raise KeyError(f"no plane of class {plane_class} in map")


def select_reference_plane(i: int, cands: CandidateSet, L_E: np.ndarray,
                           context: str = "isolation"):
    """Best-matching visible reference-map plane containing keypoint `i`.

    Returns ``(plane_class, iou)`` or ``None`` when no visible plane holds
    the keypoint or no candidate has a non-empty IOU denominator. Ties go
    to the lowest class id.
    """
    ref = cands.reference
    n_kp = len(cands.offsets[0])
    if not 0 <= i < n_kp:
        raise IndexError(f"keypoint index {i} out of range for {n_kp} keypoints")
    best = None
    order = sorted(range(len(ref.planes)), key=lambda j: ref.planes[j].class_id)
    for j in order:
        plane = ref.planes[j]
        if i not in plane.keypoints or not plane.visible:
            continue
        s = _score(_plane_region(cands, 0, j, context), plane.class_id, L_E)
        if s is not None and (best is None or s > best[1]):
            best = (plane.class_id, s)
    return best


def select_best_instance(plane_class: int, cands: CandidateSet, L_E: np.ndarray,
                         context: str = "isolation"):
    """Instance of `plane_class` across all maps with the highest IOU.

    Returns ``(map_index, iou)``. Map 0 is the reference map and wins ties,
    so the current estimate is kept unless a candidate does strictly better.
    """
    j = _plane_index(cands.reference, plane_class)
    best_m = 0
    best_s = _score(_plane_region(cands, 0, j, context), plane_class, L_E)
    best_s = -1.0 if best_s is None else best_s
    for m in range(1, len(cands)):
        if not cands.maps[m].planes[j].visible:
            continue
        s = _score(_plane_region(cands, m, j, context), plane_class, L_E)
        if s is not None and s > best_s:
            best_m, best_s = m, s
    return best_m, best_s


def generate_pseudo_targets(Y, X, L_E: np.ndarray, registry: Registry, category_id: str,
                            cfg: PseudoTargetConfig | None = None,
                            frame: ImageFrame | None = None,
                            chosen_sign: int | None = None,
                            return_provenance: bool = False):
    """2D keypoint targets (normalized units) for one unlabelled sample.

    `L_E` is the segmentation pseudo-label on the frame's grid. Without an
    explicit `chosen_sign` the depth direction is resolved against `L_E`.
    Keypoints with no usable plane keep their current estimate.
    """
    cfg = cfg or PseudoTargetConfig()
    height, width = L_E.shape
    if frame is None:
        frame = ImageFrame(width, height)
    elif (frame.height, frame.width) != L_E.shape:
        raise ValueError("pseudo-label does not match the frame size")
    if isinstance(Y, KeypointSet2D):
        coords, vis = Y.coords, Y.visibility
    else:
        coords = as_coords(Y, 2)
        vis = np.ones(len(coords), dtype=bool)
    cat = registry.category(category_id)
    if len(coords) != cat.n_keypoints:
        raise ValueError(f"expected {cat.n_keypoints} keypoints, got {len(coords)}")

    if chosen_sign is None:
        chosen_sign, _ = resolve_depth_flip(X, coords, registry, category_id, L_E, frame=frame)
    cands = build_candidates(coords, X, registry, category_id, cfg, chosen_sign, frame)

    ref_choice = {}
    selected = {}
    inst_cache = {}
    for i in range(cat.n_keypoints):
        ref = select_reference_plane(i, cands, L_E, cfg.plane_context)
        ref_choice[i] = ref
        if ref is None:
            selected[i] = None
            continue
        cls = ref[0]
        if cls not in inst_cache:
            inst_cache[cls] = select_best_instance(cls, cands, L_E, cfg.plane_context)
        selected[i] = (inst_cache[cls][0], cls)

    union = sorted({s for s in selected.values() if s is not None})
    targets = coords.copy()
    for i in range(cat.n_keypoints):
        if selected[i] is None:
            continue
        deltas = [cands.offsets[m][i] for m, cls in union
                  if i in cands.reference.planes[_plane_index(cands.reference, cls)].keypoints]
        targets[i] = coords[i] + np.mean(deltas, axis=0)
    out = KeypointSet2D(targets, vis.copy())
    if not return_provenance:
        return out

    names = {p.class_id: cat.planes[j].name for j, p in enumerate(cands.reference.planes)}
    prov = {
        "category": category_id,
        "depth_sign": int(chosen_sign),
        "n_q": cfg.n_q,
        "noise_std": cfg.noise_std,
        "seed": cfg.seed,
        "keypoints": [],
    }
    for i in range(cat.n_keypoints):
        ref = ref_choice[i]
        entry = {"index": i, "name": cat.keypoint_names[i],
                 "reference_plane": None, "reference_iou": None,
                 "map": None, "iou": None}
        if ref is not None:
            m, s = inst_cache[ref[0]]
            entry.update(reference_plane=names[ref[0]], reference_iou=ref[1],
                         map=int(m), iou=s)
        prov["keypoints"].append(entry)
    return out, prov
