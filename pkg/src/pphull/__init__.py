"""Piecewise planar hull pseudo-labels for semi-supervised 3D keypoint learning."""
from .geometry import (ImageFrame, KeypointSet2D, KeypointSet3D, Rotation, ShapeBasis,
                       apply_selection, compose_shape, normalize, project, random_rotation)
from .hull import (Category, Plane, Registry, ValidationReport, load_builtin_registry,
                   load_registry, save_registry, selection_mask, validate_hull)
from .losses import loss_2d, loss_reproj, loss_seg, mpjpe, stress, total_loss
from .pseudo2d import (PseudoTargetConfig, build_candidates, generate_pseudo_targets,
                       select_best_instance, select_reference_plane)
from .raster import (UNCERTAIN, PlanarMap, PlanePolygon2D, build_planar_map, iou,
                     rasterize)
from .uncertainty import (apply_visibility_mask, generate_semantic_pseudo_label,
                          mc_pseudo_label, plane_agreement_mask, welch_t_pvalue)
from .visibility import (depth_flip_scores, estimate_visibility, occlusion_fractions,
                         resolve_depth_flip)

__version__ = "0.1.0"
