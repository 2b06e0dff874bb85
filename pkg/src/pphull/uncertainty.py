"""Segmentation pseudo-labels from Monte-Carlo dropout logits.

Three mechanisms mark pixels as :data:`~pphull.raster.UNCERTAIN`: a per-pixel
Welch t-test between the two most probable classes across dropout runs,
occluded planes, and disagreement between the rendered planar map and the
segmentation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .geometry import ImageFrame
from .hull import Registry
from .raster import UNCERTAIN, MASK_DTYPE, PlanarMap, rasterize
from .visibility import resolve_depth_flip

P_THRESHOLD = 0.05
MC_RUNS = 50
DROPOUT_P = 0.2
ZERO_VAR = 1e-18
EQUAL_MEANS = 1e-12


def welch_t_pvalues(a, b, axis: int = 0) -> np.ndarray:
    """Two-tailed Welch t-test p-values, vectorized along `axis`.

    Degrees of freedom follow Welch-Satterthwaite and the Student-t tail
    comes from the regularized incomplete beta function. When both sample
    variances vanish the p-value is 1 for equal means and 0 otherwise.
    """
    a = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    b = np.moveaxis(np.asarray(b, dtype=float), axis, 0)
    na, nb = a.shape[0], b.shape[0]
    if na < 2 or nb < 2:
        raise ValueError("Welch's t-test needs at least two samples per group")
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    va, vb = a.var(axis=0, ddof=1), b.var(axis=0, ddof=1)
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    degenerate = (va < ZERO_VAR) & (vb < ZERO_VAR)
    with np.errstate(divide="ignore", invalid="ignore"):
        t2 = (ma - mb) ** 2 / se2
        df = se2 ** 2 / (qa ** 2 / (na - 1) + qb ** 2 / (nb - 1))
        p = betainc(0.5 * df, 0.5, df / (df + t2))
    fallback = np.where(np.abs(ma - mb) <= EQUAL_MEANS, 1.0, 0.0)
    p = np.where(degenerate, fallback, p)
    return np.clip(p, 0.0, 1.0)


def welch_t_pvalue(a, b) -> float:
    return float(welch_t_pvalues(np.asarray(a, float).reshape(-1),
                                 np.asarray(b, float).reshape(-1)))


def check_stack(stack) -> np.ndarray:
    stack = np.asarray(stack)
    if stack.ndim != 4:
        raise ValueError(f"logits stack must be (runs, H, W, classes), got {stack.shape}")
    if stack.shape[0] < 2:
        raise ValueError("logits stack needs at least two Monte-Carlo runs")
    if stack.shape[3] < 2:
        raise ValueError("logits stack needs at least two classes")
    if not np.all(np.isfinite(stack)):
        raise ValueError("logits stack has non-finite entries")
    return stack


def mean_softmax(stack) -> np.ndarray:
    """Softmax per run, averaged over runs: ``(H, W, s)``."""
    z = np.asarray(stack, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z.mean(axis=0)


def top_two_classes(stack):
    """Most and second most probable class per pixel (ties go to the lower index)."""
    probs = mean_softmax(stack)
    best = np.argmax(probs, axis=-1)
    np.put_along_axis(probs, best[..., None], -np.inf, axis=-1)
    second = np.argmax(probs, axis=-1)
    return best, second


def mc_pseudo_label(stack, threshold: float = P_THRESHOLD, return_argmax: bool = False):
    """Label each pixel with its MC-mean argmax class, or UNCERTAIN.

    A pixel stays certain when the Welch test on the raw logits of its top
    two classes gives ``p < threshold``. A threshold of 1 or more disables
    the test. With ``return_argmax`` the hardened argmax is returned too.
    """
    stack = check_stack(stack)
    best, second = top_two_classes(stack)
    if stack.shape[3] > UNCERTAIN:
        raise ValueError("at most 255 classes fit in a mask")
    v_best = np.take_along_axis(stack, best[None, ..., None], axis=-1)[..., 0]
    v_second = np.take_along_axis(stack, second[None, ..., None], axis=-1)[..., 0]
    argmax = best.astype(MASK_DTYPE)
    label = argmax.copy()
    if threshold < 1.0:
        p = welch_t_pvalues(v_best, v_second, axis=0)
        label[~(p < threshold)] = UNCERTAIN
    return (label, argmax) if return_argmax else label


def apply_visibility_mask(label: np.ndarray, planar_map: PlanarMap,
                          registry: Registry | None = None) -> np.ndarray:
    """Set pixels of occluded planes' classes to UNCERTAIN.

    With a registry, every plane of the map must belong to the map's category.
    """
    if registry is not None:
        allowed = set(registry.category(planar_map.category_id).class_ids)
        foreign = [c for c in planar_map.class_ids if c not in allowed]
        if foreign:
            raise ValueError(
                f"classes {foreign} do not belong to category {planar_map.category_id!r}")
    out = label.copy()
    hidden = [p.class_id for p in planar_map.planes if not p.visible]
    if hidden:
        out[np.isin(label, hidden)] = UNCERTAIN
    return out


def plane_agreement_mask(label: np.ndarray, rendered: np.ndarray,
                         exempt_background: bool = True) -> np.ndarray:
    """Set pixels whose label disagrees with the rendered planes to UNCERTAIN."""
    if label.shape != rendered.shape:
        raise ValueError(f"mask shapes differ: {label.shape} vs {rendered.shape}")
    disagree = (label != rendered) & (label != UNCERTAIN)
    if exempt_background:
        disagree &= label != 0
    out = label.copy()
    out[disagree] = UNCERTAIN
    return out


@dataclass
class SemanticStages:
    label: np.ndarray
    sign: int
    planar_map: PlanarMap
    mc_label: np.ndarray
    seg_estimate: np.ndarray
    visibility_label: np.ndarray
    rendered: np.ndarray


def semantic_pseudo_label_stages(stack, X, Y, registry: Registry, category_id: str,
                                 frame: ImageFrame | None = None,
                                 threshold: float = P_THRESHOLD,
                                 agreement: str = "miou",
                                 exempt_background: bool = True) -> SemanticStages:
    """Full pseudo-label pipeline, keeping every intermediate mask."""
    mc_label, seg_estimate = mc_pseudo_label(stack, threshold, return_argmax=True)
    height, width = mc_label.shape
    sign, pm = resolve_depth_flip(X, Y, registry, category_id, seg_estimate,
                                  frame=frame, method=agreement)
    vis_label = apply_visibility_mask(mc_label, pm, registry)
    rendered = rasterize(pm, width, height)
    final = plane_agreement_mask(vis_label, rendered, exempt_background)
    return SemanticStages(final, sign, pm, mc_label, seg_estimate, vis_label, rendered)


def generate_semantic_pseudo_label(stack, X, Y, registry: Registry, category_id: str,
                                   frame: ImageFrame | None = None, **kwargs):
    """Pseudo-label and chosen depth sign for one sample: ``(label, sign)``."""
    st = semantic_pseudo_label_stages(stack, X, Y, registry, category_id, frame, **kwargs)
    return st.label, st.sign
