"""Synthetic scenes and a stand-in for the network, for desk-scale recursion runs.

The oracle corrupts ground truth with fixed per-sample noise realizations
that shrink as an ``improvement`` ratio grows. Training is not simulated:
between recursions the improvement is set from how much closer the
pseudo-targets got to the truth than the first predictions were.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .fileio import read_keypoints
from .geometry import (ImageFrame, KeypointSet2D, KeypointSet3D, Rotation, ShapeBasis,
                       compose_shape, normalize, random_rotation)
from .hull import Registry, builtin_template_path
from .losses import mean_l2_2d, mpjpe
from .pseudo2d import PseudoTargetConfig, generate_pseudo_targets
from .raster import UNCERTAIN, build_planar_map, mean_iou, rasterize
from .uncertainty import MC_RUNS, P_THRESHOLD, generate_semantic_pseudo_label

GRID = 64
HALF_EXTENT = 2.0


@dataclass
class OracleNoise:
    kp_noise_std: float = 0.05
    depth_flip_prob: float = 0.5
    logit_snr: float = 4.0
    mc_jitter_std: float = 1.0
    seg_noise_std: float = 1.0
    n_runs: int = MC_RUNS
    seed: int = 0

    def __post_init__(self):
        for name in ("kp_noise_std", "logit_snr", "mc_jitter_std", "seg_noise_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.depth_flip_prob <= 1.0:
            raise ValueError("depth_flip_prob must lie in [0, 1]")
        if self.n_runs < 2:
            raise ValueError("n_runs must be >= 2")


@dataclass
class SceneSample:
    index: int
    category_id: str
    alpha: np.ndarray
    rotation: Rotation
    Y_true: KeypointSet2D
    X_true: KeypointSet3D
    mask_true: np.ndarray
    labeled: bool
    frame: ImageFrame


def load_templates(registry: Registry, paths: dict | None = None) -> dict:
    """Canonical 3D shape per category, from `paths` or the shipped templates."""
    out = {}
    for cat in registry:
        path = (paths or {}).get(cat.id) or builtin_template_path(cat.id)
        kf = read_keypoints(path)
        if kf.coords.shape != (cat.n_keypoints, 3):
            raise ValueError(f"template for {cat.id!r} has shape {kf.coords.shape}")
        out[cat.id] = kf.coords
    return out


def template_basis(registry: Registry, templates: dict | None = None, n_deform: int = 3,
                   deform_scale: float = 0.1, seed: int = 0) -> ShapeBasis:
    """Basis whose first row stacks the (centered) category templates.

    The remaining rows are small random deformations of every keypoint.
    """
    templates = templates or load_templates(registry)
    mean = np.concatenate([
        (templates[c.id] - templates[c.id].mean(axis=0)).reshape(-1) for c in registry])
    rng = np.random.default_rng([seed, 7])
    deform = deform_scale * rng.standard_normal((n_deform, len(mean)))
    return ShapeBasis(np.vstack([mean, deform]))


def generate_dataset(registry: Registry, n_samples: int, label_fraction: float,
                     basis: ShapeBasis, noise: OracleNoise, grid: int = GRID,
                     half_extent: float = HALF_EXTENT) -> list[SceneSample]:
    """Ground-truth scenes cycling through the registry's categories.

    The first basis coefficient is pinned to 1 (the template row) and the
    others are standard normal; rotations are uniform over SO(3). The first
    ``ceil(label_fraction * n_samples)`` samples are labelled.
    """
    if not 0.0 <= label_fraction <= 1.0:
        raise ValueError("label_fraction must lie in [0, 1]")
    if basis.n_keypoints != registry.total_keypoints:
        raise ValueError("basis does not cover the registry's keypoints")
    rng = np.random.default_rng([noise.seed, 0])
    frame = ImageFrame(grid, grid, half_extent)
    n_labeled = math.ceil(label_fraction * n_samples)
    cats = registry.categories
    out = []
    for i in range(n_samples):
        cat = cats[i % len(cats)]
        alpha = np.concatenate([[1.0], rng.standard_normal(basis.d - 1)])
        R = random_rotation(rng)
        full = compose_shape(alpha, basis).coords
        Xc = full[cat.keypoint_offset:cat.keypoint_offset + cat.n_keypoints] @ R.R.T
        Y, centroid, scale = normalize(KeypointSet2D(Xc[:, :2]))
        X = np.empty_like(Xc)
        X[:, :2] = Y.coords
        X[:, 2] = (Xc[:, 2] - Xc[:, 2].mean()) / scale
        pm = build_planar_map(registry, cat.id, Y.coords, X[:, 2], frame=frame)
        mask = rasterize(pm, grid, grid)
        out.append(SceneSample(i, cat.id, alpha, R, Y, KeypointSet3D(X), mask,
                               i < n_labeled, frame))
    return out


def oracle_predict(sample: SceneSample, noise: OracleNoise, improvement: float = 0.0,
                   draw: int = 0, registry: Registry | None = None):
    """Corrupted "network output" ``(Y_hat, X_hat, logits_stack)`` for a sample.

    The noise realization depends only on ``(noise.seed, sample.index,
    draw)``, so raising `improvement` scales the same errors down. With a
    registry the stack has one channel per registry class; otherwise the
    channel count is one more than the largest class in the mask.
    """
    if not 0.0 <= improvement <= 1.0:
        raise ValueError("improvement must lie in [0, 1]")
    rng = np.random.default_rng([noise.seed, 1, sample.index, draw])
    k = len(sample.Y_true)
    amp = (1.0 - improvement) * noise.kp_noise_std
    eps_y = rng.standard_normal((k, 2))
    eps_x = rng.standard_normal((k, 3))
    flip = rng.random() < noise.depth_flip_prob
    Y_hat = KeypointSet2D(sample.Y_true.coords + amp * eps_y, sample.Y_true.visibility.copy())
    X = sample.X_true.coords.copy()
    if flip:
        X[:, 2] = -X[:, 2]
    X_hat = KeypointSet3D(X + amp * eps_x)

    s = registry.total_classes if registry is not None else int(sample.mask_true.max()) + 1
    s = max(s, 2)
    h, w = sample.mask_true.shape
    bias = rng.standard_normal((h, w, s), dtype=np.float32)
    jitter = rng.standard_normal((noise.n_runs, h, w, s), dtype=np.float32)
    mean = ((1.0 - improvement) * noise.seg_noise_std) * bias
    np.put_along_axis(mean, sample.mask_true.astype(np.intp)[..., None],
                      np.take_along_axis(mean, sample.mask_true.astype(np.intp)[..., None], -1)
                      + np.float32(noise.logit_snr), axis=-1)
    jitter *= np.float32(noise.mc_jitter_std)
    jitter += mean[None]
    return Y_hat, X_hat, jitter


@dataclass
class RecursionReport:
    mean_2d_err: list[float] = field(default_factory=list)
    mpjpe: list[float] = field(default_factory=list)
    miou: list[float] = field(default_factory=list)
    uncertain_frac: list[float] = field(default_factory=list)
    pseudo_target_err: list[float] = field(default_factory=list)
    improvement: list[float] = field(default_factory=list)

    CSV_COLUMNS = ("recursion", "mean_2d_err", "mpjpe", "miou", "uncertain_frac")

    def __len__(self):
        return len(self.mean_2d_err)

    def rows(self):
        for t in range(len(self)):
            yield {"recursion": t, "mean_2d_err": self.mean_2d_err[t], "mpjpe": self.mpjpe[t],
                   "miou": self.miou[t], "uncertain_frac": self.uncertain_frac[t]}

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                                 for k, v in row.items()})

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items()}
        d["recursions"] = len(self)
        return d

    def to_json(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _process_sample(args):
    sample, registry, noise, improvement, cfg, threshold = args
    Y_hat, X_hat, stack = oracle_predict(sample, noise, improvement, registry=registry)
    L_E, sign = generate_semantic_pseudo_label(stack, X_hat, Y_hat, registry,
                                               sample.category_id, frame=sample.frame,
                                               threshold=threshold)
    sample_cfg = PseudoTargetConfig(cfg.n_q, cfg.noise_std, cfg.seed + 7919 * sample.index,
                                    cfg.plane_context)
    targets = generate_pseudo_targets(Y_hat, X_hat, L_E, registry, sample.category_id,
                                      sample_cfg, sample.frame, chosen_sign=sign)
    X_oriented = X_hat.coords.copy()
    X_oriented[:, 2] *= sign
    classes = registry.category(sample.category_id).class_ids
    return (
        mean_l2_2d(Y_hat, sample.Y_true),
        mean_l2_2d(targets, sample.Y_true),
        mpjpe(X_oriented, sample.X_true),
        mean_iou(L_E, sample.mask_true, classes, ignore_uncertain=False),
        float(np.mean(L_E == UNCERTAIN)),
    )


def run_recursion(dataset: list[SceneSample], registry: Registry, noise: OracleNoise,
                  n_recursions: int, cfg: PseudoTargetConfig | None = None,
                  threshold: float = P_THRESHOLD, jobs: int = 1) -> RecursionReport:
    """Regenerate pseudo-labels and pseudo-targets over several recursions.

    Metrics are averaged over the unlabelled samples. The oracle's
    improvement for recursion t+1 is ``clamp(1 - pt_err_t / pred_err_0)``
    where ``pt_err_t`` is the pseudo-target error at recursion t and
    ``pred_err_0`` the prediction error at the first recursion.
    """
    if n_recursions < 1:
        raise ValueError("n_recursions must be >= 1")
    cfg = cfg or PseudoTargetConfig()
    unlabeled = [s for s in dataset if not s.labeled]
    report = RecursionReport()
    improvement = 0.0
    base_err = None
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 and unlabeled else None
    try:
        for _ in range(n_recursions):
            args = [(s, registry, noise, improvement, cfg, threshold) for s in unlabeled]
            if pool is not None:
                results = list(pool.map(_process_sample, args))
            else:
                results = [_process_sample(a) for a in args]
            if results:
                cols = np.array(results, dtype=float)
                pred_err, pt_err, mp, mi, unc = cols.mean(axis=0)
            else:
                pred_err = pt_err = mp = unc = 0.0
                mi = 1.0
            report.mean_2d_err.append(float(pred_err))
            report.pseudo_target_err.append(float(pt_err))
            report.mpjpe.append(float(mp))
            report.miou.append(float(mi))
            report.uncertain_frac.append(float(unc))
            report.improvement.append(improvement)
            if base_err is None:
                base_err = pred_err
            improvement = 1.0 if base_err == 0 else float(np.clip(1.0 - pt_err / base_err, 0.0, 1.0))
    finally:
        if pool is not None:
            pool.shutdown()
    return report


@dataclass
class SimulationConfig:
    hull: str = "shapes"
    n_samples: int = 200
    label_fraction: float = 0.1
    n_recursions: int = 3
    grid: int = GRID
    half_extent: float = HALF_EXTENT
    n_deform: int = 3
    deform_scale: float = 0.1
    p_threshold: float = P_THRESHOLD
    jobs: int = 1
    noise: OracleNoise = field(default_factory=OracleNoise)
    pseudo: PseudoTargetConfig = field(default_factory=PseudoTargetConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        data = dict(data)
        noise = OracleNoise(**data.pop("noise", {}))
        pseudo = PseudoTargetConfig(**data.pop("pseudo", {}))
        return cls(noise=noise, pseudo=pseudo, **data)

    def to_dict(self) -> dict:
        return asdict(self)


def simulate(config: SimulationConfig) -> RecursionReport:
    """Build the registry, basis and dataset from `config` and run the recursions."""
    from .hull import builtin_hull_path, load_registry

    path = config.hull if os.path.exists(config.hull) else builtin_hull_path(config.hull)
    registry = load_registry(path)
    basis = template_basis(registry, n_deform=config.n_deform,
                           deform_scale=config.deform_scale, seed=config.noise.seed)
    data = generate_dataset(registry, config.n_samples, config.label_fraction, basis,
                            config.noise, config.grid, config.half_extent)
    return run_recursion(data, registry, config.noise, config.n_recursions, config.pseudo,
                         config.p_threshold, config.jobs)
