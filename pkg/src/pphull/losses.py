"""Training losses as plain evaluable functions, and 3D evaluation metrics."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .geometry import KeypointSet2D, as_coords
from .raster import UNCERTAIN

HUBER_DELTA = 1.0


def loss_2d(target, pred) -> float:
    """L1 distance between target and predicted 2D keypoints over visible targets."""
    if isinstance(target, KeypointSet2D):
        t, vis = target.coords, target.visibility
    else:
        t = as_coords(target, 2)
        vis = np.ones(len(t), dtype=bool)
    p = as_coords(pred, 2)
    if p.shape != t.shape:
        raise ValueError(f"keypoint count mismatch: {t.shape} vs {p.shape}")
    return float(np.abs(t[vis] - p[vis]).sum())


class SegLoss(NamedTuple):
    value: float
    n_certain: int

    @property
    def empty(self) -> bool:
        return self.n_certain == 0


def loss_seg(target: np.ndarray, logits) -> SegLoss:
    """Pixelwise cross-entropy averaged over the certain pixels of `target`.

    With no certain pixel the value is 0 and ``empty`` is set.
    """
    logits = np.asarray(logits, dtype=float)
    if logits.shape[:2] != target.shape:
        raise ValueError(f"logits {logits.shape} do not match target {target.shape}")
    certain = target != UNCERTAIN
    n = int(np.count_nonzero(certain))
    if n == 0:
        return SegLoss(0.0, 0)
    z = logits[certain]
    cls = target[certain].astype(int)
    if cls.max() >= z.shape[1]:
        raise ValueError("target class outside the logits' class range")
    zmax = z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
    nll = log_norm - z[np.arange(n), cls]
    return SegLoss(float(nll.mean()), n)


def huber(r, delta: float = HUBER_DELTA) -> np.ndarray:
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))


def loss_reproj(Y_hat, X_hat, delta: float = HUBER_DELTA) -> float:
    """Summed elementwise Huber loss between 2D keypoints and the orthographic projection of 3D ones."""
    y = as_coords(Y_hat, 2)
    x = as_coords(X_hat, 3)
    if len(y) != len(x):
        raise ValueError(f"keypoint count mismatch: {len(y)} vs {len(x)}")
    return float(huber(y - x[:, :2], delta).sum())


DEFAULT_WEIGHTS = {"2d": 1.0, "seg": 1.0, "reproj": 1.0}


def total_loss(terms: dict, weights: dict | None = None) -> float:
    """Weighted sum of named loss terms; unspecified weights are 1."""
    w = dict(DEFAULT_WEIGHTS)
    w.update(weights or {})
    total = 0.0
    for name, value in terms.items():
        total += w.get(name, 1.0) * float(getattr(value, "value", value))
    return total


def mpjpe(X, Y) -> float:
    X, Y = as_coords(X, 3), as_coords(Y, 3)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return float(np.linalg.norm(X - Y, axis=1).mean())


def _pairwise(P):
    return np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1)


def stress(X, Y) -> float:
    """Sum over pairs i<j of the distance discrepancy, divided by K(K-1)."""
    X, Y = as_coords(X, 3), as_coords(Y, 3)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    K = len(X)
    if K < 2:
        return 0.0
    iu = np.triu_indices(K, k=1)
    diff = np.abs(_pairwise(X)[iu] - _pairwise(Y)[iu])
    return float(diff.sum() / (K * (K - 1)))


def mean_l2_2d(pred, target) -> float:
    """Mean per-keypoint Euclidean distance in 2D."""
    p = np.asarray(getattr(pred, "coords", pred), dtype=float)[:, :2]
    t = np.asarray(getattr(target, "coords", target), dtype=float)[:, :2]
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return float(np.linalg.norm(p - t, axis=1).mean())
