"""Shape-basis composition, rotations and orthographic projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROTATION_TOL = 1e-9
RANK_TOL = 1e-8


@dataclass
class KeypointSet2D:
    coords: np.ndarray
    visibility: np.ndarray | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        if self.visibility is None:
            self.visibility = np.ones(len(self.coords), dtype=bool)
        self.visibility = np.asarray(self.visibility, dtype=bool).reshape(-1)
        if len(self.visibility) != len(self.coords):
            raise ValueError("visibility length does not match keypoint count")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("keypoint coordinates must be finite")

    def __len__(self):
        return len(self.coords)


@dataclass
class KeypointSet3D:
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("keypoint coordinates must be finite")

    def __len__(self):
        return len(self.coords)

    @property
    def depth(self) -> np.ndarray:
        return self.coords[:, 2]


def as_coords(points, dim: int) -> np.ndarray:
    """Raw coordinate array from a keypoint set or array-like."""
    arr = np.asarray(getattr(points, "coords", points), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"expected an (n, {dim}) array, got shape {arr.shape}")
    return arr


@dataclass
class ShapeBasis:
    """d x 3k basis; row j holds keypoints as interleaved (x, y, z) triples."""
    B: np.ndarray

    def __post_init__(self):
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if self.B.shape[1] % 3:
            raise ValueError("basis width must be a multiple of 3")
        if np.linalg.matrix_rank(self.B, tol=RANK_TOL) < self.B.shape[0]:
            raise ValueError("basis rows are linearly dependent")

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def n_keypoints(self) -> int:
        return self.B.shape[1] // 3


@dataclass
class Rotation:
    R: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        if self.R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(self.R.T @ self.R, np.eye(3), rtol=0, atol=ROTATION_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(self.R) - 1.0) > ROTATION_TOL:
            raise ValueError("rotation must have determinant +1")

    @classmethod
    def about_axis(cls, axis, angle: float) -> "Rotation":
        """Rodrigues rotation by `angle` radians about `axis`."""
        a = np.asarray(axis, dtype=float)
        a = a / np.linalg.norm(a)
        K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
        R = np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K
        return cls(R)

    @classmethod
    def from_quaternion(cls, q) -> "Rotation":
        w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
        R = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])
        return cls(R)


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Uniform rotation from a normalized Gaussian quaternion."""
    return Rotation.from_quaternion(rng.standard_normal(4))


def compose_shape(alpha, basis: ShapeBasis) -> KeypointSet3D:
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if len(alpha) != basis.d:
        raise ValueError(f"expected {basis.d} coefficients, got {len(alpha)}")
    if not np.all(np.isfinite(alpha)):
        raise ValueError("coefficients must be finite")
    return KeypointSet3D((alpha @ basis.B).reshape(-1, 3))


def project(X, R: Rotation | np.ndarray) -> KeypointSet2D:
    """Orthographic projection: rotate into the camera frame, drop z."""
    X = as_coords(X, 3)
    Rm = R.R if isinstance(R, Rotation) else Rotation(R).R
    return KeypointSet2D((Rm @ X.T)[:2].T)


def normalize(Y: KeypointSet2D):
    """Center visible keypoints and scale them to unit RMS radius.

    Returns ``(normalized, centroid, scale)``; invisible points get the same
    transform. The original is ``normalized.coords * scale + centroid``.
    """
    vis = Y.visibility
    if not vis.any():
        raise ValueError("normalize needs at least one visible keypoint")
    pts = Y.coords[vis]
    centroid = pts.mean(axis=0)
    scale = float(np.sqrt(np.mean(np.sum((pts - centroid) ** 2, axis=1))))
    if scale == 0.0:
        scale = 1.0
    out = KeypointSet2D((Y.coords - centroid) / scale, vis.copy())
    return out, centroid, scale


def apply_selection(Y_full, zeta) -> KeypointSet2D:
    """Rows of the global keypoint matrix picked out by a selection mask.

    An all-zero mask gives an empty set; check ``len(result) == 0``.
    """
    if isinstance(Y_full, KeypointSet2D):
        coords, vis = Y_full.coords, Y_full.visibility
    else:
        coords = as_coords(Y_full, 2)
        vis = np.ones(len(coords), dtype=bool)
    zeta = np.asarray(zeta, dtype=bool).reshape(-1)
    if len(zeta) != len(coords):
        raise ValueError(
            f"selection mask has {len(zeta)} entries for {len(coords)} keypoints")
    return KeypointSet2D(coords[zeta], vis[zeta])


@dataclass(frozen=True)
class ImageFrame:
    """Maps normalized keypoint units onto a ``width x height`` pixel grid.

    The image center is the origin and ``half_extent`` normalized units reach
    the nearer image border. Pixel (row r, col c) has its center at
    ``(c + 0.5, r + 0.5)``; x runs along columns, y along rows.
    """
    width: int
    height: int
    half_extent: float = 1.0

    @property
    def scale(self) -> float:
        return min(self.width, self.height) / (2.0 * self.half_extent)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def to_pixels(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        center = np.array([self.width / 2.0, self.height / 2.0])
        return xy * self.scale + center

    def to_normalized(self, px) -> np.ndarray:
        px = np.asarray(px, dtype=float)
        center = np.array([self.width / 2.0, self.height / 2.0])
        return (px - center) / self.scale
