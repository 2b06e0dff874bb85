"""Readers and writers for keypoint JSON, PGM masks and PPHL logits stacks."""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .geometry import ImageFrame, KeypointSet2D, KeypointSet3D
from .raster import MASK_DTYPE

PPHL_MAGIC = b"PPHL"


# ---------------------------------------------------------------- keypoints

@dataclass
class KeypointFile:
    category: str
    coords: np.ndarray
    visibility: np.ndarray
    pixels: bool = False
    image_size: tuple[int, int] | None = None

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def normalized(self, frame: ImageFrame | None = None) -> np.ndarray:
        """x-y(-z) coordinates in normalized units.

        Pixel files are mapped back through `frame`, or through a frame of
        the stored image size. A z column is divided by the same scale.
        """
        if not self.pixels:
            return self.coords.copy()
        if frame is None:
            if self.image_size is None:
                raise ValueError("pixel keypoints need an image_size")
            frame = ImageFrame(*self.image_size)
        out = self.coords.copy()
        out[:, :2] = frame.to_normalized(out[:, :2])
        if self.dim == 3:
            out[:, 2] = out[:, 2] / frame.scale
        return out

    def as_2d(self) -> KeypointSet2D:
        return KeypointSet2D(self.coords[:, :2], self.visibility)

    def as_3d(self) -> KeypointSet3D:
        if self.dim != 3:
            raise ValueError("keypoint file has no z column")
        return KeypointSet3D(self.coords)


def keypoints_to_dict(category: str, coords, visibility=None, pixels: bool = False,
                      image_size=None) -> dict:
    coords = np.asarray(coords, dtype=float)
    if visibility is None:
        visibility = np.ones(len(coords), dtype=bool)
    out = {
        "category": category,
        "coords": [[float(v) for v in row] for row in coords],
        "visibility": [bool(v) for v in visibility],
    }
    if pixels:
        out["pixels"] = True
        out["image_size"] = [int(v) for v in image_size]
    return out


def read_keypoints(path: str | os.PathLike) -> KeypointFile:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        coords = np.asarray(data["coords"], dtype=float)
        category = data["category"]
    except KeyError as exc:
        raise ValueError(f"keypoint file {path}: missing field {exc}") from exc
    if coords.ndim != 2 or coords.shape[1] not in (2, 3):
        raise ValueError(f"keypoint file {path}: coords must be n x 2 or n x 3")
    vis = np.asarray(data.get("visibility", [True] * len(coords)), dtype=bool)
    if len(vis) != len(coords):
        raise ValueError(f"keypoint file {path}: visibility length mismatch")
    pixels = bool(data.get("pixels", False))
    size = data.get("image_size")
    if pixels and size is None:
        raise ValueError(f"keypoint file {path}: 'pixels' requires 'image_size'")
    return KeypointFile(category, coords, vis, pixels, tuple(size) if size else None)


def write_keypoints(path: str | os.PathLike, category: str, coords, visibility=None,
                    **kwargs) -> None:
    data = keypoints_to_dict(category, coords, visibility, **kwargs)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------- PGM masks

def encode_pgm(mask: np.ndarray) -> bytes:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError("mask must be 2D")
    if mask.min(initial=0) < 0 or mask.max(initial=0) > 255:
        raise ValueError("mask values must fit in one byte")
    h, w = mask.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + mask.astype(MASK_DTYPE).tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM (P5) file")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError("only maxval 255 is supported")
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise ValueError("truncated PGM raster")
    return np.frombuffer(raster, dtype=MASK_DTYPE).reshape(h, w).copy()


def write_pgm(path: str | os.PathLike, mask: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(mask))


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


# ---------------------------------------------------------------- logits stacks

def encode_pphl(stack: np.ndarray) -> bytes:
    stack = np.asarray(stack)
    if stack.ndim != 4:
        raise ValueError("logits stack must be 4D (runs, H, W, classes)")
    header = PPHL_MAGIC + struct.pack("<4I", *stack.shape)
    return header + np.ascontiguousarray(stack, dtype="<f4").tobytes()


def decode_pphl(data: bytes) -> np.ndarray:
    if data[:4] != PPHL_MAGIC:
        raise ValueError("bad PPHL magic")
    n, h, w, s = struct.unpack("<4I", data[4:20])
    count = n * h * w * s
    body = data[20:20 + 4 * count]
    if len(body) != 4 * count:
        raise ValueError("truncated PPHL payload")
    return np.frombuffer(body, dtype="<f4").reshape(n, h, w, s).astype(np.float32)


def write_pphl(path: str | os.PathLike, stack: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pphl(stack))


def read_pphl(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pphl(fh.read())
