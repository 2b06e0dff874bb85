"""
Rendering planes and reasoning about occlusion
==============================================

Planes are fan-triangulated and drawn nearest-first per pixel. A plane
counts as occluded when more than half of its footprint lies behind others.
"""

import numpy as np

from _ascii import show
from pphull import ImageFrame, Rotation, build_planar_map, load_builtin_registry, rasterize
from pphull.fileio import read_keypoints
from pphull.hull import builtin_template_path
from pphull.visibility import estimate_visibility, occlusion_fractions, resolve_depth_flip

reg = load_builtin_registry("shapes")
# a toy car, centered and turned so several sides show
X = read_keypoints(builtin_template_path("toy_car")).coords
X = X - X.mean(axis=0)
R = Rotation.about_axis([1, 0, 0], np.pi - 0.6).R @ Rotation.about_axis([0, 0, 1], 0.8).R
X = X @ R.T

# leave a margin around the projected shape
frame = ImageFrame(48, 48, half_extent=1.2 * np.abs(X[:, :2]).max())

pm = build_planar_map(reg, "toy_car", X[:, :2], X[:, 2], frame=frame)
mask = rasterize(pm, 48, 48)
show(mask)

# hidden fraction per plane, and the visible/occluded verdict
names = [p.name for p in reg.category("toy_car").planes]
frac = occlusion_fractions(pm, 48, 48)
vis = estimate_visibility(pm, 48, 48)
for name, f, v in zip(names, frac, vis):
    print(f"{name:12s} hidden {f:5.1%}  {'visible' if v else 'occluded'}")

# orthographic images cannot tell z from -z; agreement with a segmentation can
sign, _ = resolve_depth_flip(X * [1, 1, -1], X[:, :2], reg, "toy_car", mask, frame=frame)
print("depth sign chosen for the mirrored shape:", sign)
