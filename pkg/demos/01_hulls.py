"""
Piecewise planar hulls
======================

A hull is a list of keypoint cliques. Each clique is a plane and each
plane becomes one segmentation class.
"""

import numpy as np

from pphull import load_builtin_registry, selection_mask, validate_hull
from pphull.fileio import read_keypoints
from pphull.hull import builtin_template_path

# the shipped registry holds three categories sharing one class space
reg = load_builtin_registry("shapes")
print(f"k = {reg.k} keypoints, s = {reg.s} classes (0 is background)")
for cat in reg:
    names = [p.name for p in cat.planes]
    print(f"  {cat.id:8s} keypoints {cat.n_keypoints:2d}  classes {list(cat.class_ids)}  {names}")

# the selection vector picks one category's block out of all k keypoints
print("zeta(wedge) =", selection_mask(reg, "wedge").astype(int))

# validation checks that no two planes cut through each other
for cat in reg:
    tpl = read_keypoints(builtin_template_path(cat.id)).coords
    print(f"{cat.id}: valid = {validate_hull(cat, tpl).valid}")

# push one corner of the box through the opposite face
box = reg.category("box")
tpl = read_keypoints(builtin_template_path("box")).coords.copy()
tpl[4, 2] = -1.0
print("dented box:", validate_hull(box, tpl).to_dict())
