"""
Segmentation pseudo-labels with an uncertain class
==================================================

Monte-Carlo dropout runs give a stack of logits. Pixels whose top two
classes are not separated by Welch's t-test become uncertain, then the
occluded planes and plane disagreements are masked too.
"""

import numpy as np

from _ascii import show
from pphull import load_builtin_registry
from pphull.raster import UNCERTAIN
from pphull.simkit import OracleNoise, generate_dataset, oracle_predict, template_basis
from pphull.uncertainty import semantic_pseudo_label_stages, welch_t_pvalue

print("p(identical) =", welch_t_pvalue([1, 1, 1], [1, 1, 1]))
print("p(well separated) =", welch_t_pvalue([2.1, 1.9, 2.0, 2.2, 1.8], [1.0, 1.2, 0.8, 1.1, 0.9]))

reg = load_builtin_registry("shapes")
noise = OracleNoise(seed=3)
sample = generate_dataset(reg, 1, 0.0, template_basis(reg, seed=3), noise)[0]
Y, X, stack = oracle_predict(sample, noise, registry=reg)
print("logits stack", stack.shape, "category", sample.category_id)

st = semantic_pseudo_label_stages(stack, X, Y, reg, sample.category_id, sample.frame)
for name, m in [("MC test", st.mc_label), ("+ visibility", st.visibility_label),
                ("+ agreement", st.label)]:
    print(f"{name:14s} uncertain {np.mean(m == UNCERTAIN):6.1%}")
print("depth sign:", st.sign)
show(st.label)
