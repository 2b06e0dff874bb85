import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import textbook_welch
from pphull.hull import load_builtin_registry
from pphull.raster import UNCERTAIN, PlanarMap, PlanePolygon2D
from pphull.simkit import OracleNoise, generate_dataset, oracle_predict, template_basis
from pphull.uncertainty import (apply_visibility_mask, mc_pseudo_label, plane_agreement_mask,
                                semantic_pseudo_label_stages, welch_t_pvalue, welch_t_pvalues)

REG = load_builtin_registry("shapes")
samples = arrays(float, st.integers(2, 12), elements=st.floats(-50, 50))


def test_zero_variance_rules():
    assert welch_t_pvalue([1] * 5, [1] * 5) == 1.0
    assert welch_t_pvalue([10] * 5, [0] * 7) == 0.0


def test_reference_pair():
    a = [2.1, 1.9, 2.0, 2.2, 1.8]
    b = [1.0, 1.2, 0.8, 1.1, 0.9]
    _, _, p = textbook_welch(a, b)
    assert welch_t_pvalue(a, b) == pytest.approx(p, abs=1e-9)
    assert p < 1e-5


def test_too_short():
    with pytest.raises(ValueError):
        welch_t_pvalue([1.0], [1.0, 2.0])


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((8, 3, 4))
    b = rng.standard_normal((6, 3, 4)) + 0.5
    p = welch_t_pvalues(a, b, axis=0)
    for idx in np.ndindex(3, 4):
        ref = welch_t_pvalue(a[(slice(None),) + idx], b[(slice(None),) + idx])
        assert p[idx] == pytest.approx(ref, abs=1e-14)


@given(samples, samples)
@settings(max_examples=100)
def test_welch_symmetric(a, b):
    assert welch_t_pvalue(a, b) == welch_t_pvalue(b, a)


@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
@settings(max_examples=100)
def test_welch_shift_invariant(seed, shift):
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 1, int(rng.integers(2, 30)))
    b = rng.normal(rng.normal(0, 2), rng.uniform(0.1, 3), int(rng.integers(2, 30)))
    assert welch_t_pvalue(a + shift, b + shift) == pytest.approx(welch_t_pvalue(a, b), abs=1e-12)


def _stack_with_winner(rng, runs=10, h=4, w=5, s=3, winner=1, margin=3.0):
    base = rng.standard_normal((h, w, s))
    base[..., winner] = base.max(axis=-1) + margin
    return np.repeat(base[None], runs, axis=0)


def test_identical_runs_give_winner():
    stack = _stack_with_winner(np.random.default_rng(1))
    assert np.all(mc_pseudo_label(stack) == 1)


def test_same_distribution_top_two_is_uncertain():
    rng = np.random.default_rng(2)
    stack = rng.standard_normal((50, 8, 8, 3))
    stack[..., 2] -= 20.0  # third class never competes
    label = mc_pseudo_label(stack)
    assert np.mean(label == UNCERTAIN) > 0.9


def test_dominant_class_by_ten_sigma():
    rng = np.random.default_rng(3)
    stack = rng.standard_normal((50, 2, 2, 2))
    stack[..., 0] += 10.0
    assert np.all(mc_pseudo_label(stack) == 0)
    _, _, p = textbook_welch(stack[:, 0, 0, 0], stack[:, 0, 0, 1])
    assert p < 1e-6


def test_argmax_tie_prefers_lower_class():
    stack = np.zeros((3, 1, 1, 4))
    stack[..., 2] = 1.0
    stack[..., 3] = 1.0
    label, argmax = mc_pseudo_label(stack, threshold=1.0, return_argmax=True)
    assert argmax[0, 0] == 2 and label[0, 0] == 2


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_threshold_extremes(seed):
    stack = np.random.default_rng(seed).standard_normal((5, 4, 4, 3))
    assert np.all(mc_pseudo_label(stack, threshold=0.0) == UNCERTAIN)
    assert not np.any(mc_pseudo_label(stack, threshold=1.0) == UNCERTAIN)


def _map(visible):
    planes = [PlanePolygon2D(c, [[0, 0], [1, 0], [1, 1]], [1, 1, 1], v)
              for c, v in zip((1, 2, 3), visible)]
    return PlanarMap(planes, "box")


def test_visibility_mask():
    label = np.zeros((6, 6), np.uint8)
    label.flat[:17] = 2
    label[5, 5] = 1
    assert np.array_equal(apply_visibility_mask(label, _map([True] * 3)), label)
    out = apply_visibility_mask(label, _map([True, False, True]))
    assert np.count_nonzero(out == UNCERTAIN) == 17
    assert out[5, 5] == 1
    assert np.array_equal(apply_visibility_mask(label, _map([True, True, False])), label)


def test_visibility_mask_rejects_foreign_class():
    pm = PlanarMap([PlanePolygon2D(9, [[0, 0], [1, 0], [1, 1]], [1, 1, 1])], "box")
    with pytest.raises(ValueError):
        apply_visibility_mask(np.zeros((2, 2), np.uint8), pm, REG)


def test_agreement_mask():
    label = np.zeros((4, 8), np.uint8)
    label[:, :4] = 1
    assert np.array_equal(plane_agreement_mask(label, label), label)

    shifted = np.zeros_like(label)
    shifted[:, 4:] = 1
    out = plane_agreement_mask(label, shifted)
    assert np.all(out[:, :4] == UNCERTAIN) and np.all(out[:, 4:] == 0)

    half = np.zeros_like(label)
    half[:, 2:6] = 1
    out = plane_agreement_mask(label, half)
    assert np.count_nonzero(out == UNCERTAIN) == 8
    assert np.all(out[:, 2:4] == 1)

    # background mismatches are only masked when the exemption is off
    assert np.count_nonzero(plane_agreement_mask(label, half, exempt_background=False)
                            == UNCERTAIN) == 16
    with pytest.raises(ValueError):
        plane_agreement_mask(label, label[:, :3])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_masks_only_add_uncertainty(seed):
    rng = np.random.default_rng(seed)
    label = rng.integers(0, 4, (6, 6)).astype(np.uint8)
    label[rng.random((6, 6)) < 0.2] = UNCERTAIN
    rendered = rng.integers(0, 4, (6, 6)).astype(np.uint8)
    pm = _map(rng.random(3) < 0.5)
    for out in (apply_visibility_mask(label, pm), plane_agreement_mask(label, rendered)):
        assert np.all(out[label == UNCERTAIN] == UNCERTAIN)
        changed = out != label
        assert np.all(out[changed] == UNCERTAIN)


@pytest.fixture(scope="module")
def scenes():
    noise = OracleNoise(seed=11)
    basis = template_basis(REG, seed=11)
    return generate_dataset(REG, 6, 0.0, basis, noise)


def test_noiseless_pipeline_recovers_mask(scenes):
    quiet = OracleNoise(kp_noise_std=0.0, depth_flip_prob=0.0, mc_jitter_std=0.0,
                        seg_noise_std=0.0, seed=11)
    for sample in scenes:
        Y, X, stack = oracle_predict(sample, quiet, registry=REG)
        st = semantic_pseudo_label_stages(stack, X, Y, REG, sample.category_id, sample.frame)
        assert st.sign == 1
        # the true mask is a painter render; visibility estimation hides a plane only if
        # more than half is covered, and such a plane has few pixels left in the mask
        hidden = [p.class_id for p in st.planar_map.planes if not p.visible]
        certain = st.label != UNCERTAIN
        assert np.array_equal(st.label[certain], sample.mask_true[certain])
        assert np.all(np.isin(sample.mask_true[~certain], hidden))


def test_pure_noise_is_uncertain(scenes):
    rng = np.random.default_rng(5)
    sample = scenes[0]
    stack = rng.standard_normal((50, 64, 64, REG.s)).astype(np.float32)
    st = semantic_pseudo_label_stages(stack, sample.X_true, sample.Y_true, REG,
                                      sample.category_id, sample.frame)
    fg = st.seg_estimate != 0
    assert np.mean(st.label[fg] == UNCERTAIN) >= 0.99


def test_flipped_depth_is_corrected(scenes):
    flip = OracleNoise(kp_noise_std=0.0, depth_flip_prob=1.0, mc_jitter_std=0.5, seed=11)
    for sample in scenes:
        Y, X, stack = oracle_predict(sample, flip, registry=REG)
        assert np.allclose(X.coords[:, 2], -sample.X_true.coords[:, 2])
        st = semantic_pseudo_label_stages(stack, X, Y, REG, sample.category_id, sample.frame)
        assert st.sign == -1
