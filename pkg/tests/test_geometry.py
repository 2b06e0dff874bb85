import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pphull.geometry import (ImageFrame, KeypointSet2D, Rotation, ShapeBasis, apply_selection,
                             compose_shape, normalize, project, random_rotation)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
rotations = st.integers(0, 2**32 - 1).map(lambda s: random_rotation(np.random.default_rng(s)))


def test_compose_identity_and_zero():
    X0 = np.arange(12.0).reshape(4, 3)
    basis = ShapeBasis(X0.reshape(1, -1))
    assert np.array_equal(compose_shape([1.0], basis).coords, X0)
    assert np.array_equal(compose_shape([0.0], basis).coords, np.zeros((4, 3)))


def test_compose_sum_of_rows():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((2, 15))
    X = compose_shape([1.0, 1.0], ShapeBasis(B)).coords
    expected = np.array([[B[0, 3 * j + c] + B[1, 3 * j + c] for c in range(3)] for j in range(5)])
    assert np.allclose(X, expected, atol=1e-14)


def test_compose_errors():
    basis = ShapeBasis(np.eye(2, 6))
    with pytest.raises(ValueError):
        compose_shape([1.0], basis)
    with pytest.raises(ValueError):
        ShapeBasis(np.ones((2, 6)))  # rank deficient


@given(st.integers(0, 10_000), arrays(float, 3, elements=st.floats(-3, 3)))
@settings(max_examples=50)
def test_compose_linear_in_alpha(seed, coeffs):
    rng = np.random.default_rng(seed)
    basis = ShapeBasis(rng.standard_normal((3, 12)))
    a1, a2 = rng.standard_normal(3), rng.standard_normal(3)
    lhs = compose_shape(coeffs[0] * a1 + coeffs[1] * a2, basis).coords
    rhs = coeffs[0] * compose_shape(a1, basis).coords + coeffs[1] * compose_shape(a2, basis).coords
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_project_examples():
    assert np.array_equal(project([[1, 2, 3]], np.eye(3)).coords, [[1, 2]])
    R = Rotation.about_axis([0, 0, 1], np.pi / 2)
    assert np.allclose(project([[1, 0, 0]], R).coords, [[0, 1]], atol=1e-15)


def test_project_matches_explicit_multiply():
    rng = np.random.default_rng(3)
    for _ in range(20):
        R = random_rotation(rng).R
        X = rng.standard_normal((7, 3))
        expected = np.array([[sum(R[r, c] * x[c] for c in range(3)) for r in range(2)] for x in X])
        assert np.allclose(project(X, R).coords, expected, atol=1e-12)


def test_rotation_validation():
    with pytest.raises(ValueError):
        Rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        Rotation(np.eye(3) * 1.01)
    R = Rotation.from_quaternion([1, 0, 0, 0])
    assert np.allclose(R.R, np.eye(3))


@given(rotations, arrays(float, (5, 3), elements=finite), arrays(float, (5, 3), elements=finite),
       finite, finite)
@settings(max_examples=60)
def test_project_linear(R, X1, X2, a, b):
    lhs = project(a * X1 + b * X2, R).coords
    rhs = a * project(X1, R).coords + b * project(X2, R).coords
    assert np.allclose(lhs, rhs, atol=1e-10, rtol=1e-10)


@given(rotations, arrays(float, (6, 3), elements=finite))
@settings(max_examples=60)
def test_project_non_expansive(R, X):
    Y = project(X, R).coords
    assert np.all(np.linalg.norm(Y, axis=1) <= np.linalg.norm(X, axis=1) * (1 + 1e-12) + 1e-12)


def test_normalize_square():
    Y, centroid, scale = normalize(KeypointSet2D([[1, 1], [3, 1], [1, 3], [3, 3]]))
    assert np.allclose(centroid, [2, 2])
    assert np.isclose(scale, np.sqrt(2))
    assert np.allclose(Y.coords, np.array([[-1, -1], [1, -1], [-1, 1], [1, 1]]) / np.sqrt(2))


def test_normalize_single_visible_and_none():
    Y, centroid, scale = normalize(KeypointSet2D([[4, 5], [9, 9]], [True, False]))
    assert np.allclose(Y.coords[0], [0, 0])
    assert scale == 1.0
    with pytest.raises(ValueError):
        normalize(KeypointSet2D([[0, 0]], [False]))


@given(arrays(float, (6, 2), elements=finite))
@settings(max_examples=60)
def test_normalize_idempotent(pts):
    once, _, _ = normalize(KeypointSet2D(pts))
    twice, centroid, _ = normalize(once)
    assert np.allclose(twice.coords, once.coords, atol=1e-10)
    assert np.allclose(centroid, 0, atol=1e-10)


def test_apply_selection():
    Y = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(apply_selection(Y, [1, 1, 1]).coords, Y)
    assert np.array_equal(apply_selection(Y, [1, 0, 1]).coords, Y[[0, 2]])
    assert len(apply_selection(Y, [0, 0, 0])) == 0
    with pytest.raises(ValueError):
        apply_selection(Y, [1, 0])


def test_image_frame_round_trip():
    frame = ImageFrame(64, 48, half_extent=2.0)
    assert frame.scale == 12.0
    assert frame.shape == (48, 64)
    assert np.allclose(frame.to_pixels([[0, 0]]), [[32, 24]])
    pts = np.random.default_rng(1).standard_normal((10, 2))
    assert np.allclose(frame.to_normalized(frame.to_pixels(pts)), pts)
