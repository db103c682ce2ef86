import numpy as np
import pytest

from src.edges import (
    CannyParams,
    GradientField,
    canny,
    gaussian_blur,
    hysteresis,
    non_maximum_suppression,
    sobel,
    sobel_adjoint,
)
from src.errors import EmptyInputError, InvalidParamsError, ShapeMismatchError
from src.imgcore import to_grayscale


def test_sobel_on_unit_ramp():
    ramp = np.tile(np.arange(10, dtype=np.float64), (6, 1))

    grad = sobel(ramp)

    np.testing.assert_allclose(grad.gx[:, 1:-1], 8.0)
    np.testing.assert_allclose(grad.gx[:, 0], 4.0)  # replicated border
    np.testing.assert_allclose(grad.gy, 0.0)


def test_sobel_filters_each_plane_of_a_stack():
    rng = np.random.default_rng(0)
    stack = rng.standard_normal((3, 5, 7))

    grad = sobel(stack)

    for c in range(3):
        np.testing.assert_allclose(grad.gx[c], sobel(stack[c]).gx)


def test_sobel_rejects_empty_input():
    with pytest.raises(EmptyInputError):
        sobel(np.zeros((0, 4)))


@pytest.mark.parametrize("shape", [(6, 9), (2, 5, 4), (1, 1)])
def test_sobel_adjoint_satisfies_inner_product_identity(shape):
    rng = np.random.default_rng(1)
    f = rng.standard_normal(shape)
    gx = rng.standard_normal(shape)
    gy = rng.standard_normal(shape)

    grad = sobel(f)
    lhs = np.sum(grad.gx * gx) + np.sum(grad.gy * gy)
    rhs = np.sum(f * sobel_adjoint(gx, gy))

    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_sobel_adjoint_requires_matching_planes():
    with pytest.raises(ShapeMismatchError):
        sobel_adjoint(np.zeros((3, 3)), np.zeros((3, 4)))


def test_gaussian_blur_preserves_constants():
    flat = np.full((7, 7), 42.0)
    np.testing.assert_allclose(gaussian_blur(flat, 1.4, 5), flat)


def test_canny_params_validation():
    with pytest.raises(InvalidParamsError):
        CannyParams(low_threshold=160, high_threshold=150).validate()
    with pytest.raises(InvalidParamsError):
        CannyParams(kernel_size=4).validate()
    with pytest.raises(InvalidParamsError):
        CannyParams(gaussian_sigma=0).validate()

    params = CannyParams.from_dict({"sigma": 2.0, "low_threshold": 10, "high_threshold": 20})
    assert params.gaussian_sigma == 2.0
    assert CannyParams.from_dict(params.to_dict()) == params


def test_canny_step_edge_is_one_pixel_wide():
    img = np.zeros((10, 20))
    img[:, 10:] = 200.0

    edges = canny(img)

    assert edges.dtype == bool
    assert edges.sum(axis=1).tolist() == [1] * 10
    assert set(np.nonzero(edges)[1]) <= {9, 10}


def test_canny_finds_nothing_on_constant_image():
    assert not canny(np.full((16, 16), 128.0)).any()


def test_nms_keeps_ridge_peak_only():
    mag_row = np.array([0.0, 1.0, 3.0, 1.0, 0.0])
    gx = np.tile(mag_row, (3, 1))
    grad = GradientField(gx=gx, gy=np.zeros_like(gx))

    keep = non_maximum_suppression(grad)

    assert keep.tolist() == [[False, False, True, False, False]] * 3


def test_hysteresis_keeps_weak_pixels_connected_to_strong():
    magnitude = np.array(
        [
            [200.0, 60.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 60.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 60.0],
        ]
    )
    candidates = magnitude > 0

    edges = hysteresis(magnitude, candidates, low=50.0, high=150.0)

    expected = np.zeros_like(candidates)
    expected[0, 0] = expected[0, 1] = expected[1, 2] = True  # diagonal link counts
    np.testing.assert_array_equal(edges, expected)


def test_hysteresis_without_strong_pixels_is_empty():
    magnitude = np.full((4, 4), 80.0)
    assert not hysteresis(magnitude, magnitude > 0, low=50.0, high=150.0).any()


def test_sobel_is_linear():
    rng = np.random.default_rng(2)
    f, g = rng.standard_normal((2, 7, 9))

    combined = sobel(3.0 * f - 0.5 * g)
    parts_f, parts_g = sobel(f), sobel(g)

    np.testing.assert_allclose(combined.gx, 3.0 * parts_f.gx - 0.5 * parts_g.gx, atol=1e-12)
    np.testing.assert_allclose(combined.gy, 3.0 * parts_f.gy - 0.5 * parts_g.gy, atol=1e-12)


def test_sobel_swaps_components_under_transpose():
    f = np.random.default_rng(3).standard_normal((6, 11))

    grad, grad_t = sobel(f), sobel(f.T)

    np.testing.assert_allclose(grad_t.gx, grad.gy.T, atol=1e-12)
    np.testing.assert_allclose(grad_t.gy, grad.gx.T, atol=1e-12)


def test_canny_ignores_a_constant_offset():
    img = np.random.default_rng(4).uniform(0, 200, size=(32, 40))

    np.testing.assert_array_equal(canny(img + 30.0), canny(img))


def _natural_images() -> list[np.ndarray]:
    """Grayscale versions of the images bundled with scikit-image."""
    data = pytest.importorskip("skimage.data")
    images = []
    for name in ("camera", "coins", "astronaut", "coffee", "chelsea"):
        img = getattr(data, name)().astype(np.float64)
        images.append(to_grayscale(img) if img.ndim == 3 else img)
    return images


def test_canny_agrees_with_reference_implementation():
    feature = pytest.importorskip("skimage.feature")
    # 13 taps at sigma 1.4 match the reference's 4-sigma truncation
    params = CannyParams(gaussian_sigma=1.4, low_threshold=50, high_threshold=150, kernel_size=13)

    for img in _natural_images():
        ours = canny(img, params)
        theirs = feature.canny(img, sigma=1.4, low_threshold=50, high_threshold=150, mode="nearest")
        inner = (slice(2, -2), slice(2, -2))
        assert np.mean(ours[inner] == theirs[inner]) >= 0.99
