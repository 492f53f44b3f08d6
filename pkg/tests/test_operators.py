"""Operator layer: adjoint consistency, dense cross-checks, geometry."""

import numpy as np
import pytest

from hybrid_krylov import (
    BlurOperator,
    DenseMatrixMap,
    DiagonalMap,
    FirstDifferenceInverse,
    IdentityMap,
    ProductMap,
    adjoint_mismatch,
    build_gaussian_psf,
    build_tomo,
    estimate_norm,
    to_dense,
)


def test_dense_map_identity():
    A = DenseMatrixMap(np.eye(3))
    assert np.array_equal(A.apply(np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])


def test_dense_map_matches_matrix_products():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((5, 3))
    A = DenseMatrixMap(M)
    x = rng.standard_normal(3)
    w = rng.standard_normal(5)
    assert np.allclose(A.apply(x), M @ x, atol=1e-14)
    assert np.allclose(A.apply_adjoint(w), M.T @ w, atol=1e-14)


def test_dense_map_adjoint_explicit():
    A = DenseMatrixMap(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.allclose(A.apply_adjoint(np.array([1.0, 0.0])), [1.0, 2.0])


def test_apply_dimension_mismatch():
    A = DenseMatrixMap(np.ones((3, 2)))
    with pytest.raises(ValueError):
        A.apply(np.ones(3))
    with pytest.raises(ValueError):
        A.apply_adjoint(np.ones(2))


def test_zero_vector_maps_to_zero():
    ops = [
        DenseMatrixMap(np.random.default_rng(1).standard_normal((4, 3))),
        BlurOperator(4, build_gaussian_psf(1, 1.0, 1.0, 0.0)),
        build_tomo(4, 6, [0, 45, 90]),
    ]
    for op in ops:
        assert np.all(op.apply(np.zeros(op.cols)) == 0.0)
        assert np.all(op.apply_adjoint(np.zeros(op.rows)) == 0.0)


def test_adjoint_consistency_randomized():
    rng = np.random.default_rng(7)
    ops = [
        DenseMatrixMap(rng.standard_normal((9, 6))),
        IdentityMap(5),
        DiagonalMap(rng.uniform(0.5, 2.0, size=7)),
        BlurOperator(8, build_gaussian_psf(2, 2.0, 0.5, np.pi / 4)),
        build_tomo(6, 9, range(0, 180, 30)),
        FirstDifferenceInverse(12),
        ProductMap(DenseMatrixMap(rng.standard_normal((4, 6))), DenseMatrixMap(rng.standard_normal((6, 3)))),
    ]
    for op in ops:
        assert adjoint_mismatch(op, rng=np.random.default_rng(3), trials=100) <= 1e-10


def test_densified_agreement_small():
    # at N <= 8 every operator must agree with its densified matrix
    rng = np.random.default_rng(11)
    for op in [
        BlurOperator(8, build_gaussian_psf(2, 1.5, 0.7, 0.3)),
        build_tomo(4, 6, range(0, 180, 45)),
    ]:
        M = to_dense(op)
        for _ in range(5):
            x = rng.standard_normal(op.cols)
            w = rng.standard_normal(op.rows)
            assert np.linalg.norm(op.apply(x) - M @ x) <= 1e-12 * max(1.0, np.linalg.norm(M @ x))
            assert np.linalg.norm(op.apply_adjoint(w) - M.T @ w) <= 1e-12 * max(1.0, np.linalg.norm(M.T @ w))


def test_blur_delta_psf_is_identity():
    psf = np.zeros((3, 3))
    psf[1, 1] = 1.0
    A = BlurOperator(4, psf)
    x = np.random.default_rng(2).standard_normal(16)
    assert np.allclose(A.apply(x), x, atol=1e-14)


def test_blur_constant_image_preserved():
    A = BlurOperator(6, build_gaussian_psf(2, 1.0, 2.0, 0.5))
    x = np.full(36, 3.25)
    assert np.allclose(A.apply(x), x, atol=1e-12)


def test_blur_symmetric_psf_self_adjoint():
    A = BlurOperator(8, build_gaussian_psf(2, 1.5, 1.5, 0.0))
    rng = np.random.default_rng(4)
    x = rng.standard_normal(64)
    assert np.linalg.norm(A.apply(x) - A.apply_adjoint(x)) <= 1e-12 * np.linalg.norm(x)
    # and equals the densified transpose applied to the same vector
    M = to_dense(A)
    assert np.linalg.norm(M - M.T) <= 1e-12


def test_blur_linearity():
    A = BlurOperator(5, build_gaussian_psf(1, 0.8, 1.3, 0.2))
    rng = np.random.default_rng(5)
    x, y = rng.standard_normal(25), rng.standard_normal(25)
    lhs = A.apply(2.0 * x - 3.0 * y)
    rhs = 2.0 * A.apply(x) - 3.0 * A.apply(y)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(rhs))


def test_gaussian_psf_r0():
    assert np.array_equal(build_gaussian_psf(0, 1.0, 1.0, 0.0), [[1.0]])


def test_gaussian_psf_isotropic_rotation_invariant():
    k = build_gaussian_psf(3, 1.7, 1.7, 0.6)
    assert np.allclose(k, np.rot90(k), atol=1e-12)


def test_gaussian_psf_normalization_and_center():
    k = build_gaussian_psf(2, 2.0, 0.5, np.pi / 4)
    assert abs(k.sum() - 1.0) <= 1e-14
    assert np.all(k >= 0.0)
    assert k[2, 2] == k.max()
    # center value equals the normalized sampled Gaussian computed directly
    vals = np.zeros((5, 5))
    c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
    for i, di in enumerate(range(-2, 3)):
        for j, dj in enumerate(range(-2, 3)):
            a = c * dj + s * di
            b = -s * dj + c * di
            vals[i, j] = np.exp(-0.5 * ((a / 2.0) ** 2 + (b / 0.5) ** 2))
    assert abs(k[2, 2] - 1.0 / vals.sum()) <= 1e-12


def test_tomo_single_pixel():
    op = build_tomo(1, 1, [0])
    M = to_dense(op)
    assert M.shape == (1, 1)
    assert abs(M[0, 0] - 1.0) <= 1e-12


def test_tomo_hand_traced_2x2_vertical():
    # at 0 degrees rays travel vertically; a ray inside the image crosses
    # two stacked pixels, contributing chord length 1 to each
    op = build_tomo(2, 2, [0])
    ones = np.ones(4)
    vals = op.apply(ones)
    inside = vals[vals > 1e-12]
    assert np.allclose(inside, 2.0, atol=1e-12)


def test_tomo_row_sums_bounded():
    op = build_tomo(6, 9, range(0, 180, 15))
    sums = op.apply(np.ones(36))
    assert np.all(sums <= 6 * np.sqrt(2) + 1e-9)
    assert op.matrix.data.min() > 0.0


def test_tomo_shape_desk_scale():
    op = build_tomo(32, 45, range(0, 180, 2))
    assert op.rows == 45 * 90 == 4050
    assert op.cols == 1024


def test_tomo_adjoint_matches_dense():
    op = build_tomo(4, 6, range(0, 180, 45))
    M = to_dense(op)
    rng = np.random.default_rng(8)
    w = rng.standard_normal(op.rows)
    assert np.allclose(op.apply_adjoint(w), M.T @ w, atol=1e-12)


def test_diagonal_inverse():
    d = np.array([2.0, -4.0, 0.5])
    D = DiagonalMap(d)
    Dinv = D.inverse()
    x = np.array([1.0, 2.0, 3.0])
    assert np.allclose(Dinv.apply(D.apply(x)), x, atol=1e-14)
    with pytest.raises(ValueError):
        DiagonalMap(np.array([1.0, 0.0])).inverse()


def test_first_difference_inverse_is_running_sum():
    n = 6
    L = np.eye(n) - np.eye(n, k=-1)
    Linv = FirstDifferenceInverse(n)
    rng = np.random.default_rng(9)
    x = rng.standard_normal(n)
    assert np.allclose(L @ Linv.apply(x), x, atol=1e-12)
    w = rng.standard_normal(n)
    assert np.allclose(L.T @ Linv.apply_adjoint(w), w, atol=1e-12)


def test_estimate_norm_close_to_spectral_norm():
    rng = np.random.default_rng(10)
    M = rng.standard_normal((12, 9))
    est = estimate_norm(DenseMatrixMap(M), rng=np.random.default_rng(0), iters=50)
    true = np.linalg.norm(M, 2)
    assert abs(est - true) <= 1e-6 * true
