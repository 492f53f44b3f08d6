"""Gauss-Newton with hybrid inner solves, and variable projection."""

import numpy as np
import pytest
from scipy.optimize import least_squares

from hybrid_krylov import (
    HYBRID_LSQR,
    BlurWidthModel,
    DenseMatrixMap,
    ExpDecayModel,
    HybridOptions,
    IdentityMap,
    LinearResidualModel,
    RuleConfig,
    SeparableModel,
    add_noise,
    alternating_baseline,
    deblur_phantom,
    fd_jacobian_check,
    gauss_newton_hybrid,
    run_hybrid,
    varpro_hybrid,
)
from hybrid_krylov.nonlinear import fd_jacobian_defect


def _fixed_opts(lam, max_iter):
    return HybridOptions(
        method=HYBRID_LSQR,
        max_iter=max_iter,
        min_iter=1,
        rule=RuleConfig(rule="fixed", lam=lam),
        tau_lambda=0.0,
        tau_r=0.0,
        tau_x=0.0,
    )


def test_fd_jacobian_check_shipped_models():
    rng = np.random.default_rng(0)
    linear = LinearResidualModel(DenseMatrixMap(rng.standard_normal((10, 6))))
    assert fd_jacobian_check(linear, rng.standard_normal(6))
    decay = ExpDecayModel()
    assert fd_jacobian_check(decay, np.array([1.2, 2.0]))


def test_fd_jacobian_defect_scales_with_h():
    decay = ExpDecayModel()
    x = np.array([0.8, 1.5])
    v = np.array([1.0, -1.0]) / np.sqrt(2.0)
    d4 = fd_jacobian_defect(decay, x, v, 1e-4)
    d5 = fd_jacobian_defect(decay, x, v, 1e-5)
    assert d4 <= 10.0 * 1e-4
    assert d5 <= 10.0 * 1e-5


def test_fd_jacobian_check_flags_wrong_jacobian():
    class Wrong(ExpDecayModel):
        def jacobian(self, x):
            J = super().jacobian(x)
            return DenseMatrixMap(2.0 * J.entries)

    assert not fd_jacobian_check(Wrong(), np.array([1.0, 1.0]))


def test_gauss_newton_linear_model_one_shot():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((12, 8))
    b = rng.standard_normal(12)
    lam = 0.3
    model = LinearResidualModel(DenseMatrixMap(M))
    trace = gauss_newton_hybrid(
        model, b, np.zeros(8), opts=_fixed_opts(lam, max_iter=8)
    )
    want = np.linalg.solve(M.T @ M + lam * np.eye(8), M.T @ b)
    assert trace.termination == "gradient_converged"
    assert len(trace.records) == 1
    assert np.linalg.norm(trace.solution - want) <= 1e-8 * np.linalg.norm(want)


def test_gauss_newton_matches_least_squares_oracle():
    model = ExpDecayModel()
    rng = np.random.default_rng(2)
    x_star = np.array([1.0, 3.0])
    b = model.evaluate(x_star) + 1e-3 * rng.standard_normal(model.m)
    oracle = least_squares(lambda x: model.evaluate(x) - b, np.array([1.5, 2.0])).x
    for trial in range(5):
        x0 = x_star * (1.0 + 0.3 * rng.uniform(-1.0, 1.0, 2))
        trace = gauss_newton_hybrid(model, b, x0, opts=_fixed_opts(0.0, max_iter=2))
        assert np.linalg.norm(trace.solution - oracle) <= 1e-3


def test_gauss_newton_merit_monotone():
    model = ExpDecayModel()
    rng = np.random.default_rng(3)
    b = model.evaluate(np.array([1.0, 3.0])) + 1e-2 * rng.standard_normal(model.m)
    trace = gauss_newton_hybrid(
        model, b, np.array([2.0, 1.0]), opts=_fixed_opts(1e-3, max_iter=2)
    )
    merits = trace.column("merit")
    assert len(merits) >= 2
    assert np.all(np.diff(merits) <= 1e-12 * merits[0])
    alphas = trace.column("alpha")
    assert np.all((alphas > 0.0) & (alphas <= 1.0))


# ---------------------------------------------------------------------------
# variable projection


def _blur_width_toy():
    model = BlurWidthModel(N=16, radius=4)
    x_true = deblur_phantom(16).pixels
    b_true = model.operator(1.4).apply(x_true)
    b, e, _ = add_noise(b_true, 1e-3, seed=3)
    opts = HybridOptions(
        method=HYBRID_LSQR,
        max_iter=45,
        rule=RuleConfig(rule="dp", eta=1.01, epsilon=float(np.linalg.norm(e))),
    )
    return model, b, opts


def test_varpro_frozen_nonlinear_is_single_hybrid_solve():
    model, b, opts = _blur_width_toy()
    trace = varpro_hybrid(model, b, [2.0], opts=opts, outer_max=0)
    assert trace.termination == "outer_max"
    assert len(trace.records) == 1
    ref = run_hybrid(model.operator(2.0), b, opts)
    assert np.array_equal(trace.x_lin, ref.solution)


def test_varpro_recovers_blur_width():
    model, b, opts = _blur_width_toy()
    trace = varpro_hybrid(model, b, [2.0], opts=opts, outer_max=30, fd_h=1e-4)
    sigma = float(trace.x_nl[0])
    assert abs(sigma - 1.4) <= 0.14
    objs = trace.objectives()
    assert np.all(np.diff(objs) <= 1e-12 * objs[0])


def test_varpro_beats_alternating_baseline():
    model, b, opts = _blur_width_toy()
    var = varpro_hybrid(model, b, [2.0], opts=opts, outer_max=10, fd_h=1e-4)
    alt_obj, _, _ = alternating_baseline(
        model, b, [2.0], opts=opts, outer_max=10, fd_h=1e-4
    )
    assert var.objectives()[-1] <= alt_obj[-1]


def test_varpro_guards():
    model, b, opts = _blur_width_toy()
    with pytest.raises(ValueError):
        model.operator(-1.0)
    with pytest.raises(ValueError):
        varpro_hybrid(model, b, [-1.0], opts=opts)

    class FatBlock(SeparableModel):
        ell = 2
        n_lin = 4

        def operator(self, x_nl):
            return IdentityMap(4)

    with pytest.raises(ValueError):
        varpro_hybrid(FatBlock(), np.ones(4), [1.0, 1.0], opts=opts)
