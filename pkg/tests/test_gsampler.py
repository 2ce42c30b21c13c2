import math

import numpy as np
import pytest
from scipy import stats

from cvbl.errors import ConvergenceError, ParameterError, TruncationError
from cvbl.gsampler import (
    CgConfig,
    CgInfo,
    GaussianTarget,
    cg_solve,
    nonneg_mode,
    sample_gaussian_po,
    sample_truncated_nonneg,
)
from cvbl.linops import SplitOperator, dense_operator, make_operator, make_sparsifier, split


def random_spd(rng, n, cond=50.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(np.geomspace(1.0, cond, n)) @ q.T


def test_cg_identity_one_iteration(rng):
    b = rng.standard_normal(10)
    info = CgInfo()
    x = cg_solve(lambda v: v, b, info=info)
    np.testing.assert_allclose(x, b)
    assert info.iterations == 1


def test_cg_matches_dense_solve(rng):
    A = random_spd(rng, 16)
    b = rng.standard_normal(16)
    x = cg_solve(lambda v: A @ v, b)
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(x - ref) <= 1e-7 * np.linalg.norm(ref)
    xj = cg_solve(lambda v: A @ v, b, CgConfig(preconditioner="jacobi"), diag=np.diag(A))
    assert np.linalg.norm(xj - ref) <= 1e-7 * np.linalg.norm(ref)


def test_cg_zero_rhs():
    np.testing.assert_array_equal(cg_solve(lambda v: 3 * v, np.zeros(5)), np.zeros(5))


def test_cg_error_energy_norm_monotone(rng):
    # CG minimizes the A-norm of the error over growing Krylov spaces
    A = random_spd(rng, 30, cond=1e3)
    b = rng.standard_normal(30)
    ref = np.linalg.solve(A, b)
    errs = []
    cg_solve(lambda v: A @ v, b, CgConfig(rel_tol=1e-12), callback=lambda x: errs.append(float((x - ref) @ A @ (x - ref))))
    assert len(errs) > 5
    assert all(e2 <= e1 * (1 + 1e-9) + 1e-24 for e1, e2 in zip(errs, errs[1:]))


def test_cg_reports_residual_on_failure(rng):
    A = random_spd(rng, 12)
    b = rng.standard_normal(12)
    with pytest.raises(ConvergenceError) as exc:
        cg_solve(lambda v: A @ v, b, CgConfig(rel_tol=1e-14, max_iters=3))
    assert exc.value.iterations == 3 and exc.value.residual > 0


def test_cg_config_validation():
    with pytest.raises(ParameterError):
        CgConfig(rel_tol=0)
    with pytest.raises(ParameterError):
        CgConfig(max_iters=0)
    assert CgConfig().iters_for(7) == 70


def _identity_target(n, tau2, noise_var, data):
    F = dense_operator(np.eye(n))
    return GaussianTarget(
        sparsifier=make_sparsifier("identity", n),
        prior_var=tau2,
        forward=SplitOperator(F),
        data=split(data),
        noise_var=noise_var,
    )


def test_po_covariance_identity_case(rng):
    n = 8
    tau2 = np.linspace(0.5, 2.0, n)
    target = _identity_target(n, tau2, 0.7, np.zeros(n, complex))
    gen = np.random.default_rng(1)
    draws = np.array([sample_gaussian_po(gen, target) for _ in range(20000)])
    cov = np.diag(1 / (1 / tau2 + 1 / 0.7))
    emp = np.cov(draws.T)
    assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.05
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(0)) < 3 * se)


def test_po_prior_washout_gives_least_squares(rng):
    M = rng.standard_normal((12, 4)) + 1j * rng.standard_normal((12, 4))
    F = dense_operator(M)
    y = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    Ft = SplitOperator(F)
    target = GaussianTarget(make_sparsifier("identity", 4), np.full(4, 1e12), forward=Ft, data=split(y), noise_var=0.5)
    gen = np.random.default_rng(2)
    draws = np.array([sample_gaussian_po(gen, target) for _ in range(4000)])
    A = np.vstack([M.real, M.imag])
    ls = np.linalg.lstsq(A, split(y), rcond=None)[0]
    cov = 0.5 * np.linalg.inv(A.T @ A)
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(0) - ls) < 3 * se)


def test_po_deterministic(rng):
    target = _identity_target(5, np.ones(5), 1.0, rng.standard_normal(5) + 0j)
    a = sample_gaussian_po(np.random.default_rng(3), target)
    b = sample_gaussian_po(np.random.default_rng(3), target)
    np.testing.assert_array_equal(a, b)


def test_target_mean_solves_normal_equations(rng):
    F = make_operator("blur", 20)
    L = make_sparsifier("first_difference_1d", 20)
    y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    target = GaussianTarget(L, rng.random(20) + 0.1, forward=SplitOperator(F), data=split(y), noise_var=0.05)
    mean = target.mean()
    rhs = target.rhs(target.prior_mean, target.data)
    assert np.linalg.norm(target.precision(mean) - rhs) <= 1e-8 * np.linalg.norm(rhs)
    dense = target.precision_dense()
    np.testing.assert_allclose(np.diag(dense), target.precision_diag(), rtol=1e-12)
    np.testing.assert_allclose(dense, dense.T, atol=1e-12 * np.abs(dense).max())


def _scalar_target(mean):
    return GaussianTarget(make_sparsifier("identity", 1), np.ones(1), prior_mean=np.array([mean]))


def test_truncated_positive_mean():
    gen = np.random.default_rng(4)
    out = np.array([sample_truncated_nonneg(gen, _scalar_target(3.0))[0][0] for _ in range(20000)])
    assert np.all(out >= 0)
    expect = stats.truncnorm(-3.0, np.inf, loc=3.0).mean()
    assert abs(out.mean() - expect) / expect < 0.01


def test_truncated_negative_mean_uses_rsm():
    gen = np.random.default_rng(5)
    res = [sample_truncated_nonneg(gen, _scalar_target(-2.0)) for _ in range(20000)]
    out = np.array([r[0][0] for r in res])
    assert np.all(out >= 0)
    assert np.mean([r[2] for r in res]) > 0.7
    expect = stats.truncnorm(2.0, np.inf, loc=-2.0).mean()
    assert expect == pytest.approx(0.37322, abs=1e-5)
    assert abs(out.mean() - expect) / expect < 0.02


def test_truncated_deep_interior_first_attempt():
    target = GaussianTarget(make_sparsifier("identity", 6), np.ones(6), prior_mean=np.full(6, 6.0))
    gen = np.random.default_rng(6)
    attempts = [sample_truncated_nonneg(gen, target)[1] for _ in range(2000)]
    assert np.mean(np.array(attempts) == 1) >= 0.99


def test_rsm_matches_brute_force_rejection_2d():
    # correlated 2-D Gaussian with most mass outside the orthant
    L = make_sparsifier("first_difference_1d", 2)
    target = GaussianTarget(L, np.array([1.0, 0.5]), prior_mean=np.array([-0.8, 0.9]))
    prec = target.precision_dense()
    cov = np.linalg.inv(prec)
    mean = target.mean(CgConfig(rel_tol=1e-12))
    ref_rng = np.random.default_rng(7)
    ref = ref_rng.multivariate_normal(mean, cov, size=4_000_000)
    ref = ref[np.all(ref >= 0, axis=1)]
    gen = np.random.default_rng(8)
    out = np.array([sample_truncated_nonneg(gen, target, n_s=1)[0] for _ in range(20000)])
    assert np.all(out >= 0)
    se = np.sqrt(out.var(0) / out.shape[0] + ref.var(0) / ref.shape[0])
    assert np.all(np.abs(out.mean(0) - ref.mean(0)) < 3.5 * se)


def test_nonneg_mode_kkt(rng):
    L = make_sparsifier("first_difference_1d", 10)
    target = GaussianTarget(L, rng.random(10) + 0.2, prior_mean=rng.standard_normal(10))
    mean = target.mean(CgConfig(rel_tol=1e-12))
    mode = nonneg_mode(target, mean)
    grad = target.precision(mode - mean)
    assert np.all(mode >= 0)
    assert np.all(np.abs(grad[mode > 0]) < 1e-7)
    assert np.all(grad[mode == 0] > -1e-7)


def test_truncation_failure_raises():
    with pytest.raises(TruncationError):
        sample_truncated_nonneg(np.random.default_rng(9), _scalar_target(-40.0), n_s=1, max_proposals=5)
