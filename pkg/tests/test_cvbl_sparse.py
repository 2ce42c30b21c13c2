import dataclasses

import numpy as np
import pytest
from scipy import stats

from conftest import random_complex
from cvbl.analysis import batch_means_se, sigma2_for_snr
from cvbl.chain import GibbsConfig, read_chain_csv
from cvbl.cvbl_sparse import (
    cvbl_sparse_run,
    sample_a_conditional,
    sample_b_conditional,
    sample_tau_conditional_complex,
    split_residuals,
)
from cvbl.gsampler import CgConfig
from cvbl.linops import SplitOperator, dense_operator, make_operator, split
from cvbl.randkit import RngStream, sample_complex_gaussian
from cvbl.signals import gen_signal


def test_split_residuals_trivial_cases(rng):
    F = make_operator("blur", 7)
    y = random_complex(rng, 7)
    a, b = rng.standard_normal(7), rng.standard_normal(7)
    y1, _ = split_residuals(y, F, a, np.zeros(7))
    _, y2 = split_residuals(y, F, np.zeros(7), b)
    np.testing.assert_array_equal(y1, split(y))
    np.testing.assert_array_equal(y2, split(y))


def test_split_residuals_identity(rng):
    F = dense_operator(random_complex(rng, 8, 6))
    y = random_complex(rng, 8)
    a, b = rng.standard_normal(6), rng.standard_normal(6)
    y1, y2 = split_residuals(y, F, a, b)
    full = np.linalg.norm(y - F.apply(a + 1j * b)) ** 2
    r1 = np.linalg.norm(y1 - SplitOperator.real_part(F).apply(a)) ** 2
    r2 = np.linalg.norm(y2 - SplitOperator.imag_part(F).apply(b)) ** 2
    assert abs(full - r1) <= 1e-12 * full and abs(full - r2) <= 1e-12 * full


def test_a_conditional_unitary_closed_form(rng):
    n = 16
    F = make_operator("dft", n)
    tau2 = rng.random(n) + 0.2
    sigma2 = 0.3
    y = random_complex(rng, n)
    b = rng.standard_normal(n)
    y1, _ = split_residuals(y, F, np.zeros(n), b)
    from cvbl.cvbl_sparse import part_target

    target = part_target(SplitOperator.real_part(F), y1, tau2, sigma2)
    G = 2 / sigma2 + 1 / tau2
    closed = (2 / sigma2) * (F.adjoint(y - 1j * F.apply(b))).real / G
    tight = CgConfig(rel_tol=1e-13)
    assert np.linalg.norm(target.mean(tight) - closed) <= 1e-10 * np.linalg.norm(closed)
    # same target without the unitary shortcut goes through CG on the full normal operator
    general = dataclasses.replace(target, identity_normal=False)
    assert np.linalg.norm(general.mean(tight) - closed) <= 1e-10 * np.linalg.norm(closed)


def test_a_conditional_prior_washout(rng):
    n = 8
    F = make_operator("dft", n)
    y = random_complex(rng, n)
    b = rng.standard_normal(n)
    y1, _ = split_residuals(y, F, np.zeros(n), b)
    gen = np.random.default_rng(1)
    draws = np.array([sample_a_conditional(gen, y1, F, np.full(n, 1e12), 2.0) for _ in range(40000)])
    limit = F.adjoint(y - 1j * F.apply(b)).real
    # conditional sd is 1, so the sample mean is within 0.1% only in norm; check 3 SE per entry too
    assert np.all(np.abs(draws.mean(0) - limit) < 3 * np.sqrt(1 / draws.shape[0]))
    assert np.linalg.norm(draws.mean(0) - limit) / np.linalg.norm(limit) < 0.02


def test_b_conditional_zero_data_is_centered():
    n = 5
    F = make_operator("dft", n)
    gen = np.random.default_rng(2)
    y2 = np.zeros(2 * n)
    draws = np.array([sample_b_conditional(gen, y2, F, np.ones(n), 1.0) for _ in range(20000)])
    sd = np.sqrt(1 / (2 + 1))
    assert np.all(np.abs(draws.mean(0)) < 3 * sd / np.sqrt(draws.shape[0]))
    assert np.all(np.abs(draws.std(0) - sd) / sd < 0.02)


def test_tau_complex_inverse_gaussian_mean():
    n = 10**6
    tau2 = sample_tau_conditional_complex(np.random.default_rng(3), np.full(n, 3.0), np.full(n, 4.0), 1.0)
    assert abs(np.mean(1 / tau2) - 0.2) / 0.2 < 0.01


def test_tau_complex_gamma_branch():
    tau2 = sample_tau_conditional_complex(np.random.default_rng(4), np.zeros(10**6), np.zeros(10**6), 1.0)
    assert abs(tau2.mean() - 1.0) < 0.02


def test_tau_complex_rotation_invariance():
    n = 10**5
    a = sample_tau_conditional_complex(np.random.default_rng(5), np.full(n, 5.0), np.zeros(n), 1.0)
    b = sample_tau_conditional_complex(np.random.default_rng(6), np.zeros(n), np.full(n, 5.0), 1.0)
    assert stats.ks_2samp(a, b).statistic < 0.01
    same = sample_tau_conditional_complex(np.random.default_rng(5), np.zeros(n), np.full(n, 5.0), 1.0)
    np.testing.assert_array_equal(a, same)


def test_run_initialization_and_shapes(rng):
    n = 6
    F = make_operator("dft", n)
    y = random_complex(rng, n)
    cfg = GibbsConfig(sigma2=0.1, n_iter=30, burn_in=10)
    res = cvbl_sparse_run(RngStream(1), y, F, cfg)
    assert res.columns["re_z"].shape == (21, n) and res.columns["im_z"].shape == (21, n)
    assert np.all(np.isfinite(res.z)) and np.all(res.state.tau2 > 0) and res.state.eta_inv2 > 0
    assert res.header_names()[:2] == ["re_z_0", "re_z_1"]
    assert res.header_names()[n] == "im_z_0" and res.header_names()[-1] == "eta_inv2"


def test_restart_is_bit_exact(rng):
    n = 8
    F = make_operator("blur", n)
    y = random_complex(rng, n)
    cfg = GibbsConfig(sigma2=0.05, n_iter=80, burn_in=20)
    full = cvbl_sparse_run(RngStream(4, 2), y, F, cfg)
    first = cvbl_sparse_run(RngStream(4, 2), y, F, GibbsConfig(sigma2=0.05, n_iter=40, burn_in=20))
    second = cvbl_sparse_run(RngStream(4, 2), y, F, cfg, state=first.state, start=40)
    np.testing.assert_array_equal(np.vstack([first.z, second.z]), full.z)


def test_likelihood_dominance(rng):
    n = 8
    F = make_operator("dft", n)
    y = 2 * random_complex(rng, n)
    res = cvbl_sparse_run(RngStream(2), y, F, GibbsConfig(sigma2=1e-6, n_iter=300, burn_in=50))
    target = F.adjoint(y)
    assert np.linalg.norm(res.z.mean(0) - target) / np.linalg.norm(target) < 0.01


def test_two_pixel_quadrature_oracle():
    from oracles import cvbl_sparse_posterior_mean

    gen = np.random.default_rng(2)
    M = gen.standard_normal((2, 2)) + 1j * gen.standard_normal((2, 2))
    z = np.array([1 + 0.5j, 0.3 - 0.2j])
    y = M @ z + np.sqrt(0.25) * (gen.standard_normal(2) + 1j * gen.standard_normal(2))
    oracle = cvbl_sparse_posterior_mean(M, y, 0.5, 1.0)
    res = cvbl_sparse_run(RngStream(6), y, dense_operator(M), GibbsConfig(sigma2=0.5, n_iter=20000, burn_in=1000, eta_mode="fixed", eta_hat=1.0))
    chain = np.hstack([res.columns["re_z"], res.columns["im_z"]])
    est = chain.mean(0)
    se = batch_means_se(chain)
    assert np.all(np.abs(est - oracle) < 3 * se)


def test_sparse_demo_separates_support():
    n = 100
    truth = gen_signal("sparse_1d", n, sparsity=5, seed=11)
    F = make_operator("dft", n)
    sigma2 = sigma2_for_snr(F, truth, n, 20.0)
    y = F.apply(truth) + sample_complex_gaussian(np.random.default_rng(12), n, sigma2)
    res = cvbl_sparse_run(RngStream(13), y, F, GibbsConfig(sigma2=sigma2, n_iter=5000, burn_in=200))
    mag = np.abs(res.z.mean(0))
    on = np.abs(truth) > 0
    assert mag[~on].mean() < 0.2 * mag[on].mean()


def test_global_phase_invariance_of_magnitudes():
    n = 4
    F = make_operator("dft", n)
    truth = np.array([1.0, 0.0, 0.6, 0.0]) * np.exp(1j * np.array([0.3, 0, -2.0, 0]))
    y = F.apply(truth) + sample_complex_gaussian(np.random.default_rng(21), n, 0.05)
    rot = np.exp(0.9j)
    cfg = GibbsConfig(sigma2=0.05, n_iter=20200, burn_in=200)
    m1 = np.abs(cvbl_sparse_run(RngStream(31), y, F, cfg).z)
    m2 = np.abs(cvbl_sparse_run(RngStream(31), rot * y, F, cfg).z)
    # thin to roughly independent draws
    for j in range(n):
        assert stats.ks_2samp(m1[::2, j], m2[::2, j]).statistic < 0.02


def test_csv_columns(tmp_path, rng):
    F = make_operator("dft", 3)
    res = cvbl_sparse_run(RngStream(1), random_complex(rng, 3), F, GibbsConfig(sigma2=0.1, n_iter=10, burn_in=2))
    meta, header, table = read_chain_csv(res.to_csv(tmp_path / "c.csv"))
    assert header == ["re_z_0", "re_z_1", "re_z_2", "im_z_0", "im_z_1", "im_z_2", "eta_inv2"]
    np.testing.assert_array_equal(table[:, 3:6], res.columns["im_z"])
