import numpy as np
import pytest

from cvbl.analysis import batch_means_se
from cvbl.chain import GibbsConfig, read_chain_csv
from cvbl.errors import ParameterError
from cvbl.linops import dense_operator, make_operator, make_sparsifier
from cvbl.randkit import RngStream
from cvbl.rvbl import rvbl_run, sample_eta_conditional, sample_tau_conditional, sample_x_conditional


def test_x_conditional_identity_case(rng):
    F = dense_operator(np.eye(3))
    L = make_sparsifier("identity", 3)
    y = np.array([1.0, -2.0, 0.5]) + 0j
    gen = np.random.default_rng(1)
    draws = np.array([sample_x_conditional(gen, y, F, L, np.ones(3), 1.0) for _ in range(100000)])
    se = np.sqrt(0.5 / draws.shape[0])
    assert np.all(np.abs(draws.mean(0) - y.real / 2) < 3 * se)
    assert np.all(np.abs(draws.var(0) - 0.5) < 0.01)


def test_x_conditional_zero_data_and_dense_covariance(rng):
    M = rng.standard_normal((6, 4))
    F = dense_operator(M)
    L = make_sparsifier("first_difference_1d", 4)
    tau2 = np.array([0.5, 1.0, 2.0, 0.3])
    sigma2 = 0.4
    Ld = L.to_dense()
    G = M.T @ M / sigma2 + Ld.T @ np.diag(1 / tau2) @ Ld
    cov = np.linalg.inv(G)
    gen = np.random.default_rng(2)
    draws = np.array([sample_x_conditional(gen, np.zeros(6, complex), F, L, tau2, sigma2) for _ in range(40000)])
    se = np.sqrt(np.diag(cov) / draws.shape[0])
    assert np.all(np.abs(draws.mean(0)) < 3 * se)
    assert np.linalg.norm(np.cov(draws.T) - cov) / np.linalg.norm(cov) < 0.05


def test_tau_gamma_branch_mean():
    tau2 = sample_tau_conditional(np.random.default_rng(3), np.zeros(10**6), 2.5)
    assert abs(tau2.mean() - 1 / 2.5) / (1 / 2.5) < 0.02
    assert np.all(tau2 > 0)


def test_tau_inverse_gaussian_branch():
    n = 10**5
    tau2 = sample_tau_conditional(np.random.default_rng(4), np.full(n, 10.0), 1.0)
    nu2 = 1 / tau2
    mu, lam = 0.1, 1.0
    se = np.sqrt(mu**3 / lam / n)
    assert abs(nu2.mean() - mu) < 3 * se


def test_tau_deterministic_and_threshold():
    lx = np.array([0.0, 1e-9, 1e-3, 2.0])
    a = sample_tau_conditional(np.random.default_rng(5), lx, 1.0)
    b = sample_tau_conditional(np.random.default_rng(5), lx, 1.0)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ParameterError):
        sample_tau_conditional(np.random.default_rng(5), lx, 0.0)


def test_eta_conditional_moments():
    gen = np.random.default_rng(6)
    draws = np.array([sample_eta_conditional(gen, np.array([2.0]), 1.0, 1e-3) for _ in range(100000)])
    expect = 2 / (1e-3 + 1.0)
    assert abs(draws.mean() - expect) / expect < 0.01
    draws = np.array([sample_eta_conditional(gen, np.ones(100), 1.0, 1e-3) for _ in range(20000)])
    expect = 101 / (1e-3 + 50)
    assert abs(draws.mean() - expect) / expect < 0.01


def test_eta_fixed_mode():
    cfg = GibbsConfig(sigma2=1.0, eta_mode="fixed", eta_hat=1e-2)
    assert cfg.fixed_eta_inv2 == pytest.approx(1e4)
    assert sample_eta_conditional(np.random.default_rng(0), np.ones(5), fixed=cfg.fixed_eta_inv2) == pytest.approx(1e4)


def test_config_validation():
    with pytest.raises(ParameterError):
        GibbsConfig(sigma2=1.0, n_iter=10, burn_in=10)
    with pytest.raises(ParameterError):
        GibbsConfig(sigma2=0.0)
    with pytest.raises(ParameterError):
        GibbsConfig(sigma2=1.0, eta_mode="fixed")


def _small_problem(rng, n=16):
    F = make_operator("blur", n)
    L = make_sparsifier("first_difference_1d", n)
    x = np.where(np.arange(n) < n // 2, 1.0, 2.0)
    y = F.apply(x) + 0.05 * rng.standard_normal(n)
    return F, L, y


def test_run_shapes_and_positivity(rng):
    F, L, y = _small_problem(rng)
    cfg = GibbsConfig(sigma2=0.0025, n_iter=60, burn_in=10)
    res = rvbl_run(RngStream(1), y, F, L, cfg)
    assert res.columns["x"].shape == (51, 16)
    assert res.n_samples == cfg.n_retained
    assert res.eta_trace.shape == (60,)
    assert np.all(res.eta_inv2 > 0) and np.all(res.state.tau2 > 0)
    assert np.all(res.tau2_mean > 0)


def test_restart_is_bit_exact(rng):
    F, L, y = _small_problem(rng)
    full = rvbl_run(RngStream(7), y, F, L, GibbsConfig(sigma2=0.0025, n_iter=200, burn_in=50))
    first = rvbl_run(RngStream(7), y, F, L, GibbsConfig(sigma2=0.0025, n_iter=100, burn_in=50))
    second = rvbl_run(RngStream(7), y, F, L, GibbsConfig(sigma2=0.0025, n_iter=200, burn_in=50), state=first.state, start=100)
    joined = np.vstack([first.columns["x"], second.columns["x"]])
    np.testing.assert_array_equal(joined, full.columns["x"])
    np.testing.assert_array_equal(np.concatenate([first.eta_trace, second.eta_trace]), full.eta_trace)


def test_likelihood_dominance():
    F = dense_operator(np.eye(5))
    L = make_sparsifier("identity", 5)
    y = np.array([1.0, -0.5, 2.0, 0.7, -1.2]) + 0j
    res = rvbl_run(RngStream(2), y, F, L, GibbsConfig(sigma2=1e-6, n_iter=400, burn_in=100))
    mean = res.columns["x"].mean(0)
    assert np.linalg.norm(mean - y.real) / np.linalg.norm(y) < 0.01


def test_csv_roundtrip(tmp_path, rng):
    F, L, y = _small_problem(rng, 6)
    res = rvbl_run(RngStream(3), y, F, L, GibbsConfig(sigma2=0.01, n_iter=20, burn_in=5))
    path = res.to_csv(tmp_path / "chain.csv", meta={"config_hash": "abc"})
    meta, header, table = read_chain_csv(path)
    assert meta["config_hash"] == "abc"
    assert "5..20" in meta["retained"]
    assert header == [f"x_{j}" for j in range(6)] + ["eta_inv2"]
    np.testing.assert_array_equal(table[:, :6], res.columns["x"])
    np.testing.assert_array_equal(table[:, 6], res.eta_inv2)
    assert (tmp_path / "chain.json").exists()


def test_batch_means_se_of_iid():
    x = np.random.default_rng(0).standard_normal(100000)
    assert batch_means_se(x) == pytest.approx(1 / np.sqrt(100000), rel=0.25)
