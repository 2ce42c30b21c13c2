import math

import numpy as np
import pytest

from cvbl.analysis import snr_db
from cvbl.errors import DimensionError, ParameterError
from cvbl.linops import make_operator
from cvbl.signals import (
    gen_observation,
    gen_signal,
    piecewise_grid,
    piecewise_jumps,
    piecewise_magnitude,
    shepp_logan,
)


def test_piecewise_values():
    assert piecewise_magnitude(-2.5) == 2.0
    assert piecewise_magnitude(-1.45) == 1.5
    assert piecewise_magnitude(-0.5) == 1.0
    assert piecewise_magnitude(math.pi / 2) == pytest.approx(2.5)
    assert np.all(piecewise_magnitude(np.linspace(-math.pi, math.pi, 1000)) <= 2.5)


def test_piecewise_grid_and_jumps():
    t = piecewise_grid(200)
    assert t[0] == pytest.approx(-math.pi + math.pi / 100)
    assert t[-1] == pytest.approx(math.pi)
    np.testing.assert_array_equal(piecewise_jumps(200), [10, 33, 49, 58])


def test_sparse_signal():
    z = gen_signal("sparse_1d", 100, sparsity=5, seed=3)
    assert np.count_nonzero(z) == 5
    np.testing.assert_allclose(np.abs(z[z != 0]), 1.0)
    np.testing.assert_array_equal(z, gen_signal("sparse_1d", 100, sparsity=5, seed=3))
    assert not np.array_equal(z, gen_signal("sparse_1d", 100, sparsity=5, seed=4))
    z2 = gen_signal("sparse_2d", (8, 9), sparsity=7, seed=1)
    assert z2.shape == (72,) and np.count_nonzero(z2) == 7


def test_phases_are_uniform():
    z = gen_signal("piecewise_1d", 20000, seed=2)
    ph = np.angle(z)
    assert np.all(ph >= -np.pi) and np.all(ph <= np.pi)
    assert abs(np.mean(np.exp(1j * ph))) < 0.03
    r = gen_signal("piecewise_1d", 200, seed=2, real=True)
    np.testing.assert_array_equal(r.imag, 0.0)


def test_shepp_logan_phantom():
    img = shepp_logan(64)
    assert img.shape == (64, 64)
    assert img.min() >= 0 and img.max() == pytest.approx(1.0)
    # skull ring at 1, brain at 0.2, upper ellipse adds 0.1
    assert img[32, 10] == pytest.approx(1.0)
    assert img[32, 3] == 0.0
    assert img[40, 32] == pytest.approx(0.2)
    assert img[20, 32] == pytest.approx(0.3)
    assert np.abs(gen_signal("shepp_logan_2d", (32, 32), seed=0)).reshape(32, 32) == pytest.approx(shepp_logan(32))


def test_signal_errors():
    with pytest.raises(ParameterError):
        gen_signal("spiral", 10)
    with pytest.raises(DimensionError):
        gen_signal("sparse_2d", 10)
    with pytest.raises(ParameterError):
        gen_signal("sparse_1d", 10, sparsity=11)


def test_observation_sigma2_and_reproducibility():
    z = gen_signal("piecewise_1d", 200, seed=0)
    F = make_operator("dft", 200)
    y, sigma2 = gen_observation(z, F, 20.0, noise_seed=5)
    fz = F.apply(z)
    assert sigma2 == pytest.approx(np.vdot(fz, fz).real / (200 * 100))
    assert snr_db(F, z, 200, sigma2) == pytest.approx(20.0, abs=1e-12)
    y2, _ = gen_observation(z, F, 20.0, noise_seed=5)
    np.testing.assert_array_equal(y, y2)


def test_zero_db_noise_energy():
    z = gen_signal("sparse_1d", 64, sparsity=6, seed=1)
    F = make_operator("blur", 64)
    fz = F.apply(z)
    energy = [np.linalg.norm(gen_observation(z, F, 0.0, noise_seed=s)[0] - fz) ** 2 for s in range(100)]
    assert abs(np.mean(energy) - np.vdot(fz, fz).real) / np.vdot(fz, fz).real < 0.05


def test_real_noise_is_real():
    z = gen_signal("piecewise_1d", 50, real=True)
    F = make_operator("blur", 50)
    y, _ = gen_observation(z, F, 20.0, noise_seed=1, real_noise=True)
    np.testing.assert_array_equal(y.imag, 0.0)
