import math

import numpy as np
import pytest

from cvbl.linops import dense_operator, make_operator


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_unitary(rng, n):
    q, r = np.linalg.qr(random_complex(rng, n, n))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def bessel_ratio_series(order_num, order_den, x, terms=200):
    """I_a(x) / I_b(x) from the defining power series."""

    def series(nu):
        total = 0.0
        for k in range(terms):
            total += math.exp((2 * k + nu) * math.log(x / 2) - math.lgamma(k + 1) - math.lgamma(k + nu + 1))
        return total

    return series(order_num) / series(order_den)


def all_operators(n=16, dims2=(6, 5)):
    rng = np.random.default_rng(11)
    return [
        make_operator("dft", n),
        make_operator("blur", n),
        make_operator("blur", n, blur_sigma=1.5),
        make_operator("undersampled_dft", n, nu=0.6, mask_seed=3),
        make_operator("dft", dims2),
        make_operator("blur", dims2),
        make_operator("undersampled_dft", dims2, nu=0.5, mask_seed=1),
        dense_operator(random_complex(rng, n - 3, n)),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
