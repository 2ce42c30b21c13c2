"""Seeded random variate generators used by the Gibbs samplers.

All samplers take a :class:`numpy.random.Generator`. :class:`RngStream`
hands out counter-keyed substreams so that a chain step at iteration ``l``
always consumes the same variates, whatever happened before it and
however the work inside the step is scheduled.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError

GENERATOR_ALGORITHM = "numpy.random.Philox"
GENERATOR_VERSION = f"numpy-{np.__version__}"

TWO_PI = 2.0 * math.pi


class RngStream:
    """Independent random stream identified by ``(seed, stream_id)``.

    ``substream(*key)`` returns a fresh Philox generator determined only by
    ``(seed, stream_id, *key)``; the samplers key it by
    ``(iteration, step)``.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ParameterError("seed and stream_id must be nonnegative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)

    def substream(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *map(int, key)))
        return np.random.Generator(np.random.Philox(ss))

    def generator(self) -> np.random.Generator:
        return self.substream()

    def describe(self) -> dict:
        return {
            "algorithm": GENERATOR_ALGORITHM,
            "version": GENERATOR_VERSION,
            "seed": self.seed,
            "stream_id": self.stream_id,
        }

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def wrap_angle(theta):
    """Map angles to [-pi, pi)."""
    out = np.mod(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi
    # np.mod can round up to exactly 2*pi for tiny negative inputs
    out = np.where(out >= math.pi, -math.pi, out)
    return out if out.ndim else float(out)


def _check_positive(name, value):
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)) or np.any(value <= 0):
        raise ParameterError(f"{name} must be finite and positive")
    return value


def sample_inverse_gaussian(rng, mu, lam, size=None):
    """Inverse Gaussian (Wald) draws by transformation with root selection.

    One normal variate ``v`` gives the smaller root
    ``x = mu / (1 + w + sqrt(w (w + 2)))`` with ``w = mu v^2 / (2 lam)``;
    a uniform then keeps ``x`` with probability ``mu / (mu + x)`` and
    otherwise returns ``mu^2 / x``.
    """
    mu = _check_positive("mu", mu)
    lam = _check_positive("lam", lam)
    gen = as_generator(rng)
    shape = np.broadcast(mu, lam).shape if size is None else size
    v = gen.standard_normal(shape)
    u = gen.random(shape)
    w = mu * v * v / (2.0 * lam)
    x = mu / (1.0 + w + np.sqrt(w * (w + 2.0)))
    out = np.where(u * (mu + x) <= mu, x, mu * mu / x)
    return out if np.ndim(out) else float(out)


def sample_gamma(rng, shape, rate, size=None):
    """Gamma draws parameterized by shape and rate (mean ``shape/rate``)."""
    shape = _check_positive("shape", shape)
    rate = _check_positive("rate", rate)
    gen = as_generator(rng)
    out = gen.gamma(shape, 1.0 / rate, size=size)
    return out if np.ndim(out) else float(out)


def _vm_envelope(kappa):
    # rho computed without the cancellation in (tau - sqrt(2 tau)) at small kappa
    s = np.sqrt(1.0 + 4.0 * kappa * kappa)
    tau = 1.0 + s
    rho = 2.0 * kappa * tau / ((s + 1.0) * (tau + np.sqrt(2.0 * tau)))
    r = (1.0 + rho * rho) / (2.0 * rho)
    return r


def von_mises_batch(gen: np.random.Generator, mu, kappa, return_trials=False):
    """Vectorized von Mises draws via the wrapped-Cauchy envelope.

    Coordinates with ``kappa == 0`` are drawn uniformly. Every rejection
    round draws three uniforms for every coordinate, so the variates used by
    coordinate ``i`` depend only on ``i`` and the generator state, never on
    which other coordinates were rejected.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    mu, kappa = np.broadcast_arrays(mu, kappa)
    n = mu.shape[0]
    theta = np.empty(n)
    trials = np.zeros(n, dtype=np.int64)
    pending = kappa > 0
    uniform = ~pending
    if np.any(uniform):
        theta[uniform] = 0.0
    r = np.ones(n)
    r[pending] = _vm_envelope(kappa[pending])
    first = True
    while first or np.any(pending):
        u = gen.random((n, 3))
        if first:
            # kappa == 0 coordinates take their uniform angle from round one
            theta[uniform] = TWO_PI * u[uniform, 0] - math.pi
            first = False
        idx = np.nonzero(pending)[0]
        if idx.size == 0:
            break
        rr = r[idx]
        kk = kappa[idx]
        z = np.cos(math.pi * u[idx, 0])
        f = (1.0 + rr * z) / (rr + z)
        c = kk * (rr - f)
        u2 = u[idx, 1]
        accept = c * (2.0 - c) - u2 > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            accept |= np.log(c / u2) + 1.0 - c >= 0
        trials[idx] += 1
        acc = idx[accept]
        sign = np.where(u[acc, 2] - 0.5 >= 0, 1.0, -1.0)
        theta[acc] = sign * np.arccos(np.clip(f[accept], -1.0, 1.0)) + mu[acc]
        pending[acc] = False
    theta = wrap_angle(theta)
    theta = np.atleast_1d(theta)
    if return_trials:
        return theta, trials
    return theta


def sample_von_mises(rng, mu, kappa, size=None):
    """Von Mises(mu, kappa) draws in [-pi, pi); ``kappa`` must be positive."""
    kappa = np.asarray(kappa, dtype=float)
    if not np.all(np.isfinite(kappa)) or np.any(kappa <= 0):
        raise ParameterError("kappa must be finite and positive")
    mu = np.asarray(mu, dtype=float)
    if not np.all(np.isfinite(mu)):
        raise ParameterError("mu must be finite")
    gen = as_generator(rng)
    if size is None:
        shape = np.broadcast(mu, kappa).shape
    else:
        shape = (size,) if np.isscalar(size) else tuple(size)
    mu_b = np.broadcast_to(wrap_angle(mu), shape).ravel()
    kappa_b = np.broadcast_to(kappa, shape).ravel()
    out = von_mises_batch(gen, mu_b, kappa_b).reshape(shape)
    return out if out.ndim else float(out)


def sample_complex_gaussian(rng, m: int, sigma2: float) -> np.ndarray:
    """Central complex normal vector with covariance ``sigma2 * I``."""
    if int(m) < 1:
        raise ParameterError("m must be >= 1")
    _check_positive("sigma2", sigma2)
    gen = as_generator(rng)
    scale = math.sqrt(sigma2 / 2.0)
    w = gen.standard_normal((2, int(m)))
    return scale * (w[0] + 1j * w[1])
