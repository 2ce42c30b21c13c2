"""Synthetic test signals and noisy observations."""

from __future__ import annotations

import logging
import math

import numpy as np

from .analysis import sigma2_for_snr
from .errors import DimensionError, ParameterError
from .randkit import sample_complex_gaussian

log = logging.getLogger(__name__)

SIGNAL_KINDS = ("sparse_1d", "piecewise_1d", "sparse_2d", "shepp_logan_2d")

# Modified Shepp-Logan phantom (Toft's contrast-enhanced variant):
# intensity, semi-axis x, semi-axis y, centre x, centre y, rotation in degrees
SHEPP_LOGAN_ELLIPSES = np.array(
    [
        [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
        [-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0],
        [-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0],
        [-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0],
        [0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0],
        [0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0],
        [0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0],
        [0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0],
        [0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0],
        [0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0],
    ]
)


def piecewise_magnitude(t):
    """Two plateaus on a unit baseline plus a Gaussian bump for ``t > 0``."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    out = np.where(t > 0, 1.0 + 1.5 * np.exp(-(((t - math.pi / 2) / (2.0 / 3.0)) ** 2)), out)
    out = np.where((t >= -1.6) & (t <= -1.3), 1.5, out)
    out = np.where((t >= -2.8) & (t <= -2.1), 2.0, out)
    return out if out.ndim else float(out)


def piecewise_grid(n: int = 200) -> np.ndarray:
    """Sample points ``t_j = -pi + j pi / 100`` for ``j = 1..n``."""
    return -math.pi + np.arange(1, n + 1) * math.pi / 100.0


def piecewise_jumps(n: int = 200) -> np.ndarray:
    """Indices ``i`` where the sampled magnitude jumps between ``i-1`` and ``i``."""
    g = piecewise_magnitude(piecewise_grid(n))
    t = piecewise_grid(n)
    d = np.abs(np.diff(g))
    idx = np.nonzero((d > 0.25) & (t[1:] <= 0))[0] + 1
    return idx


def uniform_phases(rng, shape) -> np.ndarray:
    return -math.pi + 2.0 * math.pi * rng.random(shape)


def _sparse(rng, shape, count):
    n = int(np.prod(shape))
    if not 0 < count <= n:
        raise ParameterError(f"on-pixel count must lie in 1..{n}")
    mag = np.zeros(n)
    mag[rng.choice(n, size=count, replace=False)] = 1.0
    return mag


def shepp_logan(n1: int, n2: int = None) -> np.ndarray:
    """Phantom intensities on an ``n1 x n2`` grid; row 0 is the top of the image."""
    n2 = n1 if n2 is None else n2
    ys = 1.0 - 2.0 * (np.arange(n1) + 0.5) / n1
    xs = -1.0 + 2.0 * (np.arange(n2) + 0.5) / n2
    x, y = np.meshgrid(xs, ys)
    img = np.zeros((n1, n2))
    for a, ax, ay, cx, cy, deg in SHEPP_LOGAN_ELLIPSES:
        th = math.radians(deg)
        xr = (x - cx) * math.cos(th) + (y - cy) * math.sin(th)
        yr = -(x - cx) * math.sin(th) + (y - cy) * math.cos(th)
        img[(xr / ax) ** 2 + (yr / ay) ** 2 <= 1.0] += a
    return np.clip(img, 0.0, None)


def gen_signal(kind: str, dims, sparsity: int = 5, seed: int = 0, real: bool = False) -> np.ndarray:
    """Complex ground truth, vectorized row-major for 2D kinds.

    Phases are i.i.d. uniform on [-pi, pi) unless ``real`` is set, in which
    case the magnitude itself is returned.
    """
    if kind not in SIGNAL_KINDS:
        raise ParameterError(f"unknown signal kind {kind!r}")
    dims = tuple(dims) if isinstance(dims, (tuple, list)) else (int(dims),)
    two_d = kind.endswith("_2d")
    if (len(dims) == 2) != two_d or any(d < 1 for d in dims):
        raise DimensionError(f"signal kind {kind} does not accept dims {dims}")
    rng = np.random.default_rng(seed)
    if kind == "piecewise_1d":
        mag = piecewise_magnitude(piecewise_grid(dims[0]))
    elif kind == "shepp_logan_2d":
        mag = shepp_logan(*dims).ravel()
    else:
        mag = _sparse(rng, dims, sparsity)
    if real:
        return mag.astype(complex)
    return mag * np.exp(1j * uniform_phases(rng, mag.shape[0]))


def gen_observation(signal, F, snr: float, noise_seed: int, real_noise: bool = False):
    """Noisy data ``y = F z + e`` at the requested SNR; returns ``(y, sigma2)``.

    ``real_noise`` adds real Gaussian noise of variance ``sigma2`` instead of
    circular complex noise, as used for real-valued problems.
    """
    signal = np.asarray(signal, dtype=complex)
    sigma2 = sigma2_for_snr(F, signal, F.m, snr)
    rng = np.random.default_rng(noise_seed)
    if real_noise:
        noise = math.sqrt(sigma2) * rng.standard_normal(F.m) + 0j
    else:
        noise = sample_complex_gaussian(rng, F.m, sigma2)
    fz = F.apply(signal)
    realized = 10.0 * math.log10(np.vdot(fz, fz).real / np.vdot(noise, noise).real)
    log.info("noise sigma2=%.6g, realized SNR %.3f dB (target %.3f dB)", sigma2, realized, snr)
    return fz + noise, sigma2
