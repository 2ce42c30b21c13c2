"""Posterior summaries, circular KDE, SNR calibration and error metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import i0e, ive

from .errors import DimensionError, ParameterError
from .randkit import wrap_angle

KDE_MIN_STD_CELLS = 3.0
KDE_METHOD = "von Mises kernel, rule-of-thumb concentration from the mean resultant length"


def _signal_power(F, z):
    fz = F.apply(np.asarray(z, dtype=complex))
    power = float(np.vdot(fz, fz).real)
    if power == 0.0:
        raise ParameterError("signal has zero energy; SNR is undefined")
    return power


def snr_db(F, z, m: int, sigma2: float) -> float:
    """``10 log10(||F z||^2 / (m sigma2))``."""
    if not sigma2 > 0 or m < 1:
        raise ParameterError("need sigma2 > 0 and m >= 1")
    return 10.0 * math.log10(_signal_power(F, z) / (m * sigma2))


def sigma2_for_snr(F, z, m: int, snr: float) -> float:
    if m < 1:
        raise ParameterError("m must be >= 1")
    return _signal_power(F, z) / (m * 10.0 ** (snr / 10.0))


def credible_interval(samples, beta: float = 0.9):
    """Equal-tailed per-column interval from linearly interpolated quantiles."""
    if not 0.0 < beta < 1.0:
        raise ParameterError("beta must lie in (0, 1)")
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] < 10:
        raise ParameterError("need at least 10 samples")
    tail = (1.0 - beta) / 2.0
    lo, hi = np.quantile(samples, [tail, 1.0 - tail], axis=0, method="linear")
    return lo, hi


def kde_grid(size: int = 512) -> np.ndarray:
    """Uniform periodic grid of ``size`` angles on [-pi, pi)."""
    return -math.pi + 2.0 * math.pi * np.arange(size) / size


def _kappa_from_resultant(r: float) -> float:
    # piecewise approximation to the inverse of I1/I0
    if r < 0.53:
        return 2 * r + r**3 + 5 * r**5 / 6
    if r < 0.85:
        return -0.4 + 1.39 * r + 0.43 / (1 - r)
    denom = r**3 - 4 * r**2 + 3 * r
    if r >= 1.0 or denom <= 0.0:
        return math.inf
    return 1.0 / denom


def kde_concentration(samples, grid_step: Optional[float] = None) -> float:
    """Plug-in kernel concentration for a von Mises KDE.

    Uses a von Mises reference fit through the mean resultant length;
    the result grows like ``S^(2/5)``. With ``grid_step`` the kernel is kept
    at least three grid cells wide.
    """
    samples = np.asarray(samples, dtype=float)
    s = samples.shape[0]
    r = float(np.abs(np.mean(np.exp(1j * samples))))
    kh = _kappa_from_resultant(r)
    cap = math.inf if grid_step is None else 1.0 / (KDE_MIN_STD_CELLS * grid_step) ** 2
    if not math.isfinite(kh) or kh > 1e6:
        return cap if math.isfinite(cap) else 1e6
    ratio = 3.0 * kh * kh * ive(2, 2.0 * kh) / (4.0 * math.sqrt(math.pi) * i0e(kh) ** 2)
    kappa = (s * ratio) ** 0.4
    return float(min(max(kappa, 1e-12), cap))


def circular_kde(samples, grid, kappa: Optional[float] = None, chunk: int = 4096) -> np.ndarray:
    """Density of the angles in ``samples`` on ``grid`` using a von Mises kernel."""
    samples = np.asarray(samples, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float)
    if samples.shape[0] < 10:
        raise ParameterError("need at least 10 samples")
    step = 2.0 * math.pi / grid.shape[0]
    if kappa is None:
        kappa = kde_concentration(samples, step)
    norm = 1.0 / (2.0 * math.pi * i0e(kappa))
    dens = np.zeros(grid.shape[0])
    for start in range(0, samples.shape[0], chunk):
        block = samples[start : start + chunk]
        dens += np.exp(kappa * (np.cos(grid[:, None] - block[None, :]) - 1.0)).sum(axis=1)
    return dens * norm / samples.shape[0]


def hdr_threshold(density, level: float = 0.9) -> float:
    """Density level whose superlevel set carries ``level`` of the mass on a uniform grid."""
    density = np.asarray(density, dtype=float)
    step = 2.0 * math.pi / density.shape[0]
    order = np.sort(density)[::-1]
    mass = np.cumsum(order) * step
    idx = int(np.searchsorted(mass, level * mass[-1]))
    return float(order[min(idx, order.shape[0] - 1)])


def in_hdr(density, grid, theta: float, level: float = 0.9) -> bool:
    """Whether angle ``theta`` lies in the ``level`` highest-density region."""
    density = np.asarray(density, dtype=float)
    grid = np.asarray(grid, dtype=float)
    g = density.shape[0]
    step = 2.0 * math.pi / g
    pos = (wrap_angle(theta) - grid[0]) / step
    i0 = int(math.floor(pos)) % g
    frac = pos - math.floor(pos)
    value = (1 - frac) * density[i0] + frac * density[(i0 + 1) % g]
    return bool(value >= hdr_threshold(density, level))


def circular_mean(angles, axis=0):
    return np.angle(np.mean(np.exp(1j * np.asarray(angles)), axis=axis))


def circular_distance(a, b):
    return np.abs(wrap_angle(np.asarray(a) - np.asarray(b)))


def error_metrics(
    truth,
    estimate=None,
    mag_samples=None,
    phase_samples=None,
    beta: float = 0.9,
    support_frac: float = 0.05,
) -> dict:
    """Magnitude and phase errors of a point estimate or a sample set.

    With samples, the magnitude estimate is the sample mean and the phase
    estimate the circular mean; coverage is the share of pixels whose true
    magnitude lies inside the ``beta`` credible interval (NaN without
    magnitude samples).
    """
    truth = np.asarray(truth, dtype=complex)
    g = np.abs(truth)
    if estimate is not None:
        estimate = np.asarray(estimate, dtype=complex)
        if estimate.shape != truth.shape:
            raise DimensionError("estimate and truth differ in shape")
        g_hat = np.abs(estimate)
        phi_hat = np.angle(estimate)
    else:
        if mag_samples is None or phase_samples is None:
            raise ParameterError("pass an estimate or magnitude and phase samples")
        mag_samples = np.asarray(mag_samples, dtype=float)
        if mag_samples.shape[1:] != truth.shape or np.shape(phase_samples)[1:] != truth.shape:
            raise DimensionError("samples and truth differ in shape")
        g_hat = mag_samples.mean(axis=0)
        phi_hat = circular_mean(phase_samples)
    dist = circular_distance(phi_hat, np.angle(truth))
    support = g > support_frac * g.max()
    coverage = float("nan")
    if mag_samples is not None:
        lo, hi = credible_interval(mag_samples, beta)
        coverage = float(np.mean((g >= lo) & (g <= hi)))
    return {
        "mag_rel_l2": float(np.linalg.norm(g_hat - g) / np.linalg.norm(g)),
        "phase_mae_all": float(np.mean(dist)),
        "phase_mae_support": float(np.mean(dist[support])) if np.any(support) else float("nan"),
        "coverage_fraction": coverage,
    }


def batch_means_se(x, n_batches: int = 50) -> np.ndarray:
    """Monte Carlo standard error of a chain mean by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    size = x.shape[0] // n_batches
    if size < 1:
        raise ParameterError("chain too short for the requested number of batches")
    means = x[: size * n_batches].reshape(n_batches, size, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(n_batches)


@dataclass
class PosteriorSummary:
    beta: float
    mean_magnitude: np.ndarray
    mean_real: np.ndarray
    mean_imag: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    eta_inv2_mean: float
    eta_inv2_std: float
    eta_mean: float
    covered: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def coverage_fraction(self) -> float:
        return float("nan") if self.covered is None else float(np.mean(self.covered))

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "eta_inv2_mean": self.eta_inv2_mean,
            "eta_inv2_std": self.eta_inv2_std,
            "eta_mean": self.eta_mean,
            "coverage_fraction": self.coverage_fraction,
            **self.extra,
        }

    def write_pixels(self, path, truth=None, header_lines=()):
        truth_mag = None if truth is None else np.abs(np.asarray(truth))
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["pixel", "mean_mag", "mean_re", "mean_im", "lower", "upper", "truth_mag", "covered"])
            for j in range(self.mean_magnitude.shape[0]):
                w.writerow(
                    [
                        j,
                        repr(float(self.mean_magnitude[j])),
                        repr(float(self.mean_real[j])),
                        repr(float(self.mean_imag[j])),
                        repr(float(self.lower[j])),
                        repr(float(self.upper[j])),
                        "" if truth_mag is None else repr(float(truth_mag[j])),
                        "" if self.covered is None else int(self.covered[j]),
                    ]
                )


def summarize_chain(result, beta: float = 0.9, truth=None) -> PosteriorSummary:
    """Per-pixel posterior summary of a :class:`~cvbl.chain.ChainResult`."""
    z = result.z
    mag = result.magnitude
    lo, hi = credible_interval(mag, beta)
    covered = None
    if truth is not None:
        g = np.abs(np.asarray(truth))
        covered = (g >= lo) & (g <= hi)
    eta_inv2 = np.asarray(result.eta_inv2)
    return PosteriorSummary(
        beta=beta,
        mean_magnitude=mag.mean(axis=0),
        mean_real=np.real(z).mean(axis=0),
        mean_imag=np.imag(z).mean(axis=0),
        lower=lo,
        upper=hi,
        eta_inv2_mean=float(eta_inv2.mean()),
        eta_inv2_std=float(eta_inv2.std()),
        eta_mean=float(np.mean(1.0 / np.sqrt(eta_inv2))),
        covered=covered,
    )
