"""Gibbs sampler for complex signals whose magnitude is sparse under ``L``.

The state is a magnitude ``g >= 0`` and a phase ``phi``; ``z = g * exp(i phi)``.
Each sweep draws a truncated Gaussian magnitude, the scale mixture
variances of ``L g``, the global ``eta^-2`` and finally the phases, whose
conditionals are von Mises.
"""

from __future__ import annotations

import logging
import math
import time
import weakref
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chain import (
    STEP_ETA,
    STEP_PHASE,
    STEP_SIGNAL,
    STEP_TAU,
    ChainRecorder,
    ChainResult,
    CvblTransformState,
    GibbsConfig,
    check_finite,
)
from .errors import DimensionError, ParameterError
from .gsampler import CgConfig, GaussianTarget, sample_gaussian_po, sample_truncated_nonneg
from .linops import ForwardOperator, Sparsifier, SplitOperator, split
from .randkit import RngStream, as_generator, von_mises_batch, wrap_angle
from .rvbl import sample_eta_conditional, sample_tau_conditional

log = logging.getLogger(__name__)

SEQUENTIAL_PHASE_MAX_N = 4096
PHASE_METHODS = ("auto", "product", "blocked", "sequential")


@dataclass(frozen=True)
class VonMisesParams:
    kappa: np.ndarray
    mu: np.ndarray


def magnitude_target(y, F: ForwardOperator, L: Sparsifier, phi, tau2, sigma2) -> GaussianTarget:
    """Untruncated Gaussian conditional of the magnitude given the phase."""
    return GaussianTarget(
        sparsifier=L,
        prior_var=tau2,
        forward=SplitOperator.with_phase(F, phi),
        data=split(np.asarray(y, dtype=complex)),
        noise_var=sigma2 / 2.0,
        identity_normal=F.unitary,
    )


def magnitude_conditional(
    rng,
    y,
    F: ForwardOperator,
    L: Sparsifier,
    phi,
    tau2,
    sigma2,
    n_s: int = 10,
    burn_in_phase: bool = False,
    cg: CgConfig = CgConfig(),
    return_info: bool = False,
):
    """Magnitude draw; during burn-in the absolute value of an untruncated draw.

    With ``return_info`` also returns ``(attempts, used_rsm)``.
    """
    gen = as_generator(rng)
    target = magnitude_target(y, F, L, phi, tau2, sigma2)
    if burn_in_phase:
        g, attempts, used_rsm = np.abs(sample_gaussian_po(gen, target, cg)), 1, False
    else:
        g, attempts, used_rsm = sample_truncated_nonneg(gen, target, n_s, cg)
    if return_info:
        return g, attempts, used_rsm
    return g


def _weighted_data(y, F, g):
    # F2^H y with F2 = F D(g)
    return np.asarray(g, dtype=float) * F.adjoint(np.asarray(y, dtype=complex))


def _coupling(F, g, theta):
    # A theta with A = F2^H F2
    return g * F.adjoint(F.apply(g * theta))


def _conditional_centers(y, F, g, phi):
    """Complex numbers ``c_i`` whose modulus and argument give ``(sigma2 kappa_i / 2, mu_i)``."""
    g = np.asarray(g, dtype=float)
    theta = np.exp(1j * np.asarray(phi, dtype=float))
    w = _weighted_data(y, F, g)
    diag = g * g * F.column_norms2()
    return w - (_coupling(F, g, theta) - diag * theta)


def phase_vm_params(y, F: ForwardOperator, g, sigma2, phi, i: Optional[int] = None):
    """Von Mises concentration and location of the phase conditional.

    For coordinate ``i`` returns ``(kappa_i, mu_i)``; with ``i=None`` returns
    a :class:`VonMisesParams` for every coordinate, each evaluated at the
    current values of the other phases.
    """
    if not sigma2 > 0:
        raise ParameterError("sigma2 must be positive")
    c = _conditional_centers(y, F, g, phi)
    kappa = 2.0 * np.abs(c) / sigma2
    mu = wrap_angle(np.arctan2(c.imag, c.real))
    if i is None:
        return VonMisesParams(kappa, np.atleast_1d(mu))
    return float(kappa[i]), float(np.atleast_1d(mu)[i])


def phase_colors(F: ForwardOperator) -> np.ndarray:
    """Color of each coordinate such that equal colors are never coupled through ``F^H F``."""
    p = 2 * F.bandwidth + 1
    idx = np.arange(F.n)
    if len(F.dims) == 1:
        return idx % p
    rows, cols = np.divmod(idx, F.dims[1])
    return (rows % p) * p + (cols % p)


_DENSE_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _dense(F):
    mat = _DENSE_CACHE.get(F)
    if mat is None:
        mat = F.to_dense()
        _DENSE_CACHE[F] = mat
    return mat


def _resolve_method(F, method):
    if method not in PHASE_METHODS:
        raise ParameterError(f"unknown phase method {method!r}")
    if method == "auto":
        if F.unitary:
            return "product"
        return "blocked" if F.bandwidth is not None else "sequential"
    if method == "product" and not F.unitary:
        raise ParameterError("product phase sampling needs a unitary operator")
    if method == "blocked" and F.bandwidth is None:
        raise ParameterError("blocked phase sampling needs a banded operator")
    return method


def sample_phase(rng, y, F: ForwardOperator, g, sigma2, phi, method: str = "auto"):
    """One phase update; coordinates with zero concentration are drawn uniformly.

    ``product`` draws all coordinates at once (unitary ``F``), ``blocked``
    sweeps the color classes of a banded ``F`` and ``sequential`` is a
    single-site sweep in index order using dense columns of ``F``.
    """
    method = _resolve_method(F, method)
    g = np.asarray(g, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if g.shape != (F.n,) or phi.shape != (F.n,):
        raise DimensionError(f"g and phi must have length {F.n}")
    if method == "product":
        gen = as_generator(rng)
        w = _weighted_data(y, F, g)
        return von_mises_batch(gen, np.angle(w), 2.0 * np.abs(w) / sigma2)
    if method == "blocked":
        return _sample_phase_blocked(rng, y, F, g, sigma2, phi)
    return _sample_phase_sequential(as_generator(rng), y, F, g, sigma2, phi)


def _sample_phase_blocked(rng, y, F, g, sigma2, phi):
    colors = phase_colors(F)
    keyed = isinstance(rng, _KeyedStream)
    gen = None if keyed else as_generator(rng)
    phi = phi.copy()
    w = _weighted_data(y, F, g)
    diag = g * g * F.column_norms2()
    for color in range(int(colors.max()) + 1):
        idx = np.nonzero(colors == color)[0]
        if idx.size == 0:
            continue
        theta = np.exp(1j * phi)
        c = w[idx] - (_coupling(F, g, theta)[idx] - diag[idx] * theta[idx])
        phi[idx] = von_mises_batch(rng.substream(color) if keyed else gen, np.arctan2(c.imag, c.real), 2.0 * np.abs(c) / sigma2)
    return phi


def _sample_phase_sequential(gen, y, F, g, sigma2, phi):
    if F.n > SEQUENTIAL_PHASE_MAX_N:
        raise ParameterError(
            f"sequential phase sweeps are limited to n <= {SEQUENTIAL_PHASE_MAX_N}; exact phase sampling "
            "for larger dense operators is not supported"
        )
    mat = _dense(F)
    phi = phi.copy()
    theta = np.exp(1j * phi)
    w = _weighted_data(y, F, g)
    diag = g * g * np.sum(np.abs(mat) ** 2, axis=0)
    resid = mat @ (g * theta)
    for i in range(F.n):
        col = mat[:, i]
        c = w[i] - (g[i] * np.vdot(col, resid) - diag[i] * theta[i])
        new = von_mises_batch(gen, [math.atan2(c.imag, c.real)], [2.0 * abs(c) / sigma2])[0]
        t_new = complex(math.cos(new), math.sin(new))
        resid += col * (g[i] * (t_new - theta[i]))
        theta[i] = t_new
        phi[i] = new
    return phi


class _KeyedStream:
    """Substream factory for one (iteration, step) pair."""

    def __init__(self, stream: RngStream, *key):
        self.stream = stream
        self.key = key

    def substream(self, *sub):
        return self.stream.substream(*self.key, *sub)


def cvbl_transform_run(
    stream: RngStream,
    y,
    F: ForwardOperator,
    L: Sparsifier,
    cfg: GibbsConfig,
    state: Optional[CvblTransformState] = None,
    start: int = 0,
) -> ChainResult:
    y = np.asarray(y, dtype=complex)
    if y.shape != (F.m,):
        raise DimensionError(f"y must have length {F.m}")
    if L.n != F.n:
        raise DimensionError("sparsifier and operator disagree on n")
    method = _resolve_method(F, cfg.phase_method)
    t0 = time.perf_counter()
    fixed = cfg.fixed_eta_inv2
    if state is None:
        z0 = F.adjoint(y)
        state = CvblTransformState(
            g=np.abs(z0),
            phi=wrap_angle(np.angle(z0)),
            tau2=np.ones(L.k),
            eta_inv2=fixed if fixed is not None else 1.0,
        )
    else:
        state = CvblTransformState(state.g.copy(), state.phi.copy(), state.tau2.copy(), state.eta_inv2)
    rec = ChainRecorder(cfg, ["g", "phi"], F.n, L.k, start)
    rec.add_counter("reject_count")
    rec.add_counter("rsm_used")
    for it in range(start + 1, cfg.n_iter + 1):
        state.g, attempts, used_rsm = magnitude_conditional(
            stream.substream(it, STEP_SIGNAL),
            y,
            F,
            L,
            state.phi,
            state.tau2,
            cfg.sigma2,
            n_s=cfg.n_s,
            burn_in_phase=it < cfg.burn_in,
            cg=cfg.cg,
            return_info=True,
        )
        if used_rsm:
            log.debug("iteration %d: magnitude drawn by rejection from the mode after %d attempts", it, attempts)
        state.tau2 = sample_tau_conditional(stream.substream(it, STEP_TAU), L.apply(state.g), state.eta_inv2, cfg.zero_threshold)
        state.eta_inv2 = sample_eta_conditional(stream.substream(it, STEP_ETA), state.tau2, cfg.r, cfg.delta, fixed)
        phase_rng = _KeyedStream(stream, it, STEP_PHASE) if method == "blocked" else stream.substream(it, STEP_PHASE)
        state.phi = sample_phase(phase_rng, y, F, state.g, cfg.sigma2, state.phi, method)
        check_finite(state, it)
        rec.record(
            it,
            {"g": state.g, "phi": state.phi},
            state.tau2,
            state.eta_inv2,
            {"reject_count": attempts - 1, "rsm_used": int(used_rsm)},
        )
    return rec.result("cvbl_transform", state, stream.describe(), time.perf_counter() - t0)
