"""Real-valued Bayesian LASSO Gibbs sampler over ``(x, tau2, eta^-2)``."""

from __future__ import annotations

import logging
import time
from typing import Optional

import numpy as np

from .chain import STEP_ETA, STEP_SIGNAL, STEP_TAU, ChainRecorder, ChainResult, GibbsConfig, RvblState, check_finite
from .errors import DimensionError, ParameterError
from .gsampler import CgConfig, GaussianTarget, sample_gaussian_po
from .linops import ForwardOperator, Sparsifier, SplitOperator, split
from .randkit import RngStream, as_generator, sample_gamma, sample_inverse_gaussian

log = logging.getLogger(__name__)


def x_target(y, F: ForwardOperator, L: Sparsifier, tau2, sigma2) -> GaussianTarget:
    """Conditional Gaussian of ``x`` with real likelihood weight ``1/sigma2``."""
    return GaussianTarget(
        sparsifier=L,
        prior_var=tau2,
        forward=SplitOperator(F),
        data=split(np.asarray(y, dtype=complex)),
        noise_var=sigma2,
        identity_normal=F.unitary,
    )


def sample_x_conditional(rng, y, F: ForwardOperator, L: Sparsifier, tau2, sigma2, cg: CgConfig = CgConfig(), x0=None):
    return sample_gaussian_po(as_generator(rng), x_target(y, F, L, tau2, sigma2), cg, x0=x0)


def sample_tau_conditional(rng, lx, eta_inv2: float, zero_threshold: float = 1e-8):
    """Draw ``tau2`` given the transformed signal ``L x``.

    Entries with ``|Lx_j| >= zero_threshold`` go through the inverse
    Gaussian on ``1/tau2_j``; the rest use ``Gamma(1/2, eta^-2/2)``.
    """
    if not eta_inv2 > 0:
        raise ParameterError("eta_inv2 must be positive")
    gen = as_generator(rng)
    mag = np.abs(np.asarray(lx, dtype=float))
    big = mag >= zero_threshold
    safe = np.where(big, mag, 1.0)
    nu2 = sample_inverse_gaussian(gen, np.sqrt(eta_inv2) / safe, np.full(mag.shape, float(eta_inv2)))
    tau2 = 1.0 / np.atleast_1d(nu2)
    n_small = int(np.count_nonzero(~big))
    if n_small:
        log.debug("tau2: %d coordinates below the zero threshold, using the Gamma branch", n_small)
        tau2[~big] = np.atleast_1d(sample_gamma(gen, 0.5, eta_inv2 / 2.0, size=n_small))
    return tau2


def sample_eta_conditional(rng, tau2, r: float = 1.0, delta: float = 1e-3, fixed: Optional[float] = None) -> float:
    """Gamma draw of ``eta^-2``; returns ``fixed`` unchanged when given."""
    if fixed is not None:
        return float(fixed)
    tau2 = np.asarray(tau2, dtype=float)
    return float(sample_gamma(as_generator(rng), r + tau2.shape[0], delta + 0.5 * tau2.sum()))


def _check_dims(y, F, L):
    if np.asarray(y).shape != (F.m,):
        raise DimensionError(f"y must have length {F.m}")
    if L.n != F.n:
        raise DimensionError("sparsifier and operator disagree on n")


def rvbl_run(
    stream: RngStream,
    y,
    F: ForwardOperator,
    L: Sparsifier,
    cfg: GibbsConfig,
    state: Optional[RvblState] = None,
    start: int = 0,
) -> ChainResult:
    """Run iterations ``start+1 .. cfg.n_iter``.

    Passing the ``state`` returned by a shorter run together with its
    ``last_iteration`` as ``start`` continues that chain bit-exactly.
    """
    _check_dims(y, F, L)
    y = np.asarray(y, dtype=complex)
    t0 = time.perf_counter()
    fixed = cfg.fixed_eta_inv2
    if state is None:
        state = RvblState(
            x=SplitOperator(F).adjoint(split(y)),
            tau2=np.ones(L.k),
            eta_inv2=fixed if fixed is not None else 1.0,
        )
    else:
        state = RvblState(state.x.copy(), state.tau2.copy(), state.eta_inv2)
    rec = ChainRecorder(cfg, ["x"], F.n, L.k, start)
    for it in range(start + 1, cfg.n_iter + 1):
        state.x = sample_x_conditional(stream.substream(it, STEP_SIGNAL), y, F, L, state.tau2, cfg.sigma2, cfg.cg)
        state.tau2 = sample_tau_conditional(stream.substream(it, STEP_TAU), L.apply(state.x), state.eta_inv2, cfg.zero_threshold)
        state.eta_inv2 = sample_eta_conditional(stream.substream(it, STEP_ETA), state.tau2, cfg.r, cfg.delta, fixed)
        check_finite(state, it)
        rec.record(it, {"x": state.x}, state.tau2, state.eta_inv2)
    return rec.result("rvbl", state, stream.describe(), time.perf_counter() - t0)
