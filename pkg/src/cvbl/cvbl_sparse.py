"""Gibbs sampler for complex signals with a sparse magnitude.

Real and imaginary parts are updated in turn as Gaussians that share one
scale-mixture variance per pixel.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from .chain import (
    STEP_ETA,
    STEP_SIGNAL,
    STEP_SIGNAL_B,
    STEP_TAU,
    ChainRecorder,
    ChainResult,
    CvblSparseState,
    GibbsConfig,
    check_finite,
)
from .errors import DimensionError
from .gsampler import CgConfig, GaussianTarget, sample_gaussian_po
from .linops import ForwardOperator, SplitOperator, make_sparsifier, split
from .randkit import RngStream, as_generator
from .rvbl import sample_eta_conditional, sample_tau_conditional


def split_residuals(y, F: ForwardOperator, a, b):
    """Return ``(y1, y2)``: the split data with the imaginary (resp. real) part removed."""
    y = np.asarray(y, dtype=complex)
    if y.shape != (F.m,):
        raise DimensionError(f"y must have length {F.m}")
    yt = split(y)
    y1 = yt - SplitOperator.imag_part(F).apply(b)
    y2 = yt - SplitOperator.real_part(F).apply(a)
    return y1, y2


def part_target(split_op: SplitOperator, data, tau2, sigma2) -> GaussianTarget:
    return GaussianTarget(
        sparsifier=make_sparsifier("identity", split_op.n),
        prior_var=tau2,
        forward=split_op,
        data=data,
        noise_var=sigma2 / 2.0,
        identity_normal=split_op.op.unitary,
    )


def sample_a_conditional(rng, y1, F: ForwardOperator, tau2, sigma2, cg: CgConfig = CgConfig()):
    return sample_gaussian_po(as_generator(rng), part_target(SplitOperator.real_part(F), y1, tau2, sigma2), cg)


def sample_b_conditional(rng, y2, F: ForwardOperator, tau2, sigma2, cg: CgConfig = CgConfig()):
    return sample_gaussian_po(as_generator(rng), part_target(SplitOperator.imag_part(F), y2, tau2, sigma2), cg)


def sample_tau_conditional_complex(rng, a, b, eta_inv2: float, zero_threshold: float = 1e-8):
    return sample_tau_conditional(rng, np.hypot(a, b), eta_inv2, zero_threshold)


def cvbl_sparse_run(
    stream: RngStream,
    y,
    F: ForwardOperator,
    cfg: GibbsConfig,
    state: Optional[CvblSparseState] = None,
    start: int = 0,
) -> ChainResult:
    y = np.asarray(y, dtype=complex)
    if y.shape != (F.m,):
        raise DimensionError(f"y must have length {F.m}")
    t0 = time.perf_counter()
    fixed = cfg.fixed_eta_inv2
    if state is None:
        z0 = F.adjoint(y)
        state = CvblSparseState(
            a=z0.real.copy(),
            b=z0.imag.copy(),
            tau2=np.ones(F.n),
            eta_inv2=fixed if fixed is not None else 1.0,
        )
    else:
        state = CvblSparseState(state.a.copy(), state.b.copy(), state.tau2.copy(), state.eta_inv2)
    rec = ChainRecorder(cfg, ["re_z", "im_z"], F.n, F.n, start)
    for it in range(start + 1, cfg.n_iter + 1):
        y1, _ = split_residuals(y, F, state.a, state.b)
        state.a = sample_a_conditional(stream.substream(it, STEP_SIGNAL), y1, F, state.tau2, cfg.sigma2, cfg.cg)
        _, y2 = split_residuals(y, F, state.a, state.b)
        state.b = sample_b_conditional(stream.substream(it, STEP_SIGNAL_B), y2, F, state.tau2, cfg.sigma2, cfg.cg)
        state.tau2 = sample_tau_conditional_complex(
            stream.substream(it, STEP_TAU), state.a, state.b, state.eta_inv2, cfg.zero_threshold
        )
        state.eta_inv2 = sample_eta_conditional(stream.substream(it, STEP_ETA), state.tau2, cfg.r, cfg.delta, fixed)
        check_finite(state, it)
        rec.record(it, {"re_z": state.a, "im_z": state.b}, state.tau2, state.eta_inv2)
    return rec.result("cvbl_sparse", state, stream.describe(), time.perf_counter() - t0)
