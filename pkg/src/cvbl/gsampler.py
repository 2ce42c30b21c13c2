"""Gaussian sampling by perturbation-optimization, plus orthant truncation.

A target is the posterior of ``x`` under the prior ``L x ~ N(mu_p, D(tau2))``
and the likelihood ``d ~ N(A x, s I)`` where ``A`` is a real (split) forward
map. Its precision is ``L^T D(tau2)^-1 L + A^T A / s``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, ParameterError, TruncationError

log = logging.getLogger(__name__)

RSM_MAX_PROPOSALS = 10_000


@dataclass(frozen=True)
class CgConfig:
    rel_tol: float = 1e-8
    max_iters: Optional[int] = None  # None -> 10 n
    preconditioner: str = "none"

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ParameterError("rel_tol must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ParameterError(f"unknown preconditioner {self.preconditioner!r}")

    def iters_for(self, n: int) -> int:
        return self.max_iters if self.max_iters is not None else 10 * n


@dataclass
class CgInfo:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = False


def _dot(u, v):
    return float(np.real(np.vdot(u, v)))


def cg_solve(
    apply_a: Callable,
    b,
    cfg: CgConfig = CgConfig(),
    x0=None,
    diag=None,
    info: Optional[CgInfo] = None,
    callback: Optional[Callable] = None,
):
    """Conjugate gradients for ``A x = b`` with ``A`` symmetric (Hermitian) positive definite.

    Stops once ``||A x - b|| <= rel_tol ||b||``. ``diag`` is the diagonal of
    ``A`` and is only used with the Jacobi preconditioner. ``callback`` is
    called with each new iterate. Raises :class:`ConvergenceError` after
    ``max_iters`` iterations.
    """
    b = np.asarray(b)
    n = b.shape[0]
    info = info if info is not None else CgInfo()
    bnorm = math.sqrt(_dot(b, b))
    if bnorm == 0.0:
        info.converged = True
        info.residuals.append(0.0)
        return np.zeros_like(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=b.dtype)
    r = b - apply_a(x) if x0 is not None else b.copy()
    use_jacobi = cfg.preconditioner == "jacobi"
    if use_jacobi:
        if diag is None:
            raise ParameterError("jacobi preconditioner needs the diagonal of A")
        inv_diag = 1.0 / np.asarray(diag)
    zvec = inv_diag * r if use_jacobi else r
    p = zvec.copy()
    rz = _dot(r, zvec)
    tol = cfg.rel_tol * bnorm
    rnorm = math.sqrt(_dot(r, r))
    info.residuals.append(rnorm)
    max_iters = cfg.iters_for(n)
    it = 0
    while rnorm > tol:
        if it >= max_iters:
            info.iterations = it
            raise ConvergenceError(
                f"CG did not converge in {max_iters} iterations (residual {rnorm:.3e}, target {tol:.3e})",
                residual=rnorm,
                iterations=it,
            )
        ap = apply_a(p)
        pap = _dot(p, ap)
        if pap <= 0:
            raise ConvergenceError("operator is not positive definite along a search direction", residual=rnorm, iterations=it)
        alpha = rz / pap
        x = x + alpha * p
        r = r - alpha * ap
        zvec = inv_diag * r if use_jacobi else r
        rz_new = _dot(r, zvec)
        p = zvec + (rz_new / rz) * p
        rz = rz_new
        rnorm = math.sqrt(_dot(r, r))
        info.residuals.append(rnorm)
        it += 1
        if callback is not None:
            callback(x)
    info.iterations = it
    info.converged = True
    return x


@dataclass
class GaussianTarget:
    """Posterior Gaussian defined through a prior on ``L x`` and a linear likelihood.

    ``forward``/``data`` may be ``None`` for a prior-only target. Set
    ``identity_normal`` when ``forward^T forward`` is the identity (unitary
    ``F``) so the precision skips the forward/adjoint pair.
    """

    sparsifier: object
    prior_var: np.ndarray
    prior_mean: Optional[np.ndarray] = None
    forward: Optional[object] = None
    data: Optional[np.ndarray] = None
    noise_var: float = 1.0
    identity_normal: bool = False

    def __post_init__(self):
        self.prior_var = np.asarray(self.prior_var, dtype=float)
        if self.prior_var.shape != (self.sparsifier.k,):
            raise ParameterError("prior_var must have one entry per row of L")
        if np.any(~(self.prior_var > 0)) or not np.all(np.isfinite(self.prior_var)):
            raise ParameterError("prior variances must be finite and positive")
        if self.prior_mean is None:
            self.prior_mean = np.zeros(self.sparsifier.k)
        if not self.noise_var > 0:
            raise ParameterError("noise variance must be positive")
        if (self.forward is None) != (self.data is None):
            raise ParameterError("forward and data must be given together")

    @property
    def n(self) -> int:
        return self.sparsifier.n

    def precision(self, v):
        out = self.sparsifier.adjoint(self.sparsifier.apply(v) / self.prior_var)
        if self.forward is not None:
            if self.identity_normal:
                out = out + v / self.noise_var
            else:
                out = out + self.forward.adjoint(self.forward.apply(v)) / self.noise_var
        return out

    def rhs(self, prior_mean, data):
        out = self.sparsifier.adjoint(prior_mean / self.prior_var)
        if self.forward is not None:
            out = out + self.forward.adjoint(data) / self.noise_var
        return out

    def precision_diag(self):
        d = self.sparsifier.gram_diag(1.0 / self.prior_var)
        if self.forward is not None:
            if self.identity_normal:
                d = d + 1.0 / self.noise_var
            else:
                d = d + self.forward.column_norms2() / self.noise_var
        return d

    def mean(self, cfg: CgConfig = CgConfig(), x0=None):
        return cg_solve(self.precision, self.rhs(self.prior_mean, self.data), cfg, x0=x0, diag=self._diag(cfg))

    def precision_dense(self):
        eye = np.eye(self.n)
        return np.stack([self.precision(eye[:, j]) for j in range(self.n)], axis=1)

    def _diag(self, cfg):
        return self.precision_diag() if cfg.preconditioner == "jacobi" else None


def sample_gaussian_po(gen: np.random.Generator, target: GaussianTarget, cfg: CgConfig = CgConfig(), x0=None, info=None):
    """One draw from the target Gaussian by perturbation-optimization.

    The prior mean and the data are perturbed with their own covariances and
    the normal equations are solved by CG, so the result is exact up to the
    CG tolerance.
    """
    mu = target.prior_mean + np.sqrt(target.prior_var) * gen.standard_normal(target.prior_var.shape[0])
    data = None
    if target.forward is not None:
        data = target.data + math.sqrt(target.noise_var) * gen.standard_normal(target.data.shape[0])
    x = cg_solve(target.precision, target.rhs(mu, data), cfg, x0=x0, diag=target._diag(cfg), info=info)
    if info is not None:
        log.debug("PO draw: %d CG iterations", info.iterations)
    return x


def nonneg_mode(target: GaussianTarget, mean, cfg: CgConfig = CgConfig(), kkt_tol=1e-8, max_iters=500):
    """Mode of the target restricted to ``x >= 0``.

    Minimizes ``(x - mean)^T Gamma (x - mean) / 2`` by projected Newton
    steps whose reduced systems are solved by CG on the free set, falling
    back to a projected gradient step when the Newton step does not
    decrease the objective.
    """
    mean = np.asarray(mean, dtype=float)
    x = np.maximum(mean, 0.0)
    scale = max(1.0, float(np.max(np.abs(target.precision(mean)))))

    def objective(v):
        d = v - mean
        return 0.5 * _dot(d, target.precision(d))

    for _ in range(max_iters):
        grad = target.precision(x - mean)
        kkt = np.max(np.abs(x - np.maximum(x - grad, 0.0))) if x.size else 0.0
        if kkt <= kkt_tol * scale:
            return x
        free = (x > 0) | (grad < 0)
        f0 = objective(x)
        step = np.zeros_like(x)
        if np.any(free):
            def reduced(v):
                full = np.zeros_like(x)
                full[free] = v
                return target.precision(full)[free]

            try:
                step[free] = cg_solve(reduced, -grad[free], CgConfig(rel_tol=min(cfg.rel_tol, 1e-10)))
            except ConvergenceError:
                step[free] = -grad[free]
        alpha = 1.0
        improved = False
        for _ in range(40):
            cand = np.maximum(x + alpha * step, 0.0)
            if objective(cand) <= f0 - 1e-4 * _dot(grad, x - cand) and np.any(cand != x):
                improved = True
                break
            alpha *= 0.5
        if not improved:
            # projected gradient with exact step along -grad
            g_step = np.where(free, -grad, 0.0)
            gg = _dot(g_step, target.precision(g_step))
            if gg <= 0:
                return x
            cand = np.maximum(x + (_dot(g_step, g_step) / gg) * g_step, 0.0)
            if objective(cand) >= f0:
                return x
        x = cand
    return x


def sample_truncated_nonneg(
    gen: np.random.Generator,
    target: GaussianTarget,
    n_s: int = 10,
    cfg: CgConfig = CgConfig(),
    max_proposals: int = RSM_MAX_PROPOSALS,
    x0=None,
):
    """Draw from the target restricted to the nonnegative orthant.

    Tries up to ``n_s`` plain untruncated draws; if none is nonnegative,
    switches to rejection sampling from the mode: proposals are the
    untruncated draws shifted so that they are centred at the constrained
    mode, negative proposals are discarded, and the rest are accepted with
    probability ``exp(-(x - mode)^T Gamma (mode - mean))``.

    Returns ``(x, attempts, used_rsm)``.
    """
    if n_s < 1:
        raise ParameterError("n_s must be >= 1")
    attempts = 0
    for _ in range(n_s):
        x = sample_gaussian_po(gen, target, cfg, x0=x0)
        attempts += 1
        if np.all(x >= 0):
            return x, attempts, False

    mean = target.mean(cfg, x0=x0)
    mode = nonneg_mode(target, mean, cfg)
    grad = target.precision(mode - mean)
    # KKT: grad vanishes on the free set and is >= 0 on the active set
    grad = np.where(mode > 0, 0.0, np.maximum(grad, 0.0))
    for _ in range(max_proposals):
        x = sample_gaussian_po(gen, target, cfg, x0=x0) - mean + mode
        u = gen.random()
        attempts += 1
        if np.any(x < 0):
            continue
        if math.log(u) <= -_dot(x - mode, grad):
            return x, attempts, True
    raise TruncationError(
        f"rejection from the mode produced no sample in {max_proposals} proposals; "
        "the truncated density has very little mass, check sigma2/tau2"
    )
