"""Matrix-free forward operators, real/imaginary splittings and sparsifiers.

Every forward operator acts on complex vectors of length ``n`` and returns
complex vectors of length ``m``. Two-dimensional images are always
vectorized row-major (``image.ravel()`` / ``vec.reshape(n1, n2)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, ParameterError

OPERATOR_KINDS = ("dft", "blur", "undersampled_dft", "custom_dense")
SPARSIFIER_KINDS = ("identity", "first_difference_1d", "gradient_2d_stacked")

# 1D banded Toeplitz blur, entries 2^(2-|j-k|)/sqrt(26) for |j-k| <= 2
BLUR_KERNEL_1D = np.array([1.0, 2.0, 4.0, 2.0, 1.0]) / math.sqrt(26.0)
# 2D blur kernel, scaled by 1/(2 sqrt(70))
BLUR_KERNEL_2D = np.array(
    [
        [0, 0, 1, 0, 0],
        [0, 1, 2, 1, 0],
        [1, 2, 16, 2, 1],
        [0, 1, 2, 1, 0],
        [0, 0, 1, 0, 0],
    ],
    dtype=float,
) / (2.0 * math.sqrt(70.0))

CUSTOM_DENSE_MAX_N = 512


def _as_dims(n) -> tuple:
    if isinstance(n, (tuple, list)):
        dims = tuple(int(d) for d in n)
    else:
        dims = (int(n),)
    if len(dims) not in (1, 2) or any(d < 1 for d in dims):
        raise DimensionError(f"invalid dimensions {n!r}")
    return dims


@dataclass(frozen=True)
class OperatorSpec:
    """Declarative description of a forward operator.

    ``blur_sigma`` switches the blur kind from the fixed banded kernel to a
    normalized Gaussian kernel truncated at four standard deviations.
    ``matrix`` is only used by ``custom_dense``.
    """

    kind: str
    dims: tuple
    nu: float = 1.0
    mask_seed: int = 0
    blur_sigma: Optional[float] = None
    matrix: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ParameterError(f"unknown operator kind {self.kind!r}")
        object.__setattr__(self, "dims", _as_dims(self.dims))
        if not (0.0 < self.nu <= 1.0):
            raise ParameterError(f"sample rate nu must lie in (0, 1], got {self.nu}")
        if self.kind == "custom_dense":
            if self.matrix is None:
                raise ParameterError("custom_dense requires a matrix")
            if self.matrix.shape[1] > CUSTOM_DENSE_MAX_N:
                raise ParameterError(f"custom_dense is capped at n <= {CUSTOM_DENSE_MAX_N}")
        if self.blur_sigma is not None and self.blur_sigma <= 0:
            raise ParameterError("blur_sigma must be positive")

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    @property
    def m(self) -> int:
        if self.kind == "undersampled_dft":
            return _undersample_count(self.n, self.nu)
        if self.kind == "custom_dense":
            return self.matrix.shape[0]
        return self.n

    @property
    def unitary(self) -> bool:
        if self.kind == "dft":
            return True
        if self.kind == "undersampled_dft":
            return self.m == self.n
        if self.kind == "custom_dense":
            a = np.asarray(self.matrix)
            return a.shape[0] == a.shape[1] and np.allclose(a.conj().T @ a, np.eye(a.shape[1]), atol=1e-12)
        return False

    @property
    def bandwidth(self) -> Optional[int]:
        if self.kind != "blur":
            return None
        if self.blur_sigma is not None:
            return int(math.ceil(4 * self.blur_sigma))
        return 2

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if len(self.dims) == 1:
            d["n"] = self.dims[0]
        else:
            d["n1"], d["n2"] = self.dims
        if self.kind == "undersampled_dft":
            d["nu"] = self.nu
            d["mask_seed"] = self.mask_seed
        if self.blur_sigma is not None:
            d["blur_sigma"] = self.blur_sigma
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OperatorSpec":
        if "n1" in d or "n2" in d:
            dims = (int(d["n1"]), int(d["n2"]))
        else:
            dims = (int(d["n"]),)
        return cls(
            kind=d["kind"],
            dims=dims,
            nu=float(d.get("nu", 1.0)),
            mask_seed=int(d.get("mask_seed", 0)),
            blur_sigma=None if d.get("blur_sigma") is None else float(d["blur_sigma"]),
        )


def _undersample_count(n: int, nu: float) -> int:
    # guard against 0.8 * 10 = 8.000000000000002 style rounding
    return max(1, min(n, int(math.ceil(nu * n - 1e-9))))


def make_undersample_mask(n: int, nu: float, seed: int) -> np.ndarray:
    """Sorted indices of the retained Fourier rows.

    The zeroth frequency is always kept; the other ``m - 1`` rows are drawn
    uniformly without replacement from the remaining ``n - 1``.
    """
    if not (0.0 < nu <= 1.0):
        raise ParameterError(f"sample rate nu must lie in (0, 1], got {nu}")
    if n < 1:
        raise ParameterError("n must be >= 1")
    m = _undersample_count(n, nu)
    rng = np.random.default_rng(seed)
    others = rng.choice(np.arange(1, n), size=m - 1, replace=False)
    return np.sort(np.concatenate([[0], others])).astype(np.int64)


def dft_matrix(n: int) -> np.ndarray:
    """Dense unitary DFT matrix by direct summation (test oracle)."""
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n) / math.sqrt(n)


def gaussian_blur_kernel(sigma: float) -> np.ndarray:
    half = int(math.ceil(4 * sigma))
    d = np.arange(-half, half + 1)
    k = np.exp(-(d**2) / (2.0 * sigma**2))
    return k / k.sum()


def _shift_sum(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' convolution of ``x`` with an odd-sized kernel."""
    out = np.zeros(x.shape, dtype=np.result_type(x, kernel))
    centers = [s // 2 for s in kernel.shape]
    for idx in zip(*np.nonzero(kernel)):
        w = kernel[idx]
        src = []
        dst = []
        for ax, (i, c) in enumerate(zip(idx, centers)):
            d = i - c  # out[p] += w * x[p - d]
            size = x.shape[ax]
            if abs(d) >= size:
                break
            if d >= 0:
                dst.append(slice(d, size))
                src.append(slice(0, size - d))
            else:
                dst.append(slice(0, size + d))
                src.append(slice(-d, size))
        else:
            out[tuple(dst)] += w * x[tuple(src)]
    return out


class ForwardOperator:
    """Linear map from complex n-vectors to complex m-vectors.

    Instances are immutable after construction; ``apply`` and ``adjoint``
    are pure.
    """

    def __init__(self, spec: OperatorSpec):
        self.spec = spec
        self.dims = spec.dims
        self.n = spec.n
        self.m = spec.m
        self.unitary = spec.unitary
        self.bandwidth = spec.bandwidth
        self._mask = None
        self._kernel = None
        self._matrix = None
        if spec.kind == "undersampled_dft":
            self._mask = make_undersample_mask(self.n, spec.nu, spec.mask_seed)
        elif spec.kind == "blur":
            if spec.blur_sigma is not None:
                k1 = gaussian_blur_kernel(spec.blur_sigma)
                self._kernel = k1 if len(self.dims) == 1 else np.outer(k1, k1)
            else:
                self._kernel = BLUR_KERNEL_1D if len(self.dims) == 1 else BLUR_KERNEL_2D
        elif spec.kind == "custom_dense":
            self._matrix = np.array(spec.matrix, dtype=complex)
            self._matrix.setflags(write=False)

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def mask(self):
        return self._mask

    @property
    def kernel(self):
        return self._kernel

    def _check(self, v, size, what):
        v = np.asarray(v)
        if v.ndim != 1 or v.shape[0] != size:
            raise DimensionError(f"{what} expects a vector of length {size}, got shape {v.shape}")
        return v

    def _fft(self, x):
        if len(self.dims) == 1:
            return np.fft.fft(x, norm="ortho")
        return np.fft.fft2(x.reshape(self.dims), norm="ortho").ravel()

    def _ifft(self, y):
        if len(self.dims) == 1:
            return np.fft.ifft(y, norm="ortho")
        return np.fft.ifft2(y.reshape(self.dims), norm="ortho").ravel()

    def apply(self, x) -> np.ndarray:
        """Return ``F x``."""
        x = self._check(x, self.n, "apply")
        kind = self.spec.kind
        if kind == "dft":
            return self._fft(x)
        if kind == "undersampled_dft":
            return self._fft(x)[self._mask]
        if kind == "blur":
            return _shift_sum(x.reshape(self.dims), self._kernel).ravel().astype(complex)
        return self._matrix @ x

    def adjoint(self, y) -> np.ndarray:
        """Return ``F^H y``."""
        y = self._check(y, self.m, "adjoint")
        kind = self.spec.kind
        if kind == "dft":
            return self._ifft(y)
        if kind == "undersampled_dft":
            full = np.zeros(self.n, dtype=complex)
            full[self._mask] = y
            return self._ifft(full)
        if kind == "blur":
            flipped = self._kernel[(slice(None, None, -1),) * self._kernel.ndim]
            return _shift_sum(y.reshape(self.dims), flipped).ravel().astype(complex)
        return self._matrix.conj().T @ y

    def normal(self, x) -> np.ndarray:
        """Return ``F^H F x``."""
        if self.unitary:
            return np.asarray(x, dtype=complex)
        return self.adjoint(self.apply(x))

    def column_norms2(self) -> np.ndarray:
        """Squared Euclidean norms of the columns of ``F``."""
        kind = self.spec.kind
        if kind == "dft":
            return np.ones(self.n)
        if kind == "undersampled_dft":
            return np.full(self.n, self.m / self.n)
        if kind == "blur":
            return _shift_sum(np.ones(self.dims), self._kernel**2).ravel()
        return np.sum(np.abs(self._matrix) ** 2, axis=0)

    def to_dense(self) -> np.ndarray:
        if self._matrix is not None:
            return np.array(self._matrix)
        eye = np.eye(self.n, dtype=complex)
        return np.stack([self.apply(eye[:, j]) for j in range(self.n)], axis=1)

    def __repr__(self):
        return f"ForwardOperator({self.spec!r})"


def make_operator(spec_or_kind, dims=None, **kwargs) -> ForwardOperator:
    """Build an operator from an :class:`OperatorSpec` or from keyword form."""
    if isinstance(spec_or_kind, OperatorSpec):
        return ForwardOperator(spec_or_kind)
    return ForwardOperator(OperatorSpec(spec_or_kind, dims, **kwargs))


def dense_operator(matrix) -> ForwardOperator:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    return ForwardOperator(OperatorSpec("custom_dense", (matrix.shape[1],), matrix=matrix))


def split(v) -> np.ndarray:
    """Stack real and imaginary parts: ``[Re v; Im v]``."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag]).astype(float)


def merge(w) -> np.ndarray:
    """Inverse of :func:`split`."""
    w = np.asarray(w, dtype=float)
    half = w.shape[0] // 2
    return w[:half] + 1j * w[half:]


class SplitOperator:
    """Real-valued splitting of ``F D(d)`` for a fixed complex diagonal ``d``.

    With ``d = 1`` this is ``[Re F; Im F]``; with ``d = 1j`` it is
    ``[-Im F; Re F]``; with ``d = exp(i phi)`` it is the split of
    ``F D(exp(i phi))``. Maps real n-vectors to real 2m-vectors.
    """

    def __init__(self, op: ForwardOperator, diag=None):
        self.op = op
        self.n = op.n
        self.m = 2 * op.m
        self.diag = None if diag is None else np.asarray(diag, dtype=complex)
        if self.diag is not None and self.diag.shape != (op.n,):
            raise DimensionError("diagonal scaling must have length n")

    @classmethod
    def real_part(cls, op):
        return cls(op)

    @classmethod
    def imag_part(cls, op):
        return cls(op, np.full(op.n, 1j))

    @classmethod
    def with_phase(cls, op, phi):
        return cls(op, np.exp(1j * np.asarray(phi, dtype=float)))

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionError(f"split apply expects length {self.n}, got {x.shape}")
        z = x if self.diag is None else self.diag * x
        return split(self.op.apply(z))

    def adjoint(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.m,):
            raise DimensionError(f"split adjoint expects length {self.m}, got {w.shape}")
        v = self.op.adjoint(merge(w))
        if self.diag is not None:
            v = np.conj(self.diag) * v
        return v.real.copy()

    def column_norms2(self) -> np.ndarray:
        scale = 1.0 if self.diag is None else np.abs(self.diag) ** 2
        return self.op.column_norms2() * scale

    def normal(self, x) -> np.ndarray:
        """``F~^T F~ x``; a scaled identity only when ``F`` is unitary and ``|d| = 1``."""
        return self.adjoint(self.apply(x))


@dataclass(frozen=True)
class SparsifierSpec:
    kind: str
    dims: tuple

    def __post_init__(self):
        if self.kind not in SPARSIFIER_KINDS:
            raise ParameterError(f"unknown sparsifier kind {self.kind!r}")
        object.__setattr__(self, "dims", _as_dims(self.dims))
        if self.kind == "gradient_2d_stacked" and len(self.dims) != 2:
            raise DimensionError("gradient_2d_stacked needs 2D dims")
        if self.kind == "first_difference_1d" and len(self.dims) != 1:
            raise DimensionError("first_difference_1d needs 1D dims")

    @property
    def n(self) -> int:
        return int(np.prod(self.dims))

    @property
    def k(self) -> int:
        return 2 * self.n if self.kind == "gradient_2d_stacked" else self.n

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class Sparsifier:
    """Real linear map ``L`` with zero boundary conditions."""

    def __init__(self, spec: SparsifierSpec):
        self.spec = spec
        self.kind = spec.kind
        self.dims = spec.dims
        self.n = spec.n
        self.k = spec.k

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionError(f"sparsifier expects length {self.n}, got {x.shape}")
        if self.kind == "identity":
            return x.copy()
        if self.kind == "first_difference_1d":
            out = x.copy()
            out[1:] -= x[:-1]
            return out
        img = x.reshape(self.dims)
        vert = img.copy()
        vert[1:, :] -= img[:-1, :]
        horiz = img.copy()
        horiz[:, 1:] -= img[:, :-1]
        return np.concatenate([vert.ravel(), horiz.ravel()])

    def adjoint(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.k,):
            raise DimensionError(f"sparsifier adjoint expects length {self.k}, got {w.shape}")
        if self.kind == "identity":
            return w.copy()
        if self.kind == "first_difference_1d":
            out = w.copy()
            out[:-1] -= w[1:]
            return out
        vert = w[: self.n].reshape(self.dims)
        horiz = w[self.n :].reshape(self.dims)
        out = vert.copy()
        out[:-1, :] -= vert[1:, :]
        out += horiz
        out[:, :-1] -= horiz[:, 1:]
        return out.ravel()

    def gram_diag(self, weights) -> np.ndarray:
        """Diagonal of ``L^T D(weights) L``; entries of L are 0 or +-1."""
        w = np.asarray(weights, dtype=float)
        if self.kind == "identity":
            return w.copy()
        if self.kind == "first_difference_1d":
            out = w.copy()
            out[:-1] += w[1:]
            return out
        vert = w[: self.n].reshape(self.dims)
        horiz = w[self.n :].reshape(self.dims)
        out = vert + horiz
        out[:-1, :] += vert[1:, :]
        out[:, :-1] += horiz[:, 1:]
        return out.ravel()

    def to_dense(self) -> np.ndarray:
        eye = np.eye(self.n)
        return np.stack([self.apply(eye[:, j]) for j in range(self.n)], axis=1)


def make_sparsifier(kind, dims) -> Sparsifier:
    if isinstance(kind, SparsifierSpec):
        return Sparsifier(kind)
    return Sparsifier(SparsifierSpec(kind, dims))


def sparsify_apply(sp: Sparsifier, x) -> np.ndarray:
    return sp.apply(x)


def sparsify_adjoint(sp: Sparsifier, w) -> np.ndarray:
    return sp.adjoint(w)


def precision_apply(sp: Sparsifier, op: ForwardOperator, tau2, sigma2, v, phase=None, weight=2.0, shortcut=True):
    """Matrix-free ``Gamma v`` with ``Gamma = L^T D(tau2)^-1 L + (weight/sigma2) F1~^T F1~``.

    ``F1 = F D(exp(i phase))``; ``phase=None`` means no phase rotation.
    ``weight=2`` gives the complex-likelihood precision, ``weight=1`` the
    real-valued one. With ``shortcut`` and a unitary ``F`` the data term
    collapses to ``(weight/sigma2) v``.
    """
    tau2 = np.asarray(tau2, dtype=float)
    if tau2.shape != (sp.k,):
        raise DimensionError(f"tau2 must have length {sp.k}")
    if np.any(~(tau2 > 0)):
        raise ParameterError("tau2 must be strictly positive")
    if not sigma2 > 0:
        raise ParameterError("sigma2 must be positive")
    v = np.asarray(v, dtype=float)
    out = sp.adjoint(sp.apply(v) / tau2)
    if shortcut and op.unitary:
        out += (weight / sigma2) * v
    else:
        fs = SplitOperator(op) if phase is None else SplitOperator.with_phase(op, phase)
        out += (weight / sigma2) * fs.normal(v)
    return out
