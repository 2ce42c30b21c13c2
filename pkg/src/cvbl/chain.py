"""Gibbs configuration, chain states and chain output containers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParameterError
from .gsampler import CgConfig
from .randkit import GENERATOR_ALGORITHM, GENERATOR_VERSION

# Gibbs steps; each iteration l draws step s from substream (l, s)
STEP_SIGNAL = 0
STEP_SIGNAL_B = 1
STEP_TAU = 2
STEP_ETA = 3
STEP_PHASE = 4


@dataclass(frozen=True)
class GibbsConfig:
    """Settings shared by the three Gibbs samplers.

    ``eta_mode="fixed"`` pins ``eta^-2`` at ``eta_hat^-2`` for the whole
    chain. Retained samples are iterations ``burn_in .. n_iter`` inclusive,
    i.e. ``n_iter - burn_in + 1`` of them.
    """

    sigma2: float
    n_iter: int = 5000
    burn_in: int = 200
    r: float = 1.0
    delta: float = 1e-3
    zero_threshold: float = 1e-8
    eta_mode: str = "gamma_hyper"
    eta_hat: Optional[float] = None
    n_s: int = 10
    cg: CgConfig = CgConfig()
    keep_tau: bool = False
    phase_method: str = "auto"

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.r > 0 and self.delta > 0):
            raise ParameterError("sigma2, r and delta must be positive")
        if not (0 <= self.burn_in < self.n_iter):
            raise ParameterError(f"need 0 <= burn_in < n_iter, got B={self.burn_in}, N_M={self.n_iter}")
        if self.eta_mode not in ("gamma_hyper", "fixed"):
            raise ParameterError(f"unknown eta_mode {self.eta_mode!r}")
        if self.eta_mode == "fixed" and not (self.eta_hat is not None and self.eta_hat > 0):
            raise ParameterError("fixed eta mode needs a positive eta_hat")
        if self.n_s < 1:
            raise ParameterError("n_s must be >= 1")

    @property
    def fixed_eta_inv2(self) -> Optional[float]:
        if self.eta_mode == "fixed":
            return 1.0 / self.eta_hat**2
        return None

    @property
    def n_retained(self) -> int:
        return self.n_iter - self.burn_in + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cg"] = asdict(self.cg)
        return d


RvblConfig = GibbsConfig


@dataclass
class RvblState:
    x: np.ndarray
    tau2: np.ndarray
    eta_inv2: float


@dataclass
class CvblSparseState:
    a: np.ndarray
    b: np.ndarray
    tau2: np.ndarray
    eta_inv2: float


@dataclass
class CvblTransformState:
    g: np.ndarray
    phi: np.ndarray
    tau2: np.ndarray
    eta_inv2: float


def check_finite(state, iteration):
    for name, value in vars(state).items():
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"non-finite {name} at iteration {iteration}")


@dataclass
class ChainResult:
    """Retained samples of one chain plus per-iteration scalars.

    ``columns`` maps a column prefix to a ``(S, n)`` array (``x``;
    ``re_z``/``im_z``; or ``g``/``phi``). ``eta_trace`` covers every
    iteration, ``eta_inv2`` only the retained ones.
    """

    kind: str
    columns: dict
    eta_inv2: np.ndarray
    eta_trace: np.ndarray
    tau2_mean: np.ndarray
    state: object
    last_iteration: int
    config: GibbsConfig
    rng: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)
    tau2_samples: Optional[np.ndarray] = None
    runtime: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.eta_inv2.shape[0]

    @property
    def z(self) -> np.ndarray:
        if self.kind == "rvbl":
            return self.columns["x"]
        if self.kind == "cvbl_sparse":
            return self.columns["re_z"] + 1j * self.columns["im_z"]
        return self.columns["g"] * np.exp(1j * self.columns["phi"])

    @property
    def magnitude(self) -> np.ndarray:
        if self.kind == "cvbl_transform":
            return self.columns["g"]
        return np.abs(self.z)

    @property
    def phase(self) -> np.ndarray:
        if self.kind == "cvbl_transform":
            return self.columns["phi"]
        return np.angle(self.z)

    def header_names(self) -> list:
        names = []
        for prefix, arr in self.columns.items():
            names += [f"{prefix}_{j}" for j in range(arr.shape[1])]
        names.append("eta_inv2")
        names += list(self.counters)
        return names

    def table(self) -> np.ndarray:
        parts = [arr for arr in self.columns.values()]
        parts.append(self.eta_inv2[:, None])
        parts += [np.asarray(v, dtype=float)[:, None] for v in self.counters.values()]
        return np.hstack(parts)

    def to_csv(self, path, meta: Optional[dict] = None):
        """Write one row per retained sample plus a JSON sidecar.

        Header comment lines carry the generator, the retained-index
        convention and any extra ``meta`` entries (e.g. the config hash).
        Wall-clock time is left out so reruns write identical files.
        """
        path = Path(path)
        meta = dict(meta or {})
        meta.setdefault("generator", f"{GENERATOR_ALGORITHM} ({GENERATOR_VERSION})")
        meta.setdefault(
            "retained",
            f"iterations {self.config.burn_in}..{self.config.n_iter} inclusive "
            f"({self.n_samples} samples)",
        )
        with open(path, "w", newline="") as fh:
            for key, value in meta.items():
                fh.write(f"# {key}={value}\n")
            w = csv.writer(fh)
            w.writerow(self.header_names())
            for row in self.table():
                w.writerow([_fmt(v) for v in row])
        sidecar = {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "rng": self.rng,
            "n_samples": self.n_samples,
            "last_iteration": self.last_iteration,
            **meta,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, default=_json_default))
        return path


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return str(obj)


def read_chain_csv(path):
    """Read a chain CSV back as ``(meta, header, table)``."""
    meta = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        else:
            body.append(line)
    rows = list(csv.reader(body))
    header = rows[0]
    table = np.array([[float(v) for v in row] for row in rows[1:]])
    return meta, header, table


class ChainRecorder:
    """Collects retained samples while a sampler runs."""

    def __init__(self, cfg: GibbsConfig, prefixes, n, k, start):
        self.cfg = cfg
        self.start = start
        n_keep = max(0, cfg.n_iter - max(cfg.burn_in, start + 1) + 1)
        self.cols = {p: np.empty((n_keep, n)) for p in prefixes}
        self.eta = np.empty(n_keep)
        self.trace = np.empty(cfg.n_iter - start)
        self.tau_sum = np.zeros(k)
        self.tau = np.empty((n_keep, k)) if cfg.keep_tau else None
        self.counters = {}
        self.pos = 0

    def add_counter(self, name):
        self.counters[name] = np.zeros(self.eta.shape[0], dtype=np.int64)

    def record(self, iteration, values: dict, tau2, eta_inv2, counters=None):
        self.trace[iteration - self.start - 1] = eta_inv2
        if iteration < self.cfg.burn_in:
            return
        i = self.pos
        for p, v in values.items():
            self.cols[p][i] = v
        self.eta[i] = eta_inv2
        self.tau_sum += tau2
        if self.tau is not None:
            self.tau[i] = tau2
        for name, value in (counters or {}).items():
            self.counters[name][i] = value
        self.pos += 1

    def result(self, kind, state, rng, runtime) -> ChainResult:
        count = max(self.pos, 1)
        return ChainResult(
            kind=kind,
            columns=self.cols,
            eta_inv2=self.eta,
            eta_trace=self.trace,
            tau2_mean=self.tau_sum / count,
            state=state,
            last_iteration=self.cfg.n_iter,
            config=self.cfg,
            rng=rng,
            counters=self.counters,
            tau2_samples=self.tau,
            runtime=runtime,
        )
