"""Experiment configuration: YAML parsing, defaults, validation and hashing."""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .linops import OPERATOR_KINDS, SPARSIFIER_KINDS
from .signals import SIGNAL_KINDS

SAMPLERS = ("rvbl", "cvbl_sparse", "cvbl_transform")
REQUIRED = object()

SCHEMA = {
    "signal": {
        "kind": REQUIRED,
        "n": None,
        "n1": None,
        "n2": None,
        "sparsity": 5,
        "signal_seed": 0,
    },
    "operator": {"kind": "dft", "nu": 1.0, "mask_seed": 0, "blur_sigma": None},
    "sparsifier": {"kind": None},
    "snr_db": 20.0,
    "sampler": "cvbl_transform",
    "chain": {
        "N_M": 5000,
        "B": 200,
        "n_s": 10,
        "zero_threshold": 1e-8,
        "cg_rel_tol": 1e-8,
        "cg_max_iters": None,
        "preconditioner": "none",
        "phase_method": "auto",
    },
    "hyper": {"r": 1.0, "delta": 1e-3, "eta_mode": "gamma_hyper", "eta_hat": None},
    "baselines": {"lasso": True, "alpha": [0.1, 1.0, 10.0], "rho": 1.0, "max_iters": 2000},
    "seeds": {"noise": 1, "chain": 2, "stream_id": 0},
    "analysis": {"beta": 0.9, "kde_pixels": None, "kde_random_pixels": 5, "kde_seed": 0, "kde_grid": 512},
    "sweep": None,
    "output_dir": "out",
}


@dataclass
class ExperimentConfig:
    """Validated configuration with every default filled in."""

    data: dict
    lines: dict = field(default_factory=dict)
    source: str = ""

    def __getitem__(self, key):
        return self.data[key]

    def get(self, dotted: str):
        node = self.data
        for part in dotted.split("."):
            node = node[part]
        return node

    @property
    def dims(self) -> tuple:
        s = self.data["signal"]
        return (s["n1"], s["n2"]) if s["n1"] is not None else (s["n"],)

    @property
    def sparsifier_kind(self) -> str:
        kind = self.data["sparsifier"]["kind"]
        if kind is not None:
            return kind
        if self.data["sampler"] == "cvbl_sparse":
            return "identity"
        return "gradient_2d_stacked" if len(self.dims) == 2 else "first_difference_1d"

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def cells(self) -> list:
        """Expand ``sweep`` (dotted key -> list of values) into one config per grid cell."""
        sweep = self.data.get("sweep") or {}
        if not sweep:
            return [self]
        keys = sorted(sweep)
        out = []
        for values in itertools.product(*(sweep[k] for k in keys)):
            data = copy.deepcopy(self.data)
            data["sweep"] = None
            for key, value in zip(keys, values):
                node = data
                parts = key.split(".")
                for part in parts[:-1]:
                    node = node[part]
                node[parts[-1]] = value
            cell = ExperimentConfig(data, self.lines, self.source)
            validate(cell)
            out.append(cell)
        return out


def _line(node) -> int:
    return node.start_mark.line + 1


def _to_python(node, path, lines):
    lines[path] = _line(node)
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = key_node.value
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", _line(key_node))
            out[key] = _to_python(value_node, f"{path}.{key}" if path else key, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def _merge(schema, given, path, lines):
    if not isinstance(given, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping", lines.get(path))
    out = {}
    for key, value in given.items():
        if key not in schema:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key {where!r}", lines.get(where))
    for key, default in schema.items():
        where = f"{path}.{key}" if path else key
        if isinstance(default, dict):
            out[key] = _merge(default, given.get(key, {}), where, lines)
        elif key in given:
            out[key] = given[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {where!r}", lines.get(path))
        else:
            out[key] = copy.deepcopy(default)
    return out


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark is not None else None
        raise ConfigError(f"YAML syntax error: {exc.problem}", line) from None
    if node is None:
        raise ConfigError("empty configuration")
    lines = {}
    raw = _to_python(node, "", lines)
    cfg = ExperimentConfig(_merge(SCHEMA, raw, "", lines), lines, source)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _fail(cfg, key, message):
    raise ConfigError(message, cfg.lines.get(key))


def _positive_int(cfg, key, allow_zero=False):
    value = cfg.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < (0 if allow_zero else 1):
        _fail(cfg, key, f"{key} must be a {'nonnegative' if allow_zero else 'positive'} integer")
    return value


def _number(cfg, key, positive=True):
    value = cfg.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or (positive and not value > 0):
        _fail(cfg, key, f"{key} must be a {'positive ' if positive else ''}number")
    return value


def validate(cfg: ExperimentConfig) -> None:
    """Check types and cross-field constraints; raises :class:`ConfigError` with a line number."""
    d = cfg.data
    sig = d["signal"]
    if sig["kind"] not in SIGNAL_KINDS:
        _fail(cfg, "signal.kind", f"signal.kind must be one of {', '.join(SIGNAL_KINDS)}")
    two_d = sig["kind"].endswith("_2d")
    if two_d:
        if sig["n1"] is None or sig["n2"] is None:
            _fail(cfg, "signal", "2D signals need signal.n1 and signal.n2")
        _positive_int(cfg, "signal.n1")
        _positive_int(cfg, "signal.n2")
        if sig["n"] is not None:
            _fail(cfg, "signal.n", "2D signals take n1/n2, not n")
    else:
        if sig["n"] is None:
            sig["n"] = 200 if sig["kind"] == "piecewise_1d" else 100
        _positive_int(cfg, "signal.n")
        if sig["n1"] is not None or sig["n2"] is not None:
            _fail(cfg, "signal", "1D signals take n, not n1/n2")
    _positive_int(cfg, "signal.sparsity")
    _positive_int(cfg, "signal.signal_seed", allow_zero=True)

    op = d["operator"]
    if op["kind"] not in OPERATOR_KINDS or op["kind"] == "custom_dense":
        _fail(cfg, "operator.kind", "operator.kind must be one of dft, blur, undersampled_dft")
    nu = _number(cfg, "operator.nu")
    if nu > 1:
        _fail(cfg, "operator.nu", "operator.nu must lie in (0, 1]")
    _positive_int(cfg, "operator.mask_seed", allow_zero=True)
    if op["blur_sigma"] is not None:
        _number(cfg, "operator.blur_sigma")
    if d["sparsifier"]["kind"] is not None and d["sparsifier"]["kind"] not in SPARSIFIER_KINDS:
        _fail(cfg, "sparsifier.kind", f"sparsifier.kind must be one of {', '.join(SPARSIFIER_KINDS)}")
    sp_two_d = cfg.sparsifier_kind == "gradient_2d_stacked"
    if cfg.sparsifier_kind != "identity" and sp_two_d != two_d:
        _fail(cfg, "sparsifier.kind", f"sparsifier {cfg.sparsifier_kind} does not match the signal dimension")

    _number(cfg, "snr_db", positive=False)
    if d["sampler"] not in SAMPLERS:
        _fail(cfg, "sampler", f"sampler must be one of {', '.join(SAMPLERS)}")
    if d["sampler"] == "rvbl" and op["kind"] != "blur":
        _fail(cfg, "sampler", "the real-valued sampler runs on real problems only; use operator.kind: blur")

    n_m = _positive_int(cfg, "chain.N_M")
    b = _positive_int(cfg, "chain.B", allow_zero=True)
    if b >= n_m:
        _fail(cfg, "chain.B", f"burn-in B={b} must be smaller than N_M={n_m}")
    _positive_int(cfg, "chain.n_s")
    _number(cfg, "chain.zero_threshold")
    _number(cfg, "chain.cg_rel_tol")
    if d["chain"]["cg_max_iters"] is not None:
        _positive_int(cfg, "chain.cg_max_iters")
    if d["chain"]["preconditioner"] not in ("none", "jacobi"):
        _fail(cfg, "chain.preconditioner", "chain.preconditioner must be none or jacobi")
    if d["chain"]["phase_method"] not in ("auto", "product", "blocked", "sequential"):
        _fail(cfg, "chain.phase_method", "unknown chain.phase_method")

    _number(cfg, "hyper.r")
    _number(cfg, "hyper.delta")
    if d["hyper"]["eta_mode"] not in ("gamma_hyper", "fixed"):
        _fail(cfg, "hyper.eta_mode", "hyper.eta_mode must be gamma_hyper or fixed")
    if d["hyper"]["eta_mode"] == "fixed":
        if d["hyper"]["eta_hat"] is None:
            _fail(cfg, "hyper", "fixed eta mode needs hyper.eta_hat")
        _number(cfg, "hyper.eta_hat")

    bl = d["baselines"]
    if not isinstance(bl["lasso"], bool):
        _fail(cfg, "baselines.lasso", "baselines.lasso must be true or false")
    if not isinstance(bl["alpha"], list) or not all(
        isinstance(a, (int, float)) and not isinstance(a, bool) and a >= 0 for a in bl["alpha"]
    ):
        _fail(cfg, "baselines.alpha", "baselines.alpha must be a list of nonnegative numbers")
    _number(cfg, "baselines.rho")
    _positive_int(cfg, "baselines.max_iters")

    for key in ("noise", "chain", "stream_id"):
        _positive_int(cfg, f"seeds.{key}", allow_zero=True)

    beta = _number(cfg, "analysis.beta")
    if beta >= 1:
        _fail(cfg, "analysis.beta", "analysis.beta must lie in (0, 1)")
    pixels = d["analysis"]["kde_pixels"]
    n = 1
    for dim in cfg.dims:
        n *= dim
    if pixels is not None and (
        not isinstance(pixels, list) or not all(isinstance(p, int) and 0 <= p < n for p in pixels)
    ):
        _fail(cfg, "analysis.kde_pixels", f"analysis.kde_pixels must list pixel indices in 0..{n - 1}")
    _positive_int(cfg, "analysis.kde_random_pixels", allow_zero=True)
    _positive_int(cfg, "analysis.kde_seed", allow_zero=True)
    _positive_int(cfg, "analysis.kde_grid")

    sweep = d["sweep"]
    if sweep is not None:
        if not isinstance(sweep, dict) or not all(isinstance(v, list) and v for v in sweep.values()):
            _fail(cfg, "sweep", "sweep must map dotted keys to non-empty lists")
        for key in sweep:
            try:
                cfg.get(key)
            except (KeyError, TypeError):
                _fail(cfg, f"sweep.{key}", f"sweep key {key!r} does not name a config field")
    if not isinstance(d["output_dir"], str) or not d["output_dir"]:
        _fail(cfg, "output_dir", "output_dir must be a non-empty path")
