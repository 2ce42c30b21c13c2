"""Bayesian LASSO Gibbs samplers for real and complex-valued signals."""

__version__ = "0.1.0"

from .chain import ChainResult, GibbsConfig, RvblConfig
from .cvbl_sparse import cvbl_sparse_run
from .cvbl_transform import cvbl_transform_run
from .errors import ConfigError, ConvergenceError, DimensionError, ParameterError, TruncationError
from .linops import OperatorSpec, SparsifierSpec, make_operator, make_sparsifier
from .randkit import RngStream
from .rvbl import rvbl_run

__all__ = [
    "ChainResult",
    "ConfigError",
    "ConvergenceError",
    "DimensionError",
    "GibbsConfig",
    "OperatorSpec",
    "ParameterError",
    "RngStream",
    "RvblConfig",
    "SparsifierSpec",
    "TruncationError",
    "cvbl_sparse_run",
    "cvbl_transform_run",
    "make_operator",
    "make_sparsifier",
    "rvbl_run",
]
