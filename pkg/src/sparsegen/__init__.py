"""Compressed sensing with generative priors and sparse deviations.

Signals are modelled as ``x = G(z) + nu`` with ``G`` a feed-forward generator
and ``nu`` sparse (optionally in an orthonormal basis).  The package provides
LASSO, generator-only and Sparse-Gen recovery, a small VAE to train ``G``,
empirical checks of the matrix conditions behind the recovery guarantees, and
an experiment harness with a command-line interface.
"""

from .basis import OrthonormalBasis, dct_basis, haar_basis, make_basis
from .core import SeededRng, clip_to_box, derive_seed, make_rng, norm, soft_threshold
from .errors import (BadMagicError, FormatError, InfeasibleError, NumericalError, ScaleLimitError,
                     ShapeMismatchError, TruncatedFileError)
from .genmodel import (GeneratorNetwork, affine_generator, forward, lipschitz_upper, load_weights,
                       random_relu_generator, save_weights, vjp, zero_generator)
from .recover import RecoveryResult, SolverConfig, gen_recover, lasso, oracle_decode, sparse_gen
from .sensing import SensingEnsemble, gaussian_ensemble, sense, sufficient_measurements

__version__ = "0.1.0"

__all__ = [
    "OrthonormalBasis", "dct_basis", "haar_basis", "make_basis",
    "SeededRng", "clip_to_box", "derive_seed", "make_rng", "norm", "soft_threshold",
    "BadMagicError", "FormatError", "InfeasibleError", "NumericalError", "ScaleLimitError",
    "ShapeMismatchError", "TruncatedFileError",
    "GeneratorNetwork", "affine_generator", "forward", "lipschitz_upper", "load_weights",
    "random_relu_generator", "save_weights", "vjp", "zero_generator",
    "RecoveryResult", "SolverConfig", "gen_recover", "lasso", "oracle_decode", "sparse_gen",
    "SensingEnsemble", "gaussian_ensemble", "sense", "sufficient_measurements",
]
