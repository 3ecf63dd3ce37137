"""Bayesian complementary kernelized tensor completion.

Tensors are numpy arrays of shape (M, T, P): locations, time points, variables.
Missing entries are NaN.
"""

import json as _json

from ._bckl import (
    BcklError,
    ConfigError,
    DataError,
    DimensionError,
    FactorizationError,
    ParameterError,
    SchemaError,
    SolverError,
    __version__,
    apply_missing,
    crps_gaussian,
    generate_synthetic,
    kernel,
    read_tensor,
    score,
    synthetic_field,
    taper,
    write_tensor,
)
from ._bckl import fit as _fit


def fit(data, config=None, *, space_precomputed=None, time_precomputed=None, progress=None):
    """Run the sampler on ``data``.

    ``config`` takes the keys of a run configuration file (rank, local_components,
    burn_in, samples, seed, taper, k3_mode, hyperpriors, pcg, ...) except the file
    settings. Returns a dict with mean/std/lower/upper arrays and the sweep trace.
    """
    text = _json.dumps(config or {})
    return _fit(data, text, space_precomputed, time_precomputed, progress)


__all__ = [
    "BcklError",
    "ConfigError",
    "DataError",
    "DimensionError",
    "FactorizationError",
    "ParameterError",
    "SchemaError",
    "SolverError",
    "__version__",
    "apply_missing",
    "crps_gaussian",
    "fit",
    "generate_synthetic",
    "kernel",
    "read_tensor",
    "score",
    "synthetic_field",
    "taper",
    "write_tensor",
]
