"""Periodic skill discovery bindings.

Configs are passed as JSON text, matching the files the `psd` command line
tool reads; metrics come back as dicts and arrays as numpy arrays.
"""

from ._core import (
    ConfigError,
    DataError,
    InfeasiblePeriod,
    InsufficientData,
    NumericError,
    Trainer,
    autocorr_period,
    default_config,
    delta_from_distance,
    embed_period,
    optimal_chord,
    parseval_residual,
    psd_loss,
    r_ext,
    r_psd,
    regular_polygon,
    spectrum,
    theorem_oracle,
    train,
    update_bounds,
    validate_config,
    verify_gradcheck,
    verify_invariants,
    verify_theorem,
)

__all__ = [name for name in dir() if not name.startswith("_")]
