"""DeepONet toolkit for post-fault power-grid trajectories."""

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    Error,
    Model,
    SimulationDiverged,
    __version__,
    admissible_trips,
    chi_reference,
    default_config,
    epsilon_ratio,
    inverse_normal_cdf,
    residual_normality,
    simulate,
    z_value,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "Error",
    "Model",
    "SimulationDiverged",
    "__version__",
    "admissible_trips",
    "chi_reference",
    "default_config",
    "epsilon_ratio",
    "inverse_normal_cdf",
    "residual_normality",
    "simulate",
    "z_value",
]
