from ._core import (
    Fit,
    ValidationError,
    __version__,
    exposure_importance,
    fit,
    joint_indicator_pmf,
    lag_profile,
    run_cli,
    silverman_bandwidth,
    simulate,
    stick_weights,
)

__all__ = [
    "Fit",
    "ValidationError",
    "__version__",
    "exposure_importance",
    "fit",
    "joint_indicator_pmf",
    "lag_profile",
    "run_cli",
    "silverman_bandwidth",
    "simulate",
    "stick_weights",
]
