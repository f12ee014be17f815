"""Bayesian stochastic volatility models sampled with NUTS."""

from ._svhmc import (
    InputError,
    __version__,
    describe,
    fit,
    gpd_fit,
    log_density,
    psis_loo,
    returns_from_prices,
    simulate,
    waic,
)

__all__ = [
    "InputError",
    "__version__",
    "describe",
    "fit",
    "gpd_fit",
    "log_density",
    "psis_loo",
    "returns_from_prices",
    "simulate",
    "waic",
]
