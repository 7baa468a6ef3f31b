"""Contact process with switching: simulation, couplings, duality and bounds."""

from .core import (
    INSTANT,
    Configuration,
    EffectiveRates,
    LatticeSpec,
    RateError,
    RateSet,
    SiteState,
    alpha,
    dominated_cp_rates,
    dominating_cp_rates,
    effective_fast_rates,
    effective_rates,
    lambda_bar,
    param_dominates,
    preset,
)

__version__ = "0.1.0"
