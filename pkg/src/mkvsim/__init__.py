"""Particle simulation of McKean-Vlasov SDEs with common noise and jumps.

Modules
-------
coefficients  model coefficients, constants and the assumption checker
measure       empirical measures and Wasserstein distances
noise         counter-keyed random streams, Brownian trees, jump fields
scheme        plain and tamed-adaptive Euler engines, Picard iteration
experiments   moment curves, chaos rate, strong order, model1_lq oracle
cli           ``mkvsim`` command-line entry point
"""

__version__ = "0.1.0"

from .coefficients import (  # noqa: E402
    BUILTIN_MODELS,
    CoefficientModel,
    ConfigError,
    LevyMeasureSpec,
    ModelConstants,
    builtin_model,
    default_params,
    validate_assumptions,
)
from .measure import EmpiricalMeasure, MeasureView, w2_1d_exact, w2_paired_bound, w2_small_exact  # noqa: E402
from .noise import NoisePlan, brownian_increment, sample_jumps  # noqa: E402
from .scheme import (  # noqa: E402
    ExplosionError,
    FrozenFlow,
    SimConfig,
    coupled_runs,
    picard_iterate,
    simulate_frozen,
    simulate_interacting,
)
from .experiments import (  # noqa: E402
    chaos_experiment,
    fit_loglog,
    model1_oracle,
    moment_curve,
    phi,
    strong_order_experiment,
)
